#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pforge {

// RFC 4180 records: quoted fields may contain commas, doubled quotes and
// newlines. Records end at CRLF or LF outside quotes.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable parse_csv(std::string_view text) {
    CsvTable out;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    bool record_started = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (out.header.empty()) {
            out.header = std::move(record);
        } else {
            out.rows.push_back(std::move(record));
        }
        record.clear();
        record_started = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !field.empty())
                    throw std::runtime_error("csv: quote inside unquoted field");
                in_quotes = true;
                field_started = true;
                record_started = true;
                break;
            case ',':
                end_field();
                record_started = true;
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
                if (record_started || field_started || !record.empty()) end_record();
                break;
            case '\n':
                // blank lines are skipped rather than parsed as empty records
                if (record_started || field_started || !record.empty()) end_record();
                break;
            default:
                field += c;
                field_started = true;
                record_started = true;
                break;
        }
    }
    if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
    if (record_started || field_started || !record.empty()) end_record();
    return out;
}

inline std::string csv_quote(std::string_view field) {
    std::string out;
    out.reserve(field.size() + 2);
    out += '"';
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// Every field quoted on output; parse accepts both forms.
inline std::string write_csv_record(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += csv_quote(fields[i]);
    }
    line += '\n';
    return line;
}

} // namespace pforge
