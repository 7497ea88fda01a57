#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pforge {

struct ReportSections {
    std::optional<std::string> findings;
    std::optional<std::string> impression;
    std::optional<std::string> indication;
    std::optional<std::string> history;
    std::optional<std::string> comparison;
};

// Newlines/tabs to spaces, whitespace runs collapsed, trimmed. Idempotent.
inline std::string normalize_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
            if (!out.empty()) pending_space = true;
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out += c;
        }
    }
    return out;
}

enum class SectionId { findings, impression, indication, history, comparison };

// The upstream extraction tool's exact header variants are unpublished, so
// the synonym table is data. Add rows as real reports demand.
struct SectionRules {
    std::vector<std::pair<std::string, SectionId>> headers;

    static SectionRules defaults() {
        return {{
            {"FINDINGS:", SectionId::findings},
            {"IMPRESSION:", SectionId::impression},
            {"INDICATION:", SectionId::indication},
            {"CLINICAL HISTORY:", SectionId::history},
            {"HISTORY:", SectionId::history},
            {"COMPARISONS:", SectionId::comparison},
            {"COMPARISON:", SectionId::comparison},
        }};
    }
};

namespace detail {

inline bool istarts_with(std::string_view text, std::string_view prefix) {
    if (text.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::toupper(static_cast<unsigned char>(text[i])) !=
            std::toupper(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

} // namespace detail

// Headers are recognized case-insensitively at line starts (leading blanks
// allowed); a body runs until the next recognized header or end of text.
// Text before the first header is discarded.
inline ReportSections extract_sections(std::string_view raw,
                                       const SectionRules& rules = SectionRules::defaults()) {
    ReportSections out;
    std::optional<SectionId> current;
    std::string body;

    auto flush = [&] {
        if (!current) return;
        std::string text = normalize_text(body);
        if (!text.empty()) {
            switch (*current) {
                case SectionId::findings: out.findings = text; break;
                case SectionId::impression: out.impression = text; break;
                case SectionId::indication: out.indication = text; break;
                case SectionId::history: out.history = text; break;
                case SectionId::comparison: out.comparison = text; break;
            }
        }
        body.clear();
    };

    std::size_t pos = 0;
    while (pos <= raw.size()) {
        std::size_t eol = raw.find('\n', pos);
        std::string_view line = raw.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                              : eol - pos);
        std::size_t lead = 0;
        while (lead < line.size() &&
               std::isspace(static_cast<unsigned char>(line[lead])))
            ++lead;
        std::string_view stripped = line.substr(lead);

        bool matched = false;
        for (const auto& [token, id] : rules.headers) {
            if (detail::istarts_with(stripped, token)) {
                flush();
                current = id;
                body.assign(stripped.substr(token.size()));
                body += '\n';
                matched = true;
                break;
            }
        }
        if (!matched && current) {
            body.append(line);
            body += '\n';
        }

        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    flush();
    return out;
}

} // namespace pforge
