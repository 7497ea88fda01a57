#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptforge/common.hpp"
#include "promptforge/csv.hpp"
#include "promptforge/nn.hpp"
#include "promptforge/timestamps.hpp"

namespace pforge {

enum class TableId { ed_stay, triage, vitalsign, medrecon, pyxis, metadata };

inline constexpr TableId kAllTables[] = {TableId::ed_stay,  TableId::triage,
                                         TableId::vitalsign, TableId::medrecon,
                                         TableId::pyxis,     TableId::metadata};

inline const char* table_name(TableId t) {
    switch (t) {
        case TableId::ed_stay: return "ed_stay";
        case TableId::triage: return "triage";
        case TableId::vitalsign: return "vitalsign";
        case TableId::medrecon: return "medrecon";
        case TableId::pyxis: return "pyxis";
        case TableId::metadata: return "metadata";
    }
    return "?";
}

// `key` marks join identifiers; they are structural, not embedded.
enum class ColumnKind { key, value, category, text, time, ignored };

struct ColumnSpec {
    std::string name;
    ColumnKind kind;
};

struct TableSpec {
    TableId table;
    std::vector<ColumnSpec> columns; // declaration order defines value-column index order

    const ColumnSpec* find(std::string_view name) const {
        for (const auto& c : columns)
            if (c.name == name) return &c;
        return nullptr;
    }

    std::vector<std::string> names_of(ColumnKind kind) const {
        std::vector<std::string> out;
        for (const auto& c : columns)
            if (c.kind == kind) out.push_back(c.name);
        return out;
    }
};

// Built-in designations for the six tables.
inline const TableSpec& builtin_table_spec(TableId t) {
    static const TableSpec ed_stay{TableId::ed_stay,
                                   {{"subject_id", ColumnKind::key},
                                    {"stay_id", ColumnKind::key},
                                    {"intime", ColumnKind::time},
                                    {"outtime", ColumnKind::time},
                                    {"gender", ColumnKind::category},
                                    {"race", ColumnKind::category},
                                    {"arrival_transport", ColumnKind::category},
                                    {"disposition", ColumnKind::ignored}}};
    static const TableSpec triage{TableId::triage,
                                  {{"stay_id", ColumnKind::key},
                                   {"temperature", ColumnKind::value},
                                   {"heartrate", ColumnKind::value},
                                   {"resprate", ColumnKind::value},
                                   {"o2sat", ColumnKind::value},
                                   {"sbp", ColumnKind::value},
                                   {"dbp", ColumnKind::value},
                                   {"acuity", ColumnKind::value},
                                   {"pain", ColumnKind::text},
                                   {"chiefcomplaint", ColumnKind::text}}};
    static const TableSpec vitalsign{TableId::vitalsign,
                                     {{"stay_id", ColumnKind::key},
                                      {"charttime", ColumnKind::time},
                                      {"temperature", ColumnKind::value},
                                      {"heartrate", ColumnKind::value},
                                      {"resprate", ColumnKind::value},
                                      {"o2sat", ColumnKind::value},
                                      {"sbp", ColumnKind::value},
                                      {"dbp", ColumnKind::value},
                                      {"rhythm", ColumnKind::category},
                                      {"pain", ColumnKind::text}}};
    static const TableSpec medrecon{TableId::medrecon,
                                    {{"stay_id", ColumnKind::key},
                                     {"name", ColumnKind::text},
                                     {"gsn", ColumnKind::category},
                                     {"ndc", ColumnKind::category},
                                     {"etc_rn", ColumnKind::category},
                                     {"etccode", ColumnKind::category},
                                     {"etcdescription", ColumnKind::ignored}}};
    static const TableSpec pyxis{TableId::pyxis,
                                 {{"stay_id", ColumnKind::key},
                                  {"charttime", ColumnKind::time},
                                  {"med_rn", ColumnKind::category},
                                  {"name", ColumnKind::category},
                                  {"gsn_rn", ColumnKind::category},
                                  {"gsn", ColumnKind::category}}};
    static const TableSpec metadata{TableId::metadata,
                                    {{"study_id", ColumnKind::key},
                                     {"subject_id", ColumnKind::key},
                                     {"study_date", ColumnKind::time},
                                     {"study_time", ColumnKind::time},
                                     {"performed_procedure_step_description", ColumnKind::category},
                                     {"view_position", ColumnKind::category},
                                     {"procedure_code_meaning", ColumnKind::category},
                                     {"view_code_meaning", ColumnKind::category},
                                     {"patient_orientation_code_meaning", ColumnKind::category}}};
    switch (t) {
        case TableId::ed_stay: return ed_stay;
        case TableId::triage: return triage;
        case TableId::vitalsign: return vitalsign;
        case TableId::medrecon: return medrecon;
        case TableId::pyxis: return pyxis;
        case TableId::metadata: return metadata;
    }
    throw std::logic_error("builtin_table_spec: bad table id");
}

// --- record types -----------------------------------------------------------

struct EdStay {
    std::int64_t subject_id = 0;
    std::int64_t stay_id = 0;
    Minutes intime = 0;
    Minutes outtime = 0;
    std::string gender;
    std::string race;
    std::string arrival_transport;
};

struct TriageRow {
    std::int64_t stay_id = 0;
    std::optional<double> temperature, heartrate, resprate, o2sat, sbp, dbp, acuity;
    std::string pain;
    std::string chiefcomplaint;
};

struct VitalSignRow {
    std::int64_t stay_id = 0;
    Minutes charttime = 0;
    std::optional<double> temperature, heartrate, resprate, o2sat, sbp, dbp;
    std::string rhythm;
    std::string pain;
};

struct MedRecRow {
    std::int64_t stay_id = 0;
    std::string name;
    std::string gsn, ndc, etc_rn, etccode;
};

struct PyxisRow {
    std::int64_t stay_id = 0;
    Minutes charttime = 0;
    std::string med_rn, name, gsn_rn, gsn;
};

struct MetadataRow {
    std::int64_t study_id = 0;
    std::int64_t subject_id = 0;
    Minutes study_date = 0;      // midnight of StudyDate
    int study_time = 0;          // minutes of day
    std::string performed_procedure_step_description;
    std::string view_position;
    std::string procedure_code_meaning;
    std::string view_code_meaning;
    std::string patient_orientation_code_meaning;

    Minutes exam_time() const { return study_date + study_time; }
};

struct RawReport {
    std::int64_t study_id = 0;
    std::string text;
};

// One exam with its precomputed image features (feature_dim x token_count
// each) and report. Assembled from metadata + reports + image_features.
struct ExamRecord {
    std::int64_t study_id = 0;
    std::int64_t subject_id = 0;
    Minutes exam_time = 0;
    std::vector<Tensor2D> image_features;
    RawReport report;
};

struct Dataset {
    std::vector<EdStay> stays;
    std::vector<TriageRow> triage;
    std::vector<VitalSignRow> vitalsign;
    std::vector<MedRecRow> medrecon;
    std::vector<PyxisRow> pyxis;
    std::vector<MetadataRow> metadata;
    std::vector<RawReport> reports;
    std::map<std::int64_t, std::vector<Tensor2D>> image_features; // by study_id
};

// --- loading ----------------------------------------------------------------

struct LoadIssue {
    std::string file;
    std::size_t record = 0; // 1-based data record index
    std::string message;
};

struct LoadReport {
    std::size_t numeric_coercions = 0; // unparseable numerics turned into missing
    std::vector<LoadIssue> rejected_rows;
    std::vector<std::string> warnings;

    bool clean() const { return rejected_rows.empty() && warnings.empty() && numeric_coercions == 0; }
};

namespace detail {

struct RowCursor {
    const std::vector<std::string>* header;
    const std::vector<std::string>* fields;
    std::map<std::string, std::size_t>* index;

    const std::string* get(const std::string& name) const {
        auto it = index->find(name);
        if (it == index->end() || it->second >= fields->size()) return nullptr;
        return &(*fields)[it->second];
    }
};

class TableReader {
public:
    TableReader(const std::filesystem::path& path, const TableSpec& spec, LoadReport& report)
        : file_(path.filename().string()), report_(report) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("missing input file: " + path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        table_ = parse_csv(buf.str());
        for (std::size_t i = 0; i < table_.header.size(); ++i) {
            const std::string& name = table_.header[i];
            if (!spec.find(name))
                report_.warnings.push_back(file_ + ": unknown column '" + name + "' ignored");
            index_[name] = i;
        }
    }

    std::size_t row_count() const { return table_.rows.size(); }

    RowCursor row(std::size_t i) {
        return RowCursor{&table_.header, &table_.rows[i], &index_};
    }

    void reject(std::size_t i, const std::string& message) {
        report_.rejected_rows.push_back({file_, i + 1, message});
    }

    std::string text(const RowCursor& c, const std::string& name) {
        const std::string* v = c.get(name);
        return v ? *v : std::string{};
    }

    std::optional<double> number(const RowCursor& c, const std::string& name) {
        const std::string* v = c.get(name);
        if (!v || v->empty()) return std::nullopt;
        auto parsed = parse_double(*v);
        if (!parsed) ++report_.numeric_coercions;
        return parsed;
    }

    std::optional<std::int64_t> id(const RowCursor& c, const std::string& name) {
        const std::string* v = c.get(name);
        if (!v) return std::nullopt;
        return parse_int(*v);
    }

    std::optional<Minutes> timestamp(const RowCursor& c, const std::string& name) {
        const std::string* v = c.get(name);
        if (!v) return std::nullopt;
        return parse_timestamp(*v);
    }

private:
    std::string file_;
    LoadReport& report_;
    CsvTable table_;
    std::map<std::string, std::size_t> index_;
};

} // namespace detail

inline std::pair<Dataset, LoadReport> load_tables(const std::filesystem::path& dir) {
    Dataset ds;
    LoadReport report;

    {
        detail::TableReader r(dir / "edstays.csv", builtin_table_spec(TableId::ed_stay), report);
        for (std::size_t i = 0; i < r.row_count(); ++i) {
            auto c = r.row(i);
            auto subject = r.id(c, "subject_id");
            auto stay = r.id(c, "stay_id");
            auto intime = r.timestamp(c, "intime");
            auto outtime = r.timestamp(c, "outtime");
            if (!subject || !stay) { r.reject(i, "bad key"); continue; }
            if (!intime || !outtime) { r.reject(i, "malformed timestamp"); continue; }
            ds.stays.push_back({*subject, *stay, *intime, *outtime, r.text(c, "gender"),
                                r.text(c, "race"), r.text(c, "arrival_transport")});
        }
    }
    {
        detail::TableReader r(dir / "triage.csv", builtin_table_spec(TableId::triage), report);
        for (std::size_t i = 0; i < r.row_count(); ++i) {
            auto c = r.row(i);
            auto stay = r.id(c, "stay_id");
            if (!stay) { r.reject(i, "bad key"); continue; }
            TriageRow row;
            row.stay_id = *stay;
            row.temperature = r.number(c, "temperature");
            row.heartrate = r.number(c, "heartrate");
            row.resprate = r.number(c, "resprate");
            row.o2sat = r.number(c, "o2sat");
            row.sbp = r.number(c, "sbp");
            row.dbp = r.number(c, "dbp");
            row.acuity = r.number(c, "acuity");
            row.pain = r.text(c, "pain");
            row.chiefcomplaint = r.text(c, "chiefcomplaint");
            ds.triage.push_back(std::move(row));
        }
    }
    {
        detail::TableReader r(dir / "vitalsign.csv", builtin_table_spec(TableId::vitalsign), report);
        for (std::size_t i = 0; i < r.row_count(); ++i) {
            auto c = r.row(i);
            auto stay = r.id(c, "stay_id");
            auto charttime = r.timestamp(c, "charttime");
            if (!stay) { r.reject(i, "bad key"); continue; }
            if (!charttime) { r.reject(i, "malformed timestamp"); continue; }
            VitalSignRow row;
            row.stay_id = *stay;
            row.charttime = *charttime;
            row.temperature = r.number(c, "temperature");
            row.heartrate = r.number(c, "heartrate");
            row.resprate = r.number(c, "resprate");
            row.o2sat = r.number(c, "o2sat");
            row.sbp = r.number(c, "sbp");
            row.dbp = r.number(c, "dbp");
            row.rhythm = r.text(c, "rhythm");
            row.pain = r.text(c, "pain");
            ds.vitalsign.push_back(std::move(row));
        }
    }
    {
        detail::TableReader r(dir / "medrecon.csv", builtin_table_spec(TableId::medrecon), report);
        for (std::size_t i = 0; i < r.row_count(); ++i) {
            auto c = r.row(i);
            auto stay = r.id(c, "stay_id");
            if (!stay) { r.reject(i, "bad key"); continue; }
            ds.medrecon.push_back({*stay, r.text(c, "name"), r.text(c, "gsn"), r.text(c, "ndc"),
                                   r.text(c, "etc_rn"), r.text(c, "etccode")});
        }
    }
    {
        detail::TableReader r(dir / "pyxis.csv", builtin_table_spec(TableId::pyxis), report);
        for (std::size_t i = 0; i < r.row_count(); ++i) {
            auto c = r.row(i);
            auto stay = r.id(c, "stay_id");
            auto charttime = r.timestamp(c, "charttime");
            if (!stay) { r.reject(i, "bad key"); continue; }
            if (!charttime) { r.reject(i, "malformed timestamp"); continue; }
            ds.pyxis.push_back({*stay, *charttime, r.text(c, "med_rn"), r.text(c, "name"),
                                r.text(c, "gsn_rn"), r.text(c, "gsn")});
        }
    }
    {
        detail::TableReader r(dir / "metadata.csv", builtin_table_spec(TableId::metadata), report);
        for (std::size_t i = 0; i < r.row_count(); ++i) {
            auto c = r.row(i);
            auto study = r.id(c, "study_id");
            auto subject = r.id(c, "subject_id");
            if (!study || !subject) { r.reject(i, "bad key"); continue; }
            auto date = parse_date(r.text(c, "study_date"));
            auto tod = parse_time_of_day(r.text(c, "study_time"));
            if (!date || !tod) { r.reject(i, "malformed timestamp"); continue; }
            MetadataRow row;
            row.study_id = *study;
            row.subject_id = *subject;
            row.study_date = *date;
            row.study_time = *tod;
            row.performed_procedure_step_description = r.text(c, "performed_procedure_step_description");
            row.view_position = r.text(c, "view_position");
            row.procedure_code_meaning = r.text(c, "procedure_code_meaning");
            row.view_code_meaning = r.text(c, "view_code_meaning");
            row.patient_orientation_code_meaning = r.text(c, "patient_orientation_code_meaning");
            ds.metadata.push_back(std::move(row));
        }
    }
    {
        std::filesystem::path path = dir / "reports.csv";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("missing input file: " + path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        CsvTable t = parse_csv(buf.str());
        std::size_t id_col = std::string::npos, text_col = std::string::npos;
        for (std::size_t i = 0; i < t.header.size(); ++i) {
            if (t.header[i] == "study_id") id_col = i;
            else if (t.header[i] == "text") text_col = i;
            else report.warnings.push_back("reports.csv: unknown column '" + t.header[i] + "' ignored");
        }
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const auto& row = t.rows[i];
            auto study = (id_col < row.size()) ? parse_int(row[id_col]) : std::nullopt;
            if (!study) { report.rejected_rows.push_back({"reports.csv", i + 1, "bad key"}); continue; }
            std::string text = (text_col < row.size()) ? row[text_col] : std::string{};
            if (text.empty()) { report.rejected_rows.push_back({"reports.csv", i + 1, "empty report text"}); continue; }
            ds.reports.push_back({*study, std::move(text)});
        }
    }
    {
        std::filesystem::path path = dir / "image_features.jsonl";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("missing input file: " + path.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("study_id") || !j.contains("features")) {
                report.rejected_rows.push_back({"image_features.jsonl", lineno, "malformed line"});
                continue;
            }
            std::vector<Tensor2D> mats;
            for (const auto& f : j["features"]) {
                Tensor2D m(f.at("rows").get<std::size_t>(), f.at("cols").get<std::size_t>());
                auto data = f.at("data").get<std::vector<double>>();
                if (data.size() != m.data.size()) {
                    report.rejected_rows.push_back({"image_features.jsonl", lineno, "bad matrix size"});
                    mats.clear();
                    break;
                }
                m.data = std::move(data);
                mats.push_back(std::move(m));
            }
            if (!mats.empty()) ds.image_features[j["study_id"].get<std::int64_t>()] = std::move(mats);
        }
    }
    return {std::move(ds), std::move(report)};
}

// --- writing ----------------------------------------------------------------

namespace detail {

inline std::string opt_num(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string{};
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

} // namespace detail

inline void write_tables(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::string s = write_csv_record({"subject_id", "stay_id", "intime", "outtime", "gender",
                                      "race", "arrival_transport", "disposition"});
    for (const auto& r : ds.stays)
        s += write_csv_record({std::to_string(r.subject_id), std::to_string(r.stay_id),
                               format_timestamp(r.intime), format_timestamp(r.outtime), r.gender,
                               r.race, r.arrival_transport, ""});
    detail::write_file(dir / "edstays.csv", s);

    s = write_csv_record({"stay_id", "temperature", "heartrate", "resprate", "o2sat", "sbp", "dbp",
                          "acuity", "pain", "chiefcomplaint"});
    for (const auto& r : ds.triage)
        s += write_csv_record({std::to_string(r.stay_id), detail::opt_num(r.temperature),
                               detail::opt_num(r.heartrate), detail::opt_num(r.resprate),
                               detail::opt_num(r.o2sat), detail::opt_num(r.sbp),
                               detail::opt_num(r.dbp), detail::opt_num(r.acuity), r.pain,
                               r.chiefcomplaint});
    detail::write_file(dir / "triage.csv", s);

    s = write_csv_record({"stay_id", "charttime", "temperature", "heartrate", "resprate", "o2sat",
                          "sbp", "dbp", "rhythm", "pain"});
    for (const auto& r : ds.vitalsign)
        s += write_csv_record({std::to_string(r.stay_id), format_timestamp(r.charttime),
                               detail::opt_num(r.temperature), detail::opt_num(r.heartrate),
                               detail::opt_num(r.resprate), detail::opt_num(r.o2sat),
                               detail::opt_num(r.sbp), detail::opt_num(r.dbp), r.rhythm, r.pain});
    detail::write_file(dir / "vitalsign.csv", s);

    s = write_csv_record({"stay_id", "name", "gsn", "ndc", "etc_rn", "etccode", "etcdescription"});
    for (const auto& r : ds.medrecon)
        s += write_csv_record({std::to_string(r.stay_id), r.name, r.gsn, r.ndc, r.etc_rn,
                               r.etccode, ""});
    detail::write_file(dir / "medrecon.csv", s);

    s = write_csv_record({"stay_id", "charttime", "med_rn", "name", "gsn_rn", "gsn"});
    for (const auto& r : ds.pyxis)
        s += write_csv_record({std::to_string(r.stay_id), format_timestamp(r.charttime), r.med_rn,
                               r.name, r.gsn_rn, r.gsn});
    detail::write_file(dir / "pyxis.csv", s);

    s = write_csv_record({"study_id", "subject_id", "study_date", "study_time",
                          "performed_procedure_step_description", "view_position",
                          "procedure_code_meaning", "view_code_meaning",
                          "patient_orientation_code_meaning"});
    for (const auto& r : ds.metadata)
        s += write_csv_record({std::to_string(r.study_id), std::to_string(r.subject_id),
                               format_date(r.study_date), format_time_of_day(r.study_time),
                               r.performed_procedure_step_description, r.view_position,
                               r.procedure_code_meaning, r.view_code_meaning,
                               r.patient_orientation_code_meaning});
    detail::write_file(dir / "metadata.csv", s);

    s = write_csv_record({"study_id", "text"});
    for (const auto& r : ds.reports)
        s += write_csv_record({std::to_string(r.study_id), r.text});
    detail::write_file(dir / "reports.csv", s);

    std::string jl;
    for (const auto& [study_id, mats] : ds.image_features) {
        nlohmann::json features = nlohmann::json::array();
        for (const auto& m : mats)
            features.push_back({{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}});
        nlohmann::json j{{"study_id", study_id}, {"features", features}};
        jl += j.dump();
        jl += '\n';
    }
    detail::write_file(dir / "image_features.jsonl", jl);
}

// --- validation -------------------------------------------------------------

inline std::vector<std::string> validate_dataset(const Dataset& ds) {
    std::vector<std::string> errors;
    std::map<std::int64_t, const EdStay*> by_stay;
    std::set<std::pair<std::int64_t, std::int64_t>> stay_keys;

    for (const auto& s : ds.stays) {
        if (s.intime >= s.outtime)
            errors.push_back("stay " + std::to_string(s.stay_id) + ": intime >= outtime");
        if (!stay_keys.insert({s.subject_id, s.stay_id}).second)
            errors.push_back("duplicate (subject_id, stay_id) " + std::to_string(s.subject_id) +
                             "," + std::to_string(s.stay_id));
        by_stay[s.stay_id] = &s;
    }

    std::map<std::int64_t, int> triage_per_stay;
    for (const auto& t : ds.triage) {
        ++triage_per_stay[t.stay_id];
        if (!by_stay.count(t.stay_id))
            errors.push_back("triage row references unknown stay " + std::to_string(t.stay_id));
    }
    for (const auto& [stay, n] : triage_per_stay)
        if (n != 1) errors.push_back("stay " + std::to_string(stay) + " has " + std::to_string(n) +
                                     " triage rows (expected 1)");
    for (const auto& s : ds.stays)
        if (!triage_per_stay.count(s.stay_id))
            errors.push_back("stay " + std::to_string(s.stay_id) + " has 0 triage rows (expected 1)");

    auto check_charttime = [&](const char* what, std::int64_t stay_id, Minutes t) {
        auto it = by_stay.find(stay_id);
        if (it == by_stay.end()) {
            errors.push_back(std::string(what) + " row references unknown stay " + std::to_string(stay_id));
            return;
        }
        if (t < it->second->intime || t > it->second->outtime)
            errors.push_back(std::string(what) + " charttime outside stay " + std::to_string(stay_id));
    };
    for (const auto& v : ds.vitalsign) check_charttime("vitalsign", v.stay_id, v.charttime);
    for (const auto& p : ds.pyxis) check_charttime("pyxis", p.stay_id, p.charttime);
    for (const auto& m : ds.medrecon)
        if (!by_stay.count(m.stay_id))
            errors.push_back("medrecon row references unknown stay " + std::to_string(m.stay_id));

    for (const auto& r : ds.reports)
        if (r.text.empty())
            errors.push_back("report " + std::to_string(r.study_id) + " has empty text");

    for (const auto& [study_id, mats] : ds.image_features) {
        if (mats.empty()) {
            errors.push_back("study " + std::to_string(study_id) + " has empty feature list");
            continue;
        }
        std::size_t dim = mats.front().rows;
        for (const auto& m : mats) {
            if (m.rows != dim)
                errors.push_back("study " + std::to_string(study_id) + " has mixed feature dims");
            if (!m.all_finite())
                errors.push_back("study " + std::to_string(study_id) + " has non-finite features");
        }
    }
    return errors;
}

// --- semantic equality (round-trip checks) ----------------------------------

inline bool operator==(const EdStay& a, const EdStay& b) {
    return a.subject_id == b.subject_id && a.stay_id == b.stay_id && a.intime == b.intime &&
           a.outtime == b.outtime && a.gender == b.gender && a.race == b.race &&
           a.arrival_transport == b.arrival_transport;
}
inline bool operator==(const TriageRow& a, const TriageRow& b) {
    return a.stay_id == b.stay_id && a.temperature == b.temperature && a.heartrate == b.heartrate &&
           a.resprate == b.resprate && a.o2sat == b.o2sat && a.sbp == b.sbp && a.dbp == b.dbp &&
           a.acuity == b.acuity && a.pain == b.pain && a.chiefcomplaint == b.chiefcomplaint;
}
inline bool operator==(const VitalSignRow& a, const VitalSignRow& b) {
    return a.stay_id == b.stay_id && a.charttime == b.charttime && a.temperature == b.temperature &&
           a.heartrate == b.heartrate && a.resprate == b.resprate && a.o2sat == b.o2sat &&
           a.sbp == b.sbp && a.dbp == b.dbp && a.rhythm == b.rhythm && a.pain == b.pain;
}
inline bool operator==(const MedRecRow& a, const MedRecRow& b) {
    return a.stay_id == b.stay_id && a.name == b.name && a.gsn == b.gsn && a.ndc == b.ndc &&
           a.etc_rn == b.etc_rn && a.etccode == b.etccode;
}
inline bool operator==(const PyxisRow& a, const PyxisRow& b) {
    return a.stay_id == b.stay_id && a.charttime == b.charttime && a.med_rn == b.med_rn &&
           a.name == b.name && a.gsn_rn == b.gsn_rn && a.gsn == b.gsn;
}
inline bool operator==(const MetadataRow& a, const MetadataRow& b) {
    return a.study_id == b.study_id && a.subject_id == b.subject_id &&
           a.study_date == b.study_date && a.study_time == b.study_time &&
           a.performed_procedure_step_description == b.performed_procedure_step_description &&
           a.view_position == b.view_position &&
           a.procedure_code_meaning == b.procedure_code_meaning &&
           a.view_code_meaning == b.view_code_meaning &&
           a.patient_orientation_code_meaning == b.patient_orientation_code_meaning;
}
inline bool operator==(const RawReport& a, const RawReport& b) {
    return a.study_id == b.study_id && a.text == b.text;
}
inline bool operator==(const Tensor2D& a, const Tensor2D& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}
inline bool operator==(const Dataset& a, const Dataset& b) {
    return a.stays == b.stays && a.triage == b.triage && a.vitalsign == b.vitalsign &&
           a.medrecon == b.medrecon && a.pyxis == b.pyxis && a.metadata == b.metadata &&
           a.reports == b.reports && a.image_features == b.image_features;
}

// --- normalized event rows ---------------------------------------------------
//
// A table row reduced to (event time, value cells, category cells, text
// cells). This is the only view the embedding pipeline needs, and it bakes in
// the per-table event-time rules: ed_stay/triage/medrecon use the stay's
// intime, vitalsign/pyxis use charttime, metadata uses the exam time itself.

struct EventRow {
    Minutes event_time = 0;
    std::vector<std::pair<std::string, double>> values;          // present numerics only
    std::vector<std::pair<std::string, std::string>> categories; // non-empty categoricals
    std::vector<std::pair<std::string, std::string>> texts;      // non-empty text fields
};

namespace detail {

inline void push_value(EventRow& e, const char* col, const std::optional<double>& v) {
    if (v) e.values.emplace_back(col, *v);
}
inline void push_cat(EventRow& e, const char* col, const std::string& v) {
    if (!v.empty()) e.categories.emplace_back(col, v);
}
inline void push_text(EventRow& e, const char* col, const std::string& v) {
    if (!v.empty()) e.texts.emplace_back(col, v);
}

} // namespace detail

inline EventRow event_row(const EdStay& s) {
    EventRow e;
    e.event_time = s.intime;
    detail::push_cat(e, "gender", s.gender);
    detail::push_cat(e, "race", s.race);
    detail::push_cat(e, "arrival_transport", s.arrival_transport);
    return e;
}

inline EventRow event_row(const TriageRow& t, const EdStay& stay) {
    EventRow e;
    e.event_time = stay.intime;
    detail::push_value(e, "temperature", t.temperature);
    detail::push_value(e, "heartrate", t.heartrate);
    detail::push_value(e, "resprate", t.resprate);
    detail::push_value(e, "o2sat", t.o2sat);
    detail::push_value(e, "sbp", t.sbp);
    detail::push_value(e, "dbp", t.dbp);
    detail::push_value(e, "acuity", t.acuity);
    detail::push_text(e, "pain", t.pain);
    detail::push_text(e, "chiefcomplaint", t.chiefcomplaint);
    return e;
}

inline EventRow event_row(const VitalSignRow& v) {
    EventRow e;
    e.event_time = v.charttime;
    detail::push_value(e, "temperature", v.temperature);
    detail::push_value(e, "heartrate", v.heartrate);
    detail::push_value(e, "resprate", v.resprate);
    detail::push_value(e, "o2sat", v.o2sat);
    detail::push_value(e, "sbp", v.sbp);
    detail::push_value(e, "dbp", v.dbp);
    detail::push_cat(e, "rhythm", v.rhythm);
    detail::push_text(e, "pain", v.pain);
    return e;
}

inline EventRow event_row(const MedRecRow& m, const EdStay& stay) {
    EventRow e;
    e.event_time = stay.intime;
    detail::push_text(e, "name", m.name);
    detail::push_cat(e, "gsn", m.gsn);
    detail::push_cat(e, "ndc", m.ndc);
    detail::push_cat(e, "etc_rn", m.etc_rn);
    detail::push_cat(e, "etccode", m.etccode);
    return e;
}

inline EventRow event_row(const PyxisRow& p) {
    EventRow e;
    e.event_time = p.charttime;
    detail::push_cat(e, "med_rn", p.med_rn);
    detail::push_cat(e, "name", p.name);
    detail::push_cat(e, "gsn_rn", p.gsn_rn);
    detail::push_cat(e, "gsn", p.gsn);
    return e;
}

inline EventRow event_row(const MetadataRow& m) {
    EventRow e;
    e.event_time = m.exam_time();
    detail::push_cat(e, "performed_procedure_step_description", m.performed_procedure_step_description);
    detail::push_cat(e, "view_position", m.view_position);
    detail::push_cat(e, "procedure_code_meaning", m.procedure_code_meaning);
    detail::push_cat(e, "view_code_meaning", m.view_code_meaning);
    detail::push_cat(e, "patient_orientation_code_meaning", m.patient_orientation_code_meaning);
    return e;
}

} // namespace pforge
