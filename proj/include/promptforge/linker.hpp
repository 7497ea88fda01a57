#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptforge/common.hpp"
#include "promptforge/report_sections.hpp"
#include "promptforge/schema.hpp"
#include "promptforge/timestamps.hpp"

namespace pforge {

enum class Split { train, validation, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

inline std::optional<Split> split_from_name(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "validation") return Split::validation;
    if (name == "test") return Split::test;
    return std::nullopt;
}

struct LinkerConfig {
    int history_size = 0;            // h
    bool include_comparison = false; // only meaningful when history_size >= 1
};

struct PriorExam {
    ExamRecord exam;
    ReportSections sections;
    double delta_hours = 0.0; // strictly positive
};

struct TableEvents {
    std::vector<TriageRow> triage;
    std::vector<VitalSignRow> vitalsign;
    std::vector<MedRecRow> medrecon;
    std::vector<PyxisRow> pyxis;
    std::vector<MetadataRow> metadata;
};

struct LinkedExam {
    ExamRecord exam;
    EdStay stay;
    ReportSections sections;
    TableEvents events;
    std::vector<PriorExam> priors; // ascending time delta (most recent first)
    Split split = Split::train;
};

struct Exclusion {
    std::int64_t study_id = 0;
    std::string reason;
};

struct LinkResult {
    std::vector<LinkedExam> exams;
    std::vector<Exclusion> exclusions;
    std::size_t dropped_events = 0; // events strictly after the exam time
};

// --- split assignment ---------------------------------------------------------

// Explicit per-subject table; a subject listed twice is a fatal input error.
inline std::map<std::int64_t, Split> assign_splits(
    const std::vector<std::pair<std::int64_t, Split>>& entries) {
    std::map<std::int64_t, Split> out;
    for (const auto& [subject, split] : entries) {
        auto [it, inserted] = out.emplace(subject, split);
        if (!inserted)
            throw std::runtime_error("assign_splits: subject " + std::to_string(subject) +
                                     " appears in two splits");
    }
    return out;
}

// Seeded fractions; the split is a pure function of (seed, subject_id), so no
// patient can ever straddle splits.
inline std::map<std::int64_t, Split> assign_splits(const std::vector<std::int64_t>& subjects,
                                                   std::uint64_t seed, double f_train,
                                                   double f_validation, double f_test) {
    if (f_train < 0 || f_validation < 0 || f_test < 0 ||
        std::abs(f_train + f_validation + f_test - 1.0) > 1e-9)
        throw std::invalid_argument("assign_splits: fractions must be non-negative and sum to 1");
    std::map<std::int64_t, Split> out;
    for (std::int64_t subject : subjects) {
        double u = Rng(mix_seed(seed, static_cast<std::uint64_t>(subject))).uniform();
        Split s = u < f_train                ? Split::train
                  : u < f_train + f_validation ? Split::validation
                                               : Split::test;
        out.emplace(subject, s);
    }
    return out;
}

// --- linking ------------------------------------------------------------------

inline LinkResult link(const Dataset& ds, const LinkerConfig& config,
                       const std::map<std::int64_t, Split>& splits,
                       const SectionRules& rules = SectionRules::defaults()) {
    LinkResult result;

    std::map<std::int64_t, const RawReport*> report_by_study;
    for (const auto& r : ds.reports) report_by_study[r.study_id] = &r;

    // Full exam pool, priors included: every metadata row that can be
    // materialized into an ExamRecord.
    std::vector<MetadataRow> meta_sorted = ds.metadata;
    std::sort(meta_sorted.begin(), meta_sorted.end(), [](const auto& a, const auto& b) {
        return std::tie(a.subject_id, a.study_id) < std::tie(b.subject_id, b.study_id);
    });

    std::map<std::int64_t, ExamRecord> pool; // by study_id
    std::map<std::int64_t, std::vector<const ExamRecord*>> pool_by_subject;
    for (const auto& m : meta_sorted) {
        auto rep = report_by_study.find(m.study_id);
        if (rep == report_by_study.end()) {
            result.exclusions.push_back({m.study_id, "missing-report"});
            continue;
        }
        auto feats = ds.image_features.find(m.study_id);
        if (feats == ds.image_features.end() || feats->second.empty()) {
            result.exclusions.push_back({m.study_id, "missing-image-features"});
            continue;
        }
        ExamRecord rec;
        rec.study_id = m.study_id;
        rec.subject_id = m.subject_id;
        rec.exam_time = m.exam_time();
        rec.image_features = feats->second;
        rec.report = *rep->second;
        auto [it, inserted] = pool.emplace(m.study_id, std::move(rec));
        if (inserted) pool_by_subject[m.subject_id].push_back(&it->second);
    }

    std::map<std::int64_t, std::vector<const EdStay*>> stays_by_subject;
    for (const auto& s : ds.stays) stays_by_subject[s.subject_id].push_back(&s);

    std::map<std::int64_t, const TriageRow*> triage_by_stay;
    for (const auto& t : ds.triage) triage_by_stay[t.stay_id] = &t;
    std::map<std::int64_t, std::vector<const VitalSignRow*>> vitals_by_stay;
    for (const auto& v : ds.vitalsign) vitals_by_stay[v.stay_id].push_back(&v);
    std::map<std::int64_t, std::vector<const MedRecRow*>> medrecon_by_stay;
    for (const auto& m : ds.medrecon) medrecon_by_stay[m.stay_id].push_back(&m);
    std::map<std::int64_t, std::vector<const PyxisRow*>> pyxis_by_stay;
    for (const auto& p : ds.pyxis) pyxis_by_stay[p.stay_id].push_back(&p);
    std::map<std::int64_t, const MetadataRow*> meta_by_study;
    for (const auto& m : ds.metadata) meta_by_study[m.study_id] = &m;

    for (const auto& m : meta_sorted) {
        auto pool_it = pool.find(m.study_id);
        if (pool_it == pool.end()) continue; // already excluded above
        const ExamRecord& exam = pool_it->second;

        // "within" is inclusive at both stay boundaries
        std::vector<const EdStay*> containing;
        auto stays_it = stays_by_subject.find(exam.subject_id);
        if (stays_it != stays_by_subject.end())
            for (const EdStay* s : stays_it->second)
                if (s->intime <= exam.exam_time && exam.exam_time <= s->outtime)
                    containing.push_back(s);

        if (containing.empty()) {
            result.exclusions.push_back({exam.study_id, "no-stay"});
            continue;
        }
        if (containing.size() > 1) {
            result.exclusions.push_back({exam.study_id, "ambiguous-stay"});
            continue;
        }
        const EdStay& stay = *containing.front();

        ReportSections sections = extract_sections(exam.report.text, rules);
        if (!sections.findings) {
            result.exclusions.push_back({exam.study_id, "missing-findings"});
            continue;
        }
        if (!sections.impression) {
            result.exclusions.push_back({exam.study_id, "missing-impression"});
            continue;
        }

        LinkedExam linked;
        linked.exam = exam;
        linked.stay = stay;
        linked.sections = std::move(sections);

        if (auto t = triage_by_stay.find(stay.stay_id); t != triage_by_stay.end())
            linked.events.triage.push_back(*t->second);
        if (auto v = vitals_by_stay.find(stay.stay_id); v != vitals_by_stay.end())
            for (const VitalSignRow* row : v->second) {
                if (row->charttime > exam.exam_time) { ++result.dropped_events; continue; }
                linked.events.vitalsign.push_back(*row);
            }
        if (auto md = medrecon_by_stay.find(stay.stay_id); md != medrecon_by_stay.end())
            for (const MedRecRow* row : md->second) linked.events.medrecon.push_back(*row);
        if (auto p = pyxis_by_stay.find(stay.stay_id); p != pyxis_by_stay.end())
            for (const PyxisRow* row : p->second) {
                if (row->charttime > exam.exam_time) { ++result.dropped_events; continue; }
                linked.events.pyxis.push_back(*row);
            }
        linked.events.metadata.push_back(*meta_by_study.at(exam.study_id));

        if (config.history_size > 0) {
            std::vector<const ExamRecord*> candidates;
            for (const ExamRecord* p : pool_by_subject[exam.subject_id])
                if (p->exam_time < exam.exam_time) candidates.push_back(p);
            std::sort(candidates.begin(), candidates.end(),
                      [](const ExamRecord* a, const ExamRecord* b) {
                          return std::tie(b->exam_time, a->study_id) <
                                 std::tie(a->exam_time, b->study_id);
                      });
            if (candidates.size() > static_cast<std::size_t>(config.history_size))
                candidates.resize(static_cast<std::size_t>(config.history_size));
            for (const ExamRecord* p : candidates) {
                PriorExam prior;
                prior.exam = *p;
                prior.sections = extract_sections(p->report.text, rules);
                prior.delta_hours = hours_between(exam.exam_time, p->exam_time);
                linked.priors.push_back(std::move(prior));
            }
        }

        auto split_it = splits.find(exam.subject_id);
        if (split_it == splits.end())
            throw std::runtime_error("link: subject " + std::to_string(exam.subject_id) +
                                     " missing from split assignment");
        linked.split = split_it->second;

        result.exams.push_back(std::move(linked));
    }
    return result;
}

// --- JSON lines serialization --------------------------------------------------

namespace detail {

inline nlohmann::json opt_to_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
inline std::optional<double> opt_from_json(const nlohmann::json& j) {
    return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}
inline nlohmann::json opt_str_to_json(const std::optional<std::string>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
inline std::optional<std::string> opt_str_from_json(const nlohmann::json& j) {
    return j.is_null() ? std::nullopt : std::optional<std::string>(j.get<std::string>());
}

} // namespace detail

inline nlohmann::json sections_to_json(const ReportSections& s) {
    return {{"findings", detail::opt_str_to_json(s.findings)},
            {"impression", detail::opt_str_to_json(s.impression)},
            {"indication", detail::opt_str_to_json(s.indication)},
            {"history", detail::opt_str_to_json(s.history)},
            {"comparison", detail::opt_str_to_json(s.comparison)}};
}

inline ReportSections sections_from_json(const nlohmann::json& j) {
    ReportSections s;
    s.findings = detail::opt_str_from_json(j.at("findings"));
    s.impression = detail::opt_str_from_json(j.at("impression"));
    s.indication = detail::opt_str_from_json(j.at("indication"));
    s.history = detail::opt_str_from_json(j.at("history"));
    s.comparison = detail::opt_str_from_json(j.at("comparison"));
    return s;
}

inline nlohmann::json linked_exam_to_json(const LinkedExam& e) {
    nlohmann::json j;
    j["study_id"] = e.exam.study_id;
    j["subject_id"] = e.exam.subject_id;
    j["exam_time"] = format_timestamp(e.exam.exam_time);
    j["split"] = split_name(e.split);
    j["report_text"] = e.exam.report.text;
    j["stay"] = {{"subject_id", e.stay.subject_id},
                 {"stay_id", e.stay.stay_id},
                 {"intime", format_timestamp(e.stay.intime)},
                 {"outtime", format_timestamp(e.stay.outtime)},
                 {"gender", e.stay.gender},
                 {"race", e.stay.race},
                 {"arrival_transport", e.stay.arrival_transport}};
    j["sections"] = sections_to_json(e.sections);

    nlohmann::json triage = nlohmann::json::array();
    for (const auto& t : e.events.triage)
        triage.push_back({{"stay_id", t.stay_id},
                          {"temperature", detail::opt_to_json(t.temperature)},
                          {"heartrate", detail::opt_to_json(t.heartrate)},
                          {"resprate", detail::opt_to_json(t.resprate)},
                          {"o2sat", detail::opt_to_json(t.o2sat)},
                          {"sbp", detail::opt_to_json(t.sbp)},
                          {"dbp", detail::opt_to_json(t.dbp)},
                          {"acuity", detail::opt_to_json(t.acuity)},
                          {"pain", t.pain},
                          {"chiefcomplaint", t.chiefcomplaint}});
    nlohmann::json vitals = nlohmann::json::array();
    for (const auto& v : e.events.vitalsign)
        vitals.push_back({{"stay_id", v.stay_id},
                          {"charttime", format_timestamp(v.charttime)},
                          {"temperature", detail::opt_to_json(v.temperature)},
                          {"heartrate", detail::opt_to_json(v.heartrate)},
                          {"resprate", detail::opt_to_json(v.resprate)},
                          {"o2sat", detail::opt_to_json(v.o2sat)},
                          {"sbp", detail::opt_to_json(v.sbp)},
                          {"dbp", detail::opt_to_json(v.dbp)},
                          {"rhythm", v.rhythm},
                          {"pain", v.pain}});
    nlohmann::json medrecon = nlohmann::json::array();
    for (const auto& m : e.events.medrecon)
        medrecon.push_back({{"stay_id", m.stay_id},
                            {"name", m.name},
                            {"gsn", m.gsn},
                            {"ndc", m.ndc},
                            {"etc_rn", m.etc_rn},
                            {"etccode", m.etccode}});
    nlohmann::json pyxis = nlohmann::json::array();
    for (const auto& p : e.events.pyxis)
        pyxis.push_back({{"stay_id", p.stay_id},
                         {"charttime", format_timestamp(p.charttime)},
                         {"med_rn", p.med_rn},
                         {"name", p.name},
                         {"gsn_rn", p.gsn_rn},
                         {"gsn", p.gsn}});
    nlohmann::json metadata = nlohmann::json::array();
    for (const auto& m : e.events.metadata)
        metadata.push_back({{"study_id", m.study_id},
                            {"subject_id", m.subject_id},
                            {"study_date", format_date(m.study_date)},
                            {"study_time", format_time_of_day(m.study_time)},
                            {"performed_procedure_step_description", m.performed_procedure_step_description},
                            {"view_position", m.view_position},
                            {"procedure_code_meaning", m.procedure_code_meaning},
                            {"view_code_meaning", m.view_code_meaning},
                            {"patient_orientation_code_meaning", m.patient_orientation_code_meaning}});
    j["events"] = {{"triage", triage},
                   {"vitalsign", vitals},
                   {"medrecon", medrecon},
                   {"pyxis", pyxis},
                   {"metadata", metadata}};

    nlohmann::json priors = nlohmann::json::array();
    for (const auto& p : e.priors)
        priors.push_back({{"study_id", p.exam.study_id},
                          {"exam_time", format_timestamp(p.exam.exam_time)},
                          {"delta_hours", p.delta_hours},
                          {"sections", sections_to_json(p.sections)}});
    j["priors"] = priors;
    return j;
}

// Image features travel in the companion image_features.jsonl, keyed by
// study_id; the caller supplies them here.
inline LinkedExam linked_exam_from_json(
    const nlohmann::json& j,
    const std::map<std::int64_t, std::vector<Tensor2D>>& features_by_study) {
    LinkedExam e;
    e.exam.study_id = j.at("study_id").get<std::int64_t>();
    e.exam.subject_id = j.at("subject_id").get<std::int64_t>();
    auto ts = parse_timestamp(j.at("exam_time").get<std::string>());
    if (!ts) throw std::runtime_error("linked exam: bad exam_time");
    e.exam.exam_time = *ts;
    e.exam.report = {e.exam.study_id, j.at("report_text").get<std::string>()};
    auto feats = features_by_study.find(e.exam.study_id);
    if (feats == features_by_study.end())
        throw std::runtime_error("linked exam " + std::to_string(e.exam.study_id) +
                                 ": image features not found");
    e.exam.image_features = feats->second;

    auto split = split_from_name(j.at("split").get<std::string>());
    if (!split) throw std::runtime_error("linked exam: bad split");
    e.split = *split;

    const auto& stay = j.at("stay");
    e.stay.subject_id = stay.at("subject_id").get<std::int64_t>();
    e.stay.stay_id = stay.at("stay_id").get<std::int64_t>();
    e.stay.intime = parse_timestamp(stay.at("intime").get<std::string>()).value();
    e.stay.outtime = parse_timestamp(stay.at("outtime").get<std::string>()).value();
    e.stay.gender = stay.at("gender").get<std::string>();
    e.stay.race = stay.at("race").get<std::string>();
    e.stay.arrival_transport = stay.at("arrival_transport").get<std::string>();

    e.sections = sections_from_json(j.at("sections"));

    const auto& ev = j.at("events");
    for (const auto& t : ev.at("triage")) {
        TriageRow row;
        row.stay_id = t.at("stay_id").get<std::int64_t>();
        row.temperature = detail::opt_from_json(t.at("temperature"));
        row.heartrate = detail::opt_from_json(t.at("heartrate"));
        row.resprate = detail::opt_from_json(t.at("resprate"));
        row.o2sat = detail::opt_from_json(t.at("o2sat"));
        row.sbp = detail::opt_from_json(t.at("sbp"));
        row.dbp = detail::opt_from_json(t.at("dbp"));
        row.acuity = detail::opt_from_json(t.at("acuity"));
        row.pain = t.at("pain").get<std::string>();
        row.chiefcomplaint = t.at("chiefcomplaint").get<std::string>();
        e.events.triage.push_back(std::move(row));
    }
    for (const auto& v : ev.at("vitalsign")) {
        VitalSignRow row;
        row.stay_id = v.at("stay_id").get<std::int64_t>();
        row.charttime = parse_timestamp(v.at("charttime").get<std::string>()).value();
        row.temperature = detail::opt_from_json(v.at("temperature"));
        row.heartrate = detail::opt_from_json(v.at("heartrate"));
        row.resprate = detail::opt_from_json(v.at("resprate"));
        row.o2sat = detail::opt_from_json(v.at("o2sat"));
        row.sbp = detail::opt_from_json(v.at("sbp"));
        row.dbp = detail::opt_from_json(v.at("dbp"));
        row.rhythm = v.at("rhythm").get<std::string>();
        row.pain = v.at("pain").get<std::string>();
        e.events.vitalsign.push_back(std::move(row));
    }
    for (const auto& m : ev.at("medrecon"))
        e.events.medrecon.push_back({m.at("stay_id").get<std::int64_t>(),
                                     m.at("name").get<std::string>(),
                                     m.at("gsn").get<std::string>(),
                                     m.at("ndc").get<std::string>(),
                                     m.at("etc_rn").get<std::string>(),
                                     m.at("etccode").get<std::string>()});
    for (const auto& p : ev.at("pyxis"))
        e.events.pyxis.push_back({p.at("stay_id").get<std::int64_t>(),
                                  parse_timestamp(p.at("charttime").get<std::string>()).value(),
                                  p.at("med_rn").get<std::string>(),
                                  p.at("name").get<std::string>(),
                                  p.at("gsn_rn").get<std::string>(),
                                  p.at("gsn").get<std::string>()});
    for (const auto& m : ev.at("metadata")) {
        MetadataRow row;
        row.study_id = m.at("study_id").get<std::int64_t>();
        row.subject_id = m.at("subject_id").get<std::int64_t>();
        row.study_date = parse_date(m.at("study_date").get<std::string>()).value();
        row.study_time = parse_time_of_day(m.at("study_time").get<std::string>()).value();
        row.performed_procedure_step_description =
            m.at("performed_procedure_step_description").get<std::string>();
        row.view_position = m.at("view_position").get<std::string>();
        row.procedure_code_meaning = m.at("procedure_code_meaning").get<std::string>();
        row.view_code_meaning = m.at("view_code_meaning").get<std::string>();
        row.patient_orientation_code_meaning =
            m.at("patient_orientation_code_meaning").get<std::string>();
        e.events.metadata.push_back(std::move(row));
    }

    for (const auto& p : j.at("priors")) {
        PriorExam prior;
        prior.exam.study_id = p.at("study_id").get<std::int64_t>();
        prior.exam.subject_id = e.exam.subject_id;
        prior.exam.exam_time = parse_timestamp(p.at("exam_time").get<std::string>()).value();
        prior.delta_hours = p.at("delta_hours").get<double>();
        prior.sections = sections_from_json(p.at("sections"));
        auto pf = features_by_study.find(prior.exam.study_id);
        if (pf == features_by_study.end())
            throw std::runtime_error("prior exam " + std::to_string(prior.exam.study_id) +
                                     ": image features not found");
        prior.exam.image_features = pf->second;
        e.priors.push_back(std::move(prior));
    }
    return e;
}

inline nlohmann::json exclusion_to_json(const Exclusion& x) {
    return {{"study_id", x.study_id}, {"reason", x.reason}};
}

} // namespace pforge
