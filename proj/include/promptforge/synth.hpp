#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptforge/common.hpp"
#include "promptforge/schema.hpp"

namespace pforge {

// Per-exam presence probabilities for the optional data sources.
struct PrevalenceConfig {
    double medrecon = 0.53;
    double vitalsign = 0.62;
    double pyxis = 0.37;
    double indication = 0.66;
    double history = 0.34;
    double comparison = 0.97;
};

struct SynthConfig {
    PrevalenceConfig prevalence;
    double missing_value_rate = 0.05; // numeric cell left absent
    double zero_sentinel_rate = 0.01; // whole triage vitals row stored as literal 0.0
    double prior_exam_rate = 0.5;     // patient has non-ED prior exams
    int max_priors = 3;
    std::size_t feature_dim = 16; // image feature rows
    std::size_t image_tokens = 4; // image feature columns
    int findings_repeat_sentence = 0; // extra copies of one findings sentence

    void validate() const {
        auto check = [](double p, const char* name) {
            if (!(p >= 0.0 && p <= 1.0))
                throw std::invalid_argument(std::string("synth: probability out of [0,1]: ") + name);
        };
        check(prevalence.medrecon, "medrecon");
        check(prevalence.vitalsign, "vitalsign");
        check(prevalence.pyxis, "pyxis");
        check(prevalence.indication, "indication");
        check(prevalence.history, "history");
        check(prevalence.comparison, "comparison");
        check(missing_value_rate, "missing_value_rate");
        check(zero_sentinel_rate, "zero_sentinel_rate");
        check(prior_exam_rate, "prior_exam_rate");
    }
};

namespace synth_detail {

inline const std::vector<std::string>& complaints() {
    static const std::vector<std::string> v = {
        "CHEST PAIN", "SHORTNESS OF BREATH", "DYSPNEA", "COUGH", "FEVER",
        "BILATERAL FOOT PAIN", "ABDOMINAL PAIN", "WEAKNESS", "SYNCOPE", "GI BLEED"};
    return v;
}

inline const std::vector<std::string>& races() {
    static const std::vector<std::string> v = {"WHITE", "BLACK/AFRICAN AMERICAN",
                                               "HISPANIC OR LATINO", "ASIAN", "OTHER"};
    return v;
}

inline const std::vector<std::string>& transports() {
    static const std::vector<std::string> v = {"AMBULANCE", "WALK IN", "UNKNOWN"};
    return v;
}

inline const std::vector<std::string>& rhythms() {
    static const std::vector<std::string> v = {"Normal Sinus Rhythm", "Sinus Tachycardia",
                                               "Atrial Fibrillation"};
    return v;
}

inline const std::vector<std::string>& medicines() {
    static const std::vector<std::string> v = {
        "furosemide", "metoprolol tartrate", "lisinopril", "spironolactone", "aspirin",
        "atorvastatin", "albuterol sulfate", "insulin glargine", "gabapentin", "omeprazole",
        "acetaminophen", "levothyroxine"};
    return v;
}

inline const std::vector<std::string>& pains() {
    static const std::vector<std::string> v = {"0", "2", "5", "7", "10", "6-9", "yes.", "None"};
    return v;
}

inline const std::vector<std::string>& findings_sentences() {
    static const std::vector<std::string> v = {
        "The lungs are clear without focal consolidation.",
        "No pleural effusion or pneumothorax is seen.",
        "The cardiomediastinal silhouette is within normal limits.",
        "Low lung volumes are present.",
        "There is mild pulmonary vascular congestion.",
        "Streaky opacities in the lung bases likely reflect atelectasis.",
        "Bony structures are intact.",
        "The heart size is mildly enlarged."};
    return v;
}

inline const std::vector<std::string>& impression_sentences() {
    static const std::vector<std::string> v = {
        "No acute cardiopulmonary process.", "Mild pulmonary edema.",
        "Bibasilar atelectasis.", "Stable cardiomegaly.",
        "No significant interval change."};
    return v;
}

inline const std::vector<std::string>& indication_sentences() {
    static const std::vector<std::string> v = {
        "Chest pain, evaluate for acute process.", "Shortness of breath.",
        "Fever and cough, assess for pneumonia.", "Status post central line placement.",
        "Evaluate for fluid overload."};
    return v;
}

inline const std::vector<std::string>& history_sentences() {
    static const std::vector<std::string> v = {
        "Chronic obstructive pulmonary disease with worsening dyspnea.",
        "Congestive heart failure.", "Pulmonary fibrosis with shortness of breath.",
        "Prior myocardial infarction."};
    return v;
}

inline const std::vector<std::string>& comparison_sentences() {
    static const std::vector<std::string> v = {"None.", "Chest radiograph from prior admission.",
                                               "Prior study of the same day."};
    return v;
}

inline std::string pick(Rng& rng, const std::vector<std::string>& pool) {
    return pool[static_cast<std::size_t>(rng.below(pool.size()))];
}

inline std::string make_report_text(Rng& rng, bool with_indication, bool with_history,
                                    bool with_comparison, int repeat_sentence) {
    std::string text = "EXAMINATION: CHEST (PA AND LAT)\n";
    if (with_indication) text += "\nINDICATION: " + pick(rng, indication_sentences()) + "\n";
    if (with_history) text += "\nHISTORY: " + pick(rng, history_sentences()) + "\n";
    if (with_comparison) text += "\nCOMPARISON: " + pick(rng, comparison_sentences()) + "\n";

    text += "\nFINDINGS:\n \n";
    int n_sentences = static_cast<int>(rng.range(2, 4));
    std::string repeated = pick(rng, findings_sentences());
    text += repeated + "\n";
    for (int i = 1; i < n_sentences; ++i) text += pick(rng, findings_sentences()) + "\n";
    for (int i = 0; i < repeat_sentence; ++i) text += repeated + "\n";

    text += "\nIMPRESSION: " + pick(rng, impression_sentences()) + "\n";
    return text;
}

inline Tensor2D make_features(Rng& rng, std::size_t dim, std::size_t tokens) {
    Tensor2D m(dim, tokens);
    for (double& v : m.data) v = rng.normal(0.0, 0.5);
    return m;
}

} // namespace synth_detail

// Deterministic for a fixed (seed, n_patients, config). Each patient gets one
// ED stay containing exactly one exam; some patients also get earlier non-ED
// exams so the prior-exam pool is non-trivial.
inline Dataset synthesize_dataset(std::uint64_t seed, std::size_t n_patients,
                                  const SynthConfig& config = {}) {
    using namespace synth_detail;
    if (n_patients < 1) throw std::invalid_argument("synthesize_dataset: n_patients must be >= 1");
    config.validate();

    Dataset ds;
    const Minutes base = *parse_timestamp("2140-01-01 00:00");

    for (std::size_t i = 0; i < n_patients; ++i) {
        Rng rng(mix_seed(seed, i + 1));
        const std::int64_t subject_id = 10000 + static_cast<std::int64_t>(i);
        const std::int64_t stay_id = 400000 + static_cast<std::int64_t>(i);
        const std::int64_t study_id = 50000000 + static_cast<std::int64_t>(i);

        const Minutes intime = base + static_cast<Minutes>(i) * 3000 + rng.range(0, 1439);
        const Minutes duration = rng.range(180, 2160); // 3h .. 36h
        const Minutes outtime = intime + duration;
        const Minutes exam_time = intime + rng.range(60, duration - 60);

        ds.stays.push_back({subject_id, stay_id, intime, outtime,
                            rng.bernoulli(0.5) ? "F" : "M", pick(rng, races()),
                            pick(rng, transports())});

        // triage (always exactly one row)
        {
            TriageRow t;
            t.stay_id = stay_id;
            if (rng.bernoulli(config.zero_sentinel_rate)) {
                t.temperature = t.heartrate = t.resprate = t.o2sat = t.sbp = t.dbp = 0.0;
            } else {
                auto maybe = [&](double v) -> std::optional<double> {
                    if (rng.bernoulli(config.missing_value_rate)) return std::nullopt;
                    return v;
                };
                t.temperature = maybe(std::round(rng.normal(98.4, 1.0) * 10.0) / 10.0);
                t.heartrate = maybe(std::round(rng.normal(85.0, 15.0)));
                t.resprate = maybe(std::round(rng.normal(18.0, 3.0)));
                t.o2sat = maybe(std::round(rng.normal(96.0, 2.5)));
                t.sbp = maybe(std::round(rng.normal(130.0, 20.0)));
                t.dbp = maybe(std::round(rng.normal(75.0, 12.0)));
            }
            t.acuity = static_cast<double>(rng.range(1, 5));
            t.pain = pick(rng, pains());
            t.chiefcomplaint = pick(rng, complaints());
            ds.triage.push_back(std::move(t));
        }

        if (rng.bernoulli(config.prevalence.vitalsign)) {
            int n = static_cast<int>(rng.range(1, 5));
            for (int k = 0; k < n; ++k) {
                VitalSignRow v;
                v.stay_id = stay_id;
                v.charttime = intime + rng.range(0, exam_time - intime);
                v.temperature = std::round(rng.normal(98.4, 1.0) * 10.0) / 10.0;
                v.heartrate = std::round(rng.normal(85.0, 15.0));
                v.resprate = std::round(rng.normal(18.0, 3.0));
                v.o2sat = std::round(rng.normal(96.0, 2.5));
                v.sbp = std::round(rng.normal(130.0, 20.0));
                v.dbp = std::round(rng.normal(75.0, 12.0));
                if (rng.bernoulli(0.7)) v.rhythm = pick(rng, rhythms());
                v.pain = pick(rng, pains());
                ds.vitalsign.push_back(std::move(v));
            }
        }

        if (rng.bernoulli(config.prevalence.medrecon)) {
            int n = static_cast<int>(rng.range(1, 8));
            for (int k = 0; k < n; ++k) {
                MedRecRow m;
                m.stay_id = stay_id;
                m.name = pick(rng, medicines());
                m.gsn = std::to_string(rng.range(1000, 9999));
                m.ndc = std::to_string(rng.range(100000, 999999));
                m.etc_rn = std::to_string(rng.range(1, 3));
                m.etccode = std::to_string(rng.range(100, 999));
                ds.medrecon.push_back(std::move(m));
            }
        }

        if (rng.bernoulli(config.prevalence.pyxis)) {
            int n = static_cast<int>(rng.range(1, 4));
            for (int k = 0; k < n; ++k) {
                PyxisRow p;
                p.stay_id = stay_id;
                p.charttime = intime + rng.range(0, exam_time - intime);
                p.med_rn = std::to_string(rng.range(1, 4));
                p.name = pick(rng, medicines());
                p.gsn_rn = std::to_string(rng.range(1, 2));
                p.gsn = std::to_string(rng.range(1000, 9999));
                ds.pyxis.push_back(std::move(p));
            }
        }

        {
            MetadataRow m;
            m.study_id = study_id;
            m.subject_id = subject_id;
            m.study_date = (exam_time / 1440) * 1440;
            m.study_time = static_cast<int>(exam_time % 1440);
            m.performed_procedure_step_description = "CHEST (PA AND LAT)";
            m.view_position = rng.bernoulli(0.5) ? "PA" : "AP";
            m.procedure_code_meaning = "Chest X-Ray";
            m.view_code_meaning = m.view_position == "PA" ? "postero-anterior" : "antero-posterior";
            m.patient_orientation_code_meaning = "Erect";
            ds.metadata.push_back(std::move(m));
        }

        // indication/history presence from a single draw; with the default
        // probabilities summing to 1 they are mutually exclusive
        double u = rng.uniform();
        bool with_indication = u < config.prevalence.indication;
        bool with_history = u >= 1.0 - config.prevalence.history;
        bool with_comparison = rng.bernoulli(config.prevalence.comparison);
        ds.reports.push_back({study_id,
                              make_report_text(rng, with_indication, with_history, with_comparison,
                                               config.findings_repeat_sentence)});

        {
            std::vector<Tensor2D> mats;
            int n_images = static_cast<int>(rng.range(1, 3));
            for (int k = 0; k < n_images; ++k)
                mats.push_back(make_features(rng, config.feature_dim, config.image_tokens));
            ds.image_features[study_id] = std::move(mats);
        }

        // prior exams: strictly before this stay, outside any ED stay
        if (config.max_priors > 0 && rng.bernoulli(config.prior_exam_rate)) {
            int n = static_cast<int>(rng.range(1, config.max_priors));
            Minutes t = intime - rng.range(1440, 14400);
            for (int k = 0; k < n; ++k) {
                const std::int64_t prior_study = 60000000 + static_cast<std::int64_t>(i) * 8 + k;
                MetadataRow m;
                m.study_id = prior_study;
                m.subject_id = subject_id;
                m.study_date = (t / 1440) * 1440;
                m.study_time = static_cast<int>(t % 1440);
                m.performed_procedure_step_description = "CHEST (PORTABLE AP)";
                m.view_position = "AP";
                m.procedure_code_meaning = "Chest X-Ray";
                m.view_code_meaning = "antero-posterior";
                m.patient_orientation_code_meaning = "Recumbent";
                ds.metadata.push_back(std::move(m));

                // priors sometimes lack findings (still legal prior material)
                bool full = rng.bernoulli(0.8);
                std::string text = full ? make_report_text(rng, false, false, false, 0)
                                        : "IMPRESSION: " +
                                              pick(rng, impression_sentences()) + "\n";
                ds.reports.push_back({prior_study, std::move(text)});

                std::vector<Tensor2D> mats;
                int n_images = static_cast<int>(rng.range(1, 2));
                for (int j = 0; j < n_images; ++j)
                    mats.push_back(make_features(rng, config.feature_dim, config.image_tokens));
                ds.image_features[prior_study] = std::move(mats);

                t -= rng.range(1440, 100000);
            }
        }
    }
    return ds;
}

} // namespace pforge
