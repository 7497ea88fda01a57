#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptforge/tokenizer.hpp"

namespace pforge {

// --- ARN: absence of repeated n-grams -------------------------------------------

// 1 when no n-gram repeats; may drop below 0 when grams repeat many times
// (the formula is not clamped). Sequences shorter than n score 1.
inline double arn(std::span<const int> tokens, int n) {
    if (n < 1) throw std::invalid_argument("arn: n must be >= 1");
    std::size_t len = tokens.size();
    if (len < static_cast<std::size_t>(n)) return 1.0;
    std::size_t m = len - static_cast<std::size_t>(n) + 1;

    std::map<std::vector<int>, std::size_t> counts;
    std::vector<int> gram(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < m; ++i) {
        gram.assign(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i) + n);
        ++counts[gram];
    }
    std::size_t repeats = 0; // sum over unique grams of (count - 1)
    for (const auto& [g, c] : counts) repeats += c - 1;
    return 1.0 - static_cast<double>(repeats) / static_cast<double>(m);
}

// --- reward arithmetic ------------------------------------------------------------

struct RewardConfig {
    double alpha1 = 0.75; // findings weight
    double alpha2 = 0.25; // impression weight
    double lambda1 = 0.5;
    double lambda2 = 0.5;
    double lambda3 = 0.0; // ARN weight
    int ngram = 3;

    // presets matching the published reward settings
    static RewardConfig per_section() { return {0.75, 0.25, 0.5, 0.5, 0.0, 3}; }
    static RewardConfig per_section_arn() { return {0.75, 0.25, 0.45, 0.45, 0.1, 3}; }
};

inline double section_reward(double r_findings, double r_impression, double alpha1,
                             double alpha2) {
    return alpha1 * r_findings + alpha2 * r_impression;
}

// Scores may be absent only where the corresponding weight is zero.
inline double composite_reward(const std::array<std::optional<double>, 3>& scores,
                               double lambda1, double lambda2, double lambda3) {
    const std::array<double, 3> lambdas{lambda1, lambda2, lambda3};
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        if (lambdas[i] == 0.0) continue;
        if (!scores[i])
            throw std::runtime_error("composite_reward: scorer " + std::to_string(i + 1) +
                                     " missing but its weight is nonzero");
        total += lambdas[i] * *scores[i];
    }
    return total;
}

// SCST advantage: sampled reward against the greedy baseline.
inline double scst_advantage(double r_sample, double r_greedy) { return r_sample - r_greedy; }

inline double exam_mean_score(std::span<const double> per_report) {
    if (per_report.empty()) throw std::invalid_argument("exam_mean_score: empty score list");
    double s = 0.0;
    for (double v : per_report) s += v;
    return s / static_cast<double>(per_report.size());
}

inline double corpus_mean(std::span<const double> per_exam) {
    if (per_exam.empty()) throw std::invalid_argument("corpus_mean: empty score list");
    double s = 0.0;
    for (double v : per_exam) s += v;
    return s / static_cast<double>(per_exam.size());
}

// --- label-level macro F1 ----------------------------------------------------------

struct LabeledReport {
    std::vector<bool> generated;
    std::vector<bool> reference;
};

// Per-label F1 over TP/FP/FN, with counts averaged over each exam's reports
// first, macro-averaged over labels. A label with no TP+FP+FN anywhere
// contributes F1 = 0.
inline double macro_f1(const std::vector<std::vector<LabeledReport>>& exams) {
    if (exams.empty()) throw std::invalid_argument("macro_f1: no exams");
    std::size_t n_labels = 0;
    for (const auto& exam : exams)
        for (const auto& rep : exam) {
            if (rep.generated.size() != rep.reference.size())
                throw std::invalid_argument("macro_f1: label vector length mismatch");
            if (n_labels == 0)
                n_labels = rep.generated.size();
            else if (rep.generated.size() != n_labels)
                throw std::invalid_argument("macro_f1: label vector length mismatch");
        }
    if (n_labels == 0) throw std::invalid_argument("macro_f1: no labels");

    std::vector<double> tp(n_labels, 0.0), fp(n_labels, 0.0), fn(n_labels, 0.0);
    for (const auto& exam : exams) {
        if (exam.empty()) continue;
        double inv = 1.0 / static_cast<double>(exam.size());
        for (const auto& rep : exam)
            for (std::size_t l = 0; l < n_labels; ++l) {
                bool g = rep.generated[l], r = rep.reference[l];
                if (g && r) tp[l] += inv;
                else if (g && !r) fp[l] += inv;
                else if (!g && r) fn[l] += inv;
            }
    }
    double total = 0.0;
    for (std::size_t l = 0; l < n_labels; ++l) {
        double denom = 2.0 * tp[l] + fp[l] + fn[l];
        total += denom == 0.0 ? 0.0 : 2.0 * tp[l] / denom;
    }
    return total / static_cast<double>(n_labels);
}

// --- pluggable scorers --------------------------------------------------------------
//
// The learned semantic metrics are external systems; this is their socket.
// Scorers must be deterministic for fixed inputs.

struct Scorer {
    virtual ~Scorer() = default;
    virtual std::string name() const = 0;
    virtual double score(const std::string& candidate, const std::string& reference) const = 0;
};

// Whitespace-token multiset overlap F1. Stand-in for exercising the reward
// plumbing only; not equivalent to any learned metric.
class TokenOverlapF1 : public Scorer {
public:
    std::string name() const override { return "token_overlap_f1"; }

    double score(const std::string& candidate, const std::string& reference) const override {
        auto split = [](const std::string& s) {
            std::map<std::string, std::size_t> counts;
            std::istringstream in(s);
            std::string tok;
            std::size_t n = 0;
            while (in >> tok) { ++counts[tok]; ++n; }
            return std::make_pair(counts, n);
        };
        auto [cand, n_cand] = split(candidate);
        auto [ref, n_ref] = split(reference);
        if (n_cand + n_ref == 0) return 0.0;
        std::size_t overlap = 0;
        for (const auto& [tok, c] : cand) {
            auto it = ref.find(tok);
            if (it != ref.end()) overlap += std::min(c, it->second);
        }
        return 2.0 * static_cast<double>(overlap) / static_cast<double>(n_cand + n_ref);
    }
};

// ARN as a scorer; the reference is unused by construction.
class ArnScorer : public Scorer {
public:
    ArnScorer(const Vocab& vocab, int n) : vocab_(&vocab), n_(n) {}

    std::string name() const override { return "arn"; }

    double score(const std::string& candidate, const std::string&) const override {
        auto ids = encode(*vocab_, candidate);
        return arn(ids, n_);
    }

private:
    const Vocab* vocab_;
    int n_;
};

// Wires the weight presets to three scorer slots. Zero-weight scorers are
// never invoked.
class RewardModel {
public:
    RewardModel(RewardConfig config, const Scorer* s1, const Scorer* s2, const Scorer* s3)
        : config_(config), scorers_{s1, s2, s3} {}

    double report_reward(const std::string& candidate, const std::string& reference) const {
        const std::array<double, 3> lambdas{config_.lambda1, config_.lambda2, config_.lambda3};
        std::array<std::optional<double>, 3> scores;
        for (std::size_t i = 0; i < 3; ++i)
            if (lambdas[i] != 0.0 && scorers_[i])
                scores[i] = scorers_[i]->score(candidate, reference);
        return composite_reward(scores, config_.lambda1, config_.lambda2, config_.lambda3);
    }

    double per_section_reward(const std::string& cand_findings, const std::string& ref_findings,
                              const std::string& cand_impression,
                              const std::string& ref_impression) const {
        return section_reward(report_reward(cand_findings, ref_findings),
                              report_reward(cand_impression, ref_impression), config_.alpha1,
                              config_.alpha2);
    }

    const RewardConfig& config() const { return config_; }

private:
    RewardConfig config_;
    std::array<const Scorer*, 3> scorers_;
};

} // namespace pforge
