#pragma once

#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "promptforge/linker.hpp"
#include "promptforge/prompt.hpp"
#include "promptforge/report_sections.hpp"
#include "promptforge/rewards.hpp"
#include "promptforge/schema.hpp"
#include "promptforge/synth.hpp"
#include "promptforge/tokenizer.hpp"

namespace pforge {

enum class Strategy { grouped, separate, values_to_text };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::grouped: return "grouped";
        case Strategy::separate: return "separate";
        case Strategy::values_to_text: return "values_to_text";
    }
    return "?";
}

inline std::optional<Strategy> strategy_from_name(std::string_view name) {
    if (name == "grouped") return Strategy::grouped;
    if (name == "separate") return Strategy::separate;
    if (name == "values_to_text") return Strategy::values_to_text;
    return std::nullopt;
}

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t hidden = 768;        // decoder hidden size H
    std::size_t inner = 2048;        // FNN intermediate width
    std::size_t vocab_size = 2000;   // desk-scale default; 30000 is the full-fidelity preset
    std::size_t max_positions = 2048;
    std::size_t report_len = 256;    // report-token budget reserved behind the prompt
    int history_size = 0;            // h
    bool include_comparison = false;
    Strategy strategy = Strategy::grouped;
    bool training_mode = true;       // caps images per exam at max_images
    std::size_t max_images = 5;
    bool dump_embeddings = false;
    bool zscore_values = false;      // optional; raw values are the default
    RewardConfig reward = RewardConfig::per_section();
};

// --- tokenizer corpus ------------------------------------------------------------
//
// Findings/impression/indication/history (never comparison) from every
// report belonging to a training-split subject — prior-pool exams included,
// since the training set is wider than the linked exams — plus the free-text
// table columns (triage pain and chief complaint, reconciled-medicine names,
// vital-sign pain) from the whole dataset. Everything normalized.

inline std::vector<std::string> tokenizer_corpus(const Dataset& ds,
                                                 const std::vector<LinkedExam>& linked,
                                                 const SectionRules& rules = SectionRules::defaults()) {
    std::map<std::int64_t, Split> split_by_subject;
    for (const LinkedExam& e : linked) split_by_subject[e.exam.subject_id] = e.split;
    std::map<std::int64_t, std::int64_t> subject_by_study;
    for (const auto& m : ds.metadata) subject_by_study[m.study_id] = m.subject_id;

    std::vector<std::string> corpus;
    for (const auto& r : ds.reports) {
        auto subject = subject_by_study.find(r.study_id);
        if (subject == subject_by_study.end()) continue;
        auto split = split_by_subject.find(subject->second);
        if (split == split_by_subject.end() || split->second != Split::train) continue;
        ReportSections s = extract_sections(r.text, rules);
        if (s.findings) corpus.push_back(*s.findings);
        if (s.impression) corpus.push_back(*s.impression);
        if (s.indication) corpus.push_back(*s.indication);
        if (s.history) corpus.push_back(*s.history);
    }
    auto add = [&corpus](const std::string& s) {
        std::string t = normalize_text(s);
        if (!t.empty()) corpus.push_back(std::move(t));
    };
    for (const auto& t : ds.triage) {
        add(t.pain);
        add(t.chiefcomplaint);
    }
    for (const auto& m : ds.medrecon) add(m.name);
    for (const auto& v : ds.vitalsign) add(v.pain);
    return corpus;
}

// --- lookups from the training split -----------------------------------------------

inline std::vector<EventRow> table_event_rows(const LinkedExam& e, TableId table) {
    std::vector<EventRow> rows;
    switch (table) {
        case TableId::ed_stay:
            rows.push_back(event_row(e.stay));
            break;
        case TableId::triage:
            for (const auto& t : e.events.triage) rows.push_back(event_row(t, e.stay));
            break;
        case TableId::vitalsign:
            for (const auto& v : e.events.vitalsign) rows.push_back(event_row(v));
            break;
        case TableId::medrecon:
            for (const auto& m : e.events.medrecon) rows.push_back(event_row(m, e.stay));
            break;
        case TableId::pyxis:
            for (const auto& p : e.events.pyxis) rows.push_back(event_row(p));
            break;
        case TableId::metadata:
            for (const auto& m : e.events.metadata) rows.push_back(event_row(m));
            break;
    }
    return rows;
}

inline std::map<TableId, LookupTable> build_lookups(const std::vector<LinkedExam>& exams) {
    std::map<TableId, LookupTable> lookups;
    for (TableId table : kAllTables) {
        std::vector<EventRow> rows;
        for (const LinkedExam& e : exams) {
            if (e.split != Split::train) continue;
            auto more = table_event_rows(e, table);
            rows.insert(rows.end(), more.begin(), more.end());
        }
        lookups[table] = build_lookup(rows, builtin_table_spec(table));
    }
    return lookups;
}

// --- per-exam prompt --------------------------------------------------------------

inline void embed_table_stream(const LinkedExam& e, TableId table, const LookupTable& lut,
                               const EmbeddingTables& tables, const Vocab& vocab,
                               Strategy strategy, bool zscore_values, PromptItemList& items) {
    std::vector<EventRow> rows = table_event_rows(e, table);
    if (rows.empty()) return;
    switch (strategy) {
        case Strategy::grouped:
            embed_grouped(group_rows(rows, e.exam.exam_time, lut, zscore_values),
                          tables.table_fnn.at(table), items);
            break;
        case Strategy::separate:
            embed_separate(rows, e.exam.exam_time, lut, tables.table_fnn.at(table),
                           tables.category_embedding.at(table), items, zscore_values);
            break;
        case Strategy::values_to_text:
            embed_values_to_text(rows, e.exam.exam_time, lut, tables.category_embedding.at(table),
                                 vocab, tables.token_embedding, items);
            break;
    }

    // text columns are tokenized identically under every strategy
    auto text_source = [table](const std::string& col) -> std::optional<Source> {
        if (table == TableId::triage && col == "pain") return Source::triage_pain;
        if (table == TableId::triage && col == "chiefcomplaint") return Source::triage_chiefcomplaint;
        if (table == TableId::vitalsign && col == "pain") return Source::vitalsign_pain;
        if (table == TableId::medrecon && col == "name") return Source::medrecon_name;
        return std::nullopt;
    };
    for (const EventRow& row : rows) {
        double delta = hours_between(e.exam.exam_time, row.event_time);
        for (const auto& [col, text] : row.texts) {
            auto source = text_source(col);
            if (!source) continue;
            embed_text_field(normalize_text(text), delta, vocab, tables.token_embedding, *source,
                             items);
        }
    }
}

inline Prompt build_prompt(const LinkedExam& e, const std::map<TableId, LookupTable>& lookups,
                           const EmbeddingTables& tables, const Vocab& vocab,
                           const RunConfig& config) {
    PromptItemList items;

    std::optional<ImageSampling> sampling;
    if (config.training_mode)
        sampling = ImageSampling{config.max_images,
                                 mix_seed(config.seed, static_cast<std::uint64_t>(e.exam.study_id))};
    embed_images(e.exam.image_features, tables.image_projection, Source::images, 0.0, sampling,
                 items);

    for (TableId table : kAllTables)
        embed_table_stream(e, table, lookups.at(table), tables, vocab, config.strategy,
                           config.zscore_values, items);

    // current-exam sections use the exam time itself: delta 0
    if (e.sections.indication)
        embed_text_field(*e.sections.indication, 0.0, vocab, tables.token_embedding,
                         Source::indication, items);
    if (e.sections.history)
        embed_text_field(*e.sections.history, 0.0, vocab, tables.token_embedding, Source::history,
                         items);
    if (e.sections.comparison && config.history_size >= 1 && config.include_comparison)
        embed_text_field(*e.sections.comparison, 0.0, vocab, tables.token_embedding,
                         Source::comparison, items);

    for (const PriorExam& prior : e.priors) {
        if (prior.sections.findings)
            embed_text_field(*prior.sections.findings, prior.delta_hours, vocab,
                             tables.token_embedding, Source::prior_findings, items);
        if (prior.sections.impression)
            embed_text_field(*prior.sections.impression, prior.delta_hours, vocab,
                             tables.token_embedding, Source::prior_impression, items);
        std::optional<ImageSampling> prior_sampling;
        if (config.training_mode)
            prior_sampling = ImageSampling{
                config.max_images,
                mix_seed(config.seed, static_cast<std::uint64_t>(prior.exam.study_id))};
        embed_images(prior.exam.image_features, tables.image_projection, Source::prior_images,
                     prior.delta_hours, prior_sampling, items);
    }

    return assemble_prompt(items, tables, config.max_positions, config.report_len);
}

// --- dump format ---------------------------------------------------------------------

// Mask rows compress to [allowed_run, disallowed_run]; both the prompt block
// and the causal report block are single runs of each kind.
inline nlohmann::json mask_to_rle(const BoolMat& mask) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < mask.rows; ++i) {
        std::size_t allowed = 0;
        while (allowed < mask.cols && mask.at(i, allowed)) ++allowed;
        rows.push_back({allowed, mask.cols - allowed});
    }
    return rows;
}

inline nlohmann::json prompt_to_json(std::int64_t study_id, const Prompt& prompt,
                                     bool with_embeddings) {
    nlohmann::json items = nlohmann::json::array();
    for (const PromptItem& item : prompt.ordered_items) {
        nlohmann::json j{{"source", source_name(item.source)},
                         {"time_delta", item.time_delta_hours}};
        if (with_embeddings) j["embedding"] = item.embedding;
        items.push_back(std::move(j));
    }
    return {{"study_id", study_id},
            {"prompt_len", prompt.prompt_len},
            {"positions", prompt.positions},
            {"items", items},
            {"mask_rle", mask_to_rle(prompt.mask)}};
}

struct PromptStats {
    std::size_t exams = 0;
    double mean_prompt_len = 0.0; // the reported prompt-length statistic
};

inline std::size_t thread_budget() {
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t n = hw == 0 ? 1 : hw;
    if (const char* env = std::getenv("PROMPTFORGE_THREADS")) {
        auto parsed = parse_int(env);
        if (parsed && *parsed >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(*parsed));
        else n = 1;
    }
    return n;
}

// Prompts for distinct exams are independent; output order stays fixed at
// (subject_id, study_id) regardless of thread count.
inline std::pair<std::vector<nlohmann::json>, PromptStats> build_prompts(
    const std::vector<LinkedExam>& exams, const std::map<TableId, LookupTable>& lookups,
    const EmbeddingTables& tables, const Vocab& vocab, const RunConfig& config) {
    std::vector<std::size_t> order(exams.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(exams[a].exam.subject_id, exams[a].exam.study_id) <
               std::tie(exams[b].exam.subject_id, exams[b].exam.study_id);
    });

    std::vector<nlohmann::json> lines(exams.size());
    std::vector<std::size_t> lens(exams.size(), 0);

    std::size_t n_threads = std::min(thread_budget(), std::max<std::size_t>(exams.size(), 1));
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const LinkedExam& e = exams[order[i]];
            Prompt p = build_prompt(e, lookups, tables, vocab, config);
            lens[i] = p.prompt_len;
            lines[i] = prompt_to_json(e.exam.study_id, p, config.dump_embeddings);
        }
    };
    if (n_threads <= 1 || exams.size() < 2) {
        work(0, exams.size());
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(n_threads);
        std::size_t chunk = (exams.size() + n_threads - 1) / n_threads;
        for (std::size_t t = 0; t < n_threads; ++t) {
            std::size_t begin = t * chunk;
            std::size_t end = std::min(exams.size(), begin + chunk);
            if (begin >= end) break;
            pool.emplace_back([&, t, begin, end] {
                try {
                    work(begin, end);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (const auto& error : errors)
            if (error) std::rethrow_exception(error);
    }

    PromptStats stats;
    stats.exams = exams.size();
    double total = 0.0;
    for (std::size_t len : lens) total += static_cast<double>(len);
    stats.mean_prompt_len = exams.empty() ? 0.0 : total / static_cast<double>(exams.size());
    return {std::move(lines), stats};
}

} // namespace pforge
