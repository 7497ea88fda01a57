#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptforge/common.hpp"
#include "promptforge/nn.hpp"
#include "promptforge/schema.hpp"
#include "promptforge/tokenizer.hpp"

namespace pforge {

// Every distinct patient data stream gets its own identity (and its own
// learned source embedding). Prior-exam streams are deliberately separate
// from the current exam's.
enum class Source : int {
    images = 0,
    prior_images,
    edstay_values,
    triage_values,
    vitalsign_values,
    medrecon_values,
    pyxis_values,
    metadata_values,
    triage_pain,
    triage_chiefcomplaint,
    vitalsign_pain,
    medrecon_name,
    indication,
    history,
    comparison,
    prior_findings,
    prior_impression,
};

inline constexpr int kSourceCount = 17;

inline const char* source_name(Source s) {
    switch (s) {
        case Source::images: return "images";
        case Source::prior_images: return "prior_images";
        case Source::edstay_values: return "edstay_values";
        case Source::triage_values: return "triage_values";
        case Source::vitalsign_values: return "vitalsign_values";
        case Source::medrecon_values: return "medrecon_values";
        case Source::pyxis_values: return "pyxis_values";
        case Source::metadata_values: return "metadata_values";
        case Source::triage_pain: return "triage_pain";
        case Source::triage_chiefcomplaint: return "triage_chiefcomplaint";
        case Source::vitalsign_pain: return "vitalsign_pain";
        case Source::medrecon_name: return "medrecon_name";
        case Source::indication: return "indication";
        case Source::history: return "history";
        case Source::comparison: return "comparison";
        case Source::prior_findings: return "prior_findings";
        case Source::prior_impression: return "prior_impression";
    }
    return "?";
}

inline Source value_stream_source(TableId t) {
    switch (t) {
        case TableId::ed_stay: return Source::edstay_values;
        case TableId::triage: return Source::triage_values;
        case TableId::vitalsign: return Source::vitalsign_values;
        case TableId::medrecon: return Source::medrecon_values;
        case TableId::pyxis: return Source::pyxis_values;
        case TableId::metadata: return Source::metadata_values;
    }
    throw std::logic_error("value_stream_source: bad table");
}

// --- time delta ---------------------------------------------------------------

// D = 1/sqrt(delta + 1), strictly decreasing, (0, 1].
inline double map_time_delta(double delta_hours) {
    if (delta_hours < 0.0)
        throw std::invalid_argument("map_time_delta: negative delta (linker bug)");
    return 1.0 / std::sqrt(delta_hours + 1.0);
}

inline std::vector<double> time_delta_embedding(double mapped, const Fnn& fnn) {
    Tensor2D in(1, 1);
    in.at(0, 0) = mapped;
    return fnn_forward(fnn, in).data;
}

// --- lookup tables --------------------------------------------------------------

/// Maps value columns and (category column, category) pairs to slots of a
/// table's fixed-width feature vector. Built from training-split rows only.
/// Per-column statistics support the optional z-score mode (off by default;
/// the formula-literal reading places raw values into the feature vector).
struct LookupTable {
    struct ValueStats {
        double mean = 0.0;
        double sd = 0.0;
        std::size_t count = 0;
    };

    TableId table = TableId::ed_stay;
    std::map<std::string, std::size_t> value_index;
    std::map<std::pair<std::string, std::string>, std::size_t> category_index;
    std::map<std::string, ValueStats> value_stats;
    std::size_t width = 0;

    // (v - mean) / sd; degenerate columns (sd == 0 or unseen) map to 0
    double zscore(const std::string& column, double v) const {
        auto it = value_stats.find(column);
        if (it == value_stats.end() || it->second.sd == 0.0) return 0.0;
        return (v - it->second.mean) / it->second.sd;
    }
};

inline LookupTable build_lookup(std::span<const EventRow> training_rows, const TableSpec& spec) {
    LookupTable lut;
    lut.table = spec.table;
    for (const auto& col : spec.columns)
        if (col.kind == ColumnKind::value) lut.value_index[col.name] = lut.width++;
    std::map<std::string, std::pair<double, double>> sums; // sum, sum of squares
    for (const EventRow& row : training_rows) {
        for (const auto& [col, cat] : row.categories) {
            auto key = std::make_pair(col, cat);
            if (!lut.category_index.count(key)) lut.category_index[key] = lut.width++;
        }
        for (const auto& [col, v] : row.values) {
            auto& [sum, sumsq] = sums[col];
            sum += v;
            sumsq += v * v;
            ++lut.value_stats[col].count;
        }
    }
    for (auto& [col, stats] : lut.value_stats) {
        const auto& [sum, sumsq] = sums[col];
        double n = static_cast<double>(stats.count);
        stats.mean = sum / n;
        stats.sd = std::sqrt(std::max(0.0, sumsq / n - stats.mean * stats.mean));
    }
    return lut;
}

// --- grouping -------------------------------------------------------------------

struct GroupedFeatures {
    TableId table = TableId::ed_stay;
    std::vector<double> unique_deltas_hours; // ascending
    Tensor2D features;                       // |U_C| x width
    Tensor2D presence;                       // 1 where a cell was set
};

// Rows are grouped by exact integer-minute delta; each group is one feature
// vector. A value cell set twice in a group is a hard error ("rows for a
// value column always had a unique time").
inline GroupedFeatures group_rows(std::span<const EventRow> rows, Minutes exam_time,
                                  const LookupTable& lut, bool zscore_values = false) {
    std::map<Minutes, std::vector<const EventRow*>> groups;
    for (const EventRow& row : rows) {
        if (row.values.empty() && row.categories.empty()) continue;
        Minutes delta = exam_time - row.event_time;
        if (delta < 0)
            throw std::invalid_argument("group_rows: event after exam (linker bug)");
        groups[delta].push_back(&row);
    }

    GroupedFeatures out;
    out.table = lut.table;
    // width 0 happens when the training split held no rows for this table;
    // groups then carry a single always-zero column so the table FNN still
    // composes (unseen categories activate nothing either way)
    std::size_t width = std::max<std::size_t>(lut.width, 1);
    out.features = Tensor2D(groups.size(), width);
    out.presence = Tensor2D(groups.size(), width);
    std::size_t g = 0;
    for (const auto& [delta, members] : groups) {
        out.unique_deltas_hours.push_back(static_cast<double>(delta) / 60.0);
        for (const EventRow* row : members) {
            for (const auto& [col, v] : row->values) {
                auto it = lut.value_index.find(col);
                if (it == lut.value_index.end())
                    throw std::invalid_argument("group_rows: value column '" + col +
                                                "' not in lookup table");
                if (out.presence.at(g, it->second) != 0.0)
                    throw std::runtime_error("group_rows: value cell '" + col +
                                             "' set twice in one time-delta group");
                out.features.at(g, it->second) = zscore_values ? lut.zscore(col, v) : v;
                out.presence.at(g, it->second) = 1.0;
            }
            for (const auto& [col, cat] : row->categories) {
                auto it = lut.category_index.find({col, cat});
                if (it == lut.category_index.end()) continue; // unseen at inference: no activation
                out.features.at(g, it->second) = 1.0;
                out.presence.at(g, it->second) = 1.0;
            }
        }
        ++g;
    }
    return out;
}

// --- prompt items ----------------------------------------------------------------

struct PromptItem {
    std::vector<double> embedding; // patient data embedding, length H
    Source source = Source::images;
    double time_delta_hours = 0.0;
    std::size_t seq = 0; // per-source ordinal; tie-break after source rank
};

// Collects items and hands out per-source ordinals, so the final sort has a
// total, permutation-independent key.
struct PromptItemList {
    std::vector<PromptItem> items;
    std::array<std::size_t, kSourceCount> next_seq{};

    void append(Source source, double delta_hours, std::vector<double> embedding) {
        for (double v : embedding)
            if (!std::isfinite(v))
                throw std::runtime_error("prompt item embedding is not finite");
        PromptItem item;
        item.embedding = std::move(embedding);
        item.source = source;
        item.time_delta_hours = delta_hours;
        item.seq = next_seq[static_cast<int>(source)]++;
        items.push_back(std::move(item));
    }
};

// --- model-side tables --------------------------------------------------------------

struct EmbeddingTables {
    std::size_t hidden = 768; // H
    Tensor2D token_embedding; // vocab x H
    std::array<std::vector<double>, kSourceCount> source_embedding;
    Fnn time_delta_fnn;                          // 1 -> inner -> H
    std::map<TableId, Fnn> table_fnn;            // |L_i| -> inner -> H
    std::map<TableId, Tensor2D> category_embedding; // (|L_i|+1) x H, last row = unknown
    Tensor2D image_projection;                   // feature_dim x H
    std::array<int, kSourceCount> source_rank{}; // position tie-break order
};

inline EmbeddingTables make_embedding_tables(std::uint64_t seed, std::size_t hidden,
                                             std::size_t inner, std::size_t vocab_size,
                                             const std::map<TableId, LookupTable>& lookups,
                                             std::size_t image_feature_dim) {
    EmbeddingTables t;
    t.hidden = hidden;
    t.token_embedding = init_params(mix_seed(seed, 101), vocab_size, hidden);
    for (int s = 0; s < kSourceCount; ++s) {
        t.source_embedding[s] =
            init_params(mix_seed(seed, 200 + static_cast<std::uint64_t>(s)), 1, hidden).data;
        t.source_rank[s] = s;
    }
    t.time_delta_fnn = make_fnn(mix_seed(seed, 300), 1, inner, hidden);
    int k = 0;
    for (const auto& [table, lut] : lookups) {
        std::size_t width = std::max<std::size_t>(lut.width, 1);
        t.table_fnn[table] = make_fnn(mix_seed(seed, 400 + k), width, inner, hidden);
        t.category_embedding[table] =
            init_params(mix_seed(seed, 500 + k), width + 1, hidden);
        ++k;
    }
    t.image_projection = init_params(mix_seed(seed, 600), image_feature_dim, hidden);
    return t;
}

// --- embedding builders ----------------------------------------------------------------

inline void embed_grouped(const GroupedFeatures& grouped, const Fnn& table_fnn,
                          PromptItemList& out) {
    if (grouped.unique_deltas_hours.empty()) return;
    Tensor2D embeddings = fnn_forward(table_fnn, grouped.features);
    Source source = value_stream_source(grouped.table);
    for (std::size_t g = 0; g < grouped.unique_deltas_hours.size(); ++g) {
        std::vector<double> row(embeddings.data.begin() + g * embeddings.cols,
                                embeddings.data.begin() + (g + 1) * embeddings.cols);
        out.append(source, grouped.unique_deltas_hours[g], std::move(row));
    }
}

namespace detail {

inline std::vector<double> category_row(const Tensor2D& cat_emb, std::size_t index) {
    return std::vector<double>(cat_emb.data.begin() + index * cat_emb.cols,
                               cat_emb.data.begin() + (index + 1) * cat_emb.cols);
}

} // namespace detail

// "Separate embeddings": one FNN pass per value datum (the value planted at
// its lookup slot in an otherwise-zero vector), one embedding-matrix row per
// category datum. Unseen categories map to the reserved last row.
inline void embed_separate(std::span<const EventRow> rows, Minutes exam_time,
                           const LookupTable& lut, const Fnn& table_fnn,
                           const Tensor2D& category_embedding, PromptItemList& out,
                           bool zscore_values = false) {
    Source source = value_stream_source(lut.table);
    for (const EventRow& row : rows) {
        double delta = static_cast<double>(exam_time - row.event_time) / 60.0;
        if (delta < 0) throw std::invalid_argument("embed_separate: event after exam");
        for (const auto& [col, v] : row.values) {
            auto it = lut.value_index.find(col);
            if (it == lut.value_index.end())
                throw std::invalid_argument("embed_separate: value column '" + col +
                                            "' not in lookup table");
            Tensor2D x(1, std::max<std::size_t>(lut.width, 1));
            x.at(0, it->second) = zscore_values ? lut.zscore(col, v) : v;
            out.append(source, delta, fnn_forward(table_fnn, x).data);
        }
        for (const auto& [col, cat] : row.categories) {
            auto it = lut.category_index.find({col, cat});
            std::size_t index = it == lut.category_index.end()
                                    ? category_embedding.rows - 1 // unknown row
                                    : it->second;
            out.append(source, delta, detail::category_row(category_embedding, index));
        }
    }
}

// "Values-to-text, categories-to-embeddings": each value rendered as
// "column: value", tokenized, one item per token; categories as above.
inline void embed_values_to_text(std::span<const EventRow> rows, Minutes exam_time,
                                 const LookupTable& lut, const Tensor2D& category_embedding,
                                 const Vocab& vocab, const Tensor2D& token_embedding,
                                 PromptItemList& out) {
    Source source = value_stream_source(lut.table);
    for (const EventRow& row : rows) {
        double delta = static_cast<double>(exam_time - row.event_time) / 60.0;
        if (delta < 0) throw std::invalid_argument("embed_values_to_text: event after exam");
        for (const auto& [col, v] : row.values) {
            std::string text = col + ": " + format_double(v);
            for (int id : encode(vocab, text)) {
                if (static_cast<std::size_t>(id) >= token_embedding.rows)
                    throw std::out_of_range("embed_values_to_text: token id out of range");
                out.append(source, delta, detail::category_row(token_embedding, id));
            }
        }
        for (const auto& [col, cat] : row.categories) {
            auto it = lut.category_index.find({col, cat});
            std::size_t index =
                it == lut.category_index.end() ? category_embedding.rows - 1 : it->second;
            out.append(source, delta, detail::category_row(category_embedding, index));
        }
    }
}

// One item per token, all sharing the row's time delta.
inline void embed_text_field(std::string_view text, double delta_hours, const Vocab& vocab,
                             const Tensor2D& token_embedding, Source source,
                             PromptItemList& out) {
    for (int id : encode(vocab, text)) {
        if (static_cast<std::size_t>(id) >= token_embedding.rows)
            throw std::out_of_range("embed_text_field: token id out of range");
        out.append(source, delta_hours, detail::category_row(token_embedding, id));
    }
}

struct ImageSampling {
    std::size_t max_images = 5;
    std::uint64_t seed = 0; // per-exam seed for the without-replacement draw
};

// Feature matrices are feature_dim x token_count; token t's embedding is its
// column projected to H: (M^T P)[t].
inline Tensor2D project_image_tokens(const Tensor2D& features, const Tensor2D& projection) {
    if (features.rows != projection.rows)
        throw std::invalid_argument("project_image_tokens: feature dim does not match projection");
    return matmul(transpose(features), projection);
}

// d/dP of sum(upstream ⊙ M^T P) = M upstream
inline Tensor2D image_projection_gradient(const Tensor2D& features, const Tensor2D& upstream) {
    return matmul(features, upstream);
}

// In training mode at most max_images are used, sampled uniformly without
// replacement; the survivors keep their original relative order.
inline void embed_images(const std::vector<Tensor2D>& feature_matrices,
                         const Tensor2D& projection, Source source, double delta_hours,
                         const std::optional<ImageSampling>& sampling, PromptItemList& out) {
    std::vector<std::size_t> order(feature_matrices.size());
    std::iota(order.begin(), order.end(), 0);
    if (sampling && feature_matrices.size() > sampling->max_images) {
        Rng rng(sampling->seed);
        auto picked = rng.sample_indices(feature_matrices.size(), sampling->max_images);
        std::sort(picked.begin(), picked.end());
        order = std::move(picked);
    }
    for (std::size_t idx : order) {
        Tensor2D projected = project_image_tokens(feature_matrices[idx], projection);
        for (std::size_t tok = 0; tok < projected.rows; ++tok) {
            std::vector<double> e(projected.data.begin() + tok * projected.cols,
                                  projected.data.begin() + (tok + 1) * projected.cols);
            out.append(source, delta_hours, std::move(e));
        }
    }
}

// --- attention mask -------------------------------------------------------------------

struct BoolMat {
    std::size_t rows = 0, cols = 0;
    std::vector<std::uint8_t> data;

    BoolMat() = default;
    BoolMat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}
    std::uint8_t& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    bool at(std::size_t i, std::size_t j) const { return data[i * cols + j] != 0; }
};

// Hybrid mask: non-causal over the prompt, causal over the report. Prompt
// rows see every prompt column; report row t sees the prompt plus report
// tokens 0..t.
inline BoolMat build_attention_mask(std::size_t prompt_len, std::size_t report_len) {
    std::size_t n = prompt_len + report_len;
    BoolMat mask(n, n);
    for (std::size_t i = 0; i < prompt_len; ++i)
        for (std::size_t j = 0; j < prompt_len; ++j) mask.at(i, j) = 1;
    for (std::size_t t = 0; t < report_len; ++t)
        for (std::size_t j = 0; j <= prompt_len + t; ++j) mask.at(prompt_len + t, j) = 1;
    return mask;
}

// Row-stochastic softmax(Q K^T / sqrt(d)) restricted to the mask; disallowed
// cells are exact zeros. A row with no allowed column is a hard error.
inline Tensor2D attention_weights(const Tensor2D& q, const Tensor2D& k, const BoolMat& mask) {
    if (q.cols != k.cols) throw std::invalid_argument("attention_weights: Q/K dim mismatch");
    if (mask.rows != q.rows || mask.cols != k.rows)
        throw std::invalid_argument("attention_weights: mask shape mismatch");

    double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Tensor2D weights(q.rows, k.rows);
    for (std::size_t i = 0; i < q.rows; ++i) {
        double max_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k.rows; ++j) {
            if (!mask.at(i, j)) continue;
            double s = 0.0;
            for (std::size_t d = 0; d < q.cols; ++d) s += q.at(i, d) * k.at(j, d);
            weights.at(i, j) = s * scale;
            max_score = std::max(max_score, weights.at(i, j));
        }
        if (max_score == -std::numeric_limits<double>::infinity())
            throw std::runtime_error("attention_weights: row " + std::to_string(i) +
                                     " has no allowed columns");
        double denom = 0.0;
        for (std::size_t j = 0; j < k.rows; ++j) {
            double w = mask.at(i, j) ? std::exp(weights.at(i, j) - max_score) : 0.0;
            weights.at(i, j) = w;
            denom += w;
        }
        for (std::size_t j = 0; j < k.rows; ++j) weights.at(i, j) /= denom;
    }
    return weights;
}

// softmax(Q K^T / sqrt(d) + mask) V
inline Tensor2D reference_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                                    const BoolMat& mask) {
    if (k.rows != v.rows) throw std::invalid_argument("reference_attention: K/V length mismatch");
    return matmul(attention_weights(q, k, mask), v);
}

// --- assembly -------------------------------------------------------------------------

struct Prompt {
    Tensor2D embeddings;                // prompt_len x H
    std::vector<std::size_t> positions; // 0..prompt_len-1 after ordering
    BoolMat mask;                       // (prompt_len + report_len)^2
    std::size_t prompt_len = 0;
    std::vector<PromptItem> ordered_items; // post-sort, post-truncation
};

// Items are ordered by descending time delta so the most recent data sits
// next to the report tokens; ties break on (source rank, per-source ordinal).
// When prompt_len + report_len would exceed max_positions, the largest-delta
// items are dropped first. Each final embedding is patient-data + source +
// time-delta embedding; position information is carried as indices (the
// decoder's rotary scheme consumes indices, not added vectors).
inline Prompt assemble_prompt(const PromptItemList& list, const EmbeddingTables& tables,
                              std::size_t max_positions, std::size_t report_len) {
    if (max_positions < report_len)
        throw std::invalid_argument("assemble_prompt: report budget exceeds max positions");

    std::vector<const PromptItem*> order;
    order.reserve(list.items.size());
    for (const PromptItem& item : list.items) order.push_back(&item);
    std::sort(order.begin(), order.end(), [&](const PromptItem* a, const PromptItem* b) {
        if (a->time_delta_hours != b->time_delta_hours)
            return a->time_delta_hours > b->time_delta_hours;
        int ra = tables.source_rank[static_cast<int>(a->source)];
        int rb = tables.source_rank[static_cast<int>(b->source)];
        if (ra != rb) return ra < rb;
        return a->seq < b->seq;
    });

    std::size_t budget = max_positions - report_len;
    if (order.size() > budget)
        order.erase(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(order.size() - budget));

    Prompt prompt;
    prompt.prompt_len = order.size();
    prompt.embeddings = Tensor2D(order.size(), tables.hidden);
    prompt.positions.resize(order.size());

    std::map<double, std::vector<double>> delta_cache; // deltas repeat heavily
    for (std::size_t i = 0; i < order.size(); ++i) {
        const PromptItem& item = *order[i];
        if (item.embedding.size() != tables.hidden)
            throw std::invalid_argument("assemble_prompt: item width != H");
        auto cached = delta_cache.find(item.time_delta_hours);
        if (cached == delta_cache.end())
            cached = delta_cache
                         .emplace(item.time_delta_hours,
                                  time_delta_embedding(map_time_delta(item.time_delta_hours),
                                                       tables.time_delta_fnn))
                         .first;
        const auto& source_vec = tables.source_embedding[static_cast<int>(item.source)];
        for (std::size_t h = 0; h < tables.hidden; ++h)
            prompt.embeddings.at(i, h) = item.embedding[h] + source_vec[h] + cached->second[h];
        prompt.positions[i] = i;
        prompt.ordered_items.push_back(item);
    }
    prompt.mask = build_attention_mask(prompt.prompt_len, report_len);
    return prompt;
}

} // namespace pforge
