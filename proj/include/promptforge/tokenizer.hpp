#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pforge {

// Byte-level BPE. Ids 0..255 are the single bytes, 256 is reserved (never
// produced by encode, decodes to nothing), merged tokens start at 257.
inline constexpr int kReservedTokenId = 256;
inline constexpr std::size_t kBaseVocabSize = 257;

struct Vocab {
    std::vector<std::pair<int, int>> merges;          // (left id, right id), training order
    std::vector<std::vector<std::uint8_t>> token_bytes; // id -> byte sequence

    std::size_t vocab_size() const { return token_bytes.size(); }

    static Vocab base() {
        Vocab v;
        v.token_bytes.resize(kBaseVocabSize);
        for (int b = 0; b < 256; ++b) v.token_bytes[b] = {static_cast<std::uint8_t>(b)};
        return v;
    }
};

namespace detail {

// One left-to-right pass replacing every non-overlapping (l, r) with id.
inline void apply_merge(std::vector<int>& seq, int l, int r, int id) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < seq.size();) {
        if (i + 1 < seq.size() && seq[i] == l && seq[i + 1] == r) {
            seq[w++] = id;
            i += 2;
        } else {
            seq[w++] = seq[i++];
        }
    }
    seq.resize(w);
}

} // namespace detail

// Greedy highest-frequency pair merging until vocab_size is reached or no
// pair occurs twice. Ties break on the lexicographically smallest pair of
// byte sequences so training is deterministic.
inline Vocab train_tokenizer(std::span<const std::string> corpus, std::size_t vocab_size) {
    if (vocab_size < kBaseVocabSize)
        throw std::invalid_argument("train_tokenizer: vocab_size must be >= 257");

    Vocab vocab = Vocab::base();
    std::vector<std::vector<int>> seqs;
    seqs.reserve(corpus.size());
    for (const std::string& s : corpus) {
        std::vector<int> ids(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) ids[i] = static_cast<std::uint8_t>(s[i]);
        seqs.push_back(std::move(ids));
    }

    while (vocab.vocab_size() < vocab_size) {
        std::map<std::pair<int, int>, std::size_t> counts;
        for (const auto& seq : seqs)
            for (std::size_t i = 0; i + 1 < seq.size(); ++i)
                ++counts[{seq[i], seq[i + 1]}];

        std::pair<int, int> best{-1, -1};
        std::size_t best_count = 1; // a pair must repeat to be worth a merge
        for (const auto& [pair, count] : counts) {
            if (count < best_count) continue;
            if (count > best_count) {
                best = pair;
                best_count = count;
                continue;
            }
            auto key = [&](const std::pair<int, int>& p) {
                return std::make_pair(vocab.token_bytes[p.first], vocab.token_bytes[p.second]);
            };
            if (best.first < 0 || key(pair) < key(best)) best = pair;
        }
        if (best.first < 0) break;

        int id = static_cast<int>(vocab.vocab_size());
        std::vector<std::uint8_t> bytes = vocab.token_bytes[best.first];
        bytes.insert(bytes.end(), vocab.token_bytes[best.second].begin(),
                     vocab.token_bytes[best.second].end());
        vocab.token_bytes.push_back(std::move(bytes));
        vocab.merges.push_back(best);
        for (auto& seq : seqs) detail::apply_merge(seq, best.first, best.second, id);
    }
    return vocab;
}

inline std::vector<int> encode(const Vocab& vocab, std::string_view text) {
    std::vector<int> ids(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) ids[i] = static_cast<std::uint8_t>(text[i]);
    int id = static_cast<int>(kBaseVocabSize);
    for (const auto& [l, r] : vocab.merges) detail::apply_merge(ids, l, r, id++);
    return ids;
}

inline std::string decode(const Vocab& vocab, std::span<const int> ids) {
    std::string out;
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.vocab_size())
            throw std::out_of_range("decode: unknown token id " + std::to_string(id));
        const auto& bytes = vocab.token_bytes[id];
        out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    }
    return out;
}

// {"merges": [[[bytes],[bytes]], ...], "size": N}
inline nlohmann::json vocab_to_json(const Vocab& vocab) {
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& [l, r] : vocab.merges)
        merges.push_back({vocab.token_bytes[l], vocab.token_bytes[r]});
    return {{"merges", merges}, {"size", vocab.vocab_size()}};
}

inline Vocab vocab_from_json(const nlohmann::json& j) {
    Vocab vocab = Vocab::base();
    std::map<std::vector<std::uint8_t>, int> by_bytes;
    for (int b = 0; b < 256; ++b) by_bytes[vocab.token_bytes[b]] = b;

    for (const auto& m : j.at("merges")) {
        auto left = m.at(0).get<std::vector<std::uint8_t>>();
        auto right = m.at(1).get<std::vector<std::uint8_t>>();
        auto li = by_bytes.find(left);
        auto ri = by_bytes.find(right);
        if (li == by_bytes.end() || ri == by_bytes.end())
            throw std::runtime_error("vocab_from_json: merge references unknown token");
        int id = static_cast<int>(vocab.vocab_size());
        std::vector<std::uint8_t> bytes = left;
        bytes.insert(bytes.end(), right.begin(), right.end());
        vocab.merges.emplace_back(li->second, ri->second);
        by_bytes[bytes] = id;
        vocab.token_bytes.push_back(std::move(bytes));
    }
    if (j.contains("size") && j.at("size").get<std::size_t>() != vocab.vocab_size())
        throw std::runtime_error("vocab_from_json: size field disagrees with merge count");
    return vocab;
}

} // namespace pforge
