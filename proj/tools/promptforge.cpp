// promptforge: heterogeneous patient records -> prompt embeddings, masks and
// reward signals, with gradient and oracle checks runnable from the shell.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "promptforge/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pforge;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<json> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        lines.push_back(json::parse(line));
    }
    return lines;
}

void apply_config_file(RunConfig& config, const fs::path& path) {
    json j = json::parse(read_file(path));
    if (j.contains("seed")) config.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("hidden")) config.hidden = j["hidden"].get<std::size_t>();
    if (j.contains("inner")) config.inner = j["inner"].get<std::size_t>();
    if (j.contains("vocab_size")) config.vocab_size = j["vocab_size"].get<std::size_t>();
    if (j.contains("max_positions")) config.max_positions = j["max_positions"].get<std::size_t>();
    if (j.contains("report_len")) config.report_len = j["report_len"].get<std::size_t>();
    if (j.contains("history")) config.history_size = j["history"].get<int>();
    if (j.contains("include_comparison"))
        config.include_comparison = j["include_comparison"].get<bool>();
    if (j.contains("training_mode")) config.training_mode = j["training_mode"].get<bool>();
    if (j.contains("max_images")) config.max_images = j["max_images"].get<std::size_t>();
    if (j.contains("dump_embeddings")) config.dump_embeddings = j["dump_embeddings"].get<bool>();
    if (j.contains("zscore_values")) config.zscore_values = j["zscore_values"].get<bool>();
    if (j.contains("strategy")) {
        auto s = strategy_from_name(j["strategy"].get<std::string>());
        if (!s) throw std::runtime_error("config: unknown strategy");
        config.strategy = *s;
    }
}

std::map<std::int64_t, std::vector<Tensor2D>> load_features(const fs::path& path) {
    std::map<std::int64_t, std::vector<Tensor2D>> out;
    for (const json& j : read_jsonl(path)) {
        std::vector<Tensor2D> mats;
        for (const auto& f : j.at("features")) {
            Tensor2D m(f.at("rows").get<std::size_t>(), f.at("cols").get<std::size_t>());
            m.data = f.at("data").get<std::vector<double>>();
            if (m.data.size() != m.rows * m.cols)
                throw std::runtime_error("image features: bad matrix size");
            mats.push_back(std::move(m));
        }
        out[j.at("study_id").get<std::int64_t>()] = std::move(mats);
    }
    return out;
}

int cmd_synth(std::uint64_t seed, std::size_t n, const fs::path& out_dir, int repeat_sentence) {
    SynthConfig config;
    config.findings_repeat_sentence = repeat_sentence;
    // --n 0 still produces the full file set, headers only
    Dataset ds = n == 0 ? Dataset{} : synthesize_dataset(seed, n, config);
    auto errors = validate_dataset(ds);
    if (!errors.empty())
        throw std::runtime_error("synthesized dataset failed validation: " + errors.front());
    write_tables(ds, out_dir);
    std::cout << json{{"patients", n}, {"exams", ds.metadata.size()}, {"out", out_dir.string()}}
              << "\n";
    return 0;
}

int cmd_link(const fs::path& in_dir, const fs::path& out_dir, int history, bool comparison,
             std::uint64_t split_seed, const std::string& splits_file) {
    auto [ds, report] = load_tables(in_dir);
    for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << "\n";
    for (const auto& issue : report.rejected_rows)
        std::cerr << "warning: " << issue.file << " record " << issue.record << ": "
                  << issue.message << "\n";

    std::map<std::int64_t, Split> splits;
    if (!splits_file.empty()) {
        std::vector<std::pair<std::int64_t, Split>> entries;
        for (const json& j : read_jsonl(splits_file)) {
            auto split = split_from_name(j.at("split").get<std::string>());
            if (!split) throw std::runtime_error("splits file: unknown split name");
            entries.emplace_back(j.at("subject_id").get<std::int64_t>(), *split);
        }
        splits = assign_splits(entries);
    } else {
        std::vector<std::int64_t> subjects;
        for (const auto& m : ds.metadata) subjects.push_back(m.subject_id);
        std::sort(subjects.begin(), subjects.end());
        subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
        splits = assign_splits(subjects, split_seed, 0.8, 0.1, 0.1);
    }

    LinkerConfig config{history, comparison};
    LinkResult result = link(ds, config, splits);

    std::string linked;
    for (const LinkedExam& e : result.exams) {
        linked += linked_exam_to_json(e).dump();
        linked += '\n';
    }
    std::string exclusions;
    for (const Exclusion& x : result.exclusions) {
        exclusions += exclusion_to_json(x).dump();
        exclusions += '\n';
    }
    fs::create_directories(out_dir);
    write_file(out_dir / "linked.jsonl", linked);
    write_file(out_dir / "exclusions.jsonl", exclusions);
    std::cout << json{{"linked", result.exams.size()},
                      {"excluded", result.exclusions.size()},
                      {"dropped_events", result.dropped_events}}
              << "\n";
    return 0;
}

int cmd_build_prompts(const fs::path& linked_path, const fs::path& features_path,
                      const fs::path& out_path, const fs::path& dataset_dir,
                      const fs::path& vocab_path, const fs::path& save_vocab_path,
                      RunConfig config) {
    auto features = load_features(features_path);
    std::vector<LinkedExam> exams;
    for (const json& j : read_jsonl(linked_path))
        exams.push_back(linked_exam_from_json(j, features));

    if (exams.empty()) {
        write_file(out_path, "");
        std::cout << json{{"exams", 0},
                          {"mean_prompt_len", 0.0},
                          {"strategy", strategy_name(config.strategy)}}
                  << "\n";
        return 0;
    }

    Vocab vocab;
    if (!vocab_path.empty()) {
        vocab = vocab_from_json(json::parse(read_file(vocab_path)));
    } else if (!dataset_dir.empty()) {
        auto [ds, report] = load_tables(dataset_dir);
        vocab = train_tokenizer(tokenizer_corpus(ds, exams), config.vocab_size);
    } else {
        throw std::runtime_error("build-prompts: need --vocab or --in to obtain a tokenizer");
    }
    if (!save_vocab_path.empty()) write_file(save_vocab_path, vocab_to_json(vocab).dump());

    auto lookups = build_lookups(exams);
    std::size_t feature_dim = 0;
    for (const auto& [study, mats] : features)
        if (!mats.empty()) { feature_dim = mats.front().rows; break; }
    if (feature_dim == 0) throw std::runtime_error("build-prompts: no image features present");

    EmbeddingTables tables = make_embedding_tables(config.seed, config.hidden, config.inner,
                                                   vocab.vocab_size(), lookups, feature_dim);

    auto [lines, stats] = build_prompts(exams, lookups, tables, vocab, config);
    std::string out;
    for (const json& line : lines) {
        out += line.dump();
        out += '\n';
    }
    write_file(out_path, out);
    std::cout << json{{"exams", stats.exams},
                      {"mean_prompt_len", stats.mean_prompt_len},
                      {"strategy", strategy_name(config.strategy)}}
              << "\n";
    return 0;
}

int cmd_arn(const fs::path& candidates_path, int n, const fs::path& vocab_path,
            const fs::path& out_path) {
    std::vector<json> lines = read_jsonl(candidates_path);
    if (lines.empty()) throw std::runtime_error("arn: empty candidates file");

    Vocab vocab = vocab_path.empty() ? Vocab::base()
                                     : vocab_from_json(json::parse(read_file(vocab_path)));

    // several lines for the same study are treated as several reports of one
    // exam: scores average per exam first, then across exams
    std::string out;
    std::map<std::int64_t, std::vector<double>> per_exam;
    std::vector<std::int64_t> exam_order;
    for (const json& j : lines) {
        std::int64_t study_id = j.at("study_id").get<std::int64_t>();
        std::string text = normalize_text(j.at("findings").get<std::string>() + " " +
                                          j.at("impression").get<std::string>());
        auto ids = encode(vocab, text);
        double score = arn(ids, n);
        if (!per_exam.count(study_id)) exam_order.push_back(study_id);
        per_exam[study_id].push_back(score);
        out += json{{"study_id", study_id}, {"arn", score}}.dump();
        out += '\n';
    }
    if (!out_path.empty()) write_file(out_path, out);

    std::vector<double> exam_means;
    for (std::int64_t study_id : exam_order)
        exam_means.push_back(exam_mean_score(per_exam.at(study_id)));
    std::cout << json{{"exams", exam_means.size()}, {"n", n},
                      {"corpus_mean", corpus_mean(exam_means)}}
              << "\n";
    return 0;
}

int cmd_score(const fs::path& candidates_path, const fs::path& references_path,
              const std::string& preset, int n, const fs::path& vocab_path,
              const fs::path& out_path) {
    std::vector<json> cand_lines = read_jsonl(candidates_path);
    if (cand_lines.empty()) throw std::runtime_error("score: empty candidates file");

    std::map<std::int64_t, json> references;
    for (const json& j : read_jsonl(references_path))
        references[j.at("study_id").get<std::int64_t>()] = j;

    RewardConfig config;
    if (preset == "per_section") config = RewardConfig::per_section();
    else if (preset == "per_section_arn") config = RewardConfig::per_section_arn();
    else throw std::runtime_error("score: unknown preset '" + preset + "'");
    config.ngram = n;

    Vocab vocab = vocab_path.empty() ? Vocab::base()
                                     : vocab_from_json(json::parse(read_file(vocab_path)));
    // token-overlap F1 stands in for the external learned metrics; it only
    // exercises the plumbing and is not equivalent to them
    TokenOverlapF1 overlap;
    ArnScorer arn_scorer(vocab, config.ngram);
    RewardModel model(config, &overlap, &overlap, &arn_scorer);

    std::string out;
    std::map<std::int64_t, std::vector<double>> per_exam;
    std::vector<std::int64_t> exam_order;
    for (const json& j : cand_lines) {
        std::int64_t study_id = j.at("study_id").get<std::int64_t>();
        auto ref = references.find(study_id);
        if (ref == references.end())
            throw std::runtime_error("score: study " + std::to_string(study_id) +
                                     " has no reference");
        double reward = model.per_section_reward(
            normalize_text(j.at("findings").get<std::string>()),
            normalize_text(ref->second.at("findings").get<std::string>()),
            normalize_text(j.at("impression").get<std::string>()),
            normalize_text(ref->second.at("impression").get<std::string>()));
        if (!per_exam.count(study_id)) exam_order.push_back(study_id);
        per_exam[study_id].push_back(reward);
        out += json{{"study_id", study_id}, {"reward", reward}}.dump();
        out += '\n';
    }
    if (!out_path.empty()) write_file(out_path, out);

    std::vector<double> exam_means;
    for (std::int64_t study_id : exam_order)
        exam_means.push_back(exam_mean_score(per_exam.at(study_id)));
    std::cout << json{{"exams", exam_means.size()},
                      {"preset", preset},
                      {"corpus_mean", corpus_mean(exam_means)}}
              << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int n_seeds, bool corrupt) {
    const double step = 1e-4;
    const double tolerance = 1e-4;
    bool all_pass = true;

    struct Probe {
        std::string name;
        double max_rel_err = 0.0;
    };
    std::vector<Probe> probes;
    probes.push_back({"time_delta_fnn"});
    for (TableId table : kAllTables)
        probes.push_back({std::string("table_fnn.") + table_name(table)});
    probes.push_back({"image_projection"});

    for (int s = 0; s < n_seeds; ++s) {
        std::uint64_t run_seed = mix_seed(seed, static_cast<std::uint64_t>(s));
        std::size_t probe_idx = 0;

        // time-delta FNN on mapped deltas in (0, 1]
        {
            Fnn fnn = make_fnn(mix_seed(run_seed, 1), 1, 16, 12);
            Rng rng(mix_seed(run_seed, 2));
            Tensor2D x(4, 1);
            for (double& v : x.data) v = map_time_delta(rng.uniform(0.0, 200.0));
            Tensor2D upstream(4, 12);
            for (double& v : upstream.data) v = rng.uniform(-1.0, 1.0);
            FnnGradients g = fnn_backward(fnn, x, upstream);
            if (corrupt) g.w1.data[0] += 0.05;
            auto loss = [&] { return weighted_sum(fnn_forward(fnn, x), upstream); };
            double err = std::max({max_relative_error(g.w1, finite_diff(fnn.w1, loss, step)),
                                   max_relative_error(g.w2, finite_diff(fnn.w2, loss, step)),
                                   max_relative_error(g.x, finite_diff(x, loss, step))});
            probes[probe_idx].max_rel_err = std::max(probes[probe_idx].max_rel_err, err);
        }
        ++probe_idx;

        // one FNN per table at its own lookup width
        for (TableId table : kAllTables) {
            const TableSpec& spec = builtin_table_spec(table);
            std::size_t width = spec.names_of(ColumnKind::value).size() +
                                spec.names_of(ColumnKind::category).size() * 2 + 1;
            Fnn fnn = make_fnn(mix_seed(run_seed, 10 + static_cast<int>(table)), width, 12, 8);
            Rng rng(mix_seed(run_seed, 20 + static_cast<int>(table)));
            Tensor2D x(3, width);
            for (double& v : x.data) v = rng.bernoulli(0.3) ? rng.uniform(-2.0, 2.0) : 0.0;
            Tensor2D upstream(3, 8);
            for (double& v : upstream.data) v = rng.uniform(-1.0, 1.0);
            FnnGradients g = fnn_backward(fnn, x, upstream);
            auto loss = [&] { return weighted_sum(fnn_forward(fnn, x), upstream); };
            double err = std::max(max_relative_error(g.w1, finite_diff(fnn.w1, loss, step)),
                                  max_relative_error(g.w2, finite_diff(fnn.w2, loss, step)));
            probes[probe_idx].max_rel_err = std::max(probes[probe_idx].max_rel_err, err);
            ++probe_idx;
        }

        // image projection is linear: d/dP sum(G ⊙ M^T P) = M G
        {
            Tensor2D projection = init_params(mix_seed(run_seed, 40), 10, 12);
            Rng rng(mix_seed(run_seed, 41));
            Tensor2D features(10, 5);
            for (double& v : features.data) v = rng.uniform(-1.0, 1.0);
            Tensor2D upstream(5, 12);
            for (double& v : upstream.data) v = rng.uniform(-1.0, 1.0);
            Tensor2D analytic = image_projection_gradient(features, upstream);
            auto loss = [&] {
                return weighted_sum(project_image_tokens(features, projection), upstream);
            };
            double err = max_relative_error(analytic, finite_diff(projection, loss, step));
            probes[probe_idx].max_rel_err = std::max(probes[probe_idx].max_rel_err, err);
        }
    }

    for (const Probe& probe : probes) {
        bool pass = probe.max_rel_err <= tolerance;
        all_pass = all_pass && pass;
        std::cout << json{{"op", probe.name},
                          {"max_rel_err", probe.max_rel_err},
                          {"status", pass ? "pass" : "fail"}}
                  << "\n";
    }
    std::cout << json{{"seeds", n_seeds}, {"tolerance", tolerance},
                      {"status", all_pass ? "pass" : "fail"}}
              << "\n";
    return all_pass ? 0 : 1;
}

int cmd_mask_dump(std::size_t prompt_len, std::size_t report_len) {
    BoolMat mask = build_attention_mask(prompt_len, report_len);
    for (std::size_t i = 0; i < mask.rows; ++i) {
        std::string row;
        for (std::size_t j = 0; j < mask.cols; ++j) row += mask.at(i, j) ? '1' : '.';
        std::cout << row << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"promptforge: patient-record prompt embedding pipeline"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::size_t n_patients = 100;
    std::string out_path;
    std::string in_path;
    int repeat_sentence = 0;

    auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
    synth->add_option("--seed", seed);
    synth->add_option("--n", n_patients, "number of patients (one linked exam each)");
    synth->add_option("--out", out_path)->required();
    synth->add_option("--repeat-sentence", repeat_sentence,
                      "extra copies of one findings sentence (ARN fixtures)");

    int history = 0;
    bool comparison = false;
    std::string splits_file;
    auto* link_cmd = app.add_subcommand("link", "join exams to ED stays and filter events");
    link_cmd->add_option("--in", in_path)->required();
    link_cmd->add_option("--out", out_path)->required();
    link_cmd->add_option("--history", history, "prior exams per exam (h)");
    link_cmd->add_flag("--comparison", comparison, "include comparison section when h >= 1");
    link_cmd->add_option("--seed", seed, "seed for fraction-based split assignment");
    link_cmd->add_option("--splits", splits_file, "jsonl {subject_id, split} overriding fractions");

    std::string linked_path, features_path, vocab_path, save_vocab_path, config_path, strategy_name_arg;
    RunConfig run;
    auto* build = app.add_subcommand("build-prompts", "assemble prompt embeddings per exam");
    build->add_option("--linked", linked_path)->required();
    build->add_option("--features", features_path)->required();
    build->add_option("--out", out_path)->required();
    build->add_option("--in", in_path, "dataset dir (tokenizer corpus source)");
    build->add_option("--vocab", vocab_path, "pre-trained vocab json");
    build->add_option("--save-vocab", save_vocab_path);
    build->add_option("--config", config_path, "RunConfig json");
    build->add_option("--strategy", strategy_name_arg, "grouped | separate | values_to_text");
    build->add_option("--history", history, "h (must match the linked file)");
    build->add_flag("--comparison", comparison, "embed the comparison section when h >= 1");
    build->add_option("--seed", seed);
    build->add_flag("--dump-embeddings", run.dump_embeddings);
    build->add_flag("--zscore", run.zscore_values, "z-score value cells with training statistics");
    build->add_option("--hidden", run.hidden);
    build->add_option("--inner", run.inner);
    build->add_option("--vocab-size", run.vocab_size);
    build->add_option("--max-positions", run.max_positions);
    build->add_option("--report-len", run.report_len);

    int ngram = 3;
    std::string candidates_path;
    auto* arn_cmd = app.add_subcommand("arn", "absence-of-repeated-n-grams scores");
    arn_cmd->add_option("--candidates", candidates_path)->required();
    arn_cmd->add_option("--n-gram", ngram);
    arn_cmd->add_option("--vocab", vocab_path, "vocab json (byte-level fallback when absent)");
    arn_cmd->add_option("--out", out_path);

    std::string references_path, preset = "per_section";
    auto* score = app.add_subcommand("score", "composite per-section rewards for candidates");
    score->add_option("--candidates", candidates_path)->required();
    score->add_option("--references", references_path)->required();
    score->add_option("--preset", preset, "per_section | per_section_arn");
    score->add_option("--n-gram", ngram);
    score->add_option("--vocab", vocab_path);
    score->add_option("--out", out_path);

    int n_seeds = 20;
    bool corrupt = false;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference checks on trainable ops");
    grad->add_option("--seed", seed);
    grad->add_option("--seeds", n_seeds, "number of random restarts");
    grad->add_flag("--corrupt", corrupt, "perturb one analytic gradient (must fail)");

    std::size_t mask_prompt = 0, mask_report = 0;
    auto* mask = app.add_subcommand("mask-dump", "print the hybrid attention mask");
    mask->add_option("--prompt", mask_prompt)->required();
    mask->add_option("--report", mask_report)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(seed, n_patients, out_path, repeat_sentence);
        if (link_cmd->parsed())
            return cmd_link(in_path, out_path, history, comparison, seed, splits_file);
        if (build->parsed()) {
            if (!config_path.empty()) apply_config_file(run, config_path);
            if (!strategy_name_arg.empty()) {
                auto s = strategy_from_name(strategy_name_arg);
                if (!s) throw std::runtime_error("unknown strategy: " + strategy_name_arg);
                run.strategy = *s;
            }
            if (build->count("--seed")) run.seed = seed;
            if (build->count("--history")) run.history_size = history;
            if (build->count("--comparison")) run.include_comparison = comparison;
            return cmd_build_prompts(linked_path, features_path, out_path, in_path, vocab_path,
                                     save_vocab_path, run);
        }
        if (arn_cmd->parsed()) return cmd_arn(candidates_path, ngram, vocab_path, out_path);
        if (score->parsed())
            return cmd_score(candidates_path, references_path, preset, ngram, vocab_path, out_path);
        if (grad->parsed()) return cmd_gradcheck(seed, n_seeds, corrupt);
        if (mask->parsed()) return cmd_mask_dump(mask_prompt, mask_report);
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}} << "\n";
        return 1;
    }
    return 0;
}
