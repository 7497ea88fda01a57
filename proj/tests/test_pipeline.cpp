#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "promptforge/pipeline.hpp"

using namespace pforge;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    Dataset dataset;
    std::vector<LinkedExam> exams;
    std::map<TableId, LookupTable> lookups;
    Vocab vocab;
    EmbeddingTables tables;
    RunConfig config;
};

Fixture make_fixture(int history = 1) {
    Fixture f;
    f.dataset = synthesize_dataset(5, 16);

    std::vector<std::int64_t> subjects;
    for (const auto& s : f.dataset.stays) subjects.push_back(s.subject_id);
    auto splits = assign_splits(subjects, 2, 0.75, 0.125, 0.125);

    LinkerConfig lc;
    lc.history_size = history;
    lc.include_comparison = history >= 1;
    f.exams = link(f.dataset, lc, splits).exams;

    f.config.seed = 9;
    f.config.hidden = 12;
    f.config.inner = 16;
    f.config.vocab_size = 300;
    f.config.history_size = history;
    f.config.include_comparison = history >= 1;

    f.vocab = train_tokenizer(tokenizer_corpus(f.dataset, f.exams), f.config.vocab_size);
    f.lookups = build_lookups(f.exams);
    f.tables = make_embedding_tables(f.config.seed, f.config.hidden, f.config.inner,
                                     f.vocab.vocab_size(), f.lookups, 16);
    return f;
}

LinkedExam bare_exam(std::size_t n_images = 2) {
    LinkedExam e;
    e.exam.study_id = 900;
    e.exam.subject_id = 9;
    e.exam.exam_time = 500000;
    for (std::size_t i = 0; i < n_images; ++i) e.exam.image_features.push_back(Tensor2D(16, 4, 0.1));
    e.exam.report = {900, "FINDINGS: Clear.\nIMPRESSION: Normal.\n"};
    e.stay = {9, 90, 499000, 501000, "", "", ""}; // no categories at all
    e.sections.findings = "Clear.";
    e.sections.impression = "Normal.";
    e.split = Split::train;
    return e;
}

} // namespace

TEST_CASE("tokenizer corpus follows the published field rules") {
    Dataset ds;
    ds.triage.push_back({10, {}, {}, {}, {}, {}, {}, {}, "6-9", "CHEST PAIN"});
    ds.vitalsign.push_back({10, 0, {}, {}, {}, {}, {}, {}, "Normal Sinus Rhythm", "3"});
    ds.medrecon.push_back({10, "furosemide", "", "", "", ""});

    auto add_report = [&ds](std::int64_t study, std::int64_t subject, const std::string& text) {
        MetadataRow m;
        m.study_id = study;
        m.subject_id = subject;
        ds.metadata.push_back(m);
        ds.reports.push_back({study, text});
    };
    add_report(900, 9,
               "INDICATION: train indication\nHISTORY: train history\n"
               "COMPARISON: train comparison\nFINDINGS: train findings\n"
               "IMPRESSION: train impression\n");
    add_report(901, 9, "FINDINGS: train prior findings\n"); // prior-pool exam, same subject
    add_report(950, 50, "FINDINGS: test findings\nIMPRESSION: test impression\n");

    LinkedExam train = bare_exam();
    train.exam.study_id = 900;
    train.exam.subject_id = 9;
    train.split = Split::train;

    LinkedExam test = bare_exam();
    test.exam.study_id = 950;
    test.exam.subject_id = 50;
    test.split = Split::test;

    auto corpus = tokenizer_corpus(ds, {train, test});
    auto contains = [&](const std::string& s) {
        return std::find(corpus.begin(), corpus.end(), s) != corpus.end();
    };
    CHECK(contains("train findings"));
    CHECK(contains("train impression"));
    CHECK(contains("train indication"));
    CHECK(contains("train history"));
    CHECK(contains("train prior findings"));      // the training set is wider than the linked exams
    CHECK_FALSE(contains("train comparison"));    // comparison never enters the corpus
    CHECK_FALSE(contains("test findings"));       // non-train subjects stay out
    CHECK_FALSE(contains("test impression"));
    CHECK(contains("6-9"));
    CHECK(contains("CHEST PAIN"));
    CHECK(contains("furosemide"));
    CHECK(contains("3")); // vitalsign pain
    CHECK_FALSE(contains("Normal Sinus Rhythm")); // categories are not text
}

TEST_CASE("lookups are built from the training split only") {
    LinkedExam train = bare_exam();
    train.stay.gender = "F";
    train.stay.race = "WHITE";
    LinkedExam test = bare_exam();
    test.stay.gender = "X-ONLY-IN-TEST";
    test.split = Split::test;

    auto lookups = build_lookups({train, test});
    const LookupTable& lut = lookups.at(TableId::ed_stay);
    CHECK(lut.category_index.count({"gender", "F"}) == 1);
    CHECK(lut.category_index.count({"gender", "X-ONLY-IN-TEST"}) == 0);
}

TEST_CASE("an exam with nothing but images yields an images-only prompt") {
    Fixture f = make_fixture(0);
    LinkedExam e = bare_exam(2);
    Prompt p = build_prompt(e, f.lookups, f.tables, f.vocab, f.config);
    CHECK(p.prompt_len == 8); // 2 images x 4 tokens
    for (const auto& item : p.ordered_items) {
        CHECK(item.source == Source::images);
        CHECK(item.time_delta_hours == 0.0);
    }
}

TEST_CASE("strategies order prompt lengths as grouped <= separate <= values_to_text") {
    Fixture f = make_fixture(0);
    REQUIRE_FALSE(f.exams.empty());
    // pick the exam with the most table data
    const LinkedExam* best = &f.exams[0];
    for (const auto& e : f.exams)
        if (e.events.medrecon.size() + e.events.vitalsign.size() >
            best->events.medrecon.size() + best->events.vitalsign.size())
            best = &e;

    std::map<Strategy, std::size_t> lens;
    for (Strategy s : {Strategy::grouped, Strategy::separate, Strategy::values_to_text}) {
        RunConfig config = f.config;
        config.strategy = s;
        lens[s] = build_prompt(*best, f.lookups, f.tables, f.vocab, config).prompt_len;
    }
    CHECK(lens[Strategy::grouped] <= lens[Strategy::separate]);
    CHECK(lens[Strategy::separate] <= lens[Strategy::values_to_text]);
}

TEST_CASE("priors strictly lengthen the prompt") {
    Fixture with_priors = make_fixture(2);
    const LinkedExam* exam_with_priors = nullptr;
    for (const auto& e : with_priors.exams)
        if (!e.priors.empty()) {
            exam_with_priors = &e;
            break;
        }
    REQUIRE(exam_with_priors != nullptr);

    RunConfig h0 = with_priors.config;
    h0.history_size = 0;
    h0.include_comparison = false;
    LinkedExam stripped = *exam_with_priors;
    stripped.priors.clear();

    std::size_t len_h0 =
        build_prompt(stripped, with_priors.lookups, with_priors.tables, with_priors.vocab, h0)
            .prompt_len;
    std::size_t len_h2 = build_prompt(*exam_with_priors, with_priors.lookups, with_priors.tables,
                                      with_priors.vocab, with_priors.config)
                             .prompt_len;
    CHECK(len_h2 > len_h0);
}

TEST_CASE("prior items carry prior sources and positive deltas") {
    Fixture f = make_fixture(2);
    const LinkedExam* exam = nullptr;
    for (const auto& e : f.exams)
        if (!e.priors.empty()) {
            exam = &e;
            break;
        }
    REQUIRE(exam != nullptr);
    Prompt p = build_prompt(*exam, f.lookups, f.tables, f.vocab, f.config);
    bool saw_prior_image = false;
    for (const auto& item : p.ordered_items) {
        if (item.source == Source::prior_images || item.source == Source::prior_findings ||
            item.source == Source::prior_impression) {
            CHECK(item.time_delta_hours > 0.0);
            saw_prior_image = saw_prior_image || item.source == Source::prior_images;
        }
        if (item.source == Source::images || item.source == Source::indication ||
            item.source == Source::history)
            CHECK(item.time_delta_hours == 0.0);
    }
    CHECK(saw_prior_image);
}

TEST_CASE("comparison section items appear only when h >= 1 and enabled") {
    Fixture f = make_fixture(1);
    const LinkedExam* exam = nullptr;
    for (const auto& e : f.exams)
        if (e.sections.comparison) {
            exam = &e;
            break;
        }
    REQUIRE(exam != nullptr);

    auto count_comparison = [&](const RunConfig& config) {
        Prompt p = build_prompt(*exam, f.lookups, f.tables, f.vocab, config);
        std::size_t n = 0;
        for (const auto& item : p.ordered_items)
            if (item.source == Source::comparison) ++n;
        return n;
    };

    RunConfig on = f.config; // h=1, include_comparison=true
    CHECK(count_comparison(on) > 0);

    RunConfig off = f.config;
    off.include_comparison = false;
    CHECK(count_comparison(off) == 0);

    RunConfig h0 = f.config;
    h0.history_size = 0;
    CHECK(count_comparison(h0) == 0);
}

TEST_CASE("build_prompts reports the mean prompt length in fixed exam order") {
    Fixture f = make_fixture(0);
    auto [lines, stats] = build_prompts(f.exams, f.lookups, f.tables, f.vocab, f.config);
    REQUIRE(lines.size() == f.exams.size());
    CHECK(stats.exams == f.exams.size());

    double total = 0.0;
    std::vector<std::int64_t> ids;
    for (const auto& line : lines) {
        total += line.at("prompt_len").get<double>();
        ids.push_back(line.at("study_id").get<std::int64_t>());
    }
    CHECK(stats.mean_prompt_len ==
          doctest::Approx(total / static_cast<double>(lines.size())).epsilon(1e-12));
    CHECK(std::is_sorted(ids.begin(), ids.end()));
}

TEST_CASE("thread cap does not change the output") {
    Fixture f = make_fixture(0);
    setenv("PROMPTFORGE_THREADS", "1", 1);
    auto [serial_lines, serial_stats] = build_prompts(f.exams, f.lookups, f.tables, f.vocab, f.config);
    setenv("PROMPTFORGE_THREADS", "4", 1);
    auto [parallel_lines, parallel_stats] =
        build_prompts(f.exams, f.lookups, f.tables, f.vocab, f.config);
    unsetenv("PROMPTFORGE_THREADS");
    REQUIRE(serial_lines.size() == parallel_lines.size());
    for (std::size_t i = 0; i < serial_lines.size(); ++i)
        CHECK(serial_lines[i].dump() == parallel_lines[i].dump());
    CHECK(serial_stats.mean_prompt_len == parallel_stats.mean_prompt_len);
}

TEST_CASE("prompt json carries positions, sources and a run-length mask") {
    Fixture f = make_fixture(0);
    LinkedExam e = bare_exam(1);
    RunConfig config = f.config;
    config.report_len = 3;
    Prompt p = build_prompt(e, f.lookups, f.tables, f.vocab, config);
    nlohmann::json j = prompt_to_json(e.exam.study_id, p, false);

    CHECK(j.at("study_id") == 900);
    CHECK(j.at("prompt_len") == p.prompt_len);
    CHECK(j.at("positions").size() == p.prompt_len);
    CHECK(j.at("items").size() == p.prompt_len);
    CHECK_FALSE(j.at("items")[0].contains("embedding"));
    REQUIRE(j.at("mask_rle").size() == p.prompt_len + 3);
    // prompt rows allow the prompt block, report row t allows p + t + 1
    for (std::size_t i = 0; i < p.prompt_len; ++i) {
        CHECK(j.at("mask_rle")[i][0] == p.prompt_len);
        CHECK(j.at("mask_rle")[i][1] == 3);
    }
    for (std::size_t t = 0; t < 3; ++t)
        CHECK(j.at("mask_rle")[p.prompt_len + t][0] == p.prompt_len + t + 1);

    nlohmann::json with_emb = prompt_to_json(e.exam.study_id, p, true);
    CHECK(with_emb.at("items")[0].at("embedding").size() == config.hidden);
}

namespace {

// One exam touching every stream, used to pin the dump structure.
LinkedExam golden_exam() {
    const Minutes t0 = 1000000;
    LinkedExam e;
    e.exam.study_id = 500;
    e.exam.subject_id = 1;
    e.exam.exam_time = t0 + 120;
    e.exam.image_features = {Tensor2D(3, 2, 0.25), Tensor2D(3, 2, -0.5)};
    e.exam.report = {500, "unused"};
    e.stay = {1, 10, t0, t0 + 600, "F", "WHITE", "AMBULANCE"};
    e.sections.findings = "Clear.";
    e.sections.impression = "Normal.";
    e.sections.indication = "Status post new central line placement.";
    e.sections.comparison = "Prior study.";
    e.split = Split::train;

    TriageRow t;
    t.stay_id = 10;
    t.temperature = 100.6;
    t.heartrate = 93.0;
    t.resprate = 16.0;
    t.o2sat = 94.0;
    t.sbp = 110.0;
    t.dbp = 56.0;
    t.acuity = 2.0;
    t.pain = "6-9";
    t.chiefcomplaint = "BILATERAL FOOT PAIN";
    e.events.triage.push_back(t);

    VitalSignRow v1;
    v1.stay_id = 10;
    v1.charttime = t0 + 60;
    v1.heartrate = 85.0;
    v1.rhythm = "Normal Sinus Rhythm";
    v1.pain = "3";
    e.events.vitalsign.push_back(v1);
    VitalSignRow v2;
    v2.stay_id = 10;
    v2.charttime = t0 + 90;
    v2.temperature = 98.2;
    e.events.vitalsign.push_back(v2);

    e.events.medrecon.push_back({10, "furosemide", "1234", "55555", "1", "321"});
    e.events.pyxis.push_back({10, t0 + 100, "1", "acetaminophen", "1", "4321"});

    MetadataRow m;
    m.study_id = 500;
    m.subject_id = 1;
    m.study_date = ((t0 + 120) / 1440) * 1440;
    m.study_time = static_cast<int>((t0 + 120) % 1440);
    m.performed_procedure_step_description = "CHEST (PA AND LAT)";
    m.view_position = "PA";
    m.procedure_code_meaning = "Chest X-Ray";
    m.view_code_meaning = "postero-anterior";
    m.patient_orientation_code_meaning = "Erect";
    e.events.metadata.push_back(m);

    PriorExam prior;
    prior.exam.study_id = 400;
    prior.exam.subject_id = 1;
    prior.exam.exam_time = t0 + 120 - 24 * 60;
    prior.exam.image_features = {Tensor2D(3, 2, 0.75)};
    prior.sections.findings = "Stable.";
    prior.sections.impression = "No change.";
    prior.delta_hours = 24.0;
    e.priors.push_back(prior);
    return e;
}

} // namespace

TEST_CASE("prompt dump structure matches the committed golden files") {
    LinkedExam e = golden_exam();
    auto lookups = build_lookups({e});
    Vocab vocab = Vocab::base();
    RunConfig config;
    config.seed = 1;
    config.hidden = 8;
    config.inner = 8;
    config.history_size = 1;
    config.include_comparison = true;
    config.report_len = 4;
    EmbeddingTables tables =
        make_embedding_tables(config.seed, config.hidden, config.inner, vocab.vocab_size(),
                              lookups, 3);

    for (Strategy strategy : {Strategy::grouped, Strategy::separate, Strategy::values_to_text}) {
        RunConfig per = config;
        per.strategy = strategy;
        Prompt p = build_prompt(e, lookups, tables, vocab, per);
        std::string dump = prompt_to_json(e.exam.study_id, p, false).dump() + "\n";

        fs::path golden = fs::path(PF_GOLDEN_DIR) /
                          (std::string("prompt_") + strategy_name(strategy) + ".json");
        if (std::getenv("PF_REGEN_GOLDEN")) {
            std::ofstream out(golden, std::ios::binary | std::ios::trunc);
            out << dump;
            continue;
        }
        std::ifstream in(golden, std::ios::binary);
        REQUIRE_MESSAGE(in.good(), "missing golden file " << golden.string());
        std::stringstream buf;
        buf << in.rdbuf();
        CHECK_MESSAGE(dump == buf.str(), "structure drifted for strategy "
                                             << strategy_name(strategy));
    }

    // hand-derived inventory for the grouped strategy
    RunConfig grouped = config;
    grouped.strategy = Strategy::grouped;
    Prompt p = build_prompt(e, lookups, tables, vocab, grouped);
    CHECK(p.prompt_len == 114);
    CHECK(p.ordered_items.front().source == Source::prior_images);
    CHECK(p.ordered_items.front().time_delta_hours == 24.0);
    CHECK(p.ordered_items.back().source == Source::comparison);
    CHECK(p.ordered_items.back().time_delta_hours == 0.0);
}

TEST_CASE("prompt building is deterministic end to end") {
    Fixture f = make_fixture(1);
    REQUIRE_FALSE(f.exams.empty());
    Prompt a = build_prompt(f.exams[0], f.lookups, f.tables, f.vocab, f.config);
    Prompt b = build_prompt(f.exams[0], f.lookups, f.tables, f.vocab, f.config);
    CHECK(a.embeddings.data == b.embeddings.data);
    CHECK(a.positions == b.positions);
}
