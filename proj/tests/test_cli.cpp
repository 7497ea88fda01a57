#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptforge/rewards.hpp"
#include "promptforge/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "pforge_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

RunResult run(const std::string& args) {
    static int counter = 0;
    fs::path out = work_dir() / ("stdout_" + std::to_string(counter) + ".txt");
    fs::path err = work_dir() / ("stderr_" + std::to_string(counter) + ".txt");
    ++counter;
    std::string cmd = std::string(PROMPTFORGE_CLI_PATH) + " " + args + " > " + out.string() +
                      " 2> " + err.string();
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::vector<json> read_jsonl(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<json> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(json::parse(line));
    return lines;
}

void write_file(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
}

// dataset with one stay, one exam at 12:00, vitals before and after the exam
void write_dual_fixture(const fs::path& dir, bool second_stay) {
    std::string stays =
        "subject_id,stay_id,intime,outtime,gender,race,arrival_transport\n"
        "1,10,2150-03-01 10:00,2150-03-02 04:00,F,WHITE,AMBULANCE\n";
    if (second_stay) stays += "1,11,2150-03-01 11:00,2150-03-01 20:00,F,WHITE,WALK IN\n";
    write_file(dir / "edstays.csv", stays);
    std::string triage =
        "stay_id,temperature,heartrate,resprate,o2sat,sbp,dbp,pain,acuity,chiefcomplaint\n"
        "10,98.6,80,16,98,120,70,0,2,COUGH\n";
    if (second_stay) triage += "11,98.6,80,16,98,120,70,0,2,COUGH\n";
    write_file(dir / "triage.csv", triage);
    write_file(dir / "vitalsign.csv",
               "stay_id,charttime,temperature,heartrate,resprate,o2sat,sbp,dbp,rhythm,pain\n"
               "10,2150-03-01 11:00,98.2,85,18,97,120,70,Normal Sinus Rhythm,0\n"
               "10,2150-03-01 14:00,98.4,90,20,95,125,72,Sinus Tachycardia,2\n");
    write_file(dir / "medrecon.csv", "stay_id,name,gsn,ndc,etc_rn,etccode\n");
    write_file(dir / "pyxis.csv", "stay_id,charttime,med_rn,name,gsn_rn,gsn\n");
    write_file(dir / "metadata.csv",
               "study_id,subject_id,study_date,study_time,performed_procedure_step_description,"
               "view_position,procedure_code_meaning,view_code_meaning,"
               "patient_orientation_code_meaning\n"
               "500,1,2150-03-01,12:00,CHEST,PA,Chest X-Ray,pa,Erect\n");
    write_file(dir / "reports.csv",
               "study_id,text\n"
               "500,\"FINDINGS: Clear.\nIMPRESSION: Normal.\"\n");
    write_file(dir / "image_features.jsonl",
               "{\"study_id\":500,\"features\":[{\"rows\":4,\"cols\":2,"
               "\"data\":[0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8]}]}\n");
}

} // namespace

TEST_CASE("synth writes the full file set deterministically") {
    fs::path a = work_dir() / "synth_a";
    fs::path b = work_dir() / "synth_b";
    CHECK(run("synth --seed 7 --n 30 --out " + a.string()).exit_code == 0);
    CHECK(run("synth --seed 7 --n 30 --out " + b.string()).exit_code == 0);

    const std::vector<std::string> files = {"edstays.csv", "triage.csv",   "vitalsign.csv",
                                            "medrecon.csv", "pyxis.csv",    "metadata.csv",
                                            "reports.csv",  "image_features.jsonl"};
    for (const auto& name : files) {
        CHECK(fs::exists(a / name));
        CHECK(slurp(a / name) == slurp(b / name));
    }

    fs::path c = work_dir() / "synth_c";
    CHECK(run("synth --seed 8 --n 30 --out " + c.string()).exit_code == 0);
    CHECK(slurp(a / "triage.csv") != slurp(c / "triage.csv"));
}

TEST_CASE("synth with n = 0 emits headers only") {
    fs::path dir = work_dir() / "synth_zero";
    CHECK(run("synth --seed 1 --n 0 --out " + dir.string()).exit_code == 0);
    std::string triage = slurp(dir / "triage.csv");
    CHECK(std::count(triage.begin(), triage.end(), '\n') == 1);
    CHECK(slurp(dir / "image_features.jsonl").empty());
}

TEST_CASE("link drops post-exam events and keeps earlier ones") {
    fs::path dir = work_dir() / "fixture_single";
    write_dual_fixture(dir, false);
    fs::path out = work_dir() / "linked_single";
    RunResult r = run("link --in " + dir.string() + " --out " + out.string());
    CHECK(r.exit_code == 0);

    auto linked = read_jsonl(out / "linked.jsonl");
    REQUIRE(linked.size() == 1);
    auto vitals = linked[0].at("events").at("vitalsign");
    REQUIRE(vitals.size() == 1); // the 14:00 row is after the 12:00 exam
    CHECK(vitals[0].at("charttime") == "2150-03-01 11:00");
    json summary = json::parse(r.out);
    CHECK(summary.at("dropped_events") == 1);
}

TEST_CASE("link excludes dual-stay exams with a reason") {
    fs::path dir = work_dir() / "fixture_dual";
    write_dual_fixture(dir, true);
    fs::path out = work_dir() / "linked_dual";
    CHECK(run("link --in " + dir.string() + " --out " + out.string()).exit_code == 0);
    CHECK(read_jsonl(out / "linked.jsonl").empty());
    auto exclusions = read_jsonl(out / "exclusions.jsonl");
    REQUIRE(exclusions.size() == 1);
    CHECK(exclusions[0].at("study_id") == 500);
    CHECK(exclusions[0].at("reason") == "ambiguous-stay");
}

TEST_CASE("link on an empty dataset yields empty outputs") {
    fs::path dir = work_dir() / "synth_zero2";
    CHECK(run("synth --seed 1 --n 0 --out " + dir.string()).exit_code == 0);
    fs::path out = work_dir() / "linked_zero";
    CHECK(run("link --in " + dir.string() + " --out " + out.string()).exit_code == 0);
    CHECK(read_jsonl(out / "linked.jsonl").empty());
    CHECK(read_jsonl(out / "exclusions.jsonl").empty());

    // empty prompts from empty linked input, without error
    fs::path prompts = work_dir() / "prompts_zero.jsonl";
    RunResult bp = run("build-prompts --linked " + (out / "linked.jsonl").string() +
                       " --features " + (dir / "image_features.jsonl").string() + " --out " +
                       prompts.string() + " --vocab-size 257 --hidden 4 --inner 4 --in " +
                       dir.string());
    REQUIRE(bp.exit_code == 0);
    CHECK(json::parse(bp.out).at("exams") == 0);
    CHECK(read_jsonl(prompts).empty());
}

TEST_CASE("build-prompts reports the strategy and mean prompt length") {
    fs::path data = work_dir() / "synth_bp";
    CHECK(run("synth --seed 3 --n 12 --out " + data.string()).exit_code == 0);
    fs::path linked = work_dir() / "linked_bp";
    CHECK(run("link --in " + data.string() + " --out " + linked.string()).exit_code == 0);

    auto build = [&](const std::string& strategy) {
        fs::path out = work_dir() / ("prompts_" + strategy + ".jsonl");
        RunResult r = run("build-prompts --linked " + (linked / "linked.jsonl").string() +
                          " --features " + (data / "image_features.jsonl").string() + " --in " +
                          data.string() + " --out " + out.string() +
                          " --strategy " + strategy +
                          " --hidden 8 --inner 12 --vocab-size 280 --seed 5");
        REQUIRE(r.exit_code == 0);
        return json::parse(r.out);
    };

    json grouped = build("grouped");
    json separate = build("separate");
    json text = build("values_to_text");
    CHECK(grouped.at("strategy") == "grouped");
    CHECK(grouped.at("mean_prompt_len").get<double>() <=
          separate.at("mean_prompt_len").get<double>());
    CHECK(separate.at("mean_prompt_len").get<double>() <=
          text.at("mean_prompt_len").get<double>());

    auto lines = read_jsonl(work_dir() / "prompts_grouped.jsonl");
    CHECK_FALSE(lines.empty());
    CHECK(lines[0].contains("prompt_len"));
    CHECK(lines[0].contains("mask_rle"));

    // rerunning the same command reproduces the output byte for byte
    fs::path again = work_dir() / "prompts_again.jsonl";
    RunResult r = run("build-prompts --linked " + (linked / "linked.jsonl").string() +
                      " --features " + (data / "image_features.jsonl").string() + " --in " +
                      data.string() + " --out " + again.string() +
                      " --strategy grouped --hidden 8 --inner 12 --vocab-size 280 --seed 5");
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(again) == slurp(work_dir() / "prompts_grouped.jsonl"));
}

TEST_CASE("arn command scores candidates and prints the corpus mean") {
    fs::path cand = work_dir() / "candidates.jsonl";
    write_file(cand,
               "{\"study_id\":1,\"findings\":\"w x y z\",\"impression\":\"q r s\"}\n"
               "{\"study_id\":2,\"findings\":\"rep rep rep rep\",\"impression\":\"rep rep\"}\n");
    fs::path scores = work_dir() / "scores.jsonl";
    RunResult r = run("arn --candidates " + cand.string() + " --n-gram 3 --out " + scores.string());
    REQUIRE(r.exit_code == 0);

    auto lines = read_jsonl(scores);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].at("arn").get<double>() == 1.0);

    // the second line must match the library on the same normalized text
    pforge::Vocab vocab = pforge::Vocab::base();
    auto ids = pforge::encode(vocab, "rep rep rep rep rep rep");
    CHECK(lines[1].at("arn").get<double>() == doctest::Approx(pforge::arn(ids, 3)).epsilon(1e-15));

    json summary = json::parse(r.out);
    CHECK(summary.at("exams") == 2);
    double expected_mean = (1.0 + pforge::arn(ids, 3)) / 2.0;
    CHECK(summary.at("corpus_mean").get<double>() == doctest::Approx(expected_mean).epsilon(1e-12));
}

TEST_CASE("arn command fails on an empty file with a parseable error") {
    fs::path cand = work_dir() / "empty_candidates.jsonl";
    write_file(cand, "");
    RunResult r = run("arn --candidates " + cand.string());
    CHECK(r.exit_code != 0);
    json err = json::parse(r.err);
    CHECK(err.contains("error"));
}

TEST_CASE("score command applies the reward presets over candidate/reference pairs") {
    fs::path cand = work_dir() / "score_candidates.jsonl";
    fs::path ref = work_dir() / "score_references.jsonl";
    write_file(cand, "{\"study_id\":1,\"findings\":\"a b c\",\"impression\":\"x y\"}\n");
    write_file(ref, "{\"study_id\":1,\"findings\":\"a b d\",\"impression\":\"x y\"}\n");

    // token-overlap findings F1 = 2/3, impression = 1:
    // per_section: 0.75*(0.5*2/3 + 0.5*2/3) + 0.25*1 = 0.75
    fs::path scores = work_dir() / "score_out.jsonl";
    RunResult r = run("score --candidates " + cand.string() + " --references " + ref.string() +
                      " --preset per_section --out " + scores.string());
    REQUIRE(r.exit_code == 0);
    auto lines = read_jsonl(scores);
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].at("reward").get<double>() == doctest::Approx(0.75).epsilon(1e-12));
    json summary = json::parse(r.out);
    CHECK(summary.at("corpus_mean").get<double>() == doctest::Approx(0.75).epsilon(1e-12));

    // per_section_arn adds a byte-level ARN of 1.0 for both repeat-free sections:
    // 0.75*(0.45*2/3 + 0.45*2/3 + 0.1) + 0.25*(0.45+0.45+0.1) = 0.775
    RunResult arn_preset = run("score --candidates " + cand.string() + " --references " +
                               ref.string() + " --preset per_section_arn");
    REQUIRE(arn_preset.exit_code == 0);
    CHECK(json::parse(arn_preset.out).at("corpus_mean").get<double>() ==
          doctest::Approx(0.775).epsilon(1e-12));

    fs::path missing_ref = work_dir() / "score_missing_ref.jsonl";
    write_file(missing_ref, "{\"study_id\":2,\"findings\":\"a\",\"impression\":\"b\"}\n");
    RunResult bad = run("score --candidates " + cand.string() + " --references " +
                        missing_ref.string());
    CHECK(bad.exit_code != 0);
    CHECK(json::parse(bad.err).contains("error"));
}

TEST_CASE("gradcheck passes normally and fails when corrupted") {
    RunResult ok = run("gradcheck --seed 0 --seeds 3");
    CHECK(ok.exit_code == 0);
    std::istringstream lines(ok.out);
    std::string line;
    std::vector<std::string> ops;
    json last;
    while (std::getline(lines, line)) {
        json j = json::parse(line);
        if (j.contains("op")) ops.push_back(j.at("op"));
        last = j;
    }
    CHECK(last.at("status") == "pass");
    CHECK(std::find(ops.begin(), ops.end(), "time_delta_fnn") != ops.end());
    CHECK(std::find(ops.begin(), ops.end(), "image_projection") != ops.end());
    CHECK(std::find(ops.begin(), ops.end(), "table_fnn.triage") != ops.end());
    CHECK(ops.size() == 8); // time delta + six tables + image projection

    RunResult bad = run("gradcheck --seed 0 --seeds 2 --corrupt");
    CHECK(bad.exit_code != 0);
}

TEST_CASE("mask-dump prints the hybrid grid") {
    RunResult r = run("mask-dump --prompt 2 --report 2");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "11..\n11..\n111.\n1111\n");

    RunResult causal = run("mask-dump --prompt 0 --report 3");
    CHECK(causal.out == "1..\n11.\n111\n");

    RunResult block = run("mask-dump --prompt 3 --report 0");
    CHECK(block.out == "111\n111\n111\n");
}
