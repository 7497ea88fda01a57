#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "promptforge/common.hpp"
#include "promptforge/report_sections.hpp"

using namespace pforge;

TEST_CASE("normalize_text collapses whitespace") {
    CHECK(normalize_text("  a\t\tb\n c  ") == "a b c");
    CHECK(normalize_text("") == "");
    CHECK(normalize_text("already normal") == "already normal");
    CHECK(normalize_text("\r\n\t ") == "");
}

TEST_CASE("normalize_text is idempotent on arbitrary strings") {
    Rng rng(99);
    const char alphabet[] = " \t\n\r abcXYZ.:,0189";
    for (int trial = 0; trial < 500; ++trial) {
        std::string s;
        std::size_t len = rng.below(60);
        for (std::size_t i = 0; i < len; ++i)
            s += alphabet[rng.below(sizeof(alphabet) - 1)];
        std::string once = normalize_text(s);
        CHECK(normalize_text(once) == once);
    }
}

TEST_CASE("extract_sections canonical layout") {
    auto s = extract_sections("INDICATION: cough.\nFINDINGS: Clear lungs.\nIMPRESSION: Normal.");
    REQUIRE(s.indication.has_value());
    REQUIRE(s.findings.has_value());
    REQUIRE(s.impression.has_value());
    CHECK(*s.indication == "cough.");
    CHECK(*s.findings == "Clear lungs.");
    CHECK(*s.impression == "Normal.");
    CHECK_FALSE(s.history.has_value());
    CHECK_FALSE(s.comparison.has_value());
}

TEST_CASE("extract_sections with no recognized headers") {
    auto s = extract_sections("Portable chest radiograph. Lungs clear bilaterally.");
    CHECK_FALSE(s.findings.has_value());
    CHECK_FALSE(s.impression.has_value());
    CHECK_FALSE(s.indication.has_value());
    CHECK_FALSE(s.history.has_value());
    CHECK_FALSE(s.comparison.has_value());
}

TEST_CASE("extract_sections multi-line body with blank lines") {
    auto s = extract_sections(
        "FINDINGS:\n"
        "\n"
        "Low lung volumes are seen compatible with patient's history of fibrosis.\n"
        "Diffusely increased interstitial markings are seen throughout the lungs.\n"
        "\n"
        "IMPRESSION: Pulmonary fibrosis with likely superimposed edema.");
    REQUIRE(s.findings.has_value());
    CHECK(*s.findings ==
          "Low lung volumes are seen compatible with patient's history of fibrosis. "
          "Diffusely increased interstitial markings are seen throughout the lungs.");
    REQUIRE(s.impression.has_value());
    CHECK(*s.impression == "Pulmonary fibrosis with likely superimposed edema.");
}

TEST_CASE("extract_sections is case-insensitive and handles synonyms") {
    auto s = extract_sections(
        "clinical history: COPD with worsening dyspnea.\n"
        "Comparisons: Prior radiograph.\n"
        "findings: stable.\n");
    REQUIRE(s.history.has_value());
    CHECK(*s.history == "COPD with worsening dyspnea.");
    REQUIRE(s.comparison.has_value());
    CHECK(*s.comparison == "Prior radiograph.");
    REQUIRE(s.findings.has_value());
}

TEST_CASE("extract_sections discards unheadered preamble") {
    auto s = extract_sections(
        "EXAMINATION: CHEST (PA AND LAT)\n"
        "WET READ: pending\n"
        "IMPRESSION: No acute process.\n");
    CHECK_FALSE(s.findings.has_value());
    REQUIRE(s.impression.has_value());
    CHECK(*s.impression == "No acute process.");
}

TEST_CASE("section order in raw text is not assumed") {
    auto s = extract_sections("IMPRESSION: B.\nFINDINGS: A.\n");
    CHECK(*s.findings == "A.");
    CHECK(*s.impression == "B.");
}

TEST_CASE("empty-bodied headers stay unset") {
    auto s = extract_sections("FINDINGS:\n\nIMPRESSION: ok\n");
    CHECK_FALSE(s.findings.has_value());
    CHECK(*s.impression == "ok");
}

TEST_CASE("bodies never contain a recognized header token") {
    // generated report-shaped fixtures: headers always at line starts
    Rng rng(7);
    const std::vector<std::string> headers = {"FINDINGS:", "IMPRESSION:", "INDICATION:",
                                              "HISTORY:", "COMPARISON:"};
    const std::vector<std::string> bodies = {"lungs are clear", "mild edema",
                                             "evaluate for pneumonia", "prior CABG", "none"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string raw;
        std::size_t n = 1 + rng.below(5);
        for (std::size_t i = 0; i < n; ++i) {
            raw += headers[rng.below(headers.size())] + " " + bodies[rng.below(bodies.size())];
            raw += rng.bernoulli(0.3) ? "\n\n" : "\n";
        }
        auto s = extract_sections(raw);
        for (const auto& section :
             {s.findings, s.impression, s.indication, s.history, s.comparison}) {
            if (!section) continue;
            for (const std::string& h : headers)
                CHECK(section->find(h) == std::string::npos);
        }
    }
}
