#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "asd/metrics.hpp"
#include "asd/rng.hpp"
#include "asd/wav.hpp"

namespace fs = std::filesystem;
using namespace asd;

namespace {

// Pair-counting oracle, written as the literal double loop.
double auc_brute(const std::vector<double>& normals, const std::vector<double>& anomalies) {
    std::uint64_t wins = 0;
    for (double a : anomalies)
        for (double n : normals)
            if (a > n) ++wins;
    return static_cast<double>(wins) /
           (static_cast<double>(normals.size()) * static_cast<double>(anomalies.size()));
}

double pauc_brute(const std::vector<double>& normals, const std::vector<double>& anomalies,
                  double p) {
    const auto top_n =
        static_cast<std::size_t>(std::floor(p * static_cast<double>(normals.size())));
    std::vector<std::size_t> order(normals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return normals[a] > normals[b]; });
    std::vector<double> top;
    for (std::size_t i = 0; i < top_n; ++i) top.push_back(normals[order[i]]);
    return auc_brute(top, anomalies);
}

std::vector<double> random_scores(CounterRng& rng, std::size_t n, bool with_ties) {
    std::vector<double> out(n);
    for (auto& v : out)
        v = with_ties ? std::floor(rng.uniform(0.0, 8.0)) : rng.uniform(0.0, 1.0);
    return out;
}

// Labeled two-machine fixture manifest; paths are synthetic, only metadata
// matters for evaluate().
CorpusManifest tiny_manifest() {
    CorpusManifest manifest;
    for (const char* machine : {"fan", "valve"}) {
        ClipGroup group;
        group.machine_type = machine;
        group.section = 0;
        int index = 1;
        auto add = [&](Domain domain, Label label) {
            ClipMetadata clip;
            clip.machine_type = machine;
            clip.section = 0;
            clip.domain = domain;
            clip.split = Split::test;
            clip.label = label;
            clip.clip_index = index++;
            clip.path = fs::path(machine) / "test" / clip.filename();
            group.test.push_back(clip);
        };
        for (int i = 0; i < 10; ++i) add(Domain::source, Label::normal);
        for (int i = 0; i < 10; ++i) add(Domain::target, Label::normal);
        for (int i = 0; i < 10; ++i) add(Domain::source, Label::anomaly);
        for (int i = 0; i < 10; ++i) add(Domain::target, Label::anomaly);
        manifest.groups.push_back(std::move(group));
    }
    return manifest;
}

std::map<std::string, double> perfect_scores(const CorpusManifest& manifest) {
    std::map<std::string, double> scores;
    for (const auto& group : manifest.groups)
        for (const auto& clip : group.test)
            scores[score_key(clip)] =
                clip.label == Label::anomaly ? 1.0 + clip.clip_index : 0.0 + clip.clip_index * 1e-3;
    return scores;
}

}  // namespace

TEST(AucDomain, HandExamples) {
    // normals {0.5, 0.2}, anomalies {0.4, 0.6}: wins = 1 + 2 of 4 pairs.
    EXPECT_DOUBLE_EQ(auc_domain({0.5, 0.2}, {0.4, 0.6}), 0.75);
    EXPECT_DOUBLE_EQ(auc_domain({0.0, 0.1}, {0.5, 0.9}), 1.0);
    EXPECT_DOUBLE_EQ(auc_domain({0.5, 0.9}, {0.0, 0.1}), 0.0);
}

TEST(AucDomain, AllTiedIsZero) {
    EXPECT_DOUBLE_EQ(auc_domain({0.3, 0.3, 0.3}, {0.3, 0.3}), 0.0);
}

TEST(AucDomain, EmptyInputsRejected) {
    EXPECT_THROW(auc_domain({}, {0.1}), EmptyList);
    EXPECT_THROW(auc_domain({0.1}, {}), EmptyList);
}

TEST(AucDomain, MatchesBruteForceOnTiedMultisets) {
    CounterRng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n_n = static_cast<std::size_t>(rng.uniform(1.0, 40.0));
        const auto n_a = static_cast<std::size_t>(rng.uniform(1.0, 40.0));
        const bool ties = trial % 2 == 0;
        const auto normals = random_scores(rng, n_n, ties);
        const auto anomalies = random_scores(rng, n_a, ties);
        ASSERT_DOUBLE_EQ(auc_domain(normals, anomalies), auc_brute(normals, anomalies))
            << "trial " << trial;
    }
}

// Strictly monotone transforms of all scores leave pair counts unchanged.
TEST(AucDomain, ShiftScaleInvariant) {
    CounterRng rng(22);
    auto normals = random_scores(rng, 25, true);
    auto anomalies = random_scores(rng, 15, true);
    const double base = auc_domain(normals, anomalies);
    for (auto& v : normals) v = 3.0 * v - 7.0;
    for (auto& v : anomalies) v = 3.0 * v - 7.0;
    EXPECT_DOUBLE_EQ(auc_domain(normals, anomalies), base);
}

TEST(PaucSection, HandEnumeration) {
    // N- = 10, p = 0.1 keeps only the single highest normal (0.9); anomalies
    // {0.95, 0.8} win 1 of 2 pairs.
    std::vector<double> normals = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9};
    EXPECT_DOUBLE_EQ(pauc_section(normals, {0.95, 0.8}, 0.1), 0.5);
}

TEST(PaucSection, PEqualOneIsPlainAuc) {
    CounterRng rng(23);
    const auto normals = random_scores(rng, 30, true);
    const auto anomalies = random_scores(rng, 20, true);
    EXPECT_DOUBLE_EQ(pauc_section(normals, anomalies, 1.0),
                     auc_domain(normals, anomalies));
}

TEST(PaucSection, PTooSmallRejected) {
    EXPECT_THROW(pauc_section({0.1, 0.2}, {0.3}, 0.1), PTooSmall);
}

TEST(PaucSection, MatchesBruteForce) {
    CounterRng rng(24);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n_n = static_cast<std::size_t>(rng.uniform(10.0, 60.0));
        const auto n_a = static_cast<std::size_t>(rng.uniform(1.0, 30.0));
        const double p = rng.uniform(0.1, 1.0);
        const auto normals = random_scores(rng, n_n, trial % 2 == 0);
        const auto anomalies = random_scores(rng, n_a, trial % 2 == 0);
        if (std::floor(p * static_cast<double>(n_n)) < 1.0) continue;
        ASSERT_DOUBLE_EQ(pauc_section(normals, anomalies, p),
                         pauc_brute(normals, anomalies, p))
            << "trial " << trial;
    }
}

// A tie exactly at the top-n boundary must not depend on sort instability:
// tied normals are interchangeable in the count.
TEST(PaucSection, BoundaryTieStable) {
    std::vector<double> a = {0.9, 0.9, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    std::vector<double> b = a;
    std::reverse(b.begin(), b.end());
    const std::vector<double> anomalies = {0.95, 0.9, 0.5};
    EXPECT_DOUBLE_EQ(pauc_section(a, anomalies, 0.1), pauc_section(b, anomalies, 0.1));
}

TEST(OfficialScore, HandExamples) {
    EXPECT_NEAR(official_score({1.0, 0.5}), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(official_score({1.0, 0.5, 1.0, 0.5, 1.0, 0.5}), 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(official_score({0.7, 0.0, 0.9}), 0.0);
    EXPECT_DOUBLE_EQ(official_score({0.42}), 0.42);
    EXPECT_THROW(official_score({}), EmptyList);
    EXPECT_THROW(official_score({1.2}), Error);
}

// Harmonic mean never exceeds the arithmetic mean.
TEST(OfficialScore, BoundedByArithmeticMean) {
    CounterRng rng(25);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> values(1 + trial % 9);
        double arith = 0.0;
        for (auto& v : values) {
            v = rng.uniform(0.01, 1.0);
            arith += v;
        }
        arith /= static_cast<double>(values.size());
        ASSERT_LE(official_score(values), arith + 1e-12);
    }
}

TEST(Evaluate, PerfectSeparationScoresOne) {
    const auto manifest = tiny_manifest();
    const auto report = evaluate(manifest, perfect_scores(manifest));
    ASSERT_EQ(report.rows.size(), 2u);
    for (const auto& row : report.rows) {
        EXPECT_DOUBLE_EQ(row.auc_source, 1.0);
        EXPECT_DOUBLE_EQ(row.auc_target, 1.0);
        EXPECT_DOUBLE_EQ(row.pauc, 1.0);
        EXPECT_EQ(row.n_normal_source, 10u);
        EXPECT_EQ(row.n_normal_target, 10u);
        EXPECT_EQ(row.n_anomaly, 20u);
    }
    EXPECT_DOUBLE_EQ(report.official, 1.0);
}

TEST(Evaluate, ConstantScoresGiveZeroOfficial) {
    const auto manifest = tiny_manifest();
    std::map<std::string, double> scores;
    for (const auto& group : manifest.groups)
        for (const auto& clip : group.test)
            scores[score_key(clip)] = 0.5;
    const auto report = evaluate(manifest, scores);
    for (const auto& row : report.rows) {
        EXPECT_DOUBLE_EQ(row.auc_source, 0.0);
        EXPECT_DOUBLE_EQ(row.pauc, 0.0);
    }
    EXPECT_DOUBLE_EQ(report.official, 0.0);
}

TEST(Evaluate, MissingScoreRejected) {
    const auto manifest = tiny_manifest();
    auto scores = perfect_scores(manifest);
    scores.erase(scores.begin());
    EXPECT_THROW(evaluate(manifest, scores), MissingScores);
}

TEST(Evaluate, UnlabeledClipRejected) {
    auto manifest = tiny_manifest();
    manifest.groups[0].test[3].label = Label::unknown;
    EXPECT_THROW(evaluate(manifest, perfect_scores(tiny_manifest())), UnlabeledData);
}

TEST(Evaluate, OfficialIsHarmonicMeanOfRows) {
    const auto manifest = tiny_manifest();
    CounterRng rng(26);
    std::map<std::string, double> scores;
    for (const auto& group : manifest.groups)
        for (const auto& clip : group.test)
            scores[score_key(clip)] = rng.uniform(0.0, 1.0);
    const auto report = evaluate(manifest, scores);
    std::vector<double> values;
    for (const auto& row : report.rows) {
        values.push_back(row.auc_source);
        values.push_back(row.auc_target);
        values.push_back(row.pauc);
    }
    EXPECT_NEAR(report.official, official_score(values), 1e-15);
}

TEST(ReportFiles, CsvAndJsonRoundTrip) {
    const auto manifest = tiny_manifest();
    const auto report = evaluate(manifest, perfect_scores(manifest));
    const auto dir = fs::temp_directory_path() / "asd_metrics_report";
    fs::create_directories(dir);

    write_report_csv(report, dir / "report.csv");
    std::ifstream csv(dir / "report.csv");
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "machine,section,auc_source,auc_target,pauc");
    std::getline(csv, line);
    EXPECT_EQ(line, "fan,00,1,1,1");
    std::getline(csv, line);
    EXPECT_EQ(line, "valve,00,1,1,1");
    std::getline(csv, line);
    EXPECT_EQ(line, "official_score,1");

    write_report_json(report, dir / "report.json");
    std::ifstream jf(dir / "report.json");
    const auto j = nlohmann::json::parse(jf);
    EXPECT_DOUBLE_EQ(j["official_score"].get<double>(), 1.0);
    ASSERT_EQ(j["rows"].size(), 2u);
    EXPECT_EQ(j["rows"][0]["machine"], "fan");
    EXPECT_EQ(j["rows"][1]["n_anomaly"].get<int>(), 20);
}
