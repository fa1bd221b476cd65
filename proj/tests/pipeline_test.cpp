#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "asd/pipeline.hpp"
#include "asd/synth.hpp"

namespace fs = std::filesystem;
using namespace asd;

namespace {

// One-machine desk-scale corpus + run config, shared by the tests below.
struct Fixture {
    fs::path root;
    CorpusManifest manifest;
    RunConfig cfg;
};

Fixture make_fixture(const std::string& tag, ScoringMode mode) {
    Fixture fx;
    fx.root = fs::temp_directory_path() / ("asd_pipeline_" + tag);
    fs::remove_all(fx.root);

    SynthConfig synth;
    synth.seed = 7;
    synth.machines = {preset_machines("mini")[0]};
    // 10 pooled test normals keep floor(p * N-) at 1 for the default p.
    synth.counts = {6, 2, 5, 5};
    synth.output_root = fx.root / "corpus";
    fx.manifest = synth_corpus(synth);

    apply_preset(fx.cfg, "mini");
    fx.cfg.corpus_root = synth.output_root;
    fx.cfg.out_dir = fx.root / "out";
    fx.cfg.mode = mode;
    fx.cfg.training.epochs = 2;
    fx.cfg.training.batch_size = 64;
    return fx;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Pipeline, TrainScoreEvaluateSimpleMode) {
    auto fx = make_fixture("simple", ScoringMode::simple);
    train_all(fx.cfg, fx.manifest, 0);
    EXPECT_TRUE(fs::exists(fx.cfg.out_dir / "model_fan_section_00.bin"));
    EXPECT_TRUE(fs::exists(fx.cfg.out_dir / "loss_fan_section_00.csv"));
    EXPECT_FALSE(fs::exists(fx.cfg.out_dir / "model_fan_section_00_cov.bin"));

    const auto scores = score_all(fx.cfg, fx.manifest);
    EXPECT_EQ(scores.size(), 20u);  // 2 domains x (5 normal + 5 anomaly)
    EXPECT_TRUE(fs::exists(fx.cfg.out_dir / "anomaly_score_fan_section_00.csv"));
    EXPECT_TRUE(fs::exists(fx.cfg.out_dir / "decision_result_fan_section_00.csv"));
    for (const auto& [name, score] : scores) ASSERT_TRUE(std::isfinite(score)) << name;

    const auto report = evaluate(fx.manifest, scores, fx.cfg.pauc_p);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_GE(report.official, 0.0);
    EXPECT_LE(report.official, 1.0);
}

TEST(Pipeline, MahalanobisModeWritesAndUsesSidecar) {
    auto fx = make_fixture("mahala", ScoringMode::mahalanobis);
    train_all(fx.cfg, fx.manifest, 0);
    EXPECT_TRUE(fs::exists(fx.cfg.out_dir / "model_fan_section_00_cov.bin"));
    const auto scores = score_all(fx.cfg, fx.manifest);
    EXPECT_EQ(scores.size(), 20u);
}

TEST(Pipeline, ScoreWithoutModelFails) {
    auto fx = make_fixture("nomodel", ScoringMode::simple);
    EXPECT_THROW(score_all(fx.cfg, fx.manifest), MissingModel);
}

TEST(Pipeline, MahalanobisScoreWithoutSidecarFails) {
    auto fx = make_fixture("nosidecar", ScoringMode::simple);
    train_all(fx.cfg, fx.manifest, 0);  // simple mode: no sidecar written
    fx.cfg.mode = ScoringMode::mahalanobis;
    EXPECT_THROW(score_all(fx.cfg, fx.manifest), ConfigMismatch);
}

TEST(Pipeline, FeatureConfigMismatchFails) {
    auto fx = make_fixture("mismatch", ScoringMode::simple);
    train_all(fx.cfg, fx.manifest, 0);
    fx.cfg.features.n_mels = 8;
    fx.cfg.arch.input_dim = 16;
    EXPECT_THROW(score_all(fx.cfg, fx.manifest), ConfigMismatch);
}

// Same seed, fresh output directory: artifacts must be byte identical.
TEST(Pipeline, RerunIsByteIdentical) {
    auto fx = make_fixture("determinism", ScoringMode::simple);
    RunConfig cfg_b = fx.cfg;
    cfg_b.out_dir = fx.root / "out_b";
    train_all(fx.cfg, fx.manifest, 3);
    train_all(cfg_b, fx.manifest, 3);
    score_all(fx.cfg, fx.manifest);
    score_all(cfg_b, fx.manifest);
    for (const char* name :
         {"model_fan_section_00.bin", "loss_fan_section_00.csv",
          "anomaly_score_fan_section_00.csv", "decision_result_fan_section_00.csv"})
        EXPECT_EQ(slurp(fx.cfg.out_dir / name), slurp(cfg_b.out_dir / name)) << name;
}

TEST(Pipeline, ReadScoreCsvsRoundTrip) {
    auto fx = make_fixture("readback", ScoringMode::simple);
    train_all(fx.cfg, fx.manifest, 0);
    const auto scores = score_all(fx.cfg, fx.manifest);
    const auto back = read_score_csvs(fx.cfg.out_dir, fx.manifest);
    ASSERT_EQ(back.size(), scores.size());
    for (const auto& [name, score] : scores) {
        ASSERT_TRUE(back.count(name)) << name;
        // %.9g round trip keeps 9 significant digits.
        ASSERT_NEAR(back.at(name), score, 1e-8 * std::abs(score)) << name;
    }
    EXPECT_THROW(read_score_csvs(fx.root / "nowhere", fx.manifest), MissingScores);
}

TEST(Pipeline, RunOneSeedWritesReports) {
    auto fx = make_fixture("oneseed", ScoringMode::simple);
    const auto result = run_one_seed(fx.cfg, fx.manifest, 11);
    EXPECT_EQ(result.seed, 11u);
    EXPECT_TRUE(fs::exists(fx.cfg.out_dir / "seed_11" / "report.csv"));
    EXPECT_TRUE(fs::exists(fx.cfg.out_dir / "seed_11" / "report.json"));
    EXPECT_GE(result.report.official, 0.0);
}

TEST(Aggregate, MeanAndStddev) {
    SeedRunResult a, b;
    a.seed = 0;
    b.seed = 1;
    EvalRow row;
    row.machine_type = "fan";
    row.section = 0;
    row.auc_source = 0.8;
    row.auc_target = 0.6;
    row.pauc = 0.5;
    a.report.rows.push_back(row);
    a.report.official = 0.6;
    row.auc_source = 0.6;
    b.report.rows.push_back(row);
    b.report.official = 0.5;

    const auto dir = fs::temp_directory_path() / "asd_aggregate";
    fs::create_directories(dir);
    const auto stats = aggregate_reports({a, b}, dir);
    EXPECT_NEAR(stats.at("fan_section_00_auc_source").mean, 0.7, 1e-15);
    EXPECT_NEAR(stats.at("fan_section_00_auc_source").stddev, std::sqrt(0.02), 1e-12);
    EXPECT_NEAR(stats.at("official_score").mean, 0.55, 1e-15);
    EXPECT_EQ(stats.at("fan_section_00_pauc").stddev, 0.0);

    const auto text = slurp(dir / "aggregate.csv");
    EXPECT_NE(text.find("metric,mean,stddev,n"), std::string::npos);
    EXPECT_NE(text.find("official_score,0.55,"), std::string::npos);
    EXPECT_THROW(aggregate_reports({}, dir), EmptyList);
}
