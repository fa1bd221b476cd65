// Command-line front end: synth -> train -> score -> evaluate -> report.
// Exit codes: 0 success, 1 runtime/data error, 2 usage error, 3 corpus has
// no usable ground-truth labels.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asd/config.hpp"
#include "asd/dataset.hpp"
#include "asd/metrics.hpp"
#include "asd/pipeline.hpp"
#include "asd/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitUnlabeled = 3;

struct CommonFlags {
    std::string config_file;
    std::string preset;
    std::string corpus;
    std::string out;
    std::string mode;
    std::string seeds;
    int epochs = -1;
    double threshold_q = -1.0;
    double pauc_p = -1.0;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_file, "flat key = value config file");
    cmd->add_option("--preset", flags.preset, "mini or full");
    cmd->add_option("--corpus", flags.corpus, "corpus root directory");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--mode", flags.mode, "scoring mode: simple or mahalanobis");
    cmd->add_option("--seeds", flags.seeds, "comma-separated seed list");
    cmd->add_option("--epochs", flags.epochs, "training epochs override");
    cmd->add_option("--threshold-q", flags.threshold_q,
                    "decision threshold quantile over training scores");
    cmd->add_option("--pauc-p", flags.pauc_p, "pAUC false-positive-rate cap");
}

// Config file first, then flags on top.
asd::RunConfig build_run_config(const CommonFlags& flags, bool need_corpus) {
    asd::RunConfig cfg;
    if (!flags.config_file.empty()) asd::apply_config_file(cfg, flags.config_file);
    if (!flags.preset.empty()) asd::apply_preset(cfg, flags.preset);
    if (!flags.corpus.empty()) cfg.corpus_root = flags.corpus;
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    if (!flags.mode.empty()) cfg.mode = asd::parse_mode(flags.mode);
    if (!flags.seeds.empty()) cfg.seeds = asd::detail::parse_seed_list(flags.seeds);
    if (flags.epochs > 0) cfg.training.epochs = flags.epochs;
    if (flags.threshold_q > 0.0) cfg.threshold_q = flags.threshold_q;
    if (flags.pauc_p > 0.0) cfg.pauc_p = flags.pauc_p;
    if (need_corpus && cfg.corpus_root.empty())
        throw CLI::ValidationError("--corpus (or corpus_root in --config) is required");
    if (cfg.out_dir.empty())
        throw CLI::ValidationError("--out (or out_dir in --config) is required");
    cfg.validate();
    return cfg;
}

void print_manifest_summary(const asd::CorpusManifest& manifest) {
    for (const auto& g : manifest.groups)
        std::cout << g.machine_type << " section " << g.section << ": train source "
                  << g.train_source.size() << ", train target " << g.train_target.size()
                  << ", test " << g.test.size() << "\n";
    for (const auto& w : manifest.warnings) std::cout << "warning: " << w << "\n";
}

int cmd_synth(const std::string& preset, std::uint64_t seed, const std::string& out,
              double burst_gain_db, bool has_burst_override) {
    asd::SynthConfig cfg;
    cfg.seed = seed;
    cfg.machines = asd::preset_machines(preset);
    cfg.counts = asd::preset_counts(preset);
    cfg.output_root = out;
    if (has_burst_override)
        for (auto& m : cfg.machines) m.burst_gain_db = burst_gain_db;
    const auto manifest = asd::synth_corpus(cfg);
    print_manifest_summary(manifest);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unsupervised anomalous-sound-detection pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string synth_preset = "mini";
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    double burst_gain_db = 0.0;
    synth->add_option("--preset", synth_preset, "mini or full");
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--out", synth_out, "output root")->required();
    auto* burst_opt =
        synth->add_option("--burst-gain-db", burst_gain_db,
                          "override anomaly burst gain for every machine");

    // train / score / evaluate
    CommonFlags train_flags, score_flags, eval_flags;
    auto* train = app.add_subcommand("train", "train one model per machine/section");
    add_common_flags(train, train_flags);
    auto* score = app.add_subcommand("score", "write submission CSVs for the test split");
    add_common_flags(score, score_flags);
    auto* evaluate = app.add_subcommand(
        "evaluate", "run train+score+metrics per seed and aggregate");
    add_common_flags(evaluate, eval_flags);

    // report
    auto* report = app.add_subcommand("report", "print and aggregate report CSVs");
    std::vector<std::string> report_files;
    report->add_option("files", report_files, "report.json files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_preset, synth_seed, synth_out, burst_gain_db,
                             burst_opt->count() > 0);

        if (train->parsed()) {
            const auto cfg = build_run_config(train_flags, /*need_corpus=*/true);
            const auto manifest = asd::scan_corpus(cfg.corpus_root);
            print_manifest_summary(manifest);
            asd::train_all(cfg, manifest, cfg.seeds.front(), &std::cout);
            return kExitOk;
        }

        if (score->parsed()) {
            const auto cfg = build_run_config(score_flags, /*need_corpus=*/true);
            const auto manifest = asd::scan_corpus(cfg.corpus_root);
            asd::score_all(cfg, manifest, &std::cout);
            return kExitOk;
        }

        if (evaluate->parsed()) {
            const auto cfg = build_run_config(eval_flags, /*need_corpus=*/true);
            const auto manifest = asd::scan_corpus(cfg.corpus_root);
            std::vector<asd::SeedRunResult> runs;
            for (const auto seed : cfg.seeds) {
                runs.push_back(asd::run_one_seed(cfg, manifest, seed, &std::cout));
                std::cout << "seed " << seed << ": official score "
                          << asd::format_score(runs.back().report.official) << "\n";
            }
            std::filesystem::create_directories(cfg.out_dir);
            const auto stats = asd::aggregate_reports(runs, cfg.out_dir);
            for (const auto& [key, s] : stats)
                if (key != "official_score")
                    std::cout << key << ": " << asd::format_score(s.mean) << " +- "
                              << asd::format_score(s.stddev) << "\n";
            std::cout << "official_score," << asd::format_score(stats.at("official_score").mean)
                      << std::endl;
            return kExitOk;
        }

        if (report->parsed()) {
            std::vector<double> officials;
            for (const auto& file : report_files) {
                std::ifstream f(file);
                if (!f) throw asd::IoError("cannot open " + file);
                nlohmann::json j;
                f >> j;
                std::cout << file << ":\n";
                for (const auto& row : j.at("rows"))
                    std::cout << "  " << row.at("machine").get<std::string>()
                              << " auc_source=" << row.at("auc_source").get<double>()
                              << " auc_target=" << row.at("auc_target").get<double>()
                              << " pauc=" << row.at("pauc").get<double>() << "\n";
                officials.push_back(j.at("official_score").get<double>());
            }
            const auto s = asd::mean_std(officials);
            std::cout << "official_score," << asd::format_score(s.mean) << " +- "
                      << asd::format_score(s.stddev) << std::endl;
            return kExitOk;
        }
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const asd::UnlabeledData& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUnlabeled;
    } catch (const asd::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
