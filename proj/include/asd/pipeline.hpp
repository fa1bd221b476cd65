#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "asd/autoencoder.hpp"
#include "asd/config.hpp"
#include "asd/dataset.hpp"
#include "asd/errors.hpp"
#include "asd/features.hpp"
#include "asd/metrics.hpp"
#include "asd/scoring.hpp"
#include "asd/wav.hpp"

namespace asd {

struct MissingModel : IoError {
    using IoError::IoError;
};

namespace detail {

inline std::string group_tag(const ClipGroup& g) {
    char nn[8];
    std::snprintf(nn, sizeof nn, "%02d", g.section);
    return g.machine_type + "_section_" + nn;
}

inline Matrix pooled_frames(const std::vector<const ClipMetadata*>& clips,
                            const FeatureConfig& cfg) {
    std::vector<Matrix> per_clip;
    std::size_t total = 0;
    for (const auto* clip : clips) {
        Matrix m = extract_features(read_wav(clip->path), cfg).vectors;
        total += m.rows();
        per_clip.push_back(std::move(m));
    }
    if (per_clip.empty()) throw EmptyCorpus("no clips to pool");
    Matrix out(total, per_clip.front().cols());
    std::size_t row = 0;
    for (const auto& m : per_clip)
        for (std::size_t r = 0; r < m.rows(); ++r, ++row)
            std::copy_n(m.row_ptr(r), m.cols(), out.row_ptr(row));
    return out;
}

}  // namespace detail

inline std::filesystem::path model_path(const std::filesystem::path& dir,
                                        const ClipGroup& g) {
    return dir / ("model_" + detail::group_tag(g) + ".bin");
}
inline std::filesystem::path covariance_path(const std::filesystem::path& dir,
                                             const ClipGroup& g) {
    return dir / ("model_" + detail::group_tag(g) + "_cov.bin");
}

// Trains one model per (machine, section): frames from all training clips
// of the section (source and target pooled, no oversampling), Adam per the
// run config, loss curve and model file per group. In mahalanobis mode the
// per-domain residual covariances are fitted on the trained model and saved
// alongside.
inline void train_all(const RunConfig& cfg, const CorpusManifest& manifest,
                      std::uint64_t seed, std::ostream* log = nullptr) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    for (const auto& group : manifest.groups) {
        const Matrix frames = detail::pooled_frames(group.train_all(), cfg.features);

        AeArchitecture arch = cfg.arch;
        TrainConfig tc = cfg.training;
        tc.seed = hash_combine(seed, hash_str(detail::group_tag(group)));
        AeModel model = init_model(arch, tc.seed);
        model.feature_config = cfg.features;
        TrainResult result = train(model, frames, tc);
        save_model(result.model, model_path(cfg.out_dir, group));

        std::ofstream loss_csv(cfg.out_dir / ("loss_" + detail::group_tag(group) + ".csv"),
                               std::ios::binary | std::ios::trunc);
        loss_csv << "epoch,loss\n";
        for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
            loss_csv << e << ',' << format_score(result.epoch_losses[e]) << '\n';

        if (cfg.mode == ScoringMode::mahalanobis) {
            std::vector<const ClipMetadata*> src, tgt;
            for (const auto& c : group.train_source) src.push_back(&c);
            for (const auto& c : group.train_target) tgt.push_back(&c);
            if (src.empty() || tgt.empty())
                throw EmptyCorpus(detail::group_tag(group) +
                                  ": mahalanobis mode needs both training domains");
            const DomainCovariances cov = fit_covariances(
                result.model, detail::pooled_frames(src, cfg.features),
                detail::pooled_frames(tgt, cfg.features), cfg.ridge_scale);
            save_covariances(cov, covariance_path(cfg.out_dir, group));
        }
        if (log)
            *log << "trained " << detail::group_tag(group) << ": final loss "
                 << result.epoch_losses.back() << "\n";
    }
}

// Scores every test clip of every group with the trained model, calibrates
// the decision threshold on the pooled training-clip scores, and writes the
// submission CSV pair per group.
inline std::map<std::string, double> score_all(const RunConfig& cfg,
                                               const CorpusManifest& manifest,
                                               std::ostream* log = nullptr) {
    cfg.validate();
    std::map<std::string, double> all_scores;
    for (const auto& group : manifest.groups) {
        const auto mpath = model_path(cfg.out_dir, group);
        if (!std::filesystem::exists(mpath))
            throw MissingModel("no model file " + mpath.string() + "; run train first");
        const AeModel model = load_model(mpath);
        if (!(model.feature_config == cfg.features))
            throw ConfigMismatch(detail::group_tag(group) +
                                 ": run feature config differs from the trained model's");

        DomainCovariances cov;
        if (cfg.mode == ScoringMode::mahalanobis) {
            const auto cpath = covariance_path(cfg.out_dir, group);
            if (!std::filesystem::exists(cpath))
                throw ConfigMismatch("mode is mahalanobis but no covariance sidecar " +
                                     cpath.string() + "; retrain with mode=mahalanobis");
            cov = load_covariances(cpath);
        }
        auto clip_score = [&](const ClipMetadata& clip) {
            const FeatureMatrix features =
                extract_features(read_wav(clip.path), cfg.features);
            return cfg.mode == ScoringMode::simple
                       ? score_simple(model, features)
                       : score_mahalanobis(model, cov, features);
        };

        std::vector<double> train_scores;
        for (const auto* clip : group.train_all()) train_scores.push_back(clip_score(*clip));
        const Threshold threshold = calibrate_threshold(train_scores, cfg.threshold_q);

        std::vector<ScoreRecord> records;
        for (const auto& clip : group.test) {
            ScoreRecord r;
            r.filename = clip.path.filename().string();
            r.score = clip_score(clip);
            r.decision = decide(r.score, threshold);
            all_scores[score_key(clip)] = r.score;
            records.push_back(std::move(r));
        }
        write_submission(records, group.machine_type, group.section, cfg.out_dir);
        if (log)
            *log << "scored " << detail::group_tag(group) << ": " << records.size()
                 << " test clips, threshold " << threshold.value << "\n";
    }
    return all_scores;
}

// Reads back the anomaly_score CSVs of a previous score run.
inline std::map<std::string, double> read_score_csvs(const std::filesystem::path& dir,
                                                     const CorpusManifest& manifest) {
    std::map<std::string, double> scores;
    for (const auto& group : manifest.groups) {
        const auto path = dir / ("anomaly_score_" + detail::group_tag(group) + ".csv");
        std::ifstream f(path);
        if (!f) throw MissingScores("no score csv " + path.string());
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto comma = line.rfind(',');
            if (comma == std::string::npos)
                throw CorruptFile("bad line in " + path.string() + ": " + line);
            scores[group.machine_type + "/" + line.substr(0, comma)] =
                std::stod(line.substr(comma + 1));
        }
    }
    return scores;
}

struct SeedRunResult {
    std::uint64_t seed = 0;
    EvalReport report;
};

// One full pipeline pass for one seed, writing into out_dir/seed_<s>/.
inline SeedRunResult run_one_seed(RunConfig cfg, const CorpusManifest& manifest,
                                  std::uint64_t seed, std::ostream* log = nullptr) {
    cfg.out_dir /= ("seed_" + std::to_string(seed));
    train_all(cfg, manifest, seed, log);
    const auto scores = score_all(cfg, manifest, log);
    SeedRunResult result;
    result.seed = seed;
    result.report = evaluate(manifest, scores, cfg.pauc_p);
    write_report_csv(result.report, cfg.out_dir / "report.csv");
    write_report_json(result.report, cfg.out_dir / "report.json");
    return result;
}

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single run
};

inline MetricStats mean_std(const std::vector<double>& v) {
    MetricStats s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double acc = 0.0;
        for (double x : v) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return s;
}

// Aggregates per-seed reports into mean +- sample std per metric and writes
// aggregate.csv. Returns the stats keyed by metric name.
inline std::map<std::string, MetricStats> aggregate_reports(
    const std::vector<SeedRunResult>& runs, const std::filesystem::path& out_dir) {
    if (runs.empty()) throw EmptyList("no seed runs to aggregate");
    std::map<std::string, std::vector<double>> series;
    for (const auto& run : runs) {
        for (const auto& row : run.report.rows) {
            char nn[8];
            std::snprintf(nn, sizeof nn, "%02d", row.section);
            const std::string key = row.machine_type + "_section_" + nn;
            series[key + "_auc_source"].push_back(row.auc_source);
            series[key + "_auc_target"].push_back(row.auc_target);
            series[key + "_pauc"].push_back(row.pauc);
        }
        series["official_score"].push_back(run.report.official);
    }
    std::map<std::string, MetricStats> stats;
    for (const auto& [key, values] : series) stats[key] = mean_std(values);

    std::ofstream f(out_dir / "aggregate.csv", std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write aggregate.csv");
    f << "metric,mean,stddev,n\n";
    for (const auto& [key, s] : stats)
        f << key << ',' << format_score(s.mean) << ',' << format_score(s.stddev) << ','
          << runs.size() << '\n';
    return stats;
}

}  // namespace asd
