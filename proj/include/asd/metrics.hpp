#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "asd/dataset.hpp"
#include "asd/errors.hpp"

#include <json.hpp>

namespace asd {

struct EmptyList : Error {
    using Error::Error;
};
struct PTooSmall : Error {
    using Error::Error;
};
struct MissingScores : Error {
    using Error::Error;
};
struct UnlabeledData : Error {
    using Error::Error;
};

// Domain-wise AUC by exact pair counting: the fraction of (anomaly, normal)
// pairs where the anomaly scores strictly higher. Ties count zero. The
// numerator is accumulated as an integer; sorting only speeds up the count.
inline double auc_domain(const std::vector<double>& normals,
                         const std::vector<double>& anomalies) {
    if (normals.empty() || anomalies.empty())
        throw EmptyList("auc_domain needs both normal and anomalous scores");
    std::vector<double> sorted = normals;
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t wins = 0;
    for (double a : anomalies)
        wins += static_cast<std::uint64_t>(
            std::lower_bound(sorted.begin(), sorted.end(), a) - sorted.begin());
    return static_cast<double>(wins) /
           (static_cast<double>(normals.size()) * static_cast<double>(anomalies.size()));
}

// Section-wise pAUC over the low-FPR range [0, p]: the floor(p*N-) normal
// clips with the highest scores (ties kept in input order) against all
// anomalies, counted exactly like auc_domain.
inline double pauc_section(const std::vector<double>& normals,
                           const std::vector<double>& anomalies, double p) {
    if (normals.empty() || anomalies.empty())
        throw EmptyList("pauc_section needs both normal and anomalous scores");
    const auto top_n = static_cast<std::size_t>(
        std::floor(p * static_cast<double>(normals.size())));
    if (top_n == 0) throw PTooSmall("floor(p * N-) is zero");

    std::vector<std::size_t> order(normals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return normals[a] > normals[b]; });
    std::vector<double> top(top_n);
    for (std::size_t i = 0; i < top_n; ++i) top[i] = normals[order[i]];
    std::sort(top.begin(), top.end());

    std::uint64_t wins = 0;
    for (double a : anomalies)
        wins += static_cast<std::uint64_t>(
            std::lower_bound(top.begin(), top.end(), a) - top.begin());
    return static_cast<double>(wins) /
           (static_cast<double>(top_n) * static_cast<double>(anomalies.size()));
}

// Official score: harmonic mean over all AUC and pAUC values; any zero
// input pins the mean to zero (limit convention).
inline double official_score(const std::vector<double>& values) {
    if (values.empty()) throw EmptyList("official_score over empty list");
    double recip_sum = 0.0;
    for (double v : values) {
        if (v < 0.0 || v > 1.0) throw Error("metric value outside [0, 1]");
        if (v == 0.0) return 0.0;
        recip_sum += 1.0 / v;
    }
    return static_cast<double>(values.size()) / recip_sum;
}

struct EvalRow {
    std::string machine_type;
    int section = 0;
    double auc_source = 0.0;
    double auc_target = 0.0;
    double pauc = 0.0;
    std::size_t n_normal_source = 0, n_normal_target = 0, n_anomaly = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double p = 0.1;
    double official = 0.0;
};

// Clip names repeat across machine directories, so score maps are keyed by
// "<machine>/<filename>".
inline std::string score_key(const ClipMetadata& clip) {
    return clip.machine_type + "/" + clip.path.filename().string();
}

// Full protocol over a manifest's labeled test partition: two domain AUCs
// and one pAUC per (machine, section), then the harmonic mean over all of
// them. Scores are keyed by score_key().
inline EvalReport evaluate(const CorpusManifest& manifest,
                           const std::map<std::string, double>& scores, double p = 0.1) {
    EvalReport report;
    report.p = p;
    std::vector<double> all_values;
    for (const auto& group : manifest.groups) {
        std::vector<double> normals_source, normals_target, normals_all, anomalies;
        for (const auto& clip : group.test) {
            if (clip.label == Label::unknown || clip.domain == Domain::unknown)
                throw UnlabeledData(
                    "evaluation-style clip without label/domain: " +
                    clip.path.filename().string() +
                    " (only score/decision export is possible for this corpus)");
            const auto it = scores.find(score_key(clip));
            if (it == scores.end())
                throw MissingScores("no score for " + score_key(clip));
            if (clip.label == Label::anomaly) {
                anomalies.push_back(it->second);
            } else {
                normals_all.push_back(it->second);
                (clip.domain == Domain::source ? normals_source : normals_target)
                    .push_back(it->second);
            }
        }
        if (normals_source.empty() || normals_target.empty())
            throw EmptyList(group.machine_type +
                            ": both domains must be represented among labeled normals");
        EvalRow row;
        row.machine_type = group.machine_type;
        row.section = group.section;
        row.auc_source = auc_domain(normals_source, anomalies);
        row.auc_target = auc_domain(normals_target, anomalies);
        row.pauc = pauc_section(normals_all, anomalies, p);
        row.n_normal_source = normals_source.size();
        row.n_normal_target = normals_target.size();
        row.n_anomaly = anomalies.size();
        all_values.push_back(row.auc_source);
        all_values.push_back(row.auc_target);
        all_values.push_back(row.pauc);
        report.rows.push_back(std::move(row));
    }
    report.official = official_score(all_values);
    return report;
}

inline void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << "machine,section,auc_source,auc_target,pauc\n";
    char nn[8];
    for (const auto& r : report.rows) {
        std::snprintf(nn, sizeof nn, "%02d", r.section);
        f << r.machine_type << ',' << nn << ',' << format_score(r.auc_source) << ','
          << format_score(r.auc_target) << ',' << format_score(r.pauc) << '\n';
    }
    f << "official_score," << format_score(report.official) << '\n';
}

inline void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    j["p"] = report.p;
    j["official_score"] = report.official;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row;
        row["machine"] = r.machine_type;
        row["section"] = r.section;
        row["auc_source"] = r.auc_source;
        row["auc_target"] = r.auc_target;
        row["pauc"] = r.pauc;
        row["n_normal_source"] = r.n_normal_source;
        row["n_normal_target"] = r.n_normal_target;
        row["n_anomaly"] = r.n_anomaly;
        j["rows"].push_back(std::move(row));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

}  // namespace asd
