#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "asd/autoencoder.hpp"
#include "asd/dataset.hpp"
#include "asd/errors.hpp"
#include "asd/features.hpp"
#include "asd/matrix.hpp"

namespace asd {

struct ConfigMismatch : ConfigError {
    using ConfigError::ConfigError;
};
struct TooFewResidualFrames : Error {
    using Error::Error;
};
struct SingularAfterRidge : Error {
    using Error::Error;
};
struct EmptyScores : Error {
    using Error::Error;
};

// Simple Autoencoder mode: mean squared reconstruction error per dimension,
// averaged over the clip's context vectors.
inline double score_simple(const AeModel& model, const FeatureMatrix& features) {
    if (!(features.config == model.feature_config))
        throw ConfigMismatch("feature config differs from the model's");
    const Matrix recon = forward(model, features.vectors);
    double acc = 0.0;
    for (std::size_t i = 0; i < features.vectors.size(); ++i) {
        const double e = features.vectors.data()[i] - recon.data()[i];
        acc += e * e;
    }
    return acc / static_cast<double>(features.vectors.size());
}

// Residual covariances of one section's training frames, per domain, with a
// trace-scaled ridge so the target side (10 clips) stays invertible.
struct DomainCovariances {
    Matrix sigma_source, sigma_target;          // unbiased sample covariances
    Matrix inv_source, inv_target;              // inverses of the ridged matrices
    std::size_t frames_source = 0, frames_target = 0;
    double ridge_source = 0.0, ridge_target = 0.0;
    double ridge_scale = 0.0;
};

namespace detail {

inline Matrix residuals(const AeModel& model, const Matrix& frames) {
    Matrix r = forward(model, frames);
    for (std::size_t i = 0; i < r.size(); ++i)
        r.data()[i] = frames.data()[i] - r.data()[i];
    return r;
}

inline Matrix sample_covariance(const Matrix& rows) {
    const std::size_t n = rows.rows(), d = rows.cols();
    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) mean[c] += rows(r, c);
    for (double& m : mean) m /= static_cast<double>(n);
    Matrix cov(d, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i) {
            const double di = rows(r, i) - mean[i];
            for (std::size_t j = i; j < d; ++j)
                cov(i, j) += di * (rows(r, j) - mean[j]);
        }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= static_cast<double>(n - 1);
            cov(j, i) = cov(i, j);
        }
    return cov;
}

// Inverts sigma + ridge*I and verifies the product against identity.
inline Matrix ridged_inverse(const Matrix& sigma, double ridge, const char* which) {
    Matrix reg = sigma;
    for (std::size_t i = 0; i < reg.rows(); ++i) reg(i, i) += ridge;
    Matrix inv;
    try {
        inv = spd_inverse(reg);
    } catch (const Error&) {
        throw SingularAfterRidge(std::string(which) +
                                 " covariance not positive definite after ridge");
    }
    const Matrix prod = matmul(reg, inv);
    double max_err = 0.0;
    for (std::size_t i = 0; i < prod.rows(); ++i)
        for (std::size_t j = 0; j < prod.cols(); ++j)
            max_err = std::max(max_err,
                               std::abs(prod(i, j) - (i == j ? 1.0 : 0.0)));
    if (max_err >= 1e-6)
        throw SingularAfterRidge(std::string(which) +
                                 " covariance inverse check failed (max err " +
                                 std::to_string(max_err) + ")");
    return inv;
}

}  // namespace detail

inline DomainCovariances fit_covariances(const AeModel& model,
                                         const Matrix& source_frames,
                                         const Matrix& target_frames,
                                         double ridge_scale = 1e-3) {
    if (source_frames.rows() < 2 || target_frames.rows() < 2)
        throw TooFewResidualFrames("need at least 2 frames per domain");
    if (source_frames.cols() != target_frames.cols())
        throw ShapeMismatch("domain frame widths differ");

    DomainCovariances cov;
    cov.ridge_scale = ridge_scale;
    const std::size_t d = source_frames.cols();

    const Matrix res_s = detail::residuals(model, source_frames);
    const Matrix res_t = detail::residuals(model, target_frames);
    cov.sigma_source = detail::sample_covariance(res_s);
    cov.sigma_target = detail::sample_covariance(res_t);
    cov.frames_source = source_frames.rows();
    cov.frames_target = target_frames.rows();

    // Trace-scaled ridge; a covariance with zero trace (identical residual
    // frames) falls back to the absolute scale so it still regularizes to
    // eps*I rather than staying singular.
    auto ridge_for = [&](const Matrix& m) {
        double t = 0.0;
        for (std::size_t i = 0; i < d; ++i) t += m(i, i);
        const double mean_var = t / static_cast<double>(d);
        return ridge_scale * (mean_var > 0.0 ? mean_var : 1.0);
    };
    cov.ridge_source = ridge_for(cov.sigma_source);
    cov.ridge_target = ridge_for(cov.sigma_target);
    cov.inv_source = detail::ridged_inverse(cov.sigma_source, cov.ridge_source, "source");
    cov.inv_target = detail::ridged_inverse(cov.sigma_target, cov.ridge_target, "target");
    return cov;
}

// Selective Mahalanobis mode: per context vector, the smaller of the squared
// Mahalanobis forms of the residual under the source and target covariances,
// averaged with the same normalization as the simple mode. With identity
// covariances this reduces exactly to score_simple.
inline double score_mahalanobis(const AeModel& model, const DomainCovariances& cov,
                                const FeatureMatrix& features) {
    if (!(features.config == model.feature_config))
        throw ConfigMismatch("feature config differs from the model's");
    const std::size_t d = features.vectors.cols();
    if (cov.inv_source.rows() != d)
        throw ConfigMismatch("covariance dimension differs from feature dimension");

    const Matrix res = detail::residuals(model, features.vectors);
    std::vector<double> tmp(d);
    auto quad_form = [&](const Matrix& inv, const double* e) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double* row = inv.row_ptr(i);
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += row[j] * e[j];
            acc += e[i] * s;
        }
        return acc;
    };
    double total = 0.0;
    for (std::size_t k = 0; k < res.rows(); ++k) {
        const double* e = res.row_ptr(k);
        total += std::min(quad_form(cov.inv_source, e), quad_form(cov.inv_target, e));
    }
    return total / static_cast<double>(res.rows() * d);
}

struct Threshold {
    double value = 0.0;
    std::string method;
    std::size_t sample_count = 0;
};

// Empirical q-quantile with linear interpolation between order statistics
// (the R-7 definition).
inline Threshold calibrate_threshold(std::vector<double> scores, double q) {
    if (scores.empty()) throw EmptyScores("no calibration scores");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile must be in (0, 1)");
    for (double s : scores)
        if (!std::isfinite(s)) throw Error("non-finite calibration score");
    std::sort(scores.begin(), scores.end());
    const double h = q * static_cast<double>(scores.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, scores.size() - 1);
    const double frac = h - static_cast<double>(lo);
    Threshold t;
    t.value = scores[lo] + frac * (scores[hi] - scores[lo]);
    t.method = "train-quantile";
    t.sample_count = scores.size();
    return t;
}

// Decision rule: anomaly iff the score strictly exceeds the threshold.
inline Label decide(double score, const Threshold& threshold) {
    if (!std::isfinite(score)) throw Error("non-finite score in decide");
    return score > threshold.value ? Label::anomaly : Label::normal;
}

// ---------------------------------------------------------------------------
// Covariance sidecar: "ASDCV" magic, version, dimension, per-domain frame
// counts, ridge metadata, then the four matrices as little-endian f64.

namespace detail {

inline constexpr char kCovMagic[6] = {'A', 'S', 'D', 'C', 'V', '\0'};
inline constexpr std::uint32_t kCovVersion = 1;

}  // namespace detail

inline void save_covariances(const DomainCovariances& cov,
                             const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(detail::kCovMagic, 6);
    detail::put_u32(f, detail::kCovVersion);
    detail::put_u32(f, static_cast<std::uint32_t>(cov.sigma_source.rows()));
    detail::put_u64(f, cov.frames_source);
    detail::put_u64(f, cov.frames_target);
    detail::put_f64(f, cov.ridge_scale);
    detail::put_f64(f, cov.ridge_source);
    detail::put_f64(f, cov.ridge_target);
    for (const Matrix* m : {&cov.sigma_source, &cov.sigma_target, &cov.inv_source,
                            &cov.inv_target})
        for (double v : m->data()) detail::put_f64(f, v);
    if (!f) throw IoError("write failed: " + path.string());
}

inline DomainCovariances load_covariances(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    char magic[6];
    if (!f.read(magic, 6) || std::memcmp(magic, detail::kCovMagic, 6) != 0)
        throw CorruptFile("bad magic in " + path.string());
    const std::uint32_t version = detail::get_u32(f, "version");
    if (version != detail::kCovVersion)
        throw VersionMismatch("covariance version " + std::to_string(version) +
                              " unsupported");
    DomainCovariances cov;
    const auto d = detail::get_u32(f, "dimension");
    cov.frames_source = detail::get_u64(f, "frame count");
    cov.frames_target = detail::get_u64(f, "frame count");
    cov.ridge_scale = detail::get_f64(f, "ridge");
    cov.ridge_source = detail::get_f64(f, "ridge");
    cov.ridge_target = detail::get_f64(f, "ridge");
    for (Matrix* m : {&cov.sigma_source, &cov.sigma_target, &cov.inv_source,
                      &cov.inv_target}) {
        *m = Matrix(d, d);
        for (double& v : m->data()) v = detail::get_f64(f, "matrix");
    }
    f.peek();
    if (!f.eof()) throw CorruptFile("trailing bytes in " + path.string());
    return cov;
}

}  // namespace asd
