#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "asd/errors.hpp"
#include "asd/matrix.hpp"

namespace asd {

struct TooShort : Error {
    using Error::Error;
};
struct TooFewFrames : Error {
    using Error::Error;
};
struct DegenerateBand : Error {
    using Error::Error;
};

struct FeatureConfig {
    int sample_rate_hz = 16000;
    int fft_size = 1024;
    int hop = 512;
    int n_mels = 128;        // F
    int context_frames = 5;  // P
    double mel_fmin_hz = 0.0;
    double mel_fmax_hz = 8000.0;
    double log_floor = 1e-10;

    int feature_dim() const { return n_mels * context_frames; }  // D = P*F

    void validate() const {
        if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
            throw ConfigError("fft_size must be a power of two");
        if (hop < 1 || hop > fft_size) throw ConfigError("hop must be in [1, fft_size]");
        if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
        if (context_frames < 1) throw ConfigError("context_frames must be >= 1");
        if (mel_fmax_hz > sample_rate_hz / 2.0)
            throw ConfigError("mel_fmax above Nyquist");
        if (log_floor <= 0.0) throw ConfigError("log_floor must be positive");
    }

    bool operator==(const FeatureConfig&) const = default;
};

struct FeatureMatrix {
    Matrix vectors;  // K' x D
    FeatureConfig config;
};

namespace detail {

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace detail

// Power spectrogram: row k holds |DFT(hann * frame_k)|^2 for the first
// fft_size/2+1 bins, frames hopping by cfg.hop.
inline Matrix stft_power(const std::vector<double>& wave, const FeatureConfig& cfg) {
    cfg.validate();
    const std::size_t n = static_cast<std::size_t>(cfg.fft_size);
    if (wave.size() < n)
        throw TooShort("waveform shorter than one FFT frame");
    const std::size_t k_frames = (wave.size() - n) / cfg.hop + 1;
    const std::size_t bins = n / 2 + 1;

    std::vector<double> window(n);
    for (std::size_t i = 0; i < n; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(n));

    Matrix power(k_frames, bins);
    std::vector<std::complex<double>> buf(n);
    for (std::size_t k = 0; k < k_frames; ++k) {
        const std::size_t off = k * cfg.hop;
        for (std::size_t i = 0; i < n; ++i) buf[i] = wave[off + i] * window[i];
        detail::fft_radix2(buf);
        double* row = power.row_ptr(k);
        for (std::size_t b = 0; b < bins; ++b) row[b] = std::norm(buf[b]);
    }
    return power;
}

// F triangular filters with centers equally spaced on the mel scale between
// fmin and fmax. Rows are not area-normalized.
inline Matrix mel_filterbank(const FeatureConfig& cfg) {
    cfg.validate();
    if (cfg.mel_fmin_hz >= cfg.mel_fmax_hz)
        throw DegenerateBand("mel_fmin must be below mel_fmax");
    const int bins = cfg.fft_size / 2 + 1;
    const double mel_lo = detail::hz_to_mel(cfg.mel_fmin_hz);
    const double mel_hi = detail::hz_to_mel(cfg.mel_fmax_hz);

    // F+2 edge points in Hz; filter f spans edges [f, f+2] peaking at f+1.
    std::vector<double> edge_hz(cfg.n_mels + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i)
        edge_hz[i] = detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

    const double hz_per_bin = static_cast<double>(cfg.sample_rate_hz) / cfg.fft_size;
    Matrix fb(cfg.n_mels, bins);
    for (int f = 0; f < cfg.n_mels; ++f) {
        const double lo = edge_hz[f], mid = edge_hz[f + 1], hi = edge_hz[f + 2];
        bool any = false;
        for (int b = 0; b < bins; ++b) {
            const double hz = b * hz_per_bin;
            double w = 0.0;
            if (hz > lo && hz < mid)
                w = (hz - lo) / (mid - lo);
            else if (hz >= mid && hz < hi)
                w = (hi - hz) / (hi - mid);
            if (w > 0.0) any = true;
            fb(f, b) = w;
        }
        if (!any)
            throw DegenerateBand("mel filter " + std::to_string(f) +
                                 " covers no FFT bin; reduce n_mels or widen the band");
    }
    return fb;
}

// 10*log10(max(filterbank . power, log_floor)) per frame; finite everywhere.
inline Matrix log_mel(const std::vector<double>& wave, const FeatureConfig& cfg) {
    const Matrix power = stft_power(wave, cfg);
    const Matrix fb = mel_filterbank(cfg);
    Matrix out(power.rows(), fb.rows());
    for (std::size_t k = 0; k < power.rows(); ++k) {
        const double* prow = power.row_ptr(k);
        for (std::size_t f = 0; f < fb.rows(); ++f) {
            const double* frow = fb.row_ptr(f);
            double acc = 0.0;
            for (std::size_t b = 0; b < power.cols(); ++b) acc += frow[b] * prow[b];
            out(k, f) = 10.0 * std::log10(std::max(acc, cfg.log_floor));
        }
    }
    return out;
}

// Context-window concatenation: row k of the result is log-mel rows
// k..k+P-1 laid out in time order, so entry (k, p*F+f) = logmel(k+p, f).
inline Matrix context_frames(const Matrix& logmel, int context) {
    if (context < 1) throw ConfigError("context must be >= 1");
    if (logmel.rows() < static_cast<std::size_t>(context))
        throw TooFewFrames("need at least P log-mel frames");
    const std::size_t k_out = logmel.rows() - context + 1;
    const std::size_t f = logmel.cols();
    Matrix out(k_out, static_cast<std::size_t>(context) * f);
    for (std::size_t k = 0; k < k_out; ++k)
        for (int p = 0; p < context; ++p)
            std::copy_n(logmel.row_ptr(k + p), f, out.row_ptr(k) + p * f);
    return out;
}

inline FeatureMatrix extract_features(const std::vector<double>& wave,
                                      const FeatureConfig& cfg) {
    return {context_frames(log_mel(wave, cfg), cfg.context_frames), cfg};
}

namespace detail {

inline void put_u32_le(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

// Debug dump: 16-byte header (8-byte magic, u32 K', u32 D, little-endian)
// followed by row-major float32 values.
inline void write_feature_dump(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write("ASDFEAT\0", 8);
    detail::put_u32_le(f, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32_le(f, static_cast<std::uint32_t>(m.cols()));
    std::vector<float> row(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c)
            row[c] = static_cast<float>(m(r, c));
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace asd
