#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "asd/features.hpp"
#include "asd/rng.hpp"

using namespace asd;

namespace {

FeatureConfig small_config() {
    FeatureConfig cfg;
    cfg.fft_size = 256;
    cfg.hop = 128;
    cfg.n_mels = 8;
    cfg.context_frames = 3;
    return cfg;
}

// Direct O(N^2) DFT of one Hann-windowed frame; the independent oracle for
// the FFT-based stft_power path.
std::vector<double> dft_power_frame(const std::vector<double>& wave, std::size_t offset,
                                    std::size_t n) {
    std::vector<double> out(n / 2 + 1);
    for (std::size_t b = 0; b <= n / 2; ++b) {
        std::complex<double> acc;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                                  static_cast<double>(i) /
                                                  static_cast<double>(n));
            acc += wave[offset + i] * w *
                   std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(b * i) /
                                       static_cast<double>(n));
        }
        out[b] = std::norm(acc);
    }
    return out;
}

}  // namespace

TEST(StftPower, ZeroWaveIsZero) {
    const auto cfg = small_config();
    const std::vector<double> wave(1024, 0.0);
    const auto power = stft_power(wave, cfg);
    for (double v : power.data()) ASSERT_EQ(v, 0.0);
}

TEST(StftPower, FrameCountFormula) {
    const auto cfg = small_config();
    EXPECT_EQ(stft_power(std::vector<double>(256, 0.1), cfg).rows(), 1u);
    EXPECT_EQ(stft_power(std::vector<double>(256 + 128, 0.1), cfg).rows(), 2u);
    EXPECT_EQ(stft_power(std::vector<double>(1000, 0.1), cfg).rows(),
              (1000u - 256u) / 128u + 1u);
    EXPECT_THROW(stft_power(std::vector<double>(255, 0.1), cfg), TooShort);
}

TEST(StftPower, MatchesDirectDftOracle) {
    const auto cfg = small_config();
    CounterRng rng(5);
    std::vector<double> wave(700);
    for (auto& v : wave) v = rng.uniform(-1.0, 1.0);
    const auto power = stft_power(wave, cfg);
    for (std::size_t k = 0; k < power.rows(); ++k) {
        const auto oracle = dft_power_frame(wave, k * cfg.hop, cfg.fft_size);
        for (std::size_t b = 0; b < oracle.size(); ++b)
            ASSERT_NEAR(power(k, b), oracle[b], 1e-9 * (1.0 + oracle[b]))
                << "frame " << k << " bin " << b;
    }
}

TEST(StftPower, PureSinePeaksAtItsBin) {
    const auto cfg = small_config();
    const int bin = 32;
    const double freq = static_cast<double>(bin) * cfg.sample_rate_hz / cfg.fft_size;
    std::vector<double> wave(512);
    for (std::size_t i = 0; i < wave.size(); ++i)
        wave[i] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) /
                           cfg.sample_rate_hz);
    const auto power = stft_power(wave, cfg);
    for (std::size_t k = 0; k < power.rows(); ++k) {
        std::size_t argmax = 0;
        for (std::size_t b = 1; b < power.cols(); ++b)
            if (power(k, b) > power(k, argmax)) argmax = b;
        EXPECT_EQ(argmax, static_cast<std::size_t>(bin));
    }
}

TEST(MelFilterbank, ShapeAndNonNegativity) {
    FeatureConfig cfg;
    cfg.fft_size = 1024;
    cfg.n_mels = 128;
    const auto fb = mel_filterbank(cfg);
    EXPECT_EQ(fb.rows(), 128u);
    EXPECT_EQ(fb.cols(), 513u);
    for (double v : fb.data()) ASSERT_GE(v, 0.0);
    for (std::size_t f = 0; f < fb.rows(); ++f) {
        double row_sum = 0.0;
        for (std::size_t b = 0; b < fb.cols(); ++b) row_sum += fb(f, b);
        ASSERT_GT(row_sum, 0.0) << "filter " << f;
    }
}

TEST(MelFilterbank, SingleFilterSpansBand) {
    FeatureConfig cfg;
    cfg.fft_size = 256;
    cfg.hop = 128;
    cfg.n_mels = 1;
    cfg.mel_fmin_hz = 1000.0;
    cfg.mel_fmax_hz = 4000.0;
    const auto fb = mel_filterbank(cfg);
    ASSERT_EQ(fb.rows(), 1u);
    const double hz_per_bin = 16000.0 / 256.0;
    for (std::size_t b = 0; b < fb.cols(); ++b) {
        const double hz = b * hz_per_bin;
        if (hz <= 1000.0 || hz >= 4000.0) ASSERT_EQ(fb(0, b), 0.0);
    }
}

TEST(MelFilterbank, CentersStrictlyIncreasing) {
    FeatureConfig cfg;
    cfg.fft_size = 1024;
    cfg.n_mels = 64;
    const auto fb = mel_filterbank(cfg);
    double prev_center = -1.0;
    for (std::size_t f = 0; f < fb.rows(); ++f) {
        double weighted = 0.0, total = 0.0;
        for (std::size_t b = 0; b < fb.cols(); ++b) {
            weighted += fb(f, b) * static_cast<double>(b);
            total += fb(f, b);
        }
        const double center = weighted / total;
        ASSERT_GT(center, prev_center) << "filter " << f;
        prev_center = center;
    }
}

TEST(MelFilterbank, DegenerateBandErrors) {
    FeatureConfig cfg;
    cfg.mel_fmin_hz = 5000.0;
    cfg.mel_fmax_hz = 4000.0;
    EXPECT_THROW(mel_filterbank(cfg), DegenerateBand);
    cfg = FeatureConfig{};
    cfg.fft_size = 64;  // 33 bins cannot host 128 filters
    cfg.hop = 32;
    EXPECT_THROW(mel_filterbank(cfg), DegenerateBand);
}

TEST(LogMel, ZeroWaveHitsFloor) {
    const auto cfg = small_config();
    const auto lm = log_mel(std::vector<double>(1024, 0.0), cfg);
    const double expect = 10.0 * std::log10(cfg.log_floor);
    for (double v : lm.data()) ASSERT_DOUBLE_EQ(v, expect);
}

TEST(LogMel, TenfoldScaleShiftsBy20dB) {
    const auto cfg = small_config();
    CounterRng rng(8);
    std::vector<double> wave(1024), scaled(1024);
    for (std::size_t i = 0; i < wave.size(); ++i) {
        wave[i] = rng.uniform(-0.05, 0.05);
        scaled[i] = 10.0 * wave[i];
    }
    const auto a = log_mel(wave, cfg);
    const auto b = log_mel(scaled, cfg);
    const double floor_db = 10.0 * std::log10(cfg.log_floor);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] > floor_db + 1.0)
            ASSERT_NEAR(b.data()[i] - a.data()[i], 20.0, 1e-9);
}

TEST(LogMel, SweepArgmaxNonDecreasing) {
    const auto cfg = small_config();
    // Linear sweep 100 Hz -> 6 kHz over 2 s.
    const std::size_t n = 32000;
    std::vector<double> wave(n);
    double phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = 100.0 + (6000.0 - 100.0) * static_cast<double>(i) / n;
        phase += 2.0 * std::numbers::pi * f / 16000.0;
        wave[i] = std::sin(phase);
    }
    const auto lm = log_mel(wave, cfg);
    std::size_t prev = 0;
    for (std::size_t k = 0; k < lm.rows(); ++k) {
        std::size_t argmax = 0;
        for (std::size_t f = 1; f < lm.cols(); ++f)
            if (lm(k, f) > lm(k, argmax)) argmax = f;
        ASSERT_GE(argmax + 1, prev) << "frame " << k;  // allow plateau inside one mel band
        prev = std::max(prev, argmax);
    }
}

TEST(ContextFrames, ShapeAndIdentityCases) {
    Matrix lm(10, 3);
    for (std::size_t i = 0; i < lm.size(); ++i) lm.data()[i] = static_cast<double>(i);
    const auto out = context_frames(lm, 5);
    EXPECT_EQ(out.rows(), 6u);
    EXPECT_EQ(out.cols(), 15u);
    const auto same = context_frames(lm, 1);
    EXPECT_TRUE(same == lm);
    EXPECT_THROW(context_frames(lm, 11), TooFewFrames);
}

// Index oracle: entry (k, p*F + f) == logmel(k + p, f).
TEST(ContextFrames, IndexOracle) {
    CounterRng rng(3);
    Matrix lm(17, 5);
    for (auto& v : lm.data()) v = rng.uniform(-10.0, 10.0);
    const int context = 4;
    const auto out = context_frames(lm, context);
    for (int trial = 0; trial < 200; ++trial) {
        const auto k = static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(out.rows())));
        const auto p = static_cast<std::size_t>(rng.uniform(0.0, context));
        const auto f = static_cast<std::size_t>(rng.uniform(0.0, 5.0));
        ASSERT_EQ(out(k, p * 5 + f), lm(k + p, f));
    }
}

// The context matrix is a pure reindexing with known multiplicities: frame
// t of the log-mel appears min(t, K'-1, P-1, K-1-t)+1 times.
TEST(ContextFrames, ValueMultiset) {
    CounterRng rng(4);
    Matrix lm(9, 2);
    for (auto& v : lm.data()) v = rng.uniform(0.0, 1.0);
    const int context = 3;
    const auto out = context_frames(lm, context);
    double lm_weighted = 0.0, out_sum = 0.0;
    const std::size_t k_out = lm.rows() - context + 1;
    for (std::size_t t = 0; t < lm.rows(); ++t) {
        const std::size_t mult =
            std::min({t, k_out - 1, static_cast<std::size_t>(context - 1),
                      lm.rows() - 1 - t}) + 1;
        for (std::size_t f = 0; f < lm.cols(); ++f)
            lm_weighted += static_cast<double>(mult) * lm(t, f);
    }
    for (double v : out.data()) out_sum += v;
    EXPECT_NEAR(lm_weighted, out_sum, 1e-9);
}

TEST(Pipeline, DeterministicFeatures) {
    const auto cfg = small_config();
    CounterRng rng(9);
    std::vector<double> wave(4000);
    for (auto& v : wave) v = rng.uniform(-0.5, 0.5);
    const auto a = extract_features(wave, cfg);
    const auto b = extract_features(wave, cfg);
    EXPECT_TRUE(a.vectors == b.vectors);
    EXPECT_TRUE(a.vectors.all_finite());
}
