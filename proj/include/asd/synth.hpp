#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "asd/dataset.hpp"
#include "asd/errors.hpp"
#include "asd/rng.hpp"
#include "asd/wav.hpp"

namespace asd {

struct InvalidSpec : ConfigError {
    using ConfigError::ConfigError;
};

struct MachineSpec {
    std::string name;
    double fundamental_hz = 170.0;
    int n_harmonics = 6;
    double harmonic_decay = 0.7;  // amplitude ratio per harmonic
    double noise_low_hz = 400.0;
    double noise_high_hz = 6000.0;
    double snr_db = 10.0;
    double clip_seconds = 6.0;
    // Target-domain shift.
    double target_fundamental_scale = 1.1;
    double target_snr_delta_db = -3.0;
    // Anomaly model: Poisson-timed broadband bursts.
    double burst_rate_hz = 1.0;
    double burst_gain_db = 12.0;

    void validate() const {
        if (name.empty()) throw InvalidSpec("machine name empty");
        if (!(fundamental_hz > 0.0 && fundamental_hz < 8000.0))
            throw InvalidSpec(name + ": fundamental must be in (0, 8000) Hz");
        if (n_harmonics < 1) throw InvalidSpec(name + ": need at least one harmonic");
        if (!(harmonic_decay > 0.0)) throw InvalidSpec(name + ": harmonic_decay must be > 0");
        if (!(noise_low_hz > 0.0 && noise_low_hz < noise_high_hz &&
              noise_high_hz <= 8000.0))
            throw InvalidSpec(name + ": bad noise band");
        if (clip_seconds < 6.0 || clip_seconds > 18.0)
            throw InvalidSpec(name + ": clip_seconds must be in [6, 18]");
        if (burst_rate_hz < 0.0) throw InvalidSpec(name + ": burst_rate_hz must be >= 0");
    }
};

struct SynthCounts {
    int train_source = 990;
    int train_target = 10;
    int test_normal_per_domain = 100;
    int test_anomaly_per_domain = 100;
};

struct SynthConfig {
    std::uint64_t seed = 0;
    std::vector<MachineSpec> machines;
    SynthCounts counts;
    std::filesystem::path output_root;

    void validate() const {
        if (machines.empty()) throw InvalidSpec("no machines configured");
        for (const auto& m : machines) m.validate();
        for (std::size_t i = 0; i < machines.size(); ++i)
            for (std::size_t j = i + 1; j < machines.size(); ++j)
                if (machines[i].name == machines[j].name)
                    throw InvalidSpec("duplicate machine name " + machines[i].name);
        if (counts.train_source < 1 || counts.train_target < 1 ||
            counts.test_normal_per_domain < 1 || counts.test_anomaly_per_domain < 1)
            throw InvalidSpec("all counts must be >= 1");
    }
};

// Substream key for one clip; generation order never affects samples. The
// split is part of the key so test normals are fresh draws, never copies of
// training clips with the same index.
inline std::uint64_t clip_stream_key(std::uint64_t seed, const std::string& machine,
                                     Domain domain, Split split, Label condition,
                                     int index) {
    std::uint64_t k = hash_combine(seed, hash_str(machine));
    k = hash_combine(k, static_cast<std::uint64_t>(domain) + 1);
    k = hash_combine(k, static_cast<std::uint64_t>(split) + 51);
    k = hash_combine(k, static_cast<std::uint64_t>(condition) + 101);
    return hash_combine(k, static_cast<std::uint64_t>(index));
}

namespace detail {

// First-order high-pass + low-pass cascade; enough band shaping for a
// synthetic fixture, and exactly reproducible.
inline void bandpass_inplace(std::vector<double>& x, double lo_hz, double hi_hz) {
    const double dt = 1.0 / kSampleRate;
    const double rc_hp = 1.0 / (2.0 * std::numbers::pi * lo_hz);
    const double a_hp = rc_hp / (rc_hp + dt);
    const double rc_lp = 1.0 / (2.0 * std::numbers::pi * hi_hz);
    const double a_lp = dt / (rc_lp + dt);
    double prev_in = 0.0, hp = 0.0, lp = 0.0;
    for (double& v : x) {
        hp = a_hp * (hp + v - prev_in);
        prev_in = v;
        lp += a_lp * (hp - lp);
        v = lp;
    }
}

inline double rms(const std::vector<double>& x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace detail

// One clip: harmonic stack + band-limited noise at the spec SNR; the target
// domain scales the fundamental and shifts the SNR; anomalies add
// Poisson-timed broadband bursts. Burst amplitude is
// rms_tonal * max(10^(gain_db/20) - 1, 0), so gain_db <= 0 degenerates to a
// clip statistically identical to a normal one and gain -> -inf converges
// sample-wise to the paired normal clip on the same substream.
inline std::vector<double> synth_clip(const MachineSpec& spec, Domain domain,
                                      Label condition, CounterRng& rng) {
    spec.validate();
    const std::size_t n =
        static_cast<std::size_t>(std::llround(spec.clip_seconds * kSampleRate));

    const double f0 = spec.fundamental_hz *
                      (domain == Domain::target ? spec.target_fundamental_scale : 1.0);
    const double snr_db =
        spec.snr_db + (domain == Domain::target ? spec.target_snr_delta_db : 0.0);

    // Harmonic stack with random phases, scaled to a fixed RMS so the SNR
    // and burst levels are anchored.
    std::vector<double> phases(spec.n_harmonics);
    for (auto& p : phases) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> wave(n, 0.0);
    double amp = 1.0;
    for (int h = 1; h <= spec.n_harmonics; ++h) {
        const double w = 2.0 * std::numbers::pi * f0 * h / kSampleRate;
        for (std::size_t i = 0; i < n; ++i)
            wave[i] += amp * std::sin(w * static_cast<double>(i) + phases[h - 1]);
        amp *= spec.harmonic_decay;
    }
    // Low enough that bursts up to ~+14 dB keep the peak under 0.9, so the
    // normalization below stays inactive on default specs.
    constexpr double kTonalRms = 0.05;
    const double tonal_scale = kTonalRms / std::max(detail::rms(wave), 1e-12);
    for (double& v : wave) v *= tonal_scale;

    // Band-limited noise at the requested SNR below the tonal level.
    std::vector<double> noise(n);
    for (auto& v : noise) v = rng.gaussian();
    detail::bandpass_inplace(noise, spec.noise_low_hz, spec.noise_high_hz);
    const double noise_rms = kTonalRms * std::pow(10.0, -snr_db / 20.0);
    const double noise_scale = noise_rms / std::max(detail::rms(noise), 1e-12);
    for (std::size_t i = 0; i < n; ++i) wave[i] += noise[i] * noise_scale;

    if (condition == Label::anomaly) {
        const double burst_rms =
            kTonalRms * std::max(std::pow(10.0, spec.burst_gain_db / 20.0) - 1.0, 0.0);
        const std::size_t burst_len = kSampleRate / 20;  // 50 ms
        const auto n_bursts = rng.poisson(spec.burst_rate_hz * spec.clip_seconds);
        for (std::uint64_t b = 0; b < n_bursts; ++b) {
            const auto start = static_cast<std::size_t>(
                rng.uniform(0.0, static_cast<double>(n - burst_len)));
            for (std::size_t i = 0; i < burst_len; ++i) {
                const double env =
                    0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(burst_len));
                wave[start + i] += burst_rms * env * rng.gaussian();
            }
        }
    }

    const double peak =
        std::max(std::abs(*std::max_element(wave.begin(), wave.end())),
                 std::abs(*std::min_element(wave.begin(), wave.end())));
    if (peak > 0.9)
        for (double& v : wave) v *= 0.9 / peak;
    return wave;
}

// Writes the full corpus tree in the challenge layout and re-scans it into
// a manifest. Clip indices start at 1 within each (domain, condition) set.
inline CorpusManifest synth_corpus(const SynthConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.validate();

    auto emit = [&](const MachineSpec& spec, Domain domain, Split split,
                    Label condition, int count, const fs::path& dir) {
        for (int i = 1; i <= count; ++i) {
            CounterRng rng(
                clip_stream_key(cfg.seed, spec.name, domain, split, condition, i));
            const auto wave = synth_clip(spec, domain, condition, rng);
            ClipMetadata meta;
            meta.section = 0;
            meta.domain = domain;
            meta.split = split;
            meta.label = condition;
            meta.clip_index = i;
            write_wav(dir / meta.filename(), wave);
        }
    };

    for (const auto& spec : cfg.machines) {
        const fs::path train_dir = cfg.output_root / spec.name / "train";
        const fs::path test_dir = cfg.output_root / spec.name / "test";
        std::error_code ec;
        fs::create_directories(train_dir, ec);
        fs::create_directories(test_dir, ec);
        if (!fs::is_directory(train_dir) || !fs::is_directory(test_dir))
            throw IoError("cannot create corpus directories under " +
                          cfg.output_root.string());

        emit(spec, Domain::source, Split::train, Label::normal, cfg.counts.train_source,
             train_dir);
        emit(spec, Domain::target, Split::train, Label::normal, cfg.counts.train_target,
             train_dir);
        for (Domain d : {Domain::source, Domain::target}) {
            emit(spec, d, Split::test, Label::normal, cfg.counts.test_normal_per_domain,
                 test_dir);
            emit(spec, d, Split::test, Label::anomaly,
                 cfg.counts.test_anomaly_per_domain, test_dir);
        }
    }
    return scan_corpus(cfg.output_root);
}

}  // namespace asd
