#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "asd/autoencoder.hpp"
#include "asd/errors.hpp"
#include "asd/features.hpp"
#include "asd/synth.hpp"

namespace asd {

enum class ScoringMode { simple, mahalanobis };

inline const char* to_string(ScoringMode m) {
    return m == ScoringMode::simple ? "simple" : "mahalanobis";
}

inline ScoringMode parse_mode(const std::string& s) {
    if (s == "simple") return ScoringMode::simple;
    if (s == "mahalanobis") return ScoringMode::mahalanobis;
    throw ConfigError("unknown scoring mode '" + s + "'");
}

struct RunConfig {
    std::filesystem::path corpus_root;
    std::filesystem::path out_dir;
    FeatureConfig features;
    AeArchitecture arch;
    TrainConfig training;
    ScoringMode mode = ScoringMode::simple;
    double threshold_q = 0.9;
    double pauc_p = 0.1;
    double ridge_scale = 1e-3;
    std::vector<std::uint64_t> seeds = {0};

    void validate() const {
        features.validate();
        arch.validate();
        training.validate();
        if (!(threshold_q > 0.0 && threshold_q < 1.0))
            throw ConfigError("threshold_q must be in (0, 1)");
        if (!(pauc_p > 0.0 && pauc_p <= 1.0)) throw ConfigError("pauc_p must be in (0, 1]");
        if (seeds.empty()) throw ConfigError("need at least one seed");
        if (arch.input_dim != features.feature_dim())
            throw ConfigError("architecture input_dim " + std::to_string(arch.input_dim) +
                              " != feature dimension " +
                              std::to_string(features.feature_dim()));
    }
};

// `mini` is sized for CI: tiny features, tiny net, small corpus counts.
// `full` mirrors the challenge-scale defaults.
inline void apply_preset(RunConfig& cfg, const std::string& preset) {
    if (preset == "mini") {
        cfg.features.fft_size = 512;
        cfg.features.hop = 256;
        cfg.features.n_mels = 16;
        cfg.features.context_frames = 2;  // D = 32
        cfg.arch.input_dim = 32;
        cfg.arch.encoder_widths = {32};
        cfg.arch.bottleneck = 8;
        cfg.arch.batch_norm = true;
        cfg.training.epochs = 10;
        cfg.training.batch_size = 128;
    } else if (preset == "full") {
        cfg.features = FeatureConfig{};
        cfg.arch = AeArchitecture{};
        cfg.training = TrainConfig{};
    } else {
        throw ConfigError("unknown preset '" + preset + "' (mini|full)");
    }
}

inline SynthCounts preset_counts(const std::string& preset) {
    if (preset == "mini") return {20, 2, 5, 5};
    if (preset == "full") return {};
    throw ConfigError("unknown preset '" + preset + "' (mini|full)");
}

inline std::vector<MachineSpec> preset_machines(const std::string& preset) {
    auto mk = [](std::string name, double f0, double lo, double hi) {
        MachineSpec m;
        m.name = std::move(name);
        m.fundamental_hz = f0;
        m.noise_low_hz = lo;
        m.noise_high_hz = hi;
        return m;
    };
    if (preset == "mini") {
        auto machines = std::vector<MachineSpec>{mk("fan", 170.0, 400.0, 6000.0),
                                                 mk("gearbox", 450.0, 300.0, 5000.0)};
        // No domain shift at desk scale: with 2 target training clips any
        // spectral shift dominates the anomaly signal and domain-pooled AUCs
        // stop being comparable across domains.
        for (auto& m : machines) {
            m.target_fundamental_scale = 1.0;
            m.target_snr_delta_db = 0.0;
        }
        return machines;
    }
    if (preset == "full")
        return {mk("fan", 170.0, 400.0, 6000.0),     mk("gearbox", 450.0, 300.0, 5000.0),
                mk("bearing", 240.0, 500.0, 7000.0), mk("slider", 320.0, 200.0, 4000.0),
                mk("ToyCar", 520.0, 600.0, 7500.0),  mk("ToyTrain", 610.0, 350.0, 5500.0),
                mk("valve", 130.0, 450.0, 6500.0)};
    throw ConfigError("unknown preset '" + preset + "' (mini|full)");
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

// Flat `key = value` file; '#' starts a comment. Returns the raw map so the
// CLI can layer flag overrides on top.
inline std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

namespace detail {

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        out.push_back(std::stoull(tok));
    }
    if (out.empty()) throw ConfigError("empty seed list '" + s + "'");
    return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    return out;
}

}  // namespace detail

// Applies one documented key to the run config. Unknown keys are an error
// so typos do not silently fall back to defaults.
inline void apply_config_key(RunConfig& cfg, const std::string& key,
                             const std::string& value) {
    try {
        if (key == "preset") apply_preset(cfg, value);
        else if (key == "corpus_root") cfg.corpus_root = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "mode") cfg.mode = parse_mode(value);
        else if (key == "threshold_q") cfg.threshold_q = std::stod(value);
        else if (key == "pauc_p") cfg.pauc_p = std::stod(value);
        else if (key == "ridge_scale") cfg.ridge_scale = std::stod(value);
        else if (key == "seeds") cfg.seeds = detail::parse_seed_list(value);
        else if (key == "fft_size") cfg.features.fft_size = std::stoi(value);
        else if (key == "hop") cfg.features.hop = std::stoi(value);
        else if (key == "n_mels") cfg.features.n_mels = std::stoi(value);
        else if (key == "context_frames") cfg.features.context_frames = std::stoi(value);
        else if (key == "mel_fmin_hz") cfg.features.mel_fmin_hz = std::stod(value);
        else if (key == "mel_fmax_hz") cfg.features.mel_fmax_hz = std::stod(value);
        else if (key == "log_floor") cfg.features.log_floor = std::stod(value);
        else if (key == "input_dim") cfg.arch.input_dim = std::stoi(value);
        else if (key == "encoder_widths") cfg.arch.encoder_widths = detail::parse_int_list(value);
        else if (key == "bottleneck") cfg.arch.bottleneck = std::stoi(value);
        else if (key == "batch_norm") cfg.arch.batch_norm = (value == "true" || value == "1");
        else if (key == "epochs") cfg.training.epochs = std::stoi(value);
        else if (key == "batch_size") cfg.training.batch_size = std::stoi(value);
        else if (key == "learning_rate") cfg.training.learning_rate = std::stod(value);
        else throw ConfigError("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("value out of range for key '" + key + "'");
    }
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    // Apply the preset first so later keys can override it.
    auto kv = read_kv_file(path);
    if (auto it = kv.find("preset"); it != kv.end()) {
        apply_preset(cfg, it->second);
        kv.erase(it);
    }
    for (const auto& [k, v] : kv) apply_config_key(cfg, k, v);
}

}  // namespace asd
