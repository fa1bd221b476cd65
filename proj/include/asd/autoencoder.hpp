#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "asd/errors.hpp"
#include "asd/features.hpp"
#include "asd/matrix.hpp"
#include "asd/rng.hpp"

namespace asd {

struct InvalidArchitecture : ConfigError {
    using ConfigError::ConfigError;
};
struct ShapeMismatch : Error {
    using Error::Error;
};
struct NonFiniteLoss : Error {
    using Error::Error;
};
struct CorruptFile : IoError {
    using IoError::IoError;
};
struct VersionMismatch : IoError {
    using IoError::IoError;
};

struct AeArchitecture {
    int input_dim = 640;
    std::vector<int> encoder_widths = {128, 128, 128, 128};
    int bottleneck = 8;
    bool batch_norm = true;

    void validate() const {
        if (input_dim < 1) throw InvalidArchitecture("input_dim must be >= 1");
        if (bottleneck < 1) throw InvalidArchitecture("bottleneck must be >= 1");
        for (int w : encoder_widths)
            if (w < 1) throw InvalidArchitecture("layer widths must be >= 1");
    }

    // Full layer width sequence: input, encoder, bottleneck, mirrored
    // decoder, output (= input).
    std::vector<int> layer_widths() const {
        std::vector<int> w;
        w.push_back(input_dim);
        w.insert(w.end(), encoder_widths.begin(), encoder_widths.end());
        w.push_back(bottleneck);
        w.insert(w.end(), encoder_widths.rbegin(), encoder_widths.rend());
        w.push_back(input_dim);
        return w;
    }

    bool operator==(const AeArchitecture&) const = default;
};

namespace detail {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

}  // namespace detail

// One dense layer. Hidden layers apply optional batch norm then ReLU; the
// output layer is purely linear.
struct DenseLayer {
    Matrix weights;  // out x in
    std::vector<double> bias;
    bool has_bn = false;
    bool has_relu = false;
    std::vector<double> gamma, beta;          // BN scale/shift
    std::vector<double> run_mean, run_var;    // frozen stats for inference
};

struct AeModel {
    AeArchitecture arch;
    std::vector<DenseLayer> layers;
    FeatureConfig feature_config;
    std::uint64_t seed = 0;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) {
            n += l.weights.size() + l.bias.size();
            if (l.has_bn) n += l.gamma.size() + l.beta.size();
        }
        return n;
    }
};

// Gradients shaped like the trainable parameters of a model.
struct AeGradients {
    struct LayerGrads {
        Matrix weights;
        std::vector<double> bias;
        std::vector<double> gamma, beta;
    };
    std::vector<LayerGrads> layers;
};

// Fan-in scaled uniform init (+-sqrt(6/fan_in)); biases zero, BN identity.
inline AeModel init_model(const AeArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    AeModel model;
    model.arch = arch;
    model.seed = seed;
    CounterRng rng(hash_combine(seed, hash_str("ae-init")));
    const auto widths = arch.layer_widths();
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer layer;
        const int in = widths[l], out = widths[l + 1];
        layer.weights = Matrix(out, in);
        const double bound = std::sqrt(6.0 / in);
        for (double& w : layer.weights.data()) w = rng.uniform(-bound, bound);
        layer.bias.assign(out, 0.0);
        const bool hidden = l + 2 < widths.size();
        layer.has_relu = hidden;
        layer.has_bn = hidden && arch.batch_norm;
        if (layer.has_bn) {
            layer.gamma.assign(out, 1.0);
            layer.beta.assign(out, 0.0);
            layer.run_mean.assign(out, 0.0);
            layer.run_var.assign(out, 1.0);
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

namespace detail {

struct LayerCache {
    Matrix input;      // activations entering the layer
    Matrix linear;     // W x + b
    Matrix normed;     // BN xhat (if BN)
    Matrix activated;  // layer output
    std::vector<double> mean, var;  // batch stats used (if BN, training)
};

// training=true uses batch statistics (and, when update_running, folds them
// into the running stats); training=false normalizes with frozen stats.
inline Matrix forward_impl(AeModel& model, const Matrix& batch, bool training,
                           bool update_running, std::vector<LayerCache>* caches) {
    if (batch.cols() != static_cast<std::size_t>(model.arch.input_dim))
        throw ShapeMismatch("batch width " + std::to_string(batch.cols()) +
                            " != input_dim " + std::to_string(model.arch.input_dim));
    const std::size_t b = batch.rows();
    Matrix act = batch;
    for (auto& layer : model.layers) {
        LayerCache cache;
        if (caches) cache.input = act;
        const std::size_t out = layer.weights.rows();
        Matrix z(b, out);
        for (std::size_t r = 0; r < b; ++r) {
            const double* in = act.row_ptr(r);
            double* zr = z.row_ptr(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double* w = layer.weights.row_ptr(o);
                double acc = layer.bias[o];
                for (std::size_t i = 0; i < layer.weights.cols(); ++i) acc += w[i] * in[i];
                zr[o] = acc;
            }
        }
        if (caches) cache.linear = z;
        if (layer.has_bn) {
            std::vector<double> mean(out, 0.0), var(out, 0.0);
            if (training) {
                for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t o = 0; o < out; ++o) mean[o] += z(r, o);
                for (double& m : mean) m /= static_cast<double>(b);
                for (std::size_t r = 0; r < b; ++r)
                    for (std::size_t o = 0; o < out; ++o) {
                        const double d = z(r, o) - mean[o];
                        var[o] += d * d;
                    }
                for (double& v : var) v /= static_cast<double>(b);
                if (update_running)
                    for (std::size_t o = 0; o < out; ++o) {
                        layer.run_mean[o] = (1.0 - kBnMomentum) * layer.run_mean[o] +
                                            kBnMomentum * mean[o];
                        layer.run_var[o] = (1.0 - kBnMomentum) * layer.run_var[o] +
                                           kBnMomentum * var[o];
                    }
            } else {
                mean = layer.run_mean;
                var = layer.run_var;
            }
            Matrix xhat(b, out);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t o = 0; o < out; ++o)
                    xhat(r, o) = (z(r, o) - mean[o]) / std::sqrt(var[o] + kBnEps);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t o = 0; o < out; ++o)
                    z(r, o) = layer.gamma[o] * xhat(r, o) + layer.beta[o];
            if (caches) {
                cache.normed = xhat;
                cache.mean = std::move(mean);
                cache.var = std::move(var);
            }
        }
        if (layer.has_relu)
            for (double& v : z.data()) v = std::max(v, 0.0);
        if (caches) {
            cache.activated = z;
            caches->push_back(std::move(cache));
        }
        act = std::move(z);
    }
    return act;
}

}  // namespace detail

// Inference-mode forward pass (frozen batch-norm statistics).
inline Matrix forward(const AeModel& model, const Matrix& batch) {
    auto& mutable_model = const_cast<AeModel&>(model);  // no state is touched
    return detail::forward_impl(mutable_model, batch, /*training=*/false,
                                /*update_running=*/false, nullptr);
}

// Mean-squared reconstruction error per dimension plus exact reverse-mode
// gradients, in training mode (batch statistics, running stats untouched).
inline std::pair<double, AeGradients> loss_and_gradients(AeModel& model,
                                                         const Matrix& batch) {
    const std::size_t b = batch.rows();
    if (b == 0) throw ShapeMismatch("empty batch");
    std::vector<detail::LayerCache> caches;
    const Matrix recon = detail::forward_impl(model, batch, /*training=*/true,
                                              /*update_running=*/false, &caches);

    const double denom = static_cast<double>(b) * static_cast<double>(batch.cols());
    double loss = 0.0;
    Matrix delta(b, batch.cols());
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < batch.cols(); ++c) {
            const double e = recon(r, c) - batch(r, c);
            loss += e * e;
            delta(r, c) = 2.0 * e / denom;
        }
    loss /= denom;
    if (!std::isfinite(loss)) throw NonFiniteLoss("loss is not finite");

    AeGradients grads;
    grads.layers.resize(model.layers.size());
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const auto& layer = model.layers[li];
        const auto& cache = caches[li];
        auto& g = grads.layers[li];
        const std::size_t out = layer.weights.rows();

        if (layer.has_relu)
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t o = 0; o < out; ++o)
                    if (cache.activated(r, o) <= 0.0) delta(r, o) = 0.0;

        if (layer.has_bn) {
            g.gamma.assign(out, 0.0);
            g.beta.assign(out, 0.0);
            std::vector<double> sum_dy(out, 0.0), sum_dy_xhat(out, 0.0);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t o = 0; o < out; ++o) {
                    g.gamma[o] += delta(r, o) * cache.normed(r, o);
                    g.beta[o] += delta(r, o);
                    sum_dy[o] += delta(r, o);
                    sum_dy_xhat[o] += delta(r, o) * cache.normed(r, o);
                }
            const double inv_b = 1.0 / static_cast<double>(b);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t o = 0; o < out; ++o) {
                    const double inv_std = 1.0 / std::sqrt(cache.var[o] + detail::kBnEps);
                    delta(r, o) = layer.gamma[o] * inv_std *
                                  (delta(r, o) - inv_b * sum_dy[o] -
                                   cache.normed(r, o) * inv_b * sum_dy_xhat[o]);
                }
        }

        g.weights = Matrix(out, layer.weights.cols());
        g.bias.assign(out, 0.0);
        Matrix prev_delta(b, layer.weights.cols());
        for (std::size_t r = 0; r < b; ++r) {
            const double* in = cache.input.row_ptr(r);
            const double* dz = delta.row_ptr(r);
            double* pd = prev_delta.row_ptr(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = dz[o];
                g.bias[o] += d;
                double* gw = g.weights.row_ptr(o);
                const double* w = model.layers[li].weights.row_ptr(o);
                for (std::size_t i = 0; i < layer.weights.cols(); ++i) {
                    gw[i] += d * in[i];
                    pd[i] += d * w[i];
                }
            }
        }
        delta = std::move(prev_delta);
    }
    return {loss, std::move(grads)};
}

struct TrainConfig {
    int epochs = 100;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    }
};

namespace detail {

// Flat views over the trainable parameters / their gradients, in a fixed
// order, so Adam state lines up across steps.
inline std::vector<double*> parameter_views(AeModel& m) {
    std::vector<double*> out;
    for (auto& l : m.layers) {
        for (double& v : l.weights.data()) out.push_back(&v);
        for (double& v : l.bias) out.push_back(&v);
        if (l.has_bn) {
            for (double& v : l.gamma) out.push_back(&v);
            for (double& v : l.beta) out.push_back(&v);
        }
    }
    return out;
}

inline std::vector<const double*> gradient_views(const AeModel& m, const AeGradients& g) {
    std::vector<const double*> out;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        const auto& lg = g.layers[li];
        for (const double& v : lg.weights.data()) out.push_back(&v);
        for (const double& v : lg.bias) out.push_back(&v);
        if (m.layers[li].has_bn) {
            for (const double& v : lg.gamma) out.push_back(&v);
            for (const double& v : lg.beta) out.push_back(&v);
        }
    }
    return out;
}

}  // namespace detail

struct TrainResult {
    AeModel model;
    std::vector<double> epoch_losses;
};

// Adam over shuffled mini-batches. A trailing batch smaller than batch_size
// is dropped so batch-norm statistics stay well formed. Running BN stats
// are updated once per step from the batch statistics.
inline TrainResult train(const AeModel& initial, const Matrix& frames,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (frames.rows() < static_cast<std::size_t>(cfg.batch_size))
        throw ConfigError("need at least batch_size training frames");
    if (frames.cols() != static_cast<std::size_t>(initial.arch.input_dim))
        throw ShapeMismatch("training frame width != input_dim");

    TrainResult result;
    result.model = initial;
    AeModel& model = result.model;
    const auto params = detail::parameter_views(model);
    std::vector<double> adam_m(params.size(), 0.0), adam_v(params.size(), 0.0);
    std::uint64_t step = 0;

    CounterRng shuffle_rng(hash_combine(cfg.seed, hash_str("ae-shuffle")));
    std::vector<std::size_t> order(frames.rows());
    std::iota(order.begin(), order.end(), 0);

    const std::size_t batches = frames.rows() / cfg.batch_size;
    Matrix batch(cfg.batch_size, frames.cols());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle)
            for (std::size_t i = order.size(); i-- > 1;)
                std::swap(order[i], order[static_cast<std::size_t>(
                                        shuffle_rng.uniform(0.0, static_cast<double>(i + 1)))]);
        double epoch_loss = 0.0;
        for (std::size_t bi = 0; bi < batches; ++bi) {
            for (int r = 0; r < cfg.batch_size; ++r)
                std::copy_n(frames.row_ptr(order[bi * cfg.batch_size + r]), frames.cols(),
                            batch.row_ptr(r));
            double loss;
            AeGradients grads;
            try {
                std::tie(loss, grads) = loss_and_gradients(model, batch);
            } catch (const NonFiniteLoss&) {
                throw NonFiniteLoss("training diverged at epoch " + std::to_string(epoch));
            }
            // Fold batch stats into running stats for inference.
            detail::forward_impl(model, batch, /*training=*/true,
                                 /*update_running=*/true, nullptr);
            epoch_loss += loss;

            ++step;
            const auto gview = detail::gradient_views(model, grads);
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < params.size(); ++p) {
                const double g = *gview[p];
                adam_m[p] = cfg.adam_beta1 * adam_m[p] + (1.0 - cfg.adam_beta1) * g;
                adam_v[p] = cfg.adam_beta2 * adam_v[p] + (1.0 - cfg.adam_beta2) * g * g;
                *params[p] -= cfg.learning_rate * (adam_m[p] / bc1) /
                              (std::sqrt(adam_v[p] / bc2) + cfg.adam_eps);
            }
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization: "ASDAE" magic, u32 version, architecture, feature config,
// then per-layer little-endian f64 parameters.

namespace detail {

inline constexpr char kModelMagic[6] = {'A', 'S', 'D', 'A', 'E', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;

inline void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ofstream& f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f64(std::ofstream& f, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(f, bits);
}
inline std::uint32_t get_u32(std::ifstream& f, const std::string& ctx) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) throw CorruptFile("truncated " + ctx);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::ifstream& f, const std::string& ctx) {
    unsigned char b[8];
    if (!f.read(reinterpret_cast<char*>(b), 8)) throw CorruptFile("truncated " + ctx);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}
inline double get_f64(std::ifstream& f, const std::string& ctx) {
    const std::uint64_t bits = get_u64(f, ctx);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void put_feature_config(std::ofstream& f, const FeatureConfig& c) {
    put_u32(f, static_cast<std::uint32_t>(c.sample_rate_hz));
    put_u32(f, static_cast<std::uint32_t>(c.fft_size));
    put_u32(f, static_cast<std::uint32_t>(c.hop));
    put_u32(f, static_cast<std::uint32_t>(c.n_mels));
    put_u32(f, static_cast<std::uint32_t>(c.context_frames));
    put_f64(f, c.mel_fmin_hz);
    put_f64(f, c.mel_fmax_hz);
    put_f64(f, c.log_floor);
}

inline FeatureConfig get_feature_config(std::ifstream& f) {
    FeatureConfig c;
    c.sample_rate_hz = static_cast<int>(get_u32(f, "feature config"));
    c.fft_size = static_cast<int>(get_u32(f, "feature config"));
    c.hop = static_cast<int>(get_u32(f, "feature config"));
    c.n_mels = static_cast<int>(get_u32(f, "feature config"));
    c.context_frames = static_cast<int>(get_u32(f, "feature config"));
    c.mel_fmin_hz = get_f64(f, "feature config");
    c.mel_fmax_hz = get_f64(f, "feature config");
    c.log_floor = get_f64(f, "feature config");
    return c;
}

}  // namespace detail

inline void save_model(const AeModel& model, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(detail::kModelMagic, 6);
    detail::put_u32(f, detail::kModelVersion);
    detail::put_u64(f, model.seed);
    detail::put_u32(f, static_cast<std::uint32_t>(model.arch.input_dim));
    detail::put_u32(f, static_cast<std::uint32_t>(model.arch.encoder_widths.size()));
    for (int w : model.arch.encoder_widths) detail::put_u32(f, static_cast<std::uint32_t>(w));
    detail::put_u32(f, static_cast<std::uint32_t>(model.arch.bottleneck));
    detail::put_u32(f, model.arch.batch_norm ? 1 : 0);
    detail::put_feature_config(f, model.feature_config);
    for (const auto& l : model.layers) {
        for (double v : l.weights.data()) detail::put_f64(f, v);
        for (double v : l.bias) detail::put_f64(f, v);
        if (l.has_bn) {
            for (double v : l.gamma) detail::put_f64(f, v);
            for (double v : l.beta) detail::put_f64(f, v);
            for (double v : l.run_mean) detail::put_f64(f, v);
            for (double v : l.run_var) detail::put_f64(f, v);
        }
    }
    if (!f) throw IoError("write failed: " + path.string());
}

inline AeModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    char magic[6];
    if (!f.read(magic, 6) || std::memcmp(magic, detail::kModelMagic, 6) != 0)
        throw CorruptFile("bad magic in " + path.string());
    const std::uint32_t version = detail::get_u32(f, "version");
    if (version != detail::kModelVersion)
        throw VersionMismatch("model version " + std::to_string(version) +
                              " unsupported (expect " +
                              std::to_string(detail::kModelVersion) + ")");
    AeArchitecture arch;
    const std::uint64_t seed = detail::get_u64(f, "seed");
    arch.input_dim = static_cast<int>(detail::get_u32(f, "arch"));
    const std::uint32_t n_enc = detail::get_u32(f, "arch");
    arch.encoder_widths.clear();
    for (std::uint32_t i = 0; i < n_enc; ++i)
        arch.encoder_widths.push_back(static_cast<int>(detail::get_u32(f, "arch")));
    arch.bottleneck = static_cast<int>(detail::get_u32(f, "arch"));
    arch.batch_norm = detail::get_u32(f, "arch") != 0;

    AeModel model = init_model(arch, seed);
    model.feature_config = detail::get_feature_config(f);
    for (auto& l : model.layers) {
        for (double& v : l.weights.data()) v = detail::get_f64(f, "weights");
        for (double& v : l.bias) v = detail::get_f64(f, "bias");
        if (l.has_bn) {
            for (double& v : l.gamma) v = detail::get_f64(f, "gamma");
            for (double& v : l.beta) v = detail::get_f64(f, "beta");
            for (double& v : l.run_mean) v = detail::get_f64(f, "run_mean");
            for (double& v : l.run_var) v = detail::get_f64(f, "run_var");
        }
    }
    f.peek();
    if (!f.eof()) throw CorruptFile("trailing bytes in " + path.string());
    return model;
}

}  // namespace asd
