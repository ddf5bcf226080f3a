#include "codesam/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "codesam/kernels.hpp"

namespace codesam {

namespace {

kernels::MatrixView view(const DenseLayer& layer) { return {layer.weights.data(), layer.out, layer.in}; }

void apply(const DenseLayer& layer, std::span<const double> x, std::span<double> y) {
    kernels::parallel::affine(view(layer), x, layer.bias, y);
}

void init_layer(DenseLayer& layer, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (auto& w : layer.weights) w = rng.uniform(-a, a);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw Error(ErrorKind::InvalidTemperature, "temperature must be positive and finite");
    }
}

// Every intermediate of one forward pass, kept for backpropagation.
struct Forward {
    std::vector<double> input;     // standardized input
    std::vector<double> hidden;    // tanh(W1 z + b1)
    std::vector<double> logits;    // W2 h + b2
    std::vector<double> code;      // relaxed activations
    std::vector<double> decoded;   // tanh(W3 y + b3)
    std::vector<double> output;    // reconstruction in the original space
};

std::vector<double> standardized(const CodecModel& model, const ContextVector& x) {
    check_vector(x, model.config.d);
    std::vector<double> z = x.values;
    if (model.standardization) {
        const auto& s = *model.standardization;
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = (z[i] - s.mean[i]) / s.scale[i];
    }
    return z;
}

void encoder_pass(const CodecModel& model, Forward& f) {
    f.hidden.resize(model.encoder_hidden.out);
    apply(model.encoder_hidden, f.input, f.hidden);
    for (auto& h : f.hidden) h = std::tanh(h);
    f.logits.resize(model.encoder_logits.out);
    apply(model.encoder_logits, f.hidden, f.logits);
}

void relax(const CodeConfig& config, std::span<const double> logits, double tau, std::span<const double> noise,
           std::span<double> out) {
    const std::size_t k = config.k;
    for (std::size_t i = 0; i < config.m; ++i) {
        gumbel_softmax_into(logits.subspan(i * k, k), tau, noise.subspan(i * k, k), out.subspan(i * k, k));
    }
}

void decoder_pass(const CodecModel& model, std::span<const double> code, Forward& f) {
    f.decoded.resize(model.decoder_hidden.out);
    apply(model.decoder_hidden, code, f.decoded);
    for (auto& h : f.decoded) h = std::tanh(h);
    f.output.resize(model.decoder_output.out);
    apply(model.decoder_output, f.decoded, f.output);
    if (model.standardization) {
        const auto& s = *model.standardization;
        for (std::size_t i = 0; i < f.output.size(); ++i) f.output[i] = f.output[i] * s.scale[i] + s.mean[i];
    }
}

Forward forward(const CodecModel& model, const ContextVector& x, double tau, NoiseSource& noise) {
    Forward f;
    f.input = standardized(model, x);
    encoder_pass(model, f);
    std::vector<double> g(model.config.neurons());
    noise.fill(g);
    f.code.resize(g.size());
    relax(model.config, f.logits, tau, g, f.code);
    decoder_pass(model, f.code, f);
    return f;
}

double squared_error(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        sum += diff * diff;
    }
    return sum / static_cast<double>(a.size());
}

void check_batch(const CodecModel& model, std::span<const ContextVector> batch) {
    if (batch.empty()) throw Error(ErrorKind::EmptyInput, "empty batch");
    for (const auto& x : batch) check_vector(x, model.config.d);
}

Standardization fit_standardization(std::span<const ContextVector> data, std::size_t dim) {
    Standardization s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 0.0);
    for (const auto& x : data) {
        for (std::size_t i = 0; i < dim; ++i) s.mean[i] += x.values[i];
    }
    for (auto& m : s.mean) m /= static_cast<double>(data.size());
    for (const auto& x : data) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double diff = x.values[i] - s.mean[i];
            s.scale[i] += diff * diff;
        }
    }
    for (auto& v : s.scale) {
        v = std::sqrt(v / static_cast<double>(data.size()));
        if (!(v > 0.0)) v = 1.0;
    }
    for (auto& m : s.mean) m = round_f32(m);
    for (auto& v : s.scale) v = round_f32(v);
    return s;
}

bool all_finite(const CodecModel& model) {
    for (auto block : model.parameters()) {
        for (double w : block) {
            if (!std::isfinite(w)) return false;
        }
    }
    return true;
}

}  // namespace

std::size_t default_hidden_width(const CodeConfig& config) {
    const std::size_t from_code = (config.neurons() + 1) / 2;
    const std::size_t from_input = (std::size_t{config.d} + 1) / 2;
    return std::max(from_code, from_input);
}

CodecModel CodecModel::initialize(const CodeConfig& config, std::size_t hidden, std::size_t decoder_hidden,
                                  std::uint64_t seed) {
    validate(config);
    if (hidden == 0 || decoder_hidden == 0) throw Error(ErrorKind::InvalidConfig, "hidden widths must be positive");
    CodecModel model;
    model.config = config;
    model.encoder_hidden = DenseLayer(hidden, config.d);
    model.encoder_logits = DenseLayer(config.neurons(), hidden);
    model.decoder_hidden = DenseLayer(decoder_hidden, config.neurons());
    model.decoder_output = DenseLayer(config.d, decoder_hidden);
    Rng rng(seed);
    init_layer(model.encoder_hidden, rng);
    init_layer(model.encoder_logits, rng);
    init_layer(model.decoder_hidden, rng);
    init_layer(model.decoder_output, rng);
    model.round_to_storage_precision();
    return model;
}

CodecModel CodecModel::initialize(const CodeConfig& config, std::uint64_t seed) {
    const std::size_t h = default_hidden_width(config);
    return initialize(config, h, h, seed);
}

std::vector<std::span<double>> CodecModel::parameters() {
    return {encoder_hidden.weights, encoder_hidden.bias, encoder_logits.weights, encoder_logits.bias,
            decoder_hidden.weights, decoder_hidden.bias, decoder_output.weights, decoder_output.bias};
}

std::vector<std::span<const double>> CodecModel::parameters() const {
    return {encoder_hidden.weights, encoder_hidden.bias, encoder_logits.weights, encoder_logits.bias,
            decoder_hidden.weights, decoder_hidden.bias, decoder_output.weights, decoder_output.bias};
}

std::size_t CodecModel::parameter_count() const {
    std::size_t n = 0;
    for (auto block : parameters()) n += block.size();
    return n;
}

void CodecModel::round_to_storage_precision() {
    for (auto block : parameters()) {
        for (auto& w : block) w = round_f32(w);
    }
    if (standardization) {
        for (auto& v : standardization->mean) v = round_f32(v);
        for (auto& v : standardization->scale) v = round_f32(v);
    }
}

void GumbelNoise::fill(std::span<double> out) {
    Rng& rng = shared_ != nullptr ? *shared_ : rng_;
    for (auto& g : out) g = rng.gumbel();
}

void ZeroNoise::fill(std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); }

void FixedNoise::fill(std::span<double> out) {
    if (values_.empty()) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    for (auto& g : out) {
        g = values_[cursor_];
        cursor_ = (cursor_ + 1) % values_.size();
    }
}

void gumbel_softmax_into(std::span<const double> logits, double tau, std::span<const double> noise,
                         std::span<double> out) {
    check_tau(tau);
    if (noise.size() != logits.size() || out.size() != logits.size()) {
        throw Error(ErrorKind::DimensionMismatch, "logits, noise and output must have equal length");
    }
    if (logits.empty()) throw Error(ErrorKind::EmptyInput, "empty logits");
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = (logits[i] + noise[i]) / tau;
        peak = std::max(peak, out[i]);
    }
    double total = 0.0;
    for (auto& v : out) {
        v = std::exp(v - peak);
        total += v;
    }
    for (auto& v : out) v /= total;
}

std::vector<double> gumbel_softmax(std::span<const double> logits, double tau, std::span<const double> noise) {
    std::vector<double> out(logits.size());
    gumbel_softmax_into(logits, tau, noise, out);
    return out;
}

std::vector<double> encode_logits(const CodecModel& model, const ContextVector& x) {
    Forward f;
    f.input = standardized(model, x);
    encoder_pass(model, f);
    return std::move(f.logits);
}

std::vector<double> encode_soft(const CodecModel& model, const ContextVector& x, double tau, NoiseSource& noise) {
    check_tau(tau);
    const auto logits = encode_logits(model, x);
    std::vector<double> g(logits.size());
    noise.fill(g);
    std::vector<double> out(logits.size());
    relax(model.config, logits, tau, g, out);
    return out;
}

CompositionalCode encode_hard(const CodecModel& model, const ContextVector& x) {
    const auto logits = encode_logits(model, x);
    const std::size_t k = model.config.k;
    CompositionalCode code;
    code.indices.resize(model.config.m);
    for (std::size_t i = 0; i < model.config.m; ++i) {
        const double* group = logits.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (group[j] > group[best]) best = j;
        }
        code.indices[i] = static_cast<std::uint16_t>(best);
    }
    return code;
}

std::vector<double> one_hot(const CompositionalCode& code, const CodeConfig& config) {
    check_code(code, config);
    std::vector<double> out(config.neurons(), 0.0);
    for (std::size_t i = 0; i < config.m; ++i) out[i * config.k + code.indices[i]] = 1.0;
    return out;
}

ContextVector decode(const CodecModel& model, std::span<const double> activations) {
    if (activations.size() != model.config.neurons()) {
        throw Error(ErrorKind::DimensionMismatch, "activations must have M*K entries");
    }
    Forward f;
    decoder_pass(model, activations, f);
    return ContextVector{std::move(f.output), {}};
}

double reconstruction_loss(const CodecModel& model, std::span<const ContextVector> batch, double tau,
                           NoiseSource& noise) {
    check_tau(tau);
    check_batch(model, batch);
    double total = 0.0;
    for (const auto& x : batch) {
        const Forward f = forward(model, x, tau, noise);
        total += squared_error(f.output, x.values);
    }
    return total / static_cast<double>(batch.size());
}

LossAndGradients loss_and_gradients(const CodecModel& model, std::span<const ContextVector> batch, double tau,
                                    NoiseSource& noise, double loss_scale) {
    check_tau(tau);
    check_batch(model, batch);
    const CodeConfig& cfg = model.config;
    const std::size_t d = cfg.d;
    const std::size_t k = cfg.k;

    LossAndGradients result;
    for (auto block : model.parameters()) result.gradients.blocks.emplace_back(block.size(), 0.0);
    auto& g = result.gradients.blocks;
    auto grad_view = [&](std::size_t block, const DenseLayer& layer) {
        return kernels::MutableMatrixView{g[block].data(), layer.out, layer.in};
    };
    auto add_to = [](std::vector<double>& acc, std::span<const double> v) {
        for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
    };

    const double per_element = loss_scale * 2.0 / (static_cast<double>(d) * static_cast<double>(batch.size()));
    std::vector<double> d_out(d), d_dec(model.decoder_width()), d_code(cfg.neurons()), d_logits(cfg.neurons()),
        d_hidden(model.hidden_width());

    double total = 0.0;
    for (const auto& x : batch) {
        const Forward f = forward(model, x, tau, noise);
        total += squared_error(f.output, x.values);

        for (std::size_t i = 0; i < d; ++i) {
            d_out[i] = per_element * (f.output[i] - x.values[i]);
            if (model.standardization) d_out[i] *= model.standardization->scale[i];
        }
        kernels::parallel::rank1_update(grad_view(6, model.decoder_output), d_out, f.decoded);
        add_to(g[7], d_out);

        kernels::parallel::affine_transpose(view(model.decoder_output), d_out, d_dec);
        for (std::size_t i = 0; i < d_dec.size(); ++i) d_dec[i] *= 1.0 - f.decoded[i] * f.decoded[i];
        kernels::parallel::rank1_update(grad_view(4, model.decoder_hidden), d_dec, f.code);
        add_to(g[5], d_dec);

        kernels::parallel::affine_transpose(view(model.decoder_hidden), d_dec, d_code);
        // Softmax Jacobian per cluster, including the 1/tau factor.
        for (std::size_t c = 0; c < cfg.m; ++c) {
            const double* y = f.code.data() + c * k;
            const double* dy = d_code.data() + c * k;
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += y[j] * dy[j];
            for (std::size_t j = 0; j < k; ++j) d_logits[c * k + j] = y[j] * (dy[j] - dot) / tau;
        }
        kernels::parallel::rank1_update(grad_view(2, model.encoder_logits), d_logits, f.hidden);
        add_to(g[3], d_logits);

        kernels::parallel::affine_transpose(view(model.encoder_logits), d_logits, d_hidden);
        for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden[i] *= 1.0 - f.hidden[i] * f.hidden[i];
        kernels::parallel::rank1_update(grad_view(0, model.encoder_hidden), d_hidden, f.input);
        add_to(g[1], d_hidden);
    }
    result.loss = loss_scale * total / static_cast<double>(batch.size());
    return result;
}

void validate(const TrainConfig& config) {
    if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
        throw Error(ErrorKind::InvalidConfig, "learning rate must be positive");
    }
    if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "momentum must be in [0, 1)");
    }
    if (config.batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch size must be positive");
    check_tau(config.tau);
    if (config.anneal) {
        check_tau(config.tau_final);
        if (config.tau_final > config.tau) {
            throw Error(ErrorKind::InvalidConfig, "annealing target temperature exceeds the start temperature");
        }
    }
}

double temperature_at(const TrainConfig& config, std::size_t epoch) {
    if (!config.anneal || config.epochs <= 1) return config.tau;
    const double progress = static_cast<double>(std::min(epoch, config.epochs - 1)) /
                            static_cast<double>(config.epochs - 1);
    return config.tau * std::pow(config.tau_final / config.tau, progress);
}

TrainResult train(CodecModel model, std::span<const ContextVector> data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    validate(config);
    if (data.empty()) throw Error(ErrorKind::EmptyInput, "training set is empty");
    for (const auto& x : data) check_vector(x, model.config.d);

    TrainResult result;
    if (config.epochs == 0) {
        result.model = std::move(model);
        return result;
    }
    if (config.standardize && !model.standardization) {
        model.standardization = fit_standardization(data, model.config.d);
    }

    Rng rng(config.seed);
    GumbelNoise noise(rng);
    std::vector<std::vector<double>> velocity;
    for (auto block : model.parameters()) velocity.emplace_back(block.size(), 0.0);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<ContextVector> batch;
    batch.reserve(config.batch_size);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double tau = temperature_at(config, epoch);
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);

            auto step = loss_and_gradients(model, batch, tau, noise);
            if (!std::isfinite(step.loss)) {
                throw Error(ErrorKind::Diverged, "non-finite loss in epoch " + std::to_string(epoch + 1), epoch + 1);
            }
            epoch_loss += step.loss * static_cast<double>(batch.size());

            auto params = model.parameters();
            for (std::size_t b = 0; b < params.size(); ++b) {
                auto& v = velocity[b];
                const auto& grad = step.gradients.blocks[b];
                for (std::size_t i = 0; i < v.size(); ++i) {
                    v[i] = config.momentum * v[i] - config.learning_rate * grad[i];
                    params[b][i] += v[i];
                }
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss) || !all_finite(model)) {
            throw Error(ErrorKind::Diverged, "non-finite weights in epoch " + std::to_string(epoch + 1), epoch + 1);
        }
        result.loss_trace.push_back(epoch_loss);
        if (on_epoch) on_epoch(epoch + 1, epoch_loss);
    }
    model.round_to_storage_precision();
    result.model = std::move(model);
    return result;
}

double gradient_check(const CodecModel& model, const ContextVector& x, std::span<const double> fixed_noise,
                      double tau, std::size_t samples, std::uint64_t seed) {
    const std::vector<double> noise_values(fixed_noise.begin(), fixed_noise.end());
    const std::span<const ContextVector> batch(&x, 1);
    FixedNoise noise(noise_values);
    const auto analytic = loss_and_gradients(model, batch, tau, noise);

    // Flat list of (block, index) pairs to probe.
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    const auto blocks = model.parameters();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < blocks[b].size(); ++i) coords.emplace_back(b, i);
    }
    if (samples < coords.size()) {
        Rng rng(seed);
        rng.shuffle(coords);
        coords.resize(samples);
    }

    constexpr double step = 1e-5;
    CodecModel probe = model;
    auto probe_blocks = probe.parameters();
    double worst = 0.0;
    for (const auto& [b, i] : coords) {
        const double original = probe_blocks[b][i];
        probe_blocks[b][i] = original + step;
        FixedNoise plus_noise(noise_values);
        const double plus = reconstruction_loss(probe, batch, tau, plus_noise);
        probe_blocks[b][i] = original - step;
        FixedNoise minus_noise(noise_values);
        const double minus = reconstruction_loss(probe, batch, tau, minus_noise);
        probe_blocks[b][i] = original;

        const double numeric = (plus - minus) / (2.0 * step);
        const double exact = analytic.gradients.blocks[b][i];
        const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
    return worst;
}

}  // namespace codesam
