#pragma once

// Discrete autoencoder: dense vector -> M groups of K logits -> Gumbel-softmax
// relaxation -> reconstruction. At inference the decoder is dropped and each
// group's argmax becomes one entry of the compositional code.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "codesam/core.hpp"

namespace codesam {

/// Dense layer y = W x + b, W stored row-major as out x in.
struct DenseLayer {
    std::size_t out = 0;
    std::size_t in = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    DenseLayer() = default;
    DenseLayer(std::size_t out, std::size_t in) : out(out), in(in), weights(out * in, 0.0), bias(out, 0.0) {}

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Per-dimension input standardization, stored with the model.
struct Standardization {
    std::vector<double> mean;
    std::vector<double> scale;

    friend bool operator==(const Standardization&, const Standardization&) = default;
};

struct CodecModel {
    CodeConfig config;
    DenseLayer encoder_hidden;  // D -> H, tanh
    DenseLayer encoder_logits;  // H -> M*K
    DenseLayer decoder_hidden;  // M*K -> H', tanh
    DenseLayer decoder_output;  // H' -> D
    std::optional<Standardization> standardization;

    std::size_t hidden_width() const { return encoder_hidden.out; }
    std::size_t decoder_width() const { return decoder_hidden.out; }

    /// Glorot-uniform weights, zero biases, rounded to float32 precision.
    static CodecModel initialize(const CodeConfig& config, std::size_t hidden, std::size_t decoder_hidden,
                                 std::uint64_t seed);
    static CodecModel initialize(const CodeConfig& config, std::uint64_t seed);

    /// Parameter blocks in storage order: W1 b1 W2 b2 W3 b3 W4 b4.
    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;
    std::size_t parameter_count() const;

    /// Rounds every weight (and standardization statistic) to float32.
    void round_to_storage_precision();

    friend bool operator==(const CodecModel&, const CodecModel&) = default;
};

/// max(ceil(M*K/2), ceil(D/2))
std::size_t default_hidden_width(const CodeConfig& config);

/// Source of Gumbel perturbations, consumed M*K values per encoded vector.
class NoiseSource {
public:
    virtual ~NoiseSource() = default;
    virtual void fill(std::span<double> out) = 0;
};

class GumbelNoise final : public NoiseSource {
public:
    explicit GumbelNoise(std::uint64_t seed) : rng_(seed) {}
    explicit GumbelNoise(Rng& shared) : shared_(&shared), rng_(0) {}
    void fill(std::span<double> out) override;

private:
    Rng* shared_ = nullptr;
    Rng rng_;
};

class ZeroNoise final : public NoiseSource {
public:
    void fill(std::span<double> out) override;
};

/// Replays a fixed buffer, wrapping around; used for gradient checks.
class FixedNoise final : public NoiseSource {
public:
    explicit FixedNoise(std::vector<double> values) : values_(std::move(values)) {}
    void fill(std::span<double> out) override;
    void rewind() { cursor_ = 0; }

private:
    std::vector<double> values_;
    std::size_t cursor_ = 0;
};

/// softmax((logits + noise) / tau) over one cluster.
std::vector<double> gumbel_softmax(std::span<const double> logits, double tau, std::span<const double> noise);
void gumbel_softmax_into(std::span<const double> logits, double tau, std::span<const double> noise,
                         std::span<double> out);

/// Raw encoder logits, M contiguous groups of K.
std::vector<double> encode_logits(const CodecModel& model, const ContextVector& x);

/// Relaxed code activations, M rows of K entries each summing to 1.
std::vector<double> encode_soft(const CodecModel& model, const ContextVector& x, double tau, NoiseSource& noise);

/// Per-cluster argmax of the noiseless logits; lowest index wins ties.
CompositionalCode encode_hard(const CodecModel& model, const ContextVector& x);

/// One-hot M*K activations of a code.
std::vector<double> one_hot(const CompositionalCode& code, const CodeConfig& config);

ContextVector decode(const CodecModel& model, std::span<const double> activations);

/// Mean over the batch of the per-vector mean squared reconstruction error.
double reconstruction_loss(const CodecModel& model, std::span<const ContextVector> batch, double tau,
                           NoiseSource& noise);

struct ModelGradients {
    std::vector<std::vector<double>> blocks;  // same layout as CodecModel::parameters()
};

struct LossAndGradients {
    double loss = 0.0;
    ModelGradients gradients;
};

/// Analytic gradient of `loss_scale * reconstruction_loss` through the soft relaxation.
LossAndGradients loss_and_gradients(const CodecModel& model, std::span<const ContextVector> batch, double tau,
                                    NoiseSource& noise, double loss_scale = 1.0);

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double tau = 1.0;
    /// Exponential decay from `tau` to `tau_final` across epochs.
    bool anneal = false;
    double tau_final = 0.1;
    bool standardize = false;
    std::uint64_t seed = 42;
};

void validate(const TrainConfig& config);

/// Temperature used during `epoch` (0-based).
double temperature_at(const TrainConfig& config, std::size_t epoch);

struct TrainResult {
    CodecModel model;
    /// Mean minibatch loss per epoch.
    std::vector<double> loss_trace;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Minibatch SGD with momentum. Bit-reproducible for a fixed seed. Throws
/// Error(Diverged) with the 1-based epoch when the loss or weights go non-finite.
TrainResult train(CodecModel model, std::span<const ContextVector> data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Max relative error between analytic gradients and central differences
/// (step 1e-5) over `samples` randomly chosen weights (all when samples >= count).
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const CodecModel& model, const ContextVector& x, std::span<const double> fixed_noise,
                      double tau = 1.0, std::size_t samples = 200, std::uint64_t seed = 7);

}  // namespace codesam
