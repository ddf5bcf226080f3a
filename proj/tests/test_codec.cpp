#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "codesam/codec.hpp"
#include "support.hpp"

using namespace codesam;

namespace {

template <typename F>
ErrorKind error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected codesam::Error");
    return ErrorKind::Io;
}

CodecModel small_model(std::uint64_t seed = 1) { return CodecModel::initialize(CodeConfig(4, 2, 8), 8, 8, seed); }

std::size_t argmax(const double* p, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (p[i] > p[best]) best = i;
    }
    return best;
}

}  // namespace

TEST_CASE("gumbel_softmax") {
    SUBCASE("zero logits and zero noise give the uniform vector") {
        for (double tau : {0.1, 1.0, 7.5}) {
            const std::vector<double> zeros(5, 0.0);
            for (double p : gumbel_softmax(zeros, tau, zeros)) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
        }
    }
    SUBCASE("low temperature saturates") {
        const std::vector<double> logits{10, 0, 0}, noise(3, 0.0);
        CHECK(gumbel_softmax(logits, 0.1, noise)[0] > 0.999);
    }
    SUBCASE("tau = 1 without noise is a plain softmax") {
        Rng rng(4);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> logits(1 + rng.below(16));
            for (auto& l : logits) l = rng.uniform(-5, 5);
            const std::vector<double> noise(logits.size(), 0.0);
            const auto p = gumbel_softmax(logits, 1.0, noise);
            double z = 0.0;
            for (double l : logits) z += std::exp(l);
            for (std::size_t i = 0; i < logits.size(); ++i) CHECK(std::abs(p[i] - std::exp(logits[i]) / z) <= 1e-12);
        }
    }
    SUBCASE("outputs are a probability vector") {
        Rng rng(5);
        for (int trial = 0; trial < 1000; ++trial) {
            std::vector<double> logits(2 + rng.below(30)), noise(logits.size());
            for (auto& l : logits) l = rng.uniform(-20, 20);
            for (auto& g : noise) g = rng.gumbel();
            const auto p = gumbel_softmax(logits, rng.uniform(0.01, 10.0), noise);
            double sum = 0.0;
            for (double v : p) {
                REQUIRE(v >= 0.0);
                sum += v;
            }
            REQUIRE(std::abs(sum - 1.0) <= 1e-9);
        }
    }
    SUBCASE("invalid temperature") {
        const std::vector<double> v(3, 0.0);
        CHECK(error_kind([&] { gumbel_softmax(v, 0.0, v); }) == ErrorKind::InvalidTemperature);
        CHECK(error_kind([&] { gumbel_softmax(v, -1.0, v); }) == ErrorKind::InvalidTemperature);
        CHECK(error_kind([&] { gumbel_softmax(v, NAN, v); }) == ErrorKind::InvalidTemperature);
    }
}

TEST_CASE("model initialization") {
    const CodeConfig cfg(16, 8, 32);
    CHECK(default_hidden_width(cfg) == 64);
    CHECK(default_hidden_width(CodeConfig(4, 2, 100)) == 50);
    CHECK(default_hidden_width(CodeConfig(3, 3, 2)) == 5);

    const auto a = CodecModel::initialize(cfg, 9);
    const auto b = CodecModel::initialize(cfg, 9);
    CHECK(a == b);
    CHECK(!(a == CodecModel::initialize(cfg, 10)));
    CHECK(a.encoder_logits.out == 128);
    CHECK(a.parameter_count() == (64 * 32 + 64) + (128 * 64 + 128) + (64 * 128 + 64) + (32 * 64 + 32));

    const double limit = std::sqrt(6.0 / (32 + 64));
    for (double w : a.encoder_hidden.weights) {
        CHECK(std::abs(w) <= limit);
        CHECK(static_cast<double>(static_cast<float>(w)) == w);
    }
    for (double bias : a.encoder_hidden.bias) CHECK(bias == 0.0);
}

TEST_CASE("encode_soft") {
    const auto model = small_model();
    Rng rng(6);
    SUBCASE("same noise seed gives identical output") {
        const auto x = testing::random_vector(rng, 8);
        GumbelNoise n1(77), n2(77);
        CHECK(encode_soft(model, x, 0.5, n1) == encode_soft(model, x, 0.5, n2));
    }
    SUBCASE("rows sum to one") {
        GumbelNoise noise(3);
        for (int i = 0; i < 100; ++i) {
            const auto y = encode_soft(model, testing::random_vector(rng, 8, 3.0), 0.7, noise);
            REQUIRE(y.size() == 8);
            for (std::size_t row = 0; row < 2; ++row) {
                double sum = 0.0;
                for (std::size_t j = 0; j < 4; ++j) sum += y[row * 4 + j];
                REQUIRE(std::abs(sum - 1.0) <= 1e-9);
            }
        }
    }
    SUBCASE("noiseless argmax equals the logit argmax and encode_hard") {
        ZeroNoise zero;
        for (int i = 0; i < 100; ++i) {
            const auto x = testing::random_vector(rng, 8, 2.0);
            const auto y = encode_soft(model, x, 1.0, zero);
            const auto logits = encode_logits(model, x);
            const auto code = encode_hard(model, x);
            for (std::size_t row = 0; row < 2; ++row) {
                CHECK(argmax(y.data() + row * 4, 4) == argmax(logits.data() + row * 4, 4));
                CHECK(argmax(y.data() + row * 4, 4) == code.indices[row]);
            }
        }
    }
    SUBCASE("dimension mismatch") {
        ZeroNoise zero;
        CHECK(error_kind([&] { encode_soft(model, testing::random_vector(rng, 7), 1.0, zero); }) ==
              ErrorKind::DimensionMismatch);
    }
}

TEST_CASE("encode_hard") {
    const auto model = CodecModel::initialize(CodeConfig(16, 8, 32), 2);
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        const auto x = testing::random_vector(rng, 32, 2.0);
        const auto code = encode_hard(model, x);
        CHECK(code == encode_hard(model, x));
        REQUIRE(code.size() == 8);
        for (auto idx : code.indices) CHECK(idx < 16);
    }
    CHECK(error_kind([&] { encode_hard(model, testing::random_vector(rng, 31)); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("encode_hard breaks ties toward the lowest index") {
    auto model = small_model();
    for (auto& w : model.encoder_logits.weights) w = 0.0;
    for (auto& b : model.encoder_logits.bias) b = 0.0;
    model.encoder_logits.bias[2] = 1.0;  // cluster 0: {0, 0, 1, 0}
    model.encoder_logits.bias[5] = 1.0;  // cluster 1: {0, 1, 1, 0}
    model.encoder_logits.bias[6] = 1.0;
    const auto code = encode_hard(model, ContextVector{std::vector<double>(8, 0.3), "x"});
    CHECK(code.indices == std::vector<std::uint16_t>{2, 1});
}

TEST_CASE("decode") {
    const auto model = small_model(3);
    Rng rng(8);
    SUBCASE("one-hot rows match the low-temperature relaxation") {
        ZeroNoise zero;
        for (int i = 0; i < 20; ++i) {
            const auto x = testing::random_vector(rng, 8, 2.0);
            const auto relaxed = encode_soft(model, x, 1e-4, zero);
            const auto hard = one_hot(encode_hard(model, x), model.config);
            const auto a = decode(model, relaxed);
            const auto b = decode(model, hard);
            for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(a.values[j] - b.values[j]) <= 1e-3);
        }
    }
    SUBCASE("output has dimension D") {
        std::vector<double> act(8, 0.25);
        CHECK(decode(model, act).dim() == 8);
    }
    SUBCASE("zero-weight decoder returns the output bias") {
        auto rigged = model;
        for (auto& w : rigged.decoder_output.weights) w = 0.0;
        for (std::size_t j = 0; j < 8; ++j) rigged.decoder_output.bias[j] = 0.5 * static_cast<double>(j);
        const auto out = decode(rigged, std::vector<double>(8, 0.25));
        for (std::size_t j = 0; j < 8; ++j) CHECK(out.values[j] == 0.5 * static_cast<double>(j));
    }
    SUBCASE("shape mismatch") {
        CHECK(error_kind([&] { decode(model, std::vector<double>(7, 0.0)); }) == ErrorKind::DimensionMismatch);
    }
}

TEST_CASE("reconstruction_loss") {
    const auto model = small_model(4);
    Rng rng(9);
    SUBCASE("zero when the decoder is rigged to reproduce the input") {
        const auto x = testing::random_vector(rng, 8);
        auto rigged = model;
        for (auto& w : rigged.decoder_output.weights) w = 0.0;
        rigged.decoder_output.bias = x.values;
        GumbelNoise noise(1);
        CHECK(reconstruction_loss(rigged, std::span<const ContextVector>(&x, 1), 1.0, noise) == 0.0);
    }
    SUBCASE("matches a two-loop MSE") {
        std::vector<ContextVector> batch;
        for (int i = 0; i < 6; ++i) batch.push_back(testing::random_vector(rng, 8, 1.5));
        std::vector<double> fixed(6 * 8);
        for (auto& g : fixed) g = rng.gumbel();

        FixedNoise noise(fixed);
        const double loss = reconstruction_loss(model, batch, 0.8, noise);

        FixedNoise replay(fixed);
        double oracle = 0.0;
        for (const auto& x : batch) {
            const auto out = decode(model, encode_soft(model, x, 0.8, replay));
            double per = 0.0;
            for (std::size_t j = 0; j < 8; ++j) per += (out.values[j] - x.values[j]) * (out.values[j] - x.values[j]);
            oracle += per / 8.0;
        }
        oracle /= 6.0;
        CHECK(std::abs(loss - oracle) <= 1e-10);
    }
    SUBCASE("nonnegative") {
        GumbelNoise noise(2);
        for (int i = 0; i < 1000; ++i) {
            std::vector<ContextVector> batch(1 + rng.below(4));
            for (auto& x : batch) x = testing::random_vector(rng, 8, 3.0);
            REQUIRE(reconstruction_loss(model, batch, rng.uniform(0.1, 2.0), noise) >= 0.0);
        }
    }
    SUBCASE("empty batch") {
        GumbelNoise noise(2);
        CHECK(error_kind([&] { reconstruction_loss(model, {}, 1.0, noise); }) == ErrorKind::EmptyInput);
    }
}

TEST_CASE("gradient check") {
    Rng rng(10);
    const auto model = small_model(5);
    const auto x = testing::random_vector(rng, 8, 1.5);
    std::vector<double> noise(8);
    for (auto& g : noise) g = rng.gumbel();

    SUBCASE("analytic gradients match central differences") {
        CHECK(gradient_check(model, x, noise, 1.0, 1000) < 1e-4);
        CHECK(gradient_check(model, x, noise, 0.5, 1000) < 1e-4);
    }
    SUBCASE("with input standardization") {
        auto standardized = model;
        standardized.standardization = Standardization{std::vector<double>(8, 0.25), std::vector<double>(8, 2.0)};
        CHECK(gradient_check(standardized, x, noise, 1.0, 1000) < 1e-4);
    }
    SUBCASE("stationary point has zero gradient") {
        auto rigged = model;
        for (auto& w : rigged.decoder_output.weights) w = 0.0;
        rigged.decoder_output.bias = x.values;
        FixedNoise fixed(noise);
        const auto lg = loss_and_gradients(rigged, std::span<const ContextVector>(&x, 1), 1.0, fixed);
        double norm = 0.0;
        for (const auto& block : lg.gradients.blocks) {
            for (double g : block) norm += g * g;
        }
        CHECK(std::sqrt(norm) < 1e-8);
    }
    SUBCASE("scaling the loss scales the gradients") {
        FixedNoise n1(noise), n2(noise);
        const std::span<const ContextVector> batch(&x, 1);
        const auto once = loss_and_gradients(model, batch, 1.0, n1);
        const auto twice = loss_and_gradients(model, batch, 1.0, n2, 2.0);
        CHECK(twice.loss == doctest::Approx(2.0 * once.loss).epsilon(1e-12));
        for (std::size_t b = 0; b < once.gradients.blocks.size(); ++b) {
            for (std::size_t i = 0; i < once.gradients.blocks[b].size(); ++i) {
                REQUIRE(std::abs(twice.gradients.blocks[b][i] - 2.0 * once.gradients.blocks[b][i]) <= 1e-10);
            }
        }
    }
}

TEST_CASE("temperature schedule") {
    TrainConfig cfg;
    cfg.epochs = 11;
    CHECK(temperature_at(cfg, 0) == 1.0);
    CHECK(temperature_at(cfg, 10) == 1.0);
    cfg.anneal = true;
    CHECK(temperature_at(cfg, 0) == doctest::Approx(1.0));
    CHECK(temperature_at(cfg, 10) == doctest::Approx(0.1));
    for (std::size_t e = 1; e < 11; ++e) {
        CHECK(temperature_at(cfg, e) <= temperature_at(cfg, e - 1));
        CHECK(temperature_at(cfg, e) > 0.0);
    }
}

TEST_CASE("training") {
    const auto data = testing::gaussian_blobs(500, 16, 4, 21);
    const CodeConfig cfg(4, 4, 16);
    const auto initial = CodecModel::initialize(cfg, 3);
    TrainConfig tc;
    tc.learning_rate = 0.005;
    tc.batch_size = 64;
    tc.epochs = 50;
    tc.seed = 5;

    SUBCASE("loss halves on the blob fixture and the smoothed trace never rises") {
        const auto result = train(initial, data, tc);
        REQUIRE(result.loss_trace.size() == 50);
        for (double l : result.loss_trace) CHECK(std::isfinite(l));
        CHECK(result.loss_trace.back() < 0.5 * result.loss_trace.front());
        std::vector<double> smooth;
        for (std::size_t e = 0; e + 5 <= result.loss_trace.size(); ++e) {
            double s = 0.0;
            for (std::size_t j = e; j < e + 5; ++j) s += result.loss_trace[j];
            smooth.push_back(s / 5.0);
        }
        for (std::size_t e = 1; e < smooth.size(); ++e) CHECK(smooth[e] <= smooth[e - 1]);
        for (auto block : result.model.parameters()) {
            for (double w : block) REQUIRE(static_cast<double>(static_cast<float>(w)) == w);
        }
    }
    SUBCASE("zero epochs leave the model untouched") {
        tc.epochs = 0;
        const auto result = train(initial, data, tc);
        CHECK(result.loss_trace.empty());
        CHECK(result.model == initial);
    }
    SUBCASE("same seed, same trace and weights") {
        tc.epochs = 5;
        const auto a = train(initial, data, tc);
        const auto b = train(initial, data, tc);
        CHECK(a.loss_trace == b.loss_trace);
        CHECK(a.model == b.model);
        tc.seed = 6;
        CHECK(train(initial, data, tc).loss_trace != a.loss_trace);
    }
    SUBCASE("annealed training stays finite") {
        tc.epochs = 10;
        tc.anneal = true;
        const auto result = train(initial, data, tc);
        CHECK(result.loss_trace.back() < result.loss_trace.front());
    }
    SUBCASE("standardized training stores its statistics") {
        tc.epochs = 5;
        tc.standardize = true;
        const auto result = train(initial, data, tc);
        REQUIRE(result.model.standardization.has_value());
        CHECK(result.model.standardization->mean.size() == 16);
        for (double s : result.model.standardization->scale) CHECK(s > 0.0);
    }
    SUBCASE("divergence reports the epoch") {
        tc.learning_rate = 1e6;
        tc.epochs = 20;
        try {
            train(initial, data, tc);
            FAIL("expected divergence");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Diverged);
            REQUIRE(e.position().has_value());
            CHECK(*e.position() >= 1);
            CHECK(*e.position() <= 20);
        }
    }
    SUBCASE("invalid inputs") {
        CHECK(error_kind([&] { train(initial, {}, tc); }) == ErrorKind::EmptyInput);
        auto bad = tc;
        bad.learning_rate = 0.0;
        CHECK(error_kind([&] { train(initial, data, bad); }) == ErrorKind::InvalidConfig);
        bad = tc;
        bad.tau = 0.0;
        CHECK(error_kind([&] { train(initial, data, bad); }) == ErrorKind::InvalidTemperature);
        Rng rng(1);
        std::vector<ContextVector> wrong{testing::random_vector(rng, 15)};
        CHECK(error_kind([&] { train(initial, wrong, tc); }) == ErrorKind::DimensionMismatch);
    }
}

TEST_CASE("inference is thread-safe on a shared model") {
    const auto model = CodecModel::initialize(CodeConfig(16, 8, 32), 4);
    Rng rng(12);
    std::vector<ContextVector> xs;
    for (int i = 0; i < 64; ++i) xs.push_back(testing::random_vector(rng, 32));
    std::vector<CompositionalCode> serial;
    for (const auto& x : xs) serial.push_back(encode_hard(model, x));
    std::vector<CompositionalCode> threaded(xs.size());
#pragma omp parallel for num_threads(4)
    for (int i = 0; i < 64; ++i) threaded[i] = encode_hard(model, xs[i]);
    CHECK(serial == threaded);
}
