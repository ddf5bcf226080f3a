#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "codesam/core.hpp"
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

}  // namespace

TEST_CASE("bits_per_code uses ceil(log2 K) bits per cluster") {
    CHECK(bits_per_code(CodeConfig(32, 32)) == 160);
    CHECK(bits_per_code(CodeConfig(64, 128)) == 768);
    CHECK(bits_per_code(CodeConfig(2, 1)) == 1);
    CHECK(bits_per_code(CodeConfig(3, 4)) == 8);
    CHECK(bits_per_code(CodeConfig(33, 1)) == 6);
}

TEST_CASE("compression rates of the published code configurations") {
    CHECK(compression_rate(CodeConfig(32, 32, 1024), 32) == doctest::Approx(204.8).epsilon(1e-12));
    CHECK(compression_rate(CodeConfig(32, 64, 1024), 32) == doctest::Approx(102.4).epsilon(1e-12));
    CHECK(compression_rate(CodeConfig(64, 64, 1024), 32) == doctest::Approx(32768.0 / 384.0).epsilon(1e-12));
    CHECK(compression_rate(CodeConfig(64, 128, 1024), 32) == doctest::Approx(32768.0 / 768.0).epsilon(1e-12));
    CHECK(compression_rate(CodeConfig(32, 32, 1024)) == compression_rate(CodeConfig(32, 32, 1024), 32));
    CHECK(error_kind([] { compression_rate(CodeConfig(32, 32), 0); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("compression rate is decreasing in M and non-increasing in K") {
    for (std::uint32_t k = 2; k <= 128; ++k) {
        for (std::uint32_t m = 1; m <= 64; ++m) {
            const double here = compression_rate(CodeConfig(k, m, 1024));
            CHECK(compression_rate(CodeConfig(k, m + 1, 1024)) < here);
            CHECK(compression_rate(CodeConfig(k + 1, m, 1024)) <= here);
        }
    }
}

TEST_CASE("code config validation") {
    CHECK(error_kind([] { CodeConfig(1, 4); }) == ErrorKind::InvalidConfig);
    CHECK(error_kind([] { CodeConfig(4, 0); }) == ErrorKind::InvalidConfig);
    CHECK(error_kind([] { CodeConfig(4, 4, 0); }) == ErrorKind::InvalidConfig);
    CHECK(error_kind([] { CodeConfig(70000, 4); }) == ErrorKind::InvalidConfig);
    CHECK(CodeConfig(4, 3, 8).neurons() == 12);
}

TEST_CASE("average_vectors") {
    SUBCASE("single vector is returned unchanged") {
        ContextVector v{{0.1, -2.5, 3.75}, "a"};
        const ContextVector v_copy = v;
        const auto avg = average_vectors(std::span<const ContextVector>(&v, 1));
        CHECK(avg.values == v_copy.values);
    }
    SUBCASE("symmetric mean") {
        std::vector<ContextVector> vs{{{1, 1}, "a"}, {{3, 3}, "b"}};
        CHECK(average_vectors(vs).values == std::vector<double>{2, 2});
    }
    SUBCASE("matches an element-wise loop") {
        Rng rng(11);
        std::vector<ContextVector> vs;
        for (int i = 0; i < 5; ++i) vs.push_back(testing::random_vector(rng, 8));
        const auto avg = average_vectors(vs);
        for (std::size_t j = 0; j < 8; ++j) {
            double s = 0.0;
            for (const auto& v : vs) s += v.values[j] / 5.0;
            CHECK(std::abs(avg.values[j] - s) <= 1e-12);
        }
    }
    SUBCASE("permutation invariant") {
        Rng rng(12);
        std::vector<ContextVector> vs;
        for (int i = 0; i < 7; ++i) vs.push_back(testing::random_vector(rng, 16));
        const auto base = average_vectors(vs);
        for (int trial = 0; trial < 20; ++trial) {
            rng.shuffle(vs);
            const auto other = average_vectors(vs);
            for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(other.values[j] - base.values[j]) <= 1e-12);
        }
    }
    SUBCASE("errors") {
        std::vector<ContextVector> none;
        CHECK(error_kind([&] { average_vectors(none); }) == ErrorKind::EmptyInput);
        std::vector<ContextVector> mixed{{{1, 2}, "a"}, {{1, 2, 3}, "b"}};
        CHECK(error_kind([&] { average_vectors(mixed); }) == ErrorKind::DimensionMismatch);
    }
}

TEST_CASE("check_vector rejects wrong lengths and non-finite values") {
    ContextVector v{{1.0, 2.0}, "x"};
    CHECK_NOTHROW(check_vector(v, 2));
    CHECK(error_kind([&] { check_vector(v, 3); }) == ErrorKind::DimensionMismatch);
    v.values[1] = std::nan("");
    CHECK(error_kind([&] { check_vector(v, 2); }) == ErrorKind::NonFinite);
    v.values[1] = INFINITY;
    CHECK(error_kind([&] { check_vector(v, 2); }) == ErrorKind::NonFinite);
}

TEST_CASE("hamming distance") {
    const CodeConfig cfg(8, 5, 4);
    const CompositionalCode a{{0, 1, 2, 3, 4}};
    const CompositionalCode b{{1, 2, 3, 4, 5}};
    CHECK(hamming(a, a, cfg) == 0);
    CHECK(hamming(a, b, cfg) == 5);
    CHECK(hamming(a, CompositionalCode{{0, 1, 7, 3, 7}}, cfg) == 2);
    CHECK(error_kind([&] { hamming(a, CompositionalCode{{0, 1}}); }) == ErrorKind::ConfigMismatch);
    CHECK(error_kind([&] { hamming(a, CompositionalCode{{0, 1, 2, 3, 8}}, cfg); }) == ErrorKind::ConfigMismatch);
}

TEST_CASE("hamming matches a per-cluster loop and is a metric") {
    Rng rng(5);
    const std::size_t m = 16;
    auto random_code = [&] {
        CompositionalCode c;
        for (std::size_t i = 0; i < m; ++i) c.indices.push_back(static_cast<std::uint16_t>(rng.below(4)));
        return c;
    };
    for (int trial = 0; trial < 10000; ++trial) {
        const auto a = random_code();
        const auto b = random_code();
        const auto c = random_code();
        std::uint32_t loop = 0;
        for (std::size_t i = 0; i < m; ++i) {
            if (a.indices[i] != b.indices[i]) ++loop;
        }
        REQUIRE(hamming(a, b) == loop);
        REQUIRE(hamming(a, b) == hamming(b, a));
        REQUIRE(hamming(a, c) <= hamming(a, b) + hamming(b, c));
    }
}

TEST_CASE("Rng helpers stay in range and are reproducible") {
    Rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform_open();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        CHECK(u == b.uniform_open());
        CHECK(a.below(7) < 7);
        b.below(7);
    }
}
