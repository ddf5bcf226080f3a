#include "codesam/core.hpp"

#include <bit>
#include <cmath>

namespace codesam {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::InvalidTemperature: return "InvalidTemperature";
        case ErrorKind::Diverged: return "Diverged";
        case ErrorKind::ConfigMismatch: return "ConfigMismatch";
        case ErrorKind::EmptyMemory: return "EmptyMemory";
        case ErrorKind::EmptyQuery: return "EmptyQuery";
        case ErrorKind::Frozen: return "Frozen";
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorKind::Corrupt: return "Corrupt";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what, std::optional<std::uint64_t> position)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), position_(position) {}

CodeConfig::CodeConfig(std::uint32_t k, std::uint32_t m, std::uint32_t d) : k(k), m(m), d(d) {
    validate(*this);
}

std::uint32_t CodeConfig::bits_per_cluster() const {
    return static_cast<std::uint32_t>(std::bit_width(k - 1u));
}

void validate(const CodeConfig& config) {
    if (config.k < 2) throw Error(ErrorKind::InvalidConfig, "K must be at least 2");
    if (config.k > 65536) throw Error(ErrorKind::InvalidConfig, "K must fit a 16-bit index");
    if (config.m < 1) throw Error(ErrorKind::InvalidConfig, "M must be at least 1");
    if (config.d < 1) throw Error(ErrorKind::InvalidConfig, "D must be at least 1");
}

std::uint64_t bits_per_code(const CodeConfig& config) {
    validate(config);
    return std::uint64_t{config.m} * config.bits_per_cluster();
}

double compression_rate(const CodeConfig& config, std::uint32_t baseline_bits_per_scalar) {
    if (baseline_bits_per_scalar == 0) {
        throw Error(ErrorKind::InvalidConfig, "baseline bits per scalar must be positive");
    }
    const double baseline = static_cast<double>(config.d) * baseline_bits_per_scalar;
    return baseline / static_cast<double>(bits_per_code(config));
}

void check_vector(const ContextVector& v, std::size_t dim) {
    if (v.values.size() != dim) {
        throw Error(ErrorKind::DimensionMismatch, "vector '" + v.source_id + "' has dimension " +
                                                      std::to_string(v.values.size()) + ", expected " +
                                                      std::to_string(dim));
    }
    for (std::size_t i = 0; i < dim; ++i) {
        if (!std::isfinite(v.values[i])) {
            throw Error(ErrorKind::NonFinite, "vector '" + v.source_id + "' has a non-finite element", i);
        }
    }
}

ContextVector average_vectors(std::span<const ContextVector> vectors) {
    if (vectors.empty()) throw Error(ErrorKind::EmptyInput, "cannot average zero vectors");
    const std::size_t dim = vectors.front().dim();
    ContextVector out;
    out.source_id = vectors.front().source_id;
    out.values.assign(dim, 0.0);
    for (const auto& v : vectors) {
        if (v.dim() != dim) throw Error(ErrorKind::DimensionMismatch, "averaged vectors differ in dimension");
        for (std::size_t i = 0; i < dim; ++i) out.values[i] += v.values[i];
    }
    if (vectors.size() > 1) {
        const double n = static_cast<double>(vectors.size());
        for (auto& x : out.values) x /= n;
    }
    return out;
}

void check_code(const CompositionalCode& code, const CodeConfig& config) {
    if (code.indices.size() != config.m) {
        throw Error(ErrorKind::ConfigMismatch,
                    "code has " + std::to_string(code.indices.size()) + " clusters, expected " + std::to_string(config.m));
    }
    for (std::size_t i = 0; i < code.indices.size(); ++i) {
        if (code.indices[i] >= config.k) {
            throw Error(ErrorKind::ConfigMismatch, "cluster " + std::to_string(i) + " index " +
                                                       std::to_string(code.indices[i]) + " is not below K");
        }
    }
}

std::uint32_t hamming(const CompositionalCode& a, const CompositionalCode& b) {
    if (a.size() != b.size()) throw Error(ErrorKind::ConfigMismatch, "codes have different cluster counts");
    std::uint32_t distance = 0;
    for (std::size_t i = 0; i < a.size(); ++i) distance += a.indices[i] != b.indices[i] ? 1u : 0u;
    return distance;
}

std::uint32_t hamming(const CompositionalCode& a, const CompositionalCode& b, const CodeConfig& config) {
    check_code(a, config);
    check_code(b, config);
    return hamming(a, b);
}

double Rng::uniform_open() {
    // 53 random mantissa bits, shifted half a step away from 0.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform_open(); }

std::uint64_t Rng::below(std::uint64_t n) {
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % n));
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return r % n;
}

double Rng::normal() {
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

double Rng::gumbel() { return -std::log(-std::log(uniform_open())); }

}  // namespace codesam
