#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace codesam {

enum class ErrorKind {
    EmptyInput,
    DimensionMismatch,
    NonFinite,
    InvalidConfig,
    InvalidTemperature,
    Diverged,
    ConfigMismatch,
    EmptyMemory,
    EmptyQuery,
    Frozen,
    BadMagic,
    UnsupportedVersion,
    Corrupt,
    IndexOutOfRange,
    Io,
};

const char* to_string(ErrorKind kind);

/// Library-wide exception. `position` carries the epoch for Diverged, the byte
/// offset for Corrupt, and the record number for IndexOutOfRange.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what, std::optional<std::uint64_t> position = std::nullopt);

    ErrorKind kind() const noexcept { return kind_; }
    std::optional<std::uint64_t> position() const noexcept { return position_; }

private:
    ErrorKind kind_;
    std::optional<std::uint64_t> position_;
};

/// Code geometry: M clusters of K neurons, fed by D-dimensional vectors.
struct CodeConfig {
    std::uint32_t k = 0;
    std::uint32_t m = 0;
    std::uint32_t d = 1024;

    CodeConfig() = default;
    CodeConfig(std::uint32_t k, std::uint32_t m, std::uint32_t d = 1024);

    std::size_t neurons() const { return std::size_t{k} * m; }
    /// ceil(log2(K)): bits needed to index one neuron inside a cluster.
    std::uint32_t bits_per_cluster() const;

    friend bool operator==(const CodeConfig&, const CodeConfig&) = default;
};

void validate(const CodeConfig& config);

std::uint64_t bits_per_code(const CodeConfig& config);

/// Storage saved by replacing D scalars of `baseline_bits_per_scalar` bits with one code.
double compression_rate(const CodeConfig& config, std::uint32_t baseline_bits_per_scalar = 32);

struct ContextVector {
    std::vector<double> values;
    std::string source_id;

    std::size_t dim() const { return values.size(); }
};

/// Throws DimensionMismatch / NonFinite when `v` is not a finite vector of length `dim`.
void check_vector(const ContextVector& v, std::size_t dim);

/// Element-wise mean, used for multi-token words.
ContextVector average_vectors(std::span<const ContextVector> vectors);

struct CompositionalCode {
    std::vector<std::uint16_t> indices;

    std::size_t size() const { return indices.size(); }
    friend bool operator==(const CompositionalCode&, const CompositionalCode&) = default;
};

/// Throws ConfigMismatch when the code does not have M entries all below K.
void check_code(const CompositionalCode& code, const CodeConfig& config);

/// Number of clusters whose active indices differ. Throws ConfigMismatch when the
/// codes have different lengths (or, with a config, do not conform to it).
std::uint32_t hamming(const CompositionalCode& a, const CompositionalCode& b);
std::uint32_t hamming(const CompositionalCode& a, const CompositionalCode& b, const CodeConfig& config);

struct LabeledInstance {
    std::string instance_id;
    std::string lemma;
    std::string sense_key;
    ContextVector vector;
};

/// Deterministic random source. The integer stream of mt19937_64 is fixed by the
/// standard; the mappings below are ours, so streams match across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in the open interval (0, 1).
    double uniform_open();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();
    double gumbel();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace codesam
