#pragma once

// Inner loops shared by the codec and the associative memory. Each kernel has a
// plain serial version and an OpenMP version. Both accumulate every output element
// in the same order, so results are bit-identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace codesam::kernels {

/// Row-major view of a rows x cols matrix.
struct MatrixView {
    const double* data;
    std::size_t rows;
    std::size_t cols;
};

struct MutableMatrixView {
    double* data;
    std::size_t rows;
    std::size_t cols;
};

/// Winners of a WTA scan: the maximum score and a bit mask over nodes reaching it.
struct WtaScan {
    std::uint32_t max_score = 0;
    std::vector<std::uint64_t> winners;
    /// Filled only when requested.
    std::vector<std::uint32_t> scores;
};

/// Number of bit planes needed to count up to `max_count`.
std::size_t counter_planes(std::size_t max_count);

namespace serial {

/// y = W x + b
void affine(MatrixView w, std::span<const double> x, std::span<const double> b, std::span<double> y);
/// dx = W^T dy
void affine_transpose(MatrixView w, std::span<const double> dy, std::span<double> dx);
/// G += a b^T
void rank1_update(MutableMatrixView g, std::span<const double> a, std::span<const double> b);
/// Sums the active neuron rows per node. `rows` holds one pointer per active query
/// neuron, each to `words` 64-bit words covering `nodes` bottom-layer nodes.
WtaScan wta_scan(std::span<const std::uint64_t* const> rows, std::size_t words, std::size_t nodes, bool keep_scores);

}  // namespace serial

namespace parallel {

void affine(MatrixView w, std::span<const double> x, std::span<const double> b, std::span<double> y);
void affine_transpose(MatrixView w, std::span<const double> dy, std::span<double> dx);
void rank1_update(MutableMatrixView g, std::span<const double> a, std::span<const double> b);
WtaScan wta_scan(std::span<const std::uint64_t* const> rows, std::size_t words, std::size_t nodes, bool keep_scores);

}  // namespace parallel

void set_threads(int threads);
int max_threads();

}  // namespace codesam::kernels
