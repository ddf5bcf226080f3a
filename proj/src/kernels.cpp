#include "codesam/kernels.hpp"

#include <array>
#include <bit>
#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace codesam::kernels {

namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 14;

constexpr std::size_t kMaxPlanes = 17;  // counts up to 2^17 - 1 active neurons

std::uint64_t valid_mask(std::size_t word, std::size_t nodes) {
    const std::size_t begin = word * 64;
    if (begin + 64 <= nodes) return ~std::uint64_t{0};
    return (std::uint64_t{1} << (nodes - begin)) - 1;
}

// Bit-sliced counters: plane b holds bit b of every node's running score, so one
// pass adds a whole 64-node word of connections at once.
struct BlockResult {
    std::uint32_t max_score;
    std::uint64_t winners;
};

BlockResult scan_block(std::span<const std::uint64_t* const> rows, std::size_t word, std::size_t nodes,
                       std::size_t planes, std::uint32_t* scores_out) {
    std::array<std::uint64_t, kMaxPlanes> plane{};
    for (const std::uint64_t* row : rows) {
        std::uint64_t carry = row[word];
        for (std::size_t b = 0; b < planes && carry != 0; ++b) {
            const std::uint64_t next = plane[b] & carry;
            plane[b] ^= carry;
            carry = next;
        }
    }
    std::uint64_t candidates = valid_mask(word, nodes);
    std::uint32_t max_score = 0;
    for (std::size_t b = planes; b-- > 0;) {
        const std::uint64_t hit = candidates & plane[b];
        if (hit != 0) {
            candidates = hit;
            max_score |= std::uint32_t{1} << b;
        }
    }
    if (scores_out != nullptr) {
        const std::uint64_t valid = valid_mask(word, nodes);
        for (std::size_t j = 0; j < 64 && ((valid >> j) & 1u); ++j) {
            std::uint32_t s = 0;
            for (std::size_t b = 0; b < planes; ++b) s |= static_cast<std::uint32_t>((plane[b] >> j) & 1u) << b;
            scores_out[word * 64 + j] = s;
        }
    }
    return {max_score, candidates};
}

WtaScan reduce_blocks(const std::vector<BlockResult>& blocks, std::vector<std::uint32_t>&& scores) {
    WtaScan out;
    for (const auto& block : blocks) out.max_score = std::max(out.max_score, block.max_score);
    out.winners.assign(blocks.size(), 0);
    for (std::size_t w = 0; w < blocks.size(); ++w) {
        if (blocks[w].max_score == out.max_score) out.winners[w] = blocks[w].winners;
    }
    out.scores = std::move(scores);
    return out;
}

}  // namespace

std::size_t counter_planes(std::size_t max_count) {
    return std::max<std::size_t>(1, std::bit_width(max_count));
}

namespace serial {

void affine(MatrixView w, std::span<const double> x, std::span<const double> b, std::span<double> y) {
    assert(x.size() == w.cols && y.size() == w.rows && b.size() == w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* row = w.data + r * w.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
        y[r] = acc + b[r];
    }
}

void affine_transpose(MatrixView w, std::span<const double> dy, std::span<double> dx) {
    assert(dy.size() == w.rows && dx.size() == w.cols);
    for (std::size_t c = 0; c < w.cols; ++c) dx[c] = 0.0;
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* row = w.data + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) dx[c] += row[c] * dy[r];
    }
}

void rank1_update(MutableMatrixView g, std::span<const double> a, std::span<const double> b) {
    assert(a.size() == g.rows && b.size() == g.cols);
    for (std::size_t r = 0; r < g.rows; ++r) {
        double* row = g.data + r * g.cols;
        for (std::size_t c = 0; c < g.cols; ++c) row[c] += a[r] * b[c];
    }
}

WtaScan wta_scan(std::span<const std::uint64_t* const> rows, std::size_t words, std::size_t nodes, bool keep_scores) {
    const std::size_t planes = counter_planes(rows.size());
    assert(planes <= kMaxPlanes);
    std::vector<std::uint32_t> scores(keep_scores ? nodes : 0);
    std::vector<BlockResult> blocks(words);
    for (std::size_t w = 0; w < words; ++w) {
        blocks[w] = scan_block(rows, w, nodes, planes, keep_scores ? scores.data() : nullptr);
    }
    return reduce_blocks(blocks, std::move(scores));
}

}  // namespace serial

namespace parallel {

void affine(MatrixView w, std::span<const double> x, std::span<const double> b, std::span<double> y) {
    assert(x.size() == w.cols && y.size() == w.rows && b.size() == w.rows);
    const auto rows = static_cast<std::ptrdiff_t>(w.rows);
#pragma omp parallel for schedule(static) if (w.rows * w.cols >= kParallelThreshold)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const double* row = w.data + r * w.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
        y[r] = acc + b[r];
    }
}

void affine_transpose(MatrixView w, std::span<const double> dy, std::span<double> dx) {
    assert(dy.size() == w.rows && dx.size() == w.cols);
    const auto cols = static_cast<std::ptrdiff_t>(w.cols);
    // Column-parallel; each dx[c] still sums over r in ascending order.
#pragma omp parallel for schedule(static) if (w.rows * w.cols >= kParallelThreshold)
    for (std::ptrdiff_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < w.rows; ++r) acc += w.data[r * w.cols + c] * dy[r];
        dx[c] = acc;
    }
}

void rank1_update(MutableMatrixView g, std::span<const double> a, std::span<const double> b) {
    assert(a.size() == g.rows && b.size() == g.cols);
    const auto rows = static_cast<std::ptrdiff_t>(g.rows);
#pragma omp parallel for schedule(static) if (g.rows * g.cols >= kParallelThreshold)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        double* row = g.data + r * g.cols;
        for (std::size_t c = 0; c < g.cols; ++c) row[c] += a[r] * b[c];
    }
}

WtaScan wta_scan(std::span<const std::uint64_t* const> rows, std::size_t words, std::size_t nodes, bool keep_scores) {
    const std::size_t planes = counter_planes(rows.size());
    assert(planes <= kMaxPlanes);
    std::vector<std::uint32_t> scores(keep_scores ? nodes : 0);
    std::vector<BlockResult> blocks(words);
    const auto count = static_cast<std::ptrdiff_t>(words);
#pragma omp parallel for schedule(static) if (words * rows.size() >= kParallelThreshold / 16)
    for (std::ptrdiff_t w = 0; w < count; ++w) {
        blocks[w] = scan_block(rows, w, nodes, planes, keep_scores ? scores.data() : nullptr);
    }
    return reduce_blocks(blocks, std::move(scores));
}

}  // namespace parallel

void set_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace codesam::kernels
