#pragma once

// Binary sparse associative memory. The top layer has M*K neurons (one per
// cluster position); every stored code adds one bottom-layer node wired to the M
// neurons it activates. Retrieval counts, per node, the connections to the active
// query neurons and keeps the maximum (winner-takes-all).
//
// Layout: one bit row per top-layer neuron, 64 nodes per word.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "codesam/core.hpp"

namespace codesam {

using NodeId = std::uint32_t;

struct NodeMeta {
    std::string instance_id;
    std::string lemma;
    std::string sense_key;

    friend bool operator==(const NodeMeta&, const NodeMeta&) = default;
};

/// Partial pattern: one optional active neuron per cluster; nullopt is an erasure.
struct QueryPattern {
    std::vector<std::optional<std::uint16_t>> active;

    static QueryPattern full(const CompositionalCode& code);
    std::size_t present() const;
};

struct RetrievalResult {
    std::vector<NodeId> winners;  // ascending
    std::uint32_t score = 0;
    std::vector<std::uint32_t> per_node_scores;  // empty unless requested
};

struct MemoryStats {
    std::uint64_t node_count = 0;
    std::uint64_t connection_count = 0;
    std::uint64_t bits_used = 0;
    double density = 0.0;
};

enum class ScanMode { serial, parallel };

class SparseMemory {
public:
    explicit SparseMemory(const CodeConfig& config);

    const CodeConfig& config() const { return config_; }
    std::size_t size() const { return meta_.size(); }
    bool empty() const { return meta_.empty(); }
    bool frozen() const { return frozen_; }

    /// Adds a node wired to (i, code[i]) for every cluster i. With `dedup`, an
    /// identical (code, meta) pair returns the existing node instead.
    NodeId store(const CompositionalCode& code, const NodeMeta& meta, bool dedup = false);

    /// Makes the memory read-only; further stores throw Error(Frozen).
    void freeze() { frozen_ = true; }

    RetrievalResult retrieve(const QueryPattern& query, bool keep_scores = false,
                             ScanMode mode = ScanMode::parallel) const;

    bool connected(std::size_t cluster, std::uint16_t neuron, NodeId node) const;
    std::uint64_t connection_count() const;

    const NodeMeta& meta(NodeId node) const { return meta_.at(node); }
    const CompositionalCode& code(NodeId node) const { return codes_.at(node); }
    std::span<const NodeMeta> metas() const { return meta_; }

    std::size_t words_per_row() const { return (meta_.size() + 63) / 64; }
    /// Bit row of top-layer neuron (cluster, neuron); words_per_row() words.
    std::span<const std::uint64_t> row(std::size_t cluster, std::uint16_t neuron) const;

    /// Rebuilds a memory from its rows (words_per_row(node_count) words each, in
    /// neuron order) and node metadata. Throws Corrupt if a node does not have
    /// exactly one connection per cluster or padding bits are set.
    static SparseMemory from_rows(const CodeConfig& config, std::span<const std::uint64_t> rows,
                                  std::vector<NodeMeta> meta);

private:
    void ensure_capacity(std::size_t nodes);
    static std::string dedup_key(const CompositionalCode& code, const NodeMeta& meta);

    CodeConfig config_;
    std::vector<std::vector<std::uint64_t>> rows_;  // M*K rows
    std::vector<CompositionalCode> codes_;
    std::vector<NodeMeta> meta_;
    std::unordered_map<std::string, NodeId> dedup_;
    bool frozen_ = false;
};

/// Reference scorer: compares each stored code cluster by cluster, no bit packing.
RetrievalResult retrieve_naive(const SparseMemory& memory, const QueryPattern& query);

/// True iff score(node) == M - hamming(query, node) for every node.
bool score_equivalence_check(const SparseMemory& memory, const CompositionalCode& full_query);

MemoryStats memory_stats(const SparseMemory& memory);

/// One line per node: node_id, lemma, sense_key, code (space-separated), tab-separated.
std::string dump(const SparseMemory& memory);

}  // namespace codesam
