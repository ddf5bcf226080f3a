#include "codesam/sam.hpp"

#include <bit>
#include <sstream>

#include "codesam/kernels.hpp"

namespace codesam {

namespace {

void check_query(const QueryPattern& query, const CodeConfig& config) {
    if (query.active.size() != config.m) {
        throw Error(ErrorKind::ConfigMismatch, "query has " + std::to_string(query.active.size()) +
                                                   " clusters, expected " + std::to_string(config.m));
    }
    for (std::size_t i = 0; i < query.active.size(); ++i) {
        if (query.active[i] && *query.active[i] >= config.k) {
            throw Error(ErrorKind::ConfigMismatch, "query cluster " + std::to_string(i) + " is not below K");
        }
    }
    if (query.present() == 0) throw Error(ErrorKind::EmptyQuery, "every query cluster is erased");
}

}  // namespace

QueryPattern QueryPattern::full(const CompositionalCode& code) {
    QueryPattern q;
    q.active.assign(code.indices.begin(), code.indices.end());
    return q;
}

std::size_t QueryPattern::present() const {
    std::size_t n = 0;
    for (const auto& a : active) n += a.has_value() ? 1 : 0;
    return n;
}

SparseMemory::SparseMemory(const CodeConfig& config) : config_(config), rows_(config.neurons()) {
    validate(config);
}

void SparseMemory::ensure_capacity(std::size_t nodes) {
    const std::size_t words = (nodes + 63) / 64;
    if (!rows_.empty() && rows_.front().size() >= words) return;
    for (auto& r : rows_) r.resize(words, 0);
}

std::string SparseMemory::dedup_key(const CompositionalCode& code, const NodeMeta& meta) {
    std::string key;
    key.reserve(code.size() * 2 + meta.instance_id.size() + meta.lemma.size() + meta.sense_key.size() + 3);
    for (auto idx : code.indices) {
        key.push_back(static_cast<char>(idx & 0xff));
        key.push_back(static_cast<char>(idx >> 8));
    }
    for (const auto* part : {&meta.instance_id, &meta.lemma, &meta.sense_key}) {
        key.push_back('\0');
        key += *part;
    }
    return key;
}

NodeId SparseMemory::store(const CompositionalCode& code, const NodeMeta& meta, bool dedup) {
    if (frozen_) throw Error(ErrorKind::Frozen, "memory is frozen");
    check_code(code, config_);
    auto key = dedup_key(code, meta);
    if (dedup) {
        if (auto it = dedup_.find(key); it != dedup_.end()) return it->second;
    }
    const auto node = static_cast<NodeId>(meta_.size());
    ensure_capacity(meta_.size() + 1);
    for (std::size_t i = 0; i < config_.m; ++i) {
        rows_[i * config_.k + code.indices[i]][node / 64] |= std::uint64_t{1} << (node % 64);
    }
    codes_.push_back(code);
    meta_.push_back(meta);
    dedup_.emplace(std::move(key), node);
    return node;
}

bool SparseMemory::connected(std::size_t cluster, std::uint16_t neuron, NodeId node) const {
    if (cluster >= config_.m || neuron >= config_.k || node >= meta_.size()) return false;
    return (rows_[cluster * config_.k + neuron][node / 64] >> (node % 64)) & 1u;
}

std::uint64_t SparseMemory::connection_count() const {
    std::uint64_t total = 0;
    for (const auto& r : rows_) {
        for (auto w : r) total += static_cast<std::uint64_t>(std::popcount(w));
    }
    return total;
}

std::span<const std::uint64_t> SparseMemory::row(std::size_t cluster, std::uint16_t neuron) const {
    const auto& r = rows_.at(cluster * config_.k + neuron);
    return std::span<const std::uint64_t>(r).first(words_per_row());
}

RetrievalResult SparseMemory::retrieve(const QueryPattern& query, bool keep_scores, ScanMode mode) const {
    if (empty()) throw Error(ErrorKind::EmptyMemory, "memory holds no patterns");
    check_query(query, config_);

    std::vector<const std::uint64_t*> active;
    active.reserve(query.active.size());
    for (std::size_t i = 0; i < query.active.size(); ++i) {
        if (query.active[i]) active.push_back(rows_[i * config_.k + *query.active[i]].data());
    }
    const auto scan = mode == ScanMode::serial
                          ? kernels::serial::wta_scan(active, words_per_row(), size(), keep_scores)
                          : kernels::parallel::wta_scan(active, words_per_row(), size(), keep_scores);

    RetrievalResult result;
    result.score = scan.max_score;
    result.per_node_scores = scan.scores;
    for (std::size_t w = 0; w < scan.winners.size(); ++w) {
        std::uint64_t bits = scan.winners[w];
        while (bits != 0) {
            result.winners.push_back(static_cast<NodeId>(w * 64 + std::countr_zero(bits)));
            bits &= bits - 1;
        }
    }
    return result;
}

SparseMemory SparseMemory::from_rows(const CodeConfig& config, std::span<const std::uint64_t> rows,
                                     std::vector<NodeMeta> meta) {
    SparseMemory memory(config);
    const std::size_t nodes = meta.size();
    const std::size_t words = (nodes + 63) / 64;
    if (rows.size() != config.neurons() * words) {
        throw Error(ErrorKind::Corrupt, "connection matrix has the wrong number of words");
    }
    std::vector<CompositionalCode> codes(nodes);
    std::vector<std::uint8_t> seen(nodes);
    for (std::size_t cluster = 0; cluster < config.m; ++cluster) {
        std::fill(seen.begin(), seen.end(), 0);
        for (std::size_t neuron = 0; neuron < config.k; ++neuron) {
            const std::size_t r = cluster * config.k + neuron;
            for (std::size_t w = 0; w < words; ++w) {
                std::uint64_t bits = rows[r * words + w];
                const std::size_t word_nodes = std::min<std::size_t>(64, nodes - w * 64);
                if (word_nodes < 64 && (bits >> word_nodes) != 0) {
                    throw Error(ErrorKind::Corrupt, "padding bits set in row " + std::to_string(r), r * words + w);
                }
                while (bits != 0) {
                    const std::size_t node = w * 64 + std::countr_zero(bits);
                    bits &= bits - 1;
                    if (seen[node]++) {
                        throw Error(ErrorKind::Corrupt, "node " + std::to_string(node) +
                                                            " has several connections in cluster " +
                                                            std::to_string(cluster), r * words + w);
                    }
                    codes[node].indices.push_back(static_cast<std::uint16_t>(neuron));
                }
            }
        }
        for (std::size_t node = 0; node < nodes; ++node) {
            if (!seen[node]) {
                throw Error(ErrorKind::Corrupt, "node " + std::to_string(node) + " has no connection in cluster " +
                                                    std::to_string(cluster), cluster * config.k * words);
            }
        }
    }
    for (std::size_t node = 0; node < nodes; ++node) memory.store(codes[node], meta[node]);
    return memory;
}

RetrievalResult retrieve_naive(const SparseMemory& memory, const QueryPattern& query) {
    if (memory.empty()) throw Error(ErrorKind::EmptyMemory, "memory holds no patterns");
    check_query(query, memory.config());
    RetrievalResult result;
    result.per_node_scores.resize(memory.size());
    for (NodeId node = 0; node < memory.size(); ++node) {
        const auto& code = memory.code(node);
        std::uint32_t score = 0;
        for (std::size_t i = 0; i < query.active.size(); ++i) {
            if (query.active[i] && *query.active[i] == code.indices[i]) ++score;
        }
        result.per_node_scores[node] = score;
        if (score > result.score) {
            result.score = score;
            result.winners.clear();
        }
        if (score == result.score) result.winners.push_back(node);
    }
    return result;
}

bool score_equivalence_check(const SparseMemory& memory, const CompositionalCode& full_query) {
    check_code(full_query, memory.config());
    if (memory.empty()) return true;
    const auto result = memory.retrieve(QueryPattern::full(full_query), true);
    for (NodeId node = 0; node < memory.size(); ++node) {
        if (result.per_node_scores[node] != memory.config().m - hamming(full_query, memory.code(node))) return false;
    }
    return true;
}

MemoryStats memory_stats(const SparseMemory& memory) {
    MemoryStats stats;
    stats.node_count = memory.size();
    stats.connection_count = memory.connection_count();
    stats.bits_used = memory.config().neurons() * stats.node_count;
    stats.density = stats.bits_used == 0 ? 0.0
                                         : static_cast<double>(stats.connection_count) /
                                               static_cast<double>(stats.bits_used);
    return stats;
}

std::string dump(const SparseMemory& memory) {
    std::ostringstream out;
    for (NodeId node = 0; node < memory.size(); ++node) {
        const auto& meta = memory.meta(node);
        out << node << '\t' << meta.lemma << '\t' << meta.sense_key << '\t';
        const auto& code = memory.code(node);
        for (std::size_t i = 0; i < code.size(); ++i) out << (i ? " " : "") << code.indices[i];
        out << '\n';
    }
    return out.str();
}

}  // namespace codesam
