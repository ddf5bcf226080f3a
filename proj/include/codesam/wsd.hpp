#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "codesam/codec.hpp"
#include "codesam/core.hpp"
#include "codesam/sam.hpp"

namespace codesam {

enum class Provenance { retrieved, tie_majority, lemma_fallback, abstain };

const char* to_string(Provenance provenance);

struct Prediction {
    std::string instance_id;
    std::string sense_key;  // empty when abstaining
    Provenance provenance = Provenance::abstain;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// One associative memory per lemma, plus the sense frequencies used to break ties
/// and to answer for unseen lemmas.
class LemmaIndex {
public:
    LemmaIndex() = default;
    explicit LemmaIndex(const CodeConfig& config) : config_(config) {}

    const CodeConfig& config() const { return config_; }
    bool empty() const { return memories_.empty(); }
    std::size_t node_count() const;

    void add(const CompositionalCode& code, const NodeMeta& meta);
    /// Installs a whole memory under `lemma`; every node must carry that lemma.
    void insert_memory(const std::string& lemma, SparseMemory memory);
    void freeze();

    const SparseMemory* find(const std::string& lemma) const;
    const std::map<std::string, SparseMemory>& memories() const { return memories_; }

    std::uint64_t sense_frequency(const std::string& lemma, const std::string& sense) const;
    /// Most frequent sense overall; lexicographically smallest among equals.
    std::string global_most_frequent() const;
    /// Most frequent sense of `lemma`, or empty when the lemma is unknown.
    std::string lemma_most_frequent(const std::string& lemma) const;

private:
    void count(const NodeMeta& meta);

    CodeConfig config_;
    std::map<std::string, SparseMemory> memories_;
    std::map<std::string, std::uint64_t> global_frequency_;
    std::map<std::string, std::map<std::string, std::uint64_t>> lemma_frequency_;
};

LemmaIndex build_index(std::span<const LabeledInstance> train, const CodecModel& codec);

/// Full-pattern WTA retrieval in the lemma's memory. Ties go to the majority sense
/// among winners, then the higher per-lemma training frequency, then the smaller
/// sense key. Unseen lemmas fall back to the most frequent sense.
Prediction classify(const LemmaIndex& index, const std::string& lemma, const ContextVector& vector,
                    const CodecModel& codec);

/// Same policy, starting from an already computed code.
Prediction classify_code(const LemmaIndex& index, const std::string& lemma, const CompositionalCode& code);

struct EvaluationReport {
    std::uint64_t total = 0;
    std::uint64_t attempted = 0;
    std::uint64_t correct = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::map<Provenance, std::uint64_t> by_provenance;
    std::vector<Prediction> predictions;  // in test order
};

/// Micro-averaged precision (over attempted), recall (over all) and F1.
EvaluationReport score_predictions(std::span<const LabeledInstance> test, std::vector<Prediction> predictions);

/// Classifies every test instance (in parallel when `threads` > 1) and scores it.
EvaluationReport evaluate(const LemmaIndex& index, const CodecModel& codec, std::span<const LabeledInstance> test,
                          int threads = 1);

}  // namespace codesam
