#include "codesam/wsd.hpp"

#include <algorithm>
#include <optional>

namespace codesam {

namespace {

// Highest count wins; equal counts go to the lexicographically smaller key.
std::string most_frequent(const std::map<std::string, std::uint64_t>& counts) {
    std::string best;
    std::uint64_t best_count = 0;
    for (const auto& [sense, n] : counts) {
        if (n > best_count) {
            best = sense;
            best_count = n;
        }
    }
    return best;
}

}  // namespace

const char* to_string(Provenance provenance) {
    switch (provenance) {
        case Provenance::retrieved: return "retrieved";
        case Provenance::tie_majority: return "tie_majority";
        case Provenance::lemma_fallback: return "lemma_fallback";
        case Provenance::abstain: return "abstain";
    }
    return "unknown";
}

std::size_t LemmaIndex::node_count() const {
    std::size_t n = 0;
    for (const auto& [lemma, memory] : memories_) n += memory.size();
    return n;
}

void LemmaIndex::count(const NodeMeta& meta) {
    ++global_frequency_[meta.sense_key];
    ++lemma_frequency_[meta.lemma][meta.sense_key];
}

void LemmaIndex::add(const CompositionalCode& code, const NodeMeta& meta) {
    if (meta.lemma.empty() || meta.sense_key.empty()) {
        throw Error(ErrorKind::InvalidConfig, "instance '" + meta.instance_id + "' lacks a lemma or sense key");
    }
    auto it = memories_.find(meta.lemma);
    if (it == memories_.end()) it = memories_.emplace(meta.lemma, SparseMemory(config_)).first;
    it->second.store(code, meta);
    count(meta);
}

void LemmaIndex::insert_memory(const std::string& lemma, SparseMemory memory) {
    if (!(memory.config() == config_)) throw Error(ErrorKind::ConfigMismatch, "memory config differs from index");
    if (memories_.contains(lemma)) throw Error(ErrorKind::InvalidConfig, "duplicate lemma '" + lemma + "'");
    for (const auto& meta : memory.metas()) {
        if (meta.lemma != lemma) {
            throw Error(ErrorKind::ConfigMismatch, "node lemma '" + meta.lemma + "' stored under '" + lemma + "'");
        }
    }
    for (const auto& meta : memory.metas()) count(meta);
    memories_.emplace(lemma, std::move(memory));
}

void LemmaIndex::freeze() {
    for (auto& [lemma, memory] : memories_) memory.freeze();
}

const SparseMemory* LemmaIndex::find(const std::string& lemma) const {
    auto it = memories_.find(lemma);
    return it == memories_.end() ? nullptr : &it->second;
}

std::uint64_t LemmaIndex::sense_frequency(const std::string& lemma, const std::string& sense) const {
    auto it = lemma_frequency_.find(lemma);
    if (it == lemma_frequency_.end()) return 0;
    auto jt = it->second.find(sense);
    return jt == it->second.end() ? 0 : jt->second;
}

std::string LemmaIndex::global_most_frequent() const { return most_frequent(global_frequency_); }

std::string LemmaIndex::lemma_most_frequent(const std::string& lemma) const {
    auto it = lemma_frequency_.find(lemma);
    return it == lemma_frequency_.end() ? std::string{} : most_frequent(it->second);
}

LemmaIndex build_index(std::span<const LabeledInstance> train, const CodecModel& codec) {
    LemmaIndex index(codec.config);
    for (const auto& instance : train) {
        const auto code = encode_hard(codec, instance.vector);
        index.add(code, NodeMeta{instance.instance_id, instance.lemma, instance.sense_key});
    }
    index.freeze();
    return index;
}

Prediction classify_code(const LemmaIndex& index, const std::string& lemma, const CompositionalCode& code) {
    Prediction p;
    if (index.empty()) return p;

    const SparseMemory* memory = index.find(lemma);
    if (memory == nullptr || memory->empty()) {
        p.sense_key = index.lemma_most_frequent(lemma);
        if (p.sense_key.empty()) p.sense_key = index.global_most_frequent();
        p.provenance = Provenance::lemma_fallback;
        return p;
    }

    const auto result = memory->retrieve(QueryPattern::full(code));
    if (result.winners.size() == 1) {
        p.sense_key = memory->meta(result.winners.front()).sense_key;
        p.provenance = Provenance::retrieved;
        return p;
    }

    std::map<std::string, std::uint64_t> votes;
    for (NodeId node : result.winners) ++votes[memory->meta(node).sense_key];
    // Map order makes the final lexicographic tie-break implicit.
    std::optional<std::pair<std::uint64_t, std::uint64_t>> best;
    for (const auto& [sense, n] : votes) {
        const std::pair<std::uint64_t, std::uint64_t> rank{n, index.sense_frequency(lemma, sense)};
        if (!best || rank > *best) {
            best = rank;
            p.sense_key = sense;
        }
    }
    p.provenance = Provenance::tie_majority;
    return p;
}

Prediction classify(const LemmaIndex& index, const std::string& lemma, const ContextVector& vector,
                    const CodecModel& codec) {
    check_vector(vector, codec.config.d);
    if (!index.empty() && !(index.config() == codec.config)) {
        throw Error(ErrorKind::ConfigMismatch, "codec and index disagree on the code configuration");
    }
    Prediction p = classify_code(index, lemma, encode_hard(codec, vector));
    p.instance_id = vector.source_id;
    return p;
}

EvaluationReport score_predictions(std::span<const LabeledInstance> test, std::vector<Prediction> predictions) {
    if (test.empty()) throw Error(ErrorKind::EmptyInput, "test set is empty");
    if (predictions.size() != test.size()) {
        throw Error(ErrorKind::DimensionMismatch, "one prediction per test instance is required");
    }
    EvaluationReport report;
    report.total = test.size();
    for (auto p : {Provenance::retrieved, Provenance::tie_majority, Provenance::lemma_fallback, Provenance::abstain}) {
        report.by_provenance[p] = 0;
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& p = predictions[i];
        ++report.by_provenance[p.provenance];
        if (p.provenance == Provenance::abstain) continue;
        ++report.attempted;
        if (p.sense_key == test[i].sense_key) ++report.correct;
    }
    const double correct = static_cast<double>(report.correct);
    report.precision = report.attempted == 0 ? 0.0 : correct / static_cast<double>(report.attempted);
    report.recall = correct / static_cast<double>(report.total);
    const double sum = report.precision + report.recall;
    report.f1 = sum == 0.0 ? 0.0 : 2.0 * report.precision * report.recall / sum;
    report.predictions = std::move(predictions);
    return report;
}

EvaluationReport evaluate(const LemmaIndex& index, const CodecModel& codec, std::span<const LabeledInstance> test,
                          int threads) {
    if (test.empty()) throw Error(ErrorKind::EmptyInput, "test set is empty");
    for (const auto& instance : test) check_vector(instance.vector, codec.config.d);
    if (!index.empty() && !(index.config() == codec.config)) {
        throw Error(ErrorKind::ConfigMismatch, "codec and index disagree on the code configuration");
    }

    std::vector<Prediction> predictions(test.size());
    const auto n = static_cast<std::ptrdiff_t>(test.size());
#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : 1) if (threads > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& instance = test[i];
        predictions[i] = classify(index, instance.lemma, instance.vector, codec);
        predictions[i].instance_id = instance.instance_id;
    }
    return score_predictions(test, std::move(predictions));
}

}  // namespace codesam
