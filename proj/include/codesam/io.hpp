#pragma once

// Binary file formats (all little-endian, see docs/formats.md) and the dataset TSV.
// Readers validate every length against the bytes actually present before
// allocating and reject trailing garbage. Writers go through a temporary file that
// is renamed into place.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "codesam/codec.hpp"
#include "codesam/core.hpp"
#include "codesam/sam.hpp"
#include "codesam/wsd.hpp"

namespace codesam::io {

inline constexpr std::uint32_t kFormatVersion = 1;

// Vector files ("CTXV")
std::string encode_vectors(const std::vector<ContextVector>& vectors, std::uint32_t dim);
std::vector<ContextVector> decode_vectors(std::string_view bytes);
void write_vectors(const std::filesystem::path& path, const std::vector<ContextVector>& vectors);
void write_vectors(const std::filesystem::path& path, const std::vector<ContextVector>& vectors, std::uint32_t dim);
std::vector<ContextVector> read_vectors(const std::filesystem::path& path);

// Code files ("CCOD")
struct CodeSet {
    std::uint32_t k = 0;
    std::uint32_t m = 0;
    std::vector<CompositionalCode> codes;
    std::vector<std::string> ids;  // parallel to codes
};

std::string encode_codes(const CodeSet& set);
CodeSet decode_codes(std::string_view bytes);
void write_codes(const std::filesystem::path& path, const CodeSet& set);
CodeSet read_codes(const std::filesystem::path& path);

// Model files ("CMDL")
std::string encode_model(const CodecModel& model);
CodecModel decode_model(std::string_view bytes);
void write_model(const std::filesystem::path& path, const CodecModel& model);
CodecModel read_model(const std::filesystem::path& path);

// Memory files ("CSAM"): one or more named memories sharing a code config.
struct NamedMemory {
    std::string name;
    SparseMemory memory;
};

std::string encode_memories(const CodeConfig& config, const std::vector<NamedMemory>& memories);
std::vector<NamedMemory> decode_memories(std::string_view bytes, CodeConfig* config = nullptr);
void write_index(const std::filesystem::path& path, const LemmaIndex& index);
LemmaIndex read_index(const std::filesystem::path& path);

// Dataset TSV: instance_id, lemma, sense_key, vector reference.
struct DatasetRecord {
    std::string instance_id;
    std::string lemma;
    std::string sense_key;
    std::string vector_ref;
};

std::string encode_dataset(const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> decode_dataset(std::string_view text);
void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

/// Joins records with their vectors by instance id; unresolved references throw
/// IndexOutOfRange naming the record.
std::vector<LabeledInstance> resolve(const std::vector<DatasetRecord>& records,
                                     const std::vector<ContextVector>& vectors);

std::string read_file(const std::filesystem::path& path);
/// Writes `path.tmp` then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace codesam::io
