#include "codesam/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace codesam::io {

namespace {

constexpr std::string_view kVectorMagic = "CTXV";
constexpr std::string_view kCodeMagic = "CCOD";
constexpr std::string_view kModelMagic = "CMDL";
constexpr std::string_view kMemoryMagic = "CSAM";

constexpr std::uint32_t kFlagStandardized = 1u;

class Writer {
public:
    void raw(std::string_view s) { out_.append(s); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void str(std::string_view s) {
        if (s.size() > UINT32_MAX) throw Error(ErrorKind::Io, "string too long to serialize");
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s);
    }
    void f32s(std::span<const double> values) {
        for (double v : values) f32(v);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xe0) == 0xc0) {
            extra = 1;
            cp = c & 0x1f;
        } else if ((c & 0xf0) == 0xe0) {
            extra = 2;
            cp = c & 0x0f;
        } else if ((c & 0xf8) == 0xf0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= s.size()) return false;
        for (std::size_t j = 1; j <= extra; ++j) {
            const auto cc = static_cast<unsigned char>(s[i + j]);
            if ((cc & 0xc0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3f);
        }
        static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
        if (cp < kMin[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
        i += extra + 1;
    }
    return true;
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::uint64_t n, const char* what) const {
        if (remaining() < n) {
            throw Error(ErrorKind::Corrupt, std::string("truncated ") + what + " at byte " +
                                                std::to_string(bytes_.size()),
                        bytes_.size());
        }
    }

    void magic(std::string_view expected) {
        need(expected.size(), "magic");
        if (bytes_.substr(0, expected.size()) != expected) {
            throw Error(ErrorKind::BadMagic, "expected '" + std::string(expected) + "'", 0);
        }
        pos_ += expected.size();
        const std::size_t at = pos_;
        const auto version = u32("version");
        if (version != kFormatVersion) {
            throw Error(ErrorKind::UnsupportedVersion, "version " + std::to_string(version), at);
        }
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(byte(pos_ + i)) << (8 * i);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f32(const char* what) {
        const std::size_t at = pos_;
        const float v = std::bit_cast<float>(u32(what));
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::Corrupt, std::string("non-finite ") + what + " at byte " + std::to_string(at), at);
        }
        return static_cast<double>(v);
    }
    std::vector<double> f32s(std::uint64_t n, const char* what) {
        need(n * 4, what);
        std::vector<double> out(n);
        for (auto& v : out) v = f32(what);
        return out;
    }
    std::string str(const char* what) {
        const std::size_t at = pos_;
        const auto len = u32(what);
        need(len, what);
        std::string s(bytes_.substr(pos_, len));
        if (!valid_utf8(s)) {
            throw Error(ErrorKind::Corrupt, std::string("invalid UTF-8 in ") + what + " at byte " + std::to_string(at),
                        at);
        }
        pos_ += len;
        return s;
    }
    void finish() const {
        if (pos_ != bytes_.size()) {
            throw Error(ErrorKind::Corrupt, "trailing bytes at " + std::to_string(pos_), pos_);
        }
    }

private:
    std::uint8_t byte(std::size_t i) const { return static_cast<std::uint8_t>(bytes_[i]); }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void write_dense(Writer& w, const DenseLayer& layer) {
    w.f32s(layer.weights);
    w.f32s(layer.bias);
}

void read_dense(Reader& r, DenseLayer& layer, const char* what) {
    layer.weights = r.f32s(layer.weights.size(), what);
    layer.bias = r.f32s(layer.bias.size(), what);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > UINT32_MAX) throw Error(ErrorKind::Io, std::string(what) + " exceeds the format's 32-bit range");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw Error(ErrorKind::Io, "cannot read '" + path.string() + "'");
    return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot create '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorKind::Io, "cannot move file into place at '" + path.string() + "'");
    }
}

// ---------------------------------------------------------------- vectors

std::string encode_vectors(const std::vector<ContextVector>& vectors, std::uint32_t dim) {
    Writer w;
    w.raw(kVectorMagic);
    w.u32(kFormatVersion);
    w.u32(dim);
    w.u32(checked_u32(vectors.size(), "vector count"));
    for (const auto& v : vectors) {
        if (v.dim() != dim) throw Error(ErrorKind::DimensionMismatch, "vector '" + v.source_id + "' has wrong dimension");
        w.f32s(v.values);
    }
    for (const auto& v : vectors) w.str(v.source_id);
    return w.take();
}

std::vector<ContextVector> decode_vectors(std::string_view bytes) {
    Reader r(bytes);
    r.magic(kVectorMagic);
    const auto dim = r.u32("dimension");
    const auto count = r.u32("count");
    if (dim == 0 && count > 0) throw Error(ErrorKind::Corrupt, "zero dimension with vectors present", 8);
    r.need(std::uint64_t{4} * dim * count, "vector payload");
    std::vector<ContextVector> vectors(count);
    for (auto& v : vectors) v.values = r.f32s(dim, "vector element");
    std::unordered_set<std::string> seen;
    for (auto& v : vectors) {
        const std::size_t at = r.offset();
        v.source_id = r.str("instance id");
        if (!seen.insert(v.source_id).second) {
            throw Error(ErrorKind::Corrupt, "duplicate instance id '" + v.source_id + "'", at);
        }
    }
    r.finish();
    return vectors;
}

void write_vectors(const std::filesystem::path& path, const std::vector<ContextVector>& vectors, std::uint32_t dim) {
    write_file_atomic(path, encode_vectors(vectors, dim));
}

void write_vectors(const std::filesystem::path& path, const std::vector<ContextVector>& vectors) {
    const auto dim = vectors.empty() ? 0u : checked_u32(vectors.front().dim(), "dimension");
    write_vectors(path, vectors, dim);
}

std::vector<ContextVector> read_vectors(const std::filesystem::path& path) { return decode_vectors(read_file(path)); }

// ---------------------------------------------------------------- codes

std::string encode_codes(const CodeSet& set) {
    if (set.ids.size() != set.codes.size()) throw Error(ErrorKind::DimensionMismatch, "one id per code is required");
    const CodeConfig config(set.k, set.m, 1);
    Writer w;
    w.raw(kCodeMagic);
    w.u32(kFormatVersion);
    w.u32(set.k);
    w.u32(set.m);
    w.u32(checked_u32(set.codes.size(), "code count"));
    for (const auto& code : set.codes) {
        check_code(code, config);
        for (auto idx : code.indices) w.u16(idx);
    }
    for (const auto& id : set.ids) w.str(id);
    return w.take();
}

CodeSet decode_codes(std::string_view bytes) {
    Reader r(bytes);
    r.magic(kCodeMagic);
    CodeSet set;
    set.k = r.u32("K");
    set.m = r.u32("M");
    if (set.k < 2 || set.k > 65536 || set.m < 1) throw Error(ErrorKind::Corrupt, "invalid K or M", 8);
    const auto count = r.u32("count");
    r.need(std::uint64_t{2} * set.m * count, "code payload");
    set.codes.resize(count);
    for (std::size_t record = 0; record < count; ++record) {
        auto& code = set.codes[record];
        code.indices.resize(set.m);
        for (auto& idx : code.indices) {
            const std::size_t at = r.offset();
            idx = r.u16("code index");
            if (idx >= set.k) {
                throw Error(ErrorKind::IndexOutOfRange, "record " + std::to_string(record) + " has index " +
                                                            std::to_string(idx) + " >= K at byte " +
                                                            std::to_string(at),
                            record);
            }
        }
    }
    set.ids.resize(count);
    for (auto& id : set.ids) id = r.str("instance id");
    r.finish();
    return set;
}

void write_codes(const std::filesystem::path& path, const CodeSet& set) { write_file_atomic(path, encode_codes(set)); }

CodeSet read_codes(const std::filesystem::path& path) { return decode_codes(read_file(path)); }

// ---------------------------------------------------------------- models

std::string encode_model(const CodecModel& model) {
    Writer w;
    w.raw(kModelMagic);
    w.u32(kFormatVersion);
    w.u32(model.config.k);
    w.u32(model.config.m);
    w.u32(model.config.d);
    w.u32(checked_u32(model.hidden_width(), "hidden width"));
    w.u32(checked_u32(model.decoder_width(), "decoder width"));
    w.u32(model.standardization ? kFlagStandardized : 0u);
    if (model.standardization) {
        w.f32s(model.standardization->mean);
        w.f32s(model.standardization->scale);
    }
    write_dense(w, model.encoder_hidden);
    write_dense(w, model.encoder_logits);
    write_dense(w, model.decoder_hidden);
    write_dense(w, model.decoder_output);
    return w.take();
}

CodecModel decode_model(std::string_view bytes) {
    Reader r(bytes);
    r.magic(kModelMagic);
    const auto k = r.u32("K");
    const auto m = r.u32("M");
    const auto d = r.u32("D");
    const auto hidden = r.u32("hidden width");
    const auto decoder = r.u32("decoder width");
    const std::size_t flags_at = r.offset();
    const auto flags = r.u32("flags");
    if (k < 2 || k > 65536 || m < 1 || d < 1 || hidden < 1 || decoder < 1) {
        throw Error(ErrorKind::Corrupt, "invalid model dimensions", 8);
    }
    if ((flags & ~kFlagStandardized) != 0) throw Error(ErrorKind::Corrupt, "unknown model flags", flags_at);

    // Size check before any allocation.
    const std::uint64_t mk = std::uint64_t{k} * m;
    std::uint64_t floats = (std::uint64_t{hidden} * d + hidden) + (mk * hidden + mk) + (std::uint64_t{decoder} * mk + decoder) +
                           (std::uint64_t{d} * decoder + d);
    if (flags & kFlagStandardized) floats += 2ull * d;
    r.need(floats * 4, "model weights");

    CodecModel model;
    model.config = CodeConfig(k, m, d);
    if (flags & kFlagStandardized) {
        Standardization s;
        s.mean = r.f32s(d, "standardization mean");
        const std::size_t at = r.offset();
        s.scale = r.f32s(d, "standardization scale");
        for (std::size_t i = 0; i < d; ++i) {
            if (!(s.scale[i] > 0.0)) throw Error(ErrorKind::Corrupt, "non-positive standardization scale", at + 4 * i);
        }
        model.standardization = std::move(s);
    }
    model.encoder_hidden = DenseLayer(hidden, d);
    model.encoder_logits = DenseLayer(mk, hidden);
    model.decoder_hidden = DenseLayer(decoder, mk);
    model.decoder_output = DenseLayer(d, decoder);
    read_dense(r, model.encoder_hidden, "encoder hidden weight");
    read_dense(r, model.encoder_logits, "encoder logit weight");
    read_dense(r, model.decoder_hidden, "decoder hidden weight");
    read_dense(r, model.decoder_output, "decoder output weight");
    r.finish();
    return model;
}

void write_model(const std::filesystem::path& path, const CodecModel& model) {
    write_file_atomic(path, encode_model(model));
}

CodecModel read_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

// ---------------------------------------------------------------- memories

std::string encode_memories(const CodeConfig& config, const std::vector<NamedMemory>& memories) {
    Writer w;
    w.raw(kMemoryMagic);
    w.u32(kFormatVersion);
    w.u32(config.k);
    w.u32(config.m);
    w.u32(config.d);
    w.u32(checked_u32(memories.size(), "memory count"));
    for (const auto& [name, memory] : memories) {
        if (!(memory.config() == config)) throw Error(ErrorKind::ConfigMismatch, "memory '" + name + "' config differs");
        w.str(name);
        w.u32(checked_u32(memory.size(), "node count"));
        w.u32(checked_u32(memory.words_per_row(), "row width"));
        for (std::size_t cluster = 0; cluster < config.m; ++cluster) {
            for (std::uint32_t neuron = 0; neuron < config.k; ++neuron) {
                for (auto word : memory.row(cluster, static_cast<std::uint16_t>(neuron))) w.u64(word);
            }
        }
        for (const auto& meta : memory.metas()) {
            w.str(meta.instance_id);
            w.str(meta.lemma);
            w.str(meta.sense_key);
        }
    }
    return w.take();
}

std::vector<NamedMemory> decode_memories(std::string_view bytes, CodeConfig* config_out) {
    Reader r(bytes);
    r.magic(kMemoryMagic);
    const auto k = r.u32("K");
    const auto m = r.u32("M");
    const auto d = r.u32("D");
    if (k < 2 || k > 65536 || m < 1 || d < 1) throw Error(ErrorKind::Corrupt, "invalid memory config", 8);
    const CodeConfig config(k, m, d);
    const auto count = r.u32("memory count");

    std::vector<NamedMemory> memories;
    std::unordered_set<std::string> names;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t name_at = r.offset();
        auto name = r.str("memory name");
        if (!names.insert(name).second) throw Error(ErrorKind::Corrupt, "duplicate memory '" + name + "'", name_at);
        const auto nodes = r.u32("node count");
        const std::size_t words_at = r.offset();
        const auto words = r.u32("row width");
        if (words != (std::uint64_t{nodes} + 63) / 64) {
            throw Error(ErrorKind::Corrupt, "row width does not match node count", words_at);
        }
        const std::uint64_t total_words = config.neurons() * std::uint64_t{words};
        r.need(total_words * 8, "connection rows");
        const std::size_t rows_at = r.offset();
        std::vector<std::uint64_t> rows(total_words);
        for (auto& word : rows) word = r.u64("connection word");
        // Each node record carries at least three length prefixes.
        r.need(std::uint64_t{nodes} * 12, "node metadata");
        std::vector<NodeMeta> meta(nodes);
        for (auto& n : meta) {
            n.instance_id = r.str("instance id");
            n.lemma = r.str("lemma");
            n.sense_key = r.str("sense key");
        }
        try {
            memories.push_back({std::move(name), SparseMemory::from_rows(config, rows, std::move(meta))});
        } catch (const Error& e) {
            const auto at = rows_at + 8 * e.position().value_or(0);
            throw Error(ErrorKind::Corrupt, std::string(e.what()) + " at byte " + std::to_string(at), at);
        }
    }
    r.finish();
    if (config_out != nullptr) *config_out = config;
    return memories;
}

void write_index(const std::filesystem::path& path, const LemmaIndex& index) {
    std::vector<NamedMemory> memories;
    for (const auto& [lemma, memory] : index.memories()) memories.push_back({lemma, memory});
    write_file_atomic(path, encode_memories(index.config(), memories));
}

LemmaIndex read_index(const std::filesystem::path& path) {
    CodeConfig config;
    auto memories = decode_memories(read_file(path), &config);
    LemmaIndex index(config);
    for (auto& [name, memory] : memories) index.insert_memory(name, std::move(memory));
    index.freeze();
    return index;
}

// ---------------------------------------------------------------- datasets

std::string encode_dataset(const std::vector<DatasetRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        for (const auto* field : {&rec.instance_id, &rec.lemma, &rec.sense_key, &rec.vector_ref}) {
            if (field->empty() || field->find_first_of("\t\n\r") != std::string::npos) {
                throw Error(ErrorKind::Io, "dataset field for '" + rec.instance_id + "' is empty or holds a tab/newline");
            }
        }
        out += rec.instance_id + '\t' + rec.lemma + '\t' + rec.sense_key + '\t' + rec.vector_ref + '\n';
    }
    return out;
}

std::vector<DatasetRecord> decode_dataset(std::string_view text) {
    std::vector<DatasetRecord> records;
    std::unordered_set<std::string> seen;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        const std::size_t line_at = pos;
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.emplace_back(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start));
            if (tab == std::string_view::npos) break;
            start = tab + 1;
        }
        const auto where = " on line " + std::to_string(line_no);
        if (fields.size() != 4) {
            throw Error(ErrorKind::Corrupt, "expected 4 tab-separated fields" + where, line_at);
        }
        for (const auto& f : fields) {
            if (f.empty()) throw Error(ErrorKind::Corrupt, "empty field" + where, line_at);
            if (!valid_utf8(f)) throw Error(ErrorKind::Corrupt, "invalid UTF-8" + where, line_at);
        }
        if (!seen.insert(fields[0]).second) {
            throw Error(ErrorKind::Corrupt, "duplicate instance id '" + fields[0] + "'" + where, line_at);
        }
        records.push_back({fields[0], fields[1], fields[2], fields[3]});
    }
    return records;
}

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
    write_file_atomic(path, encode_dataset(records));
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

std::vector<LabeledInstance> resolve(const std::vector<DatasetRecord>& records,
                                     const std::vector<ContextVector>& vectors) {
    std::unordered_map<std::string_view, std::size_t> by_id;
    for (std::size_t i = 0; i < vectors.size(); ++i) by_id.emplace(vectors[i].source_id, i);
    std::vector<LabeledInstance> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        auto it = by_id.find(rec.vector_ref);
        if (it == by_id.end()) {
            throw Error(ErrorKind::IndexOutOfRange,
                        "record " + std::to_string(i) + " ('" + rec.instance_id + "') references unknown vector '" +
                            rec.vector_ref + "'",
                        i);
        }
        LabeledInstance inst{rec.instance_id, rec.lemma, rec.sense_key, vectors[it->second]};
        inst.vector.source_id = rec.instance_id;
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace codesam::io
