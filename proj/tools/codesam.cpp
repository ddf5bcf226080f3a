// codesam: train a discrete codec, encode vectors, build per-lemma associative
// memories, and evaluate WTA sense retrieval.
//
// Exit codes: 0 success, 2 input/file error, 3 numeric divergence, 64 usage error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "codesam/codec.hpp"
#include "codesam/core.hpp"
#include "codesam/io.hpp"
#include "codesam/kernels.hpp"
#include "codesam/sam.hpp"
#include "codesam/wsd.hpp"

namespace {

using namespace codesam;

constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitUsage = 64;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 42;
    int threads = 1;
    bool quiet = false;
};

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string significant(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

void setup_logging(bool quiet) {
    auto logger = spdlog::stderr_color_mt("codesam");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("CODESAM_LOG")) {
        const std::string name = env;
        if (name == "error") level = spdlog::level::err;
        else if (name == "warn") level = spdlog::level::warn;
        else if (name == "info") level = spdlog::level::info;
        else if (name == "debug") level = spdlog::level::debug;
    }
    if (quiet) level = spdlog::level::err;
    spdlog::set_level(level);
}

void write_text(const std::filesystem::path& path, const std::string& text) { io::write_file_atomic(path, text); }

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string vectors;
    std::uint32_t k = 0;
    std::uint32_t m = 0;
    std::size_t hidden = 0;
    std::size_t epochs = 10;
    std::size_t batch = 32;
    double lr = 1e-3;
    double momentum = 0.9;
    double tau = 1.0;
    double tau_final = 0.1;
    bool anneal = false;
    bool standardize = false;
    std::string out;
};

void cmd_train(const TrainArgs& a, const Globals& g) {
    if (a.k < 2) throw UsageError("--k must be at least 2");
    if (a.k > 65536) throw UsageError("--k must be at most 65536");
    if (a.m < 1) throw UsageError("--m must be at least 1");
    if (!(a.lr > 0.0)) throw UsageError("--lr must be positive");
    if (!(a.tau > 0.0)) throw UsageError("--tau must be positive");
    if (a.batch == 0) throw UsageError("--batch must be positive");

    const auto vectors = io::read_vectors(a.vectors);
    if (vectors.empty()) throw Error(ErrorKind::EmptyInput, "'" + a.vectors + "' holds no vectors");
    const CodeConfig config(a.k, a.m, static_cast<std::uint32_t>(vectors.front().dim()));
    const std::size_t hidden = a.hidden > 0 ? a.hidden : default_hidden_width(config);
    auto model = CodecModel::initialize(config, hidden, hidden, g.seed);

    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.momentum = a.momentum;
    cfg.batch_size = a.batch;
    cfg.epochs = a.epochs;
    cfg.tau = a.tau;
    cfg.tau_final = std::min(a.tau_final, a.tau);
    cfg.anneal = a.anneal;
    cfg.standardize = a.standardize;
    cfg.seed = g.seed;

    spdlog::info("training K={} M={} D={} H={} on {} vectors for {} epochs", config.k, config.m, config.d, hidden,
                 vectors.size(), cfg.epochs);
    auto result = train(std::move(model), vectors, cfg, [](std::size_t epoch, double loss) {
        spdlog::debug("epoch {} loss {}", epoch, significant(loss, 9));
    });

    io::write_model(a.out, result.model);
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
        csv += std::to_string(e + 1) + "," + significant(result.loss_trace[e], 9) + "\n";
    }
    write_text(a.out + ".loss.csv", csv);
    if (!result.loss_trace.empty()) {
        spdlog::info("loss {} -> {}", significant(result.loss_trace.front(), 9),
                     significant(result.loss_trace.back(), 9));
    }
}

// ---------------------------------------------------------------- encode

struct EncodeArgs {
    std::string vectors;
    std::string model;
    std::string out;
    bool print = false;
};

void cmd_encode(const EncodeArgs& a, const Globals&) {
    if (a.out.empty() && !a.print) throw UsageError("encode needs --out, --print, or both");
    const auto model = io::read_model(a.model);
    const auto vectors = io::read_vectors(a.vectors);
    io::CodeSet set;
    set.k = model.config.k;
    set.m = model.config.m;
    for (const auto& v : vectors) {
        set.codes.push_back(encode_hard(model, v));
        set.ids.push_back(v.source_id);
    }
    if (!a.out.empty()) io::write_codes(a.out, set);
    if (a.print) {
        std::string table = "instance";
        for (std::uint32_t c = 0; c < set.m; ++c) table += "\t" + std::to_string(c);
        table += "\n";
        for (std::size_t i = 0; i < set.codes.size(); ++i) {
            table += set.ids[i];
            for (auto idx : set.codes[i].indices) table += "\t" + std::to_string(idx);
            table += "\n";
        }
        std::cout << table;
    }
    spdlog::info("encoded {} vectors", vectors.size());
}

// ---------------------------------------------------------------- build

struct BuildArgs {
    std::string dataset;
    std::string vectors;
    std::string model;
    std::string out;
};

std::string stats_line(const std::string& label, const MemoryStats& s) {
    return label + " nodes=" + std::to_string(s.node_count) + " connections=" + std::to_string(s.connection_count) +
           " bits=" + std::to_string(s.bits_used) + " density=" + fixed(s.density, 6);
}

void cmd_build(const BuildArgs& a, const Globals&) {
    const auto model = io::read_model(a.model);
    const auto records = io::read_dataset(a.dataset);
    if (records.empty()) throw Error(ErrorKind::EmptyInput, "dataset '" + a.dataset + "' is empty");
    const auto instances = io::resolve(records, io::read_vectors(a.vectors));
    const auto index = build_index(instances, model);
    io::write_index(a.out, index);

    MemoryStats total;
    std::string report;
    for (const auto& [lemma, memory] : index.memories()) {
        const auto s = memory_stats(memory);
        report += stats_line("lemma=" + lemma, s) + "\n";
        total.node_count += s.node_count;
        total.connection_count += s.connection_count;
        total.bits_used += s.bits_used;
    }
    total.density = total.bits_used == 0 ? 0.0
                                         : static_cast<double>(total.connection_count) /
                                               static_cast<double>(total.bits_used);
    report += stats_line("total lemmas=" + std::to_string(index.memories().size()), total) + "\n";
    std::cout << report;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string memory;
    std::string model;
    std::string test_dataset;
    std::string test_vectors;
    std::string predictions;
    std::string json;
};

void cmd_eval(const EvalArgs& a, const Globals& g) {
    const auto model = io::read_model(a.model);
    const auto index = io::read_index(a.memory);
    const auto test = io::resolve(io::read_dataset(a.test_dataset), io::read_vectors(a.test_vectors));
    const auto report = evaluate(index, model, test, g.threads);

    std::string out;
    out += "f1=" + fixed(report.f1, 6) + "\n";
    out += "precision=" + fixed(report.precision, 6) + "\n";
    out += "recall=" + fixed(report.recall, 6) + "\n";
    out += "total=" + std::to_string(report.total) + "\n";
    out += "attempted=" + std::to_string(report.attempted) + "\n";
    out += "correct=" + std::to_string(report.correct) + "\n";
    for (const auto& [provenance, n] : report.by_provenance) {
        out += std::string(to_string(provenance)) + "=" + std::to_string(n) + "\n";
    }
    std::cout << out;

    if (!a.predictions.empty()) {
        std::string lines;
        for (const auto& p : report.predictions) {
            if (p.provenance == Provenance::abstain) continue;
            lines += p.instance_id + "\t" + p.sense_key + "\n";
        }
        write_text(a.predictions, lines);
    }
    if (!a.json.empty()) {
        nlohmann::ordered_json j;
        j["f1"] = report.f1;
        j["precision"] = report.precision;
        j["recall"] = report.recall;
        j["total"] = report.total;
        j["attempted"] = report.attempted;
        j["correct"] = report.correct;
        for (const auto& [provenance, n] : report.by_provenance) j["provenance"][to_string(provenance)] = n;
        write_text(a.json, j.dump(2) + "\n");
    }
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
    std::uint32_t k = 0;
    std::uint32_t m = 0;
    std::uint32_t dim = 1024;
    std::uint32_t bits = 32;
    std::string codes;
    std::string pair;
};

std::size_t find_code(const io::CodeSet& set, const std::string& key) {
    for (std::size_t i = 0; i < set.ids.size(); ++i) {
        if (set.ids[i] == key) return i;
    }
    // Fall back to a positional index.
    if (!key.empty() && key.find_first_not_of("0123456789") == std::string::npos) {
        const auto i = std::stoull(key);
        if (i < set.codes.size()) return i;
    }
    throw Error(ErrorKind::IndexOutOfRange, "no encoded instance '" + key + "'");
}

void cmd_stats(const StatsArgs& a, const Globals&) {
    const bool rate_mode = a.k != 0 || a.m != 0;
    const bool pair_mode = !a.codes.empty() || !a.pair.empty();
    if (rate_mode == pair_mode) throw UsageError("stats needs either --k/--m or --codes/--pair");
    if (rate_mode) {
        if (a.k < 2) throw UsageError("--k must be at least 2");
        if (a.k > 65536) throw UsageError("--k must be at most 65536");
        if (a.m < 1) throw UsageError("--m must be at least 1");
        if (a.dim < 1) throw UsageError("--dim must be positive");
        if (a.bits < 1) throw UsageError("--bits must be positive");
        const CodeConfig config(a.k, a.m, a.dim);
        spdlog::info("bits per code {}, baseline bits {}", bits_per_code(config), std::uint64_t{a.dim} * a.bits);
        std::cout << fixed(compression_rate(config, a.bits), 1) << "x\n";
        return;
    }
    if (a.codes.empty() || a.pair.empty()) throw UsageError("--codes and --pair go together");
    const auto comma = a.pair.find(',');
    if (comma == std::string::npos) throw UsageError("--pair expects A,B");
    const auto set = io::read_codes(a.codes);
    const auto& first = set.codes[find_code(set, a.pair.substr(0, comma))];
    const auto& second = set.codes[find_code(set, a.pair.substr(comma + 1))];
    std::cout << hamming(first, second) << "\n";
}

// ---------------------------------------------------------------- diagnostics

struct DumpArgs {
    std::string memory;
    std::string lemma;
};

void cmd_dump(const DumpArgs& a, const Globals&) {
    const auto index = io::read_index(a.memory);
    for (const auto& [lemma, memory] : index.memories()) {
        if (!a.lemma.empty() && lemma != a.lemma) continue;
        std::cout << dump(memory);
    }
}

struct RetrieveArgs {
    std::string memory;
    std::string lemma;
    std::string pattern;
};

void cmd_retrieve(const RetrieveArgs& a, const Globals&) {
    const auto index = io::read_index(a.memory);
    const SparseMemory* memory = index.find(a.lemma);
    if (memory == nullptr) throw Error(ErrorKind::EmptyMemory, "no memory for lemma '" + a.lemma + "'");
    QueryPattern query;
    std::istringstream in(a.pattern);
    for (std::string token; in >> token;) {
        if (token == "-") {
            query.active.emplace_back();
            continue;
        }
        if (token.find_first_not_of("0123456789") != std::string::npos || token.size() > 5) {
            throw UsageError("--pattern entries must be cluster indices or '-'");
        }
        const auto value = std::stoul(token);
        if (value > 65535) throw UsageError("--pattern index too large");
        query.active.emplace_back(static_cast<std::uint16_t>(value));
    }
    if (query.active.size() != memory->config().m) {
        throw UsageError("--pattern needs exactly M=" + std::to_string(memory->config().m) + " entries");
    }
    const auto result = memory->retrieve(query);
    std::string out = "score=" + std::to_string(result.score) + "\n";
    for (NodeId node : result.winners) {
        const auto& meta = memory->meta(node);
        out += std::to_string(node) + "\t" + meta.instance_id + "\t" + meta.sense_key + "\n";
    }
    std::cout << out;
}

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Diverged: return kExitDiverged;
        case ErrorKind::InvalidConfig:
        case ErrorKind::InvalidTemperature: return kExitUsage;
        default: return kExitInput;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compositional codes and sparse associative memories for sense retrieval"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals globals;
    app.add_option("--seed", globals.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", globals.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1, 1024));
    app.add_flag("--quiet", globals.quiet, "Only log errors");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train the discrete codec on a vector file");
    train_cmd->add_option("--vectors", train_args.vectors, "Input vector file")->required();
    train_cmd->add_option("--k", train_args.k, "Neurons per cluster")->required();
    train_cmd->add_option("--m", train_args.m, "Number of clusters")->required();
    train_cmd->add_option("--hidden", train_args.hidden, "Hidden width (default max(MK/2, D/2))");
    train_cmd->add_option("--epochs", train_args.epochs)->capture_default_str();
    train_cmd->add_option("--batch", train_args.batch)->capture_default_str();
    train_cmd->add_option("--lr", train_args.lr, "Learning rate")->capture_default_str();
    train_cmd->add_option("--momentum", train_args.momentum)->capture_default_str();
    train_cmd->add_option("--tau", train_args.tau, "Gumbel-softmax temperature")->capture_default_str();
    train_cmd->add_option("--tau-final", train_args.tau_final, "Annealing target")->capture_default_str();
    train_cmd->add_flag("--anneal", train_args.anneal, "Anneal tau exponentially to --tau-final");
    train_cmd->add_flag("--standardize", train_args.standardize, "Standardize inputs per dimension");
    train_cmd->add_option("--out", train_args.out, "Output model file")->required();

    EncodeArgs encode_args;
    auto* encode_cmd = app.add_subcommand("encode", "Encode vectors into compositional codes");
    encode_cmd->add_option("--vectors", encode_args.vectors)->required();
    encode_cmd->add_option("--model", encode_args.model)->required();
    encode_cmd->add_option("--out", encode_args.out, "Output code file");
    encode_cmd->add_flag("--print", encode_args.print, "Print one row per instance, one column per cluster");

    BuildArgs build_args;
    auto* build_cmd = app.add_subcommand("build", "Build per-lemma memories from a labeled dataset");
    build_cmd->add_option("--dataset", build_args.dataset)->required();
    build_cmd->add_option("--vectors", build_args.vectors)->required();
    build_cmd->add_option("--model", build_args.model)->required();
    build_cmd->add_option("--out", build_args.out)->required();

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Classify a labeled test set and report micro F1");
    eval_cmd->add_option("--memory", eval_args.memory)->required();
    eval_cmd->add_option("--model", eval_args.model)->required();
    eval_cmd->add_option("--test-dataset", eval_args.test_dataset)->required();
    eval_cmd->add_option("--test-vectors", eval_args.test_vectors)->required();
    eval_cmd->add_option("--predictions", eval_args.predictions, "Write instance_id<TAB>sense_key lines");
    eval_cmd->add_option("--json", eval_args.json, "Write the report as JSON");

    StatsArgs stats_args;
    auto* stats_cmd = app.add_subcommand("stats", "Compression rate of a code config, or hamming distance of two codes");
    stats_cmd->add_option("--k", stats_args.k);
    stats_cmd->add_option("--m", stats_args.m);
    stats_cmd->add_option("--dim", stats_args.dim)->capture_default_str();
    stats_cmd->add_option("--bits", stats_args.bits, "Bits per baseline scalar")->capture_default_str();
    stats_cmd->add_option("--codes", stats_args.codes);
    stats_cmd->add_option("--pair", stats_args.pair, "Two instance ids (or positions), A,B");

    DumpArgs dump_args;
    auto* dump_cmd = app.add_subcommand("dump", "Print one line per stored node");
    dump_cmd->add_option("--memory", dump_args.memory)->required();
    dump_cmd->add_option("--lemma", dump_args.lemma);

    RetrieveArgs retrieve_args;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "WTA retrieval of a partial pattern ('-' erases a cluster)");
    retrieve_cmd->add_option("--memory", retrieve_args.memory)->required();
    retrieve_cmd->add_option("--lemma", retrieve_args.lemma)->required();
    retrieve_cmd->add_option("--pattern", retrieve_args.pattern)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }

    setup_logging(globals.quiet);
    kernels::set_threads(globals.threads);

    try {
        if (*train_cmd) cmd_train(train_args, globals);
        else if (*encode_cmd) cmd_encode(encode_args, globals);
        else if (*build_cmd) cmd_build(build_args, globals);
        else if (*eval_cmd) cmd_eval(eval_args, globals);
        else if (*stats_cmd) cmd_stats(stats_args, globals);
        else if (*dump_cmd) cmd_dump(dump_args, globals);
        else if (*retrieve_cmd) cmd_retrieve(retrieve_args, globals);
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        std::cerr << app.help();
        return kExitUsage;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitInput;
    }
    return 0;
}
