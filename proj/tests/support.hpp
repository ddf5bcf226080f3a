#pragma once

// Synthetic fixtures shared by the unit and acceptance suites.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "codesam/core.hpp"

namespace codesam::testing {

inline ContextVector random_vector(Rng& rng, std::size_t dim, double scale = 1.0, std::string id = {}) {
    ContextVector v;
    v.source_id = std::move(id);
    v.values.resize(dim);
    for (auto& x : v.values) x = scale * rng.normal();
    return v;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

/// `count` centers drawn from N(0, scale^2 I), redrawn until pairwise distance >= min_separation.
inline std::vector<std::vector<double>> separated_centers(Rng& rng, std::size_t count, std::size_t dim, double scale,
                                                          double min_separation) {
    std::vector<std::vector<double>> centers;
    while (centers.size() < count) {
        auto c = random_vector(rng, dim, scale).values;
        bool ok = true;
        for (const auto& other : centers) ok = ok && distance(c, other) >= min_separation;
        if (ok) centers.push_back(std::move(c));
    }
    return centers;
}

/// n vectors spread round-robin over `blobs` unit-variance Gaussian blobs.
inline std::vector<ContextVector> gaussian_blobs(std::size_t n, std::size_t dim, std::size_t blobs, std::uint64_t seed,
                                                 double scale = 2.0) {
    Rng rng(seed);
    const auto centers = separated_centers(rng, blobs, dim, scale, 6.0);
    std::vector<ContextVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto v = random_vector(rng, dim, 1.0, "v" + std::to_string(i));
        for (std::size_t j = 0; j < dim; ++j) v.values[j] += centers[i % blobs][j];
        out.push_back(std::move(v));
    }
    return out;
}

struct WsdFixture {
    std::vector<LabeledInstance> train;
    std::vector<LabeledInstance> test;
};

/// lemmas x senses Gaussian blobs (sigma = 1, centers at least 6 sigma apart within a lemma).
inline WsdFixture wsd_fixture(std::uint64_t seed, std::size_t lemmas = 8, std::size_t senses = 4, std::size_t dim = 32,
                              std::size_t train_per_sense = 50, std::size_t test_per_sense = 50) {
    Rng rng(seed);
    WsdFixture f;
    for (std::size_t l = 0; l < lemmas; ++l) {
        const std::string lemma = "lemma" + std::to_string(l);
        const auto centers = separated_centers(rng, senses, dim, 2.0, 6.0);
        for (std::size_t s = 0; s < senses; ++s) {
            const std::string sense = lemma + "%" + std::to_string(s);
            auto draw = [&](std::vector<LabeledInstance>& into, std::size_t n, const char* split) {
                for (std::size_t i = 0; i < n; ++i) {
                    const std::string id = std::string(split) + "." + lemma + "." + std::to_string(s) + "." +
                                           std::to_string(i);
                    auto v = random_vector(rng, dim, 1.0, id);
                    for (std::size_t j = 0; j < dim; ++j) v.values[j] += centers[s][j];
                    into.push_back({id, lemma, sense, std::move(v)});
                }
            };
            draw(f.train, train_per_sense, "train");
            draw(f.test, test_per_sense, "test");
        }
    }
    return f;
}

/// Per-lemma 1-nearest-neighbour accuracy on the raw vectors (Euclidean).
inline double raw_nearest_neighbour_accuracy(const WsdFixture& f) {
    std::size_t correct = 0;
    for (const auto& t : f.test) {
        double best = INFINITY;
        const LabeledInstance* nearest = nullptr;
        for (const auto& r : f.train) {
            if (r.lemma != t.lemma) continue;
            const double d = distance(t.vector.values, r.vector.values);
            if (d < best) {
                best = d;
                nearest = &r;
            }
        }
        if (nearest != nullptr && nearest->sense_key == t.sense_key) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(f.test.size());
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("codesam_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace codesam::testing
