#pragma once

// Embedding sources that need no external model: a hashed character n-gram featurizer and
// a planted-cluster generator for end-to-end checks.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cluster.hpp"
#include "corpus.hpp"
#include "embedstore.hpp"
#include "error.hpp"
#include "random.hpp"

namespace seqembed {

struct FeaturizerParams {
    std::size_t dim = 256;
    std::size_t min_n = 1;
    std::size_t max_n = 3;
};

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Counts of hashed character n-grams (text padded with '^' and '$'), L2-normalized.
inline std::vector<float> ngram_features(std::string_view text, const FeaturizerParams & params) {
    if (params.dim == 0 || params.min_n == 0 || params.min_n > params.max_n) {
        fail(ErrorKind::InvalidArgument, "featurizer needs dim >= 1 and 1 <= min_n <= max_n");
    }
    const std::string padded = "^" + std::string(text) + "$";
    std::vector<double> counts(params.dim, 0.0);
    for (std::size_t n = params.min_n; n <= params.max_n; ++n) {
        for (std::size_t i = 0; i + n <= padded.size(); ++i) {
            const std::string gram = std::to_string(n) + ":" + padded.substr(i, n);
            counts[fnv1a(gram) % params.dim] += 1.0;
        }
    }
    double ss = 0.0;
    for (double c : counts) ss += c * c;
    const double inv = ss > 0.0 ? 1.0 / std::sqrt(ss) : 0.0;
    std::vector<float> out(params.dim);
    for (std::size_t j = 0; j < params.dim; ++j) out[j] = static_cast<float>(counts[j] * inv);
    return out;
}

inline EmbeddingMatrix baseline_embed(const Corpus & corpus, const FeaturizerParams & params = {}) {
    if (corpus.records.empty()) {
        fail(ErrorKind::InvalidArgument, "cannot embed an empty corpus");
    }
    EmbeddingMatrix m;
    m.n = corpus.records.size();
    m.d = params.dim;
    m.source_model = "baseline-char-ngram-" + std::to_string(params.min_n) + "-" + std::to_string(params.max_n) +
                     "-d" + std::to_string(params.dim);
    m.data.reserve(m.n * m.d);
    for (const auto & rec : corpus.records) {
        const auto row = ngram_features(rec.text, params);
        m.data.insert(m.data.end(), row.begin(), row.end());
    }
    return m;
}

struct BlobParams {
    std::size_t dim = 8;
    double gap = 10.0;  // distance between any two cluster centres
    double noise = 0.1; // per-coordinate Gaussian standard deviation
    std::uint64_t seed = 0;
};

/// One isotropic Gaussian blob per distinct label; centres sit on scaled basis vectors so
/// every pair of centres is exactly `gap` apart.
inline EmbeddingMatrix planted_blobs(std::span<const int> labels, const BlobParams & params) {
    const DenseLabels dl = densify(labels);
    if (labels.empty() || params.dim < dl.count) {
        fail(ErrorKind::InvalidArgument, "planted blobs need dim >= number of classes (" + std::to_string(dl.count) +
                                             ")");
    }
    const double offset = params.gap / std::sqrt(2.0);
    Rng rng(mix_seed(params.seed, 1));
    EmbeddingMatrix m;
    m.n = labels.size();
    m.d = params.dim;
    m.source_model = "planted-blobs";
    m.data.resize(m.n * m.d);
    for (std::size_t i = 0; i < m.n; ++i) {
        for (std::size_t j = 0; j < m.d; ++j) {
            const double centre = (j == dl.ids[i]) ? offset : 0.0;
            m(i, j) = static_cast<float>(centre + params.noise * rng.normal());
        }
    }
    return m;
}

} // namespace seqembed
