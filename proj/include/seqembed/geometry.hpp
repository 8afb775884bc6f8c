#pragma once

#include <cmath>

#include "embedstore.hpp"
#include "matrix.hpp"

namespace seqembed {

/// Euclidean distances between all rows, accumulated in 64-bit.
inline SquareMatrix<double> pairwise_distances(const EmbeddingMatrix & x) {
    SquareMatrix<double> dist(x.n, 0.0);
    for (std::size_t i = 0; i < x.n; ++i) {
        const auto ri = x.row(i);
        for (std::size_t j = i + 1; j < x.n; ++j) {
            const auto rj = x.row(j);
            double ss = 0.0;
            for (std::size_t c = 0; c < x.d; ++c) {
                const double diff = static_cast<double>(ri[c]) - static_cast<double>(rj[c]);
                ss += diff * diff;
            }
            const double dij = std::sqrt(ss);
            dist(i, j) = dij;
            dist(j, i) = dij;
        }
    }
    return dist;
}

} // namespace seqembed
