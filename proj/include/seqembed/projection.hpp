#pragma once

// Exact t-SNE: per-row bandwidth calibration, symmetric affinities, and KL gradient descent
// in two dimensions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embedstore.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "matrix.hpp"
#include "random.hpp"

namespace seqembed {

struct TsneParams {
    std::optional<double> perplexity; // unset: 30, or 10 below 50 samples
    std::size_t iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    double init_stddev = 1e-4;
    std::uint64_t seed = 0;
};

struct Projection2D {
    std::size_t n = 0;
    std::vector<double> coords; // n x 2, row-major
    double final_kl = 0.0;
    double initial_kl = 0.0; // at the random initialization, without exaggeration
    double perplexity = 0.0; // value actually used
    std::vector<std::string> warnings;

    double x(std::size_t i) const { return coords[2 * i]; }
    double y(std::size_t i) const { return coords[2 * i + 1]; }
};

inline double default_perplexity(std::size_t n) { return n < 50 ? 10.0 : 30.0; }

struct Calibration {
    double sigma = 1.0;
    double perplexity = 0.0;          // achieved
    std::vector<double> probabilities; // conditional distribution over the row
    std::optional<std::string> warning;
};

namespace detail {

// Conditional Gaussian distribution for one bandwidth; returns its perplexity exp(H).
inline double conditional_at(std::span<const double> gaps, double log_sigma, std::vector<double> & p) {
    const double inv = 1.0 / (2.0 * std::exp(2.0 * log_sigma));
    double z = 0.0;
    double weighted = 0.0;
    for (std::size_t j = 0; j < gaps.size(); ++j) {
        const double e = gaps[j] * inv;
        p[j] = std::exp(-e);
        z += p[j];
        weighted += p[j] * e;
    }
    for (double & v : p) v /= z;
    return std::exp(std::log(z) + weighted / z);
}

} // namespace detail

/// Bisection on log(sigma) so the conditional distribution over `distances` (self excluded)
/// reaches `target_perplexity` to within 1e-5. Unattainable targets clamp to the bracket edge
/// and set `warning`.
inline Calibration calibrate_sigma(std::span<const double> distances, double target_perplexity) {
    const std::size_t m = distances.size();
    if (m < 2) {
        fail(ErrorKind::InvalidArgument, "calibration needs at least two neighbour distances");
    }
    double min_sq = std::numeric_limits<double>::infinity();
    for (double d : distances) {
        if (!std::isfinite(d) || d < 0.0) {
            fail(ErrorKind::InvalidArgument, "neighbour distances must be finite and non-negative");
        }
        min_sq = std::min(min_sq, d * d);
    }
    // Offsets from the nearest neighbour keep exp() in range for any bandwidth.
    std::vector<double> gaps(m);
    double max_gap = 0.0;
    double min_pos_gap = std::numeric_limits<double>::infinity();
    std::size_t ties = 0;
    for (std::size_t j = 0; j < m; ++j) {
        gaps[j] = distances[j] * distances[j] - min_sq;
        max_gap = std::max(max_gap, gaps[j]);
        if (gaps[j] > 0.0) {
            min_pos_gap = std::min(min_pos_gap, gaps[j]);
        } else {
            ++ties;
        }
    }

    Calibration cal;
    cal.probabilities.assign(m, 1.0 / static_cast<double>(m));
    if (max_gap == 0.0) {
        cal.perplexity = static_cast<double>(m);
        cal.sigma = std::sqrt(min_sq) > 0.0 ? std::sqrt(min_sq) : 1.0;
        if (min_sq == 0.0) {
            cal.warning = "degenerate row: all distances are zero, using a uniform distribution";
        } else if (std::abs(cal.perplexity - target_perplexity) > 1e-5) {
            cal.warning = "equidistant row: perplexity is fixed at " + std::to_string(m);
        }
        return cal;
    }

    double lo = 0.5 * std::log(min_pos_gap / 1600.0); // exp(-800): only the ties survive
    double hi = 0.5 * std::log(max_gap / 2e-12);       // all weights within 1e-12 of each other
    const double floor_perp = static_cast<double>(ties);
    const double ceil_perp = static_cast<double>(m);
    if (target_perplexity >= ceil_perp) {
        cal.sigma = std::exp(hi);
        cal.perplexity = detail::conditional_at(gaps, hi, cal.probabilities);
        cal.warning = "target perplexity " + std::to_string(target_perplexity) + " exceeds the row maximum " +
                      std::to_string(m) + "; clamped";
        return cal;
    }
    if (target_perplexity <= floor_perp) {
        cal.sigma = std::exp(lo);
        cal.perplexity = detail::conditional_at(gaps, lo, cal.probabilities);
        cal.warning = "target perplexity " + std::to_string(target_perplexity) + " is below the row minimum " +
                      std::to_string(ties) + "; clamped";
        return cal;
    }
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 64; ++it) {
        mid = 0.5 * (lo + hi);
        cal.perplexity = detail::conditional_at(gaps, mid, cal.probabilities);
        const double err = cal.perplexity - target_perplexity;
        if (std::abs(err) < 1e-5) break;
        (err > 0.0 ? hi : lo) = mid;
    }
    cal.sigma = std::exp(mid);
    return cal;
}

struct Affinities {
    SquareMatrix<double> p;                 // symmetric joint probabilities
    SquareMatrix<double> conditional;       // row i holds P(j | i)
    std::vector<double> row_perplexity;     // achieved per-row perplexity before symmetrization
    double perplexity = 0.0;                // value actually used
    std::vector<std::string> warnings;
};

inline constexpr double affinity_floor = 1e-12;

/// Effective perplexity for n points: targets outside (1, n-1) cannot be met by any
/// bandwidth and are replaced by the midpoint n/2 with a warning.
inline double effective_perplexity(std::size_t n, double requested, std::vector<std::string> & warnings) {
    const double ceiling = static_cast<double>(n) - 1.0;
    if (requested > 1.0 && requested < ceiling) {
        return requested;
    }
    const double used = 0.5 * static_cast<double>(n);
    warnings.push_back("perplexity " + std::to_string(requested) + " is outside (1, " + std::to_string(ceiling) +
                       ") for n=" + std::to_string(n) + "; using " + std::to_string(used));
    return used;
}

inline Affinities joint_probabilities(const EmbeddingMatrix & x, double perplexity) {
    if (x.n < 3) {
        fail(ErrorKind::InvalidArgument, "t-SNE affinities need at least 3 points");
    }
    const std::size_t n = x.n;
    Affinities out;
    out.perplexity = effective_perplexity(n, perplexity, out.warnings);
    out.conditional = SquareMatrix<double>(n, 0.0);
    out.row_perplexity.resize(n);

    const auto dist = pairwise_distances(x);
    std::vector<double> row(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0, c = 0; j < n; ++j) {
            if (j != i) row[c++] = dist(i, j);
        }
        const auto cal = calibrate_sigma(row, out.perplexity);
        if (cal.warning) {
            out.warnings.push_back("row " + std::to_string(i) + ": " + *cal.warning);
        }
        out.row_perplexity[i] = cal.perplexity;
        for (std::size_t j = 0, c = 0; j < n; ++j) {
            if (j != i) out.conditional(i, j) = cal.probabilities[c++];
        }
    }

    // Symmetrize, floor, then rescale only the unfloored entries so the floor and the unit
    // mass both hold.
    out.p = SquareMatrix<double>(n, 0.0);
    const double denom = 2.0 * static_cast<double>(n);
    double floored_mass = 0.0;
    double free_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = (out.conditional(j, i) + out.conditional(i, j)) / denom;
            if (v <= affinity_floor) {
                v = affinity_floor;
                floored_mass += 2.0 * v;
            } else {
                free_mass += 2.0 * v;
            }
            out.p(i, j) = v;
            out.p(j, i) = v;
        }
    }
    const double scale = (1.0 - floored_mass) / free_mass;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (out.p(i, j) > affinity_floor) {
                const double v = std::max(out.p(i, j) * scale, affinity_floor);
                out.p(i, j) = v;
                out.p(j, i) = v;
            }
        }
    }
    return out;
}

namespace detail {

// Student-t kernel values num(i,j) = 1 / (1 + |yi - yj|^2) and their off-diagonal sum.
inline double student_kernel(std::span<const double> y, std::size_t n, SquareMatrix<double> & num) {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y[2 * i] - y[2 * j];
            const double dy = y[2 * i + 1] - y[2 * j + 1];
            const double v = 1.0 / (1.0 + dx * dx + dy * dy);
            num(i, j) = v;
            num(j, i) = v;
            z += 2.0 * v;
        }
    }
    return z;
}

inline double kl_divergence(const SquareMatrix<double> & p, std::span<const double> y) {
    const std::size_t n = p.size();
    SquareMatrix<double> num(n, 0.0);
    const double z = student_kernel(y, n, num);
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double q = std::max(num(i, j) / z, std::numeric_limits<double>::min());
            kl += p(i, j) * std::log(p(i, j) / q);
        }
    }
    return kl;
}

} // namespace detail

/// KL(P || Q) for a layout `y` (n x 2, row-major).
inline double tsne_kl(const SquareMatrix<double> & p, std::span<const double> y) {
    return detail::kl_divergence(p, y);
}

inline Projection2D tsne(const EmbeddingMatrix & x, const TsneParams & params) {
    if (x.n < 3) {
        fail(ErrorKind::InvalidArgument, "t-SNE needs at least 3 points (got " + std::to_string(x.n) + ")");
    }
    const std::size_t n = x.n;
    auto aff = joint_probabilities(x, params.perplexity.value_or(default_perplexity(n)));

    Projection2D out;
    out.n = n;
    out.perplexity = aff.perplexity;
    out.warnings = std::move(aff.warnings);
    out.coords.resize(2 * n);
    Rng rng(mix_seed(params.seed, 0));
    for (double & v : out.coords) v = params.init_stddev * rng.normal();
    out.initial_kl = detail::kl_divergence(aff.p, out.coords);

    std::vector<double> update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n);
    SquareMatrix<double> num(n, 0.0);
    for (std::size_t it = 0; it < params.iterations; ++it) {
        const double exaggeration = it < params.exaggeration_iterations ? params.early_exaggeration : 1.0;
        const double momentum = it < params.momentum_switch ? params.initial_momentum : params.final_momentum;
        const double z = detail::student_kernel(out.coords, n, num);

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double mult = (exaggeration * aff.p(i, j) - num(i, j) / z) * num(i, j);
                grad[2 * i] += 4.0 * mult * (out.coords[2 * i] - out.coords[2 * j]);
                grad[2 * i + 1] += 4.0 * mult * (out.coords[2 * i + 1] - out.coords[2 * j + 1]);
            }
        }
        for (std::size_t c = 0; c < 2 * n; ++c) {
            if (!std::isfinite(grad[c])) {
                fail(ErrorKind::NumericalFailure, "non-finite t-SNE gradient at iteration " + std::to_string(it));
            }
            // Delta-bar-delta gains.
            const bool same_direction = (grad[c] > 0.0) == (update[c] > 0.0);
            gains[c] = std::max(same_direction ? gains[c] * 0.8 : gains[c] + 0.2, 0.01);
            update[c] = momentum * update[c] - params.learning_rate * gains[c] * grad[c];
            out.coords[c] += update[c];
        }
        double mean_x = 0.0, mean_y = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean_x += out.coords[2 * i];
            mean_y += out.coords[2 * i + 1];
        }
        mean_x /= static_cast<double>(n);
        mean_y /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            out.coords[2 * i] -= mean_x;
            out.coords[2 * i + 1] -= mean_y;
        }
    }
    out.final_kl = detail::kl_divergence(aff.p, out.coords);
    return out;
}

} // namespace seqembed
