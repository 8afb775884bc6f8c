#pragma once

// Lloyd's KMeans with k-means++ seeding, the Silhouette and Davies-Bouldin indices,
// adjusted Rand index, and the four-column evaluation of an embedding matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <thread>
#include <vector>

#include "embedstore.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "random.hpp"

namespace seqembed {

struct KMeansParams {
    std::size_t k = 6;
    std::size_t restarts = 10;
    std::size_t max_iterations = 300;
    double tolerance = 1e-6; // relative inertia change
    std::uint64_t seed = 0;
    std::size_t threads = 1; // restarts are spread over this many workers
};

struct KMeansResult {
    std::vector<int> labels;
    std::vector<double> centroids; // k x d, row-major
    std::size_t d = 0;
    double inertia = 0.0;
    std::size_t restart_index = 0;
    std::size_t iterations = 0;
    std::vector<double> inertia_history; // after every Lloyd/refinement step of the winning run
};

struct ClusteringReport {
    double silhouette_true = 0.0;
    double dbi_true = 0.0;
    double silhouette_kmeans = 0.0;
    double dbi_kmeans = 0.0;
    std::vector<int> kmeans_labels;
    double agreement = 0.0; // adjusted Rand index, true vs KMeans
};

// Maps arbitrary label ids to 0..K-1 in order of first appearance, so every downstream
// accumulation order is independent of the ids chosen.
struct DenseLabels {
    std::vector<std::size_t> ids;
    std::size_t count = 0;
};

inline DenseLabels densify(std::span<const int> labels) {
    DenseLabels out;
    out.ids.reserve(labels.size());
    std::map<int, std::size_t> seen;
    for (int l : labels) {
        auto [it, inserted] = seen.try_emplace(l, seen.size());
        out.ids.push_back(it->second);
    }
    out.count = seen.size();
    return out;
}

namespace detail {

inline void check_labels(const EmbeddingMatrix & x, std::span<const int> labels) {
    if (labels.size() != x.n) {
        fail(ErrorKind::Alignment, "label count " + std::to_string(labels.size()) + " != row count " +
                                       std::to_string(x.n));
    }
}

inline std::vector<double> centroids_of(const EmbeddingMatrix & x, const DenseLabels & dl,
                                        std::vector<std::size_t> & sizes) {
    std::vector<double> c(dl.count * x.d, 0.0);
    sizes.assign(dl.count, 0);
    for (std::size_t i = 0; i < x.n; ++i) {
        const auto r = x.row(i);
        const std::size_t k = dl.ids[i];
        ++sizes[k];
        for (std::size_t j = 0; j < x.d; ++j) c[k * x.d + j] += r[j];
    }
    for (std::size_t k = 0; k < dl.count; ++k) {
        for (std::size_t j = 0; j < x.d; ++j) c[k * x.d + j] /= static_cast<double>(sizes[k]);
    }
    return c;
}

inline double euclid(std::span<const float> p, std::span<const double> c) {
    double ss = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double diff = static_cast<double>(p[j]) - c[j];
        ss += diff * diff;
    }
    return std::sqrt(ss);
}

} // namespace detail

/// Mean silhouette coefficient. Members of singleton clusters score 0, as does any point
/// with max(a, b) = 0.
inline double silhouette_score(const EmbeddingMatrix & x, std::span<const int> labels) {
    detail::check_labels(x, labels);
    const DenseLabels dl = densify(labels);
    if (dl.count < 2) {
        fail(ErrorKind::UndefinedIndex, "silhouette needs at least 2 distinct labels");
    }
    const auto dist = pairwise_distances(x);
    std::vector<std::size_t> sizes(dl.count, 0);
    for (auto id : dl.ids) ++sizes[id];

    double total = 0.0;
    std::vector<double> sums(dl.count);
    for (std::size_t i = 0; i < x.n; ++i) {
        const std::size_t own = dl.ids[i];
        if (sizes[own] == 1) {
            continue;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < x.n; ++j) {
            sums[dl.ids[j]] += dist(i, j);
        }
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < dl.count; ++k) {
            if (k != own) {
                b = std::min(b, sums[k] / static_cast<double>(sizes[k]));
            }
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) {
            total += (b - a) / denom;
        }
    }
    return total / static_cast<double>(x.n);
}

/// Davies-Bouldin index with sigma_i = mean distance of cluster i's members to its centroid.
inline double davies_bouldin(const EmbeddingMatrix & x, std::span<const int> labels) {
    detail::check_labels(x, labels);
    const DenseLabels dl = densify(labels);
    if (dl.count < 2) {
        fail(ErrorKind::UndefinedIndex, "Davies-Bouldin needs at least 2 distinct labels");
    }
    std::vector<std::size_t> sizes;
    const auto c = detail::centroids_of(x, dl, sizes);
    const std::size_t d = x.d;
    auto centroid = [&](std::size_t k) { return std::span<const double>(c.data() + k * d, d); };

    std::vector<double> sigma(dl.count, 0.0);
    for (std::size_t i = 0; i < x.n; ++i) {
        sigma[dl.ids[i]] += detail::euclid(x.row(i), centroid(dl.ids[i]));
    }
    for (std::size_t k = 0; k < dl.count; ++k) sigma[k] /= static_cast<double>(sizes[k]);

    double total = 0.0;
    for (std::size_t i = 0; i < dl.count; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < dl.count; ++j) {
            if (i == j) continue;
            double ss = 0.0;
            for (std::size_t t = 0; t < d; ++t) {
                const double diff = c[i * d + t] - c[j * d + t];
                ss += diff * diff;
            }
            const double gap = std::sqrt(ss);
            if (gap == 0.0) {
                fail(ErrorKind::DegenerateCentroid, "clusters " + std::to_string(i) + " and " + std::to_string(j) +
                                                         " have coincident centroids");
            }
            worst = std::max(worst, (sigma[i] + sigma[j]) / gap);
        }
        total += worst;
    }
    return total / static_cast<double>(dl.count);
}

/// Chance-corrected Rand index; 1.0 when the partitions agree up to relabeling.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) {
        fail(ErrorKind::Alignment, "partitions have different lengths");
    }
    const DenseLabels da = densify(a);
    const DenseLabels db = densify(b);
    std::vector<double> table(da.count * db.count, 0.0);
    std::vector<double> rows(da.count, 0.0), cols(db.count, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[da.ids[i] * db.count + db.ids[i]] += 1.0;
        rows[da.ids[i]] += 1.0;
        cols[db.ids[i]] += 1.0;
    }
    auto comb2 = [](double v) { return v * (v - 1.0) / 2.0; };
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (double v : table) index += comb2(v);
    for (double v : rows) sum_rows += comb2(v);
    for (double v : cols) sum_cols += comb2(v);
    const double total = comb2(static_cast<double>(a.size()));
    if (total == 0.0) {
        return 1.0;
    }
    const double expected = sum_rows * sum_cols / total;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) {
        return 1.0;
    }
    return (index - expected) / (max_index - expected);
}

// ---- KMeans ----------------------------------------------------------------

namespace detail {

struct PointSet {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> v;

    explicit PointSet(const EmbeddingMatrix & x) : n(x.n), d(x.d), v(x.data.begin(), x.data.end()) {}
    std::span<const double> row(std::size_t i) const { return {v.data() + i * d, d}; }
};

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double ss = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        ss += diff * diff;
    }
    return ss;
}

inline double inertia_of(const PointSet & p, const std::vector<int> & labels, const std::vector<double> & c) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.n; ++i) {
        total += sq_dist(p.row(i), {c.data() + static_cast<std::size_t>(labels[i]) * p.d, p.d});
    }
    return total;
}

inline void recompute_centroids(const PointSet & p, const std::vector<int> & labels, std::size_t k,
                                std::vector<double> & c, std::vector<std::size_t> & sizes) {
    c.assign(k * p.d, 0.0);
    sizes.assign(k, 0);
    for (std::size_t i = 0; i < p.n; ++i) {
        const auto l = static_cast<std::size_t>(labels[i]);
        ++sizes[l];
        const auto r = p.row(i);
        for (std::size_t j = 0; j < p.d; ++j) c[l * p.d + j] += r[j];
    }
    for (std::size_t l = 0; l < k; ++l) {
        for (std::size_t j = 0; j < p.d; ++j) c[l * p.d + j] /= static_cast<double>(sizes[l]);
    }
}

inline std::vector<double> kmeanspp_init(const PointSet & p, std::size_t k, Rng & rng) {
    std::vector<double> c;
    c.reserve(k * p.d);
    std::vector<bool> chosen(p.n, false);
    auto take = [&](std::size_t i) {
        chosen[i] = true;
        const auto r = p.row(i);
        c.insert(c.end(), r.begin(), r.end());
    };
    take(static_cast<std::size_t>(rng.below(p.n)));

    std::vector<double> d2(p.n);
    for (std::size_t i = 0; i < p.n; ++i) d2[i] = sq_dist(p.row(i), {c.data(), p.d});

    for (std::size_t m = 1; m < k; ++m) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = p.n;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < p.n; ++i) {
                if (d2[i] <= 0.0) continue;
                acc += d2[i];
                pick = i;
                if (acc > target) break;
            }
        } else {
            // Every point coincides with a chosen centre: take an unchosen index uniformly.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < p.n; ++i) {
                if (!chosen[i]) free.push_back(i);
            }
            pick = free[static_cast<std::size_t>(rng.below(free.size()))];
        }
        take(pick);
        const std::span<const double> fresh(c.data() + m * p.d, p.d);
        for (std::size_t i = 0; i < p.n; ++i) d2[i] = std::min(d2[i], sq_dist(p.row(i), fresh));
    }
    return c;
}

// Moves points into empty clusters: each empty cluster takes the point farthest from its
// current centroid among clusters that can spare one.
inline void repair_empty(const PointSet & p, std::size_t k, std::vector<int> & labels,
                         const std::vector<double> & c) {
    std::vector<std::size_t> sizes(k, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    for (std::size_t e = 0; e < k; ++e) {
        if (sizes[e] != 0) continue;
        std::size_t best = p.n;
        double best_d = -1.0;
        for (std::size_t i = 0; i < p.n; ++i) {
            const auto l = static_cast<std::size_t>(labels[i]);
            if (sizes[l] < 2) continue;
            const double dd = sq_dist(p.row(i), {c.data() + l * p.d, p.d});
            if (dd > best_d) {
                best_d = dd;
                best = i;
            }
        }
        --sizes[static_cast<std::size_t>(labels[best])];
        labels[best] = static_cast<int>(e);
        ++sizes[e];
    }
}

// Single-point transfers (Hartigan's criterion) after Lloyd converges, so the final
// labeling cannot be improved by moving any one point.
inline bool single_point_refine(const PointSet & p, std::size_t k, std::vector<int> & labels,
                                std::vector<double> & c, std::vector<std::size_t> & sizes) {
    bool moved = false;
    for (std::size_t i = 0; i < p.n; ++i) {
        const auto from = static_cast<std::size_t>(labels[i]);
        if (sizes[from] < 2) continue;
        const auto x = p.row(i);
        const double n_from = static_cast<double>(sizes[from]);
        const double removal_gain = n_from / (n_from - 1.0) * sq_dist(x, {c.data() + from * p.d, p.d});
        std::size_t to = from;
        double best_cost = removal_gain;
        for (std::size_t l = 0; l < k; ++l) {
            if (l == from) continue;
            const double n_to = static_cast<double>(sizes[l]);
            const double cost = n_to / (n_to + 1.0) * sq_dist(x, {c.data() + l * p.d, p.d});
            if (cost < best_cost) {
                best_cost = cost;
                to = l;
            }
        }
        if (to == from || best_cost >= removal_gain * (1.0 - 1e-12)) continue;
        labels[i] = static_cast<int>(to);
        recompute_centroids(p, labels, k, c, sizes);
        moved = true;
    }
    return moved;
}

inline KMeansResult kmeans_run(const PointSet & p, const KMeansParams & params, std::size_t restart) {
    const std::size_t k = params.k;
    Rng rng(mix_seed(params.seed, restart));
    KMeansResult res;
    res.d = p.d;
    res.restart_index = restart;
    res.centroids = kmeanspp_init(p, k, rng);
    res.labels.assign(p.n, 0);
    std::vector<std::size_t> sizes;

    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < params.max_iterations; ++it) {
        bool changed = (it == 0);
        for (std::size_t i = 0; i < p.n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < k; ++l) {
                const double dd = sq_dist(p.row(i), {res.centroids.data() + l * p.d, p.d});
                if (dd < best_d) {
                    best_d = dd;
                    best = static_cast<int>(l);
                }
            }
            if (res.labels[i] != best) {
                res.labels[i] = best;
                changed = true;
            }
        }
        repair_empty(p, k, res.labels, res.centroids);
        recompute_centroids(p, res.labels, k, res.centroids, sizes);
        const double cur = inertia_of(p, res.labels, res.centroids);
        res.inertia_history.push_back(cur);
        res.iterations = it + 1;
        if (!changed || cur == 0.0 || (std::isfinite(prev) && prev - cur <= params.tolerance * prev)) {
            break;
        }
        prev = cur;
    }
    recompute_centroids(p, res.labels, k, res.centroids, sizes);
    for (std::size_t pass = 0; pass < 100 * p.n; ++pass) {
        if (!single_point_refine(p, k, res.labels, res.centroids, sizes)) break;
        res.inertia_history.push_back(inertia_of(p, res.labels, res.centroids));
    }
    res.inertia = inertia_of(p, res.labels, res.centroids);
    return res;
}

} // namespace detail

/// One restart of KMeans, seeded from (params.seed, restart). Exposed so callers can verify
/// that the best-of-restarts choice does not depend on execution order.
inline KMeansResult kmeans_restart(const EmbeddingMatrix & x, const KMeansParams & params, std::size_t restart) {
    if (params.k == 0 || params.k > x.n) {
        fail(ErrorKind::InvalidArgument, "kmeans needs 1 <= k <= n (k=" + std::to_string(params.k) +
                                             ", n=" + std::to_string(x.n) + ")");
    }
    return detail::kmeans_run(detail::PointSet(x), params, restart);
}

/// Best-inertia KMeans over params.restarts seeded runs; ties go to the lowest restart index.
inline KMeansResult kmeans(const EmbeddingMatrix & x, const KMeansParams & params) {
    if (params.k == 0 || params.k > x.n) {
        fail(ErrorKind::InvalidArgument, "kmeans needs 1 <= k <= n (k=" + std::to_string(params.k) +
                                             ", n=" + std::to_string(x.n) + ")");
    }
    if (params.restarts == 0) {
        fail(ErrorKind::InvalidArgument, "kmeans needs at least one restart");
    }
    const detail::PointSet points(x);
    std::vector<KMeansResult> runs(params.restarts);
    const std::size_t workers = std::clamp<std::size_t>(params.threads, 1, params.restarts);
    if (workers == 1) {
        for (std::size_t r = 0; r < params.restarts; ++r) runs[r] = detail::kmeans_run(points, params, r);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t r = w; r < params.restarts; r += workers) {
                    runs[r] = detail::kmeans_run(points, params, r);
                }
            });
        }
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].inertia < runs[best].inertia) best = r;
    }
    return std::move(runs[best]);
}

/// The four report metrics for an embedding matrix, plus KMeans labels and their agreement
/// with the true labels. Rows are L2-normalized first when `normalize` is set.
inline ClusteringReport evaluate(const EmbeddingMatrix & x, std::span<const int> true_labels,
                                 const KMeansParams & params, bool normalize = false) {
    detail::check_labels(x, true_labels);
    const EmbeddingMatrix points = normalize ? l2_normalized(x) : x;
    ClusteringReport report;
    report.silhouette_true = silhouette_score(points, true_labels);
    report.dbi_true = davies_bouldin(points, true_labels);
    auto km = kmeans(points, params);
    report.kmeans_labels = std::move(km.labels);
    report.silhouette_kmeans = silhouette_score(points, report.kmeans_labels);
    report.dbi_kmeans = davies_bouldin(points, report.kmeans_labels);
    report.agreement = adjusted_rand_index(true_labels, report.kmeans_labels);
    return report;
}

} // namespace seqembed
