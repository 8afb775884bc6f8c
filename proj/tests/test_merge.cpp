#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "seqembed/merge.hpp"
#include "seqembed/random.hpp"

using namespace seqembed;

namespace {

Tensor random_tensor(Rng & rng, std::vector<std::size_t> shape, double scale = 1.0) {
    Tensor t{std::move(shape), {}};
    t.data.resize(t.numel());
    for (float & v : t.data) v = static_cast<float>(scale * rng.normal());
    return t;
}

TensorMap random_map(std::uint64_t seed) {
    Rng rng(seed);
    TensorMap m;
    m.entries["blk.0.attn.weight"] = random_tensor(rng, {4, 6});
    m.entries["blk.0.ffn.weight"] = random_tensor(rng, {8, 4});
    m.entries["norm.bias"] = random_tensor(rng, {8});
    m.entries["scalar"] = random_tensor(rng, {});
    return m;
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

TEST(Slerp, EndpointsAreExact) {
    const std::vector<double> u{0.3, -0.0, 2.0}, v{-1.0, 4.0, 0.5};
    EXPECT_EQ(slerp_vectors<double>(u, v, 0.0).values, u);
    EXPECT_EQ(slerp_vectors<double>(u, v, 1.0).values, v);
    EXPECT_TRUE(std::signbit(slerp_vectors<double>(u, v, 0.0).values[1]));
}

TEST(Slerp, OrthogonalUnitMidpoint) {
    const std::vector<double> u{1, 0}, v{0, 1};
    const auto r = slerp_vectors<double>(u, v, 0.5);
    EXPECT_FALSE(r.fallback);
    EXPECT_NEAR(r.omega, std::numbers::pi / 2, 1e-15);
    EXPECT_NEAR(r.values[0], std::sqrt(2.0) / 2, 1e-12);
    EXPECT_NEAR(r.values[1], std::sqrt(2.0) / 2, 1e-12);
}

TEST(Slerp, RawMagnitudesAreInterpolated) {
    const std::vector<double> u{2, 0}, v{0, 1};
    const auto r = slerp_vectors<double>(u, v, 0.5);
    EXPECT_NEAR(r.values[0], std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(r.values[1], std::sqrt(2.0) / 2, 1e-12);
}

TEST(Slerp, ParallelAndAntipodalFallBack) {
    const std::vector<double> u{1, 2, 3};
    const auto same = slerp_vectors<double>(u, u, 0.3);
    EXPECT_TRUE(same.fallback);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(same.values[i], u[i]);
    const std::vector<double> neg{-1, -2, -3};
    const auto anti = slerp_vectors<double>(u, neg, 0.25);
    EXPECT_TRUE(anti.fallback);
    EXPECT_NEAR(anti.values[0], 0.5, 1e-15);
    EXPECT_THROW(slerp_vectors<double>(u, std::vector<double>{0, 0, 0}, 0.5), Error);
    EXPECT_THROW(slerp_vectors<double>(u, std::vector<double>{1, 2}, 0.5), Error);
    EXPECT_THROW(slerp_vectors<double>(u, u, 1.5), Error);
}

TEST(Slerp, NormSymmetryAndSmallAngleProperties) {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<double> u(n), v(n);
        for (auto & x : u) x = rng.normal();
        for (auto & x : v) x = rng.normal();
        const double target = 0.5 + 3.0 * rng.uniform();
        const double nu = norm(u), nv = norm(v);
        for (auto & x : u) x *= target / nu;
        for (auto & x : v) x *= target / nv;
        for (int k = 1; k <= 9; ++k) {
            const double t = k / 10.0;
            const auto r = slerp_vectors<double>(u, v, t);
            EXPECT_NEAR(norm(r.values), target, 1e-6 * target);
            const auto mirrored = slerp_vectors<double>(v, u, 1.0 - t);
            for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r.values[i], mirrored.values[i], 1e-9);
        }
        // Perturb u by an angle well below 1e-3 and compare with lerp.
        std::vector<double> w = u;
        for (auto & x : w) x += 1e-5 * target * rng.normal() / std::sqrt(static_cast<double>(n));
        const auto s = slerp_vectors<double>(u, w, 0.4);
        ASSERT_LT(s.omega, 1e-3);
        double diff = 0.0;
        std::vector<double> lerp(n);
        for (std::size_t i = 0; i < n; ++i) {
            lerp[i] = 0.6 * u[i] + 0.4 * w[i];
            diff += (lerp[i] - s.values[i]) * (lerp[i] - s.values[i]);
        }
        EXPECT_LT(std::sqrt(diff), 1e-6 * norm(lerp));
    }
}

TEST(SlerpMerge, IdentityEndpointsAndStructure) {
    const auto a = random_map(1), b = random_map(2);
    const auto self = slerp_merge(a, a, {.t = 0.5});
    EXPECT_TRUE(bit_equal(self.merged, a));
    for (const auto & info : self.report.tensors) EXPECT_TRUE(info.fallback) << info.name;
    EXPECT_TRUE(bit_equal(slerp_merge(a, b, {.t = 0.0}).merged, a));
    EXPECT_TRUE(bit_equal(slerp_merge(a, b, {.t = 1.0}).merged, b));

    auto missing = b;
    missing.entries.erase("norm.bias");
    try {
        slerp_merge(a, missing, {});
        FAIL();
    } catch (const Error & e) {
        EXPECT_EQ(e.kind(), ErrorKind::Structural);
        EXPECT_NE(std::string(e.what()).find("norm.bias"), std::string::npos);
    }
    auto reshaped = b;
    reshaped.entries["blk.0.attn.weight"].shape = {6, 4};
    try {
        slerp_merge(a, reshaped, {});
        FAIL();
    } catch (const Error & e) {
        EXPECT_NE(std::string(e.what()).find("blk.0.attn.weight"), std::string::npos);
    }
}

TEST(SlerpMerge, UnitNormTensorsStayUnit) {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        TensorMap a, b;
        a.entries["w"] = random_tensor(rng, {64});
        b.entries["w"] = random_tensor(rng, {64});
        for (auto * m : {&a, &b}) {
            auto & d = m->entries["w"].data;
            double s = 0.0;
            for (float v : d) s += static_cast<double>(v) * v;
            for (float & v : d) v = static_cast<float>(v / std::sqrt(s));
        }
        const auto out = slerp_merge(a, b, {.t = 0.5}).merged.entries.at("w").data;
        double s = 0.0;
        for (float v : out) s += static_cast<double>(v) * v;
        EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
    }
}

TEST(Soup, BasicIdentities) {
    const auto a = random_map(5);
    EXPECT_TRUE(bit_equal(soup(std::vector<TensorMap>{a}), a));
    EXPECT_TRUE(bit_equal(soup(std::vector<TensorMap>{a, a, a}), a));
    EXPECT_TRUE(bit_equal(soup(std::vector<TensorMap>{a, a, a, a, a, a, a}), a));

    TensorMap p, q;
    p.entries["x"] = Tensor{{2}, {1, 2}};
    q.entries["x"] = Tensor{{2}, {3, 4}};
    EXPECT_EQ(soup(std::vector<TensorMap>{p, q}).entries.at("x").data, (std::vector<float>{2, 3}));
    const std::vector<double> w{3.0, 1.0};
    EXPECT_EQ(soup(std::vector<TensorMap>{p, q}, w).entries.at("x").data, (std::vector<float>{1.5f, 2.5f}));

    EXPECT_THROW(soup(std::vector<TensorMap>{}), Error);
    const std::vector<double> zero{0.0, 0.0};
    EXPECT_THROW(soup(std::vector<TensorMap>{p, q}, zero), Error);
    const std::vector<double> negative{1.0, -1.0};
    EXPECT_THROW(soup(std::vector<TensorMap>{p, q}, negative), Error);
}

TEST(Soup, PermutationInvariantBitExact) {
    const std::vector<TensorMap> models{random_map(1), random_map(2), random_map(3), random_map(4)};
    const std::vector<double> w{0.1, 0.7, 0.15, 0.05};
    const auto ref = soup(models, w);
    const auto ref_uniform = soup(models);
    std::vector<std::size_t> order{0, 1, 2, 3};
    while (std::next_permutation(order.begin(), order.end())) {
        std::vector<TensorMap> permuted;
        std::vector<double> pw;
        for (auto i : order) {
            permuted.push_back(models[i]);
            pw.push_back(w[i]);
        }
        ASSERT_TRUE(bit_equal(soup(permuted, pw), ref));
        ASSERT_TRUE(bit_equal(soup(permuted), ref_uniform));
    }
}

TEST(Lerp, IdentitiesAndDifferenceFromSlerp) {
    const auto a = random_map(8), b = random_map(9);
    EXPECT_TRUE(bit_equal(lerp_merge(a, b, 0.5), soup(std::vector<TensorMap>{a, b})));
    EXPECT_TRUE(bit_equal(lerp_merge(a, b, 0.0), a));
    EXPECT_TRUE(bit_equal(lerp_merge(a, b, 1.0), b));
    EXPECT_THROW(lerp_merge(a, b, -0.1), Error);

    // Non-parallel pairs: slerp and lerp must disagree somewhere.
    const auto l = lerp_merge(a, b, 0.3);
    const auto s = slerp_merge(a, b, {.t = 0.3}).merged;
    const auto & lw = l.entries.at("blk.0.ffn.weight").data;
    const auto & sw = s.entries.at("blk.0.ffn.weight").data;
    double diff = 0.0;
    for (std::size_t i = 0; i < lw.size(); ++i) diff += std::abs(lw[i] - sw[i]);
    EXPECT_GT(diff, 1e-3);
}

TEST(Lora, HandComputedFold) {
    TensorMap base;
    base.entries["w"] = Tensor{{2, 2}, {0, 0, 0, 0}};
    base.entries["untouched"] = Tensor{{3}, {1, 2, 3}};
    LoraAdapter ad;
    ad.factors["w"] = LoraFactor{Tensor{{1, 2}, {1, 1}}, Tensor{{2, 1}, {1, 1}}, 2.0};
    const auto out = lora_fold(base, ad);
    EXPECT_EQ(out.entries.at("w").data, (std::vector<float>{2, 2, 2, 2}));
    EXPECT_EQ(out.entries.at("untouched"), base.entries.at("untouched"));

    ad.factors["w"].alpha = 0.0;
    EXPECT_TRUE(bit_equal(lora_fold(base, ad), base));
}

TEST(Lora, Errors) {
    TensorMap base;
    base.entries["w"] = Tensor{{2, 3}, std::vector<float>(6, 1.0f)};
    LoraAdapter missing;
    missing.factors["v"] = LoraFactor{Tensor{{1, 3}, {1, 1, 1}}, Tensor{{2, 1}, {1, 1}}, 1.0};
    EXPECT_THROW(lora_fold(base, missing), Error);
    LoraAdapter bad_shape;
    bad_shape.factors["w"] = LoraFactor{Tensor{{1, 2}, {1, 1}}, Tensor{{2, 1}, {1, 1}}, 1.0};
    EXPECT_THROW(lora_fold(base, bad_shape), Error);
}

TEST(Lora, MatchesDenseOracleAndHasLowRank) {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t rows = 3 + rng.below(10), cols = 3 + rng.below(10);
        const std::size_t r = 1 + rng.below(std::min(rows, cols) - 1);
        TensorMap base;
        base.entries["w"] = random_tensor(rng, {rows, cols});
        LoraAdapter ad;
        ad.factors["w"] = LoraFactor{random_tensor(rng, {r, cols}), random_tensor(rng, {rows, r}), 0.5 + 8.0 * rng.uniform()};
        const auto & f = ad.factors["w"];
        const auto out = lora_fold(base, ad).entries.at("w").data;
        const auto ref = oracle::dense_lowrank_update(base.entries["w"].data, f.a.data, f.b.data, rows, cols, r,
                                                      f.alpha / static_cast<double>(r));
        Eigen::MatrixXd delta(rows, cols);
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_NEAR(out[i], ref[i], 1e-5 * std::max(1.0, std::abs(ref[i])));
            delta(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols)) =
                ref[i] - base.entries["w"].data[i];
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(delta);
        const auto & sv = svd.singularValues();
        std::size_t rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i) {
            if (sv(i) > 1e-9 * sv(0)) ++rank;
        }
        EXPECT_LE(rank, r);
    }
}

TEST(Lora, AdapterContainerRoundTrip) {
    Rng rng(3);
    LoraAdapter ad;
    ad.factors["blk.0.attn.weight"] = LoraFactor{random_tensor(rng, {2, 6}), random_tensor(rng, {4, 2}), 16.0};
    const auto back = adapter_from_tensormap(adapter_to_tensormap(ad));
    ASSERT_EQ(back.factors.size(), 1u);
    const auto & f = back.factors.at("blk.0.attn.weight");
    EXPECT_EQ(f.a, ad.factors["blk.0.attn.weight"].a);
    EXPECT_EQ(f.b, ad.factors["blk.0.attn.weight"].b);
    EXPECT_EQ(f.alpha, 16.0);

    auto partial = adapter_to_tensormap(ad);
    partial.entries.erase("blk.0.attn.weight.alpha");
    EXPECT_THROW(adapter_from_tensormap(partial), Error);
}

TEST(Pipelines, FoldThenSoupMatchesManualComposition) {
    const auto base = random_map(40);
    Rng rng(41);
    std::vector<LoraAdapter> adapters(2);
    for (auto & ad : adapters) {
        ad.factors["blk.0.attn.weight"] = LoraFactor{random_tensor(rng, {2, 6}), random_tensor(rng, {4, 2}), 4.0};
    }
    const auto manual = soup(std::vector<TensorMap>{lora_fold(base, adapters[0]), lora_fold(base, adapters[1])});
    EXPECT_TRUE(bit_equal(fold_then_soup(base, adapters), manual));
    const auto chained = fold_then_slerp(base, adapters, {.t = 0.5});
    EXPECT_TRUE(bit_equal(chained.merged,
                          slerp_merge(lora_fold(base, adapters[0]), lora_fold(base, adapters[1]), {.t = 0.5}).merged));
}

TEST(Tmap, RoundTripsAndEdgeCases) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = random_map(seed);
        std::stringstream buf;
        save_tensormap(m, buf);
        EXPECT_TRUE(bit_equal(load_tensormap(buf), m));
    }
    TensorMap empty;
    std::stringstream buf;
    save_tensormap(empty, buf);
    EXPECT_EQ(buf.str(), std::string("TMAP\x01\x00\x00\x00\x00", 9));
    EXPECT_EQ(load_tensormap(buf).size(), 0u);
}

TEST(Tmap, CanonicalOrderAndErrors) {
    TensorMap m;
    m.entries["b"] = Tensor{{1}, {1.0f}};
    m.entries["a"] = Tensor{{1}, {2.0f}};
    std::stringstream buf;
    save_tensormap(m, buf);
    const std::string bytes = buf.str();
    EXPECT_EQ(bytes.substr(13, 1), "a");

    // Same tensor written twice.
    const std::string record = bytes.substr(9, (bytes.size() - 9) / 2);
    std::string dup = std::string("TMAP\x01\x02\x00\x00\x00", 9) + record + record;
    std::istringstream dup_in(dup);
    try {
        load_tensormap(dup_in);
        FAIL();
    } catch (const Error & e) {
        EXPECT_EQ(e.kind(), ErrorKind::DuplicateName);
    }
    std::istringstream bad("TMAX\x01");
    EXPECT_THROW(load_tensormap(bad), Error);
    std::istringstream truncated(bytes.substr(0, bytes.size() - 2));
    try {
        load_tensormap(truncated);
        FAIL();
    } catch (const Error & e) {
        EXPECT_EQ(e.kind(), ErrorKind::Truncated);
    }
    TensorMap nan_map;
    nan_map.entries["x"] = Tensor{{1}, {std::nanf("")}};
    std::stringstream sink;
    EXPECT_THROW(save_tensormap(nan_map, sink), Error);
}
