#pragma once

// Weight-space merging over named tensor collections: SLERP, linear interpolation,
// (weighted) model soups and LoRA folding, plus the TMAP checkpoint container.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "binary_io.hpp"
#include "error.hpp"

namespace seqembed {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t numel() const {
        std::size_t count = 1;
        for (auto s : shape) count *= s;
        return count;
    }
    bool operator==(const Tensor &) const = default;
};

/// Named tensors in canonical (byte-wise lexicographic) order.
struct TensorMap {
    std::map<std::string, Tensor> entries;

    std::size_t size() const { return entries.size(); }
    bool operator==(const TensorMap &) const = default;
};

inline void validate(const std::string & name, const Tensor & t) {
    if (t.data.size() != t.numel()) {
        fail(ErrorKind::Structural, "tensor '" + name + "' holds " + std::to_string(t.data.size()) +
                                        " values but its shape needs " + std::to_string(t.numel()));
    }
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::NonFinite, "tensor '" + name + "' contains a non-finite value");
        }
    }
}

inline void validate(const TensorMap & m) {
    for (const auto & [name, t] : m.entries) validate(name, t);
}

/// Byte-for-byte equality (distinguishes +0/-0, unlike operator==).
inline bool bit_equal(const TensorMap & a, const TensorMap & b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (auto ia = a.entries.begin(), ib = b.entries.begin(); ia != a.entries.end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.shape != ib->second.shape ||
            ia->second.data.size() != ib->second.data.size()) {
            return false;
        }
        if (!ia->second.data.empty() &&
            std::memcmp(ia->second.data.data(), ib->second.data.data(), ia->second.data.size() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

inline std::string shape_string(const std::vector<std::size_t> & shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Throws a Structural error naming the first tensor (in canonical order) whose presence or
/// shape differs.
inline void require_same_structure(const TensorMap & a, const TensorMap & b) {
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    while (ia != a.entries.end() || ib != b.entries.end()) {
        if (ib == b.entries.end() || (ia != a.entries.end() && ia->first < ib->first)) {
            fail(ErrorKind::Structural, "tensor '" + ia->first + "' is missing from the second checkpoint");
        }
        if (ia == a.entries.end() || ib->first < ia->first) {
            fail(ErrorKind::Structural, "tensor '" + ib->first + "' is missing from the first checkpoint");
        }
        if (ia->second.shape != ib->second.shape) {
            fail(ErrorKind::Structural, "tensor '" + ia->first + "' has shape " + shape_string(ia->second.shape) +
                                            " vs " + shape_string(ib->second.shape));
        }
        ++ia;
        ++ib;
    }
}

// ---- SLERP -----------------------------------------------------------------

struct SlerpParams {
    double t = 0.5;
    double parallel_threshold = 1e-7;  // radians
    double antipodal_threshold = 1e-7; // radians from pi
};

template <std::floating_point T>
struct SlerpOutcome {
    std::vector<T> values;
    double omega = 0.0;   // angle between the normalized inputs
    bool fallback = false; // linear interpolation was used
};

/// Angle between u and v: 2 atan2(|u^ - v^|, |u^ + v^|), accurate near 0 and pi.
template <std::floating_point T>
double angle_between(std::span<const T> u, std::span<const T> v) {
    double nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        nu += static_cast<double>(u[i]) * u[i];
        nv += static_cast<double>(v[i]) * v[i];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu == 0.0 || nv == 0.0) {
        fail(ErrorKind::InvalidArgument, "SLERP is undefined for a zero vector");
    }
    double diff = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i] / nu;
        const double b = v[i] / nv;
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

/// Spherical interpolation with the angle taken from the normalized pair and the sine
/// weights applied to the raw vectors. Near-parallel and near-antipodal pairs fall back to
/// (1-t)u + tv. t = 0 and t = 1 return the inputs exactly.
template <std::floating_point T>
SlerpOutcome<T> slerp_vectors(std::span<const T> u, std::span<const T> v, double t, const SlerpParams & params = {}) {
    if (u.size() != v.size()) {
        fail(ErrorKind::Structural, "SLERP operands differ in length (" + std::to_string(u.size()) + " vs " +
                                        std::to_string(v.size()) + ")");
    }
    if (!(t >= 0.0 && t <= 1.0)) {
        fail(ErrorKind::InvalidArgument, "interpolation fraction must lie in [0, 1]");
    }
    SlerpOutcome<T> out;
    out.omega = angle_between(u, v);
    out.fallback = out.omega < params.parallel_threshold || std::numbers::pi - out.omega < params.antipodal_threshold;
    if (t == 0.0) {
        out.values.assign(u.begin(), u.end());
        return out;
    }
    if (t == 1.0) {
        out.values.assign(v.begin(), v.end());
        return out;
    }
    double wu = 1.0 - t;
    double wv = t;
    if (!out.fallback) {
        const double s = std::sin(out.omega);
        wu = std::sin((1.0 - t) * out.omega) / s;
        wv = std::sin(t * out.omega) / s;
    }
    out.values.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        out.values[i] = static_cast<T>(wu * static_cast<double>(u[i]) + wv * static_cast<double>(v[i]));
    }
    return out;
}

struct TensorMergeInfo {
    std::string name;
    double omega = 0.0;
    bool fallback = false;
};

struct MergeReport {
    std::string method;
    std::vector<TensorMergeInfo> tensors;
};

struct MergeResult {
    TensorMap merged;
    MergeReport report;
};

/// Plain-text merge report: a comment line, then one tab-separated line per tensor.
inline std::string format_merge_report(const MergeReport & report) {
    std::string out = "# " + report.method + "\n";
    out += "tensor\tomega_rad\tfallback\n";
    char buf[64];
    for (const auto & t : report.tensors) {
        std::snprintf(buf, sizeof buf, "%.9f", t.omega);
        out += t.name + "\t" + buf + "\t" + (t.fallback ? "yes" : "no") + "\n";
    }
    return out;
}

/// Per-tensor SLERP on the flattened data.
inline MergeResult slerp_merge(const TensorMap & a, const TensorMap & b, const SlerpParams & params) {
    require_same_structure(a, b);
    MergeResult res;
    char buf[64];
    std::snprintf(buf, sizeof buf, "slerp t=%.6g", params.t);
    res.report.method = buf;
    for (const auto & [name, ta] : a.entries) {
        const Tensor & tb = b.entries.at(name);
        auto outcome = slerp_vectors<float>(ta.data, tb.data, params.t, params);
        res.report.tensors.push_back({name, outcome.omega, outcome.fallback});
        res.merged.entries.emplace(name, Tensor{ta.shape, std::move(outcome.values)});
    }
    return res;
}

/// Pairwise-sequential SLERP over >= 2 checkpoints: ((m0 * m1) * m2) * ... with the same t.
inline MergeResult slerp_chain(std::span<const TensorMap> models, const SlerpParams & params) {
    if (models.size() < 2) {
        fail(ErrorKind::InvalidArgument, "SLERP needs at least two checkpoints");
    }
    MergeResult acc = slerp_merge(models[0], models[1], params);
    for (std::size_t i = 2; i < models.size(); ++i) {
        MergeResult step = slerp_merge(acc.merged, models[i], params);
        acc.merged = std::move(step.merged);
        for (auto & info : step.report.tensors) {
            info.name += " (step " + std::to_string(i) + ")";
            acc.report.tensors.push_back(std::move(info));
        }
    }
    if (models.size() > 2) {
        acc.report.method += " chain=" + std::to_string(models.size());
    }
    return acc;
}

// ---- Linear interpolation and soups ----------------------------------------

inline TensorMap lerp_merge(const TensorMap & a, const TensorMap & b, double t) {
    require_same_structure(a, b);
    if (!(t >= 0.0 && t <= 1.0)) {
        fail(ErrorKind::InvalidArgument, "interpolation fraction must lie in [0, 1]");
    }
    if (t == 0.0) return a;
    if (t == 1.0) return b;
    TensorMap out;
    for (const auto & [name, ta] : a.entries) {
        const Tensor & tb = b.entries.at(name);
        Tensor r{ta.shape, std::vector<float>(ta.data.size())};
        for (std::size_t i = 0; i < r.data.size(); ++i) {
            r.data[i] = static_cast<float>((1.0 - t) * static_cast<double>(ta.data[i]) +
                                           t * static_cast<double>(tb.data[i]));
        }
        out.entries.emplace(name, std::move(r));
    }
    return out;
}

/// Weighted element-wise mean. Empty weights mean uniform; weights are normalized internally.
/// Every sum runs over its terms sorted by value, so the result does not depend on the
/// order in which models are listed.
inline TensorMap soup(std::span<const TensorMap> models, std::span<const double> weights = {}) {
    if (models.empty()) {
        fail(ErrorKind::InvalidArgument, "a soup needs at least one model");
    }
    for (std::size_t m = 1; m < models.size(); ++m) require_same_structure(models[0], models[m]);

    std::vector<double> w(models.size(), 1.0);
    if (!weights.empty()) {
        if (weights.size() != models.size()) {
            fail(ErrorKind::InvalidArgument, "soup got " + std::to_string(weights.size()) + " weights for " +
                                                 std::to_string(models.size()) + " models");
        }
        w.assign(weights.begin(), weights.end());
    }
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            fail(ErrorKind::InvalidArgument, "soup weights must be finite and non-negative");
        }
    }
    std::vector<double> sorted_w = w;
    std::sort(sorted_w.begin(), sorted_w.end());
    double total = 0.0;
    for (double v : sorted_w) total += v;
    if (total <= 0.0) {
        fail(ErrorKind::InvalidArgument, "soup weights sum to zero");
    }
    for (double & v : w) v /= total;

    TensorMap out;
    std::vector<double> terms(models.size());
    for (const auto & [name, first] : models[0].entries) {
        std::vector<const Tensor *> members;
        for (const auto & m : models) members.push_back(&m.entries.at(name));
        Tensor r{first.shape, std::vector<float>(first.data.size())};
        for (std::size_t i = 0; i < r.data.size(); ++i) {
            for (std::size_t m = 0; m < members.size(); ++m) {
                terms[m] = w[m] * static_cast<double>(members[m]->data[i]);
            }
            std::sort(terms.begin(), terms.end());
            double acc = 0.0;
            for (double v : terms) acc += v;
            r.data[i] = static_cast<float>(acc);
        }
        out.entries.emplace(name, std::move(r));
    }
    return out;
}

// ---- LoRA ------------------------------------------------------------------

/// Low-rank update for one out x in weight: delta = (alpha / r) * B * A with A (r x in),
/// B (out x r).
struct LoraFactor {
    Tensor a;
    Tensor b;
    double alpha = 1.0;

    std::size_t rank() const { return a.shape.empty() ? 0 : a.shape[0]; }
};

struct LoraAdapter {
    std::map<std::string, LoraFactor> factors;
};

inline TensorMap lora_fold(const TensorMap & base, const LoraAdapter & adapter) {
    TensorMap out = base;
    for (const auto & [name, f] : adapter.factors) {
        auto it = out.entries.find(name);
        if (it == out.entries.end()) {
            fail(ErrorKind::Structural, "adapter targets '" + name + "' which is not in the base checkpoint");
        }
        Tensor & w = it->second;
        if (w.shape.size() != 2) {
            fail(ErrorKind::Structural, "adapted tensor '" + name + "' must be a matrix, has shape " +
                                            shape_string(w.shape));
        }
        const std::size_t rows = w.shape[0], cols = w.shape[1], r = f.rank();
        if (r == 0 || f.a.shape != std::vector<std::size_t>{r, cols} || f.b.shape != std::vector<std::size_t>{rows, r}) {
            fail(ErrorKind::Structural, "adapter for '" + name + "' has A " + shape_string(f.a.shape) + " and B " +
                                            shape_string(f.b.shape) + ", incompatible with base " +
                                            shape_string(w.shape));
        }
        validate(name + ".lora_A", f.a);
        validate(name + ".lora_B", f.b);
        if (!std::isfinite(f.alpha)) {
            fail(ErrorKind::NonFinite, "adapter alpha for '" + name + "' is not finite");
        }
        const double scale = f.alpha / static_cast<double>(r);
        if (scale == 0.0) continue;
        for (std::size_t o = 0; o < rows; ++o) {
            for (std::size_t i = 0; i < cols; ++i) {
                double delta = 0.0;
                for (std::size_t k = 0; k < r; ++k) {
                    delta += static_cast<double>(f.b.data[o * r + k]) * static_cast<double>(f.a.data[k * cols + i]);
                }
                float & cell = w.data[o * cols + i];
                cell = static_cast<float>(static_cast<double>(cell) + scale * delta);
            }
        }
    }
    return out;
}

// Adapters travel as TMAP files holding "<name>.lora_A", "<name>.lora_B" and a 1-element
// "<name>.alpha" per adapted tensor.
inline constexpr std::string_view lora_a_suffix = ".lora_A";
inline constexpr std::string_view lora_b_suffix = ".lora_B";
inline constexpr std::string_view lora_alpha_suffix = ".alpha";

inline TensorMap adapter_to_tensormap(const LoraAdapter & adapter) {
    TensorMap m;
    for (const auto & [name, f] : adapter.factors) {
        m.entries.emplace(name + std::string(lora_a_suffix), f.a);
        m.entries.emplace(name + std::string(lora_b_suffix), f.b);
        m.entries.emplace(name + std::string(lora_alpha_suffix), Tensor{{1}, {static_cast<float>(f.alpha)}});
    }
    return m;
}

inline LoraAdapter adapter_from_tensormap(const TensorMap & m) {
    auto strip = [](const std::string & key, std::string_view suffix) -> std::optional<std::string> {
        if (key.size() > suffix.size() && key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0) {
            return key.substr(0, key.size() - suffix.size());
        }
        return std::nullopt;
    };
    LoraAdapter adapter;
    std::map<std::string, int> parts;
    for (const auto & [key, t] : m.entries) {
        if (auto base = strip(key, lora_a_suffix)) {
            adapter.factors[*base].a = t;
            parts[*base] |= 1;
        } else if (auto base2 = strip(key, lora_b_suffix)) {
            adapter.factors[*base2].b = t;
            parts[*base2] |= 2;
        } else if (auto base3 = strip(key, lora_alpha_suffix)) {
            if (t.data.size() != 1) {
                fail(ErrorKind::Structural, "adapter entry '" + key + "' must hold exactly one value");
            }
            adapter.factors[*base3].alpha = t.data[0];
            parts[*base3] |= 4;
        } else {
            fail(ErrorKind::Structural, "unexpected adapter entry '" + key + "'");
        }
    }
    for (const auto & [name, mask] : parts) {
        if (mask != 7) {
            fail(ErrorKind::Structural, "adapter for '" + name + "' is incomplete (needs lora_A, lora_B and alpha)");
        }
    }
    return adapter;
}

/// Folds each adapter into the base, then soups the folded checkpoints.
inline TensorMap fold_then_soup(const TensorMap & base, std::span<const LoraAdapter> adapters,
                                std::span<const double> weights = {}) {
    std::vector<TensorMap> folded;
    for (const auto & ad : adapters) folded.push_back(lora_fold(base, ad));
    return soup(folded, weights);
}

/// Folds each adapter into the base, then SLERPs the folded checkpoints pairwise-sequentially.
inline MergeResult fold_then_slerp(const TensorMap & base, std::span<const LoraAdapter> adapters,
                                   const SlerpParams & params) {
    std::vector<TensorMap> folded;
    for (const auto & ad : adapters) folded.push_back(lora_fold(base, ad));
    return slerp_chain(folded, params);
}

// ---- TMAP ------------------------------------------------------------------
//
//   "TMAP" | u8 version=1 | u32 count | per tensor:
//       u32 name_len | name | u8 rank | u32 dims[rank] | f32 payload (row-major)
//
// Little-endian throughout; tensors written in canonical name order.

inline constexpr std::string_view tmap_magic = "TMAP";
inline constexpr std::uint8_t tmap_version = 1;

inline void save_tensormap(const TensorMap & m, std::ostream & out) {
    validate(m);
    binio::put_bytes(out, std::string(tmap_magic));
    binio::put_u8(out, tmap_version);
    binio::put_u32(out, static_cast<std::uint32_t>(m.entries.size()));
    for (const auto & [name, t] : m.entries) {
        if (t.shape.size() > 255) {
            fail(ErrorKind::InvalidArgument, "tensor '" + name + "' has more than 255 dimensions");
        }
        binio::put_u32(out, static_cast<std::uint32_t>(name.size()));
        binio::put_bytes(out, name);
        binio::put_u8(out, static_cast<std::uint8_t>(t.shape.size()));
        for (auto dim : t.shape) {
            if (dim > std::numeric_limits<std::uint32_t>::max()) {
                fail(ErrorKind::InvalidArgument, "tensor '" + name + "' has a dimension beyond 32 bits");
            }
            binio::put_u32(out, static_cast<std::uint32_t>(dim));
        }
        for (float v : t.data) binio::put_f32(out, v);
    }
}

inline void save_tensormap(const TensorMap & m, const std::string & path) {
    validate(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
    }
    save_tensormap(m, out);
    out.flush();
    if (!out) {
        fail(ErrorKind::Io, "write to '" + path + "' failed");
    }
}

inline TensorMap load_tensormap(std::istream & in) {
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::string_view(magic, 4) != tmap_magic) {
        fail(ErrorKind::BadMagic, "not a TMAP container");
    }
    const auto version = binio::get_u8(in, "TMAP version");
    if (version != tmap_version) {
        fail(ErrorKind::BadVersion, "unsupported TMAP version " + std::to_string(version));
    }
    const auto count = binio::get_u32(in, "TMAP tensor count");
    TensorMap m;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto name_len = binio::get_u32(in, "tensor name length");
        std::string name = binio::get_string(in, name_len, "tensor name");
        const auto rank = binio::get_u8(in, "tensor rank");
        Tensor t;
        for (std::uint8_t r = 0; r < rank; ++r) t.shape.push_back(binio::get_u32(in, "tensor dimension"));
        t.data = binio::get_f32_array(in, t.numel(), "tensor payload");
        validate(name, t);
        if (m.entries.contains(name)) {
            fail(ErrorKind::DuplicateName, "tensor '" + name + "' appears twice in the container");
        }
        m.entries.emplace(std::move(name), std::move(t));
    }
    return m;
}

inline TensorMap load_tensormap(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::Io, "cannot open '" + path + "'");
    }
    return load_tensormap(in);
}

} // namespace seqembed
