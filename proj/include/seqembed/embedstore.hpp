#pragma once

// Embedding matrices on disk (EMBF binary, CSV interop) and the clustering report CSV.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "binary_io.hpp"
#include "error.hpp"

namespace seqembed {

/// Row-major n x d matrix of 32-bit floats. Row i belongs to corpus record i.
struct EmbeddingMatrix {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<float> data;
    std::string source_model;

    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> values, std::string tag = {})
        : n(rows), d(cols), data(std::move(values)), source_model(std::move(tag)) {}

    std::span<const float> row(std::size_t i) const { return {data.data() + i * d, d}; }
    std::span<float> row(std::size_t i) { return {data.data() + i * d, d}; }
    float operator()(std::size_t i, std::size_t j) const { return data[i * d + j]; }
    float & operator()(std::size_t i, std::size_t j) { return data[i * d + j]; }

    bool operator==(const EmbeddingMatrix &) const = default;
};

inline void validate(const EmbeddingMatrix & m) {
    if (m.n == 0 || m.d == 0) {
        fail(ErrorKind::InvalidArgument, "embedding matrix must have n >= 1 and d >= 1");
    }
    if (m.data.size() != m.n * m.d) {
        fail(ErrorKind::InvalidArgument, "embedding data length does not equal n*d");
    }
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (!std::isfinite(m.data[i])) {
            fail(ErrorKind::NonFinite, "entry (" + std::to_string(i / m.d) + ", " + std::to_string(i % m.d) +
                                           ") is not finite");
        }
    }
}

/// Copy with every row scaled to unit Euclidean norm (zero rows are left as-is).
inline EmbeddingMatrix l2_normalized(const EmbeddingMatrix & m) {
    EmbeddingMatrix out = m;
    for (std::size_t i = 0; i < out.n; ++i) {
        auto r = out.row(i);
        double ss = 0.0;
        for (float v : r) ss += static_cast<double>(v) * v;
        if (ss > 0.0) {
            const double inv = 1.0 / std::sqrt(ss);
            for (float & v : r) v = static_cast<float>(v * inv);
        }
    }
    return out;
}

// ---- EMBF ------------------------------------------------------------------
//
//   "EMBF" | u8 version=1 | u32 n | u32 d | u32 tag_len | tag bytes | n*d f32, row-major
//
// All integers and floats little-endian.

inline constexpr std::string_view embf_magic = "EMBF";
inline constexpr std::uint8_t embf_version = 1;

inline void write_embeddings(const EmbeddingMatrix & m, std::ostream & out) {
    validate(m);
    if (m.n > std::numeric_limits<std::uint32_t>::max() || m.d > std::numeric_limits<std::uint32_t>::max() ||
        m.source_model.size() > std::numeric_limits<std::uint32_t>::max()) {
        fail(ErrorKind::InvalidArgument, "matrix dimensions exceed the 32-bit EMBF header fields");
    }
    binio::put_bytes(out, std::string(embf_magic));
    binio::put_u8(out, embf_version);
    binio::put_u32(out, static_cast<std::uint32_t>(m.n));
    binio::put_u32(out, static_cast<std::uint32_t>(m.d));
    binio::put_u32(out, static_cast<std::uint32_t>(m.source_model.size()));
    binio::put_bytes(out, m.source_model);
    for (float v : m.data) {
        binio::put_f32(out, v);
    }
}

inline void write_embeddings(const EmbeddingMatrix & m, const std::string & path) {
    validate(m); // before the destination is touched
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
    }
    write_embeddings(m, out);
    out.flush();
    if (!out) {
        fail(ErrorKind::Io, "write to '" + path + "' failed");
    }
}

inline EmbeddingMatrix read_embeddings(std::istream & in) {
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::string_view(magic, 4) != embf_magic) {
        fail(ErrorKind::BadMagic, "not an EMBF container");
    }
    const auto version = binio::get_u8(in, "EMBF version");
    if (version != embf_version) {
        fail(ErrorKind::BadVersion, "unsupported EMBF version " + std::to_string(version));
    }
    EmbeddingMatrix m;
    m.n = binio::get_u32(in, "EMBF row count");
    m.d = binio::get_u32(in, "EMBF dimension");
    const auto tag_len = binio::get_u32(in, "EMBF tag length");
    m.source_model = binio::get_string(in, tag_len, "EMBF model tag");
    if (m.n == 0 || m.d == 0) {
        fail(ErrorKind::InvalidArgument, "EMBF header declares an empty matrix");
    }
    m.data = binio::get_f32_array(in, m.n * m.d, "EMBF payload");
    validate(m);
    return m;
}

inline EmbeddingMatrix read_embeddings(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::Io, "cannot open '" + path + "'");
    }
    return read_embeddings(in);
}

// ---- CSV interop -----------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

} // namespace detail

inline EmbeddingMatrix read_embeddings_csv(std::istream & in) {
    EmbeddingMatrix m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view content = detail::trim(line);
        if (content.empty()) {
            continue;
        }
        std::size_t arity = 0;
        std::size_t pos = 0;
        for (;;) {
            const auto comma = content.find(',', pos);
            const auto token = detail::trim(content.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                                                 : comma - pos));
            float v = 0.0f;
            const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
            if (token.empty() || res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
                fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": cannot parse '" + std::string(token) + "'");
            }
            if (!std::isfinite(v)) {
                fail(ErrorKind::NonFinite, "line " + std::to_string(line_no) + ": non-finite value");
            }
            m.data.push_back(v);
            ++arity;
            if (comma == std::string_view::npos) {
                break;
            }
            pos = comma + 1;
        }
        if (m.n == 0) {
            m.d = arity;
        } else if (arity != m.d) {
            fail(ErrorKind::RaggedRows, "line " + std::to_string(line_no) + " has " + std::to_string(arity) +
                                            " columns, expected " + std::to_string(m.d));
        }
        ++m.n;
    }
    validate(m);
    return m;
}

inline EmbeddingMatrix read_embeddings_csv(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::Io, "cannot open '" + path + "'");
    }
    return read_embeddings_csv(in);
}

/// Writes any row-major real matrix in the CSV form read_embeddings_csv accepts.
template <typename T>
void write_matrix_csv(std::span<const T> values, std::size_t cols, std::ostream & out) {
    char buf[40];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(values[i]));
        out << buf << ((i + 1) % cols == 0 ? '\n' : ',');
    }
}

// ---- Clustering report -----------------------------------------------------

struct ReportRow {
    std::string model_name;
    double silhouette_true = 0.0;
    double dbi_true = 0.0;
    double silhouette_kmeans = 0.0;
    double dbi_kmeans = 0.0;
};

inline constexpr std::string_view report_header =
    "model_name,silhouette_true_groups,davies_bouldin_true_groups,silhouette_kmeans,davies_bouldin_kmeans";

inline std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s = buf;
    if (s == "-0.0000") {
        s = "0.0000";
    }
    return s;
}

inline std::string format_report_row(const ReportRow & row) {
    if (row.model_name.find_first_of(",\n\r") != std::string::npos) {
        fail(ErrorKind::InvalidArgument, "model name may not contain commas or newlines");
    }
    return row.model_name + ',' + format_metric(row.silhouette_true) + ',' + format_metric(row.dbi_true) + ',' +
           format_metric(row.silhouette_kmeans) + ',' + format_metric(row.dbi_kmeans);
}

inline void write_report(std::span<const ReportRow> rows, std::ostream & out) {
    if (rows.empty()) {
        fail(ErrorKind::InvalidArgument, "report needs at least one row");
    }
    out << report_header << '\n';
    for (const auto & row : rows) {
        out << format_report_row(row) << '\n';
    }
}

inline void write_report(std::span<const ReportRow> rows, const std::string & path) {
    std::ostringstream buf;
    write_report(rows, buf);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
    }
    out << buf.str();
    if (!out) {
        fail(ErrorKind::Io, "write to '" + path + "' failed");
    }
}

/// Appends a row to an existing report (header checked), or creates the report.
inline void append_report_row(const ReportRow & row, const std::string & path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) {
        write_report(std::span<const ReportRow>(&row, 1), path);
        return;
    }
    std::string first;
    std::getline(probe, first);
    if (!first.empty() && first.back() == '\r') first.pop_back();
    if (first != report_header) {
        fail(ErrorKind::Parse, "'" + path + "' is not a clustering report (header mismatch)");
    }
    probe.close();
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) {
        fail(ErrorKind::Io, "cannot open '" + path + "' for appending");
    }
    out << format_report_row(row) << '\n';
}

} // namespace seqembed
