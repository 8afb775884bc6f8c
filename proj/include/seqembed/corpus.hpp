#pragma once

// Number-theoretic sequence corpora: the six families, windowing, text serialization,
// and the line-oriented SEQCORPUS manifest.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace seqembed {

enum class FamilyKind : int {
    Consecutive = 0,
    Even = 1,
    Odd = 2,
    Prime = 3,
    Recaman = 4,
    Composite = 5,
};

inline constexpr std::array<FamilyKind, 6> all_families = {
    FamilyKind::Consecutive, FamilyKind::Even, FamilyKind::Odd,
    FamilyKind::Prime, FamilyKind::Recaman, FamilyKind::Composite,
};

constexpr int family_code(FamilyKind f) { return static_cast<int>(f); }

constexpr std::string_view family_name(FamilyKind f) {
    switch (f) {
        case FamilyKind::Consecutive: return "consecutive";
        case FamilyKind::Even:        return "even";
        case FamilyKind::Odd:         return "odd";
        case FamilyKind::Prime:       return "prime";
        case FamilyKind::Recaman:     return "recaman";
        case FamilyKind::Composite:   return "composite";
    }
    return "unknown";
}

inline FamilyKind parse_family(std::string_view name) {
    for (FamilyKind f : all_families) {
        if (family_name(f) == name) {
            return f;
        }
    }
    fail(ErrorKind::InvalidArgument, "unknown sequence family '" + std::string(name) + "'");
}

inline FamilyKind family_from_code(int code) {
    if (code < 0 || code >= static_cast<int>(all_families.size())) {
        fail(ErrorKind::InvalidArgument, "family code out of range: " + std::to_string(code));
    }
    return all_families[static_cast<std::size_t>(code)];
}

struct SequenceRecord {
    FamilyKind family = FamilyKind::Consecutive;
    std::size_t chunk_index = 0;
    std::vector<std::uint64_t> values;
    std::string text;
};

struct CorpusSpec {
    std::vector<FamilyKind> families{all_families.begin(), all_families.end()};
    std::size_t sequences_per_family = 4;
    std::size_t length = 50;
    std::size_t max_chars = 20000;
};

struct Corpus {
    std::vector<SequenceRecord> records;
    std::vector<int> labels;
    CorpusSpec spec;

    std::size_t size() const { return records.size(); }
};

namespace detail {

// is_composite[i] for i in [0, bound]; 0 and 1 are neither prime nor composite.
inline std::vector<bool> composite_table(std::uint64_t bound) {
    std::vector<bool> composite(bound + 1, false);
    for (std::uint64_t p = 2; p * p <= bound; ++p) {
        if (composite[p]) {
            continue;
        }
        for (std::uint64_t m = p * p; m <= bound; m += p) {
            composite[m] = true;
        }
    }
    return composite;
}

inline std::vector<std::uint64_t> first_primes(std::size_t count) {
    // Rosser's bound p_n < n (ln n + ln ln n) for n >= 6.
    std::uint64_t bound = 15;
    if (count >= 6) {
        const double n = static_cast<double>(count);
        bound = static_cast<std::uint64_t>(n * (std::log(n) + std::log(std::log(n)))) + 1;
    }
    for (;;) {
        const auto composite = composite_table(bound);
        std::vector<std::uint64_t> out;
        out.reserve(count);
        for (std::uint64_t i = 2; i <= bound && out.size() < count; ++i) {
            if (!composite[i]) {
                out.push_back(i);
            }
        }
        if (out.size() == count) {
            return out;
        }
        bound *= 2;
    }
}

inline std::vector<std::uint64_t> first_composites(std::size_t count) {
    // The evens 4..2c+2 alone supply c composites.
    const std::uint64_t bound = 2 * static_cast<std::uint64_t>(count) + 2;
    const auto composite = composite_table(bound);
    std::vector<std::uint64_t> out;
    out.reserve(count);
    for (std::uint64_t i = 4; i <= bound && out.size() < count; ++i) {
        if (composite[i]) {
            out.push_back(i);
        }
    }
    return out;
}

inline std::vector<std::uint64_t> first_recaman(std::size_t count) {
    std::vector<std::uint64_t> out;
    out.reserve(count);
    std::vector<bool> seen(1024, false);
    auto mark = [&seen](std::uint64_t v) {
        if (v >= seen.size()) {
            seen.resize(std::max<std::size_t>(2 * seen.size(), v + 1), false);
        }
        seen[v] = true;
    };
    auto was_seen = [&seen](std::uint64_t v) { return v < seen.size() && seen[v]; };

    std::uint64_t prev = 0;
    out.push_back(prev);
    mark(prev);
    for (std::uint64_t n = 1; out.size() < count; ++n) {
        std::uint64_t next = prev + n;
        if (prev > n && !was_seen(prev - n)) {
            next = prev - n;
        }
        out.push_back(next);
        mark(next);
        prev = next;
    }
    return out;
}

} // namespace detail

// First `count` terms of the family's canonical enumeration.
inline std::vector<std::uint64_t> enumerate_family(FamilyKind family, std::size_t count) {
    if (count == 0) {
        fail(ErrorKind::InvalidArgument, "enumerate_family requires count >= 1");
    }
    std::vector<std::uint64_t> out;
    switch (family) {
        case FamilyKind::Consecutive:
            out.resize(count);
            for (std::size_t i = 0; i < count; ++i) out[i] = i + 1;
            return out;
        case FamilyKind::Even:
            out.resize(count);
            for (std::size_t i = 0; i < count; ++i) out[i] = 2 * (i + 1);
            return out;
        case FamilyKind::Odd:
            out.resize(count);
            for (std::size_t i = 0; i < count; ++i) out[i] = 2 * i + 1;
            return out;
        case FamilyKind::Prime:     return detail::first_primes(count);
        case FamilyKind::Recaman:   return detail::first_recaman(count);
        case FamilyKind::Composite: return detail::first_composites(count);
    }
    fail(ErrorKind::InvalidArgument, "unknown family");
}

/// Joins values with ", ". When the full text would exceed `max_chars`, whole numbers are
/// dropped from the end so the result stays parseable; a first number that alone does not
/// fit is an Unserializable error.
inline std::string serialize_sequence(std::span<const std::uint64_t> values, std::size_t max_chars) {
    if (values.empty()) {
        fail(ErrorKind::InvalidArgument, "cannot serialize an empty sequence");
    }
    std::string text;
    std::array<char, 24> buf{};
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), values[i]);
        const std::size_t digits = static_cast<std::size_t>(res.ptr - buf.data());
        const std::size_t needed = text.size() + (i == 0 ? 0 : 2) + digits;
        if (needed > max_chars) {
            if (i == 0) {
                fail(ErrorKind::Unserializable,
                     "first value needs " + std::to_string(digits) + " chars but the cap is " +
                         std::to_string(max_chars));
            }
            break;
        }
        if (i != 0) {
            text += ", ";
        }
        text.append(buf.data(), digits);
    }
    return text;
}

/// Inverse of serialize_sequence (for the possibly truncated prefix it kept).
inline std::vector<std::uint64_t> parse_sequence_text(std::string_view text) {
    std::vector<std::uint64_t> values;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t sep = text.find(", ", pos);
        const std::string_view token =
            text.substr(pos, sep == std::string_view::npos ? std::string_view::npos : sep - pos);
        std::uint64_t v = 0;
        const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
        if (token.empty() || res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
            fail(ErrorKind::Parse, "bad sequence token '" + std::string(token) + "'");
        }
        values.push_back(v);
        if (sep == std::string_view::npos) {
            break;
        }
        pos = sep + 2;
    }
    return values;
}

inline std::vector<SequenceRecord> generate_family_windows(FamilyKind family, std::size_t window_count,
                                                           std::size_t length,
                                                           std::size_t max_chars = 20000) {
    if (window_count == 0 || length == 0) {
        fail(ErrorKind::InvalidArgument, "window_count and length must be >= 1");
    }
    const auto terms = enumerate_family(family, window_count * length);
    std::vector<SequenceRecord> records;
    records.reserve(window_count);
    for (std::size_t k = 0; k < window_count; ++k) {
        SequenceRecord rec;
        rec.family = family;
        rec.chunk_index = k;
        rec.values.assign(terms.begin() + static_cast<std::ptrdiff_t>(k * length),
                          terms.begin() + static_cast<std::ptrdiff_t>((k + 1) * length));
        rec.text = serialize_sequence(rec.values, max_chars);
        records.push_back(std::move(rec));
    }
    return records;
}

inline Corpus build_corpus(const CorpusSpec & spec) {
    if (spec.families.empty()) {
        fail(ErrorKind::InvalidArgument, "corpus spec lists no families");
    }
    Corpus corpus;
    corpus.spec = spec;
    for (FamilyKind f : spec.families) {
        for (auto & rec : generate_family_windows(f, spec.sequences_per_family, spec.length, spec.max_chars)) {
            corpus.labels.push_back(family_code(f));
            corpus.records.push_back(std::move(rec));
        }
    }
    return corpus;
}

// ---- SEQCORPUS manifest ----------------------------------------------------

inline constexpr std::string_view manifest_header = "SEQCORPUS 1";

inline void write_manifest(const Corpus & corpus, std::ostream & out) {
    out << manifest_header << '\n';
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        const auto & rec = corpus.records[i];
        out << corpus.labels[i] << '\t' << family_name(rec.family) << '\t' << rec.chunk_index << '\t'
            << rec.text << '\n';
    }
}

inline void write_manifest(const Corpus & corpus, const std::string & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
    }
    write_manifest(corpus, out);
    if (!out) {
        fail(ErrorKind::Io, "write to '" + path + "' failed");
    }
}

/// Parses a manifest. Record values are recovered from the text column; spec.families lists
/// families in order of first appearance.
inline Corpus read_manifest(std::istream & in) {
    std::string line;
    if (!std::getline(in, line) || line != manifest_header) {
        fail(ErrorKind::BadMagic, "manifest must start with '" + std::string(manifest_header) + "'");
    }
    Corpus corpus;
    corpus.spec.families.clear();
    std::size_t line_no = 1;
    std::size_t max_chunk = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::array<std::string_view, 4> cols;
        std::string_view rest = line;
        for (std::size_t c = 0; c < 3; ++c) {
            const auto tab = rest.find('\t');
            if (tab == std::string_view::npos) {
                fail(ErrorKind::Parse, "manifest line " + std::to_string(line_no) + " has fewer than 4 columns");
            }
            cols[c] = rest.substr(0, tab);
            rest.remove_prefix(tab + 1);
        }
        cols[3] = rest;

        int label = 0;
        std::size_t chunk = 0;
        auto r1 = std::from_chars(cols[0].data(), cols[0].data() + cols[0].size(), label);
        auto r2 = std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), chunk);
        if (r1.ec != std::errc{} || r1.ptr != cols[0].data() + cols[0].size() || r2.ec != std::errc{} ||
            r2.ptr != cols[2].data() + cols[2].size()) {
            fail(ErrorKind::Parse, "manifest line " + std::to_string(line_no) + " has a malformed number");
        }
        SequenceRecord rec;
        rec.family = parse_family(cols[1]);
        if (family_code(rec.family) != label) {
            fail(ErrorKind::Parse, "manifest line " + std::to_string(line_no) + ": label " + std::to_string(label) +
                                       " does not match family '" + std::string(cols[1]) + "'");
        }
        rec.chunk_index = chunk;
        rec.text = std::string(cols[3]);
        rec.values = parse_sequence_text(rec.text);
        if (std::find(corpus.spec.families.begin(), corpus.spec.families.end(), rec.family) ==
            corpus.spec.families.end()) {
            corpus.spec.families.push_back(rec.family);
        }
        max_chunk = std::max(max_chunk, chunk);
        corpus.labels.push_back(label);
        corpus.records.push_back(std::move(rec));
    }
    if (!corpus.records.empty()) {
        corpus.spec.sequences_per_family = max_chunk + 1;
        corpus.spec.length = corpus.records.front().values.size();
    }
    return corpus;
}

inline Corpus read_manifest(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::Io, "cannot open manifest '" + path + "'");
    }
    return read_manifest(in);
}

} // namespace seqembed
