#pragma once

// Batch commands behind the seqembed CLI. Each command computes its outputs in memory,
// writes a reproducibility stamp, then writes the outputs.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cluster.hpp"
#include "corpus.hpp"
#include "embedstore.hpp"
#include "error.hpp"
#include "featurize.hpp"
#include "merge.hpp"
#include "projection.hpp"
#include "svg.hpp"

namespace seqembed {

inline constexpr std::string_view tool_version = "seqembed 1.0.0";

using StampEntries = std::vector<std::pair<std::string, std::string>>;

inline std::string stamp_path(const std::string & output) { return output + ".stamp.txt"; }

/// Writes "<output>.stamp.txt". With `append` the section is added after earlier runs.
inline void write_stamp(const std::string & output, std::string_view command, const StampEntries & config,
                        bool append = false) {
    std::ostringstream s;
    s << "tool: " << tool_version << '\n';
    s << "command: " << command << '\n';
    s << "formats: " << manifest_header << ", EMBF " << int{embf_version} << ", TMAP " << int{tmap_version}
      << ", report " << report_header << '\n';
    for (const auto & [k, v] : config) s << k << ": " << v << '\n';
    std::ofstream out(stamp_path(output), std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!out) {
        fail(ErrorKind::Io, "cannot write reproducibility stamp for '" + output + "'");
    }
    out << s.str();
}

inline void write_text_file(const std::string & path, const std::string & content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
    }
    out << content;
    if (!out) {
        fail(ErrorKind::Io, "write to '" + path + "' failed");
    }
}

inline std::string to_text(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string join_families(const std::vector<FamilyKind> & fams) {
    std::string s;
    for (std::size_t i = 0; i < fams.size(); ++i) {
        if (i) s += ',';
        s += family_name(fams[i]);
    }
    return s;
}

inline std::map<int, std::string> family_legend(const Corpus & corpus) {
    std::map<int, std::string> names;
    for (const auto & rec : corpus.records) names[family_code(rec.family)] = std::string(family_name(rec.family));
    return names;
}

/// EMBF unless the path ends in ".csv".
inline EmbeddingMatrix load_embeddings_any(const std::string & path) {
    if (std::filesystem::path(path).extension() == ".csv") {
        return read_embeddings_csv(path);
    }
    return read_embeddings(path);
}

// ---- gen-corpus ------------------------------------------------------------

struct GenCorpusConfig {
    CorpusSpec spec;
    std::string out;
};

inline Corpus cmd_gen_corpus(const GenCorpusConfig & cfg) {
    Corpus corpus = build_corpus(cfg.spec);
    write_stamp(cfg.out, "gen-corpus",
                {{"families", join_families(cfg.spec.families)},
                 {"windows", std::to_string(cfg.spec.sequences_per_family)},
                 {"length", std::to_string(cfg.spec.length)},
                 {"max_chars", std::to_string(cfg.spec.max_chars)},
                 {"records", std::to_string(corpus.size())}});
    write_manifest(corpus, cfg.out);
    return corpus;
}

// ---- baseline-embed / synth-embed ------------------------------------------

struct BaselineEmbedConfig {
    std::string manifest;
    std::string out;
    FeaturizerParams featurizer;
};

inline EmbeddingMatrix cmd_baseline_embed(const BaselineEmbedConfig & cfg) {
    const Corpus corpus = read_manifest(cfg.manifest);
    EmbeddingMatrix m = baseline_embed(corpus, cfg.featurizer);
    write_stamp(cfg.out, "baseline-embed",
                {{"manifest", cfg.manifest},
                 {"dim", std::to_string(cfg.featurizer.dim)},
                 {"ngram_min", std::to_string(cfg.featurizer.min_n)},
                 {"ngram_max", std::to_string(cfg.featurizer.max_n)},
                 {"rows", std::to_string(m.n)}});
    write_embeddings(m, cfg.out);
    return m;
}

struct SynthEmbedConfig {
    std::string manifest;
    std::string out;
    BlobParams blobs;
};

inline EmbeddingMatrix cmd_synth_embed(const SynthEmbedConfig & cfg) {
    const Corpus corpus = read_manifest(cfg.manifest);
    EmbeddingMatrix m = planted_blobs(corpus.labels, cfg.blobs);
    write_stamp(cfg.out, "synth-embed",
                {{"manifest", cfg.manifest},
                 {"dim", std::to_string(cfg.blobs.dim)},
                 {"gap", to_text(cfg.blobs.gap)},
                 {"noise", to_text(cfg.blobs.noise)},
                 {"seed", std::to_string(cfg.blobs.seed)}});
    write_embeddings(m, cfg.out);
    return m;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateConfig {
    std::string manifest;
    std::string embeddings;
    std::string report;
    std::string model_name; // empty: the matrix's model tag
    bool append = false;
    bool normalize = false;
    KMeansParams kmeans{.k = 0}; // k = 0: number of families in the manifest
};

struct EvaluateOutcome {
    ReportRow row;
    ClusteringReport metrics;
};

inline EvaluateOutcome cmd_evaluate(const EvaluateConfig & cfg) {
    const Corpus corpus = read_manifest(cfg.manifest);
    const EmbeddingMatrix x = load_embeddings_any(cfg.embeddings);
    if (x.n != corpus.size()) {
        fail(ErrorKind::Alignment, "embeddings have " + std::to_string(x.n) + " rows but the manifest has " +
                                       std::to_string(corpus.size()) + " records");
    }
    KMeansParams params = cfg.kmeans;
    if (params.k == 0) {
        params.k = std::set<int>(corpus.labels.begin(), corpus.labels.end()).size();
    }
    EvaluateOutcome outcome;
    outcome.metrics = evaluate(x, corpus.labels, params, cfg.normalize);
    outcome.row.model_name = cfg.model_name.empty() ? (x.source_model.empty() ? "unnamed" : x.source_model)
                                                    : cfg.model_name;
    outcome.row.silhouette_true = outcome.metrics.silhouette_true;
    outcome.row.dbi_true = outcome.metrics.dbi_true;
    outcome.row.silhouette_kmeans = outcome.metrics.silhouette_kmeans;
    outcome.row.dbi_kmeans = outcome.metrics.dbi_kmeans;

    write_stamp(cfg.report, "evaluate",
                {{"manifest", cfg.manifest},
                 {"embeddings", cfg.embeddings},
                 {"model_name", outcome.row.model_name},
                 {"normalize", cfg.normalize ? "true" : "false"},
                 {"k", std::to_string(params.k)},
                 {"restarts", std::to_string(params.restarts)},
                 {"max_iterations", std::to_string(params.max_iterations)},
                 {"tolerance", to_text(params.tolerance)},
                 {"seed", std::to_string(params.seed)},
                 {"agreement_ari", to_text(outcome.metrics.agreement)}},
                cfg.append);
    if (cfg.append) {
        append_report_row(outcome.row, cfg.report);
    } else {
        write_report(std::span<const ReportRow>(&outcome.row, 1), cfg.report);
    }
    return outcome;
}

// ---- tsne ------------------------------------------------------------------

struct TsneConfig {
    std::string embeddings;
    std::string manifest; // optional; supplies colours and legend names
    std::string coords_out;
    std::string svg_out;
    std::string title;
    bool normalize = false;
    TsneParams tsne;
};

inline Projection2D cmd_tsne(const TsneConfig & cfg) {
    EmbeddingMatrix x = load_embeddings_any(cfg.embeddings);
    if (cfg.normalize) x = l2_normalized(x);
    std::vector<int> labels(x.n, 0);
    std::map<int, std::string> names{{0, "all"}};
    if (!cfg.manifest.empty()) {
        const Corpus corpus = read_manifest(cfg.manifest);
        if (corpus.size() != x.n) {
            fail(ErrorKind::Alignment, "embeddings have " + std::to_string(x.n) + " rows but the manifest has " +
                                           std::to_string(corpus.size()) + " records");
        }
        labels = corpus.labels;
        names = family_legend(corpus);
    }
    Projection2D proj = tsne(x, cfg.tsne);
    ScatterStyle style;
    style.title = cfg.title.empty() ? x.source_model : cfg.title;
    const std::string svg = render_scatter_svg(proj, labels, names, style);
    std::ostringstream coords;
    write_matrix_csv<double>(proj.coords, 2, coords);

    const StampEntries stamp{{"embeddings", cfg.embeddings},
                             {"manifest", cfg.manifest},
                             {"perplexity", to_text(proj.perplexity)},
                             {"iterations", std::to_string(cfg.tsne.iterations)},
                             {"learning_rate", to_text(cfg.tsne.learning_rate)},
                             {"early_exaggeration", to_text(cfg.tsne.early_exaggeration)},
                             {"seed", std::to_string(cfg.tsne.seed)},
                             {"final_kl", to_text(proj.final_kl)},
                             {"warnings", std::to_string(proj.warnings.size())}};
    if (!cfg.coords_out.empty()) {
        write_stamp(cfg.coords_out, "tsne", stamp);
        write_text_file(cfg.coords_out, coords.str());
    }
    if (!cfg.svg_out.empty()) {
        write_stamp(cfg.svg_out, "tsne", stamp);
        write_text_file(cfg.svg_out, svg);
    }
    return proj;
}

// ---- merge -----------------------------------------------------------------

enum class MergeMethod { Slerp, Lerp, Soup, Fold, FoldThenSoup, FoldThenSlerp };

inline MergeMethod parse_merge_method(std::string_view s) {
    if (s == "slerp") return MergeMethod::Slerp;
    if (s == "lerp") return MergeMethod::Lerp;
    if (s == "soup") return MergeMethod::Soup;
    if (s == "fold") return MergeMethod::Fold;
    if (s == "fold-then-soup") return MergeMethod::FoldThenSoup;
    if (s == "fold-then-slerp") return MergeMethod::FoldThenSlerp;
    fail(ErrorKind::InvalidArgument, "unknown merge method '" + std::string(s) + "'");
}

struct MergeConfig {
    MergeMethod method = MergeMethod::Slerp;
    std::vector<std::string> inputs;   // checkpoints for slerp / lerp / soup
    std::string base;                  // base checkpoint for the fold methods
    std::vector<std::string> adapters; // adapter TMAPs for the fold methods
    std::vector<double> weights;       // soup weights (empty: uniform)
    SlerpParams slerp;                 // slerp.t doubles as the lerp fraction
    std::string out;
    std::string report_out; // empty: <out>.report.txt
};

namespace detail {

inline MergeReport angle_report(std::string method, const std::vector<TensorMap> & models) {
    MergeReport report{std::move(method), {}};
    if (models.size() < 2) return report;
    for (const auto & [name, t] : models[0].entries) {
        const Tensor & other = models[1].entries.at(name);
        double omega = 0.0;
        bool degenerate = false;
        try {
            omega = angle_between<float>(t.data, other.data);
        } catch (const Error &) {
            degenerate = true; // zero tensor: no angle
        }
        report.tensors.push_back({name, degenerate ? 0.0 : omega, false});
    }
    return report;
}

} // namespace detail

inline MergeResult cmd_merge(const MergeConfig & cfg) {
    std::vector<TensorMap> inputs;
    for (const auto & p : cfg.inputs) inputs.push_back(load_tensormap(p));
    std::vector<LoraAdapter> adapters;
    for (const auto & p : cfg.adapters) adapters.push_back(adapter_from_tensormap(load_tensormap(p)));
    const std::span<const double> weights = cfg.weights;

    auto need_inputs = [&](std::size_t k, const char * what) {
        if (inputs.size() < k) {
            fail(ErrorKind::InvalidArgument, std::string(what) + " needs at least " + std::to_string(k) +
                                                 " checkpoints");
        }
    };
    auto need_base = [&](std::size_t k, const char * what) {
        if (cfg.base.empty() || adapters.size() < k) {
            fail(ErrorKind::InvalidArgument, std::string(what) + " needs a base checkpoint and at least " +
                                                 std::to_string(k) + " adapter(s)");
        }
    };

    MergeResult res;
    std::string method_name;
    switch (cfg.method) {
        case MergeMethod::Slerp:
            need_inputs(2, "slerp");
            res = slerp_chain(inputs, cfg.slerp);
            method_name = "slerp";
            break;
        case MergeMethod::Lerp: {
            need_inputs(2, "lerp");
            TensorMap acc = inputs[0];
            for (std::size_t i = 1; i < inputs.size(); ++i) acc = lerp_merge(acc, inputs[i], cfg.slerp.t);
            res.report = detail::angle_report("lerp t=" + to_text(cfg.slerp.t), inputs);
            res.merged = std::move(acc);
            method_name = "lerp";
            break;
        }
        case MergeMethod::Soup:
            need_inputs(2, "soup");
            res.merged = soup(inputs, weights);
            res.report = detail::angle_report("soup of " + std::to_string(inputs.size()), inputs);
            method_name = "soup";
            break;
        case MergeMethod::Fold: {
            need_base(1, "fold");
            TensorMap acc = load_tensormap(cfg.base);
            for (const auto & ad : adapters) acc = lora_fold(acc, ad);
            res.report.method = "fold of " + std::to_string(adapters.size()) + " adapter(s)";
            res.merged = std::move(acc);
            method_name = "fold";
            break;
        }
        case MergeMethod::FoldThenSoup: {
            need_base(1, "fold-then-soup");
            const TensorMap base = load_tensormap(cfg.base);
            res.merged = fold_then_soup(base, adapters, weights);
            res.report.method = "fold-then-soup of " + std::to_string(adapters.size()) + " adapter(s)";
            method_name = "fold-then-soup";
            break;
        }
        case MergeMethod::FoldThenSlerp: {
            need_base(2, "fold-then-slerp");
            const TensorMap base = load_tensormap(cfg.base);
            res = fold_then_slerp(base, adapters, cfg.slerp);
            res.report.method = "fold-then-" + res.report.method;
            method_name = "fold-then-slerp";
            break;
        }
    }

    std::string inputs_list;
    for (const auto & p : cfg.inputs) inputs_list += (inputs_list.empty() ? "" : ",") + p;
    std::string adapters_list;
    for (const auto & p : cfg.adapters) adapters_list += (adapters_list.empty() ? "" : ",") + p;
    std::string weights_list;
    for (double w : cfg.weights) weights_list += (weights_list.empty() ? "" : ",") + to_text(w);
    const std::string report_path = cfg.report_out.empty() ? cfg.out + ".report.txt" : cfg.report_out;

    write_stamp(cfg.out, "merge",
                {{"method", method_name},
                 {"inputs", inputs_list},
                 {"base", cfg.base},
                 {"adapters", adapters_list},
                 {"weights", weights_list.empty() ? "uniform" : weights_list},
                 {"t", to_text(cfg.slerp.t)},
                 {"parallel_threshold", to_text(cfg.slerp.parallel_threshold)},
                 {"antipodal_threshold", to_text(cfg.slerp.antipodal_threshold)},
                 {"report", report_path}});
    save_tensormap(res.merged, cfg.out);
    write_text_file(report_path, format_merge_report(res.report));
    return res;
}

} // namespace seqembed
