#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seqembed/seqembed.hpp"

using namespace seqembed;

namespace {

std::vector<FamilyKind> parse_family_list(const std::vector<std::string> & names) {
    std::vector<FamilyKind> out;
    for (const auto & name : names) out.push_back(parse_family(name));
    return out;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"Sequence-corpus embedding evaluation and checkpoint merging"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version));

    // gen-corpus
    GenCorpusConfig gen;
    std::vector<std::string> family_names;
    auto * gen_cmd = app.add_subcommand("gen-corpus", "Generate the sequence corpus manifest");
    gen_cmd->add_option("--out", gen.out, "Manifest path")->required();
    gen_cmd->add_option("--families", family_names,
                        "Comma-separated families (consecutive,even,odd,prime,recaman,composite)")
        ->delimiter(',');
    gen_cmd->add_option("--windows", gen.spec.sequences_per_family, "Sequences per family")->capture_default_str();
    gen_cmd->add_option("--length", gen.spec.length, "Values per sequence")->capture_default_str();
    gen_cmd->add_option("--max-chars", gen.spec.max_chars, "Character cap per serialized sequence")
        ->capture_default_str();

    // baseline-embed
    BaselineEmbedConfig base_embed;
    auto * base_cmd = app.add_subcommand("baseline-embed", "Embed a manifest with the hashed character n-gram featurizer");
    base_cmd->add_option("--manifest", base_embed.manifest, "Corpus manifest")->required();
    base_cmd->add_option("--out", base_embed.out, "EMBF output path")->required();
    base_cmd->add_option("--dim", base_embed.featurizer.dim, "Feature dimension")->capture_default_str();
    base_cmd->add_option("--ngram-min", base_embed.featurizer.min_n, "Smallest n-gram")->capture_default_str();
    base_cmd->add_option("--ngram-max", base_embed.featurizer.max_n, "Largest n-gram")->capture_default_str();

    // synth-embed
    SynthEmbedConfig synth;
    auto * synth_cmd = app.add_subcommand("synth-embed", "Write planted Gaussian-blob embeddings, one blob per family");
    synth_cmd->add_option("--manifest", synth.manifest, "Corpus manifest")->required();
    synth_cmd->add_option("--out", synth.out, "EMBF output path")->required();
    synth_cmd->add_option("--dim", synth.blobs.dim, "Embedding dimension")->capture_default_str();
    synth_cmd->add_option("--gap", synth.blobs.gap, "Distance between blob centres")->capture_default_str();
    synth_cmd->add_option("--noise", synth.blobs.noise, "Per-coordinate noise stddev")->capture_default_str();
    synth_cmd->add_option("--seed", synth.blobs.seed, "Random seed")->capture_default_str();

    // evaluate
    EvaluateConfig eval;
    auto * eval_cmd = app.add_subcommand("evaluate", "Silhouette / Davies-Bouldin under true and KMeans labels");
    eval_cmd->add_option("--manifest", eval.manifest, "Corpus manifest (true labels)")->required();
    eval_cmd->add_option("--embeddings", eval.embeddings, "EMBF file, or CSV when the name ends in .csv")->required();
    eval_cmd->add_option("--report", eval.report, "Report CSV path")->required();
    eval_cmd->add_option("--model-name", eval.model_name, "Row label (default: the embedding model tag)");
    eval_cmd->add_flag("--append", eval.append, "Append a row to an existing report instead of overwriting");
    eval_cmd->add_flag("--normalize", eval.normalize, "L2-normalize rows before clustering");
    eval_cmd->add_option("--k", eval.kmeans.k, "KMeans clusters (0: number of families)")->capture_default_str();
    eval_cmd->add_option("--restarts", eval.kmeans.restarts, "KMeans restarts")->capture_default_str();
    eval_cmd->add_option("--max-iterations", eval.kmeans.max_iterations, "Lloyd iterations per restart")
        ->capture_default_str();
    eval_cmd->add_option("--tolerance", eval.kmeans.tolerance, "Relative inertia change to stop")->capture_default_str();
    eval_cmd->add_option("--seed", eval.kmeans.seed, "KMeans seed")->capture_default_str();
    eval_cmd->add_option("--threads", eval.kmeans.threads, "Workers for KMeans restarts")->capture_default_str();

    // tsne
    TsneConfig ts;
    std::optional<double> perplexity;
    auto * tsne_cmd = app.add_subcommand("tsne", "Exact t-SNE projection to 2D with an SVG scatter");
    tsne_cmd->add_option("--embeddings", ts.embeddings, "EMBF file, or CSV when the name ends in .csv")->required();
    tsne_cmd->add_option("--manifest", ts.manifest, "Corpus manifest for colours and legend");
    tsne_cmd->add_option("--coords", ts.coords_out, "CSV output for the 2D coordinates");
    tsne_cmd->add_option("--svg", ts.svg_out, "SVG scatter output");
    tsne_cmd->add_option("--title", ts.title, "Plot title (default: the embedding model tag)");
    tsne_cmd->add_flag("--normalize", ts.normalize, "L2-normalize rows first");
    tsne_cmd->add_option("--perplexity", perplexity, "Perplexity (default: 30, or 10 below 50 samples)");
    tsne_cmd->add_option("--iterations", ts.tsne.iterations, "Gradient steps")->capture_default_str();
    tsne_cmd->add_option("--learning-rate", ts.tsne.learning_rate, "Learning rate")->capture_default_str();
    tsne_cmd->add_option("--exaggeration", ts.tsne.early_exaggeration, "Early exaggeration factor")
        ->capture_default_str();
    tsne_cmd->add_option("--seed", ts.tsne.seed, "Initialization seed")->capture_default_str();

    // merge
    MergeConfig mg;
    std::string method = "slerp";
    auto * merge_cmd = app.add_subcommand("merge", "Merge TMAP checkpoints (slerp, lerp, soup, LoRA folding)");
    merge_cmd->add_option("--method", method, "slerp | lerp | soup | fold | fold-then-soup | fold-then-slerp")
        ->check(CLI::IsMember({"slerp", "lerp", "soup", "fold", "fold-then-soup", "fold-then-slerp"}))
        ->capture_default_str();
    merge_cmd->add_option("--inputs", mg.inputs, "Checkpoints for slerp / lerp / soup")->delimiter(',');
    merge_cmd->add_option("--base", mg.base, "Base checkpoint for the fold methods");
    merge_cmd->add_option("--adapters", mg.adapters, "LoRA adapter TMAPs for the fold methods")->delimiter(',');
    merge_cmd->add_option("--weights", mg.weights, "Soup weights (default uniform)")->delimiter(',');
    merge_cmd->add_option("--t", mg.slerp.t, "Interpolation fraction in [0, 1]")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    merge_cmd->add_option("--parallel-threshold", mg.slerp.parallel_threshold, "Radians below which SLERP falls back")
        ->capture_default_str();
    merge_cmd->add_option("--antipodal-threshold", mg.slerp.antipodal_threshold,
                          "Radians from pi within which SLERP falls back")
        ->capture_default_str();
    merge_cmd->add_option("--out", mg.out, "Merged TMAP path")->required();
    merge_cmd->add_option("--report", mg.report_out, "Merge report path (default: <out>.report.txt)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_cmd) {
            if (!family_names.empty()) gen.spec.families = parse_family_list(family_names);
            const Corpus corpus = cmd_gen_corpus(gen);
            std::printf("wrote %zu records to %s\n", corpus.size(), gen.out.c_str());
        } else if (*base_cmd) {
            const auto m = cmd_baseline_embed(base_embed);
            std::printf("wrote %zux%zu embeddings to %s\n", m.n, m.d, base_embed.out.c_str());
        } else if (*synth_cmd) {
            const auto m = cmd_synth_embed(synth);
            std::printf("wrote %zux%zu embeddings to %s\n", m.n, m.d, synth.out.c_str());
        } else if (*eval_cmd) {
            const auto out = cmd_evaluate(eval);
            std::printf("%s\n%s\nagreement (ARI): %.4f\n", std::string(report_header).c_str(),
                        format_report_row(out.row).c_str(), out.metrics.agreement);
        } else if (*tsne_cmd) {
            ts.tsne.perplexity = perplexity;
            const auto proj = cmd_tsne(ts);
            for (const auto & w : proj.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            std::printf("t-SNE: n=%zu perplexity=%.4g final KL=%.6f\n", proj.n, proj.perplexity, proj.final_kl);
        } else if (*merge_cmd) {
            mg.method = parse_merge_method(method);
            const auto res = cmd_merge(mg);
            std::size_t fallbacks = 0;
            for (const auto & t : res.report.tensors) fallbacks += t.fallback ? 1 : 0;
            std::printf("merged %zu tensors (%s) into %s, %zu SLERP fallback(s)\n", res.merged.size(),
                        res.report.method.c_str(), mg.out.c_str(), fallbacks);
        }
    } catch (const Error & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
