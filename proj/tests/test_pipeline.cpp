#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqembed/seqembed.hpp"

using namespace seqembed;
namespace fs = std::filesystem;

namespace {

class Workdir : public ::testing::Test {
protected:
    void SetUp() override {
        const auto * info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("seqembed_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string & name) const { return (dir_ / name).string(); }

    static std::string slurp(const std::string & p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
    }

    static int run_cli(const std::string & args) {
        const std::string cmd = std::string(SEQEMBED_CLI) + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string default_manifest() {
        const std::string m = path("corpus.tsv");
        cmd_gen_corpus({.spec = {}, .out = m});
        return m;
    }

    fs::path dir_;
};

std::size_t count_lines(const std::string & s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

} // namespace

TEST_F(Workdir, GenCorpusDefaultsAndStamp) {
    const auto m = default_manifest();
    const auto text = slurp(m);
    EXPECT_EQ(count_lines(text), 25u);
    EXPECT_TRUE(fs::exists(stamp_path(m)));
    EXPECT_NE(slurp(stamp_path(m)).find("records: 24"), std::string::npos);
}

TEST_F(Workdir, GenCorpusCliSubsetAndCap) {
    ASSERT_EQ(run_cli("gen-corpus --out " + path("e.tsv") + " --families even --windows 1 --length 3"), 0);
    EXPECT_EQ(slurp(path("e.tsv")), "SEQCORPUS 1\n1\teven\t0\t2, 4, 6\n");

    ASSERT_EQ(run_cli("gen-corpus --out " + path("c.tsv") + " --families consecutive --windows 1 --max-chars 1"), 0);
    EXPECT_EQ(slurp(path("c.tsv")), "SEQCORPUS 1\n0\tconsecutive\t0\t1\n");
    // Later windows start with multi-digit numbers that cannot fit in one character.
    EXPECT_NE(run_cli("gen-corpus --out " + path("x.tsv") + " --max-chars 1"), 0);
    EXPECT_FALSE(fs::exists(path("x.tsv")));
    EXPECT_NE(run_cli("gen-corpus --out " + path("y.tsv") + " --families fibonacci"), 0);
}

TEST_F(Workdir, BaselineEmbedIsDeterministicAndUnitNorm) {
    const auto m = default_manifest();
    cmd_baseline_embed({.manifest = m, .out = path("a.embf")});
    cmd_baseline_embed({.manifest = m, .out = path("b.embf")});
    EXPECT_EQ(slurp(path("a.embf")), slurp(path("b.embf")));
    const auto x = read_embeddings(path("a.embf"));
    ASSERT_EQ(x.n, 24u);
    for (std::size_t i = 0; i < x.n; ++i) {
        double ss = 0.0;
        for (float v : x.row(i)) ss += static_cast<double>(v) * v;
        EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-6);
    }
    // Rows 4..7 are even windows, 8..11 odd windows.
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_NE(std::vector<float>(x.row(4 + k).begin(), x.row(4 + k).end()),
                  std::vector<float>(x.row(8 + k).begin(), x.row(8 + k).end()));
    }
}

TEST_F(Workdir, EvaluatePlantedBlobs) {
    const auto m = default_manifest();
    cmd_synth_embed({.manifest = m, .out = path("blobs.embf"), .blobs = {.dim = 8, .gap = 10.0, .noise = 0.1}});
    const auto out = cmd_evaluate({.manifest = m, .embeddings = path("blobs.embf"), .report = path("r.csv")});
    EXPECT_EQ(out.metrics.agreement, 1.0);
    EXPECT_GE(out.row.silhouette_true, 0.8);
    EXPECT_EQ(out.row.silhouette_true, out.row.silhouette_kmeans);
    const auto report = slurp(path("r.csv"));
    EXPECT_EQ(report.substr(0, report.find('\n')), std::string(report_header));
    EXPECT_EQ(count_lines(report), 2u);
    EXPECT_TRUE(fs::exists(stamp_path(path("r.csv"))));
}

TEST_F(Workdir, EvaluateAppendsRowsAndRejectsMisalignment) {
    const auto m = default_manifest();
    cmd_baseline_embed({.manifest = m, .out = path("base.embf")});
    cmd_synth_embed({.manifest = m, .out = path("blobs.embf"), .blobs = {}});
    ASSERT_EQ(run_cli("evaluate --manifest " + m + " --embeddings " + path("base.embf") + " --report " +
                      path("r.csv") + " --model-name baseline --append"),
              0);
    ASSERT_EQ(run_cli("evaluate --manifest " + m + " --embeddings " + path("blobs.embf") + " --report " +
                      path("r.csv") + " --model-name blobs --append"),
              0);
    const auto report = slurp(path("r.csv"));
    EXPECT_EQ(count_lines(report), 3u);
    EXPECT_NE(report.find("\nbaseline,"), std::string::npos);
    EXPECT_NE(report.find("\nblobs,"), std::string::npos);

    write_embeddings(EmbeddingMatrix{3, 2, {1, 2, 3, 4, 5, 6}, "short"}, path("short.embf"));
    try {
        cmd_evaluate({.manifest = m, .embeddings = path("short.embf"), .report = path("bad.csv")});
        FAIL();
    } catch (const Error & e) {
        EXPECT_EQ(e.kind(), ErrorKind::Alignment);
    }
    EXPECT_FALSE(fs::exists(path("bad.csv")));
    EXPECT_EQ(run_cli("evaluate --manifest " + m + " --embeddings " + path("short.embf") + " --report " +
                      path("bad.csv")),
              1);
}

TEST_F(Workdir, EvaluateAcceptsCsvEmbeddings) {
    const auto m = default_manifest();
    const auto x = planted_blobs(build_corpus({}).labels, {});
    std::ofstream csv(path("x.csv"));
    write_matrix_csv<float>(x.data, x.d, csv);
    csv.close();
    const auto out = cmd_evaluate({.manifest = m, .embeddings = path("x.csv"), .report = path("r.csv"),
                                   .model_name = "csv-input"});
    EXPECT_EQ(out.metrics.agreement, 1.0);
    EXPECT_NE(slurp(path("r.csv")).find("\ncsv-input,"), std::string::npos);
}

TEST_F(Workdir, TsneWritesSvgAndCoords) {
    const auto m = default_manifest();
    cmd_baseline_embed({.manifest = m, .out = path("b.embf")});
    const std::string args = "tsne --embeddings " + path("b.embf") + " --manifest " + m + " --seed 5 --svg ";
    ASSERT_EQ(run_cli(args + path("one.svg") + " --coords " + path("one.csv")), 0);
    ASSERT_EQ(run_cli(args + path("two.svg")), 0);
    const auto svg = slurp(path("one.svg"));
    EXPECT_EQ(svg, slurp(path("two.svg")));
    std::size_t points = 0, legend = 0;
    for (auto p = svg.find("data-label="); p != std::string::npos; p = svg.find("data-label=", p + 1)) ++points;
    for (auto p = svg.find("legend-entry"); p != std::string::npos; p = svg.find("legend-entry", p + 1)) ++legend;
    EXPECT_EQ(points, 24u);
    EXPECT_EQ(legend, 6u);
    const auto coords = read_embeddings_csv(path("one.csv"));
    EXPECT_EQ(coords.n, 24u);
    EXPECT_EQ(coords.d, 2u);
    EXPECT_TRUE(fs::exists(stamp_path(path("one.svg"))));

    write_embeddings(EmbeddingMatrix{2, 2, {1, 2, 3, 4}, "tiny"}, path("tiny.embf"));
    EXPECT_NE(run_cli("tsne --embeddings " + path("tiny.embf") + " --svg " + path("tiny.svg")), 0);
    EXPECT_FALSE(fs::exists(path("tiny.svg")));
}

TEST_F(Workdir, MergeCommands) {
    Rng rng(5);
    auto make = [&](std::uint64_t) {
        TensorMap m;
        for (const char * name : {"layer.0.weight", "layer.1.weight"}) {
            Tensor t{{3, 4}, std::vector<float>(12)};
            for (float & v : t.data) v = static_cast<float>(rng.normal());
            m.entries[name] = t;
        }
        return m;
    };
    const auto a = make(1), b = make(2);
    save_tensormap(a, path("a.tmap"));
    save_tensormap(b, path("b.tmap"));

    ASSERT_EQ(run_cli("merge --method slerp --t 0 --inputs " + path("a.tmap") + "," + path("b.tmap") + " --out " +
                      path("s0.tmap")),
              0);
    EXPECT_EQ(slurp(path("s0.tmap")), slurp(path("a.tmap")));
    EXPECT_NE(slurp(path("s0.tmap.report.txt")).find("layer.0.weight\t"), std::string::npos);

    ASSERT_EQ(run_cli("merge --method soup --inputs " + path("a.tmap") + "," + path("a.tmap") + "," + path("a.tmap") +
                      " --out " + path("soup.tmap")),
              0);
    EXPECT_EQ(slurp(path("soup.tmap")), slurp(path("a.tmap")));

    LoraAdapter ad1, ad2;
    ad1.factors["layer.0.weight"] = LoraFactor{Tensor{{1, 4}, {1, 2, 3, 4}}, Tensor{{3, 1}, {1, 0, -1}}, 2.0};
    ad2.factors["layer.1.weight"] = LoraFactor{Tensor{{2, 4}, {1, 0, 0, 1, 0, 1, 1, 0}},
                                               Tensor{{3, 2}, {0.5f, 0.5f, -1, 1, 0, 2}}, 8.0};
    save_tensormap(adapter_to_tensormap(ad1), path("ad1.tmap"));
    save_tensormap(adapter_to_tensormap(ad2), path("ad2.tmap"));
    const std::string fold_args = " --base " + path("a.tmap") + " --adapters " + path("ad1.tmap") + "," +
                                  path("ad2.tmap");
    ASSERT_EQ(run_cli("merge --method fold-then-soup" + fold_args + " --out " + path("fs.tmap")), 0);
    const auto manual = soup(std::vector<TensorMap>{lora_fold(a, ad1), lora_fold(a, ad2)});
    EXPECT_TRUE(bit_equal(load_tensormap(path("fs.tmap")), manual));

    ASSERT_EQ(run_cli("merge --method fold-then-slerp --t 0.5" + fold_args + " --out " + path("fsl.tmap")), 0);
    EXPECT_TRUE(bit_equal(load_tensormap(path("fsl.tmap")),
                          slerp_merge(lora_fold(a, ad1), lora_fold(a, ad2), {.t = 0.5}).merged));

    ASSERT_EQ(run_cli("merge --method fold --base " + path("a.tmap") + " --adapters " + path("ad1.tmap") +
                      " --out " + path("f.tmap")),
              0);
    EXPECT_TRUE(bit_equal(load_tensormap(path("f.tmap")), lora_fold(a, ad1)));

    ASSERT_EQ(run_cli("merge --method lerp --t 0.5 --inputs " + path("a.tmap") + "," + path("b.tmap") + " --out " +
                      path("l.tmap")),
              0);
    EXPECT_TRUE(bit_equal(load_tensormap(path("l.tmap")), soup(std::vector<TensorMap>{a, b})));

    // Structural mismatch surfaces the merge error and a non-zero exit.
    TensorMap other = a;
    other.entries.erase("layer.1.weight");
    save_tensormap(other, path("other.tmap"));
    EXPECT_EQ(run_cli("merge --method slerp --inputs " + path("a.tmap") + "," + path("other.tmap") + " --out " +
                      path("bad.tmap")),
              1);
    EXPECT_FALSE(fs::exists(path("bad.tmap")));
    EXPECT_NE(run_cli("merge --method slerp --inputs " + path("a.tmap") + " --out " + path("bad.tmap")), 0);
}

TEST_F(Workdir, EndToEndRerunIsByteIdentical) {
    auto run_all = [&](const std::string & tag) {
        const std::string m = path(tag + ".tsv"), e = path(tag + ".embf"), r = path(tag + ".csv"),
                          s = path(tag + ".svg");
        EXPECT_EQ(run_cli("gen-corpus --out " + m), 0);
        EXPECT_EQ(run_cli("baseline-embed --manifest " + m + " --out " + e), 0);
        EXPECT_EQ(run_cli("evaluate --manifest " + m + " --embeddings " + e + " --report " + r + " --model-name x"), 0);
        EXPECT_EQ(run_cli("tsne --embeddings " + e + " --manifest " + m + " --svg " + s), 0);
        return slurp(m) + slurp(e) + slurp(r) + slurp(s);
    };
    EXPECT_EQ(run_all("first"), run_all("second"));
}
