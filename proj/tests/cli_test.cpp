#include "commands.hpp"
#include "dewarp/coord_map.hpp"
#include "dewarp/geometry.hpp"
#include "dewarp/io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace dewarp {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative path -> contents, for every file below root.
std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return files;
}

bool has_tmp(const fs::path& root) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.path().string().find(".tmp") != std::string::npos) return true;
    }
    return false;
}

std::string line_starting(const std::string& text, const std::string& prefix) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) == 0) return line;
    }
    return {};
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

// Small canvas and a short run keep the pipeline tests quick.
CliRun synth_small(const fs::path& out, int count, int seed, const std::string& jobs = "1") {
    return run({"synth", "--count", std::to_string(count), "--seed", std::to_string(seed), "--out", out.string(),
                "--canvas", "96", "--jobs", jobs});
}

CliRun dewarp_small(const fs::path& sample, const fs::path& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"dewarp", "--sample", sample.string(), "--out", out.string(), "--iters", "30"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
}

TEST(CliArgs, BadArgumentsExitTwo) {
    TempDir tmp("cli");
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"synth", "--out", tmp.path().string()}).code, 2);  // --count missing
    EXPECT_EQ(run({"synth", "--count", "3", "--out", tmp.path().string(), "--bogus"}).code, 2);
    EXPECT_EQ(run({"synth", "--count", "3", "--out", tmp.path().string(), "--regimes", "complete:0.5,sideways:0.5"}).code,
              2);
    EXPECT_EQ(run({"synth", "--count", "3", "--out", tmp.path().string(), "--regimes", "complete:-1"}).code, 2);
    EXPECT_EQ(run({"eval", "--out", (tmp.path() / "r.csv").string()}).code, 2);
}

TEST(CliArgs, HelpAndVersionExitZero) {
    const CliRun h = run({"--help"});
    EXPECT_EQ(h.code, 0);
    EXPECT_NE(h.out.find("synth"), std::string::npos);
    EXPECT_EQ(run({"--version"}).code, 0);
}

TEST(CliArgs, ConfigFile) {
    TempDir tmp("cli");
    const fs::path cfg = tmp.path() / "synth.cfg";
    {
        std::ofstream f(cfg);
        f << "# batch\ncount = 2\nseed=3\ncanvas=96\n";
    }
    const fs::path out = tmp.path() / "a";
    const CliRun r = run({"synth", "--config", cfg.string(), "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(out / "0001" / "flat.png"));
    EXPECT_FALSE(fs::exists(out / "0002"));

    // Flags on the command line win over the file.
    const fs::path out2 = tmp.path() / "b";
    ASSERT_EQ(run({"synth", "--config", cfg.string(), "--count", "1", "--out", out2.string()}).code, 0);
    EXPECT_FALSE(fs::exists(out2 / "0001"));
    // Same seed through either route gives the same first sample.
    EXPECT_EQ(slurp(out / "0000" / "bm_gt.dwmap"), slurp(out2 / "0000" / "bm_gt.dwmap"));

    {
        std::ofstream f(cfg);
        f << "count=2\nflavour=strange\n";
    }
    EXPECT_EQ(run({"synth", "--config", cfg.string(), "--out", out.string()}).code, 2);
    {
        std::ofstream f(cfg);
        f << "count 2\n";
    }
    EXPECT_EQ(run({"synth", "--config", cfg.string(), "--out", out.string()}).code, 2);
    EXPECT_EQ(run({"synth", "--config", (tmp.path() / "none.cfg").string(), "--out", out.string()}).code, 2);
}

TEST(CliArgs, SeedFromEnvironment) {
    TempDir tmp("cli");
    ASSERT_EQ(synth_small(tmp.path() / "flag", 2, 41).code, 0);
    ::setenv("DEWARP_SEED", "41", 1);
    const CliRun r = run({"synth", "--count", "2", "--out", (tmp.path() / "env").string(), "--canvas", "96"});
    ::unsetenv("DEWARP_SEED");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(snapshot(tmp.path() / "flag"), snapshot(tmp.path() / "env"));
}

TEST(CliSynth, LayoutAndManifest) {
    TempDir tmp("cli");
    const CliRun r = synth_small(tmp.path(), 4, 11);
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"distorted.png", "dm_gt.png", "flat.png", "m_gt.png", "bm_gt.dwmap", "fm_gt.dwmap",
                          "textlines.txt", "meta.txt"}) {
        EXPECT_TRUE(fs::exists(tmp.path() / "0003" / f)) << f;
    }
    const std::string manifest = slurp(tmp.path() / "manifest.csv");
    EXPECT_EQ(manifest.rfind("sample,regime,seed\n", 0), 0u);
    EXPECT_EQ(std::count(manifest.begin(), manifest.end(), '\n'), 5);
    EXPECT_FALSE(has_tmp(tmp.path()));
}

TEST(CliSynth, ByteIdenticalAcrossRunsAndJobs) {
    TempDir tmp("cli");
    ASSERT_EQ(synth_small(tmp.path() / "a", 10, 7).code, 0);
    ASSERT_EQ(synth_small(tmp.path() / "b", 10, 7).code, 0);
    ASSERT_EQ(synth_small(tmp.path() / "c", 10, 7, "3").code, 0);
    const auto a = snapshot(tmp.path() / "a");
    EXPECT_EQ(a.size(), 10u * 8u + 1u);
    EXPECT_EQ(a, snapshot(tmp.path() / "b"));
    EXPECT_EQ(a, snapshot(tmp.path() / "c"));
}

class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir("cli-pipeline");
        ASSERT_EQ(synth_small(dir_->path() / "s", 2, 5).code, 0);
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static fs::path sample() { return dir_->path() / "s" / "0000"; }
    static fs::path root() { return dir_->path(); }

    static TempDir* dir_;
};

TempDir* CliPipeline::dir_ = nullptr;

TEST_F(CliPipeline, DewarpWritesOutputsDeterministically) {
    const CliRun a = dewarp_small(sample(), root() / "d1");
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out.find("terms=l_m+l_t"), std::string::npos) << a.out;
    EXPECT_NE(a.out.find("self-supervised"), std::string::npos);
    for (const char* f : {"rectified.png", "bm_pred.dwmap", "trace.csv", "summary.txt"}) {
        EXPECT_TRUE(fs::exists(root() / "d1" / f)) << f;
    }
    const CliRun b = dewarp_small(sample(), root() / "d2");
    ASSERT_EQ(b.code, 0);
    EXPECT_EQ(snapshot(root() / "d1"), snapshot(root() / "d2"));
    EXPECT_FALSE(has_tmp(root() / "d1"));
}

TEST_F(CliPipeline, DewarpSupervisedReportsEndpointError) {
    const CliRun r = dewarp_small(sample(), root() / "sup", {"--supervised", "--no-text", "--no-margin"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("mode=supervised"), std::string::npos);
    EXPECT_NE(r.out.find("terms=l_b\n"), std::string::npos);
    EXPECT_NE(r.out.find("endpoint_error_px="), std::string::npos);
}

TEST_F(CliPipeline, DewarpFailures) {
    // No term left: the ground-truth map alone is not used without --supervised.
    EXPECT_EQ(dewarp_small(sample(), root() / "x", {"--no-text", "--no-margin"}).code, 5);
    EXPECT_EQ(run({"dewarp", "--image", (root() / "missing.png").string(), "--out", (root() / "x").string()}).code, 6);
    EXPECT_EQ(run({"dewarp", "--image", (sample() / "distorted.png").string(), "--out", (root() / "x").string(),
                   "--supervised"})
                  .code,
              2);
    EXPECT_EQ(run({"dewarp", "--out", (root() / "x").string()}).code, 2);
    EXPECT_EQ(dewarp_small(sample(), root() / "x", {"--lr", "-1"}).code, 2);
    EXPECT_FALSE(fs::exists(root() / "x" / "bm_pred.dwmap"));
}

TEST_F(CliPipeline, EvalIdenticalImagesIsZero) {
    const fs::path csv = root() / "same.csv";
    const CliRun r = run({"eval", "--rectified", (sample() / "flat.png").string(), "--gt", (sample() / "flat.png").string(),
                       "--id", "flat", "--out", csv.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string report = slurp(csv);
    EXPECT_EQ(report.rfind("image_id,mode,ms_ssim,ld,ad,ed,cer\n", 0), 0u);
    EXPECT_EQ(line_starting(report, "flat,"), "flat,estimated-flow,1.000000,0.000000,0.000000,-,-");
    EXPECT_EQ(line_starting(report, "MEAN,"), "MEAN,estimated-flow,1.000000,0.000000,0.000000,-,-");
}

TEST_F(CliPipeline, EvalModeAndTexts) {
    const fs::path texts = root() / "texts.tsv";
    {
        std::ofstream f(texts);
        f << "ab\tabc\nkitten\tsitting\n";
    }
    CoordMap id = identity_map(96, 96);
    io::write_dwmap(root() / "id.dwmap", id);
    io::write_dwmap(root() / "idf.dwmap", identity_map(96, 96, MapKind::Forward));
    const fs::path csv = root() / "exact.csv";
    const CliRun r = run({"eval", "--rectified", (sample() / "flat.png").string(), "--gt", (sample() / "flat.png").string(),
                       "--bm-pred", (root() / "id.dwmap").string(), "--fm-gt", (root() / "idf.dwmap").string(),
                       "--texts", texts.string(), "--flow", "exact", "--out", csv.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string row = line_starting(slurp(csv), "image,");
    // Maps are stored as float32, so the identity flow is exact only to ~1e-5 px.
    const std::vector<std::string> col = split_csv(row);
    ASSERT_EQ(col.size(), 7u) << row;
    EXPECT_EQ(col[1], "exact-flow");
    EXPECT_EQ(col[2], "1.000000");
    EXPECT_LT(std::stod(col[3]), 1e-4);
    EXPECT_LT(std::stod(col[4]), 1e-4);
    EXPECT_EQ(col[5], "2.000000");  // (1 + 3) / 2

    // Exact mode without maps is an input error; estimated mode ignores them.
    EXPECT_EQ(run({"eval", "--rectified", (sample() / "flat.png").string(), "--gt", (sample() / "flat.png").string(),
                   "--flow", "exact", "--out", csv.string()})
                  .code,
              6);
    const CliRun e = run({"eval", "--rectified", (sample() / "flat.png").string(), "--gt", (sample() / "flat.png").string(),
                       "--bm-pred", (root() / "id.dwmap").string(), "--fm-gt", (root() / "idf.dwmap").string(),
                       "--flow", "estimated", "--out", csv.string()});
    ASSERT_EQ(e.code, 0);
    EXPECT_EQ(line_starting(slurp(csv), "image,").rfind("image,estimated-flow,", 0), 0u);
    EXPECT_EQ(run({"eval", "--rectified", (sample() / "flat.png").string(), "--gt", (sample() / "flat.png").string(),
                   "--flow", "sideways", "--out", csv.string()})
                  .code,
              2);
}

TEST_F(CliPipeline, EvalBatchAndJobs) {
    TempDir preds("cli-preds");
    for (const char* n : {"0000", "0001"}) {
        ASSERT_EQ(dewarp_small(root() / "s" / n, preds.path() / n).code, 0);
    }
    const fs::path c1 = root() / "batch1.csv";
    const fs::path c2 = root() / "batch2.csv";
    ASSERT_EQ(run({"eval", "--samples", (root() / "s").string(), "--preds", preds.path().string(), "--out", c1.string()})
                  .code,
              0);
    ASSERT_EQ(run({"eval", "--samples", (root() / "s").string(), "--preds", preds.path().string(), "--out", c2.string(),
                   "--jobs", "2"})
                  .code,
              0);
    const std::string report = slurp(c1);
    EXPECT_EQ(report, slurp(c2));
    EXPECT_EQ(line_starting(report, "0001,").rfind("0001,exact-flow,", 0), 0u) << report;
    EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 4);

    EXPECT_EQ(run({"eval", "--samples", (root() / "s").string(), "--out", c1.string()}).code, 2);
    EXPECT_EQ(run({"eval", "--samples", (root() / "nope").string(), "--preds", preds.path().string(), "--out",
                   c1.string()})
                  .code,
              6);
}

TEST(CliGradcheck, PassesAndIsDeterministic) {
    const CliRun a = run({"gradcheck"});
    ASSERT_EQ(a.code, 0) << a.out << a.err;
    for (const char* term : {"l_b ", "l_t ", "l_m ", "total "}) {
        EXPECT_NE(line_starting(a.out, term).find(" ok"), std::string::npos) << term;
    }
    EXPECT_EQ(run({"gradcheck"}).out, a.out);
}

}  // namespace
}  // namespace dewarp
