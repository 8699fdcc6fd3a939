#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "disk/cli.hpp"
#include "disk/field.hpp"
#include "disk/matching.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

using namespace disk;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

FeatureSet tiny_features(double flip) {
    FeatureSet f;
    f.width = 8;
    f.height = 8;
    f.n = 2;
    f.keypoints = {{1.0, 1.0, 3.0}, {5.0, 6.0, 2.0}};
    f.descriptors = {1.0, 0.0, 0.0, flip};
    return f;
}

}  // namespace

TEST_CASE("cli: help and usage errors") {
    CliRun help = cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("detect") != std::string::npos);
    CHECK(help.out.find("train") != std::string::npos);

    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"detect"}).code == 2);  // missing required arguments
    CHECK(cli({"detect", "x.json", "--out", "y.json", "--mode", "bogus"}).code == 2);
    CHECK(cli({"train", "--out-dir", "/tmp/x", "--scene-kind", "bogus"}).code == 2);
}

TEST_CASE("cli: missing input files fail at runtime") {
    oracle::TempDir dir("cli_missing");
    CliRun r = cli({"detect", (dir.path / "absent.json").string(), "--out",
                    (dir.path / "out.json").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("cli: train, detect, match, eval pipeline") {
    oracle::TempDir dir("cli_pipeline");
    std::string out_dir = (dir.path / "run").string();
    CliRun tr = cli({"train", "--out-dir", out_dir, "--height", "16", "--width", "16",
                     "--steps", "8", "--n", "4", "--eval-interval", "4", "--lr", "0.01",
                     "--seed", "0"});
    CHECK(tr.code == 0);
    CHECK(tr.out.find("artifacts in") != std::string::npos);
    for (const char* name :
         {"scene.json", "field_0.json", "field_1.json", "history.csv", "summary.json"})
        CHECK(fs::exists(fs::path(out_dir) / name));

    std::string feat_a = (dir.path / "feat_a.json").string();
    std::string feat_b = (dir.path / "feat_b.json").string();
    CliRun da = cli({"detect", out_dir + "/field_0.json", "--out", feat_a, "--mode", "nms"});
    CHECK(da.code == 0);
    CHECK(da.out.find("detected") != std::string::npos);
    CHECK(cli({"detect", out_dir + "/field_1.json", "--out", feat_b}).code == 0);
    CHECK(load_features(feat_a).size() > 0);

    std::string matches = (dir.path / "matches.json").string();
    CliRun mr = cli({"match", feat_a, feat_b, "--out", matches});
    CHECK(mr.code == 0);
    CHECK(mr.out.find("matched") != std::string::npos);
    MatchSet ms = load_matches(matches);
    CHECK(ms.ratio_threshold.has_value());

    std::string report = (dir.path / "eval.json").string();
    CliRun er = cli({"eval", out_dir + "/field_0.json", out_dir + "/field_1.json",
                     out_dir + "/scene.json", "--out", report});
    CHECK(er.code == 0);
    std::ifstream is(report);
    nlohmann::json j;
    is >> j;
    CHECK(j.contains("precision"));
    CHECK(j.contains("n_matches"));

    CHECK(cli({"eval", out_dir + "/field_0.json", out_dir + "/field_1.json",
               out_dir + "/scene.json", "--view-a", "0", "--view-b", "0"})
              .code == 2);
}

TEST_CASE("cli: detect budget caps the keypoint count") {
    oracle::TempDir dir("cli_budget");
    std::string out_dir = (dir.path / "run").string();
    REQUIRE(cli({"train", "--out-dir", out_dir, "--height", "16", "--width", "16", "--steps",
                 "2", "--n", "4", "--lr", "0.01"})
                .code == 0);
    std::string feats = (dir.path / "feats.json").string();
    CliRun r = cli({"detect", out_dir + "/field_0.json", "--out", feats, "--mode", "grid",
                    "--budget", "1"});
    CHECK(r.code == 0);
    CHECK(load_features(feats).size() == 1u);
}

TEST_CASE("cli: probabilistic matching reports every pair above the floor") {
    oracle::TempDir dir("cli_prob");
    std::string fa = (dir.path / "a.json").string();
    std::string fb = (dir.path / "b.json").string();
    save_features(tiny_features(1.0), fa);
    save_features(tiny_features(-1.0), fb);
    std::string out = (dir.path / "m.json").string();
    CliRun r = cli({"match", fa, fb, "--out", out, "--probabilistic", "--min-prob", "0",
                    "--theta-m", "5"});
    CHECK(r.code == 0);
    MatchSet ms = load_matches(out);
    REQUIRE(ms.pairs.size() == 4u);
    REQUIRE(ms.theta_m.has_value());
    CHECK(*ms.theta_m == 5.0);
    // row-major enumeration of a 2x2 instance
    CHECK(ms.pairs[0].i == 0);
    CHECK(ms.pairs[0].j == 0);
    CHECK(ms.pairs[3].i == 1);
    CHECK(ms.pairs[3].j == 1);
    double total = 0;
    for (const auto& p : ms.pairs) {
        REQUIRE(p.p.has_value());
        CHECK(*p.p >= 0.0);
        CHECK(*p.p <= 1.0);
        total += *p.p;
    }
    CHECK(total <= 2.0 + 1e-12);

    CliRun conflict = cli({"match", fa, fb, "--out", out, "--probabilistic", "--inference"});
    CHECK(conflict.code == 2);
}

TEST_CASE("cli: gradcheck validates and warns about tiny steps") {
    CliRun ok = cli({"gradcheck", "--size", "8", "--n", "4", "--features", "2"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("PASS") != std::string::npos);
    CHECK(ok.err.empty());

    oracle::TempDir dir("cli_gradcheck");
    std::string report = (dir.path / "report.json").string();
    CHECK(cli({"gradcheck", "--size", "8", "--n", "4", "--features", "2", "--out", report})
              .code == 0);
    std::ifstream is(report);
    nlohmann::json j;
    is >> j;
    CHECK(j.contains("max_rel_err"));

    CliRun tiny = cli({"gradcheck", "--size", "8", "--n", "4", "--features", "2", "--step",
                       "1e-12"});
    CHECK(tiny.err.find("warning") != std::string::npos);
}
