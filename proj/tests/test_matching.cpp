#include <cmath>
#include <set>
#include <vector>

#include "disk/matching.hpp"
#include "disk/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace disk;

namespace {

FeatureSet unit_features(const std::vector<std::vector<double>>& descs) {
    FeatureSet fs;
    fs.width = 8;
    fs.height = 8;
    fs.n = static_cast<int>(descs[0].size());
    for (std::size_t i = 0; i < descs.size(); i++) {
        fs.keypoints.push_back({static_cast<double>(i), 0.0, 0.0});
        fs.descriptors.insert(fs.descriptors.end(), descs[i].begin(), descs[i].end());
    }
    return fs;
}

DistanceMatrix dm(std::size_t rows, std::size_t cols, std::vector<double> d) {
    return {rows, cols, std::move(d)};
}

}  // namespace

TEST_CASE("matching: euclidean distances between unit descriptors") {
    FeatureSet a = unit_features({{1, 0}, {0, 1}});
    FeatureSet b = unit_features({{1, 0}, {-1, 0}});
    DistanceMatrix d = distance_matrix(a, b);
    REQUIRE(d.rows == 2u);
    REQUIRE(d.cols == 2u);
    CHECK(d.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.at(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(d.at(1, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    // d^2 = 2 - 2 <a, b> for unit vectors
    Rng rng(3);
    FeatureSet ra = unit_features({{0.6, 0.8}, {0.28, 0.96}});
    FeatureSet rb = unit_features({{0.8, 0.6}});
    DistanceMatrix rd = distance_matrix(ra, rb);
    for (std::size_t i = 0; i < 2; i++) {
        double dot = ra.desc(i)[0] * rb.desc(0)[0] + ra.desc(i)[1] * rb.desc(0)[1];
        CHECK(rd.at(i, 0) == doctest::Approx(std::sqrt(2.0 - 2.0 * dot)).epsilon(1e-12));
    }

    FeatureSet c = unit_features({{1, 0, 0}});
    CHECK_THROWS_AS(distance_matrix(a, c), std::invalid_argument);
}

TEST_CASE("matching: forward rows and reverse columns are distributions") {
    Rng rng(11);
    std::vector<double> d(12);
    for (double& x : d) x = rng.uniform() * 2.0;
    MatchDistribution md = make_distribution(dm(3, 4, d), 7.0);
    for (std::size_t i = 0; i < 3; i++) {
        double s = 0;
        for (std::size_t j = 0; j < 4; j++) s += md.fwd_at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (std::size_t j = 0; j < 4; j++) {
        double s = 0;
        for (std::size_t i = 0; i < 3; i++) s += md.rev_at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(make_distribution(dm(1, 1, {0.0}), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_distribution(dm(1, 1, {0.0}), -1.0), std::invalid_argument);
}

TEST_CASE("matching: closed-form pair probability") {
    MatchDistribution md = make_distribution(dm(2, 2, {0, 1, 1, 0}), 1.0);
    double fwd = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(md.pair_prob(0, 0) == doctest::Approx(fwd * fwd).epsilon(1e-12));
    CHECK(md.pair_prob(0, 0) == doctest::Approx(0.53444665).epsilon(1e-7));

    // single-candidate sides are deterministic
    MatchDistribution one = make_distribution(dm(1, 1, {0.7}), 5.0);
    CHECK(one.pair_prob(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matching: pair probabilities match brute-force enumeration") {
    Rng rng(21);
    for (int trial = 0; trial < 10; trial++) {
        std::size_t rows = 1 + rng.raw() % 3;
        std::size_t cols = 1 + rng.raw() % 3;
        std::vector<double> d(rows * cols);
        for (double& x : d) x = 0.1 * static_cast<double>(rng.raw() % 21);
        double theta = trial % 2 ? 1.0 : 5.0;
        MatchDistribution md = make_distribution(dm(rows, cols, d), theta);
        for (std::size_t i = 0; i < rows; i++)
            for (std::size_t j = 0; j < cols; j++) {
                double expect = oracle::enumerate_pair_prob(d, rows, cols, theta, i, j);
                CHECK(md.pair_prob(i, j) == doctest::Approx(expect).epsilon(1e-12));
            }
    }
}

TEST_CASE("matching: expected reward equals enumeration") {
    std::vector<double> d = {0, 1, 1, 0};
    std::vector<double> r = {1, -0.25, -0.25, 1};
    MatchDistribution md = make_distribution(dm(2, 2, d), 1.0);
    CHECK(expected_reward(md, r) == doctest::Approx(1.03272855).epsilon(1e-7));
    CHECK(expected_reward(md, r) ==
          doctest::Approx(oracle::enumerate_expected_reward(d, 2, 2, 1.0, r)).epsilon(1e-12));

    CHECK_THROWS_AS(expected_reward(md, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("matching: sharper theta concentrates reward on the diagonal") {
    std::vector<double> d = {0, 1, 1, 0};
    std::vector<double> r = {1, 0, 0, 1};
    double prev = 0.0;
    for (double theta : {0.5, 1.0, 5.0, 20.0}) {
        double e = expected_reward(make_distribution(dm(2, 2, d), theta), r);
        CHECK(e > prev);
        prev = e;
    }
    CHECK(prev > 1.99);  // theta 20 is effectively mutual-NN
}

TEST_CASE("matching: sampled matches are deterministic and one-to-one") {
    Rng rng(31);
    std::vector<double> d(20);
    for (double& x : d) x = rng.uniform() * 2.0;
    MatchDistribution md = make_distribution(dm(4, 5, d), 3.0);
    MatchSet a = sample_matches(md, 17);
    MatchSet b = sample_matches(md, 17);
    REQUIRE(a.pairs.size() == b.pairs.size());
    for (std::size_t k = 0; k < a.pairs.size(); k++) {
        CHECK(a.pairs[k].i == b.pairs[k].i);
        CHECK(a.pairs[k].j == b.pairs[k].j);
    }
    for (std::uint64_t seed = 0; seed < 50; seed++) {
        MatchSet s = sample_matches(md, seed);
        std::set<std::size_t> is, js;
        for (const MatchPair& p : s.pairs) {
            CHECK(is.insert(p.i).second);
            CHECK(js.insert(p.j).second);
        }
    }
}

TEST_CASE("matching: sampled reward agrees with the expectation") {
    std::vector<double> d = {0.2, 1.1, 0.9, 0.4, 1.3, 0.6};
    std::vector<double> r = {1, -0.25, -0.25, 1, -0.25, 1};
    MatchDistribution md = make_distribution(dm(2, 3, d), 2.0);
    double expect = expected_reward(md, r);
    const int trials = 20000;
    double sum = 0, sum_sq = 0;
    for (int t = 0; t < trials; t++) {
        double reward = 0;
        for (const MatchPair& p : sample_matches(md, static_cast<std::uint64_t>(t)).pairs)
            reward += r[p.i * 3 + p.j];
        sum += reward;
        sum_sq += reward * reward;
    }
    double mean = sum / trials;
    double var = sum_sq / trials - mean * mean;
    double se = std::sqrt(var / trials);
    CHECK(std::abs(mean - expect) < 3.0 * se + 1e-12);
}

TEST_CASE("matching: probability threshold filter") {
    MatchDistribution md = make_distribution(dm(2, 2, {0, 1, 1, 0}), 1.0);
    MatchSet all = match_probabilities(md, 0.0);
    REQUIRE(all.pairs.size() == 4u);
    CHECK(all.pairs[0].i == 0);
    CHECK(all.pairs[0].j == 0);
    CHECK(all.pairs[1].j == 1);  // row-major order
    REQUIRE(all.pairs[0].p.has_value());
    CHECK(*all.pairs[0].p == doctest::Approx(0.53444665).epsilon(1e-7));

    MatchSet strong = match_probabilities(md, 0.5);
    REQUIRE(strong.pairs.size() == 2u);
    CHECK(strong.pairs[0].i == 0);
    CHECK(strong.pairs[0].j == 0);
    CHECK(strong.pairs[1].i == 1);
    CHECK(strong.pairs[1].j == 1);
}

TEST_CASE("matching: inference matcher examples") {
    MatchSet m = match_inference(dm(2, 2, {0.1, 0.9, 0.8, 0.2}), 0.95);
    REQUIRE(m.pairs.size() == 2u);
    CHECK(m.pairs[0].i == 0);
    CHECK(m.pairs[0].j == 0);
    CHECK(m.pairs[1].i == 1);
    CHECK(m.pairs[1].j == 1);

    // mutual NN but ratio 0.58/0.60 > 0.95 on both sides
    CHECK(match_inference(dm(2, 2, {0.58, 0.60, 0.60, 0.58}), 0.95).pairs.empty());

    // single-candidate sides skip the ratio test
    MatchSet one = match_inference(dm(1, 1, {0.5}), 0.95);
    REQUIRE(one.pairs.size() == 1u);
    CHECK(one.pairs[0].i == 0);
    CHECK(one.pairs[0].j == 0);

    // a zero second-best distance rejects
    CHECK(match_inference(dm(1, 2, {0.0, 0.0}), 0.95).pairs.empty());

    CHECK_THROWS_AS(match_inference(dm(1, 1, {0.5}), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(match_inference(dm(1, 1, {0.5}), 1.5), std::invalid_argument);
}

TEST_CASE("matching: match set round trip") {
    oracle::TempDir dir("matches");
    MatchSet ms;
    ms.pairs = {{0, 2, 0.7}, {3, 1, std::nullopt}};
    ms.theta_m = 30.0;
    ms.ratio_threshold = std::nullopt;
    auto path = dir.path / "m.json";
    save_matches(ms, path);
    MatchSet g = load_matches(path);
    REQUIRE(g.pairs.size() == 2u);
    CHECK(g.pairs[0].i == 0);
    CHECK(g.pairs[0].j == 2);
    REQUIRE(g.pairs[0].p.has_value());
    CHECK(*g.pairs[0].p == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(!g.pairs[1].p.has_value());
    REQUIRE(g.theta_m.has_value());
    CHECK(*g.theta_m == 30.0);
    CHECK(!g.ratio_threshold.has_value());
}
