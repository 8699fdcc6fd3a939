#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "disk/field.hpp"

namespace disk {

struct DistanceMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> d;  // rows*cols, row-major

    double at(std::size_t i, std::size_t j) const { return d[i * cols + j]; }
};

// Pairwise Euclidean distances between unit descriptors.  Descriptor
// dimensions must agree.
DistanceMatrix distance_matrix(const FeatureSet& a, const FeatureSet& b);

// Relaxed cycle-consistent match distribution.  fwd holds row-wise
// softmax(-theta * d), rev column-wise; a pair matches when the forward
// draw from row i picks j and the reverse draw from column j picks i, so
// P(i matches j) = fwd(i,j) * rev(i,j).
struct MatchDistribution {
    DistanceMatrix dist;
    double theta = 0;
    std::vector<double> fwd;
    std::vector<double> rev;

    double fwd_at(std::size_t i, std::size_t j) const { return fwd[i * dist.cols + j]; }
    double rev_at(std::size_t i, std::size_t j) const { return rev[i * dist.cols + j]; }
    double pair_prob(std::size_t i, std::size_t j) const { return fwd_at(i, j) * rev_at(i, j); }
};

MatchDistribution make_distribution(DistanceMatrix d, double theta);

// sum over pairs of P(i matches j) * reward(i, j); rewards are row-major
// rows x cols
double expected_reward(const MatchDistribution& md, const std::vector<double>& rewards);

struct MatchPair {
    std::size_t i = 0;
    std::size_t j = 0;
    std::optional<double> p;
};

struct MatchSet {
    std::vector<MatchPair> pairs;
    std::optional<double> theta_m;
    std::optional<double> ratio_threshold;
};

// One forward draw per row, one reverse draw per column, keep the
// cycle-consistent pairs.  Deterministic in (md, seed).
MatchSet sample_matches(const MatchDistribution& md, std::uint64_t seed);

// All pairs whose match probability reaches min_prob, row-major order.
MatchSet match_probabilities(const MatchDistribution& md, double min_prob);

// Mutual nearest neighbours with a symmetric second-nearest ratio test
// (applied in both the row and the column; skipped on sides with a single
// candidate).  A zero second-nearest distance always rejects.
MatchSet match_inference(const DistanceMatrix& d, double ratio);

void save_matches(const MatchSet& ms, const std::filesystem::path& path);
MatchSet load_matches(const std::filesystem::path& path);

}  // namespace disk
