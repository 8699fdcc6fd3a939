#pragma once

#include <array>
#include <span>
#include <vector>

#include "disk/detect.hpp"
#include "disk/field.hpp"
#include "disk/geometry.hpp"
#include "disk/matching.hpp"

namespace disk {

struct RewardConfig {
    double lambda_tp = 1.0;
    double lambda_fp = -0.25;
    double lambda_kp = -0.001;
    double epsilon = 2.0;
};

std::vector<MatchLabel> classify_all(const FeatureSet& a, const FeatureSet& b,
                                     const Scene& scene, int view_a, int view_b, double eps);

// Per-pair rewards: lambda_tp for correct, 0 for plausible, lambda_fp for
// incorrect.  Row-major |a| x |b|.
std::vector<double> reward_matrix(const FeatureSet& a, const FeatureSet& b, const Scene& scene,
                                  int view_a, int view_b, const RewardConfig& cfg);

// Gradient of log(select * accept) of the pixel at local_idx with respect
// to its cell's logits.
std::vector<double> heatmap_score_grad(std::span<const double> cell_logits,
                                       std::size_t local_idx);

struct MatchCounts {
    std::size_t correct = 0;
    std::size_t plausible = 0;
    std::size_t incorrect = 0;
    std::size_t keypoints = 0;
};

struct FieldGrad {
    int height = 0;
    int width = 0;
    int n = 0;
    std::vector<double> d_heatmap;
    std::vector<double> d_descriptors;
};

FieldGrad zero_grad(const FeatureField& f);
void add_grad(FieldGrad& dst, const FieldGrad& src);
bool grad_finite(const FieldGrad& g);

// Gradient of the expected reward of one image pair with respect to both
// fields and theta.  The matching term is exact (the pair probabilities
// are closed-form); sampling enters only through the score-function term
// that credits each accepted keypoint with its pair rewards, plus the
// per-keypoint penalty when keypoint_penalty is set.
struct PairGradient {
    FieldGrad a, b;
    double d_theta_m = 0;
    double expected_reward = 0;
    MatchCounts counts;
};

PairGradient pair_gradient(const FeatureField& fa, const FeatureField& fb,
                           const SampledDetections& sa, const SampledDetections& sb,
                           const Scene& scene, int view_a, int view_b, double theta_m,
                           const RewardConfig& cfg, bool keypoint_penalty = true);

// Three views, pairs (0,1), (0,2), (1,2); the keypoint penalty is applied
// once per image, not once per pair.
struct TripletGradient {
    std::array<FieldGrad, 3> views;
    double d_theta_m = 0;
    double expected_reward = 0;
    MatchCounts counts;
};

TripletGradient triplet_gradient(const std::array<const FeatureField*, 3>& fields,
                                 const std::array<const SampledDetections*, 3>& samples,
                                 const Scene& scene, double theta_m, const RewardConfig& cfg);

}  // namespace disk
