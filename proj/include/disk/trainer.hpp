#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "disk/gradient.hpp"

namespace disk {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moments are kept in double even though params are float32.
struct AdamState {
    std::vector<double> m, v;
    long long step = 0;
};

// Gradient-ascent Adam step (params move along +grad).
void adam_update(std::span<float> params, std::span<const double> grad, AdamState& st,
                 const AdamConfig& cfg);

struct ThetaSchedule {
    double start = 15.0;
    double end = 50.0;
    long long ramp_steps = -1;  // -1: half the run
};

struct TrainConfig {
    long long steps = 2000;
    AdamConfig adam;
    // Adam eps for the heatmap only (negative: use adam.eps).  The heatmap
    // score-function gradient is a stream of frequent tiny terms and rare
    // large ones; with a tiny eps Adam normalizes both to the same step and
    // the frequent side wins regardless of magnitude.  A larger eps keeps
    // heatmap updates proportional to the running mean below that scale.
    double heatmap_eps = -1.0;
    int h = 8;  // detection grid cell
    int n = 8;  // descriptor dimension
    RewardConfig rewards;
    long long anneal_steps = -1;  // -1: one sixth of the run; penalties ramp 0 -> full
    ThetaSchedule theta;
    long long eval_interval = 100;
    std::uint64_t seed = 0;
    bool shared_field = false;  // one field for all views (identical-view scenes)
    int nms_radius = 2;
    double ratio = 0.95;
    std::filesystem::path dump_dir = ".";  // diagnostics on non-finite gradients
};

struct Anneal {
    double lambda_fp = 0;
    double lambda_kp = 0;
    double theta = 0;
};

// Penalty ramp is linear from zero over the anneal window; theta ramps
// linearly from start to end over its own window, then holds.
Anneal anneal_at(const TrainConfig& cfg, long long step);

enum class DetectMode { Grid, Nms };

struct PairEval {
    double precision = 1.0;  // vacuous when no correct/incorrect matches exist
    double recall = 0.0;
    double mean_reproj_err = 0.0;
    std::size_t n_matches = 0;
    std::size_t n_correct = 0;
    std::size_t n_keypoints_a = 0;
    std::size_t n_keypoints_b = 0;
    bool zero_matches = true;
};

// Inference-mode evaluation: detect, mutual-NN match with ratio test,
// classify against ground truth.  Recall counts detected keypoints in A
// whose true correspondence has a detected keypoint within eps in B.
PairEval evaluate_matches(const FeatureField& fa, const FeatureField& fb, const Scene& scene,
                          int view_a, int view_b, DetectMode mode, int h, int nms_radius,
                          double ratio, double eps);

struct EvalEntry {
    long long step = 0;
    double expected_reward = 0;
    double theta_m = 0;
    double lambda_fp_eff = 0;
    double lambda_kp_eff = 0;
    std::size_t n_keypoints = 0;
    double precision = 1.0;
    double recall = 0.0;
    double mean_reproj_err = 0.0;
    bool zero_matches = true;
};

struct TrainResult {
    std::vector<FeatureField> fields;  // one per view, or a single shared one
    std::vector<EvalEntry> history;    // every eval_interval steps plus the last step
    std::vector<double> step_rewards;  // expected reward at every step, pre-update
    long long best_step = -1;
    double best_expected_reward = 0;
};

// Optimizes fields on a toy scene by stochastic gradient ascent on the
// expected match reward.  Two views train on the single pair, three views
// on all three pairs.  Deterministic in (scene, cfg).  A non-finite
// gradient aborts with diagnostics written to cfg.dump_dir.
TrainResult train_toy(const Scene& scene, const TrainConfig& cfg);

void write_history_csv(const std::vector<EvalEntry>& history,
                       const std::filesystem::path& path);

void write_train_summary(const TrainResult& res, const TrainConfig& cfg,
                         const std::vector<std::string>& field_manifests,
                         const std::filesystem::path& path);

}  // namespace disk
