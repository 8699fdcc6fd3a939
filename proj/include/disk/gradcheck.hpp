#pragma once

#include <cstdint>
#include <filesystem>

#include "disk/gradient.hpp"

namespace disk {

// Central finite-difference validation of the matching-term gradient
// against the analytic one on a randomized planted instance (two fields
// over a toy plane scene, a few keypoints per side, half of the second
// side planted at true correspondences so all reward classes appear).
struct GradCheckConfig {
    int size = 16;       // square image side, also min 2 * cell
    int n = 4;           // descriptor dimension
    int features = 4;    // keypoints per side
    std::uint64_t seed = 0;
    double step = 1e-4;
    double theta_m = 30.0;
};

struct GradCheckBlock {
    double max_rel_err = 0;
    double mean_rel_err = 0;
    std::size_t count = 0;
};

struct GradCheckReport {
    GradCheckConfig cfg;
    GradCheckBlock desc_a, desc_b, theta;
    double max_rel_err = 0;
};

GradCheckReport run_gradcheck(const GradCheckConfig& cfg);

void save_gradcheck_report(const GradCheckReport& r, double threshold,
                           const std::filesystem::path& path);

}  // namespace disk
