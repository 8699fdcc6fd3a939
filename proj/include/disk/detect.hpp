#pragma once

#include <cstdint>
#include <vector>

#include "disk/field.hpp"

namespace disk {

// Partition of an image into h x h cells, row-major cell order.  Edge
// cells shrink when dimensions are not multiples of h; every pixel belongs
// to exactly one cell.
struct GridSpec {
    int cell = 0;
    int height = 0;
    int width = 0;
    int cells_y = 0;
    int cells_x = 0;

    int cell_count() const { return cells_y * cells_x; }
    int cell_of(int x, int y) const { return (y / cell) * cells_x + (x / cell); }

    struct Rect {
        int x0, y0, w, h;
    };
    Rect rect(int c) const {
        int cy = c / cells_x, cx = c % cells_x;
        int x0 = cx * cell, y0 = cy * cell;
        int w = x0 + cell <= width ? cell : width - x0;
        int h = y0 + cell <= height ? cell : height - y0;
        return {x0, y0, w, h};
    }
};

GridSpec partition_grid(int height, int width, int h);

// Heatmap logits of one cell in local row-major order, as doubles.
std::vector<double> cell_logits(const FeatureField& f, const GridSpec& g, int c);

// Within a cell one pixel is selected with probability softmax(logits) and
// then accepted with probability sigmoid(logit); the joint gives the
// sampled keypoint distribution.
struct CellDistribution {
    std::vector<double> select;
    std::vector<double> accept;
};
CellDistribution cell_distribution(const FeatureField& f, const GridSpec& g, int c);

// One proposal per cell, cells in index order, each cell on its own
// derived random stream so the draw does not depend on other cells.
// log_probs hold log(select * accept) of each accepted keypoint.
struct SampledDetections {
    FeatureSet features;
    std::vector<int> cells;  // grid cell of each accepted keypoint
    std::size_t proposals_rejected = 0;
    GridSpec grid;
};
SampledDetections sample_features(const FeatureField& f, const GridSpec& g, std::uint64_t seed);

// Deterministic counterpart of sampling: per-cell argmax kept when its
// logit is strictly positive.  Ties resolve to the smallest row-major
// pixel index.
FeatureSet detect_argmax(const FeatureField& f, const GridSpec& g);

// Grid-free inference: a pixel survives when every other pixel in the
// Chebyshev window of the given radius has a strictly smaller logit, or an
// equal logit at a larger row-major index.  Only positive logits emit.
FeatureSet detect_nms(const FeatureField& f, int radius);

// Keeps the budget highest-scoring keypoints (ties prefer the earlier
// entry) in their original order.  Negative budget means unlimited.
FeatureSet subsample_by_score(const FeatureSet& fs, long long budget);

}  // namespace disk
