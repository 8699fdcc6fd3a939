#include "disk/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "disk/numeric.hpp"
#include "disk/parallel.hpp"
#include "disk/rng.hpp"

namespace disk {

GridSpec partition_grid(int height, int width, int h) {
    if (h <= 0) throw std::invalid_argument("partition_grid: cell size must be positive");
    if (height <= 0 || width <= 0)
        throw std::invalid_argument("partition_grid: image dimensions must be positive");
    GridSpec g;
    g.cell = h;
    g.height = height;
    g.width = width;
    g.cells_y = (height + h - 1) / h;
    g.cells_x = (width + h - 1) / h;
    return g;
}

std::vector<double> cell_logits(const FeatureField& f, const GridSpec& g, int c) {
    auto r = g.rect(c);
    std::vector<double> out(static_cast<std::size_t>(r.w) * r.h);
    for (int ly = 0; ly < r.h; ly++)
        for (int lx = 0; lx < r.w; lx++)
            out[static_cast<std::size_t>(ly) * r.w + lx] =
                static_cast<double>(f.heat(r.x0 + lx, r.y0 + ly));
    return out;
}

CellDistribution cell_distribution(const FeatureField& f, const GridSpec& g, int c) {
    std::vector<double> logits = cell_logits(f, g, c);
    CellDistribution d;
    d.select.resize(logits.size());
    softmax(logits, d.select);
    d.accept.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); i++) d.accept[i] = sigmoid(logits[i]);
    return d;
}

namespace {

void emit_keypoint(FeatureSet& fs, const FeatureField& f, int x, int y) {
    fs.keypoints.push_back({static_cast<double>(x), static_cast<double>(y),
                            static_cast<double>(f.heat(x, y))});
    std::vector<double> d = normalized_descriptor(f, x, y);
    fs.descriptors.insert(fs.descriptors.end(), d.begin(), d.end());
}

FeatureSet make_set(const FeatureField& f) {
    FeatureSet fs;
    fs.width = f.width;
    fs.height = f.height;
    fs.n = f.n;
    return fs;
}

}  // namespace

SampledDetections sample_features(const FeatureField& f, const GridSpec& g, std::uint64_t seed) {
    if (f.height != g.height || f.width != g.width)
        throw std::invalid_argument("sample_features: grid does not match field");
    SampledDetections out;
    out.grid = g;
    out.features = make_set(f);
    for (int c = 0; c < g.cell_count(); c++) {
        std::vector<double> logits = cell_logits(f, g, c);
        std::vector<double> select(logits.size());
        softmax(logits, select);
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
        std::size_t li = rng.categorical(select);
        double u = rng.uniform();
        if (u < sigmoid(logits[li])) {
            auto r = g.rect(c);
            int x = r.x0 + static_cast<int>(li) % r.w;
            int y = r.y0 + static_cast<int>(li) / r.w;
            emit_keypoint(out.features, f, x, y);
            out.features.log_probs.push_back(log_softmax_at(logits, li) +
                                             log_sigmoid(logits[li]));
            out.cells.push_back(c);
        } else {
            out.proposals_rejected++;
        }
    }
    return out;
}

FeatureSet detect_argmax(const FeatureField& f, const GridSpec& g) {
    if (f.height != g.height || f.width != g.width)
        throw std::invalid_argument("detect_argmax: grid does not match field");
    FeatureSet fs = make_set(f);
    for (int c = 0; c < g.cell_count(); c++) {
        auto r = g.rect(c);
        int bx = r.x0, by = r.y0;
        float best = f.heat(bx, by);
        for (int ly = 0; ly < r.h; ly++)
            for (int lx = 0; lx < r.w; lx++) {
                float v = f.heat(r.x0 + lx, r.y0 + ly);
                if (v > best) {
                    best = v;
                    bx = r.x0 + lx;
                    by = r.y0 + ly;
                }
            }
        if (best > 0.0f) emit_keypoint(fs, f, bx, by);
    }
    return fs;
}

FeatureSet detect_nms(const FeatureField& f, int radius) {
    if (radius < 1) throw std::invalid_argument("detect_nms: radius must be at least 1");
    FeatureSet fs = make_set(f);
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(f.height));
    parallel_for(static_cast<std::size_t>(f.height), [&](std::size_t yi) {
        int y = static_cast<int>(yi);
        for (int x = 0; x < f.width; x++) {
            float hp = f.heat(x, y);
            if (!(hp > 0.0f)) continue;
            long long p = static_cast<long long>(y) * f.width + x;
            bool keep = true;
            int y0 = std::max(0, y - radius), y1 = std::min(f.height - 1, y + radius);
            int x0 = std::max(0, x - radius), x1 = std::min(f.width - 1, x + radius);
            for (int qy = y0; qy <= y1 && keep; qy++)
                for (int qx = x0; qx <= x1; qx++) {
                    if (qx == x && qy == y) continue;
                    float hq = f.heat(qx, qy);
                    long long q = static_cast<long long>(qy) * f.width + qx;
                    if (hq > hp || (hq == hp && q < p)) {
                        keep = false;
                        break;
                    }
                }
            if (keep) rows[yi].push_back(x);
        }
    });
    for (int y = 0; y < f.height; y++)
        for (int x : rows[static_cast<std::size_t>(y)]) emit_keypoint(fs, f, x, y);
    return fs;
}

FeatureSet subsample_by_score(const FeatureSet& fs, long long budget) {
    if (budget < 0 || static_cast<std::size_t>(budget) >= fs.size()) return fs;
    std::vector<std::size_t> idx(fs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return fs.keypoints[a].score > fs.keypoints[b].score;
    });
    idx.resize(static_cast<std::size_t>(budget));
    std::sort(idx.begin(), idx.end());
    FeatureSet out;
    out.width = fs.width;
    out.height = fs.height;
    out.n = fs.n;
    for (std::size_t i : idx) {
        out.keypoints.push_back(fs.keypoints[i]);
        out.descriptors.insert(out.descriptors.end(), fs.desc(i), fs.desc(i) + fs.n);
        if (!fs.log_probs.empty()) out.log_probs.push_back(fs.log_probs[i]);
    }
    return out;
}

}  // namespace disk
