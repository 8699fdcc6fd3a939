#include "disk/gradient.hpp"

#include <cmath>

#include "disk/kernels.hpp"
#include "disk/numeric.hpp"
#include "disk/parallel.hpp"

namespace disk {

std::vector<MatchLabel> classify_all(const FeatureSet& a, const FeatureSet& b,
                                     const Scene& scene, int view_a, int view_b, double eps) {
    std::vector<MatchLabel> labels(a.size() * b.size(), MatchLabel::Incorrect);
    parallel_for(a.size(), [&](std::size_t i) {
        Vec2 pa{a.keypoints[i].x, a.keypoints[i].y};
        for (std::size_t j = 0; j < b.size(); j++) {
            Vec2 pb{b.keypoints[j].x, b.keypoints[j].y};
            labels[i * b.size() + j] = classify_match(scene, view_a, view_b, pa, pb, eps);
        }
    });
    return labels;
}

std::vector<double> reward_matrix(const FeatureSet& a, const FeatureSet& b, const Scene& scene,
                                  int view_a, int view_b, const RewardConfig& cfg) {
    std::vector<MatchLabel> labels = classify_all(a, b, scene, view_a, view_b, cfg.epsilon);
    std::vector<double> r(labels.size());
    for (std::size_t k = 0; k < labels.size(); k++)
        r[k] = labels[k] == MatchLabel::Correct    ? cfg.lambda_tp
               : labels[k] == MatchLabel::Plausible ? 0.0
                                                     : cfg.lambda_fp;
    return r;
}

std::vector<double> heatmap_score_grad(std::span<const double> cell_logits,
                                       std::size_t local_idx) {
    if (local_idx >= cell_logits.size())
        throw std::invalid_argument("heatmap_score_grad: index out of range");
    std::vector<double> g(cell_logits.size());
    softmax(cell_logits, g);
    kernels::scale(-1.0, g.data(), g.size());
    g[local_idx] += 1.0 + (1.0 - sigmoid(cell_logits[local_idx]));
    return g;
}

FieldGrad zero_grad(const FeatureField& f) {
    FieldGrad g;
    g.height = f.height;
    g.width = f.width;
    g.n = f.n;
    g.d_heatmap.assign(f.heatmap.size(), 0.0);
    g.d_descriptors.assign(f.descriptors.size(), 0.0);
    return g;
}

void add_grad(FieldGrad& dst, const FieldGrad& src) {
    if (dst.height != src.height || dst.width != src.width || dst.n != src.n)
        throw std::invalid_argument("add_grad: shape mismatch");
    kernels::axpy(1.0, src.d_heatmap.data(), dst.d_heatmap.data(), dst.d_heatmap.size());
    kernels::axpy(1.0, src.d_descriptors.data(), dst.d_descriptors.data(),
                  dst.d_descriptors.size());
}

bool grad_finite(const FieldGrad& g) {
    for (double v : g.d_heatmap)
        if (!std::isfinite(v)) return false;
    for (double v : g.d_descriptors)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

// accumulates coeff * d log(select * accept) / d logits into the cell's
// heatmap slots
void add_score_grad(FieldGrad& g, const FeatureField& f, const GridSpec& grid, int cell,
                    int x, int y, double coeff) {
    auto rect = grid.rect(cell);
    std::vector<double> logits = cell_logits(f, grid, cell);
    std::size_t li = static_cast<std::size_t>(y - rect.y0) * rect.w + (x - rect.x0);
    std::vector<double> sg = heatmap_score_grad(logits, li);
    for (int ly = 0; ly < rect.h; ly++)
        for (int lx = 0; lx < rect.w; lx++)
            g.d_heatmap[static_cast<std::size_t>(rect.y0 + ly) * grid.width + rect.x0 + lx] +=
                coeff * sg[static_cast<std::size_t>(ly) * rect.w + lx];
}

// gradient with respect to the raw (unnormalized) descriptor given the
// gradient with respect to the unit descriptor: (g - a<a,g>) / |v|
void backprop_unit(FieldGrad& fg, const FeatureField& f, int x, int y,
                   const double* unit, const double* g_unit) {
    std::size_t n = static_cast<std::size_t>(f.n);
    const float* raw = f.desc_raw(x, y);
    double norm_sq = 0.0;
    for (std::size_t c = 0; c < n; c++)
        norm_sq += static_cast<double>(raw[c]) * static_cast<double>(raw[c]);
    double norm = std::sqrt(norm_sq);
    double proj = kernels::dot(unit, g_unit, n);
    double* out = fg.d_descriptors.data() + (static_cast<std::size_t>(y) * f.width + x) * n;
    for (std::size_t c = 0; c < n; c++) out[c] += (g_unit[c] - unit[c] * proj) / norm;
}

void check_sampled(const SampledDetections& s, const FeatureField& f, const char* what) {
    if (s.features.log_probs.size() != s.features.size() ||
        s.cells.size() != s.features.size())
        throw std::invalid_argument(std::string(what) + ": sampled detections required");
    if (s.grid.height != f.height || s.grid.width != f.width || s.features.n != f.n)
        throw std::invalid_argument(std::string(what) + ": detections do not match field");
}

}  // namespace

PairGradient pair_gradient(const FeatureField& fa, const FeatureField& fb,
                           const SampledDetections& sa, const SampledDetections& sb,
                           const Scene& scene, int view_a, int view_b, double theta_m,
                           const RewardConfig& cfg, bool keypoint_penalty) {
    check_sampled(sa, fa, "pair_gradient");
    check_sampled(sb, fb, "pair_gradient");
    const FeatureSet& A = sa.features;
    const FeatureSet& B = sb.features;
    std::size_t rows = A.size(), cols = B.size();
    std::size_t n = static_cast<std::size_t>(fa.n);

    PairGradient out;
    out.a = zero_grad(fa);
    out.b = zero_grad(fb);
    out.counts.keypoints = rows + cols;

    std::vector<double> row_pr(rows, 0.0), col_pr(cols, 0.0);
    if (rows > 0 && cols > 0) {
        std::vector<MatchLabel> labels = classify_all(A, B, scene, view_a, view_b, cfg.epsilon);
        std::vector<double> r(labels.size());
        for (std::size_t k = 0; k < labels.size(); k++) {
            switch (labels[k]) {
                case MatchLabel::Correct:
                    r[k] = cfg.lambda_tp;
                    out.counts.correct++;
                    break;
                case MatchLabel::Plausible:
                    r[k] = 0.0;
                    out.counts.plausible++;
                    break;
                case MatchLabel::Incorrect:
                    r[k] = cfg.lambda_fp;
                    out.counts.incorrect++;
                    break;
            }
        }
        MatchDistribution md = make_distribution(distance_matrix(A, B), theta_m);

        // row/column sums of P*r and softmax-weighted mean distances
        std::vector<double> row_df(rows, 0.0), col_dr(cols, 0.0);
        for (std::size_t i = 0; i < rows; i++)
            for (std::size_t j = 0; j < cols; j++) {
                std::size_t k = i * cols + j;
                double pr = md.fwd[k] * md.rev[k] * r[k];
                row_pr[i] += pr;
                col_pr[j] += pr;
                row_df[i] += md.fwd[k] * md.dist.d[k];
                col_dr[j] += md.rev[k] * md.dist.d[k];
            }
        for (std::size_t i = 0; i < rows; i++) out.expected_reward += row_pr[i];

        // exact gradient of the matching term through the distances
        std::vector<double> g_unit_a(rows * n, 0.0), g_unit_b(cols * n, 0.0);
        parallel_for(rows, [&](std::size_t i) {
            for (std::size_t j = 0; j < cols; j++) {
                std::size_t k = i * cols + j;
                double p = md.fwd[k] * md.rev[k];
                double g_d = -theta_m * (2.0 * p * r[k] - md.fwd[k] * row_pr[i] -
                                         md.rev[k] * col_pr[j]);
                double d = md.dist.d[k];
                if (d > 0.0 && g_d != 0.0) {
                    double s = g_d / d;
                    const double* ai = A.desc(i);
                    const double* bj = B.desc(j);
                    double* ga = g_unit_a.data() + i * n;
                    for (std::size_t c = 0; c < n; c++) ga[c] += s * (ai[c] - bj[c]);
                }
            }
        });
        // column pass (separate loop so each thread owns its output row)
        parallel_for(cols, [&](std::size_t j) {
            for (std::size_t i = 0; i < rows; i++) {
                std::size_t k = i * cols + j;
                double p = md.fwd[k] * md.rev[k];
                double g_d = -theta_m * (2.0 * p * r[k] - md.fwd[k] * row_pr[i] -
                                         md.rev[k] * col_pr[j]);
                double d = md.dist.d[k];
                if (d > 0.0 && g_d != 0.0) {
                    double s = g_d / d;
                    const double* ai = A.desc(i);
                    const double* bj = B.desc(j);
                    double* gb = g_unit_b.data() + j * n;
                    for (std::size_t c = 0; c < n; c++) gb[c] -= s * (ai[c] - bj[c]);
                }
            }
        });
        for (std::size_t i = 0; i < rows; i++)
            backprop_unit(out.a, fa, static_cast<int>(A.keypoints[i].x),
                          static_cast<int>(A.keypoints[i].y), A.desc(i), g_unit_a.data() + i * n);
        for (std::size_t j = 0; j < cols; j++)
            backprop_unit(out.b, fb, static_cast<int>(B.keypoints[j].x),
                          static_cast<int>(B.keypoints[j].y), B.desc(j), g_unit_b.data() + j * n);

        for (std::size_t i = 0; i < rows; i++)
            for (std::size_t j = 0; j < cols; j++) {
                std::size_t k = i * cols + j;
                double pr = md.fwd[k] * md.rev[k] * r[k];
                out.d_theta_m +=
                    pr * ((row_df[i] - md.dist.d[k]) + (col_dr[j] - md.dist.d[k]));
            }
    }

    // score-function credit: each accepted keypoint reinforces its log
    // sampling probability by the reward mass of its pairs, plus the
    // per-keypoint penalty
    double kp = keypoint_penalty ? cfg.lambda_kp : 0.0;
    for (std::size_t i = 0; i < rows; i++) {
        double coeff = row_pr[i] + kp;
        if (coeff != 0.0)
            add_score_grad(out.a, fa, sa.grid, sa.cells[i], static_cast<int>(A.keypoints[i].x),
                           static_cast<int>(A.keypoints[i].y), coeff);
    }
    for (std::size_t j = 0; j < cols; j++) {
        double coeff = col_pr[j] + kp;
        if (coeff != 0.0)
            add_score_grad(out.b, fb, sb.grid, sb.cells[j], static_cast<int>(B.keypoints[j].x),
                           static_cast<int>(B.keypoints[j].y), coeff);
    }
    out.expected_reward += kp * static_cast<double>(rows + cols);
    return out;
}

TripletGradient triplet_gradient(const std::array<const FeatureField*, 3>& fields,
                                 const std::array<const SampledDetections*, 3>& samples,
                                 const Scene& scene, double theta_m, const RewardConfig& cfg) {
    if (scene.views.size() < 3)
        throw std::invalid_argument("triplet_gradient: scene needs 3 views");
    TripletGradient out;
    for (int v = 0; v < 3; v++) out.views[static_cast<std::size_t>(v)] = zero_grad(*fields[static_cast<std::size_t>(v)]);

    constexpr int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& pr : pairs) {
        int u = pr[0], v = pr[1];
        PairGradient pg = pair_gradient(*fields[static_cast<std::size_t>(u)],
                                        *fields[static_cast<std::size_t>(v)],
                                        *samples[static_cast<std::size_t>(u)],
                                        *samples[static_cast<std::size_t>(v)], scene, u, v,
                                        theta_m, cfg, false);
        add_grad(out.views[static_cast<std::size_t>(u)], pg.a);
        add_grad(out.views[static_cast<std::size_t>(v)], pg.b);
        out.d_theta_m += pg.d_theta_m;
        out.expected_reward += pg.expected_reward;
        out.counts.correct += pg.counts.correct;
        out.counts.plausible += pg.counts.plausible;
        out.counts.incorrect += pg.counts.incorrect;
    }
    // keypoint penalty once per image
    for (std::size_t v = 0; v < 3; v++) {
        const SampledDetections& s = *samples[v];
        out.counts.keypoints += s.features.size();
        out.expected_reward += cfg.lambda_kp * static_cast<double>(s.features.size());
        if (cfg.lambda_kp == 0.0) continue;
        for (std::size_t i = 0; i < s.features.size(); i++)
            add_score_grad(out.views[v], *fields[v], s.grid, s.cells[i],
                           static_cast<int>(s.features.keypoints[i].x),
                           static_cast<int>(s.features.keypoints[i].y), cfg.lambda_kp);
    }
    return out;
}

}  // namespace disk
