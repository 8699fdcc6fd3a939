#include "disk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "disk/kernels.hpp"
#include "disk/rng.hpp"
#include "json.hpp"

namespace disk {

void adam_update(std::span<float> params, std::span<const double> grad, AdamState& st,
                 const AdamConfig& cfg) {
    if (params.size() != grad.size())
        throw std::invalid_argument("adam_update: param/grad size mismatch");
    if (st.m.empty()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
    }
    if (st.m.size() != params.size())
        throw std::invalid_argument("adam_update: state size mismatch");
    st.step++;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    kernels::adam_step(params.data(), grad.data(), st.m.data(), st.v.data(), params.size(),
                       cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, bc1, bc2);
}

Anneal anneal_at(const TrainConfig& cfg, long long step) {
    Anneal a;
    long long aw = cfg.anneal_steps < 0 ? cfg.steps / 6 : cfg.anneal_steps;
    double ramp = aw <= 0 ? 1.0
                          : std::min(1.0, static_cast<double>(step) / static_cast<double>(aw));
    a.lambda_fp = cfg.rewards.lambda_fp * ramp;
    a.lambda_kp = cfg.rewards.lambda_kp * ramp;
    long long tw = cfg.theta.ramp_steps < 0 ? cfg.steps / 2 : cfg.theta.ramp_steps;
    double tr = tw <= 0 ? 1.0
                        : std::min(1.0, static_cast<double>(step) / static_cast<double>(tw));
    a.theta = cfg.theta.start + (cfg.theta.end - cfg.theta.start) * tr;
    return a;
}

PairEval evaluate_matches(const FeatureField& fa, const FeatureField& fb, const Scene& scene,
                          int view_a, int view_b, DetectMode mode, int h, int nms_radius,
                          double ratio, double eps) {
    FeatureSet a = mode == DetectMode::Grid ? detect_argmax(fa, partition_grid(fa.height, fa.width, h))
                                            : detect_nms(fa, nms_radius);
    FeatureSet b = mode == DetectMode::Grid ? detect_argmax(fb, partition_grid(fb.height, fb.width, h))
                                            : detect_nms(fb, nms_radius);
    PairEval ev;
    ev.n_keypoints_a = a.size();
    ev.n_keypoints_b = b.size();
    if (a.size() == 0 || b.size() == 0) return ev;

    MatchSet ms = match_inference(distance_matrix(a, b), ratio);
    ev.n_matches = ms.pairs.size();
    const CameraView& va = scene.views[static_cast<std::size_t>(view_a)];
    const CameraView& vb = scene.views[static_cast<std::size_t>(view_b)];
    std::size_t correct = 0, incorrect = 0;
    double err_sum = 0.0;
    std::size_t err_count = 0;
    for (const auto& p : ms.pairs) {
        Vec2 pa{a.keypoints[p.i].x, a.keypoints[p.i].y};
        Vec2 pb{b.keypoints[p.j].x, b.keypoints[p.j].y};
        MatchLabel lbl = classify_match(scene, view_a, view_b, pa, pb, eps);
        if (lbl == MatchLabel::Correct) correct++;
        if (lbl == MatchLabel::Incorrect) incorrect++;
        Reprojection ab = reproject(va, vb, pa);
        if (ab.status == Reprojection::Status::Ok) {
            err_sum += std::hypot(ab.pixel.x - pb.x, ab.pixel.y - pb.y);
            err_count++;
        }
        Reprojection ba = reproject(vb, va, pb);
        if (ba.status == Reprojection::Status::Ok) {
            err_sum += std::hypot(ba.pixel.x - pa.x, ba.pixel.y - pa.y);
            err_count++;
        }
    }
    ev.n_correct = correct;
    ev.zero_matches = correct + incorrect == 0;
    ev.precision = ev.zero_matches ? 1.0
                                   : static_cast<double>(correct) /
                                         static_cast<double>(correct + incorrect);
    if (err_count) ev.mean_reproj_err = err_sum / static_cast<double>(err_count);

    // recall denominator: detected keypoints in A whose ground-truth
    // correspondence has some detected keypoint of B within eps
    std::size_t recallable = 0;
    for (const auto& kp : a.keypoints) {
        Reprojection rp = reproject(va, vb, {kp.x, kp.y});
        if (rp.status != Reprojection::Status::Ok) continue;
        for (const auto& kq : b.keypoints) {
            if (std::hypot(rp.pixel.x - kq.x, rp.pixel.y - kq.y) <= eps) {
                recallable++;
                break;
            }
        }
    }
    if (recallable) ev.recall = static_cast<double>(correct) / static_cast<double>(recallable);
    return ev;
}

namespace {

void dump_divergence(const TrainConfig& cfg, long long step, const Anneal& ann,
                     const MatchCounts& counts, double expected_reward, double d_theta,
                     const std::vector<FieldGrad>& grads, std::filesystem::path& out_path) {
    nlohmann::json j;
    j["step"] = step;
    j["theta_m"] = ann.theta;
    j["lambda_fp_eff"] = ann.lambda_fp;
    j["lambda_kp_eff"] = ann.lambda_kp;
    j["expected_reward"] = expected_reward;
    j["d_theta_m"] = d_theta;
    j["counts"] = {{"correct", counts.correct},
                   {"plausible", counts.plausible},
                   {"incorrect", counts.incorrect},
                   {"keypoints", counts.keypoints}};
    nlohmann::json blocks = nlohmann::json::array();
    for (std::size_t g = 0; g < grads.size(); g++) {
        auto stats = [](const std::vector<double>& v) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            bool finite = true;
            for (double x : v) {
                if (!std::isfinite(x)) finite = false;
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
            return nlohmann::json{{"finite", finite}, {"min", lo}, {"max", hi}};
        };
        blocks.push_back({{"field", g},
                          {"heatmap", stats(grads[g].d_heatmap)},
                          {"descriptors", stats(grads[g].d_descriptors)}});
    }
    j["gradients"] = std::move(blocks);
    out_path = cfg.dump_dir / ("diverged_step" + std::to_string(step) + ".json");
    std::ofstream os(out_path);
    if (os) os << j.dump(2) << "\n";
}

}  // namespace

TrainResult train_toy(const Scene& scene, const TrainConfig& cfg) {
    std::size_t n_views = scene.views.size();
    if (n_views < 2) throw std::invalid_argument("train_toy: scene needs at least 2 views");
    if (cfg.steps < 0) throw std::invalid_argument("train_toy: negative step count");
    if (cfg.h <= 0 || cfg.n <= 0) throw std::invalid_argument("train_toy: bad h or n");

    TrainResult res;
    std::size_t n_fields = cfg.shared_field ? 1 : n_views;
    for (std::size_t f = 0; f < n_fields; f++)
        res.fields.push_back(
            init_field(scene.height, scene.width, cfg.n, mix_seed(cfg.seed, 500 + f)));
    auto field_of = [&](std::size_t v) -> FeatureField& {
        return res.fields[cfg.shared_field ? 0 : v];
    };

    GridSpec grid = partition_grid(scene.height, scene.width, cfg.h);
    AdamConfig heat_adam = cfg.adam;
    if (cfg.heatmap_eps >= 0.0) heat_adam.eps = cfg.heatmap_eps;
    std::vector<AdamState> heat_state(n_fields), desc_state(n_fields);
    bool triplet = n_views >= 3;
    std::size_t active_views = triplet ? 3 : 2;

    for (long long t = 0; t < cfg.steps; t++) {
        Anneal ann = anneal_at(cfg, t);
        RewardConfig rc = cfg.rewards;
        rc.lambda_fp = ann.lambda_fp;
        rc.lambda_kp = ann.lambda_kp;

        std::vector<SampledDetections> samples(active_views);
        for (std::size_t v = 0; v < active_views; v++)
            samples[v] = sample_features(
                field_of(v), grid,
                mix_seed(cfg.seed, 0xA001 + static_cast<std::uint64_t>(t) * active_views + v));

        std::vector<FieldGrad> view_grads;
        double expected = 0, d_theta = 0;
        MatchCounts counts;
        if (triplet) {
            TripletGradient tg = triplet_gradient(
                {&field_of(0), &field_of(1), &field_of(2)},
                {&samples[0], &samples[1], &samples[2]}, scene, ann.theta, rc);
            view_grads.assign(tg.views.begin(), tg.views.end());
            expected = tg.expected_reward;
            d_theta = tg.d_theta_m;
            counts = tg.counts;
        } else {
            PairGradient pg = pair_gradient(field_of(0), field_of(1), samples[0], samples[1],
                                            scene, 0, 1, ann.theta, rc, true);
            view_grads.push_back(std::move(pg.a));
            view_grads.push_back(std::move(pg.b));
            expected = pg.expected_reward;
            d_theta = pg.d_theta_m;
            counts = pg.counts;
        }

        // fold view gradients onto their parameter fields
        std::vector<FieldGrad> field_grads;
        if (cfg.shared_field) {
            field_grads.push_back(std::move(view_grads[0]));
            for (std::size_t v = 1; v < active_views; v++)
                add_grad(field_grads[0], view_grads[v]);
        } else {
            field_grads = std::move(view_grads);
        }

        bool finite = std::isfinite(expected) && std::isfinite(d_theta);
        for (const auto& g : field_grads) finite = finite && grad_finite(g);
        if (!finite) {
            std::filesystem::path dump;
            dump_divergence(cfg, t, ann, counts, expected, d_theta, field_grads, dump);
            throw std::runtime_error("train_toy: non-finite gradient at step " +
                                     std::to_string(t) + ", diagnostics at " + dump.string());
        }

        res.step_rewards.push_back(expected);
        if (cfg.eval_interval > 0 && (t % cfg.eval_interval == 0 || t == cfg.steps - 1)) {
            PairEval pe = evaluate_matches(field_of(0), field_of(1), scene, 0, 1,
                                           DetectMode::Nms, cfg.h, cfg.nms_radius, cfg.ratio,
                                           cfg.rewards.epsilon);
            EvalEntry e;
            e.step = t;
            e.expected_reward = expected;
            e.theta_m = ann.theta;
            e.lambda_fp_eff = ann.lambda_fp;
            e.lambda_kp_eff = ann.lambda_kp;
            e.n_keypoints = counts.keypoints;
            e.precision = pe.precision;
            e.recall = pe.recall;
            e.mean_reproj_err = pe.mean_reproj_err;
            e.zero_matches = pe.zero_matches;
            res.history.push_back(e);
        }

        for (std::size_t f = 0; f < n_fields; f++) {
            adam_update(res.fields[f].heatmap, field_grads[f].d_heatmap, heat_state[f],
                        heat_adam);
            adam_update(res.fields[f].descriptors, field_grads[f].d_descriptors,
                        desc_state[f], cfg.adam);
        }
    }

    for (std::size_t t = 0; t < res.step_rewards.size(); t++)
        if (res.best_step < 0 || res.step_rewards[t] > res.best_expected_reward) {
            res.best_step = static_cast<long long>(t);
            res.best_expected_reward = res.step_rewards[t];
        }
    return res;
}

void write_history_csv(const std::vector<EvalEntry>& history,
                       const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << "step,expected_reward,theta_m,lambda_fp_eff,lambda_kp_eff,n_keypoints,precision,"
          "recall,mean_reproj_err\n";
    os.precision(17);
    for (const auto& e : history)
        os << e.step << ',' << e.expected_reward << ',' << e.theta_m << ',' << e.lambda_fp_eff
           << ',' << e.lambda_kp_eff << ',' << e.n_keypoints << ',' << e.precision << ','
           << e.recall << ',' << e.mean_reproj_err << '\n';
}

void write_train_summary(const TrainResult& res, const TrainConfig& cfg,
                         const std::vector<std::string>& field_manifests,
                         const std::filesystem::path& path) {
    nlohmann::json j;
    j["steps"] = cfg.steps;
    j["shared_field"] = cfg.shared_field;
    j["best_step"] = res.best_step;
    j["best_expected_reward"] = res.best_expected_reward;
    j["config"] = {{"lr", cfg.adam.lr},
                   {"heatmap_eps", cfg.heatmap_eps},
                   {"h", cfg.h},
                   {"n", cfg.n},
                   {"seed", cfg.seed},
                   {"lambda_tp", cfg.rewards.lambda_tp},
                   {"lambda_fp", cfg.rewards.lambda_fp},
                   {"lambda_kp", cfg.rewards.lambda_kp},
                   {"epsilon", cfg.rewards.epsilon},
                   {"anneal_steps", cfg.anneal_steps},
                   {"theta_start", cfg.theta.start},
                   {"theta_end", cfg.theta.end},
                   {"theta_ramp_steps", cfg.theta.ramp_steps},
                   {"eval_interval", cfg.eval_interval},
                   {"nms_radius", cfg.nms_radius},
                   {"ratio", cfg.ratio}};
    if (!res.history.empty()) {
        const EvalEntry& e = res.history.back();
        j["final"] = {{"step", e.step},
                      {"expected_reward", e.expected_reward},
                      {"theta_m", e.theta_m},
                      {"lambda_fp_eff", e.lambda_fp_eff},
                      {"lambda_kp_eff", e.lambda_kp_eff},
                      {"n_keypoints", e.n_keypoints},
                      {"precision", e.precision},
                      {"recall", e.recall},
                      {"mean_reproj_err", e.mean_reproj_err},
                      {"zero_matches", e.zero_matches}};
    }
    j["fields"] = field_manifests;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << j.dump(2) << "\n";
}

}  // namespace disk
