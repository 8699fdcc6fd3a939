#include "disk/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "disk/kernels.hpp"
#include "disk/numeric.hpp"
#include "disk/rng.hpp"
#include "json.hpp"

namespace disk {

namespace {

struct Instance {
    FeatureField fa, fb;
    SampledDetections sa, sb;
    Scene scene;
    std::vector<double> rewards;
    // raw descriptor rows at the sampled pixels, the variables the check
    // differentiates with respect to
    std::vector<double> raw_a, raw_b;
};

void add_feature(SampledDetections& s, const FeatureField& f, int x, int y) {
    s.features.keypoints.push_back(
        {static_cast<double>(x), static_cast<double>(y), static_cast<double>(f.heat(x, y))});
    std::vector<double> d = normalized_descriptor(f, x, y);
    s.features.descriptors.insert(s.features.descriptors.end(), d.begin(), d.end());
    int c = s.grid.cell_of(x, y);
    std::vector<double> logits = cell_logits(f, s.grid, c);
    auto rect = s.grid.rect(c);
    std::size_t li = static_cast<std::size_t>(y - rect.y0) * rect.w + (x - rect.x0);
    s.features.log_probs.push_back(log_softmax_at(logits, li) + log_sigmoid(logits[li]));
    s.cells.push_back(c);
}

Instance build_instance(const GradCheckConfig& cfg) {
    if (cfg.size < 8) throw std::invalid_argument("gradcheck: size must be at least 8");
    if (cfg.features < 1) throw std::invalid_argument("gradcheck: need at least one feature");
    Instance ins;
    ins.scene = generate_toy_scene(ToyKind::FrontoPlanar, cfg.size, cfg.size, 0.1, 0.15, 2,
                                   cfg.seed);
    ins.fa = init_field(cfg.size, cfg.size, cfg.n, mix_seed(cfg.seed, 11));
    ins.fb = init_field(cfg.size, cfg.size, cfg.n, mix_seed(cfg.seed, 12));
    GridSpec grid = partition_grid(cfg.size, cfg.size, 4);
    if (cfg.features > grid.cell_count())
        throw std::invalid_argument("gradcheck: more features than grid cells");
    ins.sa.grid = ins.sb.grid = grid;
    ins.sa.features.width = ins.sb.features.width = cfg.size;
    ins.sa.features.height = ins.sb.features.height = cfg.size;
    ins.sa.features.n = ins.sb.features.n = cfg.n;

    Rng rng(mix_seed(cfg.seed, 13));
    auto pick_cells = [&](int count) {
        std::vector<int> cells(static_cast<std::size_t>(grid.cell_count()));
        std::iota(cells.begin(), cells.end(), 0);
        for (std::size_t i = cells.size(); i > 1; i--)
            std::swap(cells[i - 1], cells[rng.raw() % i]);
        cells.resize(static_cast<std::size_t>(count));
        return cells;
    };
    std::vector<char> used_b(static_cast<std::size_t>(grid.cell_count()), 0);
    std::vector<int> cells_a = pick_cells(cfg.features);
    for (int c : cells_a) {
        auto r = grid.rect(c);
        int x = r.x0 + static_cast<int>(rng.raw() % static_cast<std::uint64_t>(r.w));
        int y = r.y0 + static_cast<int>(rng.raw() % static_cast<std::uint64_t>(r.h));
        add_feature(ins.sa, ins.fa, x, y);
    }
    // plant half the B side at true correspondences of A's keypoints so
    // correct pairs exist alongside random (mostly incorrect) ones
    int planted = 0;
    for (std::size_t i = 0; i < ins.sa.features.size() && planted < cfg.features / 2; i++) {
        Vec2 p{ins.sa.features.keypoints[i].x, ins.sa.features.keypoints[i].y};
        Reprojection rp = reproject(ins.scene.views[0], ins.scene.views[1], p);
        if (rp.status != Reprojection::Status::Ok) continue;
        int x = static_cast<int>(std::lround(rp.pixel.x));
        int y = static_cast<int>(std::lround(rp.pixel.y));
        if (x < 0 || y < 0 || x >= cfg.size || y >= cfg.size) continue;
        int c = grid.cell_of(x, y);
        if (used_b[static_cast<std::size_t>(c)]) continue;
        used_b[static_cast<std::size_t>(c)] = 1;
        add_feature(ins.sb, ins.fb, x, y);
        planted++;
    }
    for (int c : pick_cells(grid.cell_count())) {
        if (static_cast<int>(ins.sb.features.size()) >= cfg.features) break;
        if (used_b[static_cast<std::size_t>(c)]) continue;
        used_b[static_cast<std::size_t>(c)] = 1;
        auto r = grid.rect(c);
        int x = r.x0 + static_cast<int>(rng.raw() % static_cast<std::uint64_t>(r.w));
        int y = r.y0 + static_cast<int>(rng.raw() % static_cast<std::uint64_t>(r.h));
        add_feature(ins.sb, ins.fb, x, y);
    }

    RewardConfig rc;
    ins.rewards = reward_matrix(ins.sa.features, ins.sb.features, ins.scene, 0, 1, rc);
    auto gather = [](const SampledDetections& s, const FeatureField& f) {
        std::vector<double> raw;
        for (const auto& kp : s.features.keypoints) {
            const float* p = f.desc_raw(static_cast<int>(kp.x), static_cast<int>(kp.y));
            for (int c = 0; c < f.n; c++) raw.push_back(static_cast<double>(p[c]));
        }
        return raw;
    };
    ins.raw_a = gather(ins.sa, ins.fa);
    ins.raw_b = gather(ins.sb, ins.fb);
    return ins;
}

// expected matching reward as a function of the raw descriptor rows and
// theta; the forward path the finite differences probe
double forward(const Instance& ins, const std::vector<double>& raw_a,
               const std::vector<double>& raw_b, double theta, int n) {
    auto units = [n](const std::vector<double>& raw, FeatureSet proto) {
        FeatureSet fs = std::move(proto);
        fs.descriptors.assign(raw.begin(), raw.end());
        std::size_t k = raw.size() / static_cast<std::size_t>(n);
        for (std::size_t i = 0; i < k; i++) {
            double* d = fs.descriptors.data() + i * static_cast<std::size_t>(n);
            double nrm = std::sqrt(kernels::dot(d, d, static_cast<std::size_t>(n)));
            kernels::scale(1.0 / nrm, d, static_cast<std::size_t>(n));
        }
        return fs;
    };
    FeatureSet a = units(raw_a, ins.sa.features);
    FeatureSet b = units(raw_b, ins.sb.features);
    MatchDistribution md = make_distribution(distance_matrix(a, b), theta);
    return expected_reward(md, ins.rewards);
}

void tally(GradCheckBlock& blk, double analytic, double fd) {
    double e = rel_err(analytic, fd);
    blk.max_rel_err = std::max(blk.max_rel_err, e);
    blk.mean_rel_err += e;
    blk.count++;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
    Instance ins = build_instance(cfg);
    RewardConfig rc;
    PairGradient pg = pair_gradient(ins.fa, ins.fb, ins.sa, ins.sb, ins.scene, 0, 1,
                                    cfg.theta_m, rc, false);
    GradCheckReport rep;
    rep.cfg = cfg;
    double h = cfg.step;

    auto check_side = [&](GradCheckBlock& blk, std::vector<double>& raw, bool is_a,
                          const SampledDetections& s, const FieldGrad& fg) {
        std::size_t n = static_cast<std::size_t>(cfg.n);
        for (std::size_t i = 0; i < s.features.size(); i++) {
            int x = static_cast<int>(s.features.keypoints[i].x);
            int y = static_cast<int>(s.features.keypoints[i].y);
            const double* g =
                fg.d_descriptors.data() +
                (static_cast<std::size_t>(y) * fg.width + x) * n;
            for (std::size_t c = 0; c < n; c++) {
                std::size_t idx = i * n + c;
                double save = raw[idx];
                raw[idx] = save + h;
                double up = is_a ? forward(ins, raw, ins.raw_b, cfg.theta_m, cfg.n)
                                 : forward(ins, ins.raw_a, raw, cfg.theta_m, cfg.n);
                raw[idx] = save - h;
                double dn = is_a ? forward(ins, raw, ins.raw_b, cfg.theta_m, cfg.n)
                                 : forward(ins, ins.raw_a, raw, cfg.theta_m, cfg.n);
                raw[idx] = save;
                tally(blk, g[c], (up - dn) / (2.0 * h));
            }
        }
    };
    std::vector<double> raw_a = ins.raw_a, raw_b = ins.raw_b;
    check_side(rep.desc_a, raw_a, true, ins.sa, pg.a);
    check_side(rep.desc_b, raw_b, false, ins.sb, pg.b);

    double up = forward(ins, ins.raw_a, ins.raw_b, cfg.theta_m + h, cfg.n);
    double dn = forward(ins, ins.raw_a, ins.raw_b, cfg.theta_m - h, cfg.n);
    tally(rep.theta, pg.d_theta_m, (up - dn) / (2.0 * h));

    for (GradCheckBlock* b : {&rep.desc_a, &rep.desc_b, &rep.theta}) {
        if (b->count) b->mean_rel_err /= static_cast<double>(b->count);
        rep.max_rel_err = std::max(rep.max_rel_err, b->max_rel_err);
    }
    return rep;
}

void save_gradcheck_report(const GradCheckReport& r, double threshold,
                           const std::filesystem::path& path) {
    nlohmann::json j;
    j["size"] = r.cfg.size;
    j["n"] = r.cfg.n;
    j["features"] = r.cfg.features;
    j["seed"] = r.cfg.seed;
    j["step"] = r.cfg.step;
    j["theta_m"] = r.cfg.theta_m;
    auto blk = [](const GradCheckBlock& b) {
        return nlohmann::json{{"max_rel_err", b.max_rel_err},
                              {"mean_rel_err", b.mean_rel_err},
                              {"count", b.count}};
    };
    j["blocks"] = {{"descriptors_a", blk(r.desc_a)},
                   {"descriptors_b", blk(r.desc_b)},
                   {"theta_m", blk(r.theta)}};
    j["max_rel_err"] = r.max_rel_err;
    j["threshold"] = threshold;
    j["pass"] = r.max_rel_err < threshold;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << j.dump(2) << "\n";
}

}  // namespace disk
