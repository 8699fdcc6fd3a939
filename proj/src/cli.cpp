#include "disk/cli.hpp"

#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "disk/gradcheck.hpp"
#include "disk/trainer.hpp"
#include "json.hpp"

namespace disk {

namespace {

constexpr double kGradCheckTolerance = 1e-3;

struct DetectArgs {
    std::string field, out;
    std::string mode = "grid";
    int h = 8;
    int nms_radius = 2;
    long long budget = -1;
};

int cmd_detect(const DetectArgs& a, std::ostream& out) {
    FeatureField f = load_field(a.field);
    FeatureSet fs;
    if (a.mode == "grid")
        fs = detect_argmax(f, partition_grid(f.height, f.width, a.h));
    else
        fs = detect_nms(f, a.nms_radius);
    fs = subsample_by_score(fs, a.budget);
    save_features(fs, a.out);
    out << "detected " << fs.size() << " keypoints -> " << a.out << "\n";
    return 0;
}

struct MatchArgs {
    std::string features_a, features_b, out;
    bool probabilistic = false;
    double ratio = 0.95;
    double theta_m = 50.0;
    double min_prob = 1e-4;
};

int cmd_match(const MatchArgs& a, std::ostream& out) {
    FeatureSet fa = load_features(a.features_a);
    FeatureSet fb = load_features(a.features_b);
    DistanceMatrix dm = distance_matrix(fa, fb);
    MatchSet ms;
    if (a.probabilistic)
        ms = match_probabilities(make_distribution(std::move(dm), a.theta_m), a.min_prob);
    else
        ms = match_inference(dm, a.ratio);
    save_matches(ms, a.out);
    out << "matched " << ms.pairs.size() << " pairs -> " << a.out << "\n";
    return 0;
}

struct GradCheckArgs {
    GradCheckConfig cfg;
    std::string out;
};

int cmd_gradcheck(const GradCheckArgs& a, std::ostream& out, std::ostream& err) {
    if (a.cfg.step < 1e-8)
        err << "warning: step " << a.cfg.step
            << " is small enough for catastrophic cancellation in the differences\n";
    GradCheckReport rep = run_gradcheck(a.cfg);
    if (!a.out.empty()) save_gradcheck_report(rep, kGradCheckTolerance, a.out);
    out << "max relative error " << rep.max_rel_err << " (descriptors "
        << rep.desc_a.max_rel_err << " / " << rep.desc_b.max_rel_err << ", theta "
        << rep.theta.max_rel_err << ")\n";
    bool pass = rep.max_rel_err < kGradCheckTolerance;
    out << (pass ? "PASS" : "FAIL") << " at tolerance " << kGradCheckTolerance << "\n";
    return pass ? 0 : 1;
}

struct TrainArgs {
    std::string out_dir;
    std::string scene_kind = "fronto_planar";
    int height = 64, width = 64;
    double baseline = 0.1;
    double mask_fraction = 0.0;
    int views = 2;
    TrainConfig cfg;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    ToyKind kind;
    if (a.scene_kind == "fronto_planar")
        kind = ToyKind::FrontoPlanar;
    else if (a.scene_kind == "tilted_plane")
        kind = ToyKind::TiltedPlane;
    else
        throw std::invalid_argument("unknown scene kind: " + a.scene_kind);
    std::filesystem::create_directories(a.out_dir);
    Scene scene = generate_toy_scene(kind, a.height, a.width, a.baseline, a.mask_fraction,
                                     a.views, a.cfg.seed);
    save_scene(scene, std::filesystem::path(a.out_dir) / "scene.json");
    TrainConfig cfg = a.cfg;
    cfg.dump_dir = a.out_dir;
    TrainResult res = train_toy(scene, cfg);
    std::vector<std::string> manifests;
    for (std::size_t f = 0; f < res.fields.size(); f++) {
        std::string name = cfg.shared_field ? "field.json" : "field_" + std::to_string(f) + ".json";
        save_field(res.fields[f], std::filesystem::path(a.out_dir) / name);
        manifests.push_back(name);
    }
    write_history_csv(res.history, std::filesystem::path(a.out_dir) / "history.csv");
    write_train_summary(res, cfg, manifests,
                        std::filesystem::path(a.out_dir) / "summary.json");
    if (!res.history.empty()) {
        const EvalEntry& e = res.history.back();
        out << "step " << e.step << ": expected reward " << e.expected_reward
            << ", precision " << e.precision << ", recall " << e.recall << ", keypoints "
            << e.n_keypoints << "\n";
    }
    out << "artifacts in " << a.out_dir << "\n";
    return 0;
}

struct EvalArgs {
    std::string field_a, field_b, scene, out;
    int view_a = 0, view_b = 1;
    std::string mode = "nms";
    int h = 8;
    int nms_radius = 2;
    double ratio = 0.95;
    double epsilon = 2.0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    FeatureField fa = load_field(a.field_a);
    FeatureField fb = load_field(a.field_b);
    Scene scene = load_scene(a.scene);
    if (a.view_a < 0 || a.view_b < 0 ||
        a.view_a >= static_cast<int>(scene.views.size()) ||
        a.view_b >= static_cast<int>(scene.views.size()) || a.view_a == a.view_b)
        throw std::invalid_argument("bad view indices");
    PairEval ev = evaluate_matches(fa, fb, scene, a.view_a, a.view_b,
                                   a.mode == "grid" ? DetectMode::Grid : DetectMode::Nms, a.h,
                                   a.nms_radius, a.ratio, a.epsilon);
    nlohmann::json j = {{"precision", ev.precision},
                        {"recall", ev.recall},
                        {"mean_reproj_err", ev.mean_reproj_err},
                        {"n_matches", ev.n_matches},
                        {"n_correct", ev.n_correct},
                        {"n_keypoints_a", ev.n_keypoints_a},
                        {"n_keypoints_b", ev.n_keypoints_b},
                        {"zero_matches", ev.zero_matches}};
    if (!a.out.empty()) {
        std::ofstream os(a.out);
        if (!os) throw std::runtime_error("cannot open for write: " + a.out);
        os << j.dump(2) << "\n";
    }
    out << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"grid-sampled keypoint fields trained by policy gradient on toy scenes"};
    app.require_subcommand(1);
    // --h is a real flag (grid cell size), so help has no short form
    app.set_help_flag("--help", "print help and exit");

    DetectArgs da;
    CLI::App* detect = app.add_subcommand("detect", "detect keypoints from a field");
    detect->add_option("field", da.field, "field manifest JSON")->required();
    detect->add_option("--out", da.out, "output feature JSON")->required();
    detect->add_option("--mode", da.mode, "grid or nms")
        ->check(CLI::IsMember({"grid", "nms"}));
    detect->add_option("--h", da.h, "grid cell size");
    detect->add_option("--nms-radius", da.nms_radius, "suppression radius");
    detect->add_option("--budget", da.budget, "max keypoints, negative for unlimited");

    MatchArgs ma;
    CLI::App* match = app.add_subcommand("match", "match two feature sets");
    match->add_option("features_a", ma.features_a, "feature JSON for image A")->required();
    match->add_option("features_b", ma.features_b, "feature JSON for image B")->required();
    match->add_option("--out", ma.out, "output match JSON")->required();
    CLI::Option* prob_flag =
        match->add_flag("--probabilistic", ma.probabilistic, "emit all pairs above --min-prob");
    match->add_flag("--inference", "mutual-NN with ratio test (default)")
        ->excludes(prob_flag);
    match->add_option("--ratio", ma.ratio, "second-nearest ratio threshold");
    match->add_option("--theta-m", ma.theta_m, "match sharpness (probabilistic mode)");
    match->add_option("--min-prob", ma.min_prob, "probability floor (probabilistic mode)");

    GradCheckArgs ga;
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient validation");
    gc->add_option("--size", ga.cfg.size, "image side");
    gc->add_option("--n", ga.cfg.n, "descriptor dimension");
    gc->add_option("--features", ga.cfg.features, "keypoints per side");
    gc->add_option("--seed", ga.cfg.seed, "instance seed");
    gc->add_option("--step", ga.cfg.step, "finite-difference step");
    gc->add_option("--theta-m", ga.cfg.theta_m, "match sharpness");
    gc->add_option("--out", ga.out, "report JSON path");

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "train fields on a toy scene");
    train->add_option("--out-dir", ta.out_dir, "output directory")->required();
    train->add_option("--scene-kind", ta.scene_kind, "fronto_planar or tilted_plane")
        ->check(CLI::IsMember({"fronto_planar", "tilted_plane"}));
    train->add_option("--height", ta.height, "scene height");
    train->add_option("--width", ta.width, "scene width");
    train->add_option("--baseline", ta.baseline, "camera displacement");
    train->add_option("--mask-fraction", ta.mask_fraction, "fraction of depth dropped");
    train->add_option("--views", ta.views, "2 or 3 cameras");
    train->add_option("--steps", ta.cfg.steps, "training steps");
    train->add_option("--lr", ta.cfg.adam.lr, "learning rate");
    train->add_option("--beta1", ta.cfg.adam.beta1, "Adam beta1");
    train->add_option("--beta2", ta.cfg.adam.beta2, "Adam beta2");
    train->add_option("--adam-eps", ta.cfg.adam.eps, "Adam epsilon");
    train->add_option("--heatmap-eps", ta.cfg.heatmap_eps,
                      "Adam epsilon for the heatmap (negative: same as --adam-eps)");
    train->add_option("--h", ta.cfg.h, "detection grid cell");
    train->add_option("--n", ta.cfg.n, "descriptor dimension");
    train->add_option("--lambda-tp", ta.cfg.rewards.lambda_tp, "correct match reward");
    train->add_option("--lambda-fp", ta.cfg.rewards.lambda_fp, "incorrect match reward");
    train->add_option("--lambda-kp", ta.cfg.rewards.lambda_kp, "per-keypoint reward");
    train->add_option("--epsilon", ta.cfg.rewards.epsilon, "correctness radius, pixels");
    train->add_option("--anneal-steps", ta.cfg.anneal_steps,
                      "penalty ramp length, -1 for steps/6");
    train->add_option("--theta-start", ta.cfg.theta.start, "initial match sharpness");
    train->add_option("--theta-end", ta.cfg.theta.end, "final match sharpness");
    train->add_option("--theta-ramp", ta.cfg.theta.ramp_steps,
                      "sharpness ramp length, -1 for steps/2");
    train->add_option("--eval-interval", ta.cfg.eval_interval, "steps between checkpoints");
    train->add_option("--seed", ta.cfg.seed, "run seed");
    train->add_flag("--shared-field", ta.cfg.shared_field, "one field for all views");
    train->add_option("--nms-radius", ta.cfg.nms_radius, "eval suppression radius");
    train->add_option("--ratio", ta.cfg.ratio, "eval ratio threshold");

    EvalArgs ea;
    CLI::App* ev = app.add_subcommand("eval", "evaluate two fields against a scene");
    ev->add_option("field_a", ea.field_a, "field manifest for view A")->required();
    ev->add_option("field_b", ea.field_b, "field manifest for view B")->required();
    ev->add_option("scene", ea.scene, "scene JSON")->required();
    ev->add_option("--view-a", ea.view_a, "view index of A");
    ev->add_option("--view-b", ea.view_b, "view index of B");
    ev->add_option("--mode", ea.mode, "grid or nms")->check(CLI::IsMember({"grid", "nms"}));
    ev->add_option("--h", ea.h, "grid cell size");
    ev->add_option("--nms-radius", ea.nms_radius, "suppression radius");
    ev->add_option("--ratio", ea.ratio, "ratio threshold");
    ev->add_option("--epsilon", ea.epsilon, "correctness radius, pixels");
    ev->add_option("--out", ea.out, "report JSON path");

    try {
        // CLI11's vector overload consumes arguments back to front
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (detect->parsed()) return cmd_detect(da, out);
        if (match->parsed()) return cmd_match(ma, out);
        if (gc->parsed()) return cmd_gradcheck(ga, out, err);
        if (train->parsed()) return cmd_train(ta, out);
        if (ev->parsed()) return cmd_eval(ea, out);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace disk
