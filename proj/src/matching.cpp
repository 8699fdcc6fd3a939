#include "disk/matching.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "disk/kernels.hpp"
#include "disk/numeric.hpp"
#include "disk/parallel.hpp"
#include "disk/rng.hpp"
#include "json.hpp"

namespace disk {

DistanceMatrix distance_matrix(const FeatureSet& a, const FeatureSet& b) {
    if (a.n != b.n)
        throw std::invalid_argument("distance_matrix: descriptor dimensions disagree");
    DistanceMatrix dm;
    dm.rows = a.size();
    dm.cols = b.size();
    dm.d.resize(dm.rows * dm.cols);
    std::size_t n = static_cast<std::size_t>(a.n);
    parallel_for(dm.rows, [&](std::size_t i) {
        for (std::size_t j = 0; j < dm.cols; j++)
            dm.d[i * dm.cols + j] = std::sqrt(kernels::l2_sqr(a.desc(i), b.desc(j), n));
    });
    return dm;
}

MatchDistribution make_distribution(DistanceMatrix d, double theta) {
    if (!(theta > 0.0)) throw std::invalid_argument("make_distribution: theta must be positive");
    MatchDistribution md;
    md.theta = theta;
    md.dist = std::move(d);
    std::size_t rows = md.dist.rows, cols = md.dist.cols;
    md.fwd.resize(rows * cols);
    md.rev.resize(rows * cols);
    if (rows == 0 || cols == 0) return md;
    parallel_for(rows, [&](std::size_t i) {
        std::vector<double> logits(cols);
        for (std::size_t j = 0; j < cols; j++) logits[j] = -theta * md.dist.at(i, j);
        softmax(logits, std::span<double>(md.fwd.data() + i * cols, cols));
    });
    parallel_for(cols, [&](std::size_t j) {
        std::vector<double> logits(rows), probs(rows);
        for (std::size_t i = 0; i < rows; i++) logits[i] = -theta * md.dist.at(i, j);
        softmax(logits, probs);
        for (std::size_t i = 0; i < rows; i++) md.rev[i * cols + j] = probs[i];
    });
    return md;
}

double expected_reward(const MatchDistribution& md, const std::vector<double>& rewards) {
    std::size_t rows = md.dist.rows, cols = md.dist.cols;
    if (rewards.size() != rows * cols)
        throw std::invalid_argument("expected_reward: reward matrix shape mismatch");
    double total = 0.0;
    for (std::size_t k = 0; k < rows * cols; k++) total += md.fwd[k] * md.rev[k] * rewards[k];
    return total;
}

MatchSet sample_matches(const MatchDistribution& md, std::uint64_t seed) {
    std::size_t rows = md.dist.rows, cols = md.dist.cols;
    MatchSet ms;
    ms.theta_m = md.theta;
    if (rows == 0 || cols == 0) return ms;
    Rng rng(seed);
    std::vector<std::size_t> fwd_pick(rows), rev_pick(cols);
    for (std::size_t i = 0; i < rows; i++)
        fwd_pick[i] = rng.categorical(std::span<const double>(md.fwd.data() + i * cols, cols));
    std::vector<double> col(rows);
    for (std::size_t j = 0; j < cols; j++) {
        for (std::size_t i = 0; i < rows; i++) col[i] = md.rev[i * cols + j];
        rev_pick[j] = rng.categorical(col);
    }
    for (std::size_t i = 0; i < rows; i++) {
        std::size_t j = fwd_pick[i];
        if (rev_pick[j] == i) ms.pairs.push_back({i, j, md.pair_prob(i, j)});
    }
    return ms;
}

MatchSet match_probabilities(const MatchDistribution& md, double min_prob) {
    MatchSet ms;
    ms.theta_m = md.theta;
    for (std::size_t i = 0; i < md.dist.rows; i++)
        for (std::size_t j = 0; j < md.dist.cols; j++) {
            double p = md.pair_prob(i, j);
            if (p >= min_prob) ms.pairs.push_back({i, j, p});
        }
    return ms;
}

namespace {

// smallest and second-smallest entry over index k in [0, n) of get(k);
// ties for the argmin resolve to the smallest index
template <typename F>
void two_smallest(std::size_t n, F get, std::size_t& arg, double& best, double& second) {
    arg = 0;
    best = get(0);
    second = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < n; k++) {
        double v = get(k);
        if (v < best) {
            second = best;
            best = v;
            arg = k;
        } else if (v < second) {
            second = v;
        }
    }
}

}  // namespace

MatchSet match_inference(const DistanceMatrix& d, double ratio) {
    if (!(ratio > 0.0) || ratio > 1.0)
        throw std::invalid_argument("match_inference: ratio must be in (0, 1]");
    MatchSet ms;
    ms.ratio_threshold = ratio;
    if (d.rows == 0 || d.cols == 0) return ms;
    // a zero second-nearest distance means the best match is ambiguous, so
    // the test rejects it regardless of the threshold
    std::vector<std::size_t> fwd(d.rows);
    std::vector<char> fwd_ok(d.rows);
    for (std::size_t i = 0; i < d.rows; i++) {
        double best, second;
        two_smallest(d.cols, [&](std::size_t j) { return d.at(i, j); }, fwd[i], best, second);
        fwd_ok[i] = d.cols == 1 || (second > 0.0 && best <= ratio * second);
    }
    std::vector<std::size_t> rev(d.cols);
    std::vector<char> rev_ok(d.cols);
    for (std::size_t j = 0; j < d.cols; j++) {
        double best, second;
        two_smallest(d.rows, [&](std::size_t i) { return d.at(i, j); }, rev[j], best, second);
        rev_ok[j] = d.rows == 1 || (second > 0.0 && best <= ratio * second);
    }
    for (std::size_t i = 0; i < d.rows; i++) {
        std::size_t j = fwd[i];
        if (rev[j] == i && fwd_ok[i] && rev_ok[j]) ms.pairs.push_back({i, j, std::nullopt});
    }
    return ms;
}

void save_matches(const MatchSet& ms, const std::filesystem::path& path) {
    nlohmann::json j;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : ms.pairs) {
        nlohmann::json e;
        e["i"] = p.i;
        e["j"] = p.j;
        if (p.p) e["p"] = *p.p;
        arr.push_back(std::move(e));
    }
    j["pairs"] = std::move(arr);
    if (ms.theta_m) j["theta_m"] = *ms.theta_m;
    if (ms.ratio_threshold) j["ratio_threshold"] = *ms.ratio_threshold;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << j.dump(2) << "\n";
}

MatchSet load_matches(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what(), 0);
    }
    MatchSet ms;
    try {
        for (const auto& e : j.at("pairs")) {
            MatchPair p;
            p.i = e.at("i").get<std::size_t>();
            p.j = e.at("j").get<std::size_t>();
            if (e.contains("p")) p.p = e["p"].get<double>();
            ms.pairs.push_back(p);
        }
        if (j.contains("theta_m")) ms.theta_m = j["theta_m"].get<double>();
        if (j.contains("ratio_threshold")) ms.ratio_threshold = j["ratio_threshold"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what(), 0);
    }
    return ms;
}

}  // namespace disk
