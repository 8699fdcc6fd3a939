#include "disk/geometry.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "disk/field.hpp"
#include "disk/rng.hpp"
#include "json.hpp"

namespace disk {

Vec3 operator*(const Mat3& m, Vec3 v) {
    return {m(0, 0) * v.x + m(0, 1) * v.y + m(0, 2) * v.z,
            m(1, 0) * v.x + m(1, 1) * v.y + m(1, 2) * v.z,
            m(2, 0) * v.x + m(2, 1) * v.y + m(2, 2) * v.z};
}

Mat3 operator*(const Mat3& m, const Mat3& n) {
    Mat3 out;
    for (int r = 0; r < 3; r++)
        for (int c = 0; c < 3; c++) {
            double s = 0;
            for (int k = 0; k < 3; k++) s += m(r, k) * n(k, c);
            out(r, c) = s;
        }
    return out;
}

Mat3 transpose(const Mat3& m) {
    Mat3 out;
    for (int r = 0; r < 3; r++)
        for (int c = 0; c < 3; c++) out(r, c) = m(c, r);
    return out;
}

double det(const Mat3& m) {
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

Mat3 inverse(const Mat3& m) {
    double d = det(m);
    if (std::abs(d) < 1e-15) throw std::invalid_argument("inverse: singular matrix");
    Mat3 out;
    out(0, 0) = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) / d;
    out(0, 1) = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) / d;
    out(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) / d;
    out(1, 0) = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) / d;
    out(1, 1) = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) / d;
    out(1, 2) = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) / d;
    out(2, 0) = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) / d;
    out(2, 1) = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) / d;
    out(2, 2) = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) / d;
    return out;
}

Mat3 skew(Vec3 v) { return {{0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0}}; }

bool CameraView::depth_valid(int x, int y) const {
    double z = depth_at(x, y);
    return std::isfinite(z) && z > 0.0;
}

std::optional<double> CameraView::depth_subpixel(double x, double y) const {
    if (!(x >= 0.0) || !(y >= 0.0) || !(x <= width - 1) || !(y <= height - 1))
        return std::nullopt;
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    double inv = 0.0;
    const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int cx[4] = {x0, x0 + 1, x0, x0 + 1};
    const int cy[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int c = 0; c < 4; c++) {
        if (w[c] == 0.0) continue;
        if (!depth_valid(cx[c], cy[c])) return std::nullopt;
        inv += w[c] / depth_at(cx[c], cy[c]);
    }
    return 1.0 / inv;
}

void CameraView::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("view: bad dimensions");
    if (depth.size() != static_cast<std::size_t>(height) * width)
        throw std::invalid_argument("view: depth buffer size mismatch");
    Mat3 rtr = transpose(r) * r;
    Mat3 id = Mat3::identity();
    for (int i = 0; i < 9; i++)
        if (std::abs(rtr.a[static_cast<std::size_t>(i)] - id.a[static_cast<std::size_t>(i)]) >
            1e-9)
            throw std::invalid_argument("view: r is not orthonormal");
    if (std::abs(det(r) - 1.0) > 1e-9) throw std::invalid_argument("view: r is not a rotation");
    if (!(k(0, 0) > 0) || !(k(1, 1) > 0)) throw std::invalid_argument("view: focal lengths");
    if (k(1, 0) != 0 || k(2, 0) != 0 || k(2, 1) != 0 || k(2, 2) != 1)
        throw std::invalid_argument("view: calibration must be upper triangular with k33 = 1");
}

Reprojection reproject(const CameraView& src, const CameraView& dst, Vec2 p) {
    auto z = src.depth_subpixel(p.x, p.y);
    if (!z) return {Reprojection::Status::NoDepth, {}};
    Vec3 ray = inverse(src.k) * Vec3{p.x, p.y, 1.0};
    Vec3 x_src = (*z / ray.z) * ray;
    Vec3 x_world = transpose(src.r) * (x_src - src.t);
    Vec3 x_dst = dst.r * x_world;
    x_dst = {x_dst.x + dst.t.x, x_dst.y + dst.t.y, x_dst.z + dst.t.z};
    if (x_dst.z <= 1e-9) return {Reprojection::Status::BehindCamera, {}};
    Vec3 h = dst.k * x_dst;
    return {Reprojection::Status::Ok, {h.x / h.z, h.y / h.z}};
}

namespace {

double norm(Vec3 v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

double line_point_distance(Vec3 line, Vec2 p) {
    double denom = std::hypot(line.x, line.y);
    if (denom < 1e-15) return std::numeric_limits<double>::infinity();
    return std::abs(line.x * p.x + line.y * p.y + line.z) / denom;
}

}  // namespace

double epipolar_distance(const CameraView& a, const CameraView& b, Vec2 pa, Vec2 pb) {
    Mat3 r_rel = b.r * transpose(a.r);
    Vec3 t_rel = b.t - r_rel * a.t;
    if (norm(t_rel) < 1e-12)
        throw ZeroBaselineError("epipolar geometry undefined for coincident camera centers");
    Mat3 f = transpose(inverse(b.k)) * (skew(t_rel) * r_rel) * inverse(a.k);
    double db = line_point_distance(f * Vec3{pa.x, pa.y, 1.0}, pb);
    double da = line_point_distance(transpose(f) * Vec3{pb.x, pb.y, 1.0}, pa);
    return std::max(da, db);
}

MatchLabel classify_match(const Scene& scene, int view_a, int view_b, Vec2 pa, Vec2 pb,
                          double eps) {
    if (view_a < 0 || view_b < 0 || view_a >= static_cast<int>(scene.views.size()) ||
        view_b >= static_cast<int>(scene.views.size()) || view_a == view_b)
        throw std::invalid_argument("classify_match: bad view indices");
    const CameraView& a = scene.views[static_cast<std::size_t>(view_a)];
    const CameraView& b = scene.views[static_cast<std::size_t>(view_b)];
    Reprojection ab = reproject(a, b, pa);
    Reprojection ba = reproject(b, a, pb);
    if (ab.status == Reprojection::Status::Ok && ba.status == Reprojection::Status::Ok) {
        double dab = std::hypot(ab.pixel.x - pb.x, ab.pixel.y - pb.y);
        double dba = std::hypot(ba.pixel.x - pa.x, ba.pixel.y - pa.y);
        return (dab <= eps && dba <= eps) ? MatchLabel::Correct : MatchLabel::Incorrect;
    }
    // at least one direction lacks ground truth; fall back to epipolar
    // consistency when the pair's geometry admits it
    if (norm(b.t - (b.r * transpose(a.r)) * a.t) < 1e-12) return MatchLabel::Incorrect;
    return epipolar_distance(a, b, pa, pb) <= eps ? MatchLabel::Plausible : MatchLabel::Incorrect;
}

namespace {

constexpr double kPlaneDepth = 2.0;
constexpr double kPlaneSlope = 0.2;

}  // namespace

Scene generate_toy_scene(ToyKind kind, int height, int width, double baseline,
                         double mask_fraction, int views, std::uint64_t seed) {
    if (height < 8 || width < 8)
        throw std::invalid_argument("generate_toy_scene: dimensions must be at least 8");
    if (baseline == 0.0)
        throw std::invalid_argument("generate_toy_scene: baseline must be nonzero");
    if (!(mask_fraction >= 0.0 && mask_fraction <= 0.9))
        throw std::invalid_argument("generate_toy_scene: mask_fraction outside [0, 0.9]");
    if (views != 2 && views != 3)
        throw std::invalid_argument("generate_toy_scene: views must be 2 or 3");
    double f = static_cast<double>(std::max(width, height));
    double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    Mat3 k = {{f, 0, cx, 0, f, cy, 0, 0, 1}};
    Vec3 centers[3] = {{0, 0, 0}, {baseline, 0, 0}, {0, baseline, 0}};
    Scene s;
    s.height = height;
    s.width = width;
    for (int v = 0; v < views; v++) {
        CameraView cam;
        cam.k = k;
        cam.r = Mat3::identity();
        cam.t = {-centers[v].x, -centers[v].y, -centers[v].z};
        cam.height = height;
        cam.width = width;
        cam.depth.resize(static_cast<std::size_t>(height) * width);
        for (int y = 0; y < height; y++)
            for (int x = 0; x < width; x++) {
                double z;
                if (kind == ToyKind::FrontoPlanar) {
                    z = kPlaneDepth;
                } else {
                    double m = (x - cx) / f;
                    z = (kPlaneDepth + kPlaneSlope * centers[v].x) / (1.0 - kPlaneSlope * m);
                }
                cam.depth[static_cast<std::size_t>(y) * width + x] = static_cast<float>(z);
            }
        if (mask_fraction > 0.0) {
            Rng rng(mix_seed(seed, 100 + static_cast<std::uint64_t>(v)));
            for (auto& z : cam.depth)
                if (rng.uniform() < mask_fraction) z = 0.0f;
        }
        cam.validate();
        s.views.push_back(std::move(cam));
    }
    return s;
}

void save_scene(const Scene& s, const std::filesystem::path& json_path) {
    std::filesystem::path dir = json_path.parent_path();
    std::string stem = json_path.stem().string();
    nlohmann::json j;
    j["height"] = s.height;
    j["width"] = s.width;
    nlohmann::json views = nlohmann::json::array();
    for (std::size_t v = 0; v < s.views.size(); v++) {
        const CameraView& cam = s.views[v];
        std::string depth_name = stem + ".depth" + std::to_string(v) + ".dskf";
        save_tensor(dir / depth_name, Tensor{cam.height, cam.width, 1, cam.depth});
        nlohmann::json e;
        e["k"] = cam.k.a;
        e["r"] = cam.r.a;
        e["t"] = std::array<double, 3>{cam.t.x, cam.t.y, cam.t.z};
        e["depth"] = depth_name;
        views.push_back(std::move(e));
    }
    j["views"] = std::move(views);
    std::ofstream os(json_path);
    if (!os) throw std::runtime_error("cannot open for write: " + json_path.string());
    os << j.dump(2) << "\n";
}

Scene load_scene(const std::filesystem::path& json_path) {
    std::ifstream is(json_path);
    if (!is) throw std::runtime_error("cannot open: " + json_path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path.string() + ": " + e.what(), 0);
    }
    Scene s;
    try {
        s.height = j.at("height").get<int>();
        s.width = j.at("width").get<int>();
        for (const auto& e : j.at("views")) {
            CameraView cam;
            cam.k.a = e.at("k").get<std::array<double, 9>>();
            cam.r.a = e.at("r").get<std::array<double, 9>>();
            auto t = e.at("t").get<std::array<double, 3>>();
            cam.t = {t[0], t[1], t[2]};
            Tensor d = load_tensor(json_path.parent_path() / e.at("depth").get<std::string>());
            if (d.channels != 1 || d.height != s.height || d.width != s.width)
                throw FormatError(json_path.string() + ": depth map shape mismatch", 8);
            cam.height = d.height;
            cam.width = d.width;
            cam.depth = std::move(d.data);
            cam.validate();
            s.views.push_back(std::move(cam));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path.string() + ": " + e.what(), 0);
    }
    if (s.views.size() < 2)
        throw FormatError(json_path.string() + ": scene needs at least 2 views", 0);
    return s;
}

}  // namespace disk
