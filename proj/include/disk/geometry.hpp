#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

namespace disk {

class ZeroBaselineError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Vec2 {
    double x = 0, y = 0;
};

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }

// row-major 3x3
struct Mat3 {
    std::array<double, 9> a{};

    static Mat3 identity() { return {{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * 3 + c]; }
    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * 3 + c]; }
};

Vec3 operator*(const Mat3& m, Vec3 v);
Mat3 operator*(const Mat3& m, const Mat3& n);
Mat3 transpose(const Mat3& m);
double det(const Mat3& m);
Mat3 inverse(const Mat3& m);
Mat3 skew(Vec3 v);

// World-to-camera extrinsics: X_cam = r * X_world + t.  Depth is a dense
// per-pixel map of camera-frame z; entries that are zero, negative, or
// non-finite mean "no measurement".
struct CameraView {
    Mat3 k;
    Mat3 r;
    Vec3 t;
    int height = 0;
    int width = 0;
    std::vector<float> depth;  // height*width, row-major

    double depth_at(int x, int y) const {
        return static_cast<double>(depth[static_cast<std::size_t>(y) * width + x]);
    }
    bool depth_valid(int x, int y) const;
    // Bilinear interpolation of inverse depth (exact on planar scenes).
    // Integer coordinates read the map directly.  Requires every corner
    // with nonzero weight to hold a valid measurement.
    std::optional<double> depth_subpixel(double x, double y) const;

    // invalid-argument when r is not a rotation, k is not an upper
    // triangular calibration with positive focal lengths, or the depth
    // buffer does not match the image size
    void validate() const;
};

struct Scene {
    std::vector<CameraView> views;
    int height = 0;
    int width = 0;
};

struct Reprojection {
    enum class Status { Ok, NoDepth, BehindCamera };
    Status status = Status::NoDepth;
    Vec2 pixel;
};

// Lifts a source pixel through its depth into the destination view.
Reprojection reproject(const CameraView& src, const CameraView& dst, Vec2 p);

// Symmetric point-to-epipolar-line distance (max of the two directions).
// Identical camera centers raise ZeroBaselineError.
double epipolar_distance(const CameraView& a, const CameraView& b, Vec2 pa, Vec2 pb);

enum class MatchLabel { Correct, Plausible, Incorrect };

// Correct: both depths available and the two-way reprojection lands within
// eps of the other keypoint in both directions.  Plausible: depth
// unavailable on either end (or a reprojection lands behind the camera)
// and the pair sits within eps of epipolar consistency.  Everything else
// is incorrect.  With coincident camera centers the epipolar fallback is
// undefined, so only the correct/incorrect split applies.
MatchLabel classify_match(const Scene& scene, int view_a, int view_b, Vec2 pa, Vec2 pb,
                          double eps);

enum class ToyKind { FrontoPlanar, TiltedPlane };

// Analytic plane scenes used for training and tests.  All cameras share
// intrinsics f = max(width, height), principal point at the image center.
// View 0 sits at the origin, view 1 is displaced by `baseline` along x,
// view 2 (when views == 3) along y; all look down +z.  The plane is
// z = 2 (fronto) or z = 2 + 0.2 * x_world (tilted).  mask_fraction of
// depth entries per view are zeroed at random.
Scene generate_toy_scene(ToyKind kind, int height, int width, double baseline,
                         double mask_fraction, int views, std::uint64_t seed);

void save_scene(const Scene& s, const std::filesystem::path& json_path);
Scene load_scene(const std::filesystem::path& json_path);

}  // namespace disk
