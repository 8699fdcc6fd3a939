#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace disk {

// Binary tensor / manifest parse failure; offset is the byte position the
// reader was at when the problem was detected.
class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& msg, std::size_t offset_)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset_) + ")"),
          offset(offset_) {}
    std::size_t offset;
};

class DegenerateDescriptorError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Learned per-pixel parameters: a detection heatmap (logits) and a raw
// descriptor vector per pixel.  Storage is float32 to match the on-disk
// format; all math on top happens in double.
struct FeatureField {
    int height = 0;
    int width = 0;
    int n = 0;                        // descriptor dimension
    std::vector<float> heatmap;       // height*width, row-major
    std::vector<float> descriptors;   // height*width*n, (y, x, c)

    float heat(int x, int y) const { return heatmap[static_cast<std::size_t>(y) * width + x]; }
    const float* desc_raw(int x, int y) const {
        return descriptors.data() + (static_cast<std::size_t>(y) * width + x) * n;
    }
};

// Gaussian init: heatmap scale 0.1, descriptors scale 1.0.  Deterministic
// in (seed); dimensions must be positive.
FeatureField init_field(int height, int width, int n, std::uint64_t seed);

// Unit-norm descriptor at a pixel, computed in double.  Raw norm under
// 1e-12 raises DegenerateDescriptorError.
std::vector<double> normalized_descriptor(const FeatureField& f, int x, int y);

// Raw float32 tensor files: magic "DSKF", u32 version = 1, u32 height,
// width, channels, then height*width*channels little-endian float32 values
// in (y, x, c) order.  Exact size is enforced; trailing bytes are an error.
struct Tensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
};

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// A field on disk is a JSON manifest {"heatmap": ..., "descriptors": ...,
// "n": ...} whose tensor paths are resolved relative to the manifest.
void save_field(const FeatureField& f, const std::filesystem::path& manifest);
FeatureField load_field(const std::filesystem::path& manifest);

struct Keypoint {
    double x = 0;
    double y = 0;
    double score = 0;
};

// Detected or sampled features plus their unit descriptors (row per
// keypoint, flattened).  log_probs is either empty (inference-mode
// detections) or one entry per keypoint (sampled detections).
struct FeatureSet {
    int width = 0;
    int height = 0;
    int n = 0;
    std::vector<Keypoint> keypoints;
    std::vector<double> descriptors;  // keypoints.size() * n
    std::vector<double> log_probs;

    std::size_t size() const { return keypoints.size(); }
    const double* desc(std::size_t i) const { return descriptors.data() + i * n; }
};

void save_features(const FeatureSet& fs, const std::filesystem::path& path);
FeatureSet load_features(const std::filesystem::path& path);

}  // namespace disk
