#include "disk/field.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "disk/kernels.hpp"
#include "disk/rng.hpp"
#include "json.hpp"

namespace disk {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'K', 'F'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const std::vector<unsigned char>& buf, std::size_t off) {
    return static_cast<std::uint32_t>(buf[off]) |
           static_cast<std::uint32_t>(buf[off + 1]) << 8 |
           static_cast<std::uint32_t>(buf[off + 2]) << 16 |
           static_cast<std::uint32_t>(buf[off + 3]) << 24;
}

}  // namespace

FeatureField init_field(int height, int width, int n, std::uint64_t seed) {
    if (height <= 0 || width <= 0 || n <= 0)
        throw std::invalid_argument("init_field: dimensions must be positive");
    FeatureField f;
    f.height = height;
    f.width = width;
    f.n = n;
    std::size_t hw = static_cast<std::size_t>(height) * width;
    f.heatmap.resize(hw);
    f.descriptors.resize(hw * n);
    Rng hr(mix_seed(seed, 0));
    for (auto& v : f.heatmap) v = static_cast<float>(0.1 * hr.normal());
    Rng dr(mix_seed(seed, 1));
    for (auto& v : f.descriptors) v = static_cast<float>(dr.normal());
    return f;
}

std::vector<double> normalized_descriptor(const FeatureField& f, int x, int y) {
    std::vector<double> d(static_cast<std::size_t>(f.n));
    const float* raw = f.desc_raw(x, y);
    for (int c = 0; c < f.n; c++) d[c] = static_cast<double>(raw[c]);
    double norm = std::sqrt(kernels::dot(d.data(), d.data(), d.size()));
    if (norm < 1e-12)
        throw DegenerateDescriptorError("descriptor norm below 1e-12 at pixel (" +
                                        std::to_string(x) + ", " + std::to_string(y) + ")");
    kernels::scale(1.0 / norm, d.data(), d.size());
    return d;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    if (t.height <= 0 || t.width <= 0 || t.channels <= 0)
        throw std::invalid_argument("save_tensor: dimensions must be positive");
    std::size_t count = static_cast<std::size_t>(t.height) * t.width * t.channels;
    if (t.data.size() != count) throw std::invalid_argument("save_tensor: data size mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(t.height));
    put_u32(os, static_cast<std::uint32_t>(t.width));
    put_u32(os, static_cast<std::uint32_t>(t.channels));
    for (float v : t.data) put_u32(os, std::bit_cast<std::uint32_t>(v));
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError(path.string() + ": bad magic", 0);
    if (buf.size() < 20) throw FormatError(path.string() + ": truncated header", buf.size());
    std::uint32_t version = get_u32(buf, 4);
    if (version != kVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version), 4);
    Tensor t;
    t.height = static_cast<int>(get_u32(buf, 8));
    t.width = static_cast<int>(get_u32(buf, 12));
    t.channels = static_cast<int>(get_u32(buf, 16));
    if (t.height <= 0 || t.width <= 0 || t.channels <= 0)
        throw FormatError(path.string() + ": bad dimensions", 8);
    std::size_t count = static_cast<std::size_t>(t.height) * t.width * t.channels;
    std::size_t expect = 20 + count * 4;
    if (buf.size() < expect)
        throw FormatError(path.string() + ": truncated payload, expected " +
                              std::to_string(expect) + " bytes",
                          buf.size());
    if (buf.size() > expect)
        throw FormatError(path.string() + ": trailing bytes after payload", expect);
    t.data.resize(count);
    for (std::size_t i = 0; i < count; i++)
        t.data[i] = std::bit_cast<float>(get_u32(buf, 20 + i * 4));
    return t;
}

void save_field(const FeatureField& f, const std::filesystem::path& manifest) {
    std::filesystem::path dir = manifest.parent_path();
    std::string stem = manifest.stem().string();
    std::string heat_name = stem + ".heatmap.dskf";
    std::string desc_name = stem + ".descriptors.dskf";
    save_tensor(dir / heat_name, Tensor{f.height, f.width, 1, f.heatmap});
    save_tensor(dir / desc_name, Tensor{f.height, f.width, f.n, f.descriptors});
    nlohmann::json j;
    j["heatmap"] = heat_name;
    j["descriptors"] = desc_name;
    j["n"] = f.n;
    std::ofstream os(manifest);
    if (!os) throw std::runtime_error("cannot open for write: " + manifest.string());
    os << j.dump(2) << "\n";
}

FeatureField load_field(const std::filesystem::path& manifest) {
    std::ifstream is(manifest);
    if (!is) throw std::runtime_error("cannot open: " + manifest.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what(), 0);
    }
    if (!j.contains("heatmap") || !j.contains("descriptors") || !j.contains("n"))
        throw FormatError(manifest.string() + ": manifest missing heatmap/descriptors/n", 0);
    std::filesystem::path dir = manifest.parent_path();
    Tensor heat = load_tensor(dir / j["heatmap"].get<std::string>());
    Tensor desc = load_tensor(dir / j["descriptors"].get<std::string>());
    int n = j["n"].get<int>();
    if (heat.channels != 1)
        throw FormatError(manifest.string() + ": heatmap must have 1 channel", 16);
    if (desc.channels != n)
        throw FormatError(manifest.string() + ": descriptor channels disagree with manifest n", 16);
    if (heat.height != desc.height || heat.width != desc.width)
        throw FormatError(manifest.string() + ": heatmap and descriptor dimensions disagree", 8);
    FeatureField f;
    f.height = heat.height;
    f.width = heat.width;
    f.n = n;
    f.heatmap = std::move(heat.data);
    f.descriptors = std::move(desc.data);
    return f;
}

void save_features(const FeatureSet& fs, const std::filesystem::path& path) {
    nlohmann::json j;
    j["width"] = fs.width;
    j["height"] = fs.height;
    j["n"] = fs.n;
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < fs.size(); i++) {
        nlohmann::json e;
        e["x"] = fs.keypoints[i].x;
        e["y"] = fs.keypoints[i].y;
        e["score"] = fs.keypoints[i].score;
        e["desc"] = std::vector<double>(fs.desc(i), fs.desc(i) + fs.n);
        arr.push_back(std::move(e));
    }
    j["features"] = std::move(arr);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << j.dump(2) << "\n";
}

FeatureSet load_features(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what(), 0);
    }
    FeatureSet fs;
    try {
        fs.width = j.at("width").get<int>();
        fs.height = j.at("height").get<int>();
        fs.n = j.at("n").get<int>();
        if (fs.width <= 0 || fs.height <= 0 || fs.n <= 0)
            throw FormatError(path.string() + ": bad dimensions", 0);
        for (const auto& e : j.at("features")) {
            Keypoint kp;
            kp.x = e.at("x").get<double>();
            kp.y = e.at("y").get<double>();
            kp.score = e.at("score").get<double>();
            if (kp.x < 0 || kp.x >= fs.width || kp.y < 0 || kp.y >= fs.height)
                throw FormatError(path.string() + ": keypoint out of bounds", 0);
            auto d = e.at("desc").get<std::vector<double>>();
            if (static_cast<int>(d.size()) != fs.n)
                throw FormatError(path.string() + ": descriptor length disagrees with n", 0);
            fs.keypoints.push_back(kp);
            fs.descriptors.insert(fs.descriptors.end(), d.begin(), d.end());
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what(), 0);
    }
    return fs;
}

}  // namespace disk
