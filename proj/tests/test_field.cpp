#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "disk/field.hpp"
#include "disk/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace disk;

namespace {

std::vector<char> read_all(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream os(p, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("field: init is deterministic in the seed") {
    FeatureField a = init_field(16, 12, 4, 42);
    FeatureField b = init_field(16, 12, 4, 42);
    FeatureField c = init_field(16, 12, 4, 43);
    CHECK(a.heatmap == b.heatmap);
    CHECK(a.descriptors == b.descriptors);
    CHECK(a.heatmap != c.heatmap);
    CHECK(a.heatmap.size() == 16u * 12u);
    CHECK(a.descriptors.size() == 16u * 12u * 4u);
}

TEST_CASE("field: init moments match the declared scales") {
    FeatureField f = init_field(64, 64, 8, 0);
    double hm = 0, hv = 0;
    for (float x : f.heatmap) hm += x;
    hm /= static_cast<double>(f.heatmap.size());
    for (float x : f.heatmap) hv += (x - hm) * (x - hm);
    hv /= static_cast<double>(f.heatmap.size());
    CHECK(std::abs(hm) < 0.01);
    CHECK(std::sqrt(hv) == doctest::Approx(0.1).epsilon(0.1));

    double dv = 0;
    for (float x : f.descriptors) dv += static_cast<double>(x) * x;
    dv /= static_cast<double>(f.descriptors.size());
    CHECK(std::sqrt(dv) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("field: init rejects bad dimensions") {
    CHECK_THROWS_AS(init_field(0, 8, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(init_field(8, -1, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(init_field(8, 8, 0, 0), std::invalid_argument);
}

TEST_CASE("field: normalized descriptor") {
    FeatureField f;
    f.height = 1;
    f.width = 2;
    f.n = 2;
    f.heatmap = {0.0f, 0.0f};
    f.descriptors = {3.0f, 4.0f, 0.0f, 0.0f};
    std::vector<double> u = normalized_descriptor(f, 0, 0);
    CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK_THROWS_AS(normalized_descriptor(f, 1, 0), DegenerateDescriptorError);
}

TEST_CASE("field: tensor round trip is bit-exact") {
    oracle::TempDir dir("tensor");
    Tensor t;
    t.height = 3;
    t.width = 5;
    t.channels = 2;
    Rng rng(1);
    t.data.resize(30);
    for (float& x : t.data) x = static_cast<float>(rng.normal());
    auto path = dir.path / "t.dskf";
    save_tensor(path, t);
    Tensor u = load_tensor(path);
    CHECK(u.height == t.height);
    CHECK(u.width == t.width);
    CHECK(u.channels == t.channels);
    CHECK(u.data == t.data);
}

TEST_CASE("field: tensor format errors carry byte offsets") {
    oracle::TempDir dir("badtensor");
    Tensor t;
    t.height = 2;
    t.width = 2;
    t.channels = 1;
    t.data = {1.0f, 2.0f, 3.0f, 4.0f};
    auto path = dir.path / "t.dskf";
    save_tensor(path, t);
    std::vector<char> good = read_all(path);
    REQUIRE(good.size() == 20u + 16u);

    auto expect_offset = [&](const std::vector<char>& bytes, std::size_t offset) {
        auto bad = dir.path / "bad.dskf";
        write_all(bad, bytes);
        try {
            load_tensor(bad);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == offset);
            CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
        }
    };

    std::vector<char> magic = good;
    magic[0] = 'X';
    expect_offset(magic, 0);

    std::vector<char> version = good;
    version[4] = 9;
    expect_offset(version, 4);

    std::vector<char> dims = good;
    dims[8] = static_cast<char>(0xff);  // height too large for the file
    dims[9] = static_cast<char>(0xff);
    dims[10] = static_cast<char>(0xff);
    dims[11] = static_cast<char>(0xff);
    expect_offset(dims, 8);

    std::vector<char> short_payload(good.begin(), good.end() - 4);
    expect_offset(short_payload, short_payload.size());

    std::vector<char> trailing = good;
    trailing.push_back(0);
    expect_offset(trailing, good.size());

    std::vector<char> header_only(good.begin(), good.begin() + 10);
    expect_offset(header_only, 10);
}

TEST_CASE("field: manifest round trip") {
    oracle::TempDir dir("field");
    FeatureField f = init_field(10, 8, 3, 7);
    auto manifest = dir.path / "field.json";
    save_field(f, manifest);
    FeatureField g = load_field(manifest);
    CHECK(g.height == f.height);
    CHECK(g.width == f.width);
    CHECK(g.n == f.n);
    CHECK(g.heatmap == f.heatmap);
    CHECK(g.descriptors == f.descriptors);
}

TEST_CASE("field: manifest errors") {
    oracle::TempDir dir("badfield");
    auto manifest = dir.path / "field.json";
    {
        std::ofstream os(manifest);
        os << "{\"heatmap\": \"h.dskf\"}";
    }
    CHECK_THROWS_AS(load_field(manifest), FormatError);
    {
        std::ofstream os(manifest);
        os << "not json";
    }
    CHECK_THROWS_AS(load_field(manifest), FormatError);
    CHECK_THROWS_AS(load_field(dir.path / "missing.json"), std::runtime_error);
}

TEST_CASE("field: manifest rejects mismatched tensors") {
    oracle::TempDir dir("mismatch");
    FeatureField f = init_field(8, 8, 2, 0);
    auto manifest = dir.path / "field.json";
    save_field(f, manifest);
    // overwrite the heatmap with the wrong image size
    Tensor t;
    t.height = 4;
    t.width = 8;
    t.channels = 1;
    t.data.assign(32, 0.0f);
    save_tensor(dir.path / "field.heatmap.dskf", t);
    bool threw = false;
    try {
        load_field(manifest);
    } catch (const FormatError&) {
        threw = true;
    }
    CHECK(threw);
}

TEST_CASE("field: feature set round trip") {
    oracle::TempDir dir("features");
    FeatureSet fs;
    fs.width = 32;
    fs.height = 16;
    fs.n = 3;
    fs.keypoints = {{1.0, 2.0, 0.5}, {30.0, 15.0, -0.25}};
    fs.descriptors = {1, 0, 0, 0, 0.6, 0.8};
    auto path = dir.path / "kp.json";
    save_features(fs, path);
    FeatureSet g = load_features(path);
    REQUIRE(g.size() == 2u);
    CHECK(g.width == fs.width);
    CHECK(g.height == fs.height);
    CHECK(g.n == fs.n);
    CHECK(g.keypoints[1].x == fs.keypoints[1].x);
    CHECK(g.keypoints[1].score == fs.keypoints[1].score);
    CHECK(g.descriptors == fs.descriptors);
    CHECK(g.log_probs.empty());
}

TEST_CASE("field: feature set validation") {
    oracle::TempDir dir("badfeatures");
    auto path = dir.path / "kp.json";

    FeatureSet out_of_bounds;
    out_of_bounds.width = 8;
    out_of_bounds.height = 8;
    out_of_bounds.n = 1;
    out_of_bounds.keypoints = {{9.0, 0.0, 0.0}};
    out_of_bounds.descriptors = {1.0};
    save_features(out_of_bounds, path);
    CHECK_THROWS_AS(load_features(path), FormatError);

    {
        std::ofstream os(path);
        os << R"({"width": 8, "height": 8, "n": 2,
                  "features": [{"x": 1.0, "y": 1.0, "score": 0.0, "desc": [1.0]}]})";
    }
    CHECK_THROWS_AS(load_features(path), FormatError);
}
