#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "doctest.h"
#include "drum/errors.hpp"
#include "drum/io.hpp"
#include "drum/lidar.hpp"
#include "drum/toy_scene.hpp"
#include "support.hpp"

using namespace drum;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double r_max) {
  Rng rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> r(1.0, r_max), az(-std::numbers::pi, std::numbers::pi), el(-14.0, 2.0),
      refl(0.0, 1.0);
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) {
    const double rr = r(rng), a = az(rng), e = el(rng) * std::numbers::pi / 180.0;
    pc.points.push_back({rr * std::cos(e) * std::cos(a), rr * std::cos(e) * std::sin(a), rr * std::sin(e), refl(rng)});
  }
  return pc;
}

RangeImage random_image(const SensorIntrinsics& intr, std::uint64_t seed, double drop_p) {
  Rng rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RangeImage img(intr);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    if (u(rng) < drop_p) continue;
    img.range[i] = 0.5 + u(rng) * (intr.max_range - 0.5);
    img.reflectance[i] = u(rng);
  }
  return img;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

}  // namespace

TEST_SUITE("lidar-data") {
  TEST_CASE("intrinsics validation") {
    SensorIntrinsics i;
    CHECK_NOTHROW(i.validate());
    i.fov_up = -20.0;
    CHECK_THROWS_AS(i.validate(), InvalidArgument);
    i = {};
    i.max_range = 0.0;
    CHECK_THROWS_AS(i.validate(), InvalidArgument);
    i = {};
    i.height = 2;
    CHECK_THROWS_AS(i.validate(), InvalidArgument);
  }

  TEST_CASE("range normalization examples") {
    // log(9) / log(81) = 1/2, so 8 m maps to 0 at an 80 m ceiling.
    CHECK(normalize_range(8.0, 80.0) == doctest::Approx(0.0).epsilon(1e-15).scale(1.0));
    CHECK(normalize_range(80.0, 80.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(normalize_range(0.0, 80.0) == -1.0);
    CHECK(normalize_range(kDropRange, 80.0) == -1.0);
    double prev = -1.0;
    for (int k = 1; k <= 800; ++k) {
      const double cur = normalize_range(0.1 * k, 80.0);
      CHECK(cur > prev);
      prev = cur;
    }
  }

  TEST_CASE("normalize maps reflectance affinely and drops to -1") {
    SensorIntrinsics intr;
    intr.height = 4;
    intr.width = 4;
    RangeImage img(intr);
    img.range[1] = 10.0;
    img.reflectance[1] = 0.25;
    const Tensor x = normalize(img);
    CHECK(x.shape() == Shape{2, 4, 4});
    CHECK(x.channel(0)[0] == -1.0);
    CHECK(x.channel(1)[0] == -1.0);
    CHECK(x.channel(1)[1] == -0.5);
  }

  TEST_CASE("denormalize inverts normalize within 1e-6 m") {
    SensorIntrinsics intr;
    intr.height = 8;
    intr.width = 16;
    const RangeImage img = random_image(intr, 1, 0.2);
    const RangeImage back = denormalize(normalize(img), intr);
    for (std::size_t i = 0; i < img.pixels(); ++i) {
      CHECK(back.is_drop(i) == img.is_drop(i));
      if (!img.is_drop(i)) {
        CHECK(std::abs(back.range[i] - img.range[i]) <= 1e-6);
        CHECK(std::abs(back.reflectance[i] - img.reflectance[i]) <= 1e-12);
      }
    }
    CHECK_NOTHROW(back.validate());
  }

  TEST_CASE("denormalize thresholds, clamps and checks shape") {
    SensorIntrinsics intr;
    intr.height = 4;
    intr.width = 4;
    Tensor x(Shape{2, 4, 4}, -1.0);
    x.channel(0)[0] = -0.9995;
    x.channel(0)[1] = -0.998;
    x.channel(0)[2] = 1.3;
    x.channel(1)[2] = 2.0;
    const RangeImage img = denormalize(x, intr);
    CHECK(img.is_drop(0));
    CHECK(!img.is_drop(1));
    CHECK(img.range[2] == intr.max_range);
    CHECK(img.reflectance[2] == 1.0);
    CHECK(img.reflectance[1] == 0.0);
    CHECK_THROWS_AS(denormalize(Tensor(Shape{2, 4, 8}), intr), InvalidArgument);
  }

  TEST_CASE("range image validation") {
    SensorIntrinsics intr;
    intr.height = 4;
    intr.width = 4;
    RangeImage img(intr);
    CHECK_NOTHROW(img.validate());
    img.range[3] = 81.0;
    CHECK_THROWS_AS(img.validate(), InvalidArgument);
    img.range[3] = 0.0;
    CHECK_THROWS_AS(img.validate(), InvalidArgument);
    img.range[3] = 5.0;
    img.reflectance[3] = 1.5;
    CHECK_THROWS_AS(img.validate(), InvalidArgument);
  }

  TEST_CASE("projection of a point on the horizon") {
    SensorIntrinsics intr;
    intr.fov_up = 10.0;
    intr.fov_down = -10.0;
    PointCloud pc;
    pc.points.push_back({10.0, 0.0, 0.0, 0.4});
    const RangeImage img = project(pc, intr);
    const std::size_t i = img.index(16, intr.width / 2);
    CHECK(img.range[i] == 10.0);
    CHECK(img.reflectance[i] == 0.4);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < img.pixels(); ++k) hits += !img.is_drop(k);
    CHECK(hits == 1);
  }

  TEST_CASE("projection of an empty cloud is all drops") {
    const RangeImage img = project(PointCloud{}, SensorIntrinsics{});
    for (std::size_t k = 0; k < img.pixels(); ++k) CHECK(img.is_drop(k));
  }

  TEST_CASE("projection keeps the nearest of colliding points and discards out-of-range ones") {
    PointCloud pc;
    pc.points.push_back({20.0, 0.0, -1.0, 0.9});
    pc.points.push_back({10.0, 0.0, -0.5, 0.2});
    pc.points.push_back({30.0, 0.0, -1.5, 0.5});
    pc.points.push_back({200.0, 0.0, 0.0, 0.5});
    pc.points.push_back({0.0, 0.0, 0.0, 0.5});
    const RangeImage img = project(pc, SensorIntrinsics{});
    std::size_t hits = 0;
    for (std::size_t k = 0; k < img.pixels(); ++k) {
      if (img.is_drop(k)) continue;
      ++hits;
      CHECK(img.range[k] == doctest::Approx(std::hypot(10.0, 0.5)));
      CHECK(img.reflectance[k] == 0.2);
    }
    CHECK(hits == 1);
  }

  TEST_CASE("project after unproject reproduces occupancy exactly and ranges to 1e-9") {
    SensorIntrinsics intr;
    intr.height = 32;
    intr.width = 128;
    const RangeImage img = random_image(intr, 2, 0.3);
    const RangeImage back = project(unproject(img), intr);
    for (std::size_t i = 0; i < img.pixels(); ++i) {
      REQUIRE(back.is_drop(i) == img.is_drop(i));
      if (!img.is_drop(i)) {
        CHECK(std::abs(back.range[i] - img.range[i]) <= 1e-9);
        CHECK(std::abs(back.reflectance[i] - img.reflectance[i]) <= 1e-12);
      }
    }
  }

  TEST_CASE("unproject after project moves each surviving point by at most one bin diagonal") {
    const SensorIntrinsics intr;
    const PointCloud pc = random_cloud(3000, 3, 70.0);
    const PointCloud back = unproject(project(pc, intr));
    std::map<double, std::array<double, 4>> by_range;
    for (const auto& p : pc.points) by_range[std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])] = p;
    const double d_az = 2 * std::numbers::pi / intr.width;
    const double d_el = (intr.fov_up - intr.fov_down) / intr.height * std::numbers::pi / 180.0;
    REQUIRE(!back.points.empty());
    for (const auto& q : back.points) {
      const double r = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
      const auto it = by_range.lower_bound(r - 1e-9);
      REQUIRE(it != by_range.end());
      REQUIRE(std::abs(it->first - r) <= 1e-9);
      const auto& p = it->second;
      const double dist = std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                                    (p[2] - q[2]) * (p[2] - q[2]));
      CHECK(dist <= r * std::hypot(d_az, d_el) + 1e-9);
    }
  }

  TEST_CASE("ground-only scene matches the plane intersection and decreases down the rows") {
    SensorIntrinsics intr;
    intr.fov_up = -2.0;
    intr.fov_down = -15.0;
    ToySceneConfig cfg;
    cfg.domain = Domain::real;
    cfg.n_boxes = 0;
    cfg.enclosure = false;
    cfg.drop_base = 0.0;
    cfg.drop_glass = 0.0;
    const RangeImage img = gen_toy_scene(cfg, intr);
    for (std::size_t row = 0; row < intr.height; ++row) {
      const double expect = cfg.sensor_height / -std::sin(row_elevation(intr, row + 0.5));
      for (std::size_t col = 0; col < intr.width; ++col) {
        const std::size_t i = img.index(row, col);
        REQUIRE(!img.is_drop(i));
        CHECK(img.range[i] == doctest::Approx(expect).epsilon(1e-12));
        if (row > 0) CHECK(img.range[i] < img.range[img.index(row - 1, col)]);
      }
    }
  }

  TEST_CASE("certain drop probability drops every return") {
    ToySceneConfig cfg;
    cfg.domain = Domain::real;
    cfg.drop_base = 1.0;
    const RangeImage img = gen_toy_scene(cfg, SensorIntrinsics{});
    for (std::size_t i = 0; i < img.pixels(); ++i) CHECK(img.is_drop(i));
  }

  TEST_CASE("uniform drop probability is reproduced on a large scan") {
    SensorIntrinsics intr;
    intr.height = 64;
    intr.width = 256;
    ToySceneConfig cfg;
    cfg.domain = Domain::real;
    cfg.glass_fraction = 0.0;
    cfg.drop_base = 0.1;
    cfg.drop_glass = 0.1;
    cfg.seed = 5;
    const RangeImage img = gen_toy_scene(cfg, intr);
    std::size_t drops = 0;
    for (std::size_t i = 0; i < img.pixels(); ++i) drops += img.is_drop(i);
    CHECK(std::abs(static_cast<double>(drops) / static_cast<double>(img.pixels()) - 0.1) <= 0.02);
  }

  TEST_CASE("sim and real scans of one seed share geometry; sim has no drops or reflectance") {
    ToySceneConfig sim_cfg;
    sim_cfg.seed = 11;
    ToySceneConfig real_cfg = sim_cfg;
    real_cfg.domain = Domain::real;
    const RangeImage sim = gen_toy_scene(sim_cfg, SensorIntrinsics{});
    const RangeImage real = gen_toy_scene(real_cfg, SensorIntrinsics{});
    CHECK_NOTHROW(sim.validate());
    CHECK_NOTHROW(real.validate());
    std::size_t real_drops = 0;
    for (std::size_t i = 0; i < sim.pixels(); ++i) {
      CHECK(!sim.is_drop(i));
      CHECK(sim.reflectance[i] == 0.0);
      if (real.is_drop(i)) {
        ++real_drops;
      } else {
        CHECK(real.range[i] == sim.range[i]);
      }
    }
    CHECK(real_drops > 0);
    CHECK(gen_toy_scene(real_cfg, SensorIntrinsics{}) == real);
    real_cfg.seed = 12;
    CHECK(!(gen_toy_scene(real_cfg, SensorIntrinsics{}) == real));
  }

  TEST_CASE("toy scene configuration is validated") {
    ToySceneConfig cfg;
    cfg.drop_base = 1.5;
    CHECK_THROWS_AS(gen_toy_scene(cfg, SensorIntrinsics{}), InvalidArgument);
    cfg = {};
    cfg.sensor_height = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  }

  TEST_CASE("range image files round trip at float precision") {
    test::TempDir dir("img");
    SensorIntrinsics intr;
    intr.height = 8;
    intr.width = 16;
    intr.max_range = 50.0;
    const RangeImage img = random_image(intr, 4, 0.25);
    save_range_image(dir / "a.drum", img);
    const RangeImage back = load_range_image(dir / "a.drum");
    CHECK(back.intrinsics == intr);
    for (std::size_t i = 0; i < img.pixels(); ++i) {
      CHECK(back.range[i] == static_cast<double>(static_cast<float>(img.range[i])));
      CHECK(back.reflectance[i] == static_cast<double>(static_cast<float>(img.reflectance[i])));
    }
    save_range_image(dir / "b.drum", back);
    CHECK(read_bytes(dir / "a.drum") == read_bytes(dir / "b.drum"));
  }

  TEST_CASE("damaged range image files raise IoError") {
    test::TempDir dir("img_bad");
    SensorIntrinsics intr;
    intr.height = 4;
    intr.width = 4;
    save_range_image(dir / "a.drum", RangeImage(intr));
    std::filesystem::resize_file(dir / "a.drum", std::filesystem::file_size(dir / "a.drum") - 1);
    CHECK_THROWS_AS(load_range_image(dir / "a.drum"), IoError);
    {
      std::ofstream f(dir / "b.drum", std::ios::binary);
      f << "DRUMIMG0xxxxxxxxxxxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS(load_range_image(dir / "b.drum"), IoError);
    CHECK_THROWS_AS(load_range_image(dir / "missing.drum"), IoError);
  }

  TEST_CASE("KITTI point files round trip and reject bad sizes") {
    test::TempDir dir("kitti");
    PointCloud pc = random_cloud(50, 6, 40.0);
    save_kitti_bin(dir / "a.bin", pc);
    CHECK(std::filesystem::file_size(dir / "a.bin") == 50 * 16);
    const PointCloud back = load_kitti_bin(dir / "a.bin");
    REQUIRE(back.points.size() == 50);
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t k = 0; k < 4; ++k) CHECK(back.points[i][k] == static_cast<double>(static_cast<float>(pc.points[i][k])));
    std::filesystem::resize_file(dir / "a.bin", 50 * 16 - 3);
    CHECK_THROWS_AS(load_kitti_bin(dir / "a.bin"), IoError);
    pc.points.resize(1);
    pc.points[0][1] = std::nan("");
    save_kitti_bin(dir / "nan.bin", pc);
    CHECK_THROWS_AS(load_kitti_bin(dir / "nan.bin"), IoError);
  }

  TEST_CASE("feature files round trip") {
    test::TempDir dir("feat");
    FeatureMatrix fm{3, 2, {1.0, 2.5, -3.0, 0.125, 7.0, 8.0}};
    save_features(dir / "f.feat", fm);
    const FeatureMatrix back = load_features(dir / "f.feat");
    CHECK(back.rows == 3);
    CHECK(back.cols == 2);
    CHECK(back.values == fm.values);
    fm.values.pop_back();
    CHECK_THROWS_AS(save_features(dir / "g.feat", fm), InvalidArgument);
    std::filesystem::resize_file(dir / "f.feat", std::filesystem::file_size(dir / "f.feat") + 4);
    CHECK_THROWS_AS(load_features(dir / "f.feat"), IoError);
  }

  TEST_CASE("PNG export writes a grayscale image of the scan size") {
    test::TempDir dir("png");
    SensorIntrinsics intr;
    intr.height = 8;
    intr.width = 24;
    const RangeImage img = random_image(intr, 7, 0.3);
    write_png(dir / "r.png", img, PngChannel::range);
    write_png(dir / "f.png", img, PngChannel::reflectance);
    for (const char* name : {"r.png", "f.png"}) {
      const auto b = read_bytes(dir / name);
      REQUIRE(b.size() > 33);
      const unsigned char sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
      CHECK(std::equal(sig, sig + 8, b.begin()));
      CHECK(std::string(b.begin() + 12, b.begin() + 16) == "IHDR");
      CHECK(be32(b, 16) == 24);
      CHECK(be32(b, 20) == 8);
      CHECK(b[24] == 8);  // bit depth
      CHECK(b[25] == 0);  // grayscale
    }
  }

  TEST_CASE("file listing is sorted and filtered by extension") {
    test::TempDir dir("list");
    for (const char* n : {"b.drum", "a.drum", "c.txt"}) std::ofstream(dir / n) << "x";
    const auto files = list_files(dir.path(), ".drum");
    REQUIRE(files.size() == 2);
    CHECK(files[0].filename() == "a.drum");
    CHECK(files[1].filename() == "b.drum");
    CHECK_THROWS_AS(list_files(dir / "nope", ".drum"), IoError);
  }
}
