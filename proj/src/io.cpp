#include "drum/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "binary_io.hpp"
#include "drum/errors.hpp"

namespace drum {

namespace {
constexpr std::string_view kImageMagic = "DRUMIMG1";
constexpr std::string_view kFeatureMagic = "DRUMFEAT";
}  // namespace

void save_range_image(const std::filesystem::path& path, const RangeImage& img) {
  img.validate();
  const SensorIntrinsics& intr = img.intrinsics;
  detail::LeWriter w(path);
  w.bytes(kImageMagic);
  w.u32(intr.height);
  w.u32(intr.width);
  w.u32(2);
  w.f32(static_cast<float>(intr.max_range));
  w.f32(static_cast<float>(intr.fov_up));
  w.f32(static_cast<float>(intr.fov_down));
  for (double r : img.range) w.f32(static_cast<float>(r));
  for (double v : img.reflectance) w.f32(static_cast<float>(v));
  w.finish();
}

RangeImage load_range_image(const std::filesystem::path& path) {
  detail::LeReader r(path);
  if (r.bytes(kImageMagic.size()) != kImageMagic) throw IoError("not a DRUMIMG1 file: " + path.string());
  SensorIntrinsics intr;
  intr.height = r.u32();
  intr.width = r.u32();
  if (r.u32() != 2) throw IoError("unsupported channel count: " + path.string());
  intr.max_range = r.f32();
  intr.fov_up = r.f32();
  intr.fov_down = r.f32();
  try {
    intr.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string(e.what()) + ": " + path.string());
  }
  RangeImage img(intr);
  for (double& v : img.range) v = r.f32();
  for (double& v : img.reflectance) v = r.f32();
  if (!r.at_end()) throw IoError("trailing bytes in range image: " + path.string());
  // Ranges were stored in single precision; a value rounded just past the
  // stored max_range is still the same return.
  for (double& v : img.range) {
    if (v != kDropRange && v > intr.max_range) v = intr.max_range;
  }
  try {
    img.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string(e.what()) + ": " + path.string());
  }
  return img;
}

void save_kitti_bin(const std::filesystem::path& path, const PointCloud& pc) {
  detail::LeWriter w(path);
  for (const auto& p : pc.points) {
    for (double v : p) w.f32(static_cast<float>(v));
  }
  w.finish();
}

PointCloud load_kitti_bin(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat: " + path.string());
  if (size % 16 != 0) throw IoError("KITTI .bin size is not a multiple of 16 bytes: " + path.string());
  detail::LeReader r(path);
  PointCloud pc;
  pc.points.resize(size / 16);
  for (auto& p : pc.points) {
    for (double& v : p) v = r.f32();
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw IoError("non-finite coordinate in " + path.string());
    }
  }
  return pc;
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& fm) {
  if (fm.values.size() != fm.rows * fm.cols) throw InvalidArgument("feature matrix size mismatch");
  detail::LeWriter w(path);
  w.bytes(kFeatureMagic);
  w.u32(static_cast<std::uint32_t>(fm.rows));
  w.u32(static_cast<std::uint32_t>(fm.cols));
  for (double v : fm.values) w.f32(static_cast<float>(v));
  w.finish();
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  detail::LeReader r(path);
  if (r.bytes(kFeatureMagic.size()) != kFeatureMagic) throw IoError("not a DRUMFEAT file: " + path.string());
  FeatureMatrix fm;
  fm.rows = r.u32();
  fm.cols = r.u32();
  fm.values.resize(fm.rows * fm.cols);
  for (double& v : fm.values) {
    v = r.f32();
    if (!std::isfinite(v)) throw IoError("non-finite feature in " + path.string());
  }
  if (!r.at_end()) throw IoError("trailing bytes in feature file: " + path.string());
  return fm;
}

void write_png(const std::filesystem::path& path, const RangeImage& img, PngChannel channel) {
  const SensorIntrinsics& intr = img.intrinsics;
  std::vector<png_byte> pixels(img.pixels());
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    if (img.is_drop(i)) continue;
    const double x = channel == PngChannel::range ? normalize_range(img.range[i], intr.max_range)
                                                  : 2.0 * img.reflectance[i] - 1.0;
    pixels[i] = static_cast<png_byte>(std::lround(std::clamp(0.5 * (x + 1.0), 0.0, 1.0) * 255.0));
  }

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, intr.width, intr.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t row = 0; row < intr.height; ++row) png_write_row(png, pixels.data() + row * intr.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, const std::string& extension) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace drum
