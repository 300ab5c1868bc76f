#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "satinfra/geo.hpp"

namespace satinfra::raster {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Interleaved 8-bit raster, row-major from the top row.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c);

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

// Single-band mask with intensities on the 0..255 scale. Stored as float so
// averaged or probability-scaled masks survive without rounding.
struct MaskRaster {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  geo::GeoTransform transform;
  double meters_per_pixel = 1.0;

  MaskRaster() = default;
  MaskRaster(int w, int h, geo::GeoTransform t = {}, double mpp = 1.0);

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }

  // Throws std::invalid_argument if the transform is singular, the scale is
  // not positive, or the buffer size disagrees with the dimensions.
  void validate() const;
  bool same_geometry(const MaskRaster& other) const {
    return width == other.width && height == other.height;
  }
  bool operator==(const MaskRaster&) const = default;
};

// Rounds to the nearest integer and clamps to 0..255.
std::uint8_t to_byte(float v);

// Key/value pairs stored as uncompressed PNG tEXt chunks.
using PngText = std::vector<std::pair<std::string, std::string>>;

// 8-bit PNG, gray (1 channel) or RGB (3 channels).
void write_png(const std::filesystem::path& path, const Image& img, const PngText& text = {});
Image read_png(const std::filesystem::path& path);
PngText read_png_text(const std::filesystem::path& path);

// Six coefficients, one per line, in world-file order.
void write_world_file(const std::filesystem::path& path, const geo::GeoTransform& t);
geo::GeoTransform read_world_file(const std::filesystem::path& path);
std::filesystem::path world_file_for(const std::filesystem::path& png_path);

// Mask <-> PNG plus world file. meters_per_pixel is recomputed from the
// transform on load (north-up, at the tile's center latitude).
void save_mask(const std::filesystem::path& png_path, const MaskRaster& mask,
               const PngText& text = {});
MaskRaster load_mask(const std::filesystem::path& png_path);
Image mask_to_image(const MaskRaster& mask);
MaskRaster image_to_mask(const Image& img, geo::GeoTransform t = {}, double mpp = 1.0);

// Ground size of one pixel in meters for a north-up transform, evaluated
// at the latitude of the raster center.
double meters_per_pixel(const geo::GeoTransform& t, int width, int height);

}  // namespace satinfra::raster
