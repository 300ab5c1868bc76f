#include "satinfra/raster.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace satinfra::raster {

Image::Image(int w, int h, int c) : width(w), height(h), channels(c) {
  if (w < 0 || h < 0 || (c != 1 && c != 3)) throw std::invalid_argument("Image: bad dimensions");
  pixels.assign(static_cast<std::size_t>(w) * h * c, 0);
}

MaskRaster::MaskRaster(int w, int h, geo::GeoTransform t, double mpp)
    : width(w), height(h), transform(t), meters_per_pixel(mpp) {
  if (w < 0 || h < 0) throw std::invalid_argument("MaskRaster: negative size");
  values.assign(static_cast<std::size_t>(w) * h, 0.0f);
}

void MaskRaster::validate() const {
  if (!transform.invertible()) throw std::invalid_argument("MaskRaster: singular geo transform");
  if (!(meters_per_pixel > 0.0)) throw std::invalid_argument("MaskRaster: meters_per_pixel <= 0");
  if (values.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("MaskRaster: buffer size mismatch");
}

std::uint8_t to_byte(float v) {
  if (!(v > 0.0f)) return 0;
  if (v >= 255.0f) return 255;
  return static_cast<std::uint8_t>(std::lround(v));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img, const PngText& text) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_png: channels");
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("write_png: empty image");
  std::vector<png_text> chunks(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    chunks[i] = png_text{};
    chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
    chunks[i].key = const_cast<char*>(text[i].first.c_str());
    chunks[i].text = const_cast<char*>(text[i].second.c_str());
    chunks[i].text_length = text[i].second.size();
  }
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG channel layout: " + path.string());
  }
  img = Image(static_cast<int>(png_get_image_width(png, info)),
              static_cast<int>(png_get_image_height(png, info)), channels);
  const std::size_t stride = static_cast<std::size_t>(img.width) * channels;
  for (int y = 0; y < img.height; ++y) png_read_row(png, img.pixels.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

PngText read_png_text(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_textp chunks = nullptr;
  int n = 0;
  png_get_text(png, info, &chunks, &n);
  PngText out;
  for (int i = 0; i < n; ++i) out.emplace_back(chunks[i].key, std::string(chunks[i].text, chunks[i].text_length));
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_world_file(const std::filesystem::path& path, const geo::GeoTransform& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (double v : t.to_world_file()) out << v << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

geo::GeoTransform read_world_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::array<double, 6> w{};
  for (double& v : w)
    if (!(in >> v)) throw IoError("malformed world file: " + path.string());
  return geo::GeoTransform::from_world_file(w);
}

std::filesystem::path world_file_for(const std::filesystem::path& png_path) {
  std::filesystem::path p = png_path;
  return p.replace_extension(".pgw");
}

double meters_per_pixel(const geo::GeoTransform& t, int width, int height) {
  const geo::Point mid = t.pixel_to_geo({width / 2.0, height / 2.0});
  const double dx_km = std::hypot(t.c[1] * geo::km_per_degree_lon(mid.y), t.c[4] * geo::km_per_degree_lat());
  const double dy_km = std::hypot(t.c[2] * geo::km_per_degree_lon(mid.y), t.c[5] * geo::km_per_degree_lat());
  return 1000.0 * std::sqrt(dx_km * dy_km);
}

Image mask_to_image(const MaskRaster& mask) {
  Image img(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.values.size(); ++i) img.pixels[i] = to_byte(mask.values[i]);
  return img;
}

MaskRaster image_to_mask(const Image& img, geo::GeoTransform t, double mpp) {
  if (img.channels != 1) throw std::invalid_argument("image_to_mask: expected a 1-channel image");
  MaskRaster m(img.width, img.height, t, mpp);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.values[i] = img.pixels[i];
  return m;
}

void save_mask(const std::filesystem::path& png_path, const MaskRaster& mask, const PngText& text) {
  mask.validate();
  write_png(png_path, mask_to_image(mask), text);
  write_world_file(world_file_for(png_path), mask.transform);
}

MaskRaster load_mask(const std::filesystem::path& png_path) {
  Image img = read_png(png_path);
  if (img.channels != 1) throw IoError("mask PNG must be grayscale: " + png_path.string());
  const geo::GeoTransform t = read_world_file(world_file_for(png_path));
  MaskRaster m = image_to_mask(img, t, meters_per_pixel(t, img.width, img.height));
  m.validate();
  return m;
}

}  // namespace satinfra::raster
