#include "satinfra/dataset.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace satinfra::data {

using raster::Feature;
using raster::GeometryKind;
using raster::Image;
using raster::MaskRaster;

nn::Tensor image_to_tensor(const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("image_to_tensor: expected RGB");
  nn::Tensor t = nn::Tensor::nchw(1, 3, img.height, img.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(0, c, y, x) = img.at(x, y, c) / 255.0;
  return t;
}

nn::Tensor mask_to_target(const MaskRaster& mask) {
  nn::Tensor t = nn::Tensor::nchw(1, 1, mask.height, mask.width);
  for (std::size_t i = 0; i < mask.values.size(); ++i) t[i] = mask.values[i] > 127.0f ? 1.0 : 0.0;
  return t;
}

MaskRaster probability_to_mask(const nn::Tensor& prob, const MaskRaster& geometry) {
  if (prob.rank() != 4 || prob.dim(0) != 1 || prob.dim(1) != 1 ||
      prob.dim(2) != static_cast<std::size_t>(geometry.height) ||
      prob.dim(3) != static_cast<std::size_t>(geometry.width))
    throw nn::ShapeError("probability_to_mask: shape " + prob.shape_string());
  MaskRaster m(geometry.width, geometry.height, geometry.transform, geometry.meters_per_pixel);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<float>(prob[i] * 255.0);
  return m;
}

nn::Sample make_sample(const Image& img, const MaskRaster& mask, int pad) {
  if (img.width != mask.width || img.height != mask.height)
    throw nn::ShapeError("make_sample: image and mask sizes differ");
  return {image_to_tensor(raster::pad_image(img, pad)), mask_to_target(raster::pad_mask(mask, pad))};
}

namespace {

struct Rect {
  int x0, y0, x1, y1;  // half-open pixel rectangle
};

bool clear_of(const Rect& r, const std::vector<Rect>& placed) {
  for (const Rect& p : placed)
    if (r.x0 <= p.x1 && p.x0 <= r.x1 && r.y0 <= p.y1 && p.y0 <= r.y1) return false;
  return true;
}

geo::Point border_point(std::mt19937_64& rng, int side, int s) {
  std::uniform_real_distribution<double> u(0.1 * s, 0.9 * s);
  switch (side) {
    case 0: return {u(rng), 0.0};
    case 1: return {static_cast<double>(s), u(rng)};
    case 2: return {u(rng), static_cast<double>(s)};
    default: return {0.0, u(rng)};
  }
}

std::uint8_t jitter(std::mt19937_64& rng, int base, int spread) {
  std::uniform_int_distribution<int> d(-spread, spread);
  return static_cast<std::uint8_t>(std::clamp(base + d(rng), 0, 255));
}

}  // namespace

SynthTile make_synthetic_tile(std::mt19937_64& rng, const geo::GeoBox& bounds,
                              const SynthOptions& opts) {
  const int s = opts.size_px;
  if (s < 8 || opts.min_buildings < 0 || opts.max_buildings < opts.min_buildings ||
      opts.min_side_px < 2 || opts.max_side_px < opts.min_side_px || opts.max_side_px > s - 2 ||
      opts.min_roads < 0 || opts.max_roads < opts.min_roads)
    throw std::invalid_argument("make_synthetic_tile: bad options");
  SynthTile tile;
  const MaskRaster geometry = raster::tile_geometry(bounds, s);
  const auto& t = geometry.transform;

  std::uniform_int_distribution<int> nb(opts.min_buildings, opts.max_buildings);
  std::uniform_int_distribution<int> side(opts.min_side_px, opts.max_side_px);
  std::vector<Rect> placed;
  const int want = nb(rng);
  for (int attempt = 0; attempt < 100 * (want + 1) && static_cast<int>(placed.size()) < want;
       ++attempt) {
    const int w = side(rng), h = side(rng);
    std::uniform_int_distribution<int> px(1, s - 1 - w), py(1, s - 1 - h);
    const Rect r{px(rng), py(rng), 0, 0};
    const Rect full{r.x0, r.y0, r.x0 + w, r.y0 + h};
    if (!clear_of(full, placed)) continue;
    placed.push_back(full);
    tile.vectors.features.push_back(
        {GeometryKind::polygon,
         {{t.pixel_to_geo({double(full.x0), double(full.y0)}),
           t.pixel_to_geo({double(full.x1), double(full.y0)}),
           t.pixel_to_geo({double(full.x1), double(full.y1)}),
           t.pixel_to_geo({double(full.x0), double(full.y1)})}},
         "building"});
  }
  std::uniform_int_distribution<int> nr(opts.min_roads, opts.max_roads), sd(0, 3);
  for (int k = nr(rng); k > 0; --k) {
    const int a = sd(rng);
    const int b = (a + 1 + static_cast<int>(rng() % 3)) % 4;
    tile.vectors.features.push_back(
        {GeometryKind::polyline,
         {{t.pixel_to_geo(border_point(rng, a, s)), t.pixel_to_geo(border_point(rng, b, s))}},
         "road"});
  }

  raster::RasterOptions fill;
  fill.class_filter = "building";
  tile.buildings = raster::rasterize_layer(tile.vectors, geometry, fill);
  raster::RasterOptions road;
  road.mode = raster::RasterMode::road;
  road.road_width_px = opts.road_width_px;
  road.class_filter = "road";
  tile.roads = raster::rasterize_layer(tile.vectors, geometry, road);

  static constexpr std::array<std::array<int, 3>, 3> kRoofs{{{182, 172, 160}, {176, 96, 80}, {150, 160, 178}}};
  std::vector<std::array<int, 3>> roof_of(placed.size());
  for (auto& r : roof_of) r = kRoofs[rng() % kRoofs.size()];
  tile.image = Image(s, s, 3);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      std::array<int, 3> base{72, 86, 50};
      int spread = 14;
      if (tile.roads.at(x, y) > 0.0f) {
        base = {112, 110, 116};
        spread = 6;
      }
      if (tile.buildings.at(x, y) > 0.0f) {
        for (std::size_t k = 0; k < placed.size(); ++k) {
          const Rect& r = placed[k];
          if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) base = roof_of[k];
        }
        spread = 5;
      }
      for (int c = 0; c < 3; ++c) tile.image.at(x, y, c) = jitter(rng, base[c], spread);
    }
  return tile;
}

raster::VectorLayer erase_fraction(const raster::VectorLayer& layer, const std::string& tag,
                                   double fraction, std::mt19937_64& rng) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < layer.features.size(); ++i)
    if (layer.features[i].class_tag == tag) idx.push_back(i);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
  if (!idx.empty() && fraction > 0.0) n = std::max<std::size_t>(n, 1);
  std::vector<std::uint8_t> drop(layer.features.size(), 0);
  for (std::size_t k = 0; k < n && k < idx.size(); ++k) drop[idx[k]] = 1;
  raster::VectorLayer out;
  for (std::size_t i = 0; i < layer.features.size(); ++i)
    if (!drop[i]) out.features.push_back(layer.features[i]);
  return out;
}

std::size_t count_class(const raster::VectorLayer& layer, const std::string& tag) {
  return static_cast<std::size_t>(std::count_if(layer.features.begin(), layer.features.end(),
                                                [&](const Feature& f) { return f.class_tag == tag; }));
}

}  // namespace satinfra::data
