#pragma once

// Conversions between rasters and network tensors, plus a synthetic tile
// generator used by tests, the fixture command and the acceptance suite.

#include <cstdint>
#include <random>

#include "satinfra/raster.hpp"
#include "satinfra/rasterize.hpp"
#include "satinfra/tensor.hpp"
#include "satinfra/train.hpp"

namespace satinfra::data {

// RGB image -> (1,3,H,W) with values / 255.
nn::Tensor image_to_tensor(const raster::Image& img);
// Mask -> (1,1,H,W) binary target, 1 where intensity > 127.
nn::Tensor mask_to_target(const raster::MaskRaster& mask);
// (1,1,H,W) probabilities -> mask on the 0..255 scale with the given geometry.
raster::MaskRaster probability_to_mask(const nn::Tensor& prob, const raster::MaskRaster& geometry);

// Pads image and mask by `pad` and converts them to a training sample.
nn::Sample make_sample(const raster::Image& img, const raster::MaskRaster& mask, int pad = 0);

struct SynthOptions {
  int size_px = 64;
  int min_buildings = 2;
  int max_buildings = 6;
  int min_side_px = 4;
  int max_side_px = 9;
  int min_roads = 0;
  int max_roads = 2;
  double road_width_px = 3.0;
};

struct SynthTile {
  raster::Image image;           // RGB, channel peaks below 200
  raster::VectorLayer vectors;   // geo coordinates; classes "building" and "road"
  raster::MaskRaster buildings;  // fill mode
  raster::MaskRaster roads;      // road mode
};

// Axis-aligned, non-touching buildings and straight roads rendered over a
// noisy ground texture. `bounds` georeferences the tile.
SynthTile make_synthetic_tile(std::mt19937_64& rng, const geo::GeoBox& bounds,
                              const SynthOptions& opts = {});

// Copy of `layer` without a random `fraction` of its features of class
// `tag`, rounded to the nearest count (at least one when any exist).
raster::VectorLayer erase_fraction(const raster::VectorLayer& layer, const std::string& tag,
                                   double fraction, std::mt19937_64& rng);

std::size_t count_class(const raster::VectorLayer& layer, const std::string& tag);

}  // namespace satinfra::data
