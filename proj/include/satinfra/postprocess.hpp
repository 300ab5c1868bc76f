#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "satinfra/geo.hpp"
#include "satinfra/raster.hpp"
#include "satinfra/rasterize.hpp"

namespace satinfra::post {

using raster::MaskRaster;

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  bool get(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height && at(x, y); }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

inline constexpr std::size_t kDefaultMinBlobArea = 4;

struct Blob {
  std::vector<std::uint32_t> pixels;  // row-major indices, ascending
  geo::Point centroid;                // mean (x, y) pixel index
  std::size_t area() const { return pixels.size(); }
};

// Pixel on iff intensity > t. Throws std::invalid_argument for t outside [0, 255].
BinaryMask threshold_mask(const MaskRaster& prob, double t);

// 8-connected components with at least `min_blob_area` pixels, ordered by
// their first pixel in row-major order.
std::vector<Blob> connected_components(const BinaryMask& mask,
                                       std::size_t min_blob_area = kDefaultMinBlobArea);

// Blob centroids mapped through the mask transform (pixel centers).
std::vector<geo::Point> centroids_to_geo(const std::vector<Blob>& blobs,
                                         const geo::GeoTransform& transform);

enum class MatchMode {
  strict,  // each truth polygon absorbs at most one centroid, greedy by distance
  loose,   // every centroid inside any polygon counts
};

struct CountMetrics {
  double threshold = 0.0;
  std::size_t predicted = 0;
  std::size_t truth = 0;
  std::size_t tp_count = 0;        // under the requested match mode
  std::size_t tp_count_loose = 0;  // always reported
  std::optional<double> tp_rate;       // 100 * tp / truth
  std::optional<double> pred_to_mask;  // 100 * predicted / truth
  std::optional<double> fp_rate;       // 100 * (predicted - tp) / predicted
};

// Truth features that are not polygons are ignored. Points and polygons must
// share a coordinate system.
CountMetrics contour_in_contour_eval(const std::vector<geo::Point>& pred_centroids,
                                     const raster::VectorLayer& truth,
                                     MatchMode mode = MatchMode::strict);

struct SweepOptions {
  std::size_t min_blob_area = kDefaultMinBlobArea;
  MatchMode mode = MatchMode::strict;
};

// One CountMetrics per threshold. Thresholds must be strictly ascending.
std::vector<CountMetrics> threshold_sweep(const MaskRaster& prob, const raster::VectorLayer& truth,
                                          const std::vector<double>& thresholds,
                                          const SweepOptions& opts = {});

struct SelectionRule {
  std::optional<double> max_fp_rate;
  std::optional<double> min_tp_rate;
};

// Index of the sweep entry whose pred_to_mask is closest to 100 among the
// entries meeting the rule (all entries if none do). Ties go to the higher
// tp_count, then the lower threshold. Entries with undefined pred_to_mask
// are chosen only if nothing else is available, in which case the lowest
// threshold wins. Throws std::invalid_argument on an empty sweep.
std::size_t select_threshold(const std::vector<CountMetrics>& sweep,
                             const SelectionRule& rule = {});

// Pixel-wise mean. Values are sorted per pixel before summation so the result
// does not depend on argument order.
MaskRaster ensemble_combine(std::span<const MaskRaster> masks);

// Zhang-Suen thinning. Candidates from each subiteration are deleted one at
// a time in row-major order, each re-checked against the current image, so
// components never vanish or split.
BinaryMask skeletonize(const BinaryMask& mask);

// Sum of steps between adjacent skeleton pixels (1 for rook, sqrt(2) for
// diagonal), times meters_per_pixel. A diagonal pair that shares a rook
// neighbor in the skeleton is not counted, so corners are not double counted.
double road_length(const BinaryMask& skeleton, double meters_per_pixel);

// 8-connected components of any size.
std::size_t component_count(const BinaryMask& mask);

}  // namespace satinfra::post
