#include "satinfra/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace satinfra::post {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
}

BinaryMask threshold_mask(const MaskRaster& prob, double t) {
  if (!(t >= 0.0 && t <= 255.0)) throw std::invalid_argument("threshold must be in [0, 255]");
  BinaryMask out(prob.width, prob.height);
  for (std::size_t i = 0; i < prob.values.size(); ++i) out.bits[i] = prob.values[i] > t;
  return out;
}

std::vector<Blob> connected_components(const BinaryMask& mask, std::size_t min_blob_area) {
  const int w = mask.width, h = mask.height;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<Blob> blobs;
  std::vector<std::uint32_t> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::uint32_t start = static_cast<std::uint32_t>(y0 * w + x0);
      if (!mask.bits[start] || seen[start]) continue;
      Blob b;
      stack.assign(1, start);
      seen[start] = 1;
      while (!stack.empty()) {
        const std::uint32_t p = stack.back();
        stack.pop_back();
        b.pixels.push_back(p);
        const int px = static_cast<int>(p % w), py = static_cast<int>(p / w);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx, ny = py + dy;
            if (!mask.get(nx, ny)) continue;
            const std::uint32_t q = static_cast<std::uint32_t>(ny * w + nx);
            if (!seen[q]) {
              seen[q] = 1;
              stack.push_back(q);
            }
          }
      }
      if (b.pixels.size() < min_blob_area) continue;
      std::sort(b.pixels.begin(), b.pixels.end());
      double sx = 0.0, sy = 0.0;
      for (std::uint32_t p : b.pixels) {
        sx += p % w;
        sy += p / w;
      }
      b.centroid = {sx / b.pixels.size(), sy / b.pixels.size()};
      blobs.push_back(std::move(b));
    }
  }
  return blobs;
}

std::size_t component_count(const BinaryMask& mask) { return connected_components(mask, 1).size(); }

std::vector<geo::Point> centroids_to_geo(const std::vector<Blob>& blobs,
                                         const geo::GeoTransform& transform) {
  std::vector<geo::Point> out;
  out.reserve(blobs.size());
  for (const Blob& b : blobs)
    out.push_back(transform.pixel_to_geo({b.centroid.x + 0.5, b.centroid.y + 0.5}));
  return out;
}

CountMetrics contour_in_contour_eval(const std::vector<geo::Point>& pred_centroids,
                                     const raster::VectorLayer& truth, MatchMode mode) {
  struct Poly {
    const raster::Feature* f;
    geo::GeoBox box;
    geo::Point centroid;
  };
  std::vector<Poly> polys;
  for (const auto& f : truth.features) {
    if (f.kind != raster::GeometryKind::polygon) continue;
    raster::validate_feature(f);
    geo::GeoBox b{HUGE_VAL, HUGE_VAL, -HUGE_VAL, -HUGE_VAL};
    for (const auto& p : f.rings[0]) {
      b.min_lon = std::min(b.min_lon, p.x);
      b.max_lon = std::max(b.max_lon, p.x);
      b.min_lat = std::min(b.min_lat, p.y);
      b.max_lat = std::max(b.max_lat, p.y);
    }
    polys.push_back({&f, b, raster::polygon_centroid(f)});
  }

  // (distance, prediction, polygon) for every containment hit.
  std::vector<std::tuple<double, std::size_t, std::size_t>> hits;
  std::vector<std::uint8_t> inside_any(pred_centroids.size(), 0);
  for (std::size_t i = 0; i < pred_centroids.size(); ++i) {
    const geo::Point p = pred_centroids[i];
    for (std::size_t j = 0; j < polys.size(); ++j) {
      const auto& b = polys[j].box;
      if (p.x < b.min_lon || p.x > b.max_lon || p.y < b.min_lat || p.y > b.max_lat) continue;
      if (!raster::polygon_contains(*polys[j].f, p)) continue;
      inside_any[i] = 1;
      hits.emplace_back(std::hypot(p.x - polys[j].centroid.x, p.y - polys[j].centroid.y), i, j);
    }
  }
  std::sort(hits.begin(), hits.end());
  std::vector<std::uint8_t> pred_used(pred_centroids.size(), 0), poly_used(polys.size(), 0);
  std::size_t strict = 0;
  for (const auto& [d, i, j] : hits) {
    if (pred_used[i] || poly_used[j]) continue;
    pred_used[i] = poly_used[j] = 1;
    ++strict;
  }

  CountMetrics m;
  m.predicted = pred_centroids.size();
  m.truth = polys.size();
  m.tp_count_loose = static_cast<std::size_t>(std::count(inside_any.begin(), inside_any.end(), 1));
  m.tp_count = mode == MatchMode::strict ? strict : m.tp_count_loose;
  if (m.truth > 0) {
    m.tp_rate = 100.0 * static_cast<double>(m.tp_count) / m.truth;
    m.pred_to_mask = 100.0 * static_cast<double>(m.predicted) / m.truth;
  }
  if (m.predicted > 0)
    m.fp_rate = 100.0 * static_cast<double>(m.predicted - m.tp_count) / m.predicted;
  return m;
}

std::vector<CountMetrics> threshold_sweep(const MaskRaster& prob, const raster::VectorLayer& truth,
                                          const std::vector<double>& thresholds,
                                          const SweepOptions& opts) {
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1]))
      throw std::invalid_argument("threshold_sweep: thresholds must be strictly ascending");
  std::vector<CountMetrics> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto blobs = connected_components(threshold_mask(prob, t), opts.min_blob_area);
    CountMetrics m = contour_in_contour_eval(centroids_to_geo(blobs, prob.transform), truth, opts.mode);
    m.threshold = t;
    out.push_back(m);
  }
  return out;
}

std::size_t select_threshold(const std::vector<CountMetrics>& sweep, const SelectionRule& rule) {
  if (sweep.empty()) throw std::invalid_argument("select_threshold: empty sweep");
  auto meets = [&](const CountMetrics& m) {
    if (rule.max_fp_rate && !(m.fp_rate && *m.fp_rate <= *rule.max_fp_rate)) return false;
    if (rule.min_tp_rate && !(m.tp_rate && *m.tp_rate >= *rule.min_tp_rate)) return false;
    return true;
  };
  auto better = [&](std::size_t a, std::size_t b) {
    const double da = std::abs(*sweep[a].pred_to_mask - 100.0);
    const double db = std::abs(*sweep[b].pred_to_mask - 100.0);
    if (da != db) return da < db;
    if (sweep[a].tp_count != sweep[b].tp_count) return sweep[a].tp_count > sweep[b].tp_count;
    return sweep[a].threshold < sweep[b].threshold;
  };
  for (bool constrained : {true, false}) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      if (!sweep[i].pred_to_mask || (constrained && !meets(sweep[i]))) continue;
      if (!best || better(i, *best)) best = i;
    }
    if (best) return *best;
  }
  std::size_t lowest = 0;
  for (std::size_t i = 1; i < sweep.size(); ++i)
    if (sweep[i].threshold < sweep[lowest].threshold) lowest = i;
  return lowest;
}

MaskRaster ensemble_combine(std::span<const MaskRaster> masks) {
  if (masks.empty()) throw std::invalid_argument("ensemble_combine: no masks");
  for (const auto& m : masks)
    if (!m.same_geometry(masks[0]) || m.values.size() != masks[0].values.size())
      throw std::invalid_argument("ensemble_combine: mask shapes differ");
  MaskRaster out = masks[0];
  std::vector<float> column(masks.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    for (std::size_t k = 0; k < masks.size(); ++k) column[k] = masks[k].values[i];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (float v : column) sum += v;
    out.values[i] = static_cast<float>(sum / masks.size());
  }
  return out;
}

namespace {

// Neighbors P2..P9 clockwise from north.
constexpr int kDx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr int kDy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

bool deletable(const BinaryMask& m, int x, int y, int pass) {
  int p[8];
  int b = 0;
  for (int k = 0; k < 8; ++k) b += p[k] = m.get(x + kDx[k], y + kDy[k]);
  if (b < 2 || b > 6) return false;
  int a = 0;
  for (int k = 0; k < 8; ++k) a += !p[k] && p[(k + 1) % 8];
  if (a != 1) return false;
  // p[0]=N, p[2]=E, p[4]=S, p[6]=W
  if (pass == 0) return !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6]);
  return !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6]);
}

}  // namespace

BinaryMask skeletonize(const BinaryMask& mask) {
  BinaryMask m = mask;
  std::vector<std::pair<int, int>> marked;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      marked.clear();
      for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
          if (m.at(x, y) && deletable(m, x, y, pass)) marked.emplace_back(x, y);
      for (const auto& [x, y] : marked) {
        if (!deletable(m, x, y, pass)) continue;
        m.at(x, y) = 0;
        changed = true;
      }
    }
  }
  return m;
}

double road_length(const BinaryMask& s, double meters_per_pixel) {
  if (!(meters_per_pixel > 0.0)) throw std::invalid_argument("road_length: meters_per_pixel <= 0");
  std::size_t rook = 0, diag = 0;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      if (!s.at(x, y)) continue;
      rook += s.get(x + 1, y);
      rook += s.get(x, y + 1);
      // Diagonals toward (x+1, y+1) and (x-1, y+1).
      if (s.get(x + 1, y + 1) && !s.get(x + 1, y) && !s.get(x, y + 1)) ++diag;
      if (s.get(x - 1, y + 1) && !s.get(x - 1, y) && !s.get(x, y + 1)) ++diag;
    }
  return (static_cast<double>(rook) + std::sqrt(2.0) * static_cast<double>(diag)) * meters_per_pixel;
}

}  // namespace satinfra::post
