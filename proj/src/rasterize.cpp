#include "satinfra/rasterize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "csv.hpp"

namespace satinfra::raster {

using geo::Point;
using json = nlohmann::json;

// ---------------------------------------------------------------- geometry

namespace {

double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

int sign(double v) { return (v > 0) - (v < 0); }

bool on_segment(Point a, Point b, Point p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Point a, Point b, Point c, Point d) {
  const int d1 = sign(cross(c, d, a)), d2 = sign(cross(c, d, b));
  const int d3 = sign(cross(a, b, c)), d4 = sign(cross(a, b, d));
  if (d1 != d2 && d3 != d4 && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0) return true;
  return (d1 == 0 && on_segment(c, d, a)) || (d2 == 0 && on_segment(c, d, b)) ||
         (d3 == 0 && on_segment(a, b, c)) || (d4 == 0 && on_segment(a, b, d));
}

double signed_area(const std::vector<Point>& ring) {
  double s = 0.0;
  for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return s / 2.0;
}

void validate_ring(const std::vector<Point>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) throw InvalidGeometry("polygon ring needs at least 3 distinct vertices");
  if (signed_area(ring) == 0.0) throw InvalidGeometry("polygon ring has zero area");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]))
        throw InvalidGeometry("polygon ring self-intersects");
    }
  }
}

}  // namespace

void validate_feature(const Feature& f) {
  for (const auto& ring : f.rings)
    for (const Point& p : ring)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw InvalidGeometry("non-finite coordinate");
  switch (f.kind) {
    case GeometryKind::polygon:
      if (f.rings.empty()) throw InvalidGeometry("polygon without rings");
      for (const auto& ring : f.rings) validate_ring(ring);
      break;
    case GeometryKind::polyline:
      if (f.rings.size() != 1 || f.rings[0].size() < 2)
        throw InvalidGeometry("polyline needs at least 2 vertices");
      break;
    case GeometryKind::point:
      if (f.rings.size() != 1 || f.rings[0].size() != 1) throw InvalidGeometry("malformed point");
      break;
  }
}

bool polygon_contains(const Feature& f, Point p) {
  bool inside = false;
  for (const auto& ring : f.rings) {
    for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
      const Point a = ring[i], b = ring[(i + 1) % n];
      if (cross(a, b, p) == 0.0 && on_segment(a, b, p)) return true;
      if ((a.y <= p.y) != (b.y <= p.y) &&
          p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y))
        inside = !inside;
    }
  }
  return inside;
}

Point polygon_centroid(const Feature& f) {
  double area = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t r = 0; r < f.rings.size(); ++r) {
    const auto& ring = f.rings[r];
    double a = 0.0, x = 0.0, y = 0.0;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
      const Point& p = ring[i];
      const Point& q = ring[(i + 1) % n];
      const double w = p.x * q.y - q.x * p.y;
      a += w;
      x += (p.x + q.x) * w;
      y += (p.y + q.y) * w;
    }
    if (a == 0.0) continue;
    // Per-ring centroid is independent of orientation; the weight sign marks holes.
    const double ring_area = std::abs(a) / 2.0;
    const double weight = r == 0 ? ring_area : -ring_area;
    area += weight;
    cx += weight * x / (3.0 * a);
    cy += weight * y / (3.0 * a);
  }
  if (area > 0.0) return {cx / area, cy / area};
  Point mean;
  const auto& outer = f.rings.at(0);
  for (const Point& p : outer) {
    mean.x += p.x / outer.size();
    mean.y += p.y / outer.size();
  }
  return mean;
}

// ---------------------------------------------------------------- GeoJSON

namespace {

Point parse_position(const json& j) {
  if (!j.is_array() || j.size() < 2 || !j[0].is_number() || !j[1].is_number())
    throw InvalidGeometry("malformed GeoJSON position");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Point> parse_line(const json& j, bool ring) {
  if (!j.is_array()) throw InvalidGeometry("malformed GeoJSON coordinate list");
  std::vector<Point> pts;
  for (const json& pos : j) {
    const Point p = parse_position(pos);
    if (pts.empty() || !(pts.back() == p)) pts.push_back(p);
  }
  if (ring) {
    if (pts.size() < 2 || !(pts.front() == pts.back()))
      throw InvalidGeometry("polygon ring is not closed");
    pts.pop_back();
  }
  return pts;
}

Feature parse_polygon(const json& coords, const std::string& tag) {
  if (!coords.is_array() || coords.empty()) throw InvalidGeometry("empty polygon");
  Feature f{GeometryKind::polygon, {}, tag};
  for (const json& ring : coords) f.rings.push_back(parse_line(ring, true));
  return f;
}

void append_geometry(const json& g, const std::string& tag, VectorLayer& out) {
  if (!g.is_object() || !g.contains("type") || !g.contains("coordinates"))
    throw InvalidGeometry("malformed GeoJSON geometry");
  const std::string type = g["type"].get<std::string>();
  const json& c = g["coordinates"];
  const std::size_t first = out.features.size();
  if (type == "Polygon") {
    out.features.push_back(parse_polygon(c, tag));
  } else if (type == "MultiPolygon") {
    for (const json& poly : c) out.features.push_back(parse_polygon(poly, tag));
  } else if (type == "LineString") {
    out.features.push_back({GeometryKind::polyline, {parse_line(c, false)}, tag});
  } else if (type == "MultiLineString") {
    for (const json& line : c)
      out.features.push_back({GeometryKind::polyline, {parse_line(line, false)}, tag});
  } else if (type == "Point") {
    out.features.push_back({GeometryKind::point, {{parse_position(c)}}, tag});
  } else {
    throw InvalidGeometry("unsupported GeoJSON geometry type: " + type);
  }
  for (std::size_t i = first; i < out.features.size(); ++i) validate_feature(out.features[i]);
}

json ring_json(const std::vector<Point>& ring, bool close) {
  json arr = json::array();
  for (const Point& p : ring) arr.push_back({p.x, p.y});
  if (close && !ring.empty()) arr.push_back({ring.front().x, ring.front().y});
  return arr;
}

}  // namespace

VectorLayer parse_geojson(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidGeometry(std::string("GeoJSON parse error: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array())
    throw InvalidGeometry("expected a GeoJSON FeatureCollection");
  VectorLayer layer;
  try {
    for (const json& feat : doc["features"]) {
      std::string tag;
      if (feat.contains("properties") && feat["properties"].is_object() &&
          feat["properties"].contains("class")) {
        const json& c = feat["properties"]["class"];
        tag = c.is_string() ? c.get<std::string>() : c.dump();
      }
      if (!feat.contains("geometry") || feat["geometry"].is_null()) continue;
      append_geometry(feat["geometry"], tag, layer);
    }
  } catch (const json::exception& e) {
    throw InvalidGeometry(std::string("malformed GeoJSON: ") + e.what());
  }
  return layer;
}

VectorLayer load_geojson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_geojson(ss.str());
}

std::string to_geojson(const VectorLayer& layer) {
  json features = json::array();
  for (const Feature& f : layer.features) {
    json geom;
    switch (f.kind) {
      case GeometryKind::polygon: {
        json rings = json::array();
        for (const auto& r : f.rings) rings.push_back(ring_json(r, true));
        geom = {{"type", "Polygon"}, {"coordinates", rings}};
        break;
      }
      case GeometryKind::polyline:
        geom = {{"type", "LineString"}, {"coordinates", ring_json(f.rings.at(0), false)}};
        break;
      case GeometryKind::point: {
        const Point p = f.rings.at(0).at(0);
        geom = {{"type", "Point"}, {"coordinates", {p.x, p.y}}};
        break;
      }
    }
    features.push_back(
        {{"type", "Feature"}, {"properties", {{"class", f.class_tag}}}, {"geometry", geom}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump();
}

// ---------------------------------------------------------------- grid

std::vector<GridCell> make_grid(const geo::GeoBox& region, double cell_km,
                                const std::string& country) {
  if (region.degenerate() || !std::isfinite(region.width()) || !std::isfinite(region.height()))
    throw std::invalid_argument("make_grid: degenerate region");
  if (!(cell_km > 0.0) || !std::isfinite(cell_km))
    throw std::invalid_argument("make_grid: cell_km must be positive");
  constexpr double kTol = 1e-9;
  const double lat0 = region.center().y;
  const double dlon = cell_km / geo::km_per_degree_lon(lat0);
  const double dlat = cell_km / geo::km_per_degree_lat();
  const int cols = static_cast<int>(std::ceil(region.width() / dlon - kTol));
  const int rows = static_cast<int>(std::ceil(region.height() / dlat - kTol));
  std::vector<GridCell> cells;
  cells.reserve(static_cast<std::size_t>(rows) * cols);
  const std::string prefix = country.empty() ? "" : country + "_";
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      GridCell cell;
      cell.row = r;
      cell.col = c;
      cell.country = country;
      char id[32];
      std::snprintf(id, sizeof id, "r%04dc%04d", r, c);
      cell.cell_id = prefix + id;
      cell.bounds.min_lon = region.min_lon + c * dlon;
      cell.bounds.max_lon = c == cols - 1 ? region.max_lon : region.min_lon + (c + 1) * dlon;
      cell.bounds.max_lat = region.max_lat - r * dlat;
      cell.bounds.min_lat = r == rows - 1 ? region.min_lat : region.max_lat - (r + 1) * dlat;
      cell.partial = cell.bounds.width() < dlon * (1.0 - kTol) ||
                     cell.bounds.height() < dlat * (1.0 - kTol);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

void write_manifest(const std::filesystem::path& path, const std::vector<GridCell>& cells,
                    const std::string& preamble) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  if (!preamble.empty()) out << preamble << '\n';
  out << "cell_id,country,min_lon,min_lat,max_lon,max_lat,partial\n";
  out.precision(17);
  for (const GridCell& c : cells)
    out << c.cell_id << ',' << c.country << ',' << c.bounds.min_lon << ',' << c.bounds.min_lat
        << ',' << c.bounds.max_lon << ',' << c.bounds.max_lat << ',' << (c.partial ? 1 : 0)
        << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<GridCell> read_manifest(const std::filesystem::path& path) {
  const std::string ctx = path.string();
  std::vector<GridCell> cells;
  for (const auto& f : csv::read_table(path, "cell_id,country,min_lon,min_lat,max_lon,max_lat,partial")) {
    GridCell c;
    c.cell_id = f[0];
    c.country = f[1];
    c.bounds = {csv::parse_double(f[2], ctx), csv::parse_double(f[3], ctx),
                csv::parse_double(f[4], ctx), csv::parse_double(f[5], ctx)};
    if (f[6] != "0" && f[6] != "1") throw IoError(ctx + ": partial must be 0 or 1");
    c.partial = f[6] == "1";
    cells.push_back(std::move(c));
  }
  return cells;
}

std::vector<std::size_t> select_by_building_area(const std::vector<double>& building_area,
                                                 const std::vector<std::string>& partition,
                                                 const std::vector<std::string>& allowed,
                                                 std::size_t max_cells) {
  if (!allowed.empty() && partition.size() != building_area.size())
    throw std::invalid_argument("select_by_building_area: partition size mismatch");
  const std::unordered_set<std::string> keep(allowed.begin(), allowed.end());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < building_area.size(); ++i)
    if (keep.empty() || keep.count(partition[i])) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return building_area[a] > building_area[b];
  });
  if (idx.size() > max_cells) idx.resize(max_cells);
  return idx;
}

// ---------------------------------------------------------------- drawing

namespace {

// Calls set(x, y) for every pixel whose center lies inside or on the polygon
// (even-odd over all rings), restricted to columns [x_lo, x_hi] and rows
// [y_lo, y_hi].
template <class Set>
void scan_fill(const std::vector<std::vector<Point>>& rings, int x_lo, int x_hi, int y_lo, int y_hi,
               Set&& set) {
  double min_y = HUGE_VAL, max_y = -HUGE_VAL;
  for (const auto& r : rings)
    for (const Point& p : r) {
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  const int row_lo = std::max(y_lo, static_cast<int>(std::ceil(min_y - 0.5)));
  const int row_hi = std::min(y_hi, static_cast<int>(std::floor(max_y - 0.5)));
  auto span = [&](double a, double b, int y) {
    const int lo = std::max(x_lo, static_cast<int>(std::ceil(a - 0.5)));
    const int hi = std::min(x_hi, static_cast<int>(std::floor(b - 0.5)));
    for (int x = lo; x <= hi; ++x) set(x, y);
  };
  std::vector<double> xs;
  for (int y = row_lo; y <= row_hi; ++y) {
    const double yc = y + 0.5;
    xs.clear();
    for (const auto& ring : rings) {
      for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
        const Point a = ring[i], b = ring[(i + 1) % n];
        if ((a.y <= yc) != (b.y <= yc)) xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
        // Centers lying exactly on the boundary count as inside.
        if (a.y == yc && b.y == yc) {
          span(std::min(a.x, b.x), std::max(a.x, b.x), y);
        } else if (std::min(a.y, b.y) <= yc && yc <= std::max(a.y, b.y) && a.y != b.y) {
          const double x = a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y);
          if (x - 0.5 == std::floor(x - 0.5)) span(x, x, y);
        }
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) span(xs[i], xs[i + 1], y);
  }
}

void stroke_segment(MaskRaster& m, Point a, Point b, double half_width) {
  const double hw2 = half_width * half_width + 1e-9;
  const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(a.x, b.x) - half_width - 0.5)));
  const int x1 =
      std::min(m.width - 1, static_cast<int>(std::floor(std::max(a.x, b.x) + half_width - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(a.y, b.y) - half_width - 0.5)));
  const int y1 =
      std::min(m.height - 1, static_cast<int>(std::floor(std::max(a.y, b.y) + half_width - 0.5)));
  const double dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5 - a.x, py = y + 0.5 - a.y;
      double t = len2 > 0.0 ? (px * dx + py * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = px - t * dx, ey = py - t * dy;
      if (ex * ex + ey * ey <= hw2) m.at(x, y) = 255.0f;
    }
  }
}

void draw_disc(MaskRaster& m, Point center, double radius) {
  const int cx = static_cast<int>(std::floor(center.x));
  const int cy = static_cast<int>(std::floor(center.y));
  const int r = static_cast<int>(std::ceil(radius));
  const double r2 = radius * radius + 1e-9;
  for (int y = std::max(0, cy - r); y <= std::min(m.height - 1, cy + r); ++y)
    for (int x = std::max(0, cx - r); x <= std::min(m.width - 1, cx + r); ++x) {
      const double ddx = x - cx, ddy = y - cy;
      if (ddx * ddx + ddy * ddy <= r2) m.at(x, y) = 255.0f;
    }
}

void draw_contour(MaskRaster& m, const std::vector<std::vector<Point>>& rings) {
  double min_x = HUGE_VAL, max_x = -HUGE_VAL, min_y = HUGE_VAL, max_y = -HUGE_VAL;
  for (const auto& r : rings)
    for (const Point& p : r) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  // Local canvas with a one-pixel margin so boundary tests see neighbors
  // just outside the raster.
  const int x0 = std::max(-1, static_cast<int>(std::floor(min_x)) - 1);
  const int x1 = std::min(m.width, static_cast<int>(std::ceil(max_x)) + 1);
  const int y0 = std::max(-1, static_cast<int>(std::floor(min_y)) - 1);
  const int y1 = std::min(m.height, static_cast<int>(std::ceil(max_y)) + 1);
  if (x0 > x1 || y0 > y1) return;
  const int w = x1 - x0 + 1, h = y1 - y0 + 1;
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(w) * h, 0);
  scan_fill(rings, x0, x1, y0, y1, [&](int x, int y) { inside[(y - y0) * w + (x - x0)] = 1; });
  auto in = [&](int x, int y) {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1 && inside[(y - y0) * w + (x - x0)];
  };
  for (int y = std::max(0, y0); y <= std::min(m.height - 1, y1); ++y)
    for (int x = std::max(0, x0); x <= std::min(m.width - 1, x1); ++x)
      if (in(x, y) && (!in(x - 1, y) || !in(x + 1, y) || !in(x, y - 1) || !in(x, y + 1)))
        m.at(x, y) = 255.0f;
}

}  // namespace

MaskRaster rasterize_layer(const VectorLayer& layer, const MaskRaster& target,
                           const RasterOptions& opts) {
  target.validate();
  if (!(opts.road_width_px > 0.0) || !(opts.centroid_radius_px >= 0.0))
    throw std::invalid_argument("rasterize_layer: stroke width and radius must be positive");
  MaskRaster out(target.width, target.height, target.transform, target.meters_per_pixel);
  for (const Feature& f : layer.features) {
    if (opts.class_filter && f.class_tag != *opts.class_filter) continue;
    validate_feature(f);
    std::vector<std::vector<Point>> px;
    px.reserve(f.rings.size());
    for (const auto& ring : f.rings) {
      auto& r = px.emplace_back();
      r.reserve(ring.size());
      for (const Point& g : ring) r.push_back(target.transform.geo_to_pixel(g));
    }
    switch (opts.mode) {
      case RasterMode::fill:
        if (f.kind == GeometryKind::polygon)
          scan_fill(px, 0, out.width - 1, 0, out.height - 1,
                    [&](int x, int y) { out.at(x, y) = 255.0f; });
        else if (f.kind == GeometryKind::point)
          draw_disc(out, px[0][0], opts.centroid_radius_px);
        break;
      case RasterMode::contour:
        if (f.kind == GeometryKind::polygon) draw_contour(out, px);
        break;
      case RasterMode::centroid:
        if (f.kind == GeometryKind::polygon) {
          Feature pf{GeometryKind::polygon, px, {}};
          draw_disc(out, polygon_centroid(pf), opts.centroid_radius_px);
        } else if (f.kind == GeometryKind::point) {
          draw_disc(out, px[0][0], opts.centroid_radius_px);
        }
        break;
      case RasterMode::road:
        if (f.kind == GeometryKind::polyline)
          for (std::size_t i = 0; i + 1 < px[0].size(); ++i)
            stroke_segment(out, px[0][i], px[0][i + 1], opts.road_width_px / 2.0);
        break;
    }
  }
  return out;
}

MaskRaster tile_geometry(const geo::GeoBox& bounds, int size_px) {
  const geo::GeoTransform t = geo::GeoTransform::for_box(bounds, size_px, size_px);
  MaskRaster m(size_px, size_px, t, meters_per_pixel(t, size_px, size_px));
  m.validate();
  return m;
}

// ---------------------------------------------------------------- preprocessing

Image pad_image(const Image& img, int pad) {
  if (pad < 0) throw std::invalid_argument("pad_image: negative pad");
  Image out(img.width + 2 * pad, img.height + 2 * pad, img.channels);
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    std::copy_n(img.pixels.begin() + y * row, row,
                out.pixels.begin() + ((y + pad) * static_cast<std::size_t>(out.width) + pad) *
                                         img.channels);
  return out;
}

MaskRaster pad_mask(const MaskRaster& mask, int pad) {
  if (pad < 0) throw std::invalid_argument("pad_mask: negative pad");
  MaskRaster out(mask.width + 2 * pad, mask.height + 2 * pad, mask.transform.shifted(-pad, -pad),
                 mask.meters_per_pixel);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at(x + pad, y + pad) = mask.at(x, y);
  return out;
}

Image crop_image(const Image& img, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || width < 0 || height < 0 || x0 + width > img.width ||
      y0 + height > img.height)
    throw std::out_of_range("crop_image: window outside image");
  Image out(width, height, img.channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  return out;
}

MaskRaster crop_mask(const MaskRaster& mask, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || width < 0 || height < 0 || x0 + width > mask.width ||
      y0 + height > mask.height)
    throw std::out_of_range("crop_mask: window outside mask");
  MaskRaster out(width, height, mask.transform.shifted(x0, y0), mask.meters_per_pixel);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(x, y) = mask.at(x0 + x, y0 + y);
  return out;
}

Image rescale_colors(const Image& img) {
  Image out = img;
  for (int c = 0; c < img.channels; ++c) {
    int peak = 0;
    for (std::size_t i = c; i < img.pixels.size(); i += img.channels)
      peak = std::max<int>(peak, img.pixels[i]);
    if (peak == 0 || peak == 255) continue;
    const double scale = 255.0 / peak;
    for (std::size_t i = c; i < img.pixels.size(); i += img.channels)
      out.pixels[i] = static_cast<std::uint8_t>(
          std::min(255L, std::lround(img.pixels[i] * scale)));
  }
  return out;
}

Image rot90(const Image& img) {
  if (img.width != img.height) throw std::invalid_argument("rot90: image is not square");
  const int s = img.width;
  Image out(s, s, img.channels);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, s - 1 - x, c) = img.at(x, y, c);
  return out;
}

MaskRaster rot90(const MaskRaster& mask) {
  if (mask.width != mask.height) throw std::invalid_argument("rot90: mask is not square");
  const int s = mask.width;
  // New pixel p maps back to old pixel (s - p.y, p.x); fold that into the transform.
  const auto& c = mask.transform.c;
  geo::GeoTransform t;
  t.c = {c[0] + s * c[1], c[2], -c[1], c[3] + s * c[4], c[5], -c[4]};
  MaskRaster out(s, s, t, mask.meters_per_pixel);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) out.at(y, s - 1 - x) = mask.at(x, y);
  return out;
}

Point rot90_point(Point p, int size) { return {p.y, size - p.x}; }

std::array<AugmentedPair, 4> augment(const Image& img, const MaskRaster& mask) {
  if (img.width != img.height || mask.width != mask.height)
    throw std::invalid_argument("augment: inputs must be square");
  if (img.width != mask.width) throw std::invalid_argument("augment: image and mask sizes differ");
  std::array<AugmentedPair, 4> out;
  out[0] = {img, mask};
  for (int k = 1; k < 4; ++k) out[k] = {rot90(out[k - 1].image), rot90(out[k - 1].mask)};
  return out;
}

}  // namespace satinfra::raster
