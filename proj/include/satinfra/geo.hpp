#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace satinfra::geo {

inline constexpr double kEarthRadiusKm = 6371.0088;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Axis-aligned lon/lat box.
struct GeoBox {
  double min_lon = 0.0;
  double min_lat = 0.0;
  double max_lon = 0.0;
  double max_lat = 0.0;

  double width() const { return max_lon - min_lon; }
  double height() const { return max_lat - min_lat; }
  Point center() const { return {(min_lon + max_lon) / 2.0, (min_lat + max_lat) / 2.0}; }
  bool degenerate() const { return !(width() > 0.0) || !(height() > 0.0); }
  bool operator==(const GeoBox&) const = default;
};

inline double km_per_degree_lat() { return kEarthRadiusKm * std::numbers::pi / 180.0; }
inline double km_per_degree_lon(double lat_deg) {
  return km_per_degree_lat() * std::cos(lat_deg * std::numbers::pi / 180.0);
}

// Great-circle distance on a spherical Earth.
double haversine_km(double lon1, double lat1, double lon2, double lat2);

// Box of the given size centered at (lon, lat) under the local
// equirectangular approximation used by make_grid.
GeoBox box_from_km(double center_lon, double center_lat, double width_km, double height_km);

// Affine pixel -> geo map in GDAL coefficient order:
//   lon = c[0] + col * c[1] + row * c[2]
//   lat = c[3] + col * c[4] + row * c[5]
// Pixel coordinates are continuous; (0,0) is the outer corner of pixel (0,0)
// and pixel (i,j) has its center at (i + 0.5, j + 0.5).
struct GeoTransform {
  std::array<double, 6> c{0.0, 1.0, 0.0, 0.0, 0.0, 1.0};

  Point pixel_to_geo(Point px) const {
    return {c[0] + px.x * c[1] + px.y * c[2], c[3] + px.x * c[4] + px.y * c[5]};
  }
  Point geo_to_pixel(Point g) const;  // throws std::domain_error if not invertible
  double determinant() const { return c[1] * c[5] - c[2] * c[4]; }
  bool invertible() const { return determinant() != 0.0; }

  // North-up transform covering `box` with width x height pixels.
  static GeoTransform for_box(const GeoBox& box, int width, int height);
  // Moves the origin so that pixel (dx, dy) of the old grid becomes (0, 0).
  GeoTransform shifted(double dx, double dy) const;

  // World-file order: A D B E C F, with C/F at the center of the first pixel.
  std::array<double, 6> to_world_file() const;
  static GeoTransform from_world_file(const std::array<double, 6>& w);

  bool operator==(const GeoTransform&) const = default;
};

}  // namespace satinfra::geo
