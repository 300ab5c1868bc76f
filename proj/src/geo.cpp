#include "satinfra/geo.hpp"

#include <stdexcept>

namespace satinfra::geo {

double haversine_km(double lon1, double lat1, double lon2, double lat2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

GeoBox box_from_km(double center_lon, double center_lat, double width_km, double height_km) {
  const double half_w = width_km / km_per_degree_lon(center_lat) / 2.0;
  const double half_h = height_km / km_per_degree_lat() / 2.0;
  return {center_lon - half_w, center_lat - half_h, center_lon + half_w, center_lat + half_h};
}

Point GeoTransform::geo_to_pixel(Point g) const {
  const double det = determinant();
  if (det == 0.0) throw std::domain_error("GeoTransform is not invertible");
  const double dx = g.x - c[0], dy = g.y - c[3];
  return {(c[5] * dx - c[2] * dy) / det, (c[1] * dy - c[4] * dx) / det};
}

GeoTransform GeoTransform::for_box(const GeoBox& box, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("for_box: non-positive size");
  GeoTransform t;
  t.c = {box.min_lon, box.width() / width, 0.0, box.max_lat, 0.0, -box.height() / height};
  return t;
}

GeoTransform GeoTransform::shifted(double dx, double dy) const {
  GeoTransform t = *this;
  const Point origin = pixel_to_geo({dx, dy});
  t.c[0] = origin.x;
  t.c[3] = origin.y;
  return t;
}

std::array<double, 6> GeoTransform::to_world_file() const {
  const Point first = pixel_to_geo({0.5, 0.5});
  return {c[1], c[4], c[2], c[5], first.x, first.y};
}

GeoTransform GeoTransform::from_world_file(const std::array<double, 6>& w) {
  GeoTransform t;
  t.c[1] = w[0];
  t.c[4] = w[1];
  t.c[2] = w[2];
  t.c[5] = w[3];
  t.c[0] = w[4] - 0.5 * t.c[1] - 0.5 * t.c[2];
  t.c[3] = w[5] - 0.5 * t.c[4] - 0.5 * t.c[5];
  return t;
}

}  // namespace satinfra::geo
