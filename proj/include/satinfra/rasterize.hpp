#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "satinfra/geo.hpp"
#include "satinfra/raster.hpp"

namespace satinfra::raster {

struct InvalidGeometry : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class GeometryKind { polygon, polyline, point };

// Polygon: rings[0] is the outer boundary, further rings are holes. Rings are
// stored open (no repeated closing vertex). Polyline: rings[0]. Point: rings[0][0].
struct Feature {
  GeometryKind kind = GeometryKind::polygon;
  std::vector<std::vector<geo::Point>> rings;
  std::string class_tag;
};

struct VectorLayer {
  std::vector<Feature> features;
};

// Throws InvalidGeometry for rings with fewer than 3 distinct vertices,
// self-intersecting rings, polylines with fewer than 2 vertices, or
// non-finite coordinates.
void validate_feature(const Feature& f);

// GeoJSON FeatureCollection with Polygon, MultiPolygon, LineString,
// MultiLineString and Point geometries. The tag is read from the `class`
// property. Multi-geometries become one Feature per part.
VectorLayer parse_geojson(const std::string& text);
VectorLayer load_geojson(const std::filesystem::path& path);
std::string to_geojson(const VectorLayer& layer);

struct GridCell {
  std::string cell_id;
  std::string country;
  int row = 0;
  int col = 0;
  geo::GeoBox bounds;
  bool partial = false;
};

// Row-major grid anchored at the north-west corner of `region`. Cell sides
// are converted to degrees at the region's center latitude. Edge cells are
// clipped to the region and flagged partial.
std::vector<GridCell> make_grid(const geo::GeoBox& region, double cell_km,
                                const std::string& country = "");

void write_manifest(const std::filesystem::path& path, const std::vector<GridCell>& cells,
                    const std::string& preamble = "");
std::vector<GridCell> read_manifest(const std::filesystem::path& path);

// Indices of cells in descending order of building area, restricted to cells
// whose partition label is in `allowed` (all cells if `allowed` is empty),
// stopping after `max_cells`. Ties keep the input order.
std::vector<std::size_t> select_by_building_area(const std::vector<double>& building_area,
                                                 const std::vector<std::string>& partition,
                                                 const std::vector<std::string>& allowed,
                                                 std::size_t max_cells);

enum class RasterMode { fill, contour, centroid, road };

struct RasterOptions {
  RasterMode mode = RasterMode::fill;
  double road_width_px = 5.0;
  double centroid_radius_px = 3.0;
  // Only features with this tag are drawn when set.
  std::optional<std::string> class_filter;
};

// Draws `layer` into a zero mask with the geometry of `target`.
//   fill:     pixels whose centers lie inside or on a polygon; points as discs
//   contour:  filled pixels of a polygon with a 4-neighbor outside it
//   centroid: a disc on the pixel containing each polygon centroid or point
//   road:     polylines, covering pixel centers within road_width_px / 2
// Features not drawn by a mode are skipped.
MaskRaster rasterize_layer(const VectorLayer& layer, const MaskRaster& target,
                           const RasterOptions& opts = {});

// Tile-sized north-up mask geometry for a grid cell.
MaskRaster tile_geometry(const geo::GeoBox& bounds, int size_px);

Image pad_image(const Image& img, int pad);
MaskRaster pad_mask(const MaskRaster& mask, int pad);
Image crop_image(const Image& img, int x0, int y0, int width, int height);
MaskRaster crop_mask(const MaskRaster& mask, int x0, int y0, int width, int height);

// Per-channel stretch so that each nonzero channel peaks at 255.
Image rescale_colors(const Image& img);

// Counter-clockwise quarter turn of a square raster: the pixel at (x, y)
// moves to (y, S-1-x). rot90_point maps continuous pixel coordinates,
// (x, y) -> (y, S - x), which agrees on pixel centers.
Image rot90(const Image& img);
MaskRaster rot90(const MaskRaster& mask);
geo::Point rot90_point(geo::Point p, int size);

struct AugmentedPair {
  Image image;
  MaskRaster mask;
};
// Original plus 90, 180 and 270 degree rotations.
std::array<AugmentedPair, 4> augment(const Image& img, const MaskRaster& mask);

// Even-odd point-in-polygon over all rings; points on an edge count as inside.
bool polygon_contains(const Feature& f, geo::Point p);

// Area centroid of a polygon (holes subtracted) in the coordinates of its rings.
geo::Point polygon_centroid(const Feature& f);

}  // namespace satinfra::raster
