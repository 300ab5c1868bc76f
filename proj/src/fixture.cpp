#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "satinfra/dataset.hpp"
#include "satinfra/features.hpp"
#include "satinfra/pipeline.hpp"
#include "satinfra/rasterize.hpp"

namespace satinfra::pipeline {

namespace fs = std::filesystem;

namespace {

// Latent development factors of one cell. Building density, road network
// and nightlight are driven by independent factors.
struct Latent {
  double buildings = 0.0;
  double roads = 0.0;
  double light = 0.0;
};

constexpr double kFixtureRadiusKm = 1.5;

}  // namespace

void make_fixture(const fs::path& dir, const FixtureOptions& o) {
  if (o.countries < 2 || o.cells_per_side < 1 || o.tile_px < 16 || o.clusters_per_country < 1)
    throw std::invalid_argument("make_fixture: bad options");
  fs::create_directories(dir / "images");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3), unit(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);

  std::vector<raster::GridCell> cells;
  std::vector<Latent> latent;
  std::vector<geo::GeoBox> regions;
  raster::VectorLayer layer;
  const double side_km = o.cells_per_side;

  for (int ci = 0; ci < o.countries; ++ci) {
    const std::string code{static_cast<char>('A' + ci), static_cast<char>('A' + ci)};
    const double level = 0.3 + 0.4 * ci / (o.countries - 1);
    const geo::GeoBox region = geo::box_from_km(30.0 + 0.05 * ci, 0.5, side_km, side_km);
    regions.push_back(region);
    const auto grid = raster::make_grid(region, 1.0, code);
    if (grid.size() != static_cast<std::size_t>(o.cells_per_side * o.cells_per_side))
      throw std::logic_error("make_fixture: unexpected grid size");
    for (const auto& cell : grid) {
      Latent l{std::clamp(level + u(rng), 0.0, 1.0), std::clamp(level + u(rng), 0.0, 1.0),
               std::clamp(level + u(rng), 0.0, 1.0)};
      data::SynthOptions so;
      so.size_px = o.tile_px;
      so.min_buildings = so.max_buildings = static_cast<int>(std::lround(l.buildings * 5.0));
      so.min_side_px = 4;
      so.max_side_px = std::min(8, o.tile_px / 4);
      so.min_roads = so.max_roads = static_cast<int>(std::lround(l.roads * 3.0));
      so.road_width_px = 3.0;
      const data::SynthTile tile = data::make_synthetic_tile(rng, cell.bounds, so);
      raster::write_png(dir / "images" / (cell.cell_id + ".png"), tile.image);
      // Incomplete labels: half of the buildings go missing.
      const raster::VectorLayer v = unit(rng) < o.corrupt_fraction
                                        ? data::erase_fraction(tile.vectors, "building", 0.5, rng)
                                        : tile.vectors;
      layer.features.insert(layer.features.end(), v.features.begin(), v.features.end());
      cells.push_back(cell);
      latent.push_back(l);
    }
  }
  raster::write_manifest(dir / "manifest.csv", cells);
  {
    std::ofstream out(dir / "vectors.geojson");
    out << raster::to_geojson(layer) << '\n';
    if (!out) throw raster::IoError("cannot write vectors.geojson");
  }

  // Nightlight raster over all regions, four pixels per cell side.
  geo::GeoBox all = regions.front();
  for (const auto& r : regions) {
    all.min_lon = std::min(all.min_lon, r.min_lon);
    all.min_lat = std::min(all.min_lat, r.min_lat);
    all.max_lon = std::max(all.max_lon, r.max_lon);
    all.max_lat = std::max(all.max_lat, r.max_lat);
  }
  const double px_deg = cells.front().bounds.width() / 4.0;
  const int w = static_cast<int>(std::ceil(all.width() / px_deg));
  const int h = static_cast<int>(std::ceil(all.height() / px_deg));
  const geo::GeoBox nl_box{all.min_lon, all.max_lat - h * px_deg, all.min_lon + w * px_deg, all.max_lat};
  const geo::GeoTransform t = geo::GeoTransform::for_box(nl_box, w, h);
  raster::MaskRaster nl(w, h, t, raster::meters_per_pixel(t, w, h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const geo::Point p = t.pixel_to_geo({x + 0.5, y + 0.5});
      double v = 2.0;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& b = cells[i].bounds;
        if (p.x >= b.min_lon && p.x < b.max_lon && p.y >= b.min_lat && p.y < b.max_lat) {
          v = 10.0 + 200.0 * latent[i].light + 8.0 * g(rng);
          break;
        }
      }
      nl.at(x, y) = static_cast<float>(std::clamp(std::round(v), 0.0, 255.0));
    }
  raster::save_mask(dir / "nightlight.png", nl);

  // Survey clusters. Wealth depends on all three latent factors of nearby cells.
  std::vector<geo::Point> centers;
  for (const auto& c : cells) centers.push_back(c.bounds.center());
  std::vector<features::ClusterSite> sites;
  for (int ci = 0; ci < o.countries; ++ci) {
    const auto& r = regions[ci];
    const double inset_lon = 0.125 * r.width(), inset_lat = 0.125 * r.height();
    std::uniform_real_distribution<double> lon(r.min_lon + inset_lon, r.max_lon - inset_lon);
    std::uniform_real_distribution<double> lat(r.min_lat + inset_lat, r.max_lat - inset_lat);
    for (int k = 0; k < o.clusters_per_country; ++k) {
      features::ClusterSite s;
      s.country = cells[ci * o.cells_per_side * o.cells_per_side].country;
      s.cluster_id = s.country + "_k" + std::to_string(k);
      s.lon = lon(rng);
      s.lat = lat(rng);
      const auto idx = features::select_cells(s, centers, kFixtureRadiusKm);
      double b = 0.0, rd = 0.0, li = 0.0;
      for (std::size_t i : idx) {
        b += latent[i].buildings;
        rd += latent[i].roads;
        li += latent[i].light;
      }
      const double n = std::max<std::size_t>(idx.size(), 1);
      const double wealth = 2.0 * (b / n - 0.5) + 2.0 * (rd / n - 0.5) + 2.0 * (li / n - 0.5) + 0.1 * g(rng);
      s.wealth = wealth;
      s.wealthpooled = 0.8 * wealth + 0.1 + 0.05 * g(rng);
      sites.push_back(s);
    }
  }
  features::write_clusters(dir / "clusters.csv", sites);

  Config c;
  c.seed = o.seed;
  c.nightlight = "nightlight.png";
  c.tile_px = o.tile_px;
  c.road_width_px = 3.0;
  c.features_radius_km = kFixtureRadiusKm;
  c.features_min_cells = 3;
  c.validate();
  std::ofstream out(dir / "config.ini");
  out << serialize(c);
  if (!out) throw raster::IoError("cannot write config.ini");
}

}  // namespace satinfra::pipeline
