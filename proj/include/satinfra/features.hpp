#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satinfra/geo.hpp"
#include "satinfra/raster.hpp"
#include "satinfra/rasterize.hpp"

namespace satinfra::features {

inline constexpr std::array<double, 5> kQuantiles{0.1, 0.25, 0.5, 0.75, 0.9};
inline constexpr std::array<const char*, 7> kStatNames{"sum", "mean", "q10", "q25",
                                                       "q50", "q75", "q90"};
inline constexpr double kDefaultRadiusKm = 5.0;

struct ClusterSite {
  std::string cluster_id;
  std::string country;
  double lon = 0.0;
  double lat = 0.0;
  std::optional<double> wealth;
  std::optional<double> wealthpooled;
};

// Per-tile measurements, one row per grid cell.
struct CellCounts {
  std::string cell_id;
  double buildings = 0.0;
  double road_m = 0.0;
  double road_components = 0.0;
  std::optional<double> nightlight;  // empty when the raster misses the cell
};

enum class Variable { buildings, road_m, road_components, nightlight };
inline constexpr std::array<Variable, 4> kVariables{Variable::buildings, Variable::road_m,
                                                    Variable::road_components,
                                                    Variable::nightlight};
const char* variable_name(Variable v);

struct Aggregate {
  double sum = 0.0;
  double mean = 0.0;
  std::array<double, 5> quantiles{};
  std::array<double, 7> as_array() const;
};

// Linear interpolation between order statistics at position p * (n - 1).
double quantile(std::span<const double> sorted, double p);
// Throws std::invalid_argument on an empty list.
Aggregate aggregate(std::span<const double> values);

// Indices of centers within radius_km (great-circle) of the site.
std::vector<std::size_t> select_cells(const ClusterSite& site,
                                      const std::vector<geo::Point>& centers,
                                      double radius_km = kDefaultRadiusKm);

struct NightlightStat {
  double value = 0.0;
  bool overlap = false;
  std::size_t pixels = 0;
};

// Mean of raster pixels whose centers fall in the cell, using half-open
// intervals in pixel space. Requires a north-up raster.
NightlightStat nightlight_stat(const geo::GeoBox& cell, const raster::MaskRaster& nl);

struct FeatureRow {
  std::string cluster_id;
  std::string country;
  std::optional<double> wealth;
  std::optional<double> wealthpooled;
  std::size_t n_cells = 0;
  // Indexed by Variable. Empty when no contributing cell has the variable.
  std::array<std::optional<Aggregate>, 4> vars;
};

struct DroppedSite {
  std::string cluster_id;
  std::string reason;
};

struct FeatureBuild {
  std::vector<FeatureRow> rows;
  std::vector<DroppedSite> dropped;
};

// Joins manifest cells with their counts, selects cells around each site
// and aggregates. Cells without a counts row are ignored. Sites with fewer
// than min_cells cells are dropped with a reason.
FeatureBuild build_features(const std::vector<ClusterSite>& sites,
                            const std::vector<raster::GridCell>& cells,
                            const std::vector<CellCounts>& counts,
                            double radius_km = kDefaultRadiusKm, std::size_t min_cells = 1);

enum class FeatureSet { buildings, roads, buildings_roads, nightlight, all };
enum class Label { wealth, wealthpooled };

FeatureSet parse_feature_set(const std::string& s);  // throws std::invalid_argument
std::string to_string(FeatureSet s);
Label parse_label(const std::string& s);
std::string to_string(Label l);

std::vector<Variable> variables_of(FeatureSet s);
// `<var>_<stat>` names in a fixed order.
std::vector<std::string> feature_columns(FeatureSet s);

struct DesignMatrix {
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::vector<double> x;  // row-major rows x columns
  std::vector<double> y;
  std::vector<std::string> country;
  std::vector<std::string> cluster_id;
  std::vector<DroppedSite> dropped;  // rows with a missing label or variable

  double at(std::size_t r, std::size_t c) const { return x[r * columns.size() + c]; }
};

// Throws std::invalid_argument if no row survives.
DesignMatrix build_matrix(const std::vector<FeatureRow>& rows, FeatureSet set, Label label);

// I/O. Missing values are empty fields.
std::vector<ClusterSite> read_clusters(const std::filesystem::path& path);
void write_clusters(const std::filesystem::path& path, const std::vector<ClusterSite>& sites,
                    const std::string& preamble = "");
std::vector<CellCounts> read_counts(const std::filesystem::path& path);
void write_counts(const std::filesystem::path& path, const std::vector<CellCounts>& counts,
                  const std::string& preamble = "");
void write_features(const std::filesystem::path& path, const std::vector<FeatureRow>& rows,
                    const std::string& preamble = "");
std::vector<FeatureRow> read_features(const std::filesystem::path& path);

}  // namespace satinfra::features
