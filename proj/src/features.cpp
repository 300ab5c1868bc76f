#include "satinfra/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "csv.hpp"

namespace satinfra::features {

const char* variable_name(Variable v) {
  switch (v) {
    case Variable::buildings: return "buildings";
    case Variable::road_m: return "road_m";
    case Variable::road_components: return "road_components";
    case Variable::nightlight: return "nightlight";
  }
  return "?";
}

std::array<double, 7> Aggregate::as_array() const {
  return {sum, mean, quantiles[0], quantiles[1], quantiles[2], quantiles[3], quantiles[4]};
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty list");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0, 1]");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate: empty list");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  Aggregate a;
  // Summing in sorted order keeps the result independent of input order.
  for (double v : s) a.sum += v;
  a.mean = a.sum / static_cast<double>(s.size());
  for (std::size_t i = 0; i < kQuantiles.size(); ++i) a.quantiles[i] = quantile(s, kQuantiles[i]);
  return a;
}

std::vector<std::size_t> select_cells(const ClusterSite& site, const std::vector<geo::Point>& centers,
                                      double radius_km) {
  if (!(radius_km >= 0.0)) throw std::invalid_argument("select_cells: negative radius");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < centers.size(); ++i)
    if (geo::haversine_km(site.lon, site.lat, centers[i].x, centers[i].y) <= radius_km)
      out.push_back(i);
  return out;
}

NightlightStat nightlight_stat(const geo::GeoBox& cell, const raster::MaskRaster& nl) {
  const auto& c = nl.transform.c;
  if (c[2] != 0.0 || c[4] != 0.0 || !(c[1] > 0.0) || !(c[5] < 0.0))
    throw std::invalid_argument("nightlight_stat: raster must be north-up");
  const geo::Point ul = nl.transform.geo_to_pixel({cell.min_lon, cell.max_lat});
  const geo::Point lr = nl.transform.geo_to_pixel({cell.max_lon, cell.min_lat});
  // Pixel i is inside when ul.x <= i + 0.5 < lr.x.
  const long x0 = std::max(0L, static_cast<long>(std::ceil(ul.x - 0.5)));
  const long x1 = std::min<long>(nl.width, static_cast<long>(std::ceil(lr.x - 0.5)));
  const long y0 = std::max(0L, static_cast<long>(std::ceil(ul.y - 0.5)));
  const long y1 = std::min<long>(nl.height, static_cast<long>(std::ceil(lr.y - 0.5)));
  NightlightStat st;
  double sum = 0.0;
  for (long y = y0; y < y1; ++y)
    for (long x = x0; x < x1; ++x) {
      sum += nl.at(static_cast<int>(x), static_cast<int>(y));
      ++st.pixels;
    }
  st.overlap = st.pixels > 0;
  st.value = st.overlap ? sum / static_cast<double>(st.pixels) : 0.0;
  return st;
}

FeatureBuild build_features(const std::vector<ClusterSite>& sites,
                            const std::vector<raster::GridCell>& cells,
                            const std::vector<CellCounts>& counts, double radius_km,
                            std::size_t min_cells) {
  std::unordered_map<std::string, const CellCounts*> by_id;
  for (const auto& c : counts) by_id.emplace(c.cell_id, &c);
  std::vector<geo::Point> centers;
  std::vector<const CellCounts*> cell_counts;
  for (const auto& cell : cells) {
    auto it = by_id.find(cell.cell_id);
    if (it == by_id.end()) continue;
    centers.push_back(cell.bounds.center());
    cell_counts.push_back(it->second);
  }

  FeatureBuild out;
  for (const ClusterSite& site : sites) {
    if (!std::isfinite(site.lon) || !std::isfinite(site.lat) || std::abs(site.lat) > 90.0 ||
        std::abs(site.lon) > 180.0) {
      out.dropped.push_back({site.cluster_id, "invalid coordinates"});
      continue;
    }
    const auto idx = select_cells(site, centers, radius_km);
    if (idx.size() < min_cells || idx.empty()) {
      out.dropped.push_back({site.cluster_id, "only " + std::to_string(idx.size()) +
                                                  " cells within " + csv::fmt(radius_km) + " km"});
      continue;
    }
    FeatureRow row{site.cluster_id, site.country, site.wealth, site.wealthpooled, idx.size(), {}};
    std::array<std::vector<double>, 4> vals;
    for (std::size_t i : idx) {
      const CellCounts& c = *cell_counts[i];
      vals[0].push_back(c.buildings);
      vals[1].push_back(c.road_m);
      vals[2].push_back(c.road_components);
      if (c.nightlight) vals[3].push_back(*c.nightlight);
    }
    for (std::size_t v = 0; v < 4; ++v)
      if (!vals[v].empty()) row.vars[v] = aggregate(vals[v]);
    out.rows.push_back(std::move(row));
  }
  return out;
}

FeatureSet parse_feature_set(const std::string& s) {
  if (s == "buildings") return FeatureSet::buildings;
  if (s == "roads") return FeatureSet::roads;
  if (s == "buildings_roads") return FeatureSet::buildings_roads;
  if (s == "nightlight") return FeatureSet::nightlight;
  if (s == "all") return FeatureSet::all;
  throw std::invalid_argument("unknown feature set '" + s +
                              "' (buildings, roads, buildings_roads, nightlight, all)");
}

std::string to_string(FeatureSet s) {
  switch (s) {
    case FeatureSet::buildings: return "buildings";
    case FeatureSet::roads: return "roads";
    case FeatureSet::buildings_roads: return "buildings_roads";
    case FeatureSet::nightlight: return "nightlight";
    case FeatureSet::all: return "all";
  }
  return "?";
}

Label parse_label(const std::string& s) {
  if (s == "wealth") return Label::wealth;
  if (s == "wealthpooled") return Label::wealthpooled;
  throw std::invalid_argument("unknown label '" + s + "' (wealth, wealthpooled)");
}

std::string to_string(Label l) { return l == Label::wealth ? "wealth" : "wealthpooled"; }

std::vector<Variable> variables_of(FeatureSet s) {
  switch (s) {
    case FeatureSet::buildings: return {Variable::buildings};
    case FeatureSet::roads: return {Variable::road_m, Variable::road_components};
    case FeatureSet::buildings_roads:
      return {Variable::buildings, Variable::road_m, Variable::road_components};
    case FeatureSet::nightlight: return {Variable::nightlight};
    case FeatureSet::all: return {kVariables.begin(), kVariables.end()};
  }
  return {};
}

std::vector<std::string> feature_columns(FeatureSet s) {
  std::vector<std::string> cols;
  for (Variable v : variables_of(s))
    for (const char* stat : kStatNames) cols.push_back(std::string(variable_name(v)) + "_" + stat);
  return cols;
}

DesignMatrix build_matrix(const std::vector<FeatureRow>& rows, FeatureSet set, Label label) {
  DesignMatrix m;
  m.columns = feature_columns(set);
  const auto vars = variables_of(set);
  for (const FeatureRow& r : rows) {
    const auto& y = label == Label::wealth ? r.wealth : r.wealthpooled;
    if (!y || !std::isfinite(*y)) {
      m.dropped.push_back({r.cluster_id, "missing " + to_string(label)});
      continue;
    }
    std::vector<double> xs;
    bool gap = false;
    for (Variable v : vars) {
      const auto& agg = r.vars[static_cast<std::size_t>(v)];
      if (!agg) {
        m.dropped.push_back({r.cluster_id, std::string("missing ") + variable_name(v)});
        gap = true;
        break;
      }
      for (double a : agg->as_array()) xs.push_back(a);
    }
    if (gap) continue;
    m.x.insert(m.x.end(), xs.begin(), xs.end());
    m.y.push_back(*y);
    m.country.push_back(r.country);
    m.cluster_id.push_back(r.cluster_id);
    ++m.rows;
  }
  if (m.rows == 0) throw std::invalid_argument("build_matrix: no complete rows");
  return m;
}

// ---------------------------------------------------------------- I/O

namespace {
constexpr const char* kClusterHeader = "cluster_id,country,lon,lat,wealth,wealthpooled";
constexpr const char* kCountsHeader = "cell_id,buildings,road_m,road_components,nightlight";

std::string features_header() {
  std::string h = "cluster_id,country,wealth,wealthpooled,n_cells";
  for (const auto& c : feature_columns(FeatureSet::all)) h += "," + c;
  return h;
}
}  // namespace

std::vector<ClusterSite> read_clusters(const std::filesystem::path& path) {
  std::vector<ClusterSite> out;
  const std::string ctx = path.string();
  for (const auto& f : csv::read_table(path, kClusterHeader)) {
    ClusterSite s{f[0], f[1], csv::parse_double(f[2], ctx), csv::parse_double(f[3], ctx),
                  csv::parse_optional(f[4], ctx), csv::parse_optional(f[5], ctx)};
    if (!s.wealth && !s.wealthpooled)
      throw raster::IoError(ctx + ": cluster " + s.cluster_id + " has no label");
    out.push_back(std::move(s));
  }
  return out;
}

void write_clusters(const std::filesystem::path& path, const std::vector<ClusterSite>& sites,
                    const std::string& preamble) {
  csv::Writer w(path, preamble, kClusterHeader);
  for (const auto& s : sites)
    w.row(s.cluster_id, s.country, csv::fmt(s.lon), csv::fmt(s.lat), csv::fmt(s.wealth),
          csv::fmt(s.wealthpooled));
}

std::vector<CellCounts> read_counts(const std::filesystem::path& path) {
  std::vector<CellCounts> out;
  const std::string ctx = path.string();
  for (const auto& f : csv::read_table(path, kCountsHeader))
    out.push_back({f[0], csv::parse_double(f[1], ctx), csv::parse_double(f[2], ctx),
                   csv::parse_double(f[3], ctx), csv::parse_optional(f[4], ctx)});
  return out;
}

void write_counts(const std::filesystem::path& path, const std::vector<CellCounts>& counts,
                  const std::string& preamble) {
  csv::Writer w(path, preamble, kCountsHeader);
  for (const auto& c : counts)
    w.row(c.cell_id, csv::fmt(c.buildings), csv::fmt(c.road_m), csv::fmt(c.road_components),
          csv::fmt(c.nightlight));
}

void write_features(const std::filesystem::path& path, const std::vector<FeatureRow>& rows,
                    const std::string& preamble) {
  csv::Writer w(path, preamble, features_header());
  for (const auto& r : rows) {
    auto& s = w.stream();
    s << r.cluster_id << ',' << r.country << ',' << csv::fmt(r.wealth) << ','
      << csv::fmt(r.wealthpooled) << ',' << r.n_cells;
    for (const auto& agg : r.vars)
      for (std::size_t k = 0; k < kStatNames.size(); ++k)
        s << ',' << (agg ? csv::fmt(agg->as_array()[k]) : std::string());
    s << '\n';
  }
}

std::vector<FeatureRow> read_features(const std::filesystem::path& path) {
  std::vector<FeatureRow> out;
  const std::string ctx = path.string();
  for (const auto& f : csv::read_table(path, features_header())) {
    FeatureRow r;
    r.cluster_id = f[0];
    r.country = f[1];
    r.wealth = csv::parse_optional(f[2], ctx);
    r.wealthpooled = csv::parse_optional(f[3], ctx);
    r.n_cells = static_cast<std::size_t>(csv::parse_double(f[4], ctx));
    for (std::size_t v = 0; v < 4; ++v) {
      const std::size_t base = 5 + v * kStatNames.size();
      if (f[base].empty()) continue;
      std::array<double, 7> a{};
      for (std::size_t k = 0; k < 7; ++k) a[k] = csv::parse_double(f[base + k], ctx);
      r.vars[v] = Aggregate{a[0], a[1], {a[2], a[3], a[4], a[5], a[6]}};
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace satinfra::features
