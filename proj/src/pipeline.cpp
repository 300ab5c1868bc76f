#include "satinfra/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "satinfra/benchmark.hpp"
#include "satinfra/dataset.hpp"
#include "satinfra/features.hpp"
#include "satinfra/judge.hpp"
#include "satinfra/layers.hpp"
#include "satinfra/postprocess.hpp"
#include "satinfra/rasterize.hpp"
#include "satinfra/train.hpp"
#include "satinfra/unet.hpp"

namespace satinfra::pipeline {

namespace fs = std::filesystem;

std::string PipelineError::to_json() const {
  nlohmann::ordered_json j;
  j["error"]["kind"] = kind_;
  j["error"]["stage"] = stage_;
  j["error"]["message"] = what();
  j["error"]["path"] = path_;
  return j.dump();
}

// ---------------------------------------------------------------- config

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void config_error(const std::string& key, const std::string& msg) {
  throw PipelineError("config", "config", key + ": " + msg);
}

template <class T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) config_error(key, "expected an integer, got '" + v + "'");
  return out;
}

double parse_num(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    config_error(key, "expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  config_error(key, "expected true or false, got '" + v + "'");
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  if (v.empty()) return out;
  for (const auto& s : csv::split(v)) out.push_back(trim(s));
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& e : v) s += (s.empty() ? "" : ",") + e;
  return s;
}

struct Entry {
  const char* key;
  const char* doc;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

#define STR_ENTRY(k, field, doc)                                  \
  Entry {                                                         \
    k, doc, [](const Config& c) { return c.field; },              \
        [](Config& c, const std::string& v) { c.field = v; }      \
  }
#define INT_ENTRY(k, field, doc)                                                           \
  Entry {                                                                                  \
    k, doc, [](const Config& c) { return std::to_string(c.field); },                       \
        [](Config& c, const std::string& v) { c.field = parse_int<decltype(c.field)>(k, v); } \
  }
#define NUM_ENTRY(k, field, doc)                                          \
  Entry {                                                                 \
    k, doc, [](const Config& c) { return csv::fmt(c.field); },            \
        [](Config& c, const std::string& v) { c.field = parse_num(k, v); } \
  }
#define BOOL_ENTRY(k, field, doc)                                                  \
  Entry {                                                                          \
    k, doc, [](const Config& c) { return std::string(c.field ? "true" : "false"); }, \
        [](Config& c, const std::string& v) { c.field = parse_bool(k, v); }        \
  }
#define LIST_ENTRY(k, field, doc)                                         \
  Entry {                                                                 \
    k, doc, [](const Config& c) { return join(c.field); },                \
        [](Config& c, const std::string& v) { c.field = parse_list(v); }  \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> e{
      INT_ENTRY("seed", seed, "global seed; stage seeds are derived from it"),
      STR_ENTRY("paths.vectors", vectors, "GeoJSON with building polygons and road polylines"),
      STR_ENTRY("paths.images", images, "directory of RGB tiles named <cell_id>.png"),
      STR_ENTRY("paths.manifest", manifest, "grid manifest CSV"),
      STR_ENTRY("paths.clusters", clusters, "survey clusters CSV"),
      STR_ENTRY("paths.nightlight", nightlight, "nightlight raster PNG with .pgw; empty to disable"),
      STR_ENTRY("paths.output", output, "output root"),
      INT_ENTRY("rasterize.tile_px", tile_px, "tile side in pixels"),
      INT_ENTRY("rasterize.pad_px", pad_px, "zero padding around each tile"),
      STR_ENTRY("rasterize.building_mode", building_mode, "building label layer: fill or centroid"),
      NUM_ENTRY("rasterize.road_width_px", road_width_px, "road stroke width"),
      NUM_ENTRY("rasterize.centroid_radius_px", centroid_radius_px, "centroid disc radius"),
      INT_ENTRY("unet.depth", unet_depth, "encoder depth"),
      INT_ENTRY("unet.base_filters", unet_base_filters, "filters of the first block"),
      NUM_ENTRY("unet.dropout", unet_dropout, "dropout rate"),
      INT_ENTRY("train.epochs", train_epochs, "epochs per network"),
      NUM_ENTRY("train.learning_rate", train_learning_rate, "SGD learning rate"),
      NUM_ENTRY("train.momentum", train_momentum, "SGD momentum"),
      INT_ENTRY("train.batch_size", train_batch_size, "mini-batch size"),
      BOOL_ENTRY("train.augment", train_augment, "add the three 90 degree rotations"),
      INT_ENTRY("train.ensemble_seeds", ensemble_seeds, "networks per target"),
      INT_ENTRY("judge.rounds", judge_rounds, "filter rounds"),
      NUM_ENTRY("judge.alpha_max", judge_alpha_max, "validity index cutoff"),
      INT_ENTRY("judge.epochs", judge_epochs, "epochs of the filtering networks"),
      BOOL_ENTRY("predict.use_judge", predict_use_judge, "predict buildings with judge models"),
      Entry{"count.thresholds", "ascending thresholds on the 0-255 scale",
            [](const Config& c) {
              std::vector<std::string> s;
              for (double t : c.count_thresholds) s.push_back(csv::fmt(t));
              return join(s);
            },
            [](Config& c, const std::string& v) {
              c.count_thresholds.clear();
              for (const auto& s : parse_list(v)) c.count_thresholds.push_back(parse_num("count.thresholds", s));
            }},
      INT_ENTRY("count.min_blob_area", count_min_blob_area, "smallest counted blob in pixels"),
      STR_ENTRY("count.match", count_match, "true-positive matching: strict or loose"),
      Entry{"count.max_fp_rate", "optional FP cap for threshold selection",
            [](const Config& c) { return csv::fmt(c.count_max_fp_rate); },
            [](Config& c, const std::string& v) {
              c.count_max_fp_rate = v.empty() ? std::nullopt
                                              : std::optional<double>(parse_num("count.max_fp_rate", v));
            }},
      NUM_ENTRY("count.road_threshold", count_road_threshold, "road mask threshold"),
      NUM_ENTRY("features.radius_km", features_radius_km, "cell selection radius"),
      INT_ENTRY("features.min_cells", features_min_cells, "fewest cells per cluster"),
      LIST_ENTRY("benchmark.labels", benchmark_labels, "wealth, wealthpooled"),
      LIST_ENTRY("benchmark.feature_sets", benchmark_feature_sets,
                 "buildings, roads, buildings_roads, nightlight, all"),
      LIST_ENTRY("benchmark.models", benchmark_models, "ridge, rtree, rtree_boosted, rtree_bagged"),
  };
  return e;
}

std::string group_of(const std::string& key) {
  const auto dot = key.find('.');
  return dot == std::string::npos ? key : key.substr(0, dot);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_schema() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : entries()) out.emplace_back(e.key, e.doc);
  return out;
}

std::string serialize(const Config& c) {
  std::string s = "# satinfra pipeline config\n";
  std::string group;
  for (const auto& e : entries()) {
    const std::string g = group_of(e.key);
    if (g != group) {
      s += '\n';
      group = g;
    }
    const std::string v = e.get(c);
    s += std::string(e.key) + (v.empty() ? " =" : " = " + v) + '\n';
  }
  return s;
}

Config parse_config(const std::string& text) {
  Config c;
  std::map<std::string, const Entry*> by_key;
  for (const auto& e : entries()) by_key[e.key] = &e;
  std::set<std::string> seen;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      config_error("line " + std::to_string(line_no), "expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) config_error(key, "unknown key");
    if (!seen.insert(key).second) config_error(key, "repeated key");
    it->second->set(c, value);
  }
  c.validate();
  return c;
}

Config load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("missing_input", "config", "cannot read config", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Config c = parse_config(ss.str());
  c.base_dir = path.parent_path();
  return c;
}

void Config::validate() const {
  auto need = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) config_error(key, msg);
  };
  need(!vectors.empty(), "paths.vectors", "must not be empty");
  need(!images.empty(), "paths.images", "must not be empty");
  need(!manifest.empty(), "paths.manifest", "must not be empty");
  need(!clusters.empty(), "paths.clusters", "must not be empty");
  need(!output.empty(), "paths.output", "must not be empty");
  need(tile_px >= 8, "rasterize.tile_px", "must be >= 8");
  need(pad_px >= 0, "rasterize.pad_px", "must be >= 0");
  need(building_mode == "fill" || building_mode == "centroid", "rasterize.building_mode",
       "must be fill or centroid");
  need(road_width_px > 0, "rasterize.road_width_px", "must be > 0");
  need(centroid_radius_px > 0, "rasterize.centroid_radius_px", "must be > 0");
  need(unet_depth >= 1 && unet_depth <= 8, "unet.depth", "must be in 1..8");
  need(unet_base_filters >= 1, "unet.base_filters", "must be >= 1");
  need((tile_px + 2 * pad_px) % (1 << unet_depth) == 0, "unet.depth",
       "tile_px + 2 * pad_px must be divisible by 2^depth");
  need(unet_dropout >= 0 && unet_dropout < 1, "unet.dropout", "must be in [0, 1)");
  need(train_epochs >= 1, "train.epochs", "must be >= 1");
  need(train_learning_rate > 0, "train.learning_rate", "must be > 0");
  need(train_momentum >= 0 && train_momentum < 1, "train.momentum", "must be in [0, 1)");
  need(train_batch_size >= 1, "train.batch_size", "must be >= 1");
  need(ensemble_seeds >= 1, "train.ensemble_seeds", "must be >= 1");
  need(judge_rounds >= 1, "judge.rounds", "must be >= 1");
  need(judge_alpha_max > 0, "judge.alpha_max", "must be > 0");
  need(judge_epochs >= 1, "judge.epochs", "must be >= 1");
  need(!count_thresholds.empty(), "count.thresholds", "must not be empty");
  for (std::size_t i = 0; i < count_thresholds.size(); ++i) {
    need(count_thresholds[i] >= 0 && count_thresholds[i] <= 255, "count.thresholds",
         "values must lie in [0, 255]");
    need(i == 0 || count_thresholds[i] > count_thresholds[i - 1], "count.thresholds",
         "must be strictly ascending");
  }
  need(count_min_blob_area >= 1, "count.min_blob_area", "must be >= 1");
  need(count_match == "strict" || count_match == "loose", "count.match", "must be strict or loose");
  need(!count_max_fp_rate || (*count_max_fp_rate >= 0 && *count_max_fp_rate <= 100),
       "count.max_fp_rate", "must lie in [0, 100]");
  need(count_road_threshold >= 0 && count_road_threshold <= 255, "count.road_threshold",
       "must lie in [0, 255]");
  need(features_radius_km > 0, "features.radius_km", "must be > 0");
  need(features_min_cells >= 1, "features.min_cells", "must be >= 1");
  need(!benchmark_labels.empty(), "benchmark.labels", "must not be empty");
  need(!benchmark_feature_sets.empty(), "benchmark.feature_sets", "must not be empty");
  need(!benchmark_models.empty(), "benchmark.models", "must not be empty");
  try {
    for (const auto& l : benchmark_labels) features::parse_label(l);
  } catch (const std::invalid_argument& e) {
    config_error("benchmark.labels", e.what());
  }
  for (const auto& s : benchmark_feature_sets) {
    features::FeatureSet fs{};
    try {
      fs = features::parse_feature_set(s);
    } catch (const std::invalid_argument& e) {
      config_error("benchmark.feature_sets", e.what());
    }
    const auto vars = features::variables_of(fs);
    need(!nightlight.empty() ||
             std::find(vars.begin(), vars.end(), features::Variable::nightlight) == vars.end(),
         "benchmark.feature_sets", "'" + s + "' needs paths.nightlight");
  }
  try {
    for (const auto& m : benchmark_models) bench::parse_model_kind(m);
  } catch (const std::invalid_argument& e) {
    config_error("benchmark.models", e.what());
  }
}

fs::path Config::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

fs::path Config::out(const std::string& rel) const {
  return rel.empty() ? resolve(output) : resolve(output) / rel;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const Config& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize(c))));
  return buf;
}

std::uint64_t stage_seed(std::uint64_t global_seed, const std::string& stage) {
  return nn::mix64(global_seed ^ fnv1a64(stage));
}

std::string preamble(const Config& c) {
  return "# config=" + config_hash(c) + " seed=" + std::to_string(c.seed);
}

// ---------------------------------------------------------------- helpers

namespace {

std::uint64_t derive(std::uint64_t seed, const std::string& label, int k) {
  return nn::mix64(seed ^ fnv1a64(label) ^ nn::mix64(static_cast<std::uint64_t>(k) + 1));
}

raster::PngText stamp(const Config& c) {
  return {{"config", config_hash(c)}, {"seed", std::to_string(c.seed)}};
}

void require_file(const std::string& stage, const fs::path& p) {
  if (!fs::is_regular_file(p)) throw PipelineError("missing_input", stage, "missing input file", p.string());
}

void require_dir(const std::string& stage, const fs::path& p) {
  if (!fs::is_directory(p)) throw PipelineError("missing_input", stage, "missing input directory", p.string());
}

// Outputs go to <out>/.staging-<stage>/ and are moved into place on commit.
class Staging {
 public:
  Staging(const Config& c, const std::string& stage, std::vector<std::string> targets)
      : root_(c.out()), dir_(c.out(".staging-" + stage)), targets_(std::move(targets)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;
  ~Staging() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(dir_, ec);
    }
  }
  // Staged path for `rel`, with parent directories created.
  fs::path path(const std::string& rel) const {
    const fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    return p;
  }
  void commit() {
    for (const auto& t : targets_) {
      fs::remove_all(root_ / t);
      if (fs::exists(dir_ / t)) fs::rename(dir_ / t, root_ / t);
    }
    fs::remove_all(dir_);
    committed_ = true;
  }

 private:
  fs::path root_, dir_;
  std::vector<std::string> targets_;
  bool committed_ = false;
};

template <class F>
void guarded(const std::string& stage, F&& body) {
  try {
    body();
  } catch (const PipelineError&) {
    throw;
  } catch (const raster::InvalidGeometry& e) {
    throw PipelineError("invalid_input", stage, e.what());
  } catch (const raster::IoError& e) {
    const std::string msg = e.what();
    throw PipelineError(msg.find("schema mismatch") != std::string::npos ? "schema" : "invalid_input",
                        stage, msg);
  } catch (const std::exception& e) {
    throw PipelineError("runtime", stage, e.what());
  }
}

// Runs body(i) for i in [0, n) across threads, rethrowing the first error.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<raster::GridCell> load_grid(const Config& c, const std::string& stage) {
  const fs::path p = c.out("grid/manifest.csv");
  require_file(stage, p);
  auto cells = raster::read_manifest(p);
  if (cells.empty()) throw PipelineError("invalid_input", stage, "manifest has no cells", p.string());
  return cells;
}

raster::Image load_tile_image(const Config& c, const std::string& stage, const std::string& id) {
  const fs::path p = c.resolve(c.images) / (id + ".png");
  require_file(stage, p);
  raster::Image img = raster::read_png(p);
  if (img.channels != 3 || img.width != c.tile_px || img.height != c.tile_px)
    throw PipelineError("invalid_input", stage,
                        "tile image must be RGB " + std::to_string(c.tile_px) + "x" +
                            std::to_string(c.tile_px),
                        p.string());
  return img;
}

raster::MaskRaster load_tile_mask(const std::string& stage, const fs::path& p, int size) {
  require_file(stage, p);
  require_file(stage, raster::world_file_for(p));
  raster::MaskRaster m = raster::load_mask(p);
  if (m.width != size || m.height != size)
    throw PipelineError("invalid_input", stage, "mask size mismatch", p.string());
  return m;
}

nn::UnetConfig unet_config(const Config& c, std::uint64_t seed) {
  nn::UnetConfig u;
  u.input_size = static_cast<std::uint32_t>(c.tile_px + 2 * c.pad_px);
  u.base_filters = c.unet_base_filters;
  u.depth = c.unet_depth;
  u.dropout_rate = c.unet_dropout;
  u.seed = seed;
  return u;
}

nn::TrainOptions train_options(const Config& c, int epochs, std::uint64_t seed) {
  nn::TrainOptions o;
  o.epochs = epochs;
  o.learning_rate = c.train_learning_rate;
  o.momentum = c.train_momentum;
  o.batch_size = c.train_batch_size;
  o.seed = seed;
  return o;
}

struct TileData {
  std::string id;
  raster::Image image;
  raster::MaskRaster mask;
};

std::vector<nn::Sample> make_samples(const Config& c, const std::vector<TileData>& tiles) {
  std::vector<nn::Sample> out;
  for (const auto& t : tiles) {
    if (c.train_augment) {
      for (const auto& p : raster::augment(t.image, t.mask))
        out.push_back(data::make_sample(p.image, p.mask, c.pad_px));
    } else {
      out.push_back(data::make_sample(t.image, t.mask, c.pad_px));
    }
  }
  return out;
}

std::vector<TileData> load_tiles(const Config& c, const std::string& stage,
                                 const std::vector<raster::GridCell>& cells, const std::string& target) {
  std::vector<TileData> tiles(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    tiles[i].id = cells[i].cell_id;
    tiles[i].image = load_tile_image(c, stage, cells[i].cell_id);
    tiles[i].mask =
        load_tile_mask(stage, c.out("masks/" + target + "/" + cells[i].cell_id + ".png"), c.tile_px);
  });
  return tiles;
}

void write_meta(const Config& c, const fs::path& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  if (!out) throw raster::IoError("cannot write " + path.string());
  out << preamble(c) << '\n';
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  if (!out) throw raster::IoError("write failed: " + path.string());
}

// Trains one network and writes checkpoint, meta sidecar and log.
void train_and_save(const Config& c, const Staging& st, const std::string& dir,
                    const std::string& target, int k, std::uint64_t stage_s,
                    const std::vector<nn::Sample>& samples, int epochs) {
  const nn::UnetConfig u = unet_config(c, derive(stage_s, target + "/net", k));
  const nn::TrainOptions o = train_options(c, epochs, derive(stage_s, target + "/shuffle", k));
  nn::Network net(u);
  const nn::TrainingLog log = nn::train(net, samples, o);
  const std::string name = target + "_s" + std::to_string(k);
  nn::save_checkpoint(net, st.path(dir + "/models/" + name + ".bin"));
  write_meta(c, st.path(dir + "/models/" + name + ".meta"),
             {{"target", target},
              {"ensemble_index", std::to_string(k)},
              {"network_seed", std::to_string(u.seed)},
              {"shuffle_seed", std::to_string(o.seed)},
              {"input_size", std::to_string(u.input_size)},
              {"depth", std::to_string(u.depth)},
              {"base_filters", std::to_string(u.base_filters)},
              {"dropout", csv::fmt(u.dropout_rate)},
              {"epochs", std::to_string(o.epochs)},
              {"learning_rate", csv::fmt(o.learning_rate)},
              {"momentum", csv::fmt(o.momentum)},
              {"batch_size", std::to_string(o.batch_size)},
              {"samples", std::to_string(samples.size())},
              {"final_loss", csv::fmt(log.back().loss)},
              {"final_jaccard", csv::fmt(log.back().jaccard)}});
  nn::write_training_log(log, st.path(dir + "/logs/" + name + ".csv"), {preamble(c).substr(2)});
}

std::vector<fs::path> model_paths(const Config& c, const std::string& stage, const std::string& dir,
                                  const std::string& target) {
  std::vector<fs::path> out;
  for (int k = 0; k < c.ensemble_seeds; ++k) {
    const fs::path p = c.out(dir + "/models/" + target + "_s" + std::to_string(k) + ".bin");
    require_file(stage, p);
    out.push_back(p);
  }
  return out;
}

const char* kMetricsHeader = "threshold,predicted,truth,tp_count,tp_count_loose,tp_rate,pred_to_mask,fp_rate";

void write_metrics_row(csv::Writer& w, const post::CountMetrics& m) {
  w.row(csv::fmt(m.threshold), m.predicted, m.truth, m.tp_count, m.tp_count_loose, csv::fmt(m.tp_rate),
        csv::fmt(m.pred_to_mask), csv::fmt(m.fp_rate));
}

post::CountMetrics with_rates(post::CountMetrics m) {
  m.tp_rate = m.truth ? std::optional<double>(100.0 * m.tp_count / m.truth) : std::nullopt;
  m.pred_to_mask = m.truth ? std::optional<double>(100.0 * m.predicted / m.truth) : std::nullopt;
  m.fp_rate = m.predicted ? std::optional<double>(100.0 * (m.predicted - m.tp_count) / m.predicted)
                          : std::nullopt;
  return m;
}

// Building polygons whose centroid lies in the half-open cell box.
raster::VectorLayer cell_truth(const raster::VectorLayer& all, const geo::GeoBox& b) {
  raster::VectorLayer out;
  for (const auto& f : all.features) {
    if (f.kind != raster::GeometryKind::polygon || f.class_tag != "building") continue;
    const geo::Point p = raster::polygon_centroid(f);
    if (p.x >= b.min_lon && p.x < b.max_lon && p.y >= b.min_lat && p.y < b.max_lat) out.features.push_back(f);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- stages

void run_rasterize(const Config& c) {
  const std::string stage = "rasterize";
  guarded(stage, [&] {
    const fs::path manifest = c.resolve(c.manifest), vectors = c.resolve(c.vectors);
    require_file(stage, manifest);
    require_file(stage, vectors);
    const auto cells = raster::read_manifest(manifest);
    if (cells.empty()) throw PipelineError("invalid_input", stage, "manifest has no cells", manifest.string());
    std::set<std::string> ids;
    for (const auto& cell : cells)
      if (!ids.insert(cell.cell_id).second)
        throw PipelineError("invalid_input", stage, "duplicate cell_id " + cell.cell_id, manifest.string());
    const raster::VectorLayer layer = raster::load_geojson(vectors);

    raster::RasterOptions bopt;
    bopt.mode = c.building_mode == "centroid" ? raster::RasterMode::centroid : raster::RasterMode::fill;
    bopt.centroid_radius_px = c.centroid_radius_px;
    bopt.class_filter = "building";
    raster::RasterOptions ropt;
    ropt.mode = raster::RasterMode::road;
    ropt.road_width_px = c.road_width_px;
    ropt.class_filter = "road";

    std::vector<raster::MaskRaster> bmask(cells.size()), rmask(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
      const raster::MaskRaster g = raster::tile_geometry(cells[i].bounds, c.tile_px);
      bmask[i] = raster::rasterize_layer(layer, g, bopt);
      rmask[i] = raster::rasterize_layer(layer, g, ropt);
    });

    Staging st(c, stage, {"grid", "masks"});
    const std::string pre = preamble(c);
    raster::write_manifest(st.path("grid/manifest.csv"), cells, pre);
    const auto text = stamp(c);
    {
      csv::Writer idx(st.path("masks/index.csv"), pre, "cell_id,building_pixels,road_pixels");
      for (std::size_t i = 0; i < cells.size(); ++i) {
        raster::save_mask(st.path("masks/buildings/" + cells[i].cell_id + ".png"), bmask[i], text);
        raster::save_mask(st.path("masks/roads/" + cells[i].cell_id + ".png"), rmask[i], text);
        auto on = [](const raster::MaskRaster& m) {
          return std::count_if(m.values.begin(), m.values.end(), [](float v) { return v > 127.0f; });
        };
        idx.row(cells[i].cell_id, on(bmask[i]), on(rmask[i]));
      }
    }
    st.commit();
  });
}

void run_train(const Config& c) {
  const std::string stage = "train";
  guarded(stage, [&] {
    const auto cells = load_grid(c, stage);
    require_dir(stage, c.resolve(c.images));
    std::map<std::string, std::vector<nn::Sample>> samples;
    for (const std::string target : {"buildings", "roads"})
      samples[target] = make_samples(c, load_tiles(c, stage, cells, target));

    Staging st(c, stage, {"train"});
    const std::uint64_t ss = stage_seed(c.seed, stage);
    for (const std::string target : {"buildings", "roads"})
      for (int k = 0; k < c.ensemble_seeds; ++k)
        train_and_save(c, st, "train", target, k, ss, samples[target], c.train_epochs);
    st.commit();
  });
}

void run_judge(const Config& c) {
  const std::string stage = "judge";
  guarded(stage, [&] {
    const auto cells = load_grid(c, stage);
    require_dir(stage, c.resolve(c.images));
    const auto tiles = load_tiles(c, stage, cells, "buildings");
    std::vector<judge::LabeledSample> labeled;
    for (const auto& t : tiles) labeled.push_back({t.id, data::make_sample(t.image, t.mask, c.pad_px)});

    const std::uint64_t ss = stage_seed(c.seed, stage);
    judge::IterativeOptions io;
    io.rounds = c.judge_rounds;
    io.network = unet_config(c, derive(ss, "filter/net", 0));
    io.training = train_options(c, c.judge_epochs, derive(ss, "filter/shuffle", 0));
    io.filter.alpha_max = c.judge_alpha_max;
    const judge::IterativeResult res = judge::iterative_filter_train(labeled, io);

    std::set<std::string> kept(res.final_kept.begin(), res.final_kept.end());
    std::vector<TileData> kept_tiles;
    for (const auto& t : tiles)
      if (kept.count(t.id)) kept_tiles.push_back(t);
    const auto samples = make_samples(c, kept_tiles);

    Staging st(c, stage, {"judge"});
    const std::string pre = preamble(c);
    for (std::size_t r = 0; r < res.history.size(); ++r)
      judge::write_filter_report(res.history[r], st.path("judge/round" + std::to_string(r + 1) + ".csv"), pre);
    {
      csv::Writer w(st.path("judge/kept.csv"), pre, "cell_id,kept");
      for (const auto& t : tiles) w.row(t.id, kept.count(t.id) ? 1 : 0);
    }
    for (std::size_t r = 0; r < res.logs.size(); ++r)
      nn::write_training_log(res.logs[r], st.path("judge/logs/filter_run" + std::to_string(r + 1) + ".csv"),
                             {pre.substr(2)});
    for (int k = 0; k < c.ensemble_seeds; ++k)
      train_and_save(c, st, "judge", "buildings", k, ss, samples, c.train_epochs);
    st.commit();
  });
}

void run_predict(const Config& c) {
  const std::string stage = "predict";
  guarded(stage, [&] {
    const auto cells = load_grid(c, stage);
    require_dir(stage, c.resolve(c.images));
    std::map<std::string, std::vector<fs::path>> models;
    models["buildings"] = model_paths(c, stage, c.predict_use_judge ? "judge" : "train", "buildings");
    models["roads"] = model_paths(c, stage, "train", "roads");
    std::vector<raster::Image> images(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) { images[i] = load_tile_image(c, stage, cells[i].cell_id); });
    std::vector<nn::Tensor> tensors;
    for (const auto& img : images) tensors.push_back(data::image_to_tensor(raster::pad_image(img, c.pad_px)));
    std::vector<const nn::Tensor*> ptrs;
    for (const auto& t : tensors) ptrs.push_back(&t);

    std::map<std::string, std::vector<raster::MaskRaster>> out;
    for (const auto& [target, paths] : models) {
      std::vector<std::vector<raster::MaskRaster>> per_tile(cells.size());
      for (const auto& p : paths) {
        const nn::Network net = nn::load_checkpoint(p);
        if (net.config().input_size != static_cast<std::uint32_t>(c.tile_px + 2 * c.pad_px))
          throw PipelineError("invalid_input", stage, "model input size does not match the config", p.string());
        const auto probs = nn::predict(net, ptrs);
        for (std::size_t i = 0; i < cells.size(); ++i) {
          const raster::MaskRaster g = raster::pad_mask(raster::tile_geometry(cells[i].bounds, c.tile_px), c.pad_px);
          per_tile[i].push_back(raster::crop_mask(data::probability_to_mask(probs[i], g), c.pad_px, c.pad_px,
                                                  c.tile_px, c.tile_px));
        }
      }
      for (auto& masks : per_tile) out[target].push_back(post::ensemble_combine(masks));
    }

    Staging st(c, stage, {"predict"});
    const auto text = stamp(c);
    for (const auto& [target, masks] : out)
      for (std::size_t i = 0; i < cells.size(); ++i)
        raster::save_mask(st.path("predict/" + target + "/" + cells[i].cell_id + ".png"), masks[i], text);
    st.commit();
  });
}

void run_count(const Config& c) {
  const std::string stage = "count";
  guarded(stage, [&] {
    const auto cells = load_grid(c, stage);
    const fs::path vectors = c.resolve(c.vectors);
    require_file(stage, vectors);
    std::optional<raster::MaskRaster> nl;
    if (!c.nightlight.empty()) {
      const fs::path p = c.resolve(c.nightlight);
      require_file(stage, p);
      require_file(stage, raster::world_file_for(p));
      nl = raster::load_mask(p);
    }
    std::vector<raster::MaskRaster> bpred(cells.size()), rpred(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
      bpred[i] = load_tile_mask(stage, c.out("predict/buildings/" + cells[i].cell_id + ".png"), c.tile_px);
      rpred[i] = load_tile_mask(stage, c.out("predict/roads/" + cells[i].cell_id + ".png"), c.tile_px);
    });
    const raster::VectorLayer layer = raster::load_geojson(vectors);

    post::SweepOptions so;
    so.min_blob_area = c.count_min_blob_area;
    so.mode = c.count_match == "loose" ? post::MatchMode::loose : post::MatchMode::strict;
    std::vector<std::vector<post::CountMetrics>> sweeps(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
      sweeps[i] = post::threshold_sweep(bpred[i], cell_truth(layer, cells[i].bounds), c.count_thresholds, so);
    });

    std::vector<post::CountMetrics> pooled(c.count_thresholds.size());
    for (std::size_t k = 0; k < pooled.size(); ++k) {
      pooled[k].threshold = c.count_thresholds[k];
      for (const auto& s : sweeps) {
        pooled[k].predicted += s[k].predicted;
        pooled[k].truth += s[k].truth;
        pooled[k].tp_count += s[k].tp_count;
        pooled[k].tp_count_loose += s[k].tp_count_loose;
      }
      pooled[k] = with_rates(pooled[k]);
    }
    post::SelectionRule rule;
    rule.max_fp_rate = c.count_max_fp_rate;
    const std::size_t chosen = post::select_threshold(pooled, rule);
    const double t = c.count_thresholds[chosen];

    std::vector<features::CellCounts> counts(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
      auto& cc = counts[i];
      cc.cell_id = cells[i].cell_id;
      cc.buildings = static_cast<double>(
          post::connected_components(post::threshold_mask(bpred[i], t), c.count_min_blob_area).size());
      const post::BinaryMask roads = post::threshold_mask(rpred[i], c.count_road_threshold);
      cc.road_m = post::road_length(post::skeletonize(roads), rpred[i].meters_per_pixel);
      cc.road_components = static_cast<double>(post::component_count(roads));
      if (nl) {
        const auto s = features::nightlight_stat(cells[i].bounds, *nl);
        if (s.overlap) cc.nightlight = s.value;
      }
    });

    Staging st(c, stage, {"count"});
    const std::string pre = preamble(c);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      csv::Writer w(st.path("count/metrics/" + cells[i].cell_id + ".csv"), pre, kMetricsHeader);
      for (const auto& m : sweeps[i]) write_metrics_row(w, m);
    }
    {
      csv::Writer w(st.path("count/sweep.csv"), pre, std::string(kMetricsHeader) + ",selected");
      for (std::size_t k = 0; k < pooled.size(); ++k) {
        const auto& m = pooled[k];
        w.row(csv::fmt(m.threshold), m.predicted, m.truth, m.tp_count, m.tp_count_loose, csv::fmt(m.tp_rate),
              csv::fmt(m.pred_to_mask), csv::fmt(m.fp_rate), k == chosen ? 1 : 0);
      }
    }
    features::write_counts(st.path("count/counts.csv"), counts, pre);
    st.commit();
  });
}

void run_features(const Config& c) {
  const std::string stage = "features";
  guarded(stage, [&] {
    const fs::path clusters = c.resolve(c.clusters), counts_path = c.out("count/counts.csv");
    require_file(stage, clusters);
    require_file(stage, counts_path);
    const auto cells = load_grid(c, stage);
    const auto sites = features::read_clusters(clusters);
    const auto counts = features::read_counts(counts_path);
    const auto fb = features::build_features(sites, cells, counts, c.features_radius_km, c.features_min_cells);
    if (fb.rows.empty()) throw PipelineError("invalid_input", stage, "no cluster has enough cells", clusters.string());

    Staging st(c, stage, {"features"});
    const std::string pre = preamble(c);
    features::write_features(st.path("features/features.csv"), fb.rows, pre);
    {
      csv::Writer w(st.path("features/dropped.csv"), pre, "cluster_id,reason");
      for (const auto& d : fb.dropped) w.row(d.cluster_id, d.reason);
    }
    st.commit();
  });
}

void run_benchmark(const Config& c) {
  const std::string stage = "benchmark";
  guarded(stage, [&] {
    const fs::path fpath = c.out("features/features.csv");
    require_file(stage, fpath);
    const auto rows = features::read_features(fpath);
    std::vector<features::FeatureSet> sets;
    for (const auto& s : c.benchmark_feature_sets) sets.push_back(features::parse_feature_set(s));
    std::vector<bench::ModelSpec> specs;
    for (const auto& spec : bench::default_specs(stage_seed(c.seed, stage)))
      if (std::find(c.benchmark_models.begin(), c.benchmark_models.end(), spec.name()) != c.benchmark_models.end())
        specs.push_back(spec);

    std::map<std::string, std::vector<bench::CvResult>> results;
    for (const auto& l : c.benchmark_labels) {
      try {
        results[l] = bench::run_benchmark(rows, sets, features::parse_label(l), specs);
      } catch (const std::invalid_argument& e) {
        throw PipelineError("invalid_input", stage, std::string(l) + ": " + e.what(), fpath.string());
      }
    }

    Staging st(c, stage, {"benchmark"});
    const std::string pre = preamble(c);
    bench::write_specs(st.path("benchmark/models.csv"), specs, pre);
    for (const auto& [label, res] : results) {
      const std::string dir = "benchmark/" + label + "/";
      bench::write_pooled(st.path(dir + "r2_pooled.csv"), res, pre);
      bench::write_per_country(st.path(dir + "r2_by_country.csv"), res, pre);
      bench::write_audit(st.path(dir + "folds.csv"), res, pre);
      std::string header = "model";
      for (const auto& s : c.benchmark_feature_sets) header += "," + s;
      csv::Writer w(st.path(dir + "table.csv"), pre, header);
      for (const auto& spec : specs) {
        std::string line = spec.name();
        for (const auto& s : c.benchmark_feature_sets)
          for (const auto& r : res)
            if (r.model == spec.name() && r.feature_set == s) line += "," + csv::fmt(r.r2_pooled);
        w.stream() << line << '\n';
      }
    }
    st.commit();
  });
}

void run_stage(const std::string& name, const Config& c) {
  if (name == "rasterize") return run_rasterize(c);
  if (name == "train") return run_train(c);
  if (name == "judge") return run_judge(c);
  if (name == "predict") return run_predict(c);
  if (name == "count") return run_count(c);
  if (name == "features") return run_features(c);
  if (name == "benchmark") return run_benchmark(c);
  throw PipelineError("config", name, "unknown stage '" + name + "'");
}

void run_all(const Config& c) {
  for (const auto& s : stage_names()) {
    if (s == "judge" && !c.predict_use_judge) continue;
    run_stage(s, c);
  }
}

}  // namespace satinfra::pipeline
