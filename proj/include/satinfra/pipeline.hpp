#pragma once

// Batch pipeline: a key/value config file, deterministic per-stage seeds and
// one function per stage. Every stage validates its inputs before writing,
// assembles its outputs in a staging directory and then moves them into
// place, so a failed stage leaves earlier outputs untouched.
//
// Output layout under `output`:
//   grid/manifest.csv
//   masks/{buildings,roads}/<cell>.png (+ .pgw), masks/index.csv
//   train/models/<target>_s<k>.bin (+ .meta), train/logs/<target>_s<k>.csv
//   judge/round<r>.csv, judge/kept.csv, judge/logs/, judge/models/
//   predict/{buildings,roads}/<cell>.png (+ .pgw)
//   count/metrics/<cell>.csv, count/sweep.csv, count/counts.csv
//   features/features.csv, features/dropped.csv
//   benchmark/<label>/{r2_pooled,r2_by_country,folds,table}.csv, benchmark/models.csv

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace satinfra::pipeline {

// Machine-readable failure. `kind` is one of: config, missing_input,
// invalid_input, schema, runtime.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string kind, std::string stage, const std::string& message,
                std::string path = "")
      : std::runtime_error(message), kind_(std::move(kind)), stage_(std::move(stage)),
        path_(std::move(path)) {}
  const std::string& kind() const { return kind_; }
  const std::string& stage() const { return stage_; }
  const std::string& path() const { return path_; }
  // {"error": {"kind", "stage", "message", "path"}}
  std::string to_json() const;

 private:
  std::string kind_, stage_, path_;
};

struct Config {
  // Relative paths resolve against base_dir (the config file's directory).
  // base_dir itself is not serialized.
  std::filesystem::path base_dir;

  std::uint64_t seed = 0;

  std::string vectors = "vectors.geojson";
  std::string images = "images";
  std::string manifest = "manifest.csv";
  std::string clusters = "clusters.csv";
  std::string nightlight = "nightlight.png";  // empty: no nightlight variable
  std::string output = "out";

  int tile_px = 32;
  int pad_px = 0;
  std::string building_mode = "fill";  // fill | centroid
  double road_width_px = 3.0;
  double centroid_radius_px = 3.0;

  std::uint32_t unet_depth = 2;
  std::uint32_t unet_base_filters = 4;
  double unet_dropout = 0.1;
  int train_epochs = 20;
  double train_learning_rate = 0.1;
  double train_momentum = 0.9;
  std::size_t train_batch_size = 4;
  bool train_augment = true;
  int ensemble_seeds = 3;

  int judge_rounds = 2;
  double judge_alpha_max = 1.5;
  int judge_epochs = 10;
  bool predict_use_judge = true;

  std::vector<double> count_thresholds{5, 10, 15, 25};
  std::size_t count_min_blob_area = 4;
  std::string count_match = "strict";  // strict | loose
  std::optional<double> count_max_fp_rate;
  double count_road_threshold = 127.0;

  double features_radius_km = 5.0;
  std::size_t features_min_cells = 1;

  std::vector<std::string> benchmark_labels{"wealth", "wealthpooled"};
  std::vector<std::string> benchmark_feature_sets{"buildings", "roads", "nightlight",
                                                  "buildings_roads", "all"};
  std::vector<std::string> benchmark_models{"ridge", "rtree", "rtree_boosted", "rtree_bagged"};

  // Throws PipelineError(config) naming the offending key.
  void validate() const;
  std::filesystem::path resolve(const std::string& p) const;
  std::filesystem::path out(const std::string& rel = "") const;
};

// Canonical text form: fixed key order, one `key = value` per line.
std::string serialize(const Config& c);
// Accepts `#` comments and blank lines; rejects unknown and repeated keys.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);
// Key names and one-line descriptions in serialization order.
std::vector<std::pair<std::string, std::string>> config_schema();

std::uint64_t fnv1a64(const std::string& s);
// 16 hex digits of the FNV-1a hash of the canonical form.
std::string config_hash(const Config& c);
// Seed for a named stage, derived from the global seed.
std::uint64_t stage_seed(std::uint64_t global_seed, const std::string& stage);
// `# config=<hash> seed=<seed>`
std::string preamble(const Config& c);

void run_rasterize(const Config& c);
void run_train(const Config& c);
void run_judge(const Config& c);
void run_predict(const Config& c);
void run_count(const Config& c);
void run_features(const Config& c);
void run_benchmark(const Config& c);

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"rasterize", "train", "judge",    "predict",
                                              "count",     "features", "benchmark"};
  return names;
}
void run_stage(const std::string& name, const Config& c);
void run_all(const Config& c);

struct FixtureOptions {
  int countries = 4;
  int cells_per_side = 4;  // cells per country = cells_per_side^2
  int tile_px = 32;
  int clusters_per_country = 12;
  double corrupt_fraction = 0.3;
  std::uint64_t seed = 1;
};

// Writes a synthetic corpus (vectors, images, manifest, clusters,
// nightlight raster) and a matching config.ini into `dir`.
void make_fixture(const std::filesystem::path& dir, const FixtureOptions& opts = {});

}  // namespace satinfra::pipeline
