#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "satinfra/raster.hpp"
#include "satinfra/train.hpp"
#include "satinfra/unet.hpp"

namespace satinfra::judge {

inline constexpr double kDefaultAlphaMax = 1.5;

// Mass ratio sum(predicted) / sum(reference). Both inputs must use the same
// intensity scale. Empty optional when the reference has no mass.
std::optional<double> validity_index(std::span<const float> predicted,
                                     std::span<const float> reference);
std::optional<double> validity_index(std::span<const double> predicted,
                                     std::span<const double> reference);
std::optional<double> validity_index(const raster::MaskRaster& predicted,
                                     const raster::MaskRaster& reference);

struct MaskPair {
  std::string id;
  raster::MaskRaster predicted;
  raster::MaskRaster reference;
};

struct FilterOptions {
  double alpha_max = kDefaultAlphaMax;
  bool drop_undefined = true;
};

struct PairScore {
  std::string id;
  std::optional<double> alpha;
  bool kept = true;
};

struct FilterReport {
  double alpha_max = kDefaultAlphaMax;
  std::vector<PairScore> entries;  // input order
  std::vector<std::size_t> kept;     // indices into entries, ascending
  std::vector<std::size_t> dropped;  // indices into entries, ascending
  std::size_t undefined = 0;
  double drop_fraction() const {
    return entries.empty() ? 0.0 : static_cast<double>(dropped.size()) / entries.size();
  }
};

// Drops exactly the entries with alpha > alpha_max, plus undefined ones when
// drop_undefined is set.
FilterReport filter_scores(const std::vector<std::string>& ids,
                           const std::vector<std::optional<double>>& alphas,
                           const FilterOptions& opts = {});
// Throws std::invalid_argument on an empty list and nn::ShapeError when a
// pair's masks differ in size.
FilterReport filter_dataset(std::span<const MaskPair> pairs, const FilterOptions& opts = {});

// Cutoff that drops round(target * n) entries, counting undefined entries as
// dropped. The cutoff sits midway between neighboring defined scores.
double calibrate_alpha_max(const std::vector<std::optional<double>>& alphas,
                           double target_drop_fraction);

// CSV `cell_id,alpha,kept` followed by a `# summary` line.
void write_filter_report(const FilterReport& report, const std::filesystem::path& path,
                         const std::string& preamble = "");

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledSample {
  std::string id;
  nn::Sample sample;
};

struct IterativeOptions {
  int rounds = 2;
  nn::UnetConfig network;
  nn::TrainOptions training;
  FilterOptions filter;
  std::size_t predict_batch = 8;
};

struct IterativeResult {
  nn::Network network;
  std::vector<FilterReport> history;     // one per round, entries = samples scored that round
  std::vector<nn::TrainingLog> logs;     // one per training run
  std::vector<std::string> final_kept;   // ids of the final training set
};

// Each round trains a fresh network (options.network, same seed) on the kept
// set, scores the kept samples and filters them. A final retrain runs only
// if the last round dropped something. Throws JudgeError if the kept set
// becomes empty and std::invalid_argument for rounds < 1 or no samples.
IterativeResult iterative_filter_train(const std::vector<LabeledSample>& dataset,
                                       const IterativeOptions& options);

}  // namespace satinfra::judge
