#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satinfra/features.hpp"

namespace satinfra::bench {

// Frozen default settings. No tuning is performed anywhere.
inline constexpr double kRidgeLambda = 1.0;
inline constexpr int kTreeMaxDepth = 8;
inline constexpr std::size_t kTreeMinLeaf = 5;
inline constexpr int kBoostRounds = 100;
inline constexpr double kBoostShrinkage = 0.1;
inline constexpr int kBoostTreeDepth = 3;
inline constexpr int kBagTrees = 100;

// Row-major view of a feature matrix with its target.
struct DataView {
  std::span<const double> x;
  std::size_t cols = 0;
  std::span<const double> y;

  std::size_t rows() const { return y.size(); }
  double at(std::size_t r, std::size_t c) const { return x[r * cols + c]; }
  void validate() const;  // throws std::invalid_argument
};

// ---- ridge ---------------------------------------------------------------

// Linear model on columns standardized with training means and deviations.
// The intercept is not penalized.
struct RidgeModel {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 for zero-variance columns
  std::vector<double> beta;   // standardized coefficients
  double intercept = 0.0;     // mean of the training target

  // Coefficients and intercept in the original column units.
  std::vector<double> coefficients() const;
  double raw_intercept() const;
  double predict(std::span<const double> row) const;
};

// Throws std::invalid_argument for lambda < 0 and std::domain_error when
// the system is singular (lambda = 0 with collinear columns).
RidgeModel ridge_fit(const DataView& d, double lambda = kRidgeLambda);

// ---- trees ---------------------------------------------------------------

struct TreeParams {
  int max_depth = kTreeMaxDepth;
  std::size_t min_leaf = kTreeMinLeaf;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;  // x[feature] <= threshold
  int right = -1;
  double value = 0.0;
  std::size_t samples = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
  int depth() const;
  std::size_t leaves() const;
};

// Greedy variance-reduction tree. Thresholds are midpoints between
// consecutive distinct feature values; both children need min_leaf rows.
// Throws std::invalid_argument when fewer than min_leaf rows are given.
Tree tree_fit(const DataView& d, const TreeParams& p = {});
// Fit on a multiset of row indices (duplicates allowed).
Tree tree_fit(const DataView& d, std::span<const std::size_t> rows, const TreeParams& p);

struct BoostParams {
  int rounds = kBoostRounds;
  double shrinkage = kBoostShrinkage;
  TreeParams tree{kBoostTreeDepth, kTreeMinLeaf};
};

struct BoostedModel {
  double base = 0.0;
  double shrinkage = 0.0;
  std::vector<Tree> trees;
  // Training mean squared error after each round, starting with the base.
  std::vector<double> train_mse;

  double predict(std::span<const double> row) const;
};

BoostedModel boosted_fit(const DataView& d, const BoostParams& p = {});

struct BagParams {
  int trees = kBagTrees;
  bool bootstrap = true;  // full-size resample with replacement
  TreeParams tree{};
};

struct BaggedModel {
  std::vector<Tree> trees;
  double predict(std::span<const double> row) const;
};

// Tree b draws its bootstrap from an RNG seeded by (seed, b), so the result
// does not depend on the thread count.
BaggedModel bagged_fit(const DataView& d, const BagParams& p, std::uint64_t seed);

// ---- model specs ---------------------------------------------------------

enum class ModelKind { ridge, rtree, rtree_boosted, rtree_bagged };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);  // throws std::invalid_argument

struct ModelSpec {
  ModelKind kind = ModelKind::ridge;
  double ridge_lambda = kRidgeLambda;
  TreeParams tree{};
  BoostParams boost{};
  BagParams bag{};
  std::uint64_t seed = 0;

  std::string name() const { return to_string(kind); }
  // One-line `key=value` record of every setting that applies to the kind.
  std::string describe() const;
};

// The four default models in table order.
std::vector<ModelSpec> default_specs(std::uint64_t seed);

class FittedModel {
 public:
  static FittedModel fit(const ModelSpec& spec, const DataView& d);
  double predict(std::span<const double> row) const;
  std::vector<double> predict_all(const DataView& d) const;

 private:
  ModelKind kind_ = ModelKind::ridge;
  RidgeModel ridge_;
  Tree tree_;
  BoostedModel boosted_;
  BaggedModel bagged_;
};

// ---- evaluation ----------------------------------------------------------

// 1 - SSE/SST. Throws std::invalid_argument on length mismatch, fewer than
// two values or a constant truth.
double r_squared(std::span<const double> y_true, std::span<const double> y_pred);

struct CountryScore {
  std::string country;
  std::size_t rows = 0;
  std::optional<double> r2;  // empty for a single row or constant truth
};

// One held-out fold.
struct FoldAudit {
  std::string held_out;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::vector<std::string> train_countries;  // sorted, unique
};

struct CvResult {
  std::string model;
  std::string feature_set;
  std::string spec;  // ModelSpec::describe()
  double r2_pooled = 0.0;
  std::vector<CountryScore> per_country;  // sorted by country
  std::vector<double> predictions;        // aligned with the matrix rows
  std::vector<FoldAudit> folds;
};

// Leave-one-country-out. Folds run in parallel; each fit is deterministic.
// Throws std::invalid_argument with fewer than two countries.
std::vector<CvResult> loocv_by_country(const features::DesignMatrix& m,
                                       std::span<const ModelSpec> specs,
                                       const std::string& feature_set = "");

// True when no fold trained on a row of its held-out country and every row
// is predicted exactly once.
bool audit_ok(const features::DesignMatrix& m, const CvResult& r);

// Models x feature sets on one label.
std::vector<CvResult> run_benchmark(const std::vector<features::FeatureRow>& rows,
                                    std::span<const features::FeatureSet> sets,
                                    features::Label label, std::span<const ModelSpec> specs);

// `model,feature_set,r2_pooled`
void write_pooled(const std::filesystem::path& path, const std::vector<CvResult>& results,
                  const std::string& preamble = "");
// `model,feature_set,country,rows,r2`
void write_per_country(const std::filesystem::path& path, const std::vector<CvResult>& results,
                       const std::string& preamble = "");
// `model,feature_set,held_out,n_train,n_test,train_countries`
void write_audit(const std::filesystem::path& path, const std::vector<CvResult>& results,
                 const std::string& preamble = "");
// `model,spec`
void write_specs(const std::filesystem::path& path, std::span<const ModelSpec> specs,
                 const std::string& preamble = "");

}  // namespace satinfra::bench
