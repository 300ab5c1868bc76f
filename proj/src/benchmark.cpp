#include "satinfra/benchmark.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "csv.hpp"
#include "satinfra/layers.hpp"

namespace satinfra::bench {

void DataView::validate() const {
  if (cols == 0) throw std::invalid_argument("data has no columns");
  if (y.empty()) throw std::invalid_argument("data has no rows");
  if (x.size() != y.size() * cols) throw std::invalid_argument("x size does not match rows * cols");
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite target value");
}

// ---- ridge ---------------------------------------------------------------

std::vector<double> RidgeModel::coefficients() const {
  std::vector<double> c(beta.size());
  for (std::size_t j = 0; j < beta.size(); ++j) c[j] = beta[j] / scale[j];
  return c;
}

double RidgeModel::raw_intercept() const {
  double b0 = intercept;
  for (std::size_t j = 0; j < beta.size(); ++j) b0 -= beta[j] * mean[j] / scale[j];
  return b0;
}

double RidgeModel::predict(std::span<const double> row) const {
  if (row.size() != beta.size()) throw std::invalid_argument("row width does not match model");
  double s = intercept;
  for (std::size_t j = 0; j < beta.size(); ++j) s += beta[j] * (row[j] - mean[j]) / scale[j];
  return s;
}

RidgeModel ridge_fit(const DataView& d, double lambda) {
  d.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("ridge lambda must be finite and >= 0");
  const std::size_t n = d.rows(), p = d.cols;
  RidgeModel m;
  m.mean.assign(p, 0.0);
  m.scale.assign(p, 1.0);
  for (std::size_t j = 0; j < p; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += d.at(i, j);
    m.mean[j] = s / static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (d.at(i, j) - m.mean[j]) * (d.at(i, j) - m.mean[j]);
    const double sd = std::sqrt(v / static_cast<double>(n));
    if (sd > 0.0) m.scale[j] = sd;
  }
  m.intercept = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(n);

  Eigen::MatrixXd z(n, p);
  Eigen::VectorXd yc(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) z(i, j) = (d.at(i, j) - m.mean[j]) / m.scale[j];
    yc(i) = d.y[i] - m.intercept;
  }
  Eigen::MatrixXd a = z.transpose() * z;
  a.diagonal().array() += lambda;
  const Eigen::VectorXd b = z.transpose() * yc;

  Eigen::VectorXd beta;
  if (lambda == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() < static_cast<Eigen::Index>(p))
      throw std::domain_error("ridge system is singular (collinear columns with lambda = 0)");
    beta = lu.solve(b);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw std::domain_error("ridge factorization failed");
    beta = ldlt.solve(b);
  }
  m.beta.assign(beta.data(), beta.data() + p);
  return m;
}

// ---- trees ---------------------------------------------------------------

double Tree::predict(std::span<const double> row) const {
  if (nodes.empty()) throw std::logic_error("empty tree");
  int k = 0;
  while (nodes[k].feature >= 0) {
    const TreeNode& nd = nodes[k];
    k = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[k].value;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> dep(nodes.size(), 0);
  int best = 0;
  // Children always follow their parent in storage order.
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    best = std::max(best, dep[k]);
    if (nodes[k].feature >= 0) {
      dep[nodes[k].left] = dep[k] + 1;
      dep[nodes[k].right] = dep[k] + 1;
    }
  }
  return best;
}

std::size_t Tree::leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const DataView& d, const TreeParams& p) : d_(d), p_(p) {}

  Tree build(std::vector<std::size_t> rows) {
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t> rows, int depth) {
    const std::size_t n = rows.size();
    double sum = 0.0;
    for (std::size_t r : rows) sum += d_.y[r];
    const double mean = sum / static_cast<double>(n);
    double sse = 0.0;
    for (std::size_t r : rows) sse += (d_.y[r] - mean) * (d_.y[r] - mean);

    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back({});
    tree_.nodes[id].value = mean;
    tree_.nodes[id].samples = n;
    if (depth >= p_.max_depth || n < 2 * p_.min_leaf || sse == 0.0) return id;

    // Gain of a split with left sum s_l of centered targets is
    // s_l^2 / n_l + s_l^2 / n_r.
    int best_f = -1;
    double best_gain = 0.0, best_thr = 0.0;
    std::vector<std::size_t> order(rows);
    for (std::size_t f = 0; f < d_.cols; ++f) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return d_.at(a, f) < d_.at(b, f);
      });
      double sl = 0.0;
      for (std::size_t k = 1; k < n; ++k) {
        sl += d_.y[order[k - 1]] - mean;
        if (k < p_.min_leaf || n - k < p_.min_leaf) continue;
        const double lo = d_.at(order[k - 1], f), hi = d_.at(order[k], f);
        if (!(lo < hi)) continue;
        const double gain = sl * sl / static_cast<double>(k) + sl * sl / static_cast<double>(n - k);
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          double thr = std::midpoint(lo, hi);
          if (!(thr < hi)) thr = lo;
          best_thr = thr;
        }
      }
    }
    if (best_f < 0 || best_gain <= 1e-12 * sse) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (d_.at(r, best_f) <= best_thr ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    TreeNode& nd = tree_.nodes[id];
    nd.feature = best_f;
    nd.threshold = best_thr;
    nd.left = l;
    nd.right = r;
    return id;
  }

  const DataView& d_;
  TreeParams p_;
  Tree tree_;
};

void check_params(const TreeParams& p) {
  if (p.max_depth < 0) throw std::invalid_argument("max_depth must be >= 0");
  if (p.min_leaf < 1) throw std::invalid_argument("min_leaf must be >= 1");
}

}  // namespace

Tree tree_fit(const DataView& d, std::span<const std::size_t> rows, const TreeParams& p) {
  d.validate();
  check_params(p);
  if (rows.size() < p.min_leaf)
    throw std::invalid_argument("tree_fit needs at least min_leaf rows (" +
                                std::to_string(p.min_leaf) + ")");
  for (std::size_t r : rows)
    if (r >= d.rows()) throw std::out_of_range("row index out of range");
  return TreeBuilder(d, p).build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

Tree tree_fit(const DataView& d, const TreeParams& p) {
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return tree_fit(d, rows, p);
}

double BoostedModel::predict(std::span<const double> row) const {
  double s = 0.0;
  for (const Tree& t : trees) s += t.predict(row);
  return base + shrinkage * s;
}

BoostedModel boosted_fit(const DataView& d, const BoostParams& p) {
  d.validate();
  check_params(p.tree);
  if (p.rounds < 0) throw std::invalid_argument("boosting rounds must be >= 0");
  if (!(p.shrinkage > 0.0 && p.shrinkage <= 1.0))
    throw std::invalid_argument("shrinkage must be in (0, 1]");
  const std::size_t n = d.rows();
  if (n < p.tree.min_leaf) throw std::invalid_argument("boosted_fit needs at least min_leaf rows");

  BoostedModel m;
  m.shrinkage = p.shrinkage;
  m.base = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(n);
  std::vector<double> f(n, m.base), resid(n);
  auto mse = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (d.y[i] - f[i]) * (d.y[i] - f[i]);
    return s / static_cast<double>(n);
  };
  m.train_mse.push_back(mse());
  for (int round = 0; round < p.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) resid[i] = d.y[i] - f[i];
    const DataView rv{d.x, d.cols, resid};
    Tree t = tree_fit(rv, p.tree);
    for (std::size_t i = 0; i < n; ++i)
      f[i] += p.shrinkage * t.predict(d.x.subspan(i * d.cols, d.cols));
    m.trees.push_back(std::move(t));
    m.train_mse.push_back(mse());
  }
  return m;
}

double BaggedModel::predict(std::span<const double> row) const {
  if (trees.empty()) throw std::logic_error("empty ensemble");
  double s = 0.0;
  for (const Tree& t : trees) s += t.predict(row);
  return s / static_cast<double>(trees.size());
}

BaggedModel bagged_fit(const DataView& d, const BagParams& p, std::uint64_t seed) {
  d.validate();
  check_params(p.tree);
  if (p.trees < 1) throw std::invalid_argument("bagging needs at least one tree");
  const std::size_t n = d.rows();
  if (n < p.tree.min_leaf) throw std::invalid_argument("bagged_fit needs at least min_leaf rows");

  BaggedModel m;
  m.trees.resize(static_cast<std::size_t>(p.trees));
  std::vector<std::exception_ptr> errors(m.trees.size());
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < p.trees; ++b) {
    try {
      std::vector<std::size_t> rows(n);
      if (p.bootstrap) {
        std::mt19937_64 rng(nn::mix64(seed ^ nn::mix64(static_cast<std::uint64_t>(b) + 1)));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (auto& r : rows) r = pick(rng);
      } else {
        std::iota(rows.begin(), rows.end(), 0);
      }
      m.trees[b] = tree_fit(d, rows, p.tree);
    } catch (...) {
      errors[b] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return m;
}

// ---- specs ---------------------------------------------------------------

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ridge: return "ridge";
    case ModelKind::rtree: return "rtree";
    case ModelKind::rtree_boosted: return "rtree_boosted";
    case ModelKind::rtree_bagged: return "rtree_bagged";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& s) {
  for (ModelKind k : {ModelKind::ridge, ModelKind::rtree, ModelKind::rtree_boosted,
                      ModelKind::rtree_bagged})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown model '" + s + "'");
}

std::string ModelSpec::describe() const {
  std::ostringstream o;
  o << "kind=" << name();
  switch (kind) {
    case ModelKind::ridge:
      o << " lambda=" << csv::fmt(ridge_lambda);
      break;
    case ModelKind::rtree:
      o << " max_depth=" << tree.max_depth << " min_leaf=" << tree.min_leaf;
      break;
    case ModelKind::rtree_boosted:
      o << " rounds=" << boost.rounds << " shrinkage=" << csv::fmt(boost.shrinkage)
        << " max_depth=" << boost.tree.max_depth << " min_leaf=" << boost.tree.min_leaf;
      break;
    case ModelKind::rtree_bagged:
      o << " trees=" << bag.trees << " bootstrap=" << (bag.bootstrap ? 1 : 0)
        << " max_depth=" << bag.tree.max_depth << " min_leaf=" << bag.tree.min_leaf
        << " seed=" << seed;
      break;
  }
  return o.str();
}

std::vector<ModelSpec> default_specs(std::uint64_t seed) {
  std::vector<ModelSpec> out;
  for (ModelKind k : {ModelKind::ridge, ModelKind::rtree, ModelKind::rtree_boosted,
                      ModelKind::rtree_bagged}) {
    ModelSpec s;
    s.kind = k;
    s.seed = seed;
    out.push_back(s);
  }
  return out;
}

FittedModel FittedModel::fit(const ModelSpec& spec, const DataView& d) {
  FittedModel m;
  m.kind_ = spec.kind;
  switch (spec.kind) {
    case ModelKind::ridge: m.ridge_ = ridge_fit(d, spec.ridge_lambda); break;
    case ModelKind::rtree: m.tree_ = tree_fit(d, spec.tree); break;
    case ModelKind::rtree_boosted: m.boosted_ = boosted_fit(d, spec.boost); break;
    case ModelKind::rtree_bagged: m.bagged_ = bagged_fit(d, spec.bag, spec.seed); break;
  }
  return m;
}

double FittedModel::predict(std::span<const double> row) const {
  switch (kind_) {
    case ModelKind::ridge: return ridge_.predict(row);
    case ModelKind::rtree: return tree_.predict(row);
    case ModelKind::rtree_boosted: return boosted_.predict(row);
    case ModelKind::rtree_bagged: return bagged_.predict(row);
  }
  throw std::logic_error("bad model kind");
}

std::vector<double> FittedModel::predict_all(const DataView& d) const {
  std::vector<double> out(d.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = predict(d.x.subspan(i * d.cols, d.cols));
  return out;
}

// ---- evaluation ----------------------------------------------------------

double r_squared(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("r_squared: length mismatch");
  if (y_true.size() < 2) throw std::invalid_argument("r_squared: need at least two values");
  const double mean =
      std::accumulate(y_true.begin(), y_true.end(), 0.0) / static_cast<double>(y_true.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    sse += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    sst += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (sst == 0.0) throw std::invalid_argument("r_squared: truth has zero variance");
  return 1.0 - sse / sst;
}

namespace {

std::vector<std::string> sorted_countries(const features::DesignMatrix& m) {
  std::set<std::string> s(m.country.begin(), m.country.end());
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<CvResult> loocv_by_country(const features::DesignMatrix& m,
                                       std::span<const ModelSpec> specs,
                                       const std::string& feature_set) {
  const std::size_t p = m.columns.size();
  if (m.country.size() != m.rows || m.y.size() != m.rows || m.x.size() != m.rows * p)
    throw std::invalid_argument("inconsistent design matrix");
  const std::vector<std::string> countries = sorted_countries(m);
  if (countries.size() < 2)
    throw std::invalid_argument("leave-one-country-out needs at least two countries");

  std::vector<FoldAudit> folds(countries.size());
  for (std::size_t c = 0; c < countries.size(); ++c) {
    FoldAudit& f = folds[c];
    f.held_out = countries[c];
    std::set<std::string> seen;
    for (std::size_t r = 0; r < m.rows; ++r) {
      if (m.country[r] == f.held_out) {
        f.test_rows.push_back(r);
      } else {
        f.train_rows.push_back(r);
        seen.insert(m.country[r]);
      }
    }
    if (f.test_rows.empty()) throw std::invalid_argument("country " + f.held_out + " has no rows");
    f.train_countries.assign(seen.begin(), seen.end());
  }

  std::vector<CvResult> results;
  for (const ModelSpec& spec : specs) {
    CvResult res;
    res.model = spec.name();
    res.feature_set = feature_set;
    res.spec = spec.describe();
    res.predictions.assign(m.rows, 0.0);
    std::vector<std::exception_ptr> errors(folds.size());
    const int nf = static_cast<int>(folds.size());
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < nf; ++c) {
      try {
        const FoldAudit& f = folds[c];
        std::vector<double> x, y;
        x.reserve(f.train_rows.size() * p);
        for (std::size_t r : f.train_rows) {
          x.insert(x.end(), m.x.begin() + r * p, m.x.begin() + (r + 1) * p);
          y.push_back(m.y[r]);
        }
        const FittedModel model = FittedModel::fit(spec, DataView{x, p, y});
        for (std::size_t r : f.test_rows)
          res.predictions[r] = model.predict(std::span<const double>(m.x).subspan(r * p, p));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    res.r2_pooled = r_squared(m.y, res.predictions);
    for (const FoldAudit& f : folds) {
      CountryScore cs;
      cs.country = f.held_out;
      cs.rows = f.test_rows.size();
      std::vector<double> yt, yp;
      for (std::size_t r : f.test_rows) {
        yt.push_back(m.y[r]);
        yp.push_back(res.predictions[r]);
      }
      const bool constant = std::all_of(yt.begin(), yt.end(), [&](double v) { return v == yt[0]; });
      if (yt.size() >= 2 && !constant) cs.r2 = r_squared(yt, yp);
      res.per_country.push_back(cs);
    }
    res.folds = folds;
    results.push_back(std::move(res));
  }
  return results;
}

bool audit_ok(const features::DesignMatrix& m, const CvResult& r) {
  std::vector<int> predicted(m.rows, 0);
  for (const FoldAudit& f : r.folds) {
    for (std::size_t row : f.train_rows)
      if (row >= m.rows || m.country[row] == f.held_out) return false;
    for (std::size_t row : f.test_rows) {
      if (row >= m.rows || m.country[row] != f.held_out) return false;
      ++predicted[row];
    }
    for (const std::string& c : f.train_countries)
      if (c == f.held_out) return false;
  }
  return std::all_of(predicted.begin(), predicted.end(), [](int k) { return k == 1; });
}

std::vector<CvResult> run_benchmark(const std::vector<features::FeatureRow>& rows,
                                    std::span<const features::FeatureSet> sets,
                                    features::Label label, std::span<const ModelSpec> specs) {
  std::vector<CvResult> out;
  for (features::FeatureSet s : sets) {
    const features::DesignMatrix m = features::build_matrix(rows, s, label);
    for (CvResult& r : loocv_by_country(m, specs, features::to_string(s))) {
      if (!audit_ok(m, r)) throw std::logic_error("fold audit failed for " + r.model);
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_pooled(const std::filesystem::path& path, const std::vector<CvResult>& results,
                  const std::string& preamble) {
  csv::Writer w(path, preamble, "model,feature_set,r2_pooled");
  for (const auto& r : results) w.row(r.model, r.feature_set, csv::fmt(r.r2_pooled));
}

void write_per_country(const std::filesystem::path& path, const std::vector<CvResult>& results,
                       const std::string& preamble) {
  csv::Writer w(path, preamble, "model,feature_set,country,rows,r2");
  for (const auto& r : results)
    for (const auto& c : r.per_country)
      w.row(r.model, r.feature_set, c.country, c.rows, csv::fmt(c.r2));
}

void write_audit(const std::filesystem::path& path, const std::vector<CvResult>& results,
                 const std::string& preamble) {
  csv::Writer w(path, preamble, "model,feature_set,held_out,n_train,n_test,train_countries");
  for (const auto& r : results)
    for (const auto& f : r.folds) {
      std::string tc;
      for (const auto& c : f.train_countries) tc += (tc.empty() ? "" : ";") + c;
      w.row(r.model, r.feature_set, f.held_out, f.train_rows.size(), f.test_rows.size(), tc);
    }
}

void write_specs(const std::filesystem::path& path, std::span<const ModelSpec> specs,
                 const std::string& preamble) {
  csv::Writer w(path, preamble, "model,spec");
  for (const auto& s : specs) w.row(s.name(), s.describe());
}

}  // namespace satinfra::bench
