#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "satinfra/benchmark.hpp"

using namespace satinfra;
using namespace satinfra::bench;

namespace {

struct Table {
  std::size_t cols = 0;
  std::vector<double> x, y;
  DataView view() const { return DataView{x, cols, y}; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(x).subspan(i * cols, cols);
  }
};

Table random_table(std::size_t n, std::size_t p, std::mt19937_64& rng, double noise = 0.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Table t;
  t.cols = p;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double v = g(rng);
      t.x.push_back(v);
      s += (j + 1.0) * v;
    }
    t.y.push_back(s + noise * g(rng));
  }
  return t;
}

// Dense Gaussian elimination with partial pivoting.
std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(a[i][k]) > std::fabs(a[piv][k])) piv = i;
    std::swap(a[k], a[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
    x[i] = s / a[i][i];
  }
  return x;
}

// Exhaustive-split reference tree in the same preorder layout.
void oracle_grow(const Table& t, const std::vector<std::size_t>& rows, int depth,
                 const TreeParams& p, std::vector<TreeNode>& out) {
  const std::size_t n = rows.size();
  double mean = 0.0;
  for (std::size_t r : rows) mean += t.y[r];
  mean /= static_cast<double>(n);
  double sse = 0.0;
  for (std::size_t r : rows) sse += (t.y[r] - mean) * (t.y[r] - mean);
  const std::size_t id = out.size();
  out.push_back({});
  out[id].value = mean;
  out[id].samples = n;
  if (depth >= p.max_depth || n < 2 * p.min_leaf || sse == 0.0) return;

  int best_f = -1;
  double best_sse = sse, best_thr = 0.0;
  for (std::size_t f = 0; f < t.cols; ++f) {
    std::vector<double> vals;
    for (std::size_t r : rows) vals.push_back(t.x[r * t.cols + f]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double thr = 0.5 * (vals[k] + vals[k + 1]);
      std::vector<double> l, r;
      for (std::size_t i : rows) (t.x[i * t.cols + f] <= thr ? l : r).push_back(t.y[i]);
      if (l.size() < p.min_leaf || r.size() < p.min_leaf) continue;
      auto part = [](const std::vector<double>& v) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double s = 0.0;
        for (double e : v) s += (e - m) * (e - m);
        return s;
      };
      const double s = part(l) + part(r);
      if (s < best_sse) {
        best_sse = s;
        best_f = static_cast<int>(f);
        best_thr = thr;
      }
    }
  }
  if (best_f < 0 || sse - best_sse <= 1e-12 * sse) return;
  std::vector<std::size_t> l, r;
  for (std::size_t i : rows) (t.x[i * t.cols + best_f] <= best_thr ? l : r).push_back(i);
  out[id].feature = best_f;
  out[id].threshold = best_thr;
  out[id].left = static_cast<int>(out.size());
  oracle_grow(t, l, depth + 1, p, out);
  out[id].right = static_cast<int>(out.size());
  oracle_grow(t, r, depth + 1, p, out);
}

Tree oracle_tree(const Table& t, const TreeParams& p) {
  std::vector<std::size_t> rows(t.y.size());
  std::iota(rows.begin(), rows.end(), 0);
  Tree tree;
  oracle_grow(t, rows, 0, p, tree.nodes);
  return tree;
}

void check_same_tree(const Tree& a, const Tree& b) {
  REQUIRE(a.nodes.size() == b.nodes.size());
  for (std::size_t k = 0; k < a.nodes.size(); ++k) {
    CHECK(a.nodes[k].feature == b.nodes[k].feature);
    CHECK(a.nodes[k].left == b.nodes[k].left);
    CHECK(a.nodes[k].right == b.nodes[k].right);
    CHECK(a.nodes[k].samples == b.nodes[k].samples);
    CHECK(a.nodes[k].threshold == doctest::Approx(b.nodes[k].threshold).epsilon(1e-12));
    CHECK(a.nodes[k].value == doctest::Approx(b.nodes[k].value).epsilon(1e-12));
  }
}

features::DesignMatrix matrix_from(const Table& t, const std::vector<std::string>& country) {
  features::DesignMatrix m;
  for (std::size_t j = 0; j < t.cols; ++j) m.columns.push_back("f" + std::to_string(j));
  m.rows = t.y.size();
  m.x = t.x;
  m.y = t.y;
  m.country = country;
  for (std::size_t i = 0; i < m.rows; ++i) m.cluster_id.push_back("c" + std::to_string(i));
  return m;
}

}  // namespace

TEST_CASE("r_squared") {
  const std::vector<double> y{1, 2, 3};
  CHECK(r_squared(y, y) == 1.0);
  CHECK(r_squared(y, std::vector<double>{2, 2, 2}) == 0.0);
  CHECK(r_squared(y, std::vector<double>{1, 2, 4}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r_squared(y, std::vector<double>{3, 2, 1}) < 0.0);
  CHECK_THROWS_AS(r_squared(y, std::vector<double>{1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(r_squared(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
  CHECK_THROWS_AS(r_squared(std::vector<double>{4, 4, 4}, y), std::invalid_argument);
}

TEST_CASE("ridge examples") {
  Table t;
  t.cols = 1;
  for (int i = 0; i < 10; ++i) {
    t.x.push_back(0.3 * i - 1.0);
    t.y.push_back(2.0 * (0.3 * i - 1.0));
  }
  const RidgeModel exact = ridge_fit(t.view(), 0.0);
  CHECK(exact.coefficients()[0] == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(std::fabs(exact.raw_intercept()) < 1e-13);

  const RidgeModel huge = ridge_fit(t.view(), 1e15);
  const double ybar = std::accumulate(t.y.begin(), t.y.end(), 0.0) / 10.0;
  CHECK(std::fabs(huge.coefficients()[0]) < 1e-12);
  for (std::size_t i = 0; i < 10; ++i) CHECK(huge.predict(t.row(i)) == doctest::Approx(ybar).epsilon(1e-9));

  // Shrinkage is monotone in lambda.
  double prev = 3.0;
  for (double lam : {0.0, 0.1, 1.0, 10.0, 100.0}) {
    const double b = ridge_fit(t.view(), lam).coefficients()[0];
    CHECK(b <= prev);
    prev = b;
  }
  CHECK_THROWS_AS(ridge_fit(t.view(), -1.0), std::invalid_argument);
}

TEST_CASE("ridge matches a normal-equations oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Table t = random_table(20, 3, rng, 0.5);
    const RidgeModel m = ridge_fit(t.view(), 1.0);
    // Oracle: standardize, build Z'Z + I and Z'(y - ybar), solve by elimination.
    const std::size_t n = 20, p = 3;
    std::vector<double> mu(p, 0.0), sd(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t i = 0; i < n; ++i) mu[j] += t.x[i * p + j] / n;
      for (std::size_t i = 0; i < n; ++i) sd[j] += std::pow(t.x[i * p + j] - mu[j], 2) / n;
      sd[j] = std::sqrt(sd[j]);
    }
    const double ybar = std::accumulate(t.y.begin(), t.y.end(), 0.0) / n;
    std::vector<std::vector<double>> a(p, std::vector<double>(p, 0.0));
    std::vector<double> b(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        const double zj = (t.x[i * p + j] - mu[j]) / sd[j];
        b[j] += zj * (t.y[i] - ybar);
        for (std::size_t k = 0; k < p; ++k) a[j][k] += zj * (t.x[i * p + k] - mu[k]) / sd[k];
      }
    for (std::size_t j = 0; j < p; ++j) a[j][j] += 1.0;
    const auto beta = gauss_solve(a, b);
    for (std::size_t j = 0; j < p; ++j) CHECK(std::fabs(m.beta[j] - beta[j]) < 1e-10);
    CHECK(std::fabs(m.intercept - ybar) < 1e-12);
  }
}

TEST_CASE("ridge singular and affine invariance") {
  std::mt19937_64 rng(22);
  Table t = random_table(30, 2, rng, 0.1);
  Table col = t;
  col.cols = 3;
  col.x.clear();
  for (std::size_t i = 0; i < 30; ++i) {
    col.x.push_back(t.x[2 * i]);
    col.x.push_back(t.x[2 * i + 1]);
    col.x.push_back(2.0 * t.x[2 * i] - t.x[2 * i + 1]);
  }
  CHECK_THROWS_AS(ridge_fit(col.view(), 0.0), std::domain_error);
  CHECK_NOTHROW(ridge_fit(col.view(), 1.0));

  // A constant column is singular at lambda = 0 only.
  Table cst = t;
  for (std::size_t i = 0; i < 30; ++i) cst.x[2 * i + 1] = 4.0;
  CHECK_THROWS_AS(ridge_fit(cst.view(), 0.0), std::domain_error);
  CHECK_NOTHROW(ridge_fit(cst.view(), 1.0));

  for (double lam : {0.0, 1.0, 7.5}) {
    const RidgeModel a = ridge_fit(t.view(), lam);
    Table s = t;
    for (std::size_t i = 0; i < 30; ++i) {
      s.x[2 * i] = 1000.0 * s.x[2 * i] - 17.0;
      s.x[2 * i + 1] = -0.01 * s.x[2 * i + 1] + 3.0;
    }
    const RidgeModel b = ridge_fit(s.view(), lam);
    for (std::size_t i = 0; i < 30; ++i)
      CHECK(b.predict(s.row(i)) == doctest::Approx(a.predict(t.row(i))).epsilon(1e-10));
  }
}

TEST_CASE("tree examples") {
  Table t;
  t.cols = 1;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double v = u(rng);
    t.x.push_back(v);
    t.y.push_back(v < 0.5 ? -1.0 : 3.0);
  }
  const Tree tr = tree_fit(t.view());
  CHECK(tr.depth() == 1);
  CHECK(tr.leaves() == 2);
  std::vector<double> pred;
  for (std::size_t i = 0; i < 100; ++i) pred.push_back(tr.predict(t.row(i)));
  CHECK(r_squared(t.y, pred) == 1.0);

  Table c = t;
  std::fill(c.y.begin(), c.y.end(), 2.5);
  const Tree leaf = tree_fit(c.view());
  REQUIRE(leaf.nodes.size() == 1);
  CHECK(leaf.nodes[0].value == 2.5);
  CHECK(leaf.predict(std::vector<double>{0.1}) == 2.5);

  // Too few rows.
  Table small = t;
  small.x.resize(4);
  small.y.resize(4);
  CHECK_THROWS_AS(tree_fit(small.view()), std::invalid_argument);
  // Shape errors.
  CHECK_THROWS_AS(tree_fit(DataView{t.x, 2, t.y}), std::invalid_argument);
}

TEST_CASE("tree matches an exhaustive-split oracle") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 25; ++trial) {
    const Table t = random_table(50, 2, rng, 1.0);
    for (int depth = 0; depth <= 3; ++depth) {
      const TreeParams p{depth, 5};
      const Tree got = tree_fit(t.view(), p);
      CHECK(got.depth() <= depth);
      check_same_tree(got, oracle_tree(t, p));
    }
  }
  // Default parameters on a larger sample: every leaf honours min_leaf.
  const Table big = random_table(400, 3, rng, 1.0);
  const Tree deep = tree_fit(big.view());
  CHECK(deep.depth() <= kTreeMaxDepth);
  for (const auto& nd : deep.nodes)
    if (nd.feature < 0) CHECK(nd.samples >= kTreeMinLeaf);
  check_same_tree(deep, oracle_tree(big, TreeParams{}));
}

TEST_CASE("boosting") {
  std::mt19937_64 rng(41);
  const Table t = random_table(80, 2, rng, 0.5);
  BoostParams one;
  one.rounds = 1;
  one.shrinkage = 1.0;
  one.tree = TreeParams{8, 5};
  const BoostedModel b1 = boosted_fit(t.view(), one);
  const Tree single = tree_fit(t.view(), one.tree);
  for (std::size_t i = 0; i < 80; ++i)
    CHECK(b1.predict(t.row(i)) == doctest::Approx(single.predict(t.row(i))).epsilon(1e-12));

  const BoostedModel def = boosted_fit(t.view());
  REQUIRE(def.train_mse.size() == static_cast<std::size_t>(kBoostRounds) + 1);
  for (std::size_t k = 1; k < def.train_mse.size(); ++k)
    CHECK(def.train_mse[k] <= def.train_mse[k - 1] * (1.0 + 1e-12));
  CHECK(def.train_mse.back() < 0.5 * def.train_mse.front());

  // Two rounds on 10 points, unrolled by hand with oracle stumps.
  const Table s = random_table(10, 1, rng, 0.3);
  BoostParams two;
  two.rounds = 2;
  two.shrinkage = 0.5;
  two.tree = TreeParams{1, 2};
  const BoostedModel b2 = boosted_fit(s.view(), two);
  const double base = std::accumulate(s.y.begin(), s.y.end(), 0.0) / 10.0;
  std::vector<double> f(10, base);
  Table r = s;
  for (int round = 0; round < 2; ++round) {
    for (std::size_t i = 0; i < 10; ++i) r.y[i] = s.y[i] - f[i];
    const Tree stump = oracle_tree(r, two.tree);
    for (std::size_t i = 0; i < 10; ++i) f[i] += 0.5 * stump.predict(s.row(i));
  }
  for (std::size_t i = 0; i < 10; ++i) CHECK(b2.predict(s.row(i)) == doctest::Approx(f[i]).epsilon(1e-12));
}

TEST_CASE("bagging") {
  std::mt19937_64 rng(51);
  const Table t = random_table(60, 2, rng, 0.5);
  BagParams one;
  one.trees = 1;
  one.bootstrap = false;
  const BaggedModel b1 = bagged_fit(t.view(), one, 9);
  const Tree single = tree_fit(t.view());
  for (std::size_t i = 0; i < 60; ++i) CHECK(b1.predict(t.row(i)) == single.predict(t.row(i)));

  const BagParams def;
  omp_set_num_threads(1);
  const BaggedModel a = bagged_fit(t.view(), def, 5);
  omp_set_num_threads(4);
  const BaggedModel b = bagged_fit(t.view(), def, 5);
  omp_set_num_threads(omp_get_num_procs());
  const BaggedModel c = bagged_fit(t.view(), def, 6);
  REQUIRE(a.trees.size() == static_cast<std::size_t>(kBagTrees));
  bool differs = false;
  for (std::size_t i = 0; i < 60; ++i) {
    CHECK(a.predict(t.row(i)) == b.predict(t.row(i)));
    differs |= a.predict(t.row(i)) != c.predict(t.row(i));
  }
  CHECK(differs);
  for (std::size_t k = 0; k < a.trees.size(); ++k) CHECK(a.trees[k].nodes.size() == b.trees[k].nodes.size());
}

TEST_CASE("bagging reduces prediction variance") {
  // Across 100 training sets, the bagged prediction at fixed points varies
  // less than the prediction of a single bootstrap tree.
  constexpr int kTrials = 100;
  std::mt19937_64 rng(52);
  const std::vector<std::vector<double>> probes{{0.0, 0.0}, {1.0, -0.5}, {-1.0, 1.0}, {0.5, 0.5}};
  BagParams bp;
  bp.trees = 25;
  std::vector<std::vector<double>> bagged(probes.size()), indiv(probes.size() * bp.trees);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Table t = random_table(100, 2, rng, 2.0);
    const BaggedModel m = bagged_fit(t.view(), bp, 1000 + trial);
    for (std::size_t q = 0; q < probes.size(); ++q) {
      bagged[q].push_back(m.predict(probes[q]));
      for (int k = 0; k < bp.trees; ++k) indiv[q * bp.trees + k].push_back(m.trees[k].predict(probes[q]));
    }
  }
  auto var = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double e : v) s += (e - m) * (e - m);
    return s / static_cast<double>(v.size() - 1);
  };
  for (std::size_t q = 0; q < probes.size(); ++q) {
    double mean_var = 0.0;
    for (int k = 0; k < bp.trees; ++k) mean_var += var(indiv[q * bp.trees + k]) / bp.trees;
    CHECK(var(bagged[q]) <= mean_var);
  }
}

TEST_CASE("model specs") {
  const auto specs = default_specs(3);
  REQUIRE(specs.size() == 4);
  CHECK(specs[0].describe() == "kind=ridge lambda=1");
  CHECK(specs[1].describe() == "kind=rtree max_depth=8 min_leaf=5");
  CHECK(specs[2].describe() == "kind=rtree_boosted rounds=100 shrinkage=0.1 max_depth=3 min_leaf=5");
  CHECK(specs[3].describe() == "kind=rtree_bagged trees=100 bootstrap=1 max_depth=8 min_leaf=5 seed=3");
  for (const auto& s : specs) CHECK(parse_model_kind(s.name()) == s.kind);
  CHECK_THROWS_AS(parse_model_kind("svm"), std::invalid_argument);
}

TEST_CASE("loocv by country") {
  // Identical linear data in two countries.
  Table t;
  t.cols = 1;
  std::vector<std::string> country;
  for (int i = 0; i < 40; ++i) {
    t.x.push_back(0.1 * (i % 20));
    t.y.push_back(0.1 * (i % 20));
    country.push_back(i < 20 ? "AA" : "BB");
  }
  const auto m = matrix_from(t, country);
  const auto specs = default_specs(1);
  const auto res = loocv_by_country(m, specs, "all");
  REQUIRE(res.size() == 4);
  CHECK(res[0].model == "ridge");
  CHECK(res[0].r2_pooled > 0.99);  // lambda = 1 shrinks slightly
  ModelSpec ols;
  ols.ridge_lambda = 0.0;
  CHECK(loocv_by_country(m, std::span<const ModelSpec>(&ols, 1))[0].r2_pooled ==
        doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& r : res) {
    CHECK(audit_ok(m, r));
    REQUIRE(r.folds.size() == 2);
    CHECK(r.folds[0].train_countries == std::vector<std::string>{"BB"});
    REQUIRE(r.per_country.size() == 2);
    CHECK(r.per_country[0].country == "AA");
    CHECK(r.per_country[0].rows == 20);
    CHECK(r.per_country[0].r2.has_value());
    CHECK(r.r2_pooled > 0.8);
  }

  // A tampered audit log is rejected.
  CvResult bad = res[0];
  bad.folds[0].train_rows.push_back(bad.folds[0].test_rows[0]);
  CHECK_FALSE(audit_ok(m, bad));
  CvResult dup = res[0];
  dup.folds[1].test_rows.push_back(dup.folds[1].test_rows[0]);
  CHECK_FALSE(audit_ok(m, dup));

  // Deterministic.
  const auto again = loocv_by_country(m, specs, "all");
  for (std::size_t k = 0; k < res.size(); ++k) CHECK(again[k].predictions == res[k].predictions);

  auto one = matrix_from(t, std::vector<std::string>(40, "AA"));
  CHECK_THROWS_AS(loocv_by_country(one, specs), std::invalid_argument);
}

TEST_CASE("loocv predictions come only from other countries") {
  // Each country has its own offset. A model that saw the held-out country
  // would fit that offset; leave-one-out cannot.
  std::mt19937_64 rng(61);
  Table t = random_table(120, 2, rng, 0.0);
  std::vector<std::string> country;
  for (std::size_t i = 0; i < 120; ++i) {
    country.push_back("C" + std::to_string(i % 4));
    if (i % 4 == 3) t.y[i] += 100.0;
  }
  const auto m = matrix_from(t, country);
  ModelSpec ridge;
  const auto res = loocv_by_country(m, std::span<const ModelSpec>(&ridge, 1));
  CHECK(audit_ok(m, res[0]));
  // Rows of C3 are predicted without the +100 shift.
  double mean_err = 0.0;
  for (std::size_t i = 3; i < 120; i += 4) mean_err += (t.y[i] - res[0].predictions[i]) / 30.0;
  CHECK(mean_err > 90.0);
}

TEST_CASE("permutation null gives no skill") {
  std::mt19937_64 rng(62);
  const std::vector<ModelSpec> specs{ModelSpec{}, [] {
                                       ModelSpec s;
                                       s.kind = ModelKind::rtree;
                                       return s;
                                     }()};
  for (int rep = 0; rep < 20; ++rep) {
    Table t = random_table(1000, 3, rng, 0.2);
    std::shuffle(t.y.begin(), t.y.end(), rng);
    std::vector<std::string> country;
    for (std::size_t i = 0; i < 1000; ++i) country.push_back("K" + std::to_string(i % 5));
    const auto m = matrix_from(t, country);
    for (const auto& r : loocv_by_country(m, specs)) CHECK(r.r2_pooled <= 0.1);
  }
}

TEST_CASE("result tables") {
  std::mt19937_64 rng(71);
  std::vector<features::FeatureRow> rows;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 60; ++i) {
    features::FeatureRow r;
    r.cluster_id = "k" + std::to_string(i);
    r.country = "C" + std::to_string(i % 3);
    r.n_cells = 3;
    for (std::size_t v = 0; v < 4; ++v) {
      features::Aggregate a;
      a.sum = g(rng);
      a.mean = g(rng);
      for (double& q : a.quantiles) q = g(rng);
      if (v != 3 || i % 10 != 0) r.vars[v] = a;
    }
    r.wealth = r.vars[0]->sum + 0.1 * g(rng);
    r.wealthpooled = r.wealth;
    rows.push_back(r);
  }
  const std::vector<features::FeatureSet> sets{features::FeatureSet::buildings,
                                                features::FeatureSet::nightlight};
  auto specs = default_specs(2);
  for (auto& s : specs) {
    s.boost.rounds = 10;
    s.bag.trees = 10;
  }
  const auto res = run_benchmark(rows, sets, features::Label::wealth, specs);
  REQUIRE(res.size() == 8);
  CHECK(res[0].feature_set == "buildings");
  CHECK(res[4].feature_set == "nightlight");
  CHECK(res[4].predictions.size() == 54);  // rows without nightlight are dropped
  CHECK(res[0].r2_pooled > 0.8);

  const auto dir = std::filesystem::temp_directory_path() / "satinfra_bench";
  std::filesystem::create_directories(dir);
  write_pooled(dir / "pooled.csv", res, "# config=1 seed=2");
  write_per_country(dir / "country.csv", res);
  write_audit(dir / "audit.csv", res);
  write_specs(dir / "specs.csv", specs);
  auto lines = [](const std::filesystem::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string s; std::getline(in, s);) out.push_back(s);
    return out;
  };
  const auto pooled = lines(dir / "pooled.csv");
  REQUIRE(pooled.size() == 10);
  CHECK(pooled[0] == "# config=1 seed=2");
  CHECK(pooled[1] == "model,feature_set,r2_pooled");
  CHECK(pooled[2].rfind("ridge,buildings,", 0) == 0);
  CHECK(lines(dir / "country.csv").size() == 1 + 8 * 3);
  const auto audit = lines(dir / "audit.csv");
  REQUIRE(audit.size() == 1 + 8 * 3);
  CHECK(audit[1] == "ridge,buildings,C0,40,20,C1;C2");
  CHECK(lines(dir / "specs.csv").size() == 5);
}
