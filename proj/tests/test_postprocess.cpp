#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "satinfra/losses.hpp"
#include "satinfra/postprocess.hpp"

using namespace satinfra;
using namespace satinfra::post;
using geo::Point;
using raster::Feature;
using raster::GeometryKind;
using raster::VectorLayer;

namespace {

BinaryMask from_rows(const std::vector<std::string>& rows) {
  BinaryMask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.at(x, y) = rows[y][x] == '#';
  return m;
}

// Union-find labelling used as an independent oracle. Returns the set of
// components as sorted pixel lists.
std::set<std::vector<std::uint32_t>> oracle_components(const BinaryMask& m, std::size_t min_area) {
  const std::size_t n = m.bits.size();
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (m.get(x + dx, y + dy))
            parent[find(y * m.width + x)] = find((y + dy) * m.width + x + dx);
    }
  std::map<std::uint32_t, std::vector<std::uint32_t>> groups;
  for (std::uint32_t i = 0; i < n; ++i)
    if (m.bits[i]) groups[find(i)].push_back(i);
  std::set<std::vector<std::uint32_t>> out;
  for (auto& [root, px] : groups)
    if (px.size() >= min_area) out.insert(px);
  return out;
}

std::set<std::vector<std::uint32_t>> as_set(const std::vector<Blob>& blobs) {
  std::set<std::vector<std::uint32_t>> s;
  for (const auto& b : blobs) s.insert(b.pixels);
  return s;
}

Feature square(double x0, double y0, double x1, double y1) {
  return {GeometryKind::polygon, {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}}, "building"};
}

bool ray_cast(const std::vector<Point>& ring, Point p) {
  bool in = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++)
    if ((ring[i].y > p.y) != (ring[j].y > p.y) &&
        p.x < (ring[j].x - ring[i].x) * (p.y - ring[i].y) / (ring[j].y - ring[i].y) + ring[i].x)
      in = !in;
  return in;
}

raster::MaskRaster canvas(int w, int h) { return raster::MaskRaster(w, h); }

}  // namespace

TEST_CASE("threshold_mask") {
  raster::MaskRaster m = canvas(8, 8);
  std::mt19937_64 rng(1);
  for (float& v : m.values) v = static_cast<float>(rng() % 2 ? 255 : 0);
  CHECK(threshold_mask(m, 255).count() == 0);
  std::size_t on = 0;
  for (float v : m.values) on += v == 255.0f;
  CHECK(threshold_mask(m, 0).count() == on);

  for (float& v : m.values) v = static_cast<float>(rng() % 256);
  std::size_t prev = SIZE_MAX;
  for (double t : {5.0, 10.0, 15.0, 25.0}) {
    const std::size_t c = threshold_mask(m, t).count();
    CHECK(c <= prev);
    prev = c;
  }
  CHECK_THROWS_AS(threshold_mask(m, -1), std::invalid_argument);
  CHECK_THROWS_AS(threshold_mask(m, 256), std::invalid_argument);
}

TEST_CASE("connected_components examples") {
  const BinaryMask two = from_rows({
      "..........",
      ".###......",
      ".###..###.",
      ".###..###.",
      "......###.",
  });
  const auto blobs = connected_components(two);
  REQUIRE(blobs.size() == 2);
  CHECK(blobs[0].centroid == Point{2, 2});
  CHECK(blobs[1].centroid == Point{7, 3});
  CHECK(blobs[0].area() == 9);
  CHECK(connected_components(BinaryMask(6, 6)).empty());

  const BinaryMask diag = from_rows({"#...", ".#..", "..#.", "...#"});
  CHECK(connected_components(diag, 1).size() == 1);  // 8-connected
  CHECK(connected_components(diag, 5).empty());      // below min area
}

TEST_CASE("connected_components equals the oracle on every 4x4 mask") {
  for (std::uint32_t bits = 0; bits < (1u << 16); ++bits) {
    BinaryMask m(4, 4);
    for (int i = 0; i < 16; ++i) m.bits[i] = (bits >> i) & 1u;
    REQUIRE(as_set(connected_components(m, 1)) == oracle_components(m, 1));
  }
}

TEST_CASE("connected_components equals the oracle on random 32x32 masks") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    BinaryMask m(32, 32);
    const unsigned density = 2 + trial % 6;
    for (auto& b : m.bits) b = rng() % 10 < density;
    for (std::size_t min_area : {std::size_t{1}, kDefaultMinBlobArea}) {
      const auto blobs = connected_components(m, min_area);
      REQUIRE(as_set(blobs) == oracle_components(m, min_area));
      for (const auto& b : blobs) {
        double sx = 0, sy = 0;
        for (auto p : b.pixels) {
          sx += p % 32;
          sy += p / 32;
        }
        CHECK(b.centroid.x == doctest::Approx(sx / b.area()));
        CHECK(b.centroid.y == doctest::Approx(sy / b.area()));
      }
    }
  }
}

TEST_CASE("contour_in_contour_eval examples") {
  VectorLayer truth;
  std::vector<Point> preds;
  for (int i = 0; i < 10; ++i) {
    truth.features.push_back(square(i * 10, 0, i * 10 + 6, 6));
    preds.push_back({i * 10 + 3.0, 3.0});
  }
  CountMetrics m = contour_in_contour_eval(preds, truth);
  CHECK(m.tp_count == 10);
  CHECK(*m.pred_to_mask == 100.0);
  CHECK(*m.fp_rate == 0.0);
  CHECK(*m.tp_rate == 100.0);

  // 100 predictions, 40 inside polygons.
  std::vector<Point> hundred;
  for (int i = 0; i < 40; ++i) hundred.push_back({(i % 10) * 10 + 1.0 + (i / 10) * 1.0, 2.0});
  for (int i = 0; i < 60; ++i) hundred.push_back({500.0 + i, 500.0});
  m = contour_in_contour_eval(hundred, truth, MatchMode::loose);
  CHECK(m.tp_count == 40);
  CHECK(*m.fp_rate == 60.0);
  // Strict matching: each of the 10 squares absorbs only one of its 4 hits.
  m = contour_in_contour_eval(hundred, truth, MatchMode::strict);
  CHECK(m.tp_count == 10);
  CHECK(m.tp_count_loose == 40);
  CHECK(*m.fp_rate == 90.0);

  m = contour_in_contour_eval({}, truth);
  CHECK_FALSE(m.fp_rate.has_value());
  CHECK(*m.pred_to_mask == 0.0);
  m = contour_in_contour_eval(preds, VectorLayer{});
  CHECK_FALSE(m.pred_to_mask.has_value());
  CHECK_FALSE(m.tp_rate.has_value());
  CHECK(*m.fp_rate == 100.0);
}

TEST_CASE("contour_in_contour_eval matches a ray-casting oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    // 20 disjoint convex polygons, one per cell of a 5x4 lattice of 20-unit cells.
    VectorLayer truth;
    for (int k = 0; k < 20; ++k) {
      const double cx = (k % 5) * 20 + 10, cy = (k / 5) * 20 + 10;
      std::vector<double> ang(3 + rng() % 5);
      for (double& a : ang) a = u(rng) * 2 * std::numbers::pi;
      std::sort(ang.begin(), ang.end());
      Feature f{GeometryKind::polygon, {{}}, ""};
      for (double a : ang) {
        const double r = 3 + 6 * u(rng);
        f.rings[0].push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
      }
      try {
        raster::validate_feature(f);
      } catch (const raster::InvalidGeometry&) {
        continue;
      }
      truth.features.push_back(f);
    }
    std::vector<Point> preds(1 + rng() % 60);
    for (Point& p : preds) p = {u(rng) * 100, u(rng) * 80};

    std::size_t loose = 0;
    std::set<std::size_t> hit_polys;
    for (const Point& p : preds) {
      bool any = false;
      for (std::size_t j = 0; j < truth.features.size(); ++j)
        if (ray_cast(truth.features[j].rings[0], p)) {
          any = true;
          hit_polys.insert(j);
        }
      loose += any;
    }
    const CountMetrics ml = contour_in_contour_eval(preds, truth, MatchMode::loose);
    const CountMetrics ms = contour_in_contour_eval(preds, truth, MatchMode::strict);
    CHECK(ml.tp_count == loose);
    CHECK(ms.tp_count == hit_polys.size());  // disjoint polygons: one match per hit polygon
    CHECK(ms.truth == truth.features.size());
    for (const auto* m : {&ml, &ms}) {
      CHECK(*m->fp_rate >= 0.0);
      CHECK(*m->fp_rate <= 100.0);
      CHECK(*m->fp_rate + 100.0 * m->tp_count / m->predicted == doctest::Approx(100.0).epsilon(1e-12));
    }
  }
}

namespace {

// Scene of 16 buildings on a 64x64 pixel canvas (identity transform). Each
// building is a cone whose peak grows with its index, plus faint clutter, so
// blobs vanish one by one as the threshold rises.
struct Scene {
  raster::MaskRaster prob = canvas(64, 64);
  VectorLayer truth;
};

Scene make_scene() {
  Scene s;
  for (int k = 0; k < 16; ++k) {
    const double cx = (k % 4) * 16 + 8, cy = (k / 4) * 16 + 8;
    s.truth.features.push_back(square(cx - 5, cy - 5, cx + 5, cy + 5));
    const double peak = 8.0 + 2.0 * k;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        const double v = peak * std::max(0.0, 1.0 - d / 4.0);
        s.prob.at(x, y) = std::max(s.prob.at(x, y), static_cast<float>(v));
      }
  }
  // Clutter between buildings: 2x2 patches at intensity 6.
  for (int k = 0; k < 9; ++k) {
    const int x = (k % 3) * 16 + 15, y = (k / 3) * 16 + 15;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) s.prob.at(x + dx, y + dy) = 6.0f;
  }
  return s;
}

}  // namespace

TEST_CASE("threshold_sweep and selection") {
  const Scene s = make_scene();
  const std::vector<double> ts{1, 3, 5, 8, 10, 15, 20, 25, 30};
  const auto sweep = threshold_sweep(s.prob, s.truth, ts);
  REQUIRE(sweep.size() == ts.size());
  for (std::size_t i = 0; i < sweep.size(); ++i) CHECK(sweep[i].threshold == ts[i]);
  CHECK(*sweep.front().pred_to_mask > 100.0);  // clutter counted
  for (std::size_t i = 1; i < sweep.size(); ++i)
    CHECK(*sweep[i].pred_to_mask <= *sweep[i - 1].pred_to_mask);
  CHECK(*sweep.back().pred_to_mask < *sweep.front().pred_to_mask);

  // Exhaustive argmin oracle.
  double best = HUGE_VAL;
  for (const auto& m : sweep) best = std::min(best, std::abs(*m.pred_to_mask - 100.0));
  const std::size_t pick = select_threshold(sweep);
  CHECK(std::abs(*sweep[pick].pred_to_mask - 100.0) == best);
  for (std::size_t i = 0; i < pick; ++i)
    if (std::abs(*sweep[i].pred_to_mask - 100.0) == best)
      CHECK(sweep[i].tp_count < sweep[pick].tp_count);

  CHECK(select_threshold({sweep[3]}) == 0);
  CHECK_THROWS_AS(select_threshold({}), std::invalid_argument);
  CHECK_THROWS_AS(threshold_sweep(s.prob, s.truth, {10, 5}), std::invalid_argument);

  // An unreachable constraint falls back to the unconstrained choice.
  SelectionRule impossible;
  impossible.min_tp_rate = 101.0;
  CHECK(select_threshold(sweep, impossible) == pick);
  // A constraint can move the choice.
  SelectionRule strict_fp;
  strict_fp.max_fp_rate = 0.0;
  const std::size_t c = select_threshold(sweep, strict_fp);
  CHECK(*sweep[c].fp_rate == 0.0);
}

TEST_CASE("select_threshold tie-breaks") {
  CountMetrics a, b, c;
  a.threshold = 5;
  a.pred_to_mask = 110;
  a.tp_count = 3;
  b.threshold = 10;
  b.pred_to_mask = 90;
  b.tp_count = 4;
  c.threshold = 15;
  c.pred_to_mask = 90;
  c.tp_count = 4;
  CHECK(select_threshold({a, b, c}) == 1);
  CountMetrics u1, u2;
  u1.threshold = 7;
  u2.threshold = 3;
  CHECK(select_threshold({u1, u2}) == 1);
  CHECK(select_threshold({u1, a}) == 1);
}

TEST_CASE("ensemble_combine") {
  raster::MaskRaster a = canvas(6, 5), b = canvas(6, 5), c = canvas(6, 5);
  std::mt19937_64 rng(4);
  for (auto* m : {&a, &b, &c})
    for (float& v : m->values) v = static_cast<float>(rng() % 2560) / 10.0f;
  const std::vector<raster::MaskRaster> same{a, a, a};
  CHECK(ensemble_combine(same).values == a.values);

  raster::MaskRaster zero = canvas(6, 5), full = canvas(6, 5);
  std::fill(full.values.begin(), full.values.end(), 255.0f);
  for (float v : ensemble_combine(std::vector{zero, full}).values) CHECK(v == 127.5f);

  const auto abc = ensemble_combine(std::vector{a, b, c}).values;
  CHECK(ensemble_combine(std::vector{c, a, b}).values == abc);
  CHECK(ensemble_combine(std::vector{b, c, a}).values == abc);

  CHECK_THROWS_AS(ensemble_combine(std::vector{a, canvas(5, 6)}), std::invalid_argument);
  CHECK_THROWS_AS(ensemble_combine(std::span<const raster::MaskRaster>{}), std::invalid_argument);
}

TEST_CASE("ensemble of noisy predictions beats the median member") {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution flip(0.2);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    raster::MaskRaster truth = canvas(32, 32);
    for (int k = 0; k < 4; ++k) {
      const int x0 = static_cast<int>(rng() % 24), y0 = static_cast<int>(rng() % 24);
      for (int y = y0; y < y0 + 8; ++y)
        for (int x = x0; x < x0 + 8; ++x) truth.at(x, y) = 255.0f;
    }
    const auto truth_bits = threshold_mask(truth, 127).bits;
    std::vector<raster::MaskRaster> members;
    std::vector<double> scores;
    for (int k = 0; k < 3; ++k) {
      raster::MaskRaster noisy = truth;
      for (float& v : noisy.values)
        if (flip(rng)) v = 255.0f - v;
      scores.push_back(metrics::jaccard(threshold_mask(noisy, 127).bits, truth_bits));
      members.push_back(std::move(noisy));
    }
    std::sort(scores.begin(), scores.end());
    const double ens = metrics::jaccard(threshold_mask(ensemble_combine(members), 127).bits, truth_bits);
    wins += ens >= scores[1];
  }
  CHECK(wins == 100);
}

TEST_CASE("skeletonize examples") {
  BinaryMask bar(20, 5);
  for (int y = 1; y <= 3; ++y)
    for (int x = 2; x < 18; ++x) bar.at(x, y) = 1;
  const BinaryMask sb = skeletonize(bar);
  CHECK(component_count(sb) == 1);
  for (int x = 0; x < 20; ++x) {
    int col = 0;
    for (int y = 0; y < 5; ++y) col += sb.at(x, y);
    CHECK(col <= 1);
  }
  CHECK(sb.count() >= 12);

  const BinaryMask line = from_rows({"..........", ".########.", ".........."});
  CHECK(skeletonize(line) == line);
  const BinaryMask diag = from_rows({"#....", ".#...", "..#..", "...#.", "....#"});
  CHECK(skeletonize(diag) == diag);

  // 2x2 block: plain parallel Zhang-Suen deletes it entirely.
  const BinaryMask block = from_rows({"....", ".##.", ".##.", "...."});
  const BinaryMask sblock = skeletonize(block);
  CHECK(sblock.count() >= 1);
  CHECK(component_count(sblock) == 1);

  const BinaryMask thin_plus = from_rows({
      "...#...", "...#...", "...#...", "#######", "...#...", "...#...", "...#...",
  });
  CHECK(skeletonize(thin_plus) == thin_plus);

  // Thick plus: 3-px arms on a 15x15 canvas.
  BinaryMask plus(15, 15);
  for (int y = 1; y < 14; ++y)
    for (int x = 1; x < 14; ++x)
      if (std::abs(x - 7) <= 1 || std::abs(y - 7) <= 1) plus.at(x, y) = 1;
  for (const BinaryMask& sp : {skeletonize(plus), thin_plus}) {
    const int c = sp.width / 2;
    CHECK(component_count(sp) == 1);
    auto degree = [&](int x, int y) {
      int d = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) d += (dx || dy) && sp.get(x + dx, y + dy);
      return d;
    };
    auto rook_degree = [&](int x, int y) {
      return sp.get(x + 1, y) + sp.get(x - 1, y) + sp.get(x, y + 1) + sp.get(x, y - 1);
    };
    int endpoints = 0, rook_junctions = 0;
    for (int y = 0; y < sp.height; ++y)
      for (int x = 0; x < sp.width; ++x) {
        if (!sp.at(x, y)) continue;
        const int d = degree(x, y);
        endpoints += d == 1;
        rook_junctions += rook_degree(x, y) == 4;
        if (d >= 3) {  // branching only inside the center neighborhood
          CHECK(std::abs(x - c) <= 1);
          CHECK(std::abs(y - c) <= 1);
        }
      }
    CHECK(endpoints == 4);
    CHECK(rook_junctions == 1);
    CHECK(sp.at(c, c) == 1);
    CHECK(degree(c, c) == 4);
  }
}

TEST_CASE("skeletonize properties on random masks") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    BinaryMask m(24, 24);
    // Random union of rectangles gives thick structures.
    for (int k = 0; k < 1 + static_cast<int>(rng() % 6); ++k) {
      const int x0 = rng() % 20, y0 = rng() % 20, w = 1 + rng() % 10, h = 1 + rng() % 10;
      for (int y = y0; y < std::min(24, y0 + h); ++y)
        for (int x = x0; x < std::min(24, x0 + w); ++x) m.at(x, y) = 1;
    }
    if (trial % 3 == 0)
      for (auto& b : m.bits) b = b || rng() % 12 == 0;
    const BinaryMask s = skeletonize(m);
    for (std::size_t i = 0; i < m.bits.size(); ++i) REQUIRE(s.bits[i] <= m.bits[i]);
    REQUIRE(component_count(s) == component_count(m));
    REQUIRE(skeletonize(s) == s);
  }
}

TEST_CASE("road_length") {
  BinaryMask straight(120, 3);
  for (int x = 0; x < 100; ++x) straight.at(x, 1) = 1;
  CHECK(road_length(straight, 1.0) == doctest::Approx(99.0).epsilon(1e-12));
  CHECK(road_length(straight, 2.5) == doctest::Approx(247.5).epsilon(1e-12));
  CHECK(road_length(BinaryMask(10, 10), 1.0) == 0.0);

  BinaryMask d(50, 50);
  for (int i = 0; i < 50; ++i) d.at(i, i) = 1;
  CHECK(road_length(d, 1.0) == doctest::Approx(49.0 * std::sqrt(2.0)).epsilon(1e-12));
  BinaryMask anti(50, 50);
  for (int i = 0; i < 50; ++i) anti.at(49 - i, i) = 1;
  CHECK(road_length(anti, 1.0) == doctest::Approx(49.0 * std::sqrt(2.0)).epsilon(1e-12));

  // L corner: two rook steps, the diagonal shortcut is not added.
  CHECK(road_length(from_rows({"##", ".#"}), 1.0) == 2.0);
  CHECK_THROWS_AS(road_length(d, 0.0), std::invalid_argument);
}
