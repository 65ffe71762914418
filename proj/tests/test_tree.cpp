#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "streamad/tree.hpp"

using namespace streamad;

namespace {

// Two features; the root splits F1 at 5 and both children split F2 at 5.
// Leaves in order: (F1<5,F2<5), (F1<5,F2>=5), (F1>=5,F2<5), (F1>=5,F2>=5).
HalfSpaceTree quadrant_tree() { return HalfSpaceTree(2, {0, 1, 1}, {5.0, 5.0, 5.0}); }

std::vector<Sample> quadrant_stream() {
  return fixtures::make_stream({{2, 7},
                                {7, 2},
                                {6, 6},
                                {7, 8},
                                {8, 7},
                                {6.5, 7.5},
                                {2, 2},
                                {3, 8},
                                {8, 3},
                                {7, 7},
                                {1, 6},
                                {9, 1}});
}

// Structural invariants of a cut tree checked against its children.
void check_tree(const RandomCutTree& t) {
  if (t.root() < 0) {
    EXPECT_EQ(t.leaf_count(), 0u);
    return;
  }
  std::size_t leaves = 0;
  std::function<void(int)> walk = [&](int v) {
    const auto& n = t.node(v);
    if (n.leaf()) {
      ++leaves;
      ASSERT_EQ(n.lo, n.hi);
      ASSERT_GE(n.n, 1u);
      return;
    }
    const auto& l = t.node(n.left);
    const auto& r = t.node(n.right);
    ASSERT_EQ(l.parent, v);
    ASSERT_EQ(r.parent, v);
    ASSERT_EQ(n.n, l.n + r.n);
    for (std::size_t j = 0; j < n.lo.size(); ++j) {
      ASSERT_EQ(n.lo[j], std::min(l.lo[j], r.lo[j]));
      ASSERT_EQ(n.hi[j], std::max(l.hi[j], r.hi[j]));
    }
    ASSERT_LE(l.hi[n.cut_dim], n.cut);
    ASSERT_GT(r.lo[n.cut_dim], n.cut);
    walk(n.left);
    walk(n.right);
  };
  walk(t.root());
  EXPECT_EQ(leaves, t.leaf_count());
}

}  // namespace

TEST(HstWorkRange, Examples) {
  auto [lo, hi] = hst_work_range(0.0, 10.0, 3.0);
  EXPECT_DOUBLE_EQ(lo, -11.0);
  EXPECT_DOUBLE_EQ(hi, 17.0);
  EXPECT_THROW(hst_work_range(1.0, 0.0, 0.5), std::invalid_argument);
}

TEST(HstWorkRange, ContainsObservedRangeAndMatchesUnitForm) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double a = uniform_real(rng, -10, 10), b = a + uniform_real(rng, 0, 10);
    const double v = uniform_real(rng, a, b);
    auto [lo, hi] = hst_work_range(a, b, v);
    ASSERT_LE(lo, a);
    ASSERT_GE(hi, b);
    ASSERT_NEAR((lo + hi) / 2, v, 1e-12);
    const double u = uniform_real(rng, 0, 1);
    auto x = hst_work_range(0.0, 1.0, u);
    auto y = hst_work_range_unit(u);
    ASSERT_DOUBLE_EQ(x.first, y.first);
    ASSERT_DOUBLE_EQ(x.second, y.second);
  }
}

TEST(HalfSpaceTrees, QuadrantFixtureMassesAndRanking) {
  auto stream = quadrant_stream();
  HalfSpaceTrees det({.trees = 1, .depth = 2}, {quadrant_tree()});
  det.train(std::span<const Sample>(stream).first(6));
  const auto& masses = det.trees()[0].masses();
  EXPECT_EQ(masses, (std::vector<std::size_t>{0, 1, 1, 4}));
  EXPECT_EQ(det.trees()[0].total_mass(), 6u);

  auto wins = window_iterator(stream.size(), {6, 6});
  auto scores = det.process_slide(make_step(stream, wins[1]));
  ASSERT_EQ(scores.size(), 6u);
  // p7 .. p12
  EXPECT_DOUBLE_EQ(scores[0], 0.0);
  EXPECT_DOUBLE_EQ(scores[3], 16.0);
  for (int i : {1, 2, 4, 5}) EXPECT_DOUBLE_EQ(scores[static_cast<std::size_t>(i)], 4.0);
  // Lowest mass is the most anomalous.
  auto norm = normalize_scores(scores, det.orientation());
  EXPECT_EQ(std::max_element(norm.begin(), norm.end()) - norm.begin(), 0);
  EXPECT_EQ(std::min_element(norm.begin(), norm.end()) - norm.begin(), 3);
  // Arrivals are merged after scoring.
  EXPECT_EQ(det.trees()[0].total_mass(), 12u);
}

TEST(HalfSpaceTrees, SeededStructureIsReproducible) {
  Rng rng(11);
  auto data = oracle::random_stream(rng, 200, 4);
  HalfSpaceTrees a({.trees = 5, .depth = 6, .seed = 42}), b({.trees = 5, .depth = 6, .seed = 42}),
      c({.trees = 5, .depth = 6, .seed = 43});
  a.train(data);
  b.train(data);
  c.train(data);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(a.trees()[t].structure_hash(), b.trees()[t].structure_hash());
  bool differs = false;
  for (std::size_t t = 0; t < 5; ++t) differs |= a.trees()[t].structure_hash() != c.trees()[t].structure_hash();
  EXPECT_TRUE(differs);
}

TEST(HalfSpaceTrees, MassConservationWithoutForgetting) {
  Rng rng(5);
  auto data = oracle::random_stream(rng, 400, 3);
  HalfSpaceTrees det({.trees = 4, .depth = 5, .seed = 1});
  std::span<const Sample> all(data);
  det.train(all.first(100));
  auto wins = window_iterator(data.size(), {50, 25});
  std::size_t inserted = 100;
  bool first = true;
  for (const auto& w : wins) {
    if (w.begin < 100) continue;
    auto step = first ? fresh_step(all, w) : make_step(all, w);
    first = false;
    auto scores = det.process_slide(step);
    ASSERT_EQ(scores.size(), step.window.size());
    inserted += step.arrived.size();
    for (const auto& t : det.trees()) ASSERT_EQ(t.total_mass(), inserted);
  }
}

TEST(HalfSpaceTrees, ForgettingKeepsMassAtThreshold) {
  Rng rng(9);
  auto data = oracle::random_stream(rng, 500, 3);
  for (std::size_t f : {10u, 37u, 64u, 200u}) {
    HalfSpaceTrees det({.trees = 3, .depth = 4, .forget_threshold = f, .seed = 2});
    std::span<const Sample> all(data);
    det.train(all.first(100));
    for (const auto& t : det.trees()) ASSERT_EQ(t.total_mass(), std::min<std::size_t>(100, f));
    auto wins = window_iterator(data.size(), {64, 32});
    bool first = true;
    std::size_t inserted = 100;
    for (const auto& w : wins) {
      if (w.begin < 100) continue;
      auto step = first ? fresh_step(all, w) : make_step(all, w);
      det.process_slide(step);
      first = false;
      inserted += step.arrived.size();
      for (const auto& t : det.trees()) ASSERT_EQ(t.total_mass(), std::min(inserted, f));
    }
  }
}

TEST(HalfSpaceTrees, ForgettingPrefersStaleLeaves) {
  HalfSpaceTree t = quadrant_tree();
  t.add(0, 0);
  t.add(0, 0);
  t.add(1, 1);
  t.add(3, 2);
  t.add(3, 2);
  t.forget(2, 2);
  EXPECT_EQ(t.masses(), (std::vector<std::size_t>{1, 0, 0, 2}));
  t.forget(2, 2);
  EXPECT_EQ(t.masses(), (std::vector<std::size_t>{0, 0, 0, 1}));
}

TEST(HalfSpaceTrees, RejectsBadParameters) {
  EXPECT_THROW(HalfSpaceTrees({.trees = 0}), std::invalid_argument);
  EXPECT_THROW(HalfSpaceTrees({.depth = 0}), std::invalid_argument);
  EXPECT_THROW(HalfSpaceTrees({.forget_threshold = 0}), std::invalid_argument);
  HalfSpaceTrees det({});
  EXPECT_THROW(det.train({}), std::invalid_argument);
}

TEST(CoDisp, PathMaximum) {
  std::vector<std::pair<double, double>> path{{1, 3}, {4, 1}, {5, 5}};
  EXPECT_DOUBLE_EQ(codisp_from_path(path), 3.0);
  EXPECT_DOUBLE_EQ(codisp_from_path({}), 0.0);
}

TEST(RandomCutTree, SingleLeafHasZeroCoDisp) {
  RandomCutTree t;
  Rng rng(1);
  std::vector<double> x{1, 2};
  const int leaf = t.insert(0, x, rng);
  EXPECT_EQ(t.root(), leaf);
  EXPECT_DOUBLE_EQ(t.codisp(leaf), 0.0);
}

TEST(RandomCutTree, TwoPointsCoDispIsOne) {
  RandomCutTree t;
  Rng rng(1);
  t.insert(0, std::vector<double>{0, 0}, rng);
  const int leaf = t.insert(1, std::vector<double>{1, 1}, rng);
  EXPECT_DOUBLE_EQ(t.codisp(leaf), 1.0);
  check_tree(t);
}

TEST(RandomCutTree, DuplicatesBecomeReplicas) {
  RandomCutTree t;
  Rng rng(4);
  t.insert(0, std::vector<double>{0, 0}, rng);
  t.insert(1, std::vector<double>{3, 1}, rng);
  const int a = t.insert(2, std::vector<double>{3, 1}, rng);
  EXPECT_EQ(a, t.leaf_for(1));
  EXPECT_EQ(t.leaf_count(), 2u);
  EXPECT_EQ(t.point_count(), 3u);
  EXPECT_EQ(t.node(a).n, 2u);
  check_tree(t);
  t.forget(1);
  EXPECT_EQ(t.leaf_count(), 2u);
  EXPECT_EQ(t.point_count(), 2u);
  t.forget(2);
  EXPECT_EQ(t.leaf_count(), 1u);
  check_tree(t);
}

TEST(RandomCutTree, ForgetThresholdOneKeepsNewest) {
  RandomCutTree t;
  Rng rng(2);
  t.insert(0, std::vector<double>{0, 0}, rng);
  t.insert(1, std::vector<double>{5, 5}, rng);
  while (t.leaf_count() > 1) t.forget_oldest();
  ASSERT_EQ(t.leaf_count(), 1u);
  EXPECT_EQ(t.node(t.root()).lo, (std::vector<double>{5, 5}));
}

// Random insert/forget sequences keep sizes, boxes and cuts consistent, and
// the leaf set always equals the set of live points.
TEST(RandomCutTree, RandomisedConsistency) {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    RandomCutTree t;
    std::vector<std::pair<std::size_t, std::vector<double>>> live;
    std::size_t id = 0;
    for (int op = 0; op < 300; ++op) {
      if (live.empty() || uniform_real(rng, 0, 1) < 0.6) {
        std::vector<double> x(3);
        for (auto& v : x) v = std::round(uniform_real(rng, 0, 6));  // coarse grid forces duplicates
        t.insert(id, x, rng);
        live.push_back({id++, x});
      } else {
        const std::size_t k = uniform_index(rng, 0, live.size() - 1);
        t.forget(live[k].first);
        live.erase(live.begin() + static_cast<long>(k));
      }
    }
    check_tree(t);
    EXPECT_EQ(t.point_count(), live.size());
    std::set<std::vector<double>> distinct;
    for (auto& [_, x] : live) distinct.insert(x);
    EXPECT_EQ(t.leaf_count(), distinct.size());
    std::set<std::vector<double>> in_tree;
    for (int leaf : t.leaves()) in_tree.insert(t.node(leaf).lo);
    EXPECT_EQ(in_tree, distinct);
    for (auto& [pid, _] : live) {
      const int leaf = t.leaf_for(pid);
      EXPECT_LE(t.leaf_disp(leaf), t.codisp(leaf));
    }
  }
}

TEST(Rrcf, ForgettingBoundsLeafCount) {
  Rng rng(21);
  auto data = oracle::random_stream(rng, 300, 2);
  Rrcf det({.trees = 4, .max_samples = 32, .forget_threshold = 40, .window_size = 50, .seed = 3});
  std::span<const Sample> all(data);
  det.train(all.first(100));
  auto wins = window_iterator(data.size(), {50, 25});
  bool first = true;
  for (const auto& w : wins) {
    if (w.begin < 100) continue;
    auto step = first ? fresh_step(all, w) : make_step(all, w);
    first = false;
    auto s = det.process_slide(step);
    ASSERT_EQ(s.size(), step.window.size());
    for (double v : s) ASSERT_GE(v, 0.0);
    for (const auto& t : det.trees()) {
      ASSERT_LE(t.leaf_count(), 40u);
      check_tree(t);
    }
  }
}

TEST(Rrcf, IsolatedPointScoresHighest) {
  Rng rng(8);
  std::vector<std::vector<double>> pts;
  std::normal_distribution<double> g(0, 0.3);
  for (int i = 0; i < 120; ++i) pts.push_back({g(rng), g(rng)});
  pts[110] = {8.0, 8.0};
  auto data = fixtures::make_stream(pts, {110});
  std::span<const Sample> all(data);
  Rrcf det({.trees = 30, .max_samples = 64, .forget_threshold = 64, .window_size = 20, .seed = 5});
  det.train(all.first(60));
  auto wins = window_iterator(data.size(), {20, 20});
  std::vector<double> last;
  for (const auto& w : wins)
    if (w.begin >= 100) last = det.process_slide(w.begin == 100 ? fresh_step(all, w) : make_step(all, w));
  ASSERT_EQ(last.size(), 20u);
  EXPECT_EQ(std::max_element(last.begin(), last.end()) - last.begin(), 10);
}

TEST(Rrcf, SeedReproducible) {
  Rng rng(12);
  auto data = oracle::random_stream(rng, 200, 3);
  std::span<const Sample> all(data);
  auto run = [&](std::uint64_t seed) {
    Rrcf det({.trees = 5, .max_samples = 32, .forget_threshold = 32, .window_size = 40, .seed = seed});
    det.train(all.first(80));
    auto wins = window_iterator(data.size(), {40, 40});
    std::vector<double> out;
    for (const auto& w : wins)
      if (w.begin >= 80)
        for (double v : det.process_slide(fresh_step(all, w))) out.push_back(v);
    return out;
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(1), run(2));
}
