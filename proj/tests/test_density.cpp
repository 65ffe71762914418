#include <gtest/gtest.h>

#include <map>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "streamad/density.hpp"

using namespace streamad;

namespace {

std::vector<std::size_t> ranking_pnums(const std::vector<double>& scores, std::span<const Sample> window) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> out;
  for (std::size_t i : order) out.push_back(fixtures::pnum(window[i]));
  return out;
}

// Full recomputation of the grid density score, written independently.
std::vector<double> stare_oracle(std::span<const Sample> w, double radius, std::size_t k) {
  const std::size_t d = w.front().features.size();
  const double h = radius / std::sqrt(static_cast<double>(d));
  std::map<std::vector<long>, std::pair<std::vector<double>, double>> cells;
  for (const auto& s : w) {
    std::vector<long> id;
    for (double v : s.features) id.push_back(static_cast<long>(std::floor(v / h)));
    auto& c = cells[id];
    if (c.first.empty()) c.first.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) c.first[j] += s.features[j];
    c.second += 1;
  }
  std::vector<std::vector<double>> centres;
  std::vector<double> weights;
  for (auto& [_, c] : cells) {
    for (auto& v : c.first) v /= c.second;
    centres.push_back(c.first);
    weights.push_back(c.second);
  }
  auto near = [&](const std::vector<double>& x) {
    std::vector<std::pair<double, std::size_t>> ds;
    for (std::size_t i = 0; i < centres.size(); ++i) ds.push_back({oracle::dist(x, centres[i]), i});
    std::sort(ds.begin(), ds.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, ds.size()); ++i) out.push_back(ds[i].second);
    return out;
  };
  auto density = [&](const std::vector<double>& x) {
    auto nn = near(x);
    double tw = 0, acc = 0;
    for (auto i : nn) tw += weights[i];
    for (auto i : nn) {
      double prod = 1;
      for (std::size_t j = 0; j < d; ++j) {
        const double u = x[j] - centres[i][j];
        prod *= std::exp(-u * u / (2 * h * h)) / (h * std::sqrt(2 * M_PI));
      }
      acc += weights[i] / tw * prod;
    }
    return acc;
  };
  std::vector<double> out;
  for (const auto& s : w) {
    auto nn = near(s.features);
    std::vector<double> cd;
    for (auto i : nn) cd.push_back(density(centres[i]));
    double mu = std::accumulate(cd.begin(), cd.end(), 0.0) / static_cast<double>(cd.size());
    double var = 0;
    for (double v : cd) var += (v - mu) * (v - mu);
    const double sd = std::sqrt(var / static_cast<double>(cd.size()));
    out.push_back(sd > 0 ? (mu - density(s.features)) / sd : 0.0);
  }
  return out;
}

std::vector<Sample> quadrant_training() { return fixtures::make_stream({{2, 7}, {6, 6}, {8, 7}, {6.5, 7.5}}); }

}  // namespace

TEST(RsHash, DimensionWithinBounds) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double s = static_cast<double>(2 + uniform_index(rng, 0, 5000));
    const double root = std::sqrt(s);
    double lo = 1 / root, hi = 1 - 1 / root;
    if (lo > hi) std::swap(lo, hi);
    const double f = uniform_real(rng, lo, hi);
    const std::size_t d = 1 + uniform_index(rng, 0, 50);
    const std::size_t r = rshash_dimension(f, s, d, rng);
    ASSERT_GE(r, 1u);
    ASSERT_LE(r, d);
  }
}

// Four training points, one repetition, two tables of three buckets.
TEST(RsHash, BucketFixture) {
  auto train = quadrant_training();
  RsHash det({.subsample = 4, .tables = 2, .repetitions = 1, .width = 3, .seed = 19});
  det.train(train);
  const auto& rep = det.repetitions()[0];
  ASSERT_EQ(rep.features.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.locality, 0.5);
  std::vector<std::vector<int>> occ(2, std::vector<int>(3, 0));
  for (const auto& s : train) {
    const auto h = det.key_hash(rep, s.features);
    for (std::size_t r = 0; r < 2; ++r) occ[r][rep.sketch->bucket(r, h)]++;
  }
  for (auto& v : occ) std::sort(v.rbegin(), v.rend());
  EXPECT_EQ(occ[0], (std::vector<int>{3, 1, 0}));
  EXPECT_EQ(occ[1], (std::vector<int>{2, 1, 1}));

  // p7 lands in an empty bucket of the first table: score 0.
  auto stream = fixtures::make_stream({{2, 7}, {6, 6}, {8, 7}, {6.5, 7.5}, {2, 2}});
  std::span<const Sample> all(stream);
  SlideStep step;
  step.window = all.subspan(4, 1);
  step.arrived = step.window;
  auto s = det.process_slide(step);
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_EQ(det.count(rep, stream[4].features), 1u);
}

TEST(RsHash, ScoreThenInsertGrowsForRepeats) {
  auto train = quadrant_training();
  RsHash det({.subsample = 4, .tables = 3, .repetitions = 5, .seed = 2});
  det.train(train);
  auto stream = fixtures::make_stream({{0, 0}, {5, 5}, {5, 5}});
  std::span<const Sample> all(stream);
  SlideStep step;
  step.window = all.subspan(1, 2);
  step.arrived = step.window;
  auto s = det.process_slide(step);
  EXPECT_GT(s[1], s[0]);
}

TEST(RsHash, WholeTrainingSetWhenSubsampleCoversIt) {
  Rng rng(3);
  auto data = oracle::random_stream(rng, 60, 3);
  RsHash det({.subsample = 500, .tables = 2, .repetitions = 4, .exact = true, .seed = 4});
  det.train(data);
  for (const auto& rep : det.repetitions()) {
    std::uint32_t total = 0;
    for (auto [_, c] : rep.exact) total += c;
    EXPECT_EQ(total, 60u);
  }
}

// Exact counting against a brute-force multiset of grid keys; the sketch
// version never reports less than the exact count.
TEST(RsHash, ExactCountsMatchOracleAndSketchNeverUndercounts) {
  Rng rng(5);
  auto data = oracle::random_stream(rng, 256, 3);
  std::span<const Sample> all(data);
  for (bool exact : {true, false}) {
    RsHash det({.subsample = 64, .tables = 3, .repetitions = 6, .width = 32, .exact = exact, .seed = 6});
    det.train(all.first(64));
    std::vector<std::vector<std::vector<std::int64_t>>> live(det.repetitions().size());
    for (std::size_t r = 0; r < live.size(); ++r)
      for (const auto& s : all.first(64)) live[r].push_back(det.grid_key(det.repetitions()[r], s.features));
    auto wins = window_iterator(data.size(), {32, 32});
    for (const auto& w : wins) {
      if (w.begin < 64) continue;
      auto step = make_step(all, w);
      step.expired = {};
      auto scores = det.process_slide(step);
      for (std::size_t i = 0; i < step.window.size(); ++i) {
        const auto& x = step.window[i].features;
        double expect = 0;
        for (std::size_t r = 0; r < live.size(); ++r) {
          const auto key = det.grid_key(det.repetitions()[r], x);
          const auto c = static_cast<double>(std::count(live[r].begin(), live[r].end(), key));
          expect += std::log2(c + 1);
          live[r].push_back(key);
        }
        expect /= static_cast<double>(live.size());
        if (exact) {
          ASSERT_NEAR(scores[i], expect, 1e-12);
        } else {
          ASSERT_GE(scores[i], expect - 1e-12);
        }
        ASSERT_GE(scores[i], 0.0);
      }
    }
  }
}

TEST(RsHash, ExpiryRestoresCounts) {
  Rng rng(7);
  auto data = oracle::random_stream(rng, 120, 2);
  std::span<const Sample> all(data);
  RsHash det({.subsample = 40, .tables = 2, .repetitions = 3, .exact = true, .seed = 8});
  det.train(all.first(40));
  auto base = det.repetitions();
  auto wins = window_iterator(data.size(), {20, 20});
  bool first = true;
  for (const auto& w : wins) {
    if (w.begin < 40) continue;
    det.process_slide(first ? fresh_step(all, w) : make_step(all, w));
    first = false;
  }
  // Only the last window remains on top of the training counts.
  for (std::size_t r = 0; r < base.size(); ++r) {
    std::uint32_t a = 0, b = 0;
    for (auto [_, c] : base[r].exact) a += c;
    for (auto [_, c] : det.repetitions()[r].exact) b += c;
    EXPECT_EQ(b, a + 20);
  }
}

TEST(Stare, FixtureRankingsAndSkipping) {
  auto stream = fixtures::stare_points();
  std::span<const Sample> all(stream);
  auto wins = window_iterator(stream.size(), fixtures::kSpec);
  Stare det({.radius = 2.0, .neighbors = 2, .gamma = 0.5, .top_n = 2});
  auto s1 = det.process_slide(fresh_step(all, wins[0]));
  auto step1 = make_step(all, wins[0]);
  EXPECT_EQ(ranking_pnums(s1, step1.window), (std::vector<std::size_t>{4, 5, 7, 6, 2, 1, 3}));
  EXPECT_EQ(det.top(), (std::vector<std::size_t>{3, 4}));

  auto step2 = make_step(all, wins[1]);
  auto s2 = det.process_slide(step2);
  EXPECT_EQ(ranking_pnums(s2, step2.window), (std::vector<std::size_t>{6, 10, 12, 7, 8, 9, 11}));
  EXPECT_FALSE(det.recomputed().count(5));  // p6
  EXPECT_FALSE(det.recomputed().count(6));  // p7
  EXPECT_TRUE(det.recomputed().count(7));

  // Without skipping, both are recomputed and the ranking follows the oracle.
  Stare exact({.radius = 2.0, .neighbors = 2, .gamma = 0.0});
  exact.process_slide(fresh_step(all, wins[0]));
  auto e2 = exact.process_slide(step2);
  EXPECT_TRUE(exact.recomputed().count(5));
  EXPECT_TRUE(exact.recomputed().count(6));
  auto o2 = stare_oracle(step2.window, 2.0, 2);
  for (std::size_t i = 0; i < e2.size(); ++i) EXPECT_NEAR(e2[i], o2[i], 1e-9);
}

TEST(Stare, ZeroGammaMatchesFullRecomputation) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto data = oracle::random_stream(rng, 200, 2 + static_cast<std::size_t>(trial % 3));
    std::span<const Sample> all(data);
    const double radius = uniform_real(rng, 0.5, 3.0);
    const std::size_t k = 1 + uniform_index(rng, 0, 5);
    Stare det({.radius = radius, .neighbors = k, .gamma = 0.0});
    auto wins = window_iterator(data.size(), {40, 15});
    bool first = true;
    for (const auto& w : wins) {
      auto step = first ? fresh_step(all, w) : make_step(all, w);
      first = false;
      auto s = det.process_slide(step);
      auto o = stare_oracle(step.window, radius, k);
      for (std::size_t i = 0; i < s.size(); ++i) ASSERT_NEAR(s[i], o[i], 1e-9 * std::max(1.0, std::abs(o[i])));
      std::size_t total = 0;
      for (const auto& [_, c] : det.cells()) total += c.weight;
      ASSERT_EQ(total, step.window.size());
    }
  }
}

TEST(Stare, ZeroGammaIgnoresArrivalOrder) {
  Rng rng(10);
  auto data = oracle::random_stream(rng, 60, 2);
  auto shuffled = data;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  Stare a({.radius = 1.5, .neighbors = 3, .gamma = 0.0}), b({.radius = 1.5, .neighbors = 3, .gamma = 0.0});
  std::span<const Sample> sa(data), sb(shuffled);
  auto w = window_iterator(60, {60, 60})[0];
  auto x = a.process_slide(fresh_step(sa, w));
  auto y = b.process_slide(fresh_step(sb, w));
  std::map<std::size_t, double> mx, my;
  for (std::size_t i = 0; i < 60; ++i) mx[data[i].ordinal] = x[i], my[shuffled[i].ordinal] = y[i];
  for (auto [k, v] : mx) EXPECT_NEAR(v, my[k], 1e-12);
}

TEST(Stare, SingleCellGivesZeroScores) {
  auto data = fixtures::make_stream({{0.1, 0.1}, {0.2, 0.15}, {0.12, 0.3}});
  std::span<const Sample> all(data);
  Stare det({.radius = 10.0, .neighbors = 3});
  auto s = det.process_slide(fresh_step(all, window_iterator(3, {3, 3})[0]));
  for (double v : s) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Stare, RejectsBadParameters) {
  EXPECT_THROW(Stare({.radius = 0.0}), std::invalid_argument);
  EXPECT_THROW(Stare({.neighbors = 0}), std::invalid_argument);
  EXPECT_THROW(Stare({.gamma = 1.5}), std::invalid_argument);
  EXPECT_THROW(RsHash({.tables = 0}), std::invalid_argument);
}
