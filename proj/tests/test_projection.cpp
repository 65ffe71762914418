#include <gtest/gtest.h>

#include <map>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "streamad/projection.hpp"

using namespace streamad;

namespace {

// Reference histogram: keeps every bin as an explicit multiset and applies
// the same nearest-pair merge; used to cross-check sums and bounds.
struct HistogramOracle {
  std::size_t cap;
  std::vector<std::pair<double, double>> bins;
  void insert(double z) {
    bool found = false;
    for (auto& [bz, m] : bins)
      if (bz == z) m += 1, found = true;
    if (!found) bins.push_back({z, 1});
    std::sort(bins.begin(), bins.end());
    while (bins.size() > cap) {
      std::size_t best = 0;
      for (std::size_t i = 1; i + 1 < bins.size(); ++i)
        if (bins[i + 1].first - bins[i].first < bins[best + 1].first - bins[best].first) best = i;
      const double m = bins[best].second + bins[best + 1].second;
      bins[best] = {(bins[best].first * bins[best].second + bins[best + 1].first * bins[best + 1].second) / m, m};
      bins.erase(bins.begin() + static_cast<long>(best) + 1);
    }
  }
};

std::vector<Sample> window_points() {
  return fixtures::make_stream(
      {{2, 1}, {2.4, 1.2}, {3.2, 1.3}, {3.4, 2}, {4, 1.4}, {4.2, 2}, {0, 3}, {1, 3.5}, {3, 1.5}, {3.5, 1.6}, {4, 1.2}, {2.2, 1.1}});
}

}  // namespace

TEST(CountMinSketch, NeverUndercounts) {
  Rng rng(1);
  CountMinSketch cms(4, 64, rng);
  std::map<std::uint64_t, std::uint32_t> exact;
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t key = mix64(uniform_index(rng, 0, 300));
    cms.add(key);
    exact[key] += 1;
  }
  for (auto [k, c] : exact) ASSERT_GE(cms.estimate(k), c);
  cms.clear();
  for (auto [k, _] : exact) ASSERT_EQ(cms.estimate(k), 0u);
}

TEST(CountMinSketch, WideSketchIsExactOnFewKeys) {
  Rng rng(2);
  CountMinSketch cms(4, 1 << 14, rng);
  for (std::uint64_t k = 0; k < 10; ++k)
    for (std::uint64_t j = 0; j <= k; ++j) cms.add(mix64(k));
  for (std::uint64_t k = 0; k < 10; ++k) EXPECT_EQ(cms.estimate(mix64(k)), k + 1);
  cms.remove(mix64(3), 2);
  EXPECT_EQ(cms.estimate(mix64(3)), 2u);
}

TEST(OnlineHistogram, IdenticalValuesFormOneBin) {
  OnlineHistogram h(5);
  for (int i = 0; i < 5; ++i) h.insert(2.5);
  ASSERT_EQ(h.bins().size(), 1u);
  EXPECT_DOUBLE_EQ(h.bins()[0].z, 2.5);
  EXPECT_DOUBLE_EQ(h.bins()[0].m, 5.0);
}

TEST(OnlineHistogram, OverflowMergesIntoWeightedMean) {
  OnlineHistogram h(1);
  h.insert(1.0);
  h.insert(2.0);
  ASSERT_EQ(h.bins().size(), 1u);
  EXPECT_DOUBLE_EQ(h.bins()[0].z, 1.5);
  EXPECT_DOUBLE_EQ(h.bins()[0].m, 2.0);
  auto full = h.with_sentinels();
  ASSERT_EQ(full.size(), 3u);
  EXPECT_DOUBLE_EQ(full.front().z, 1.0);
  EXPECT_DOUBLE_EQ(full.back().z, 2.0);
}

TEST(OnlineHistogram, PrintedRuleSingleBracket) {
  auto h = OnlineHistogram::from_bins({{0.0, 1.0}, {1.6, 2.0}, {3.0, 4.0}}, 0.0, 3.0, 3);
  ASSERT_DOUBLE_EQ(h.total(), 7.0);
  auto v = h.density(0.5, LodaDensity::Printed);
  ASSERT_TRUE(v.has_value());
  EXPECT_NEAR(*v, (0 * 1 + 1.6 * 2) / (2 * 7 * 1.6), 1e-12);
  EXPECT_NEAR(*v, 0.142857, 1e-6);
  EXPECT_FALSE(h.density(-0.1).has_value());
  EXPECT_FALSE(h.density(3.1).has_value());
}

TEST(OnlineHistogram, UniformBinsGiveConstantDensity) {
  auto h = OnlineHistogram::from_bins({{1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}}, 1, 5, 5);
  for (double z : {1.5, 2.5, 3.5, 4.5}) {
    auto v = h.density(z);
    ASSERT_TRUE(v.has_value());
    EXPECT_DOUBLE_EQ(*v, 0.2);
  }
}

// Random inserts: sorted strictly increasing bins, capacity respected, mass
// and first moment preserved, sentinels equal to the exact extremes, and the
// bins match the reference implementation.
TEST(OnlineHistogram, RandomisedAgainstOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t cap = 2 + uniform_index(rng, 0, 20);
    const std::size_t n = 1 + uniform_index(rng, 0, 511);
    OnlineHistogram h(cap);
    HistogramOracle o{cap, {}};
    double sum = 0, lo = kInf, hi = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = std::round(uniform_real(rng, -5, 5) * 4) / 4;
      h.insert(z);
      o.insert(z);
      sum += z;
      lo = std::min(lo, z);
      hi = std::max(hi, z);
    }
    const auto& b = h.bins();
    ASSERT_LE(b.size(), cap);
    double mass = 0, moment = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (i) {
        ASSERT_LT(b[i - 1].z, b[i].z);
      }
      mass += b[i].m;
      moment += b[i].z * b[i].m;
    }
    ASSERT_DOUBLE_EQ(mass, static_cast<double>(n));
    ASSERT_NEAR(moment, sum, 1e-8);
    ASSERT_EQ(h.zmin(), lo);
    ASSERT_EQ(h.zmax(), hi);
    ASSERT_EQ(b.size(), o.bins.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
      ASSERT_NEAR(b[i].z, o.bins[i].first, 1e-9);
      ASSERT_EQ(b[i].m, o.bins[i].second);
    }
  }
}

TEST(OnlineHistogram, DensityIntegratesToOne) {
  Rng rng(4);
  std::normal_distribution<double> g(0, 1);
  for (std::size_t cap : {5u, 10u, 20u, 40u}) {
    OnlineHistogram h(cap);
    for (int i = 0; i < 2000; ++i) h.insert(g(rng));
    const double lo = h.zmin(), hi = h.zmax();
    const int steps = 200000;
    const double dz = (hi - lo) / steps;
    double area = 0;
    for (int i = 0; i < steps; ++i) area += h.density(lo + (i + 0.5) * dz).value_or(0.0) * dz;
    EXPECT_NEAR(area, 1.0, 0.05) << cap;
    for (int i = 0; i < 100; ++i) ASSERT_GE(h.density(lo + i * (hi - lo) / 100).value_or(0.0), 0.0);
  }
}

TEST(LodaProjection, SparsityConventions) {
  Rng rng(5);
  for (std::size_t d : {1u, 2u, 4u, 9u, 10u, 30u}) {
    const auto root = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
    auto w = loda_projection(d, false, rng);
    auto nz = static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) { return v != 0.0; }));
    EXPECT_EQ(nz, d - std::min(root, d - 1));
    w = loda_projection(d, true, rng);
    nz = static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) { return v != 0.0; }));
    EXPECT_EQ(nz, std::max<std::size_t>(1, root));
  }
}

TEST(Loda, AxisFixtureTrainingAndUnscorable) {
  auto data = window_points();
  std::span<const Sample> all(data);
  Loda det({.projections = 2, .bins = 3}, {{0.5, 0.0}, {0.0, 1.0}});
  det.train(all.first(6));
  for (const auto& h : det.histograms()) {
    EXPECT_EQ(h.bins().size(), 3u);
    EXPECT_DOUBLE_EQ(h.total(), 6.0);
  }
  EXPECT_DOUBLE_EQ(det.histograms()[0].zmin(), 1.0);
  EXPECT_DOUBLE_EQ(det.histograms()[0].zmax(), 2.1);
  EXPECT_DOUBLE_EQ(det.histograms()[1].zmin(), 1.0);
  EXPECT_DOUBLE_EQ(det.histograms()[1].zmax(), 2.0);
  // p7 = (0, 3) projects outside both ranges.
  EXPECT_DOUBLE_EQ(det.score(data[6].features), 0.0);
  EXPECT_GT(det.score(data[8].features), 0.0);

  auto wins = window_iterator(data.size(), {6, 6});
  auto scores = det.process_slide(make_step(all, wins[1]));
  EXPECT_DOUBLE_EQ(scores[0], 0.0);
  for (const auto& h : det.histograms()) {
    EXPECT_DOUBLE_EQ(h.total(), 12.0);
    EXPECT_LE(h.bins().size(), 3u);
  }
  EXPECT_DOUBLE_EQ(det.histograms()[0].zmin(), 0.0);
  EXPECT_DOUBLE_EQ(det.histograms()[1].zmax(), 3.5);
}

TEST(Loda, EmptyUpdateLeavesHistogramsUnchanged) {
  auto data = window_points();
  std::span<const Sample> all(data);
  Loda det({.projections = 3, .bins = 4, .seed = 1});
  det.train(all.first(6));
  auto before = det.histograms();
  SlideStep empty;
  EXPECT_TRUE(det.process_slide(empty).empty());
  for (std::size_t j = 0; j < before.size(); ++j) {
    ASSERT_EQ(before[j].bins().size(), det.histograms()[j].bins().size());
    for (std::size_t i = 0; i < before[j].bins().size(); ++i) EXPECT_EQ(before[j].bins()[i].z, det.histograms()[j].bins()[i].z);
  }
}

TEST(Loda, AlternatingScoresIgnoreOrderWithinWindow) {
  Rng rng(6);
  auto data = oracle::random_stream(rng, 300, 5);
  std::span<const Sample> all(data);
  auto shuffled = data;
  std::shuffle(shuffled.begin() + 100, shuffled.begin() + 150, rng);
  std::span<const Sample> alt(shuffled);
  Loda a({.projections = 10, .bins = 8, .seed = 3}), b({.projections = 10, .bins = 8, .seed = 3});
  a.train(all.first(100));
  b.train(all.first(100));
  auto wins = window_iterator(data.size(), {50, 50});
  for (const auto& w : wins) {
    if (w.begin < 100) continue;
    auto sa = a.process_slide(make_step(all, w));
    auto sb = b.process_slide(make_step(alt, w));
    std::map<std::size_t, double> ma, mb;
    for (std::size_t i = 0; i < sa.size(); ++i) ma[data[w.begin + i].ordinal] = sa[i];
    for (std::size_t i = 0; i < sb.size(); ++i) mb[shuffled[w.begin + i].ordinal] = sb[i];
    if (w.begin == 100) {
      for (auto [k, v] : ma) ASSERT_DOUBLE_EQ(v, mb[k]);
    }
    for (std::size_t j = 0; j < a.histograms().size(); ++j)
      ASSERT_DOUBLE_EQ(a.histograms()[j].total(), b.histograms()[j].total());
  }
}

TEST(Loda, MassGrowsByWindowSize) {
  Rng rng(7);
  auto data = oracle::random_stream(rng, 200, 3);
  std::span<const Sample> all(data);
  Loda det({.projections = 4, .bins = 10, .seed = 9});
  det.train(all.first(50));
  auto wins = window_iterator(data.size(), {50, 50});
  double expect = 50;
  for (const auto& w : wins) {
    if (w.begin < 50) continue;
    det.process_slide(make_step(all, w));
    expect += 50;
    for (const auto& h : det.histograms()) ASSERT_DOUBLE_EQ(h.total(), expect);
  }
}

TEST(Loda, FrozenModeNeverUpdates) {
  Rng rng(8);
  auto data = oracle::random_stream(rng, 200, 3);
  std::span<const Sample> all(data);
  Loda det({.projections = 4, .bins = 10, .mode = LodaMode::Frozen, .seed = 9});
  det.train(all.first(50));
  det.process_slide(fresh_step(all, window_iterator(data.size(), {150, 150})[0]));
  for (const auto& h : det.histograms()) EXPECT_DOUBLE_EQ(h.total(), 50.0);
}

TEST(Loda, ContinuousModeScoresBeforeInsert) {
  auto data = window_points();
  std::span<const Sample> all(data);
  Loda det({.projections = 2, .bins = 3, .mode = LodaMode::Continuous}, {{0.5, 0.0}, {0.0, 1.0}});
  det.train(all.first(6));
  auto wins = window_iterator(data.size(), {6, 6});
  auto s = det.process_slide(make_step(all, wins[1]));
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  // p8 = (1, 3.5): p7 extended the first histogram, so it brackets there now.
  EXPECT_GT(s[1], 0.0);
}

TEST(XStreamProjections, SparsityAndMagnitude) {
  Rng rng(9);
  for (std::size_t d : {1u, 3u, 5u, 10u, 31u}) {
    auto r = xstream_projections(d, 20, rng);
    ASSERT_EQ(r.size(), 20u);
    for (const auto& v : r) {
      std::size_t nz = 0;
      for (double x : v)
        if (x != 0.0) {
          ++nz;
          ASSERT_DOUBLE_EQ(std::abs(x), std::sqrt(3.0 / 20.0));
        }
      ASSERT_EQ(nz, (d + 2) / 3);
    }
  }
}

TEST(XStream, ScoreFromCounts) {
  EXPECT_DOUBLE_EQ(xstream_score_from_counts({{3, 2, 1}}), 6.0);
  EXPECT_DOUBLE_EQ(xstream_score_from_counts({{3, 2, 1}, {0, 5, 5}}), 3.0);
  EXPECT_DOUBLE_EQ(xstream_score_from_counts({{6, 4, 2}}), 12.0);
}

// Identity projections ordered (F2, F1), zero shifts, unit half ranges and
// level features F1, F2, F1.
TEST(XStream, ChainFixtureBins) {
  XStream::Chain chain{{1, 0, 1}, {0.0, 0.0}};
  XStream det({.cms_width = 64}, {{0, 1}, {1, 0}}, {1.0, 1.0}, {chain});
  std::vector<double> p6{4.7, 1.0};  // F1, F2
  auto y = det.project(p6);
  auto bins = det.chain_bins(0, y);
  ASSERT_EQ(bins.size(), 3u);
  EXPECT_EQ(bins[0], (std::vector<std::int64_t>{0, 4}));
  EXPECT_EQ(bins[1], (std::vector<std::int64_t>{1, 4}));
  EXPECT_EQ(bins[2], (std::vector<std::int64_t>{1, 9}));
  auto hashes = det.chain_hashes(0, y);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(hashes[l], XStream::hash_bins(bins[l]));
}

TEST(XStream, RepeatedSelectionHalvesBinWidth) {
  XStream::Chain chain{{0, 0}, {0.3}};
  XStream det({.cms_width = 64}, {{1.0}}, {2.0}, {chain});
  Rng rng(10);
  std::set<std::int64_t> l1, l2;
  for (int i = 0; i < 5000; ++i) {
    std::vector<double> x{uniform_real(rng, 0, 40)};
    auto b = det.chain_bins(0, det.project(x));
    l1.insert(b[0][0]);
    l2.insert(b[1][0]);
    // Level-two bins have width delta/2 and share the shift.
    ASSERT_EQ(b[1][0], static_cast<std::int64_t>(std::floor((2 * x[0] + 0.3) / 2.0)));
  }
  EXPECT_NEAR(static_cast<double>(l2.size()) / static_cast<double>(l1.size()), 2.0, 0.1);
}

TEST(XStream, DistributionShiftScoresZero) {
  auto base = fixtures::make_stream({{0, 0}, {0.5, 0.2}, {1, 1}, {0.2, 0.9}, {0.7, 0.4}, {0.9, 0.1},
                                     {50, 50}, {51, 50}, {50, 52}, {53, 51}, {52, 52}, {51, 51}});
  std::span<const Sample> all(base);
  XStream det({.projections = 4, .chains = 5, .depth = 4, .seed = 1});
  det.train(all.first(6));
  auto s = det.process_slide(make_step(all, window_iterator(base.size(), {6, 6})[1]));
  for (double v : s) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(XStream, DoublingCountsDoublesScores) {
  Rng rng(11);
  auto data = oracle::random_stream(rng, 200, 4);
  std::span<const Sample> all(data);
  XStream det({.projections = 6, .chains = 5, .depth = 5, .seed = 2});
  det.train(all.first(100));
  std::vector<double> before;
  for (std::size_t i = 100; i < 200; ++i) before.push_back(det.score(data[i].features));
  for (auto& chain : det.reference())
    for (auto& h : chain) h.scale(2);
  for (std::size_t i = 100; i < 200; ++i) ASSERT_DOUBLE_EQ(det.score(data[i].features), 2 * before[i - 100]);
}

TEST(XStream, IdenticalSamplesShareKeys) {
  XStream det({.projections = 5, .chains = 3, .depth = 6, .seed = 4});
  Rng rng(12);
  auto data = oracle::random_stream(rng, 50, 3);
  det.train(data);
  auto y = det.project(data[7].features);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(det.chain_hashes(c, y), det.chain_hashes(c, det.project(data[7].features)));
}

TEST(XStream, PermutationInvariantWithinWindow) {
  Rng rng(13);
  auto data = oracle::random_stream(rng, 300, 4);
  auto shuffled = data;
  std::shuffle(shuffled.begin() + 100, shuffled.begin() + 200, rng);
  std::span<const Sample> a_span(data), b_span(shuffled);
  XStream a({.projections = 6, .chains = 8, .depth = 6, .seed = 5}), b({.projections = 6, .chains = 8, .depth = 6, .seed = 5});
  a.train(a_span.first(100));
  b.train(b_span.first(100));
  auto wins = window_iterator(data.size(), {100, 100});
  for (const auto& w : wins) {
    if (w.begin < 100) continue;
    auto sa = a.process_slide(make_step(a_span, w));
    auto sb = b.process_slide(make_step(b_span, w));
    std::map<std::size_t, double> ma, mb;
    for (std::size_t i = 0; i < sa.size(); ++i) ma[data[w.begin + i].ordinal] = sa[i];
    for (std::size_t i = 0; i < sb.size(); ++i) mb[shuffled[w.begin + i].ordinal] = sb[i];
    for (auto [k, v] : ma) ASSERT_DOUBLE_EQ(v, mb[k]);
  }
}

TEST(XStream, RejectsBadParameters) {
  EXPECT_THROW(XStream({.projections = 0}), std::invalid_argument);
  EXPECT_THROW(XStream({.chains = 0}), std::invalid_argument);
  EXPECT_THROW(XStream({.depth = 0}), std::invalid_argument);
  EXPECT_THROW(Loda({.bins = 1}), std::invalid_argument);
}
