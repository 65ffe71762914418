#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "streamad/core.hpp"

namespace streamad {

struct ScoredWindow {
  std::size_t window_index = 0;
  std::vector<double> scores;  // higher is more anomalous
  std::vector<bool> labels;
};

inline ScoredWindow make_scored_window(std::size_t index, std::span<const double> raw, ScoreOrientation o,
                                       std::span<const Sample> samples) {
  ScoredWindow w;
  w.window_index = index;
  w.scores = normalize_scores(raw, o);
  w.labels.reserve(samples.size());
  for (const auto& s : samples) w.labels.push_back(s.is_anomaly());
  if (w.scores.size() != w.labels.size()) throw std::logic_error("score/label length mismatch");
  return w;
}

inline std::size_t positives(const ScoredWindow& w) {
  return static_cast<std::size_t>(std::count(w.labels.begin(), w.labels.end(), true));
}

inline bool has_both_classes(const ScoredWindow& w) {
  const auto p = positives(w);
  return p > 0 && p < w.labels.size();
}

// Mann-Whitney: fraction of (anomaly, normal) pairs ordered correctly, ties 1/2.
inline std::optional<double> auc_roc(const ScoredWindow& w) {
  const std::size_t n = w.scores.size();
  const std::size_t pos = positives(w);
  if (pos == 0 || pos == n) return std::nullopt;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return w.scores[a] < w.scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && w.scores[idx[j]] == w.scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (w.labels[idx[t]]) rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(n - pos);
  return (rank_sum - p * (p + 1) / 2.0) / (p * q);
}

// Descending score; equal scores keep window (ordinal) order.
inline std::vector<std::size_t> ranking(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

inline double precision_at_k(const ScoredWindow& w, std::size_t k) {
  if (k == 0) return 0.0;
  const auto order = ranking(w.scores);
  k = std::min(k, order.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += w.labels[order[i]] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

// k = 0 means the whole window.
inline std::optional<double> average_precision(const ScoredWindow& w, std::size_t k = 0) {
  const std::size_t total = positives(w);
  if (total == 0) return std::nullopt;
  const auto order = ranking(w.scores);
  if (k == 0 || k > order.size()) k = order.size();
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (w.labels[order[j]]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(j + 1);
    }
  }
  return acc / static_cast<double>(total);
}

struct StreamMetrics {
  double map = 0.0;
  double mean_auc = 0.0;
  std::size_t valid_windows = 0;
  std::size_t excluded_windows = 0;  // single-class windows
};

inline StreamMetrics evaluate_windows(const std::vector<ScoredWindow>& windows) {
  StreamMetrics m;
  double ap_sum = 0.0, auc_sum = 0.0;
  std::size_t ap_n = 0, auc_n = 0;
  for (const auto& w : windows) {
    auto ap = average_precision(w);
    auto auc = auc_roc(w);
    if (ap) ap_sum += *ap, ++ap_n;
    if (auc) auc_sum += *auc, ++auc_n;
    if (!auc) ++m.excluded_windows;
  }
  if (ap_n == 0) throw std::runtime_error("no window contains an anomaly");
  m.map = ap_sum / static_cast<double>(ap_n);
  m.mean_auc = auc_n ? auc_sum / static_cast<double>(auc_n) : 0.5;
  m.valid_windows = auc_n;
  return m;
}

inline double map_over_stream(const std::vector<ScoredWindow>& windows) { return evaluate_windows(windows).map; }

struct BenchReport {
  std::string detector;
  std::string dataset;
  std::string config;
  std::uint64_t seed = 0;
  std::size_t runs = 1;  // detector seeds averaged
  double map = 0.0;
  double auc = 0.0;
  double train_seconds = 0.0;
  double update_seconds = 0.0;  // mean per window
  std::size_t windows = 0;
  std::size_t excluded_windows = 0;
  bool failed = false;
  std::string error;
};

// ---- cross-dataset analyses -------------------------------------------------

// metric[d][j]: detector j on dataset d.
using MetricMatrix = std::vector<std::vector<double>>;

struct RandomFailure {
  std::vector<std::size_t> per_dataset;  // detectors with AUC below threshold
  std::vector<double> pmf;               // pmf[c] = share of datasets with count c
  std::vector<double> cdf;
};

inline RandomFailure random_failure_count(const MetricMatrix& auc, double threshold = 0.6) {
  RandomFailure r;
  std::size_t k = 0;
  for (const auto& row : auc) {
    k = std::max(k, row.size());
    r.per_dataset.push_back(static_cast<std::size_t>(
        std::count_if(row.begin(), row.end(), [&](double v) { return v < threshold; })));
  }
  r.pmf.assign(k + 1, 0.0);
  for (auto c : r.per_dataset) r.pmf[c] += 1.0;
  for (auto& v : r.pmf) v /= std::max<std::size_t>(1, auc.size());
  r.cdf.resize(r.pmf.size());
  std::partial_sum(r.pmf.begin(), r.pmf.end(), r.cdf.begin());
  return r;
}

struct WinStats {
  std::size_t wins = 0;
  std::optional<double> adw;  // empty when the detector wins everywhere
};

inline std::vector<WinStats> wins_and_adw(const MetricMatrix& metric) {
  if (metric.empty()) return {};
  const std::size_t k = metric.front().size();
  std::vector<WinStats> out(k);
  std::vector<double> diff_sum(k, 0.0);
  std::vector<std::size_t> losses(k, 0);
  for (const auto& row : metric) {
    if (row.size() != k) throw std::invalid_argument("ragged metric matrix");
    const double best = *std::max_element(row.begin(), row.end());
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j] == best) {
        ++out[j].wins;
      } else {
        diff_sum[j] += best - row[j];
        ++losses[j];
      }
    }
  }
  for (std::size_t j = 0; j < k; ++j)
    if (losses[j]) out[j].adw = diff_sum[j] / static_cast<double>(losses[j]);
  return out;
}

// Studentized range statistic divided by sqrt(2), alpha = 0.05 and 0.10,
// infinite degrees of freedom, k = 2..20.
inline constexpr double kNemenyiQ05[] = {1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878,
                                         3.101730, 3.163684, 3.218654, 3.268004, 3.312739, 3.353618, 3.391230,
                                         3.426041, 3.458425, 3.488685, 3.517073, 3.543799};
inline constexpr double kNemenyiQ10[] = {1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884,
                                         2.854606, 2.919889, 2.977768, 3.029694, 3.076733, 3.119693, 3.159199,
                                         3.195743, 3.229723, 3.261461, 3.291224, 3.319233};

inline double nemenyi_q(std::size_t k, double alpha = 0.05) {
  if (k < 2 || k > 20) throw std::invalid_argument("Nemenyi table covers 2 <= k <= 20");
  if (alpha == 0.05) return kNemenyiQ05[k - 2];
  if (alpha == 0.10) return kNemenyiQ10[k - 2];
  throw std::invalid_argument("Nemenyi table covers alpha 0.05 and 0.10");
}

inline double nemenyi_cd(std::size_t k, std::size_t n_datasets, double alpha = 0.05) {
  const double kk = static_cast<double>(k);
  return nemenyi_q(k, alpha) * std::sqrt(kk * (kk + 1.0) / (6.0 * static_cast<double>(n_datasets)));
}

// Fractional ranks, 1 = largest value.
inline std::vector<double> descending_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && v[idx[j]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) r[idx[t]] = avg;
    i = j;
  }
  return r;
}

struct RankAnalysis {
  std::vector<double> mean_ranks;
  double friedman_chi2 = 0.0;
  double friedman_p = 1.0;
  double critical_distance = 0.0;
};

inline RankAnalysis rank_analysis(const MetricMatrix& metric, double alpha = 0.05) {
  if (metric.empty()) throw std::invalid_argument("empty metric matrix");
  const std::size_t k = metric.front().size();
  const std::size_t n = metric.size();
  RankAnalysis ra;
  ra.mean_ranks.assign(k, 0.0);
  for (const auto& row : metric) {
    if (row.size() != k) throw std::invalid_argument("incomplete metric matrix");
    for (double v : row)
      if (std::isnan(v)) throw std::invalid_argument("incomplete metric matrix");
    const auto r = descending_ranks(row);
    for (std::size_t j = 0; j < k; ++j) ra.mean_ranks[j] += r[j];
  }
  for (auto& r : ra.mean_ranks) r /= static_cast<double>(n);
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  double sq = 0.0;
  for (double r : ra.mean_ranks) sq += r * r;
  ra.friedman_chi2 = 12.0 * nn / (kk * (kk + 1.0)) * (sq - kk * (kk + 1.0) * (kk + 1.0) / 4.0);
  if (std::abs(ra.friedman_chi2) < 1e-12) ra.friedman_chi2 = 0.0;
  if (k >= 2) {
    boost::math::chi_squared dist(kk - 1.0);
    ra.friedman_p = boost::math::cdf(boost::math::complement(dist, std::max(0.0, ra.friedman_chi2)));
    ra.critical_distance = nemenyi_cd(k, n, alpha);
  }
  return ra;
}

struct TradeoffPoint {
  double update_seconds = 0.0;
  double map = 0.0;
  std::string label;
};

inline bool dominates(const TradeoffPoint& a, const TradeoffPoint& b) {
  return a.update_seconds <= b.update_seconds && a.map >= b.map &&
         (a.update_seconds < b.update_seconds || a.map > b.map);
}

inline std::vector<TradeoffPoint> pareto_frontier(const std::vector<TradeoffPoint>& pts) {
  std::vector<TradeoffPoint> sorted = pts;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.update_seconds != b.update_seconds) return a.update_seconds < b.update_seconds;
    return a.map > b.map;
  });
  std::vector<TradeoffPoint> out;
  double best_map = -kInf;
  double best_time = kInf;
  for (const auto& p : sorted) {
    if (p.map > best_map) {
      out.push_back(p);
      best_map = p.map;
      best_time = p.update_seconds;
    } else if (p.map == best_map && p.update_seconds == best_time) {
      out.push_back(p);  // exact duplicates do not dominate each other
    }
  }
  return out;
}

struct Timing {
  double train_seconds = 0.0;
  double update_seconds = 0.0;  // mean per window
  std::size_t windows = 0;
};

// Runs train, then every step, timing each phase with a monotonic clock.
template <class StepSink>
Timing time_probe(Detector& det, std::span<const Sample> train, const std::vector<SlideStep>& steps,
                  StepSink&& sink) {
  using clock = std::chrono::steady_clock;
  Timing t;
  auto t0 = clock::now();
  det.train(train);
  auto t1 = clock::now();
  t.train_seconds = std::chrono::duration<double>(t1 - t0).count();
  double total = 0.0;
  for (const auto& step : steps) {
    auto a = clock::now();
    auto scores = det.process_slide(step);
    auto b = clock::now();
    total += std::chrono::duration<double>(b - a).count();
    sink(step, std::move(scores));
  }
  t.windows = steps.size();
  t.update_seconds = steps.empty() ? 0.0 : total / static_cast<double>(steps.size());
  return t;
}

}  // namespace streamad
