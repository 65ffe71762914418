#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamad/ingest.hpp"

namespace streamad {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kCorrelatedPairThreshold = 0.8;

// ---- per-column statistics --------------------------------------------------

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty sequence");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(m));
  return (lo + hi) / 2.0;
}

// Linear interpolation between order statistics (numpy's default).
inline double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of empty sequence");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, v.size() - 1);
  return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
}

// median(|x - median(x)|)
inline double mad_of(const std::vector<double>& v) {
  const double m = median_of(v);
  std::vector<double> dev;
  dev.reserve(v.size());
  for (double x : v) dev.push_back(std::abs(x - m));
  return median_of(std::move(dev));
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Central moment of order k (population).
inline double central_moment(const std::vector<double>& v, int k) {
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += std::pow(x - mu, k);
  return s / static_cast<double>(v.size());
}

// Sample variance (n - 1 denominator).
inline double variance_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size() - 1);
}

// mu4 / mu2^2 - 3; NaN for a constant column.
inline double excess_kurtosis(const std::vector<double>& v) {
  const double m2 = central_moment(v, 2);
  if (m2 <= 0.0) return kNaN;
  return central_moment(v, 4) / (m2 * m2) - 3.0;
}

// mu3 / mu2^1.5; NaN for a constant column.
inline double skewness(const std::vector<double>& v) {
  const double m2 = central_moment(v, 2);
  if (m2 <= 0.0) return kNaN;
  return central_moment(v, 3) / std::pow(m2, 1.5);
}

inline double sparsity(const std::vector<double>& v) {
  return static_cast<double>(std::set<double>(v.begin(), v.end()).size()) / static_cast<double>(v.size());
}

inline std::vector<double> column(std::span<const Sample> samples, std::size_t j) {
  std::vector<double> c;
  c.reserve(samples.size());
  for (const auto& s : samples) c.push_back(s.features[j]);
  return c;
}

struct MeanSd {
  double mean = kNaN;
  double sd = kNaN;
};

// Mean and sample SD over the defined (non-NaN) values; a single value has SD 0.
inline MeanSd mean_sd(const std::vector<double>& v) {
  std::vector<double> ok;
  for (double x : v)
    if (!std::isnan(x)) ok.push_back(x);
  if (ok.empty()) return {};
  return {mean_of(ok), std::sqrt(variance_of(ok))};
}

// ---- AND --------------------------------------------------------------------

struct AndParts {
  double dist_cm = 0.0;  // mean over features of med(normals) - med(anomalies)
  double avg_mad = 0.0;
  double avg_med = 0.0;
  std::optional<double> value;  // missing when avg_med == 0
};

inline AndParts compute_and(const Dataset& ds) {
  std::vector<Sample> normals, anomalies;
  for (const auto& s : ds.samples) (s.is_anomaly() ? anomalies : normals).push_back(s);
  if (normals.empty() || anomalies.empty()) throw std::invalid_argument("AND needs both classes");
  const std::size_t d = ds.d();
  AndParts a;
  for (std::size_t j = 0; j < d; ++j) {
    const auto all = column(ds.samples, j);
    a.dist_cm += median_of(column(normals, j)) - median_of(column(anomalies, j));
    a.avg_mad += mad_of(all);
    a.avg_med += median_of(all);
  }
  const double dd = static_cast<double>(d);
  a.dist_cm /= dd;
  a.avg_mad /= dd;
  a.avg_med /= dd;
  if (a.avg_med != 0.0) a.value = (a.dist_cm - a.avg_mad) / a.avg_med;
  return a;
}

// ---- full vector ------------------------------------------------------------

struct MetaFeatureVector {
  // general
  std::size_t n_samples = 0;   // G1
  std::size_t n_features = 0;  // G2
  double anomaly_ratio = 0.0;  // G3
  // fullspace
  double center_distance = 0.0;        // FR1
  std::optional<double> and_value;     // FR4
  // value space
  MeanSd covariance;   // F1, |cov| over distinct pairs
  MeanSd eigenvalues;  // F2
  MeanSd iqr;          // F3
  MeanSd kurtosis;     // F4
  MeanSd mad;          // F5
  MeanSd max;          // F6
  MeanSd mean;         // F7
  MeanSd median;       // F8
  MeanSd min;          // F9
  MeanSd range;        // F10
  MeanSd sd;           // F11
  MeanSd skewness;     // F12
  MeanSd sparsity;     // F13
  MeanSd variance;     // F14
  std::size_t outliers_3sd = 0;      // F15
  std::size_t correlated_pairs = 0;  // F16
};

inline MetaFeatureVector compute_metafeatures(const Dataset& ds) {
  const std::size_t n = ds.samples.size(), d = ds.d();
  if (n < 2) throw std::invalid_argument("meta-features need at least two samples");
  if (d == 0) throw std::invalid_argument("meta-features need at least one feature");
  MetaFeatureVector m;
  m.n_samples = n;
  m.n_features = d;
  m.anomaly_ratio = ds.anomaly_ratio();

  std::vector<std::vector<double>> cols(d);
  for (std::size_t j = 0; j < d; ++j) cols[j] = column(ds.samples, j);

  // FR1: Euclidean distance between class means.
  std::vector<double> mu_n(d, 0.0), mu_a(d, 0.0);
  std::size_t nn = 0, na = 0;
  for (const auto& s : ds.samples) {
    auto& mu = s.is_anomaly() ? mu_a : mu_n;
    (s.is_anomaly() ? na : nn) += 1;
    for (std::size_t j = 0; j < d; ++j) mu[j] += s.features[j];
  }
  if (nn && na) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = mu_n[j] / static_cast<double>(nn) - mu_a[j] / static_cast<double>(na);
      sq += diff * diff;
    }
    m.center_distance = std::sqrt(sq);
    m.and_value = compute_and(ds).value;
  } else {
    m.center_distance = kNaN;
  }

  std::vector<double> iqr, kurt, mad, mx, mean, med, mn, range, sd, skew, sparse, var;
  for (const auto& c : cols) {
    iqr.push_back(quantile_of(c, 0.75) - quantile_of(c, 0.25));
    kurt.push_back(excess_kurtosis(c));
    mad.push_back(mad_of(c));
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    mx.push_back(*hi);
    mn.push_back(*lo);
    range.push_back(*hi - *lo);
    mean.push_back(mean_of(c));
    med.push_back(median_of(c));
    var.push_back(variance_of(c));
    sd.push_back(std::sqrt(var.back()));
    skew.push_back(skewness(c));
    sparse.push_back(sparsity(c));
  }
  m.iqr = mean_sd(iqr);
  m.kurtosis = mean_sd(kurt);
  m.mad = mean_sd(mad);
  m.max = mean_sd(mx);
  m.min = mean_sd(mn);
  m.range = mean_sd(range);
  m.mean = mean_sd(mean);
  m.median = mean_sd(med);
  m.variance = mean_sd(var);
  m.sd = mean_sd(sd);
  m.skewness = mean_sd(skew);
  m.sparsity = mean_sd(sparse);

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(static_cast<long>(i), static_cast<long>(j)) = cols[j][i];
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);

  std::vector<double> abs_cov;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double c = cov(static_cast<long>(i), static_cast<long>(j));
      abs_cov.push_back(std::abs(c));
      const double vi = cov(static_cast<long>(i), static_cast<long>(i));
      const double vj = cov(static_cast<long>(j), static_cast<long>(j));
      if (vi > 0.0 && vj > 0.0 && std::abs(c) / std::sqrt(vi * vj) >= kCorrelatedPairThreshold - 1e-12)
        ++m.correlated_pairs;
    }
  m.covariance = mean_sd(abs_cov);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  std::vector<double> ev(eig.eigenvalues().data(), eig.eigenvalues().data() + d);
  m.eigenvalues = mean_sd(ev);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (sd[j] > 0.0 && std::abs(cols[j][i] - mean[j]) > 3.0 * sd[j]) {
        ++m.outliers_3sd;
        break;
      }
  return m;
}

// Column name, whether it needs labels (explanatory) or not (predictive), value.
struct MetaFeatureField {
  std::string name;
  bool predictive = true;
  double value = kNaN;
};

inline std::vector<MetaFeatureField> fields(const MetaFeatureVector& m) {
  std::vector<MetaFeatureField> f;
  f.push_back({"G1_n_samples", true, static_cast<double>(m.n_samples)});
  f.push_back({"G2_n_features", true, static_cast<double>(m.n_features)});
  f.push_back({"G3_anomaly_ratio", false, m.anomaly_ratio});
  f.push_back({"FR1_center_distance", false, m.center_distance});
  f.push_back({"FR4_AND", false, m.and_value.value_or(kNaN)});
  auto pair = [&](const char* name, const MeanSd& v) {
    f.push_back({std::string(name) + "_mean", true, v.mean});
    f.push_back({std::string(name) + "_sd", true, v.sd});
  };
  pair("F1_abs_cov", m.covariance);
  pair("F2_eigenvalues", m.eigenvalues);
  pair("F3_iqr", m.iqr);
  pair("F4_kurtosis", m.kurtosis);
  pair("F5_mad", m.mad);
  pair("F6_max", m.max);
  pair("F7_mean", m.mean);
  pair("F8_median", m.median);
  pair("F9_min", m.min);
  pair("F10_range", m.range);
  pair("F11_sd", m.sd);
  pair("F12_skewness", m.skewness);
  pair("F13_sparsity", m.sparsity);
  pair("F14_variance", m.variance);
  f.push_back({"F15_outliers_3sd", true, static_cast<double>(m.outliers_3sd)});
  f.push_back({"F16_correlated_pairs", true, static_cast<double>(m.correlated_pairs)});
  return f;
}

// One row per dataset; missing values are empty cells.
inline void write_metafeature_csv(std::ostream& out,
                                  const std::vector<std::pair<std::string, MetaFeatureVector>>& rows) {
  if (rows.empty()) return;
  out << "dataset";
  for (const auto& f : fields(rows.front().second)) out << ',' << f.name;
  out << '\n';
  out << std::setprecision(10);
  for (const auto& [name, m] : rows) {
    out << name;
    for (const auto& f : fields(m)) {
      out << ',';
      if (!std::isnan(f.value)) out << f.value;
    }
    out << '\n';
  }
}

// ---- Spearman meta-correlation ---------------------------------------------

// Average ranks (1-based) for ties.
inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, t approximation with n - 2 dof
};

inline SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("paired observations differ in length");
  const std::size_t n = x.size();
  if (n < 4) throw std::invalid_argument("Spearman needs at least 4 pairs");
  const auto rx = fractional_ranks(x), ry = fractional_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("zero rank variance");
  SpearmanResult r;
  r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(r.rho) >= 1.0) {
    r.p_value = 0.0;
    return r;
  }
  const double dof = static_cast<double>(n - 2);
  const double t = r.rho * std::sqrt(dof / (1.0 - r.rho * r.rho));
  boost::math::students_t dist(dof);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return r;
}

}  // namespace streamad
