#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "streamad/core.hpp"

namespace streamad {

struct Dataset {
  std::string name;
  std::vector<std::string> feature_names;
  std::vector<Sample> samples;

  std::size_t d() const { return dimension_of(samples); }
  std::size_t size() const { return samples.size(); }
  std::size_t anomaly_count() const {
    return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(),
                                                  [](const Sample& s) { return s.is_anomaly(); }));
  }
  double anomaly_ratio() const {
    return samples.empty() ? 0.0 : static_cast<double>(anomaly_count()) / static_cast<double>(samples.size());
  }
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  for (auto& s : cells) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size() || !std::isfinite(v))
    throw DataError("row " + std::to_string(row) + ", column '" + column + "': not a finite number: '" + cell + "'");
  return v;
}

inline std::string stem_of(const std::string& path) {
  auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace detail

// Columns named "ordinal" are treated as bookkeeping and skipped.
inline Dataset read_csv(std::istream& in, const std::string& label_column = "is_anomaly",
                        const std::string& name = "dataset") {
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line).empty() || line.empty())
    throw DataError("empty file");
  const auto header = detail::split_csv_line(line);
  std::ptrdiff_t label_at = -1;
  std::vector<std::size_t> feature_cols;
  Dataset ds;
  ds.name = name;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_at = static_cast<std::ptrdiff_t>(i);
    } else if (header[i] != "ordinal") {
      feature_cols.push_back(i);
      ds.feature_names.push_back(header[i]);
    }
  }
  if (label_at < 0) throw DataError("missing label column '" + label_column + "'");
  if (feature_cols.empty()) throw DataError("no feature columns");
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " cells");
    Sample s;
    s.ordinal = ds.samples.size();
    s.features.reserve(feature_cols.size());
    for (std::size_t c : feature_cols) s.features.push_back(detail::parse_cell(cells[c], row, header[c]));
    const double lab = detail::parse_cell(cells[static_cast<std::size_t>(label_at)], row, label_column);
    if (lab != 0.0 && lab != 1.0) throw DataError("row " + std::to_string(row) + ": label must be 0 or 1");
    s.label = lab == 1.0;
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw DataError("empty file");
  return ds;
}

inline Dataset load_csv(const std::string& path, const std::string& label_column = "is_anomaly") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in, label_column, detail::stem_of(path));
}

inline void write_csv(std::ostream& out, const Dataset& ds, bool with_ordinal = false,
                      const std::string& label_column = "is_anomaly") {
  const std::size_t d = ds.d();
  if (with_ordinal) out << "ordinal,";
  for (std::size_t j = 0; j < d; ++j) {
    out << (j < ds.feature_names.size() ? ds.feature_names[j] : "f" + std::to_string(j)) << ',';
  }
  out << label_column << '\n';
  out << std::setprecision(17);
  for (const auto& s : ds.samples) {
    if (with_ordinal) out << s.ordinal << ',';
    for (double v : s.features) out << v << ',';
    out << (s.is_anomaly() ? 1 : 0) << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& ds, bool with_ordinal = false) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(out, ds, with_ordinal);
}

struct WindowedStream {
  Dataset data;  // samples re-ordered, ordinals 0..n-1
  WindowSpec spec;
  std::size_t step = 0;           // round(1 / anomaly_ratio)
  bool sparse_anomalies = false;  // w < step: windows may lack anomalies
  std::vector<Window> windows;
};

// Normals are shuffled; the i-th anomaly goes to position floor((i + 1/2) n / A),
// i.e. one anomaly every 1/anomaly_ratio samples with the fractional part of
// the step carried forward, so per-window counts never drift by more than one.
inline WindowedStream generate_stream(const Dataset& ds, const WindowSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<const Sample*> normals, anomalies;
  for (const auto& s : ds.samples) (s.is_anomaly() ? anomalies : normals).push_back(&s);
  if (anomalies.empty()) throw DataError("dataset has no anomalies");
  if (normals.empty()) throw DataError("dataset has no normal samples");
  Rng rng(seed);
  std::shuffle(normals.begin(), normals.end(), rng);
  std::shuffle(anomalies.begin(), anomalies.end(), rng);

  const std::size_t n = ds.samples.size();
  const std::size_t a = anomalies.size();
  const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / ds.anomaly_ratio())));
  std::vector<bool> slot(n, false);
  for (std::size_t i = 0; i < a; ++i) slot[(2 * i + 1) * n / (2 * a)] = true;

  std::vector<const Sample*> order;
  order.reserve(n);
  std::size_t ni = 0, ai = 0;
  for (std::size_t j = 0; j < n; ++j) order.push_back(slot[j] ? anomalies[ai++] : normals[ni++]);

  WindowedStream ws;
  ws.data.name = ds.name;
  ws.data.feature_names = ds.feature_names;
  ws.data.samples.reserve(n);
  for (std::size_t i = 0; i < order.size(); ++i) {
    Sample s = *order[i];
    s.ordinal = i;
    ws.data.samples.push_back(std::move(s));
  }
  ws.spec = spec;
  ws.step = step;
  ws.sparse_anomalies = spec.size < step;
  ws.windows = window_iterator(n, spec);
  return ws;
}

struct IndexRange {
  std::size_t begin = 0, end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

struct StreamPartition {
  IndexRange train, val, test;
};

inline StreamPartition partition(std::size_t n_windows, double train_frac = 0.5, double val_frac = 0.1,
                                 double test_frac = 0.4) {
  if (train_frac <= 0 || val_frac <= 0 || test_frac <= 0 || std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("partition fractions must be positive and sum to 1");
  if (n_windows < 3) throw std::invalid_argument("need at least 3 windows to partition");
  const double nw = static_cast<double>(n_windows);
  auto cut = [&](double frac) { return static_cast<std::size_t>(std::floor(frac * nw + 1e-9)); };
  std::size_t a = std::max<std::size_t>(1, cut(train_frac));
  std::size_t b = std::max<std::size_t>(a + 1, cut(train_frac + val_frac));
  if (b >= n_windows) {
    b = n_windows - 1;
    a = std::min(a, b - 1);
  }
  return {{0, a}, {a, b}, {b, n_windows}};
}

struct Subspace {
  std::vector<std::size_t> features;
};

struct SubspaceDataOptions {
  double rho = 0.9;               // pairwise correlation inside a cluster
  std::size_t clusters = 2;       // Gaussian clusters per subspace
  double cluster_sd = 0.06;       // marginal SD of a cluster
  double anomaly_gap = 0.35;      // displacement off the correlation axis, in feature units
};

// Normal samples: within each relevant subspace, a mixture of correlated
// Gaussian clusters in [0,1]; irrelevant features uniform on [0,1]. An anomaly
// picks one subspace and is pushed away from the cluster's correlation axis
// there, while every other feature is drawn exactly like a normal sample.
inline Dataset generate_subspace_dataset(std::size_t n_normal, std::size_t n_anomalies, std::size_t d_total,
                                         const std::vector<Subspace>& subspaces, std::uint64_t seed,
                                         const SubspaceDataOptions& opt = {}) {
  if (subspaces.empty()) throw std::invalid_argument("at least one relevant subspace required");
  std::vector<int> owner(d_total, -1);
  for (std::size_t si = 0; si < subspaces.size(); ++si) {
    const auto& sub = subspaces[si];
    if (sub.features.size() < 2 || sub.features.size() > 5)
      throw std::invalid_argument("subspaces must have 2 to 5 features");
    for (std::size_t f : sub.features) {
      if (f >= d_total) throw std::invalid_argument("subspace feature index out of range");
      if (owner[f] != -1) throw std::invalid_argument("subspaces overlap");
      owner[f] = static_cast<int>(si);
    }
  }
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Cluster centres on the diagonal of each subspace so the correlated
  // direction is shared.
  std::vector<std::vector<double>> centres(subspaces.size());
  for (std::size_t si = 0; si < subspaces.size(); ++si)
    for (std::size_t c = 0; c < opt.clusters; ++c)
      centres[si].push_back(0.2 + 0.6 * (static_cast<double>(c) + 0.5) / static_cast<double>(opt.clusters));

  // Equicorrelated Gaussian: x_j = sqrt(rho) z0 + sqrt(1-rho) z_j.
  auto draw_cluster = [&](std::size_t si, std::vector<double>& x) {
    const auto& sub = subspaces[si];
    const double c = centres[si][uniform_index(rng, 0, opt.clusters - 1)];
    const double shared = gauss(rng);
    for (std::size_t f : sub.features)
      x[f] = c + opt.cluster_sd * (std::sqrt(opt.rho) * shared + std::sqrt(1.0 - opt.rho) * gauss(rng));
  };
  auto draw_normal = [&]() {
    std::vector<double> x(d_total);
    for (std::size_t f = 0; f < d_total; ++f)
      if (owner[f] == -1) x[f] = unit(rng);
    for (std::size_t si = 0; si < subspaces.size(); ++si) draw_cluster(si, x);
    return x;
  };

  Dataset ds;
  ds.name = "subspace_d" + std::to_string(d_total);
  for (std::size_t f = 0; f < d_total; ++f) ds.feature_names.push_back("f" + std::to_string(f));
  for (std::size_t i = 0; i < n_normal; ++i) ds.samples.push_back({0, draw_normal(), false});
  for (std::size_t i = 0; i < n_anomalies; ++i) {
    auto x = draw_normal();
    const std::size_t si = i % subspaces.size();
    const auto& sub = subspaces[si];
    // Direction orthogonal to the diagonal: alternating signs, zero mean.
    const std::size_t r = sub.features.size();
    std::vector<double> dir(r);
    double norm = 0.0;
    do {
      double mean = 0.0;
      for (auto& v : dir) mean += (v = gauss(rng));
      mean /= static_cast<double>(r);
      norm = 0.0;
      for (auto& v : dir) {
        v -= mean;
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-6);
    const double c = 0.5;
    for (std::size_t j = 0; j < r; ++j) x[sub.features[j]] = c + opt.anomaly_gap * dir[j] / norm;
    ds.samples.push_back({0, std::move(x), true});
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) ds.samples[i].ordinal = i;
  return ds;
}

// Partition subspace sizes 2..5 over the first `relevant` features.
inline std::vector<Subspace> default_subspaces(std::size_t relevant) {
  std::vector<Subspace> out;
  const std::size_t sizes[] = {2, 3, 4, 5};
  std::size_t at = 0, k = 0;
  while (at + 2 <= relevant) {
    std::size_t sz = std::min(sizes[k++ % 4], relevant - at);
    if (relevant - at - sz == 1) sz = std::min<std::size_t>(sz + 1, 5);
    if (sz < 2) break;
    Subspace s;
    for (std::size_t j = 0; j < sz; ++j) s.features.push_back(at + j);
    at += sz;
    out.push_back(std::move(s));
  }
  return out;
}

// Normals ~ N(0, I_d). Each anomaly is a normal draw moved `shift` standard
// deviations along its own random unit direction.
inline Dataset generate_displaced_gaussian(std::size_t n_normal, std::size_t n_anomalies, std::size_t d, double shift,
                                           std::uint64_t seed) {
  if (d == 0) throw std::invalid_argument("dimension must be positive");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds;
  ds.name = "gaussian_d" + std::to_string(d);
  for (std::size_t f = 0; f < d; ++f) ds.feature_names.push_back("f" + std::to_string(f));
  auto draw = [&] {
    std::vector<double> x(d);
    for (auto& v : x) v = gauss(rng);
    return x;
  };
  for (std::size_t i = 0; i < n_normal; ++i) ds.samples.push_back({0, draw(), false});
  for (std::size_t i = 0; i < n_anomalies; ++i) {
    auto x = draw();
    std::vector<double> u;
    double norm = 0.0;
    do {
      u = draw();
      norm = 0.0;
      for (double v : u) norm += v * v;
      norm = std::sqrt(norm);
    } while (norm < 1e-9);
    for (std::size_t j = 0; j < d; ++j) x[j] += shift * u[j] / norm;
    ds.samples.push_back({0, std::move(x), true});
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) ds.samples[i].ordinal = i;
  return ds;
}

}  // namespace streamad
