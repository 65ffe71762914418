#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "streamad/core.hpp"

namespace streamad {

// Batch model: fit once, score any set of samples.
class BatchModel {
 public:
  virtual ~BatchModel() = default;
  virtual std::string name() const = 0;
  virtual void fit(std::span<const Sample> data) = 0;
  virtual std::vector<double> score(std::span<const Sample> queries) const = 0;
};

// Adapts a batch model to the streaming contract: fit on the training
// samples, score each window as one batch without updating.
class OfflineDetector : public Detector {
 public:
  explicit OfflineDetector(std::unique_ptr<BatchModel> model) : model_(std::move(model)) {}
  std::string name() const override { return model_->name(); }
  ScoreOrientation orientation() const override { return ScoreOrientation::HigherIsAnomalous; }
  void train(std::span<const Sample> samples) override { model_->fit(samples); }
  std::vector<double> process_slide(const SlideStep& step) override { return model_->score(step.window); }
  const BatchModel& model() const { return *model_; }

 private:
  std::unique_ptr<BatchModel> model_;
};

// ---------------------------------------------------------------------------
// Nearest neighbours (brute force)

struct Neighbor {
  std::size_t index;
  double distance;
};

// k nearest reference samples of x, ties broken by index; the reference
// sample with the same ordinal as x (x itself) is skipped.
inline std::vector<Neighbor> k_nearest(std::span<const Sample> ref, const Sample& x, std::size_t k) {
  std::vector<Neighbor> all;
  all.reserve(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (ref[i].ordinal != x.ordinal) all.push_back({i, distance(ref[i].features, x.features)});
  k = std::min(k, all.size());
  auto cmp = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(k), all.end(), cmp);
  all.resize(k);
  return all;
}

class KnnW : public BatchModel {
 public:
  explicit KnnW(std::size_t k) : k_(k) {
    if (k < 1) throw std::invalid_argument("KNN needs K >= 1");
  }
  std::string name() const override { return "KNN_W"; }
  void fit(std::span<const Sample> data) override {
    if (data.size() <= k_) throw std::invalid_argument("KNN needs K < n");
    ref_.assign(data.begin(), data.end());
  }
  // Distance to the K-th nearest neighbour.
  std::vector<double> score(std::span<const Sample> queries) const override {
    std::vector<double> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(k_nearest(ref_, q, k_).back().distance);
    return out;
  }

 private:
  std::size_t k_;
  std::vector<Sample> ref_;
};

inline std::vector<double> knnw_scores(std::span<const Sample> data, std::size_t k) {
  KnnW m(k);
  m.fit(data);
  return m.score(data);
}

class Lof : public BatchModel {
 public:
  static constexpr double kEpsilon = 1e-12;

  explicit Lof(std::size_t k) : k_(k) {
    if (k < 1) throw std::invalid_argument("LOF needs K >= 1");
  }
  std::string name() const override { return "LOF"; }

  void fit(std::span<const Sample> data) override {
    if (data.size() <= k_) throw std::invalid_argument("LOF needs K < n");
    ref_.assign(data.begin(), data.end());
    const std::size_t n = ref_.size();
    nn_.resize(n);
    kdist_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      nn_[i] = k_nearest(ref_, ref_[i], k_);
      kdist_[i] = nn_[i].back().distance;
    }
    lrd_.resize(n);
    for (std::size_t i = 0; i < n; ++i) lrd_[i] = lrd_of(nn_[i]);
  }

  std::vector<double> score(std::span<const Sample> queries) const override {
    std::vector<double> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
      const auto nn = k_nearest(ref_, q, k_);
      const double own = lrd_of(nn);
      double acc = 0.0;
      for (const auto& o : nn) acc += lrd_[o.index];
      out.push_back(acc / static_cast<double>(nn.size()) / own);
    }
    return out;
  }

  const std::vector<double>& lrd() const { return lrd_; }

 private:
  double lrd_of(const std::vector<Neighbor>& nn) const {
    double acc = 0.0;
    for (const auto& o : nn) acc += std::max(o.distance, kdist_[o.index]);
    return 1.0 / (acc / static_cast<double>(nn.size()) + kEpsilon);
  }

  std::size_t k_;
  std::vector<Sample> ref_;
  std::vector<std::vector<Neighbor>> nn_;
  std::vector<double> kdist_, lrd_;
};

inline std::vector<double> lof_scores(std::span<const Sample> data, std::size_t k) {
  Lof m(k);
  m.fit(data);
  return m.score(data);
}

// ---------------------------------------------------------------------------
// Isolation-style trees

// Average path length of an unsuccessful search in a binary search tree of n nodes.
inline double average_path_length(double n) {
  if (n <= 1.0) return 0.0;
  return 2.0 * (std::log(n - 1.0) + 0.5772156649) - 2.0 * (n - 1.0) / n;
}

struct IsolationNode {
  int left = -1, right = -1;
  std::size_t feature = 0;
  double split = 0.0;
  std::size_t size = 0;
  std::size_t depth = 0;
  bool leaf() const { return left < 0; }
};

struct IsolationTreeModel {
  std::vector<IsolationNode> nodes;

  // Edges to the leaf plus the c(size) adjustment for unsplit leaves.
  double path_length(std::span<const double> x) const {
    std::size_t v = 0;
    while (!nodes[v].leaf())
      v = static_cast<std::size_t>(x[nodes[v].feature] < nodes[v].split ? nodes[v].left : nodes[v].right);
    return static_cast<double>(nodes[v].depth) + average_path_length(static_cast<double>(nodes[v].size));
  }
};

// Number of samples per tree: a count when >= 1, otherwise a fraction of n.
inline std::size_t resolve_max_samples(double max_samples, std::size_t n) {
  if (!(max_samples > 0.0)) throw std::invalid_argument("max samples must be positive");
  const double m = max_samples >= 1.0 ? max_samples : std::ceil(max_samples * static_cast<double>(n));
  return std::clamp<std::size_t>(static_cast<std::size_t>(m), 1, n);
}

struct IForestParams {
  std::size_t trees = 100;
  double max_samples = 256;  // count, or a fraction of n when < 1
  std::uint64_t seed = 0;
};

class IsolationForest : public BatchModel {
 public:
  explicit IsolationForest(IForestParams p) : p_(p) {
    if (p_.trees < 1) throw std::invalid_argument("IF needs at least one tree");
  }
  std::string name() const override { return "IF"; }

  void fit(std::span<const Sample> data) override {
    if (data.empty()) throw std::invalid_argument("IF needs data");
    Rng rng(p_.seed);
    psi_ = resolve_max_samples(p_.max_samples, data.size());
    const auto height = static_cast<std::size_t>(std::ceil(std::log2(std::max<double>(2.0, static_cast<double>(psi_)))));
    trees_.clear();
    std::vector<std::size_t> idx(data.size());
    for (std::size_t t = 0; t < p_.trees; ++t) {
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<const Sample*> sub;
      for (std::size_t i = 0; i < psi_; ++i) sub.push_back(&data[idx[i]]);
      IsolationTreeModel tree;
      grow(tree, sub, 0, height, rng);
      trees_.push_back(std::move(tree));
    }
  }

  std::vector<double> score(std::span<const Sample> queries) const override {
    const double c = average_path_length(static_cast<double>(psi_));
    std::vector<double> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
      if (c <= 0.0) {
        out.push_back(0.5);
        continue;
      }
      double acc = 0.0;
      for (const auto& t : trees_) acc += t.path_length(q.features);
      out.push_back(std::exp2(-(acc / static_cast<double>(trees_.size())) / c));
    }
    return out;
  }

  double mean_path_length(std::span<const double> x) const {
    double acc = 0.0;
    for (const auto& t : trees_) acc += t.path_length(x);
    return acc / static_cast<double>(trees_.size());
  }

  std::size_t subsample_size() const { return psi_; }

 private:
  static int grow(IsolationTreeModel& tree, std::vector<const Sample*>& pts, std::size_t depth, std::size_t height,
                  Rng& rng) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[id].size = pts.size();
    tree.nodes[id].depth = depth;
    if (pts.size() <= 1 || depth >= height) return id;
    const std::size_t d = pts.front()->features.size();
    std::vector<std::size_t> usable;
    std::vector<double> lo(d, kInf), hi(d, -kInf);
    for (const auto* p : pts)
      for (std::size_t j = 0; j < d; ++j) lo[j] = std::min(lo[j], p->features[j]), hi[j] = std::max(hi[j], p->features[j]);
    for (std::size_t j = 0; j < d; ++j)
      if (hi[j] > lo[j]) usable.push_back(j);
    if (usable.empty()) return id;
    const std::size_t q = usable[uniform_index(rng, 0, usable.size() - 1)];
    double split = uniform_real(rng, lo[q], hi[q]);
    if (split <= lo[q]) split = std::nextafter(lo[q], hi[q]);
    std::vector<const Sample*> l, r;
    for (const auto* p : pts) (p->features[q] < split ? l : r).push_back(p);
    tree.nodes[id].feature = q;
    tree.nodes[id].split = split;
    const int li = grow(tree, l, depth + 1, height, rng);
    const int ri = grow(tree, r, depth + 1, height, rng);
    tree.nodes[id].left = li;
    tree.nodes[id].right = ri;
    return id;
  }

  IForestParams p_;
  std::size_t psi_ = 0;
  std::vector<IsolationTreeModel> trees_;
};

// ---------------------------------------------------------------------------
// One-class random forest

// One-class Gini improvement proxy for a split sending n_l / n_r of the n
// node samples left / right with volume fractions lambda_l / lambda_r.
inline double ocrf_proxy(double n_l, double n_r, double lambda_l, double lambda_r, double gamma = 1.0) {
  const double n = n_l + n_r;
  auto term = [&](double nc, double lam) {
    const double outliers = gamma * n * lam;
    return nc + outliers > 0.0 ? nc * outliers / (nc + outliers) : 0.0;
  };
  return term(n_l, lambda_l) + term(n_r, lambda_r);
}

struct OcrfSplit {
  double value = 0.0;
  double proxy = kInf;
  bool found = false;
};

// Best midpoint split of one feature within the node range [lo, hi].
inline OcrfSplit ocrf_best_split(std::vector<double> values, double lo, double hi, double gamma = 1.0) {
  OcrfSplit best;
  if (!(hi > lo) || values.size() < 2) return best;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    if (values[i] == values[i + 1]) continue;
    const double s = (values[i] + values[i + 1]) / 2.0;
    const double ll = (s - lo) / (hi - lo);
    const double nl = static_cast<double>(i + 1);
    const double pr = ocrf_proxy(nl, n - nl, ll, 1.0 - ll, gamma);
    if (pr < best.proxy) best = {s, pr, true};
  }
  return best;
}

struct OcrfParams {
  std::size_t trees = 100;
  double max_samples = 256;  // count, or a fraction of n when < 1
  double max_features = 1.0;  // fraction of features per tree
  double gamma = 1.0;
  std::uint64_t seed = 0;
};

class Ocrf : public BatchModel {
 public:
  explicit Ocrf(OcrfParams p) : p_(p) {
    if (p_.trees < 1) throw std::invalid_argument("OCRF needs at least one tree");
    if (!(p_.max_features > 0.0 && p_.max_features <= 1.0)) throw std::invalid_argument("max features must lie in (0,1]");
  }
  std::string name() const override { return "OCRF"; }

  void fit(std::span<const Sample> data) override {
    if (data.empty()) throw std::invalid_argument("OCRF needs data");
    Rng rng(p_.seed);
    const std::size_t d = dimension_of(data);
    psi_ = resolve_max_samples(p_.max_samples, data.size());
    const auto height = static_cast<std::size_t>(std::ceil(std::log2(std::max<double>(2.0, static_cast<double>(psi_)))));
    const std::size_t nf = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p_.max_features * static_cast<double>(d))));
    trees_.clear();
    degenerate_ = false;
    std::vector<std::size_t> idx(data.size()), feat(d);
    for (std::size_t t = 0; t < p_.trees; ++t) {
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      std::iota(feat.begin(), feat.end(), 0);
      std::shuffle(feat.begin(), feat.end(), rng);
      std::vector<std::size_t> features(feat.begin(), feat.begin() + static_cast<long>(nf));
      std::vector<const Sample*> sub;
      for (std::size_t i = 0; i < psi_; ++i) sub.push_back(&data[idx[i]]);
      std::vector<double> lo(d, kInf), hi(d, -kInf);
      for (const auto* s : sub)
        for (std::size_t j : features) lo[j] = std::min(lo[j], s->features[j]), hi[j] = std::max(hi[j], s->features[j]);
      // The root volume must be representable.
      double volume = 1.0;
      for (std::size_t j : features)
        if (hi[j] > lo[j]) volume *= hi[j] - lo[j];
      if (!std::isfinite(volume)) {
        degenerate_ = true;
        trees_.clear();
        return;
      }
      IsolationTreeModel tree;
      grow(tree, sub, features, lo, hi, 0, height);
      trees_.push_back(std::move(tree));
    }
  }

  std::vector<double> score(std::span<const Sample> queries) const override {
    const double c = average_path_length(static_cast<double>(psi_));
    std::vector<double> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
      if (degenerate_ || c <= 0.0) {
        out.push_back(0.5);
        continue;
      }
      double acc = 0.0;
      for (const auto& t : trees_) acc += t.path_length(q.features);
      out.push_back(std::exp2(-(acc / static_cast<double>(trees_.size())) / c));
    }
    return out;
  }

  bool degenerate() const { return degenerate_; }
  const std::vector<IsolationTreeModel>& trees() const { return trees_; }

 private:
  int grow(IsolationTreeModel& tree, std::vector<const Sample*>& pts, const std::vector<std::size_t>& features,
           std::vector<double>& lo, std::vector<double>& hi, std::size_t depth, std::size_t height) const {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[id].size = pts.size();
    tree.nodes[id].depth = depth;
    if (pts.size() <= 1 || depth >= height) return id;
    OcrfSplit best;
    std::size_t best_feature = 0;
    std::vector<double> vals(pts.size());
    for (std::size_t j : features) {
      for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = pts[i]->features[j];
      auto s = ocrf_best_split(vals, lo[j], hi[j], p_.gamma);
      if (s.found && s.proxy < best.proxy) best = s, best_feature = j;
    }
    if (!best.found) return id;
    std::vector<const Sample*> l, r;
    for (const auto* p : pts) (p->features[best_feature] < best.value ? l : r).push_back(p);
    tree.nodes[id].feature = best_feature;
    tree.nodes[id].split = best.value;
    const double saved_hi = hi[best_feature], saved_lo = lo[best_feature];
    hi[best_feature] = best.value;
    const int li = grow(tree, l, features, lo, hi, depth + 1, height);
    hi[best_feature] = saved_hi;
    lo[best_feature] = best.value;
    const int ri = grow(tree, r, features, lo, hi, depth + 1, height);
    lo[best_feature] = saved_lo;
    tree.nodes[id].left = li;
    tree.nodes[id].right = ri;
    return id;
  }

  OcrfParams p_;
  std::size_t psi_ = 0;
  bool degenerate_ = false;
  std::vector<IsolationTreeModel> trees_;
};

}  // namespace streamad
