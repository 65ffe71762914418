#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "streamad/core.hpp"

namespace streamad {

// ---------------------------------------------------------------------------
// Half-space trees

// Extended range centred on v: v +- 2 * max(v - fmin, fmax - v).
inline std::pair<double, double> hst_work_range(double fmin, double fmax, double v) {
  if (fmin > fmax) throw std::invalid_argument("feature minimum exceeds maximum");
  const double half = 2.0 * std::max(v - fmin, fmax - v);
  return {v - half, v + half};
}

// Original form for data scaled to [0,1].
inline std::pair<double, double> hst_work_range_unit(double v) {
  const double half = 2.0 * std::max(v, 1.0 - v);
  return {v - half, v + half};
}

class HalfSpaceTree {
 public:
  HalfSpaceTree() = default;

  // Explicit structure: internal nodes in breadth-first order (root first).
  HalfSpaceTree(std::size_t depth, std::vector<std::size_t> features, std::vector<double> values)
      : depth_(depth), feature_(std::move(features)), split_(std::move(values)) {
    if (depth_ < 1) throw std::invalid_argument("depth must be at least 1");
    if (feature_.size() != internal_count() || split_.size() != internal_count())
      throw std::invalid_argument("need one split per internal node");
    reset_masses();
  }

  // Random structure over the given per-feature work ranges.
  HalfSpaceTree(std::size_t depth, std::vector<std::pair<double, double>> ranges, Rng& rng) : depth_(depth) {
    if (depth_ < 1) throw std::invalid_argument("depth must be at least 1");
    const std::size_t d = ranges.size();
    feature_.resize(internal_count());
    split_.resize(internal_count());
    build(0, ranges, rng, d);
    reset_masses();
  }

  std::size_t depth() const { return depth_; }
  std::size_t internal_count() const { return (std::size_t{1} << depth_) - 1; }
  std::size_t leaf_count() const { return std::size_t{1} << depth_; }
  std::size_t node_count() const { return internal_count() + leaf_count(); }

  std::size_t leaf_of(std::span<const double> x) const {
    std::size_t node = 0;
    while (node < internal_count()) node = x[feature_[node]] < split_[node] ? 2 * node + 1 : 2 * node + 2;
    return node - internal_count();
  }

  void add(std::size_t leaf, std::size_t window_id) {
    mass_[leaf] += 1;
    last_update_[leaf] = window_id;
  }

  double score(std::span<const double> x) const {
    return static_cast<double>(mass_[leaf_of(x)]) * std::ldexp(1.0, static_cast<int>(depth_));
  }

  std::size_t total_mass() const { return std::accumulate(mass_.begin(), mass_.end(), std::size_t{0}); }
  const std::vector<std::size_t>& masses() const { return mass_; }
  const std::vector<std::size_t>& last_updates() const { return last_update_; }

  // Removes `excess` units, one per leaf per pass, oldest-updated leaves
  // first; leaves touched in `current_window` are used only when the older
  // ones run dry.
  void forget(std::size_t excess, std::size_t current_window) {
    for (int pass_recent = 0; pass_recent < 2 && excess > 0; ++pass_recent) {
      while (excess > 0) {
        std::vector<std::size_t> cand;
        for (std::size_t i = 0; i < mass_.size(); ++i)
          if (mass_[i] > 0 && (pass_recent == 1 || last_update_[i] < current_window)) cand.push_back(i);
        if (cand.empty()) break;
        std::stable_sort(cand.begin(), cand.end(),
                         [&](std::size_t a, std::size_t b) { return last_update_[a] < last_update_[b]; });
        for (std::size_t i : cand) {
          if (excess == 0) break;
          mass_[i] -= 1;
          --excess;
        }
      }
    }
  }

  std::size_t structure_hash() const {
    std::size_t h = depth_;
    for (std::size_t i = 0; i < feature_.size(); ++i) {
      h = h * 1000003u ^ feature_[i];
      h = h * 1000003u ^ std::hash<double>{}(split_[i]);
    }
    return h;
  }

  const std::vector<std::size_t>& split_features() const { return feature_; }
  const std::vector<double>& split_values() const { return split_; }

 private:
  void reset_masses() {
    mass_.assign(leaf_count(), 0);
    last_update_.assign(leaf_count(), 0);
  }

  void build(std::size_t node, std::vector<std::pair<double, double>>& ranges, Rng& rng, std::size_t d) {
    if (node >= internal_count()) return;
    const std::size_t q = uniform_index(rng, 0, d - 1);
    const auto saved = ranges[q];
    const double mid = (saved.first + saved.second) / 2.0;
    feature_[node] = q;
    split_[node] = mid;
    ranges[q].second = mid;
    build(2 * node + 1, ranges, rng, d);
    ranges[q] = {mid, saved.second};
    build(2 * node + 2, ranges, rng, d);
    ranges[q] = saved;
  }

  std::size_t depth_ = 0;
  std::vector<std::size_t> feature_;
  std::vector<double> split_;
  std::vector<std::size_t> mass_;
  std::vector<std::size_t> last_update_;
};

struct HstParams {
  std::size_t trees = 25;
  std::size_t depth = 8;
  std::optional<std::size_t> forget_threshold;  // set: HSTF
  bool unit_work_range = false;
  std::uint64_t seed = 0;
};

class HalfSpaceTrees : public Detector {
 public:
  explicit HalfSpaceTrees(HstParams p) : p_(p), rng_(p.seed) {
    if (p_.trees < 1) throw std::invalid_argument("need at least one tree");
    if (p_.depth < 1) throw std::invalid_argument("depth must be at least 1");
    if (p_.forget_threshold && *p_.forget_threshold < 1) throw std::invalid_argument("forget threshold must be positive");
  }

  // Ensemble with a fixed, explicit structure (masses empty).
  HalfSpaceTrees(HstParams p, std::vector<HalfSpaceTree> trees) : HalfSpaceTrees(p) { trees_ = std::move(trees); }

  std::string name() const override { return p_.forget_threshold ? "HSTF" : "HST"; }
  ScoreOrientation orientation() const override { return ScoreOrientation::LowerIsAnomalous; }

  void train(std::span<const Sample> samples) override {
    if (trees_.empty()) {
      if (samples.empty()) throw std::invalid_argument("HST needs training samples");
      const std::size_t d = dimension_of(samples);
      std::vector<double> lo(d, kInf), hi(d, -kInf);
      for (const auto& s : samples)
        for (std::size_t j = 0; j < d; ++j) lo[j] = std::min(lo[j], s.features[j]), hi[j] = std::max(hi[j], s.features[j]);
      for (std::size_t t = 0; t < p_.trees; ++t) {
        std::vector<std::pair<double, double>> ranges(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double v = uniform_real(rng_, lo[j], hi[j]);
          ranges[j] = p_.unit_work_range ? hst_work_range_unit(v) : hst_work_range(lo[j], hi[j], v);
        }
        trees_.emplace_back(p_.depth, std::move(ranges), rng_);
      }
    }
    for (const auto& s : samples) insert(s);
    apply_forgetting();
  }

  std::vector<double> process_slide(const SlideStep& step) override {
    if (trees_.empty()) throw std::logic_error("HST used before training");
    ++window_id_;
    std::vector<double> scores;
    scores.reserve(step.window.size());
    for (const auto& s : step.window) scores.push_back(score(s.features));
    for (const auto& s : step.arrived) insert(s);
    apply_forgetting();
    return scores;
  }

  double score(std::span<const double> x) const {
    double acc = 0.0;
    for (const auto& t : trees_) acc += t.score(x);
    return acc;
  }

  const std::vector<HalfSpaceTree>& trees() const { return trees_; }
  std::size_t inserted() const { return inserted_; }

 private:
  void insert(const Sample& s) {
    for (auto& t : trees_) t.add(t.leaf_of(s.features), window_id_);
    ++inserted_;
  }

  void apply_forgetting() {
    if (!p_.forget_threshold) return;
    for (auto& t : trees_) {
      const std::size_t total = t.total_mass();
      if (total > *p_.forget_threshold) t.forget(total - *p_.forget_threshold, window_id_);
    }
  }

  HstParams p_;
  Rng rng_;
  std::vector<HalfSpaceTree> trees_;
  std::size_t window_id_ = 0;
  std::size_t inserted_ = 0;
};

// ---------------------------------------------------------------------------
// Robust random cut trees

// Path entries are (points under the node, points under its sibling), from the
// leaf upwards. CoDisp is the largest sibling/node ratio.
inline double codisp_from_path(std::span<const std::pair<double, double>> path) {
  double best = 0.0;
  for (auto [node, sibling] : path) best = std::max(best, sibling / node);
  return best;
}

class RandomCutTree {
 public:
  struct Node {
    int parent = -1, left = -1, right = -1;
    std::size_t cut_dim = 0;
    double cut = 0.0;
    std::vector<double> lo, hi;  // bounding box; a leaf's box is its point
    std::size_t n = 0;           // points beneath (replicas included)
    bool leaf() const { return left < 0; }
  };

  // Inserts a point under an opaque id; returns the leaf index.
  int insert(std::size_t id, std::span<const double> x, Rng& rng) {
    if (root_ < 0) {
      root_ = new_leaf(x);
      return register_point(id, root_);
    }
    // Exact duplicate: follow the cuts down to the only candidate leaf.
    int node = root_;
    while (!nodes_[node].leaf()) node = x[nodes_[node].cut_dim] <= nodes_[node].cut ? nodes_[node].left : nodes_[node].right;
    if (std::equal(x.begin(), x.end(), nodes_[node].lo.begin())) {
      for (int a = node; a >= 0; a = nodes_[a].parent) nodes_[a].n += 1;
      return register_point(id, node);
    }

    node = root_;
    const std::size_t d = x.size();
    std::vector<double> span(d);
    while (true) {
      const Node& cur = nodes_[node];
      double total = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        span[j] = std::max(cur.hi[j], x[j]) - std::min(cur.lo[j], x[j]);
        total += span[j];
      }
      double r = uniform_real(rng, 0.0, total);
      std::size_t dim = 0;
      double acc = 0.0;
      for (; dim < d; ++dim) {
        if (span[dim] <= 0.0) continue;
        acc += span[dim];
        if (acc >= r) break;
      }
      if (dim == d) {
        dim = d - 1;
        while (span[dim] <= 0.0) --dim;
        acc = total;
      }
      const double lo_hat = std::min(cur.lo[dim], x[dim]);
      const double cut = lo_hat + acc - r;
      const bool leaf_left = cut <= cur.lo[dim] && x[dim] <= cut;
      const bool leaf_right = cut >= cur.hi[dim] && x[dim] > cut;
      if (leaf_left || leaf_right || cur.leaf()) {
        const bool left = cur.leaf() ? x[dim] <= cut : leaf_left;
        return splice(id, node, x, dim, cut, left);
      }
      node = x[cur.cut_dim] <= cur.cut ? cur.left : cur.right;
    }
  }

  // Removes one replica of the point registered under id.
  void forget(std::size_t id) {
    auto it = leaf_of_.find(id);
    if (it == leaf_of_.end()) return;
    const int leaf = it->second;
    leaf_of_.erase(it);
    if (nodes_[leaf].n > 1) {
      for (int a = leaf; a >= 0; a = nodes_[a].parent) nodes_[a].n -= 1;
      return;
    }
    --leaves_;
    const int p = nodes_[leaf].parent;
    release(leaf);
    if (p < 0) {
      root_ = -1;
      return;
    }
    const int sib = nodes_[p].left == leaf ? nodes_[p].right : nodes_[p].left;
    const int g = nodes_[p].parent;
    nodes_[sib].parent = g;
    if (g < 0) {
      root_ = sib;
    } else if (nodes_[g].left == p) {
      nodes_[g].left = sib;
    } else {
      nodes_[g].right = sib;
    }
    release(p);
    for (int a = g; a >= 0; a = nodes_[a].parent) {
      nodes_[a].n -= 1;
      tighten(a);
    }
  }

  // Drops the oldest remembered point; false when empty.
  bool forget_oldest() {
    while (!order_.empty()) {
      const std::size_t id = order_.front();
      order_.pop_front();
      if (leaf_of_.count(id)) {
        forget(id);
        return true;
      }
    }
    return false;
  }

  double codisp(int leaf) const {
    std::vector<std::pair<double, double>> path;
    for (int node = leaf; node != root_ && node >= 0; node = nodes_[node].parent) {
      const int p = nodes_[node].parent;
      const int sib = nodes_[p].left == node ? nodes_[p].right : nodes_[p].left;
      path.push_back({static_cast<double>(nodes_[node].n), static_cast<double>(nodes_[sib].n)});
    }
    return codisp_from_path(path);
  }

  // Displacement at the leaf itself (sibling size / leaf size).
  double leaf_disp(int leaf) const {
    const int p = nodes_[leaf].parent;
    if (p < 0) return 0.0;
    const int sib = nodes_[p].left == leaf ? nodes_[p].right : nodes_[p].left;
    return static_cast<double>(nodes_[sib].n) / static_cast<double>(nodes_[leaf].n);
  }

  std::size_t leaf_count() const { return leaves_; }
  std::size_t point_count() const { return root_ < 0 ? 0 : nodes_[root_].n; }
  int root() const { return root_; }
  const Node& node(int i) const { return nodes_[i]; }
  int leaf_for(std::size_t id) const { return leaf_of_.at(id); }

  // Leaves reachable from the root.
  std::vector<int> leaves() const {
    std::vector<int> out, stack;
    if (root_ >= 0) stack.push_back(root_);
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (nodes_[v].leaf()) {
        out.push_back(v);
      } else {
        stack.push_back(nodes_[v].left);
        stack.push_back(nodes_[v].right);
      }
    }
    return out;
  }

 private:
  int alloc() {
    if (!free_.empty()) {
      int i = free_.back();
      free_.pop_back();
      nodes_[i] = Node{};
      return i;
    }
    nodes_.emplace_back();
    return static_cast<int>(nodes_.size() - 1);
  }

  void release(int i) {
    nodes_[i] = Node{};
    free_.push_back(i);
  }

  int new_leaf(std::span<const double> x) {
    const int i = alloc();
    nodes_[i].lo.assign(x.begin(), x.end());
    nodes_[i].hi = nodes_[i].lo;
    nodes_[i].n = 1;
    ++leaves_;
    return i;
  }

  int register_point(std::size_t id, int leaf) {
    leaf_of_[id] = leaf;
    order_.push_back(id);
    return leaf;
  }

  int splice(std::size_t id, int node, std::span<const double> x, std::size_t dim, double cut, bool leaf_left) {
    const int parent = nodes_[node].parent;
    const int leaf = new_leaf(x);
    const int branch = alloc();
    Node& b = nodes_[branch];
    b.cut_dim = dim;
    b.cut = cut;
    b.left = leaf_left ? leaf : node;
    b.right = leaf_left ? node : leaf;
    b.parent = parent;
    b.n = nodes_[node].n + 1;
    b.lo = nodes_[node].lo;
    b.hi = nodes_[node].hi;
    for (std::size_t j = 0; j < x.size(); ++j) b.lo[j] = std::min(b.lo[j], x[j]), b.hi[j] = std::max(b.hi[j], x[j]);
    nodes_[leaf].parent = branch;
    nodes_[node].parent = branch;
    if (parent < 0) {
      root_ = branch;
    } else if (nodes_[parent].left == node) {
      nodes_[parent].left = branch;
    } else {
      nodes_[parent].right = branch;
    }
    for (int a = parent; a >= 0; a = nodes_[a].parent) {
      Node& an = nodes_[a];
      an.n += 1;
      for (std::size_t j = 0; j < x.size(); ++j) an.lo[j] = std::min(an.lo[j], x[j]), an.hi[j] = std::max(an.hi[j], x[j]);
    }
    return register_point(id, leaf);
  }

  void tighten(int a) {
    Node& v = nodes_[a];
    const Node& l = nodes_[v.left];
    const Node& r = nodes_[v.right];
    for (std::size_t j = 0; j < v.lo.size(); ++j) {
      v.lo[j] = std::min(l.lo[j], r.lo[j]);
      v.hi[j] = std::max(l.hi[j], r.hi[j]);
    }
  }

  std::vector<Node> nodes_;
  std::vector<int> free_;
  int root_ = -1;
  std::size_t leaves_ = 0;
  std::unordered_map<std::size_t, int> leaf_of_;
  std::deque<std::size_t> order_;
};

struct RrcfParams {
  std::size_t trees = 25;
  std::size_t max_samples = 256;
  std::size_t forget_threshold = 256;
  std::size_t window_size = 128;  // sizes the bootstrap pool
  std::uint64_t seed = 0;
};

class Rrcf : public Detector {
 public:
  explicit Rrcf(RrcfParams p) : p_(p), rng_(p.seed), trees_(p.trees) {
    if (p_.trees < 1) throw std::invalid_argument("need at least one tree");
    if (p_.forget_threshold < 1) throw std::invalid_argument("forget threshold must be positive");
    if (p_.max_samples < 1 || p_.window_size < 1) throw std::invalid_argument("bad RRCF sizes");
  }

  std::string name() const override { return "RRCF"; }
  ScoreOrientation orientation() const override { return ScoreOrientation::HigherIsAnomalous; }

  void train(std::span<const Sample> samples) override {
    const std::size_t windows = (p_.trees * p_.max_samples + p_.window_size - 1) / p_.window_size;
    const std::size_t pool = std::min(samples.size(), windows * p_.window_size);
    std::vector<std::size_t> idx(pool);
    for (auto& tree : trees_) {
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng_);
      const std::size_t take = std::min(p_.max_samples, pool);
      for (std::size_t i = 0; i < take; ++i) tree.insert(next_id_++, samples[idx[i]].features, rng_);
      while (tree.leaf_count() > p_.forget_threshold) tree.forget_oldest();
    }
  }

  // Scores each arriving sample at insertion; window samples keep the score
  // they received when they arrived.
  std::vector<double> process_slide(const SlideStep& step) override {
    for (const auto& s : step.expired) cache_.erase(s.ordinal);
    for (const auto& s : step.arrived) cache_[s.ordinal] = insert_and_score(s.features);
    std::vector<double> out;
    out.reserve(step.window.size());
    for (const auto& s : step.window) {
      auto it = cache_.find(s.ordinal);
      out.push_back(it == cache_.end() ? 0.0 : it->second);
    }
    return out;
  }

  double insert_and_score(std::span<const double> x) {
    const std::size_t id = next_id_++;
    double acc = 0.0;
    for (auto& tree : trees_) {
      const int leaf = tree.insert(id, x, rng_);
      acc += tree.codisp(leaf);
      while (tree.leaf_count() > p_.forget_threshold) tree.forget_oldest();
    }
    return acc / static_cast<double>(trees_.size());
  }

  const std::vector<RandomCutTree>& trees() const { return trees_; }

 private:
  RrcfParams p_;
  Rng rng_;
  std::vector<RandomCutTree> trees_;
  std::size_t next_id_ = 0;
  std::unordered_map<std::size_t, double> cache_;
};

}  // namespace streamad
