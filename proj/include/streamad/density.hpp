#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "streamad/core.hpp"
#include "streamad/projection.hpp"

namespace streamad {

// ---------------------------------------------------------------------------
// RS-Hash

struct RsHashParams {
  std::size_t subsample = 1000;  // s; clipped to the training size
  std::size_t tables = 4;        // h
  std::size_t repetitions = 25;  // m
  std::size_t width = 1 << 12;   // buckets per table
  bool exact = false;            // exact counts instead of a sketch
  std::uint64_t seed = 0;
};

// Subspace size bounds for locality f and subsample size s.
inline std::pair<double, double> rshash_dimension_bounds(double f, double s) {
  const double base = std::max(2.0, 1.0 / f);
  const double l = std::log(s) / std::log(base);
  return {1.0 + 0.5 * l, l};
}

inline std::size_t rshash_dimension(double f, double s, std::size_t d, Rng& rng) {
  auto [lo, hi] = rshash_dimension_bounds(f, s);
  const auto a = static_cast<long>(std::ceil(lo));
  const auto b = static_cast<long>(std::floor(hi));
  long r = a <= b ? static_cast<long>(uniform_index(rng, static_cast<std::size_t>(std::max(a, 1L)),
                                                    static_cast<std::size_t>(std::max(b, 1L))))
                  : std::lround(lo);
  return static_cast<std::size_t>(std::clamp<long>(r, 1, static_cast<long>(d)));
}

class RsHash : public Detector {
 public:
  struct Repetition {
    double locality = 0.5;
    std::vector<std::size_t> features;
    std::vector<double> lo, hi;  // per selected feature
    std::optional<CountMinSketch> sketch;
    std::unordered_map<std::uint64_t, std::uint32_t> exact;
  };

  explicit RsHash(RsHashParams p) : p_(p), rng_(p.seed) {
    if (p_.subsample < 1 || p_.tables < 1 || p_.repetitions < 1 || p_.width < 1)
      throw std::invalid_argument("RS-Hash needs positive s, h, m and width");
  }

  std::string name() const override { return "RS-Hash"; }
  ScoreOrientation orientation() const override { return ScoreOrientation::LowerIsAnomalous; }

  void train(std::span<const Sample> samples) override {
    if (samples.empty()) throw std::invalid_argument("RS-Hash needs training samples");
    const std::size_t d = dimension_of(samples);
    const std::size_t s = std::min(p_.subsample, samples.size());
    const double root = std::sqrt(static_cast<double>(s));
    double flo = 1.0 / root, fhi = 1.0 - 1.0 / root;
    if (flo > fhi) std::swap(flo, fhi);
    reps_.clear();
    std::vector<std::size_t> idx(samples.size()), feat(d);
    for (std::size_t i = 0; i < p_.repetitions; ++i) {
      Repetition rep;
      rep.locality = uniform_real(rng_, flo, fhi);
      const std::size_t r = rshash_dimension(rep.locality, static_cast<double>(s), d, rng_);
      std::iota(feat.begin(), feat.end(), 0);
      std::shuffle(feat.begin(), feat.end(), rng_);
      rep.features.assign(feat.begin(), feat.begin() + static_cast<long>(r));
      std::sort(rep.features.begin(), rep.features.end());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng_);
      rep.lo.assign(r, kInf);
      rep.hi.assign(r, -kInf);
      for (std::size_t k = 0; k < s; ++k)
        for (std::size_t j = 0; j < r; ++j) {
          const double v = samples[idx[k]].features[rep.features[j]];
          rep.lo[j] = std::min(rep.lo[j], v);
          rep.hi[j] = std::max(rep.hi[j], v);
        }
      if (!p_.exact) rep.sketch.emplace(p_.tables, p_.width, rng_);
      reps_.push_back(std::move(rep));
      for (std::size_t k = 0; k < s; ++k) add(reps_.back(), samples[idx[k]].features);
    }
  }

  std::vector<double> process_slide(const SlideStep& step) override {
    if (reps_.empty()) throw std::logic_error("RS-Hash used before training");
    for (const auto& e : step.expired) {
      auto it = cache_.find(e.ordinal);
      if (it == cache_.end()) continue;
      for (auto& rep : reps_) remove(rep, e.features);
      cache_.erase(it);
    }
    for (const auto& a : step.arrived) {
      cache_[a.ordinal] = score(a.features);
      for (auto& rep : reps_) add(rep, a.features);
    }
    std::vector<double> out;
    out.reserve(step.window.size());
    for (const auto& s : step.window) {
      auto it = cache_.find(s.ordinal);
      out.push_back(it == cache_.end() ? score(s.features) : it->second);
    }
    return out;
  }

  double score(std::span<const double> x) const {
    double acc = 0.0;
    for (const auto& rep : reps_) acc += std::log2(static_cast<double>(count(rep, x)) + 1.0);
    return acc / static_cast<double>(reps_.size());
  }

  // Grid coordinates of x in a repetition: floor(normalised / f) on the
  // subspace, -1 elsewhere.
  std::vector<std::int64_t> grid_key(const Repetition& rep, std::span<const double> x) const {
    std::vector<std::int64_t> key(x.size(), -1);
    for (std::size_t j = 0; j < rep.features.size(); ++j) {
      const double span = rep.hi[j] - rep.lo[j];
      double v = span > 0.0 ? (x[rep.features[j]] - rep.lo[j]) / span : 0.0;
      v = std::clamp(v, 0.0, 1.0);
      key[rep.features[j]] = static_cast<std::int64_t>(std::floor(v / rep.locality));
    }
    return key;
  }

  std::uint64_t key_hash(const Repetition& rep, std::span<const double> x) const {
    const auto key = grid_key(rep, x);
    std::uint64_t h = 0;
    for (std::size_t j = 0; j < key.size(); ++j) h = mix64(h ^ coordinate_hash(j, key[j]));
    return h;
  }

  std::uint32_t count(const Repetition& rep, std::span<const double> x) const {
    const auto h = key_hash(rep, x);
    if (rep.sketch) return rep.sketch->estimate(h);
    auto it = rep.exact.find(h);
    return it == rep.exact.end() ? 0u : it->second;
  }

  const std::vector<Repetition>& repetitions() const { return reps_; }

 private:
  void add(Repetition& rep, std::span<const double> x) {
    const auto h = key_hash(rep, x);
    if (rep.sketch) {
      rep.sketch->add(h);
    } else {
      rep.exact[h] += 1;
    }
  }

  void remove(Repetition& rep, std::span<const double> x) {
    const auto h = key_hash(rep, x);
    if (rep.sketch) {
      rep.sketch->remove(h);
    } else if (auto it = rep.exact.find(h); it != rep.exact.end() && --it->second == 0) {
      rep.exact.erase(it);
    }
  }

  RsHashParams p_;
  Rng rng_;
  std::vector<Repetition> reps_;
  std::unordered_map<std::size_t, double> cache_;
};

// ---------------------------------------------------------------------------
// STARE

struct StareParams {
  double radius = 1.0;        // cell diagonal
  std::size_t neighbors = 5;  // nearest kernel centres
  double gamma = 0.01;        // skip threshold on (arrivals + expiries) / window size
  std::size_t top_n = 0;      // 0: report nothing beyond scores
};

class Stare : public Detector {
 public:
  using CellId = std::vector<std::int64_t>;

  struct Cell {
    std::vector<double> sum;
    std::size_t weight = 0;
    std::size_t churn = 0;
    std::vector<double> centre() const {
      std::vector<double> c(sum);
      for (auto& v : c) v /= static_cast<double>(weight);
      return c;
    }
  };

  explicit Stare(StareParams p) : p_(p) {
    if (!(p_.radius > 0.0)) throw std::invalid_argument("STARE cell diagonal must be positive");
    if (p_.neighbors < 1) throw std::invalid_argument("STARE needs at least one kernel centre");
    if (p_.gamma < 0.0 || p_.gamma > 1.0) throw std::invalid_argument("STARE gamma must lie in [0,1]");
  }

  std::string name() const override { return "STARE"; }
  ScoreOrientation orientation() const override { return ScoreOrientation::HigherIsAnomalous; }

  void train(std::span<const Sample> samples) override {
    if (!samples.empty()) d_ = dimension_of(samples);
  }

  std::vector<double> process_slide(const SlideStep& step) override {
    if (step.window.empty()) return {};
    d_ = step.window.front().features.size();
    for (auto& [_, c] : cells_) c.churn = 0;
    for (const auto& s : step.expired) {
      auto it = cells_.find(cell_of(s.features));
      if (it == cells_.end()) continue;
      Cell& c = it->second;
      for (std::size_t j = 0; j < d_; ++j) c.sum[j] -= s.features[j];
      c.weight -= 1;
      c.churn += 1;
      cache_.erase(s.ordinal);
    }
    for (const auto& s : step.arrived) {
      Cell& c = cells_[cell_of(s.features)];
      if (c.sum.empty()) c.sum.assign(d_, 0.0);
      for (std::size_t j = 0; j < d_; ++j) c.sum[j] += s.features[j];
      c.weight += 1;
      c.churn += 1;
    }
    // Cells emptied this slide still count as changed for skipping purposes.
    changed_.clear();
    for (auto it = cells_.begin(); it != cells_.end();) {
      const double rel = static_cast<double>(it->second.churn) / static_cast<double>(step.window.size());
      if (rel > p_.gamma) changed_.insert(it->first);
      if (it->second.weight == 0) {
        it = cells_.erase(it);
      } else {
        ++it;
      }
    }
    index_centres();

    recomputed_.clear();
    std::vector<double> out;
    out.reserve(step.window.size());
    for (const auto& s : step.window) {
      auto near = nearest(s.features);
      std::set<CellId> ids;
      for (std::size_t i : near) ids.insert(ids_[i]);
      double density;
      auto it = cache_.find(s.ordinal);
      bool reuse = it != cache_.end();
      if (reuse) {
        for (const auto& c : it->second.cells) reuse &= !changed_.count(c) && cells_.count(c);
        for (const auto& c : ids) reuse &= !changed_.count(c);
      }
      if (reuse) {
        density = it->second.density;
      } else {
        density = kde(s.features, near);
        recomputed_.insert(s.ordinal);
      }
      cache_[s.ordinal] = {density, ids};
      double mu = 0.0, var = 0.0;
      for (std::size_t i : near) mu += centre_density_[i];
      mu /= static_cast<double>(near.size());
      for (std::size_t i : near) var += (centre_density_[i] - mu) * (centre_density_[i] - mu);
      const double sigma = std::sqrt(var / static_cast<double>(near.size()));
      out.push_back(sigma > 0.0 ? (mu - density) / sigma : 0.0);
    }
    top_.clear();
    if (p_.top_n) {
      std::vector<std::size_t> order(out.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return out[a] > out[b]; });
      for (std::size_t i = 0; i < std::min(p_.top_n, order.size()); ++i) top_.push_back(step.window[order[i]].ordinal);
    }
    return out;
  }

  double bandwidth() const { return p_.radius / std::sqrt(static_cast<double>(d_)); }

  CellId cell_of(std::span<const double> x) const {
    const double side = bandwidth();
    CellId id(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) id[j] = static_cast<std::int64_t>(std::floor(x[j] / side));
    return id;
  }

  // Weighted product-kernel density over the given kernel centres.
  double kde(std::span<const double> x, const std::vector<std::size_t>& near) const {
    const double h = bandwidth();
    const double norm = 1.0 / (h * std::sqrt(2.0 * M_PI));
    double total = 0.0;
    for (std::size_t i : near) total += static_cast<double>(weights_[i]);
    double acc = 0.0;
    for (std::size_t i : near) {
      double k = 1.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double u = (x[j] - centres_[i][j]) / h;
        k *= norm * std::exp(-0.5 * u * u);
      }
      acc += static_cast<double>(weights_[i]) / total * k;
    }
    return acc;
  }

  // Indices of the k nearest kernel centres (ties by cell id order).
  std::vector<std::size_t> nearest(std::span<const double> x) const {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(centres_.size());
    for (std::size_t i = 0; i < centres_.size(); ++i) dist.push_back({squared_distance(x, centres_[i]), i});
    const std::size_t k = std::min(p_.neighbors, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(dist[i].second);
    return out;
  }

  const std::map<CellId, Cell>& cells() const { return cells_; }
  const std::set<std::size_t>& recomputed() const { return recomputed_; }
  const std::vector<std::size_t>& top() const { return top_; }

 private:
  struct Cached {
    double density;
    std::set<CellId> cells;
  };

  void index_centres() {
    ids_.clear();
    centres_.clear();
    weights_.clear();
    for (const auto& [id, c] : cells_) {
      ids_.push_back(id);
      centres_.push_back(c.centre());
      weights_.push_back(c.weight);
    }
    centre_density_.assign(centres_.size(), 0.0);
    for (std::size_t i = 0; i < centres_.size(); ++i) centre_density_[i] = kde(centres_[i], nearest(centres_[i]));
  }

  StareParams p_;
  std::size_t d_ = 1;
  std::map<CellId, Cell> cells_;
  std::set<CellId> changed_;
  std::vector<CellId> ids_;
  std::vector<std::vector<double>> centres_;
  std::vector<std::size_t> weights_;
  std::vector<double> centre_density_;
  std::unordered_map<std::size_t, Cached> cache_;
  std::set<std::size_t> recomputed_;
  std::vector<std::size_t> top_;
};

}  // namespace streamad
