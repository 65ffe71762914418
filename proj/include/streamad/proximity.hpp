#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "streamad/core.hpp"

namespace streamad {

struct DistanceParams {
  double radius = 1.0;  // R
  std::size_t k = 5;    // K, minimum neighbours of a normal sample

  void validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
    if (k < 1) throw std::invalid_argument("K must be at least 1");
  }
};

// Shared bookkeeping for the three distance-threshold detectors: live samples
// by ordinal and the last labels/counts for the scored window.
class DistanceDetectorBase : public Detector {
 public:
  explicit DistanceDetectorBase(DistanceParams p) : p_(p) { p_.validate(); }
  ScoreOrientation orientation() const override { return ScoreOrientation::HigherIsAnomalous; }
  void train(std::span<const Sample>) override {}
  const DistanceParams& params() const { return p_; }
  // true = anomaly, aligned with the last scored window
  const std::vector<bool>& last_labels() const { return labels_; }
  const std::vector<std::size_t>& last_counts() const { return counts_; }
  std::size_t live_count() const { return live_.size(); }

 protected:
  const std::vector<double>& x(std::size_t ordinal) const { return live_.at(ordinal); }
  bool within(std::size_t a, std::size_t b) const {
    return squared_distance(x(a), x(b)) <= p_.radius * p_.radius;
  }

  DistanceParams p_;
  std::unordered_map<std::size_t, std::vector<double>> live_;
  std::vector<bool> labels_;
  std::vector<std::size_t> counts_;
};

// ---------------------------------------------------------------------------
// MCOD: micro-clusters of radius R/2 plus a list of potential outliers (PD).

class Mcod : public DistanceDetectorBase {
 public:
  struct Cluster {
    std::vector<double> center;
    std::set<std::size_t> members;
  };

  explicit Mcod(DistanceParams p) : DistanceDetectorBase(p) {}
  std::string name() const override { return "MCOD"; }

  std::vector<double> process_slide(const SlideStep& step) override {
    std::set<std::size_t> touched;
    for (const auto& s : step.expired) {
      auto it = cluster_of_.find(s.ordinal);
      if (it != cluster_of_.end()) {
        clusters_.at(it->second).members.erase(s.ordinal);
        touched.insert(it->second);
        cluster_of_.erase(it);
      } else {
        pd_.erase(s.ordinal);
      }
      live_.erase(s.ordinal);
    }
    std::vector<std::size_t> orphans;
    for (std::size_t id : touched) {
      auto& c = clusters_.at(id);
      if (c.members.size() < p_.k + 1) {
        for (std::size_t m : c.members) {
          cluster_of_.erase(m);
          orphans.push_back(m);
        }
        clusters_.erase(id);
      }
    }
    std::sort(orphans.begin(), orphans.end());
    for (std::size_t o : orphans) place(o);
    for (const auto& s : step.arrived) {
      live_[s.ordinal] = s.features;
      place(s.ordinal);
    }
    return score_window(step.window);
  }

  const std::map<std::size_t, Cluster>& clusters() const { return clusters_; }
  const std::set<std::size_t>& pd() const { return pd_; }

  // Exact number of live samples within R of the given live sample.
  std::size_t neighbor_count(std::size_t ordinal) const {
    const auto& px = x(ordinal);
    const double r = p_.radius;
    std::size_t count = 0;
    auto check = [&](std::size_t q) {
      if (q != ordinal && squared_distance(px, x(q)) <= r * r) ++count;
    };
    for (std::size_t q : pd_) check(q);
    for (const auto& [id, c] : clusters_)
      if (distance(px, c.center) <= 1.5 * r)
        for (std::size_t q : c.members) check(q);
    return count;
  }

 private:
  void place(std::size_t o) {
    const auto& px = x(o);
    const double half = p_.radius / 2.0;
    double best = kInf;
    std::size_t best_id = 0;
    for (const auto& [id, c] : clusters_) {
      const double dd = distance(px, c.center);
      if (dd < best) best = dd, best_id = id;
    }
    if (best <= half) {
      clusters_.at(best_id).members.insert(o);
      cluster_of_[o] = best_id;
      return;
    }
    std::vector<std::size_t> close;
    for (std::size_t q : pd_)
      if (distance(px, x(q)) <= half) close.push_back(q);
    if (close.size() >= p_.k) {
      const std::size_t id = next_id_++;
      Cluster c{px, {o}};
      cluster_of_[o] = id;
      for (std::size_t q : close) {
        pd_.erase(q);
        c.members.insert(q);
        cluster_of_[q] = id;
      }
      clusters_.emplace(id, std::move(c));
      return;
    }
    pd_.insert(o);
  }

  std::vector<double> score_window(std::span<const Sample> window) {
    std::vector<double> scores;
    labels_.clear();
    counts_.clear();
    for (const auto& s : window) {
      const std::size_t count = neighbor_count(s.ordinal);
      double nearest = clusters_.empty() ? p_.radius : kInf;
      for (const auto& [id, c] : clusters_) nearest = std::min(nearest, distance(s.features, c.center));
      counts_.push_back(count);
      labels_.push_back(count < p_.k);
      scores.push_back(count == 0 ? kInf : nearest / static_cast<double>(count));
    }
    return scores;
  }

  std::map<std::size_t, Cluster> clusters_;
  std::unordered_map<std::size_t, std::size_t> cluster_of_;
  std::set<std::size_t> pd_;
  std::size_t next_id_ = 0;
};

// ---------------------------------------------------------------------------
// CPOD: core points with distance bands E_0..E_3 of width R/2 up to 2R.

class Cpod : public DistanceDetectorBase {
 public:
  static constexpr double kEpsilon = 1e-9;

  struct Core {
    std::vector<double> location;
    std::array<std::set<std::size_t>, 4> bands;
  };

  enum class ProbeCase { WithinHalfR = 1, WithinR = 2, Within2R = 3, Beyond2R = 4 };

  explicit Cpod(DistanceParams p) : DistanceDetectorBase(p) {}
  std::string name() const override { return "CPOD"; }

  // Replaces the core set with fixed locations and turns off automatic core
  // formation. Bands are rebuilt from the live samples.
  void set_cores(const std::vector<std::vector<double>>& locations) {
    auto_cores_ = false;
    cores_.clear();
    links_.clear();
    for (const auto& loc : locations) {
      const std::size_t id = next_id_++;
      cores_.emplace(id, Core{loc, {}});
    }
    for (const auto& [o, v] : live_) link(o);
  }

  std::vector<double> process_slide(const SlideStep& step) override {
    for (const auto& s : step.expired) {
      unlink(s.ordinal);
      live_.erase(s.ordinal);
    }
    if (auto_cores_) {
      for (auto it = cores_.begin(); it != cores_.end();) {
        const auto& b = it->second.bands;
        if (b[0].empty() && b[1].empty()) {
          for (int k = 2; k < 4; ++k)
            for (std::size_t o : b[k]) std::erase_if(links_[o], [&](auto& l) { return l.first == it->first; });
          it = cores_.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (const auto& s : step.arrived) {
      live_[s.ordinal] = s.features;
      if (auto_cores_) {
        double nearest = kInf;
        for (const auto& [id, c] : cores_) nearest = std::min(nearest, distance(s.features, c.location));
        if (nearest > p_.radius) {
          const std::size_t id = next_id_++;
          cores_.emplace(id, Core{s.features, {}});
          for (const auto& [o, v] : live_)
            if (o != s.ordinal) link_to(o, id);
        }
      }
      link(s.ordinal);
    }
    std::vector<double> scores;
    labels_.clear();
    counts_.clear();
    for (const auto& s : step.window) {
      const std::size_t count = probe(s.ordinal).count;
      counts_.push_back(count);
      labels_.push_back(count < p_.k);
      scores.push_back(1.0 / (static_cast<double>(count) + kEpsilon));
    }
    return scores;
  }

  struct ProbeResult {
    ProbeCase which = ProbeCase::Beyond2R;
    std::size_t count = 0;  // stops at K
  };

  ProbeResult probe(std::size_t o) const {
    ProbeResult r;
    const auto& px = x(o);
    const double R = p_.radius;
    double best = kInf;
    const Core* nearest = nullptr;
    for (const auto& [id, c] : cores_) {
      const double dd = distance(px, c.location);
      if (dd < best) best = dd, nearest = &c;
    }
    if (!nearest || best > 2 * R) {
      r.which = ProbeCase::Beyond2R;
      return r;
    }
    std::size_t count = 0;
    auto scan = [&](const std::set<std::size_t>& band) {
      for (std::size_t q : band) {
        if (count >= p_.k) return;
        if (q != o && within(o, q)) ++count;
      }
    };
    if (best <= R / 2) {
      r.which = ProbeCase::WithinHalfR;
      // Everything in E_0 of the nearest core is within R of o.
      count = nearest->bands[0].size() - (nearest->bands[0].count(o) ? 1 : 0);
      for (int k = 1; k <= 2 && count < p_.k; ++k) scan(nearest->bands[k]);
    } else if (best <= R) {
      r.which = ProbeCase::WithinR;
      for (int k = 0; k < 4 && count < p_.k; ++k) scan(nearest->bands[k]);
    } else {
      r.which = ProbeCase::Within2R;
      std::set<std::size_t> seen;
      for (const auto& [id, c] : cores_) {
        for (int k = 0; k < 2; ++k)
          for (std::size_t q : c.bands[k]) {
            if (count >= p_.k) break;
            if (q != o && seen.insert(q).second && within(o, q)) ++count;
          }
      }
    }
    r.count = count;
    return r;
  }

  const std::map<std::size_t, Core>& cores() const { return cores_; }

 private:
  void link_to(std::size_t o, std::size_t id) {
    auto& c = cores_.at(id);
    const double dd = distance(x(o), c.location);
    if (dd > 2 * p_.radius) return;
    int band = dd <= p_.radius / 2 ? 0 : static_cast<int>(std::ceil(dd / (p_.radius / 2))) - 1;
    band = std::clamp(band, 0, 3);
    c.bands[band].insert(o);
    links_[o].push_back({id, band});
  }

  void link(std::size_t o) {
    for (const auto& [id, c] : cores_) link_to(o, id);
  }

  void unlink(std::size_t o) {
    auto it = links_.find(o);
    if (it == links_.end()) return;
    for (auto [id, band] : it->second) cores_.at(id).bands[band].erase(o);
    links_.erase(it);
  }

  std::map<std::size_t, Core> cores_;
  std::unordered_map<std::size_t, std::vector<std::pair<std::size_t, int>>> links_;
  std::size_t next_id_ = 0;
  bool auto_cores_ = true;
};

// ---------------------------------------------------------------------------
// LEAP: per-slide indexes, evidence lists probed newest slide first.

class Leap : public DistanceDetectorBase {
 public:
  Leap(DistanceParams p, std::size_t slide) : DistanceDetectorBase(p), slide_(slide) {
    if (slide_ == 0) throw std::invalid_argument("slide must be positive");
  }
  std::string name() const override { return "LEAP"; }

  std::vector<double> process_slide(const SlideStep& step) override {
    // Blocks touched by expiry are dropped from every evidence list; a block
    // that only partly expired is re-probed from scratch.
    std::set<std::size_t> touched;
    for (const auto& s : step.expired) {
      const std::size_t b = block_of(s.ordinal);
      auto& members = blocks_[b];
      std::erase(members, s.ordinal);
      if (members.empty()) blocks_.erase(b);
      touched.insert(b);
      live_.erase(s.ordinal);
      state_.erase(s.ordinal);
    }
    if (!touched.empty()) {
      for (auto& [o, st] : state_) {
        for (std::size_t b : touched) {
          st.evi.erase(b);
          st.probed.erase(b);
        }
      }
    }
    for (const auto& s : step.arrived) {
      live_[s.ordinal] = s.features;
      blocks_[block_of(s.ordinal)].push_back(s.ordinal);
      state_[s.ordinal];
    }
    std::vector<double> scores;
    labels_.clear();
    counts_.clear();
    for (const auto& s : step.window) {
      const std::size_t count = probe(s.ordinal);
      counts_.push_back(count);
      labels_.push_back(count < p_.k);
      scores.push_back(count == 0 ? kInf : 1.0 / static_cast<double>(count));
    }
    return scores;
  }

  // Neighbours recorded for a sample, newest slide first.
  std::vector<std::size_t> evidence(std::size_t o) const {
    std::vector<std::size_t> out;
    const auto& st = state_.at(o);
    for (auto it = st.evi.rbegin(); it != st.evi.rend(); ++it)
      out.insert(out.end(), it->second.begin(), it->second.end());
    return out;
  }

  std::vector<std::size_t> evidence_blocks(std::size_t o) const {
    std::vector<std::size_t> out;
    const auto& st = state_.at(o);
    for (auto it = st.evi.rbegin(); it != st.evi.rend(); ++it) out.push_back(it->first);
    return out;
  }

  // Samples that will lose at least one evidence neighbour when the oldest
  // live slide expires.
  std::vector<std::size_t> trigger_list() const {
    std::vector<std::size_t> out;
    if (blocks_.empty()) return out;
    const std::size_t oldest = blocks_.begin()->first;
    for (const auto& [o, st] : state_) {
      if (block_of(o) == oldest) continue;
      auto it = st.evi.find(oldest);
      if (it != st.evi.end() && !it->second.empty()) out.push_back(o);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t block_of(std::size_t ordinal) const { return ordinal / slide_; }

 private:
  struct State {
    std::map<std::size_t, std::vector<std::size_t>> evi;  // block -> neighbours
    std::map<std::size_t, std::size_t> probed;            // block -> members examined
  };

  std::size_t probe(std::size_t o) {
    auto& st = state_.at(o);
    std::size_t count = 0;
    for (const auto& [b, v] : st.evi) count += v.size();
    if (count >= p_.k) return count;
    for (auto bit = blocks_.rbegin(); bit != blocks_.rend() && count < p_.k; ++bit) {
      const auto& members = bit->second;
      std::size_t& at = st.probed[bit->first];
      while (at < members.size() && count < p_.k) {
        const std::size_t q = members[at++];
        if (q != o && within(o, q)) {
          st.evi[bit->first].push_back(q);
          ++count;
        }
      }
    }
    return count;
  }

  std::size_t slide_;
  std::map<std::size_t, std::vector<std::size_t>> blocks_;
  std::map<std::size_t, State> state_;
};

}  // namespace streamad
