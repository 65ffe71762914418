#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "streamad/core.hpp"

namespace streamad {

// ---------------------------------------------------------------------------
// Count-min sketch with sparse rows and pairwise-independent hashes.

class CountMinSketch {
 public:
  static constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

  CountMinSketch(std::size_t rows, std::size_t width, Rng& rng) : width_(width), rows_(rows) {
    if (rows < 1 || width < 1) throw std::invalid_argument("count-min sketch needs rows and width");
    for (std::size_t i = 0; i < rows; ++i) {
      a_.push_back(uniform_u64(rng, 1, kPrime - 1));
      b_.push_back(uniform_u64(rng, 0, kPrime - 1));
    }
  }

  void add(std::uint64_t key, std::uint32_t count = 1) {
    for (std::size_t r = 0; r < rows_.size(); ++r) rows_[r][bucket(r, key)] += count;
  }

  // Decrements saturate at zero.
  void remove(std::uint64_t key, std::uint32_t count = 1) {
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      auto it = rows_[r].find(bucket(r, key));
      if (it == rows_[r].end()) continue;
      it->second = it->second > count ? it->second - count : 0;
      if (it->second == 0) rows_[r].erase(it);
    }
  }

  std::uint32_t estimate(std::uint64_t key) const {
    std::uint32_t best = UINT32_MAX;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      auto it = rows_[r].find(bucket(r, key));
      best = std::min(best, it == rows_[r].end() ? 0u : it->second);
    }
    return best;
  }

  void clear() {
    for (auto& r : rows_) r.clear();
  }

  // Multiplies every counter; used to test linearity of scores.
  void scale(std::uint32_t factor) {
    for (auto& r : rows_)
      for (auto& [_, c] : r) c *= factor;
  }

  std::size_t bucket(std::size_t row, std::uint64_t key) const {
    const unsigned __int128 x = static_cast<unsigned __int128>(a_[row]) * (key % kPrime) + b_[row];
    return static_cast<std::size_t>(static_cast<std::uint64_t>(x % kPrime) % width_);
  }

  std::size_t width() const { return width_; }
  std::size_t rows() const { return rows_.size(); }

  std::size_t row_total(std::size_t row) const {
    std::size_t t = 0;
    for (const auto& [_, c] : rows_[row]) t += c;
    return t;
  }

 private:
  static std::uint64_t uniform_u64(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
  }

  std::size_t width_;
  std::vector<std::unordered_map<std::size_t, std::uint32_t>> rows_;
  std::vector<std::uint64_t> a_, b_;
};

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hash contribution of one coordinate of a bin vector; vectors hash to the
// XOR of their coordinates' contributions.
inline std::uint64_t coordinate_hash(std::size_t feature, std::int64_t bin) {
  return mix64(mix64(feature) ^ static_cast<std::uint64_t>(bin));
}

// ---------------------------------------------------------------------------
// LODA

enum class LodaDensity {
  Counts,   // (m_i + m_{i+1}) / (2 M dz): step density that integrates to 1
  Printed,  // (z_i m_i + z_{i+1} m_{i+1}) / (2 M dz)
};

// Streaming histogram with at most `capacity` interior bins; nearest bins
// merge into their weighted mean on overflow. The observed min and max act
// as zero-count sentinels.
class OnlineHistogram {
 public:
  struct Bin {
    double z;
    double m;
  };

  explicit OnlineHistogram(std::size_t capacity) : cap_(capacity) {
    if (capacity < 1) throw std::invalid_argument("histogram capacity must be positive");
  }

  static OnlineHistogram from_bins(std::vector<Bin> bins, double zmin, double zmax, std::size_t capacity) {
    OnlineHistogram h(capacity);
    h.bins_ = std::move(bins);
    h.zmin_ = zmin;
    h.zmax_ = zmax;
    h.empty_ = h.bins_.empty();
    for (const auto& b : h.bins_) h.total_ += b.m;
    return h;
  }

  void insert(double z) {
    if (empty_) {
      zmin_ = zmax_ = z;
      empty_ = false;
    } else {
      zmin_ = std::min(zmin_, z);
      zmax_ = std::max(zmax_, z);
    }
    total_ += 1.0;
    auto it = std::lower_bound(bins_.begin(), bins_.end(), z, [](const Bin& b, double v) { return b.z < v; });
    if (it != bins_.end() && it->z == z) {
      it->m += 1.0;
      return;
    }
    bins_.insert(it, Bin{z, 1.0});
    while (bins_.size() > cap_) merge_closest();
  }

  // Density at z, or nothing when z lies outside [min, max].
  std::optional<double> density(double z, LodaDensity rule = LodaDensity::Counts) const {
    if (empty_ || z < zmin_ || z > zmax_ || total_ <= 0.0) return std::nullopt;
    const auto full = with_sentinels();
    for (std::size_t i = 0; i + 1 < full.size(); ++i) {
      const Bin& a = full[i];
      const Bin& b = full[i + 1];
      if (!(a.z <= z && z <= b.z)) continue;
      const double dz = b.z - a.z;
      if (dz <= 0.0) continue;
      const double num = rule == LodaDensity::Counts ? a.m + b.m : a.z * a.m + b.z * b.m;
      return num / (2.0 * total_ * dz);
    }
    return std::nullopt;
  }

  std::vector<Bin> with_sentinels() const {
    std::vector<Bin> out;
    if (empty_) return out;
    out.reserve(bins_.size() + 2);
    out.push_back({zmin_, 0.0});
    out.insert(out.end(), bins_.begin(), bins_.end());
    out.push_back({zmax_, 0.0});
    return out;
  }

  const std::vector<Bin>& bins() const { return bins_; }
  double total() const { return total_; }
  double zmin() const { return zmin_; }
  double zmax() const { return zmax_; }
  std::size_t capacity() const { return cap_; }

 private:
  void merge_closest() {
    std::size_t best = 0;
    double gap = kInf;
    for (std::size_t i = 0; i + 1 < bins_.size(); ++i) {
      const double g = bins_[i + 1].z - bins_[i].z;
      if (g < gap) gap = g, best = i;
    }
    Bin& a = bins_[best];
    const Bin& b = bins_[best + 1];
    const double m = a.m + b.m;
    a.z = (a.z * a.m + b.z * b.m) / m;
    a.m = m;
    bins_.erase(bins_.begin() + static_cast<long>(best) + 1);
  }

  std::size_t cap_;
  std::vector<Bin> bins_;
  double zmin_ = 0.0, zmax_ = 0.0, total_ = 0.0;
  bool empty_ = true;
};

enum class LodaMode { Alternating, Continuous, Frozen };

struct LodaParams {
  std::size_t projections = 100;  // k
  std::size_t bins = 20;          // b
  LodaDensity density = LodaDensity::Counts;
  LodaMode mode = LodaMode::Alternating;
  bool sqrt_nonzero = false;  // original convention: only sqrt(d) coefficients kept
  std::uint64_t seed = 0;
};

// Gaussian coefficients with floor(sqrt d) of them zeroed (at least one kept),
// or with only floor(sqrt d) kept under the original convention.
inline std::vector<double> loda_projection(std::size_t d, bool sqrt_nonzero, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> w(d);
  for (auto& v : w) v = g(rng);
  const auto root = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
  std::size_t zeros = sqrt_nonzero ? d - std::max<std::size_t>(1, root) : std::min(root, d - 1);
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < zeros; ++i) w[idx[i]] = 0.0;
  return w;
}

class Loda : public Detector {
 public:
  explicit Loda(LodaParams p) : p_(p), rng_(p.seed) {
    if (p_.projections < 1) throw std::invalid_argument("LODA needs at least one projection");
    if (p_.bins < 2) throw std::invalid_argument("LODA needs at least two bins");
  }

  Loda(LodaParams p, std::vector<std::vector<double>> projections) : Loda(p) {
    w_ = std::move(projections);
    p_.projections = w_.size();
  }

  std::string name() const override { return "LODA"; }
  ScoreOrientation orientation() const override { return ScoreOrientation::LowerIsAnomalous; }

  void train(std::span<const Sample> samples) override {
    if (samples.empty()) throw std::invalid_argument("LODA needs training samples");
    const std::size_t d = dimension_of(samples);
    if (w_.empty())
      for (std::size_t j = 0; j < p_.projections; ++j) w_.push_back(loda_projection(d, p_.sqrt_nonzero, rng_));
    hist_.assign(w_.size(), OnlineHistogram(p_.bins));
    for (const auto& s : samples) insert(s.features);
  }

  std::vector<double> process_slide(const SlideStep& step) override {
    if (hist_.empty()) throw std::logic_error("LODA used before training");
    std::vector<double> out;
    out.reserve(step.window.size());
    if (p_.mode == LodaMode::Continuous) {
      // Each arrival is scored just before its insertion; survivors keep the
      // score they were given.
      for (const auto& s : step.expired) cache_.erase(s.ordinal);
      for (const auto& s : step.arrived) {
        cache_[s.ordinal] = score(s.features);
        insert(s.features);
      }
      for (const auto& s : step.window) {
        auto it = cache_.find(s.ordinal);
        out.push_back(it == cache_.end() ? score(s.features) : it->second);
      }
      return out;
    }
    for (const auto& s : step.window) out.push_back(score(s.features));
    if (p_.mode == LodaMode::Alternating)
      for (const auto& s : step.arrived) insert(s.features);
    return out;
  }

  // Mean density over the histograms that bracket the sample; 0 if none do.
  double score(std::span<const double> x) const {
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < hist_.size(); ++j) {
      if (auto v = hist_[j].density(project(j, x), p_.density)) {
        acc += *v;
        ++used;
      }
    }
    return used ? acc / static_cast<double>(used) : 0.0;
  }

  double project(std::size_t j, std::span<const double> x) const {
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += w_[j][i] * x[i];
    return z;
  }

  const std::vector<OnlineHistogram>& histograms() const { return hist_; }
  const std::vector<std::vector<double>>& projections() const { return w_; }

 private:
  void insert(std::span<const double> x) {
    for (std::size_t j = 0; j < hist_.size(); ++j) hist_[j].insert(project(j, x));
  }

  LodaParams p_;
  Rng rng_;
  std::vector<std::vector<double>> w_;
  std::vector<OnlineHistogram> hist_;
  std::unordered_map<std::size_t, double> cache_;
};

// ---------------------------------------------------------------------------
// XSTREAM

// Per chain: the smallest 2^l * count over levels l = 1..D; averaged over chains.
inline double xstream_score_from_counts(const std::vector<std::vector<double>>& counts) {
  if (counts.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& chain : counts) {
    double best = kInf;
    for (std::size_t l = 0; l < chain.size(); ++l) best = std::min(best, std::ldexp(chain[l], static_cast<int>(l + 1)));
    acc += chain.empty() ? 0.0 : best;
  }
  return acc / static_cast<double>(counts.size());
}

// K sparse projections: ceil(d/3) non-zero entries of +-sqrt(3/K) each.
inline std::vector<std::vector<double>> xstream_projections(std::size_t d, std::size_t k, Rng& rng) {
  const std::size_t nz = (d + 2) / 3;
  const double mag = std::sqrt(3.0 / static_cast<double>(k));
  std::vector<std::vector<double>> out(k, std::vector<double>(d, 0.0));
  std::vector<std::size_t> idx(d);
  for (auto& r : out) {
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < nz; ++i) r[idx[i]] = std::bernoulli_distribution(0.5)(rng) ? mag : -mag;
  }
  return out;
}

struct XStreamParams {
  std::size_t projections = 50;  // K
  std::size_t chains = 50;       // M
  std::size_t depth = 10;        // D
  std::size_t cms_rows = 4;
  std::size_t cms_width = std::size_t{1} << 14;
  std::uint64_t seed = 0;
};

class XStream : public Detector {
 public:
  struct Chain {
    std::vector<std::size_t> level_feature;  // projected feature per level
    std::vector<double> shift;               // per projected feature
  };

  explicit XStream(XStreamParams p) : p_(p), rng_(p.seed) {
    if (p_.projections < 1 || p_.chains < 1 || p_.depth < 1) throw std::invalid_argument("XSTREAM needs K, M, D >= 1");
  }

  // Fully specified model: projections, half ranges and chains fixed by the caller.
  XStream(XStreamParams p, std::vector<std::vector<double>> projections, std::vector<double> delta,
          std::vector<Chain> chains)
      : XStream(p) {
    proj_ = std::move(projections);
    delta_ = std::move(delta);
    chains_ = std::move(chains);
    p_.projections = proj_.size();
    p_.chains = chains_.size();
    p_.depth = chains_.front().level_feature.size();
  }

  std::string name() const override { return "XSTREAM"; }
  ScoreOrientation orientation() const override { return ScoreOrientation::LowerIsAnomalous; }

  void train(std::span<const Sample> samples) override {
    if (samples.empty()) throw std::invalid_argument("XSTREAM needs training samples");
    const std::size_t d = dimension_of(samples);
    if (proj_.empty()) proj_ = xstream_projections(d, p_.projections, rng_);
    if (delta_.empty()) {
      std::vector<double> lo(proj_.size(), kInf), hi(proj_.size(), -kInf);
      for (const auto& s : samples) {
        auto y = project(s.features);
        for (std::size_t k = 0; k < y.size(); ++k) lo[k] = std::min(lo[k], y[k]), hi[k] = std::max(hi[k], y[k]);
      }
      delta_.resize(proj_.size());
      for (std::size_t k = 0; k < proj_.size(); ++k) delta_[k] = (hi[k] - lo[k]) / 2.0;
    }
    if (chains_.empty()) build_chains();
    ref_.clear();
    cur_.clear();
    for (std::size_t c = 0; c < chains_.size(); ++c) {
      ref_.emplace_back();
      cur_.emplace_back();
      for (std::size_t l = 0; l < p_.depth; ++l) {
        ref_[c].emplace_back(p_.cms_rows, p_.cms_width, rng_);
        cur_[c].emplace_back(p_.cms_rows, p_.cms_width, rng_);
      }
    }
    for (const auto& s : samples) add(ref_, s.features);
  }

  std::vector<double> process_slide(const SlideStep& step) override {
    if (ref_.empty()) throw std::logic_error("XSTREAM used before training");
    std::vector<double> out;
    out.reserve(step.window.size());
    for (const auto& s : step.window) out.push_back(score(s.features));
    for (const auto& s : step.arrived) add(cur_, s.features);
    std::swap(ref_, cur_);
    for (auto& chain : cur_)
      for (auto& h : chain) h.clear();
    return out;
  }

  double score(std::span<const double> x) const {
    const auto y = project(x);
    double acc = 0.0;
    for (std::size_t c = 0; c < chains_.size(); ++c) {
      const auto keys = chain_hashes(c, y);
      double best = kInf;
      for (std::size_t l = 0; l < keys.size(); ++l)
        best = std::min(best, std::ldexp(static_cast<double>(ref_[c][l].estimate(keys[l])), static_cast<int>(l + 1)));
      acc += best;
    }
    return acc / static_cast<double>(chains_.size());
  }

  std::vector<double> project(std::span<const double> x) const {
    std::vector<double> y(proj_.size(), 0.0);
    for (std::size_t k = 0; k < proj_.size(); ++k)
      for (std::size_t i = 0; i < x.size(); ++i) y[k] += proj_[k][i] * x[i];
    return y;
  }

  // Discretised bin vector per level for a projected sample. Coordinates not
  // yet selected stay at 0. First selection: (y + s) / delta; later ones
  // halve the bin width: z <- 2z - s / delta.
  std::vector<std::vector<std::int64_t>> chain_bins(std::size_t c, std::span<const double> y) const {
    std::vector<double> z(proj_.size(), 0.0);
    std::vector<bool> seen(proj_.size(), false);
    std::vector<std::vector<std::int64_t>> out;
    for (std::size_t f : chains_[c].level_feature) {
      advance(c, f, y, z, seen);
      std::vector<std::int64_t> key(z.size());
      for (std::size_t k = 0; k < z.size(); ++k) key[k] = static_cast<std::int64_t>(std::floor(z[k]));
      out.push_back(std::move(key));
    }
    return out;
  }

  // Same walk as chain_bins, hashing the bin vector incrementally.
  std::vector<std::uint64_t> chain_hashes(std::size_t c, std::span<const double> y) const {
    std::vector<double> z(proj_.size(), 0.0);
    std::vector<bool> seen(proj_.size(), false);
    std::uint64_t h = 0;
    for (std::size_t k = 0; k < z.size(); ++k) h ^= coordinate_hash(k, 0);
    std::vector<std::uint64_t> out;
    out.reserve(chains_[c].level_feature.size());
    for (std::size_t f : chains_[c].level_feature) {
      h ^= coordinate_hash(f, static_cast<std::int64_t>(std::floor(z[f])));
      advance(c, f, y, z, seen);
      h ^= coordinate_hash(f, static_cast<std::int64_t>(std::floor(z[f])));
      out.push_back(h);
    }
    return out;
  }

  static std::uint64_t hash_bins(const std::vector<std::int64_t>& key) {
    std::uint64_t h = 0;
    for (std::size_t k = 0; k < key.size(); ++k) h ^= coordinate_hash(k, key[k]);
    return h;
  }

  const std::vector<Chain>& chains() const { return chains_; }
  const std::vector<double>& delta() const { return delta_; }
  const std::vector<std::vector<double>>& projections() const { return proj_; }
  std::vector<std::vector<CountMinSketch>>& reference() { return ref_; }
  const std::vector<std::vector<CountMinSketch>>& reference() const { return ref_; }

 private:
  void advance(std::size_t c, std::size_t f, std::span<const double> y, std::vector<double>& z,
               std::vector<bool>& seen) const {
    const double s = chains_[c].shift[f];
    const double dl = delta_[f];
    if (!seen[f]) {
      z[f] = (y[f] + s) / dl;
      seen[f] = true;
    } else {
      z[f] = 2.0 * z[f] - s / dl;
    }
  }

  void build_chains() {
    std::vector<std::size_t> eligible;
    for (std::size_t k = 0; k < delta_.size(); ++k)
      if (delta_[k] > 0.0) eligible.push_back(k);
    if (eligible.empty()) {
      // Every projection is constant on the training data: one bin per level.
      for (auto& v : delta_) v = 1.0;
      eligible.resize(delta_.size());
      std::iota(eligible.begin(), eligible.end(), 0);
    }
    for (std::size_t c = 0; c < p_.chains; ++c) {
      Chain ch;
      ch.shift.assign(delta_.size(), 0.0);
      for (std::size_t k = 0; k < delta_.size(); ++k)
        if (delta_[k] > 0.0) ch.shift[k] = uniform_real(rng_, 0.0, delta_[k]);
      for (std::size_t l = 0; l < p_.depth; ++l) ch.level_feature.push_back(eligible[uniform_index(rng_, 0, eligible.size() - 1)]);
      chains_.push_back(std::move(ch));
    }
  }

  void add(std::vector<std::vector<CountMinSketch>>& sketches, std::span<const double> x) {
    const auto y = project(x);
    for (std::size_t c = 0; c < chains_.size(); ++c) {
      const auto keys = chain_hashes(c, y);
      for (std::size_t l = 0; l < keys.size(); ++l) sketches[c][l].add(keys[l]);
    }
  }

  XStreamParams p_;
  Rng rng_;
  std::vector<std::vector<double>> proj_;
  std::vector<double> delta_;
  std::vector<Chain> chains_;
  std::vector<std::vector<CountMinSketch>> ref_, cur_;
};

}  // namespace streamad
