#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamad {

using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Sample {
  std::size_t ordinal = 0;
  std::vector<double> features;
  std::optional<bool> label;

  bool is_anomaly() const { return label.value_or(false); }
};

struct WindowSpec {
  std::size_t size = 128;
  std::size_t slide = 64;

  bool tumbling() const { return size == slide; }

  void validate() const {
    if (size == 0 || slide == 0) throw std::invalid_argument("window size and slide must be positive");
    if (slide > size) throw std::invalid_argument("window slide must not exceed window size");
  }
};

enum class ScoreOrientation { HigherIsAnomalous, LowerIsAnomalous };

inline const char* to_string(ScoreOrientation o) {
  return o == ScoreOrientation::HigherIsAnomalous ? "higher" : "lower";
}

// Index ranges into a stream. All ranges are half-open.
struct Window {
  std::size_t index = 0;
  std::size_t begin = 0, end = 0;
  std::size_t arrived_begin = 0;  // arrived = [arrived_begin, end)
  std::size_t expired_begin = 0, expired_end = 0;
  bool partial = false;

  std::size_t size() const { return end - begin; }
};

inline std::size_t window_count(std::size_t n, const WindowSpec& spec) {
  spec.validate();
  if (n == 0) return 0;
  if (n <= spec.size) return 1;
  return (n - spec.size + spec.slide - 1) / spec.slide + 1;
}

inline std::vector<Window> window_iterator(std::size_t n, const WindowSpec& spec) {
  spec.validate();
  if (n == 0) throw std::invalid_argument("cannot window an empty stream");
  const std::size_t count = window_count(n, spec);
  std::vector<Window> out;
  out.reserve(count);
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < count; ++i) {
    Window win;
    win.index = i;
    win.begin = i * spec.slide;
    win.end = std::min(win.begin + spec.size, n);
    win.partial = win.end - win.begin < spec.size;
    if (i == 0) {
      win.arrived_begin = win.begin;
      win.expired_begin = win.expired_end = 0;
    } else {
      const std::size_t prev_begin = (i - 1) * spec.slide;
      win.arrived_begin = std::max(prev_end, win.begin);
      win.expired_begin = prev_begin;
      win.expired_end = std::min(win.begin, prev_end);
    }
    prev_end = win.end;
    out.push_back(win);
  }
  return out;
}

// What a detector is told on every step.
struct SlideStep {
  std::size_t window_index = 0;
  std::span<const Sample> window;
  std::span<const Sample> arrived;
  std::span<const Sample> expired;
  bool partial = false;
};

inline SlideStep make_step(std::span<const Sample> stream, const Window& w) {
  SlideStep step;
  step.window_index = w.index;
  step.window = stream.subspan(w.begin, w.end - w.begin);
  step.arrived = stream.subspan(w.arrived_begin, w.end - w.arrived_begin);
  step.expired = stream.subspan(w.expired_begin, w.expired_end - w.expired_begin);
  step.partial = w.partial;
  return step;
}

// Step that starts a detector from an empty state on the given window.
inline SlideStep fresh_step(std::span<const Sample> stream, const Window& w) {
  SlideStep step = make_step(stream, w);
  step.arrived = step.window;
  step.expired = {};
  return step;
}

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string name() const = 0;
  virtual ScoreOrientation orientation() const = 0;
  virtual void train(std::span<const Sample> samples) = 0;
  // Returns one score per sample of step.window, in window order.
  virtual std::vector<double> process_slide(const SlideStep& step) = 0;
};

inline std::vector<double> normalize_scores(std::span<const double> scores, ScoreOrientation o) {
  std::vector<double> out(scores.begin(), scores.end());
  for (double& v : out) {
    if (std::isnan(v)) throw std::invalid_argument("NaN score");
    if (o == ScoreOrientation::LowerIsAnomalous) v = -v;
  }
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

inline std::size_t dimension_of(std::span<const Sample> samples) {
  return samples.empty() ? 0 : samples.front().features.size();
}

// Uniform integer in [lo, hi].
inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace streamad
