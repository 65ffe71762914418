#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "streamad/density.hpp"
#include "streamad/evaluation.hpp"
#include "streamad/ingest.hpp"
#include "streamad/offline.hpp"
#include "streamad/projection.hpp"
#include "streamad/proximity.hpp"
#include "streamad/tree.hpp"

namespace streamad {

// ---------------------------------------------------------------------------
// Hyper-parameter grids

using HyperConfig = std::map<std::string, double>;

inline std::string format_config(const HyperConfig& c) {
  std::ostringstream out;
  out << std::setprecision(10);
  bool first = true;
  for (const auto& [k, v] : c) {
    if (!first) out << ';';
    out << k << '=' << v;
    first = false;
  }
  return out.str();
}

inline std::size_t as_count(const HyperConfig& c, const std::string& key) {
  const double v = c.at(key);
  if (!(v >= 0.0)) throw std::invalid_argument("hyper-parameter '" + key + "' must be non-negative");
  return static_cast<std::size_t>(std::llround(v));
}

struct Axis {
  std::string name;
  std::vector<double> values;
};

// Cartesian product of axes, indexed in mixed radix (last axis fastest).
class ParamGrid {
 public:
  ParamGrid() = default;
  explicit ParamGrid(std::vector<Axis> axes) : axes_(std::move(axes)) {}

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes_) n *= a.values.size();
    return n;
  }

  HyperConfig at(std::size_t i) const {
    if (i >= size()) throw std::out_of_range("grid index out of range");
    HyperConfig c;
    for (auto a = axes_.rbegin(); a != axes_.rend(); ++a) {
      c[a->name] = a->values[i % a->values.size()];
      i /= a->values.size();
    }
    return c;
  }

  // Restricts an axis to one value.
  void pin(const std::string& name, double value) {
    for (auto& a : axes_)
      if (a.name == name) {
        a.values = {value};
        return;
      }
    throw std::invalid_argument("no hyper-parameter '" + name + "'");
  }

  const std::vector<Axis>& axes() const { return axes_; }

 private:
  std::vector<Axis> axes_;
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

inline std::vector<double> integer_range(std::size_t lo, std::size_t hi) {
  std::vector<double> v;
  for (std::size_t i = lo; i <= hi; ++i) v.push_back(static_cast<double>(i));
  return v;
}

// 95th minus 5th percentile of pairwise distances among up to `cap` evenly
// spaced samples.
inline double pairwise_spread(std::span<const Sample> samples, std::size_t cap = 400) {
  std::vector<const Sample*> pick;
  const std::size_t stride = std::max<std::size_t>(1, samples.size() / cap);
  for (std::size_t i = 0; i < samples.size() && pick.size() < cap; i += stride) pick.push_back(&samples[i]);
  std::vector<double> d;
  for (std::size_t i = 0; i < pick.size(); ++i)
    for (std::size_t j = i + 1; j < pick.size(); ++j) d.push_back(distance(pick[i]->features, pick[j]->features));
  if (d.empty()) return 0.0;
  std::sort(d.begin(), d.end());
  auto q = [&](double p) { return d[static_cast<std::size_t>(p * static_cast<double>(d.size() - 1))]; };
  return q(0.95) - q(0.05);
}

// What a grid or factory may know about a dataset: the training prefix only.
struct GridContext {
  std::span<const Sample> train;
  WindowSpec window;

  std::size_t d() const { return dimension_of(train); }
  // 40% of the training prefix.
  std::size_t max_samples() const { return std::max<std::size_t>(1, train.size() * 2 / 5); }
  std::size_t max_depth() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(max_samples())))));
  }
  std::vector<double> radius_values() const {
    const double spread = pairwise_spread(train);
    const double hi = spread > 0.0 ? spread : 1.0;
    const double lo = hi > 0.1 ? 0.1 : hi / 100.0;
    return linspace(lo, hi, 100);
  }
};

// ---------------------------------------------------------------------------
// Registry

enum class WindowKind { Sliding, Tumbling, Offline };

inline const char* to_string(WindowKind k) {
  switch (k) {
    case WindowKind::Sliding: return "sliding";
    case WindowKind::Tumbling: return "tumbling";
    default: return "offline";
  }
}

struct DetectorSpec {
  std::string name;
  WindowKind kind = WindowKind::Sliding;
  bool deterministic = true;
  std::function<ParamGrid(const GridContext&)> grid;
  std::function<std::unique_ptr<Detector>(const HyperConfig&, std::uint64_t seed, const GridContext&)> make;
};

// Reports a detector under another name.
class NamedDetector : public Detector {
 public:
  NamedDetector(std::unique_ptr<Detector> inner, std::string name) : inner_(std::move(inner)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  ScoreOrientation orientation() const override { return inner_->orientation(); }
  void train(std::span<const Sample> s) override { inner_->train(s); }
  std::vector<double> process_slide(const SlideStep& step) override { return inner_->process_slide(step); }
  Detector& inner() { return *inner_; }

 private:
  std::unique_ptr<Detector> inner_;
  std::string name_;
};

// XSTREAM in batch mode: chains filled once from the training set, every
// query scored against them.
class XStreamBatch : public BatchModel {
 public:
  explicit XStreamBatch(XStreamParams p) : model_(p) {}
  std::string name() const override { return "X-B"; }
  void fit(std::span<const Sample> data) override { model_.train(data); }
  std::vector<double> score(std::span<const Sample> queries) const override {
    std::vector<double> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(-model_.score(q.features));
    return out;
  }

 private:
  XStream model_;
};

using Registry = std::vector<DetectorSpec>;

inline Registry default_registry() {
  Registry r;
  auto distance_grid = [](const GridContext& c) {
    return ParamGrid({{"radius", c.radius_values()}, {"k", integer_range(1, 64)}});
  };
  auto distance_params = [](const HyperConfig& h) { return DistanceParams{h.at("radius"), as_count(h, "k")}; };
  const std::vector<double> trees = {25, 50, 100};
  auto forget_values = [](const GridContext& c) {
    return std::vector<double>{64, 128, 256, 512, static_cast<double>(c.max_samples())};
  };

  r.push_back({"MCOD", WindowKind::Sliding, true, distance_grid,
               [=](const HyperConfig& h, std::uint64_t, const GridContext&) {
                 return std::make_unique<Mcod>(distance_params(h));
               }});
  r.push_back({"CPOD", WindowKind::Sliding, true, distance_grid,
               [=](const HyperConfig& h, std::uint64_t, const GridContext&) {
                 return std::make_unique<Cpod>(distance_params(h));
               }});
  r.push_back({"LEAP", WindowKind::Sliding, true, distance_grid,
               [=](const HyperConfig& h, std::uint64_t, const GridContext& c) {
                 return std::make_unique<Leap>(distance_params(h), c.window.slide);
               }});
  r.push_back({"HST", WindowKind::Tumbling, false, [=](const GridContext&) { return ParamGrid({{"trees", trees}}); },
               [](const HyperConfig& h, std::uint64_t seed, const GridContext& c) {
                 return std::make_unique<HalfSpaceTrees>(
                     HstParams{.trees = as_count(h, "trees"), .depth = c.max_depth(), .seed = seed});
               }});
  r.push_back({"HSTF", WindowKind::Tumbling, false,
               [=](const GridContext& c) { return ParamGrid({{"trees", trees}, {"forget", forget_values(c)}}); },
               [](const HyperConfig& h, std::uint64_t seed, const GridContext& c) {
                 return std::make_unique<HalfSpaceTrees>(HstParams{.trees = as_count(h, "trees"),
                                                                   .depth = c.max_depth(),
                                                                   .forget_threshold = as_count(h, "forget"),
                                                                   .seed = seed});
               }});
  r.push_back({"RRCF", WindowKind::Sliding, false,
               [=](const GridContext& c) { return ParamGrid({{"trees", trees}, {"forget", forget_values(c)}}); },
               [](const HyperConfig& h, std::uint64_t seed, const GridContext& c) {
                 return std::make_unique<Rrcf>(RrcfParams{.trees = as_count(h, "trees"),
                                                          .max_samples = c.max_samples(),
                                                          .forget_threshold = as_count(h, "forget"),
                                                          .window_size = c.window.size,
                                                          .seed = seed});
               }});
  auto loda_grid = [](const GridContext&) { return ParamGrid({{"projections", {25, 50, 100}}, {"bins", {10, 20, 40}}}); };
  r.push_back({"L-S", WindowKind::Tumbling, false, loda_grid,
               [](const HyperConfig& h, std::uint64_t seed, const GridContext&) {
                 return std::make_unique<NamedDetector>(
                     std::make_unique<Loda>(LodaParams{.projections = as_count(h, "projections"),
                                                       .bins = as_count(h, "bins"),
                                                       .mode = LodaMode::Alternating,
                                                       .seed = seed}),
                     "L-S");
               }});
  r.push_back({"L-B", WindowKind::Offline, false, loda_grid,
               [](const HyperConfig& h, std::uint64_t seed, const GridContext&) {
                 return std::make_unique<NamedDetector>(
                     std::make_unique<Loda>(LodaParams{.projections = as_count(h, "projections"),
                                                       .bins = as_count(h, "bins"),
                                                       .mode = LodaMode::Frozen,
                                                       .seed = seed}),
                     "L-B");
               }});
  auto xs_grid = [](const GridContext&) {
    return ParamGrid({{"projections", {25, 50, 100}}, {"chains", {25, 50, 100}}, {"depth", {5, 10, 15}}});
  };
  auto xs_params = [](const HyperConfig& h, std::uint64_t seed) {
    return XStreamParams{.projections = as_count(h, "projections"),
                         .chains = as_count(h, "chains"),
                         .depth = as_count(h, "depth"),
                         .seed = seed};
  };
  r.push_back({"X-S", WindowKind::Tumbling, false, xs_grid,
               [=](const HyperConfig& h, std::uint64_t seed, const GridContext&) {
                 return std::make_unique<NamedDetector>(std::make_unique<XStream>(xs_params(h, seed)), "X-S");
               }});
  r.push_back({"X-B", WindowKind::Offline, false, xs_grid,
               [=](const HyperConfig& h, std::uint64_t seed, const GridContext&) {
                 return std::make_unique<OfflineDetector>(std::make_unique<XStreamBatch>(xs_params(h, seed)));
               }});
  r.push_back({"RS-Hash", WindowKind::Sliding, true,
               [](const GridContext&) { return ParamGrid({{"tables", {4, 8, 12}}, {"repetitions", {25, 50, 100}}}); },
               [](const HyperConfig& h, std::uint64_t seed, const GridContext& c) {
                 return std::make_unique<RsHash>(RsHashParams{.subsample = c.max_samples(),
                                                              .tables = as_count(h, "tables"),
                                                              .repetitions = as_count(h, "repetitions"),
                                                              .seed = seed});
               }});
  r.push_back({"STARE", WindowKind::Sliding, true,
               [](const GridContext& c) {
                 return ParamGrid({{"radius", c.radius_values()}, {"k", integer_range(1, 64)}});
               },
               [](const HyperConfig& h, std::uint64_t, const GridContext&) {
                 return std::make_unique<Stare>(StareParams{.radius = h.at("radius"), .neighbors = as_count(h, "k")});
               }});
  auto neighbor_grid = [](const GridContext& c) {
    std::vector<double> v;
    for (double k : {5, 10, 15, 20, 30, 50, 100, 150})
      if (k < static_cast<double>(c.train.size())) v.push_back(k);
    return ParamGrid({{"k", v}});
  };
  r.push_back({"KNN_W", WindowKind::Offline, true, neighbor_grid,
               [](const HyperConfig& h, std::uint64_t, const GridContext&) {
                 return std::make_unique<OfflineDetector>(std::make_unique<KnnW>(as_count(h, "k")));
               }});
  r.push_back({"LOF", WindowKind::Offline, true, neighbor_grid,
               [](const HyperConfig& h, std::uint64_t, const GridContext&) {
                 return std::make_unique<OfflineDetector>(std::make_unique<Lof>(as_count(h, "k")));
               }});
  r.push_back({"IF", WindowKind::Offline, false, [=](const GridContext&) { return ParamGrid({{"trees", trees}}); },
               [](const HyperConfig& h, std::uint64_t seed, const GridContext&) {
                 return std::make_unique<OfflineDetector>(std::make_unique<IsolationForest>(
                     IForestParams{.trees = as_count(h, "trees"), .max_samples = 0.4, .seed = seed}));
               }});
  r.push_back({"OCRF", WindowKind::Offline, false, [=](const GridContext&) { return ParamGrid({{"trees", trees}}); },
               [](const HyperConfig& h, std::uint64_t seed, const GridContext&) {
                 return std::make_unique<OfflineDetector>(
                     std::make_unique<Ocrf>(OcrfParams{.trees = as_count(h, "trees"), .max_samples = 0.4, .seed = seed}));
               }});
  return r;
}

inline std::string canonical_detector_name(const std::string& name) {
  if (name == "LODA") return "L-S";
  if (name == "XSTREAM") return "X-S";
  return name;
}

inline const DetectorSpec& find_detector(const Registry& r, const std::string& name) {
  const auto key = canonical_detector_name(name);
  for (const auto& s : r)
    if (s.name == key) return s;
  throw std::invalid_argument("unknown detector '" + name + "'");
}

// ---------------------------------------------------------------------------
// Protocol

// A stratified stream cut into windows for one window kind.
struct PreparedStream {
  std::string name;
  std::vector<Sample> samples;
  WindowSpec spec;
  std::vector<Window> windows;
  StreamPartition part;

  // Samples before the first validation window.
  std::span<const Sample> train() const { return {samples.data(), windows[part.val.begin].begin}; }
  // First sample that lies in no training or validation window.
  std::size_t test_begin_ordinal() const { return windows[part.val.end - 1].end; }
};

inline WindowSpec window_for(WindowKind kind, const WindowSpec& spec) {
  return kind == WindowKind::Tumbling ? WindowSpec{spec.size, spec.size} : spec;
}

inline PreparedStream prepare_stream(const WindowedStream& ws, const WindowSpec& spec) {
  PreparedStream ps;
  ps.name = ws.data.name;
  ps.samples = ws.data.samples;
  ps.spec = spec;
  ps.windows = window_iterator(ps.samples.size(), spec);
  ps.part = partition(ps.windows.size());
  return ps;
}

// Counts every sample a detector is shown, and those at or past a boundary.
struct AccessAudit {
  std::size_t boundary = 0;
  std::size_t reads = 0;
  std::size_t boundary_reads = 0;
  std::size_t max_window_index = 0;

  void see(std::span<const Sample> s) {
    for (const auto& x : s) {
      ++reads;
      if (x.ordinal >= boundary) ++boundary_reads;
    }
  }
};

class AuditedDetector : public Detector {
 public:
  AuditedDetector(Detector& inner, AccessAudit& audit) : inner_(inner), audit_(audit) {}
  std::string name() const override { return inner_.name(); }
  ScoreOrientation orientation() const override { return inner_.orientation(); }
  void train(std::span<const Sample> s) override {
    audit_.see(s);
    inner_.train(s);
  }
  std::vector<double> process_slide(const SlideStep& step) override {
    audit_.see(step.window);
    audit_.see(step.arrived);
    audit_.see(step.expired);
    audit_.max_window_index = std::max(audit_.max_window_index, step.window_index);
    return inner_.process_slide(step);
  }

 private:
  Detector& inner_;
  AccessAudit& audit_;
};

struct StreamRun {
  std::vector<ScoredWindow> windows;
  Timing timing;
};

// Trains on the prefix, then walks windows [first, last), starting from an
// empty window state at `first`.
inline StreamRun run_stream(Detector& det, const PreparedStream& ps, std::size_t first, std::size_t last) {
  std::span<const Sample> all(ps.samples);
  std::vector<SlideStep> steps;
  for (std::size_t i = first; i < last; ++i)
    steps.push_back(i == first ? fresh_step(all, ps.windows[i]) : make_step(all, ps.windows[i]));
  StreamRun run;
  run.timing = time_probe(det, ps.train(), steps, [&](const SlideStep& step, std::vector<double> scores) {
    run.windows.push_back(make_scored_window(step.window_index, scores, det.orientation(), step.window));
  });
  return run;
}

inline double validation_map(Detector& det, const PreparedStream& ps) {
  return map_over_stream(run_stream(det, ps, ps.part.val.begin, ps.part.val.end).windows);
}

struct TestResult {
  StreamMetrics metrics;
  Timing timing;
};

// Streams validation and test windows in order; only test windows are scored.
inline TestResult test_metrics(Detector& det, const PreparedStream& ps) {
  auto run = run_stream(det, ps, ps.part.val.begin, ps.windows.size());
  std::vector<ScoredWindow> test;
  for (auto& w : run.windows)
    if (ps.part.test.contains(w.window_index)) test.push_back(std::move(w));
  return {evaluate_windows(test), run.timing};
}

// ---------------------------------------------------------------------------
// Random search

// `budget` distinct grid indices, uniformly (all of them if budget >= size).
inline std::vector<std::size_t> sample_grid_indices(std::size_t size, std::size_t budget, Rng& rng) {
  if (size == 0) throw std::invalid_argument("empty hyper-parameter grid");
  if (budget == 0) throw std::invalid_argument("tuning budget must be positive");
  std::vector<std::size_t> out;
  if (budget >= size) {
    out.resize(size);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  std::unordered_set<std::size_t> seen;
  while (out.size() < budget) {
    const auto i = uniform_index(rng, 0, size - 1);
    if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

struct Trial {
  HyperConfig config;
  double map = -kInf;
  std::string error;
};

struct TuneResult {
  HyperConfig best;
  double best_map = -kInf;
  std::vector<Trial> trials;
};

// Best of the sampled configurations by `objective`; the first sampled wins ties.
inline TuneResult random_search(const ParamGrid& grid, std::size_t budget, std::uint64_t seed,
                                const std::function<double(const HyperConfig&)>& objective) {
  Rng rng(seed);
  TuneResult r;
  for (auto i : sample_grid_indices(grid.size(), budget, rng)) {
    Trial t{grid.at(i)};
    try {
      t.map = objective(t.config);
    } catch (const std::exception& e) {
      t.error = e.what();
    }
    if (t.error.empty() && t.map > r.best_map) {
      r.best = t.config;
      r.best_map = t.map;
    }
    r.trials.push_back(std::move(t));
  }
  if (r.best_map == -kInf) throw std::runtime_error("every sampled configuration failed: " + r.trials.front().error);
  return r;
}

// Tunes on validation windows only. The detector never sees samples past the
// last validation window; `audit`, when given, records what it was shown.
inline TuneResult tune(const DetectorSpec& spec, const PreparedStream& ps, std::size_t budget, std::uint64_t seed,
                       const HyperConfig& pinned = {}, AccessAudit* audit = nullptr) {
  const GridContext ctx{ps.train(), ps.spec};
  ParamGrid grid = spec.grid(ctx);
  for (const auto& [k, v] : pinned) grid.pin(k, v);
  return random_search(grid, budget, seed, [&](const HyperConfig& c) {
    auto det = spec.make(c, seed, ctx);
    if (!audit) return validation_map(*det, ps);
    AuditedDetector watched(*det, *audit);
    return validation_map(watched, ps);
  });
}

// ---------------------------------------------------------------------------
// Benchmark runner

struct RunConfig {
  std::vector<std::string> datasets;
  std::vector<std::string> detectors;  // empty: every registered detector
  WindowSpec window{128, 64};
  std::uint64_t seed = 0;
  std::size_t seeds = 30;  // runs of each non-deterministic detector
  std::size_t budget = 30;
  std::string out = "results";
  std::size_t workers = 1;
  std::map<std::string, HyperConfig> pinned;  // per detector

  void validate(const Registry& r) const {
    window.validate();
    if (budget == 0) throw std::invalid_argument("budget must be positive");
    if (seeds == 0) throw std::invalid_argument("seeds must be positive");
    for (const auto& d : detectors) find_detector(r, d);
    for (const auto& [d, _] : pinned) find_detector(r, d);
  }
};

// Runs fn(0..n-1) on up to `workers` threads.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) fn(i);
    });
  for (auto& t : pool) t.join();
}

// Tunes once, then averages test metrics over the detector's seeds.
inline BenchReport benchmark_one(const DetectorSpec& spec, const WindowedStream& ws, const RunConfig& cfg,
                                 const HyperConfig& pinned = {}) {
  BenchReport r;
  r.detector = spec.name;
  r.dataset = ws.data.name;
  r.seed = cfg.seed;
  try {
    const auto ps = prepare_stream(ws, window_for(spec.kind, cfg.window));
    const auto tuned = tune(spec, ps, cfg.budget, cfg.seed, pinned);
    r.config = format_config(tuned.best);
    const GridContext ctx{ps.train(), ps.spec};
    r.runs = spec.deterministic ? 1 : cfg.seeds;
    for (std::size_t k = 0; k < r.runs; ++k) {
      auto det = spec.make(tuned.best, cfg.seed + k, ctx);
      auto res = test_metrics(*det, ps);
      r.map += res.metrics.map;
      r.auc += res.metrics.mean_auc;
      r.train_seconds += res.timing.train_seconds;
      r.update_seconds += res.timing.update_seconds;
      r.windows = res.metrics.valid_windows;
      r.excluded_windows = res.metrics.excluded_windows;
    }
    const double n = static_cast<double>(r.runs);
    r.map /= n;
    r.auc /= n;
    r.train_seconds /= n;
    r.update_seconds /= n;
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
    r.map = r.auc = 0.0;
  }
  return r;
}

// One row per (dataset, detector), dataset-major, in configuration order.
inline std::vector<BenchReport> run_benchmark(const RunConfig& cfg, const std::vector<Dataset>& datasets,
                                              const Registry& registry = default_registry()) {
  cfg.validate(registry);
  std::vector<const DetectorSpec*> dets;
  if (cfg.detectors.empty())
    for (const auto& s : registry) dets.push_back(&s);
  else
    for (const auto& d : cfg.detectors) dets.push_back(&find_detector(registry, d));

  std::vector<WindowedStream> streams;
  for (const auto& ds : datasets) streams.push_back(generate_stream(ds, cfg.window, cfg.seed));

  std::vector<BenchReport> out(streams.size() * dets.size());
  parallel_for(out.size(), cfg.workers, [&](std::size_t i) {
    const auto& spec = *dets[i % dets.size()];
    auto pin = cfg.pinned.find(spec.name);
    out[i] = benchmark_one(spec, streams[i / dets.size()], cfg, pin == cfg.pinned.end() ? HyperConfig{} : pin->second);
  });
  return out;
}

}  // namespace streamad
