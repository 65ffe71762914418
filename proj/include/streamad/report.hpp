#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "streamad/bench.hpp"
#include "streamad/metafeatures.hpp"

namespace streamad {

// Shortest text that reads back to the same double.
inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

// ---- per-run artefacts ------------------------------------------------------
// Results and timings go to separate files so results are byte-reproducible.

inline void write_reports_csv(std::ostream& out, const std::vector<BenchReport>& reports) {
  out << "detector,dataset,config,seed,runs,map,auc,windows,excluded_windows,failed,error\n";
  for (const auto& r : reports)
    out << csv_cell(r.detector) << ',' << csv_cell(r.dataset) << ',' << csv_cell(r.config) << ',' << r.seed << ','
        << r.runs << ',' << exact(r.map) << ',' << exact(r.auc) << ',' << r.windows << ',' << r.excluded_windows << ','
        << (r.failed ? 1 : 0) << ',' << csv_cell(r.error) << '\n';
}

inline void write_timings_csv(std::ostream& out, const std::vector<BenchReport>& reports) {
  out << "detector,dataset,train_seconds,update_seconds\n";
  for (const auto& r : reports)
    out << csv_cell(r.detector) << ',' << csv_cell(r.dataset) << ',' << exact(r.train_seconds) << ','
        << exact(r.update_seconds) << '\n';
}

inline nlohmann::ordered_json to_json(const BenchReport& r, bool with_timing) {
  nlohmann::ordered_json j;
  j["detector"] = r.detector;
  j["dataset"] = r.dataset;
  j["config"] = r.config;
  j["seed"] = r.seed;
  j["runs"] = r.runs;
  j["map"] = r.map;
  j["auc"] = r.auc;
  j["windows"] = r.windows;
  j["excluded_windows"] = r.excluded_windows;
  j["failed"] = r.failed;
  j["error"] = r.error;
  if (with_timing) {
    j["train_seconds"] = r.train_seconds;
    j["update_seconds"] = r.update_seconds;
  }
  return j;
}

inline BenchReport report_from_json(const nlohmann::json& j) {
  BenchReport r;
  r.detector = j.at("detector").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.config = j.value("config", "");
  r.seed = j.value("seed", std::uint64_t{0});
  r.runs = j.value("runs", std::size_t{1});
  r.map = j.at("map").get<double>();
  r.auc = j.at("auc").get<double>();
  r.windows = j.value("windows", std::size_t{0});
  r.excluded_windows = j.value("excluded_windows", std::size_t{0});
  r.failed = j.value("failed", false);
  r.error = j.value("error", "");
  r.train_seconds = j.value("train_seconds", 0.0);
  r.update_seconds = j.value("update_seconds", 0.0);
  return r;
}

inline void write_reports_jsonl(std::ostream& out, const std::vector<BenchReport>& reports, bool with_timing = false) {
  for (const auto& r : reports) out << to_json(r, with_timing).dump() << '\n';
}

inline std::vector<BenchReport> read_reports_jsonl(std::istream& in) {
  std::vector<BenchReport> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(report_from_json(nlohmann::json::parse(line)));
  return out;
}

// Merges timings (detector, dataset, train, update) into matching reports.
inline void read_timings_csv(std::istream& in, std::vector<BenchReport>& reports) {
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto c = detail::split_csv_line(line);
    if (c.size() < 4) continue;
    for (auto& r : reports)
      if (r.detector == c[0] && r.dataset == c[1]) {
        r.train_seconds = std::stod(c[2]);
        r.update_seconds = std::stod(c[3]);
      }
  }
}

// ---- cross-dataset tables ---------------------------------------------------

struct ReportMatrix {
  std::vector<std::string> datasets, detectors;
  MetricMatrix map, auc;  // [dataset][detector]; failed runs count as 0
  MetricMatrix update_seconds;
};

inline ReportMatrix report_matrix(const std::vector<BenchReport>& reports) {
  ReportMatrix m;
  auto index = [](std::vector<std::string>& v, const std::string& s) {
    auto it = std::find(v.begin(), v.end(), s);
    if (it != v.end()) return static_cast<std::size_t>(it - v.begin());
    v.push_back(s);
    return v.size() - 1;
  };
  for (const auto& r : reports) {
    index(m.datasets, r.dataset);
    index(m.detectors, r.detector);
  }
  const std::size_t nd = m.datasets.size(), nk = m.detectors.size();
  m.map.assign(nd, std::vector<double>(nk, 0.0));
  m.auc = m.map;
  m.update_seconds = m.map;
  for (const auto& r : reports) {
    const auto i = index(m.datasets, r.dataset), j = index(m.detectors, r.detector);
    m.map[i][j] = r.failed ? 0.0 : r.map;
    m.auc[i][j] = r.failed ? 0.0 : r.auc;
    m.update_seconds[i][j] = r.update_seconds;
  }
  return m;
}

inline void write_wins(std::ostream& out, const ReportMatrix& m) {
  const auto wm = wins_and_adw(m.map), wa = wins_and_adw(m.auc);
  auto opt = [](const std::optional<double>& v) { return v ? exact(*v) : std::string(); };
  out << "detector,wins_map,adw_map,wins_auc,adw_auc\n";
  for (std::size_t j = 0; j < m.detectors.size(); ++j)
    out << csv_cell(m.detectors[j]) << ',' << wm[j].wins << ',' << opt(wm[j].adw) << ',' << wa[j].wins << ','
        << opt(wa[j].adw) << '\n';
}

inline void write_ranks(std::ostream& out, const ReportMatrix& m) {
  out << "metric,detector,mean_rank,friedman_chi2,friedman_p,critical_distance\n";
  for (const auto& [metric, mat] : {std::pair{"map", &m.map}, std::pair{"auc", &m.auc}}) {
    const auto ra = rank_analysis(*mat);
    for (std::size_t j = 0; j < m.detectors.size(); ++j)
      out << metric << ',' << csv_cell(m.detectors[j]) << ',' << exact(ra.mean_ranks[j]) << ',' << exact(ra.friedman_chi2)
          << ',' << exact(ra.friedman_p) << ',' << exact(ra.critical_distance) << '\n';
  }
}

inline void write_cdf(std::ostream& out, const ReportMatrix& m, double threshold = 0.6) {
  const auto rf = random_failure_count(m.auc, threshold);
  out << "failures,pmf,cdf\n";
  for (std::size_t c = 0; c < rf.pmf.size(); ++c) out << c << ',' << exact(rf.pmf[c]) << ',' << exact(rf.cdf[c]) << '\n';
}

// Per detector: mean update time and mean MAP over datasets; frontier rows only.
inline std::vector<TradeoffPoint> tradeoff_points(const ReportMatrix& m) {
  std::vector<TradeoffPoint> pts;
  for (std::size_t j = 0; j < m.detectors.size(); ++j) {
    TradeoffPoint p;
    p.label = m.detectors[j];
    for (std::size_t i = 0; i < m.datasets.size(); ++i) {
      p.map += m.map[i][j];
      p.update_seconds += m.update_seconds[i][j];
    }
    p.map /= static_cast<double>(m.datasets.size());
    p.update_seconds /= static_cast<double>(m.datasets.size());
    pts.push_back(p);
  }
  return pts;
}

inline void write_pareto(std::ostream& out, const ReportMatrix& m) {
  out << "detector,update_seconds,map\n";
  for (const auto& p : pareto_frontier(tradeoff_points(m)))
    out << csv_cell(p.label) << ',' << exact(p.update_seconds) << ',' << exact(p.map) << '\n';
}

// Spearman correlation of each meta-feature with each detector's MAP over
// datasets. Pairs with constant meta values or too few datasets are skipped.
inline void write_meta(std::ostream& out, const ReportMatrix& m, const std::map<std::string, MetaFeatureVector>& metas) {
  out << "feature,predictive,detector,metric,rho,p_value,n\n";
  if (m.datasets.empty()) return;
  const auto names = fields(metas.begin()->second);
  for (std::size_t f = 0; f < names.size(); ++f) {
    for (std::size_t j = 0; j < m.detectors.size(); ++j) {
      std::vector<double> x, y;
      for (std::size_t i = 0; i < m.datasets.size(); ++i) {
        auto it = metas.find(m.datasets[i]);
        if (it == metas.end()) continue;
        const double v = fields(it->second)[f].value;
        if (std::isnan(v)) continue;
        x.push_back(v);
        y.push_back(m.map[i][j]);
      }
      try {
        const auto s = spearman(x, y);
        out << names[f].name << ',' << (names[f].predictive ? 1 : 0) << ',' << csv_cell(m.detectors[j]) << ",map,"
            << exact(s.rho) << ',' << exact(s.p_value) << ',' << x.size() << '\n';
      } catch (const std::invalid_argument&) {
      }
    }
  }
}

inline void write_report(std::ostream& out, const std::string& kind, const std::vector<BenchReport>& reports,
                         const std::map<std::string, MetaFeatureVector>& metas = {}) {
  if (reports.empty()) throw std::invalid_argument("no reports");
  const auto m = report_matrix(reports);
  if (kind == "wins") return write_wins(out, m);
  if (kind == "ranks") return write_ranks(out, m);
  if (kind == "cdf") return write_cdf(out, m);
  if (kind == "pareto") return write_pareto(out, m);
  if (kind == "meta") {
    if (metas.empty()) throw std::invalid_argument("meta report needs meta-features");
    return write_meta(out, m, metas);
  }
  throw std::invalid_argument("unknown report kind '" + kind + "'");
}

// ---- configuration ----------------------------------------------------------
//
//   [run]
//   datasets = data/a.csv, synth:gaussian:2, synth:subspace:40
//   detectors = MCOD, HST
//   window_size = 128
//   window_slide = 64
//   seed = 0
//   seeds = 30
//   budget = 30
//   out = results
//   workers = 1
//
//   [MCOD]          ; pins hyper-parameters for one detector
//   radius = 0.5

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline RunConfig parse_run_config(std::istream& in) {
  boost::property_tree::ptree pt;
  boost::property_tree::ini_parser::read_ini(in, pt);
  RunConfig c;
  for (const auto& [section, body] : pt) {
    if (section == "run") {
      for (const auto& [key, node] : body) {
        const auto v = node.get_value<std::string>();
        if (key == "datasets") c.datasets = split_list(v);
        else if (key == "detectors") c.detectors = split_list(v);
        else if (key == "window_size") c.window.size = std::stoul(v);
        else if (key == "window_slide") c.window.slide = std::stoul(v);
        else if (key == "seed") c.seed = std::stoull(v);
        else if (key == "seeds") c.seeds = std::stoul(v);
        else if (key == "budget") c.budget = std::stoul(v);
        else if (key == "out") c.out = v;
        else if (key == "workers") c.workers = std::stoul(v);
        else throw std::invalid_argument("unknown key '" + key + "' in [run]");
      }
    } else {
      auto& pins = c.pinned[canonical_detector_name(section)];
      for (const auto& [key, node] : body) pins[key] = node.get_value<double>();
    }
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
  return parse_run_config(in);
}

// A CSV path, or a generator: synth:gaussian:<d> (1000 samples, 2% anomalies
// displaced 10 SD) or synth:subspace:<d> (875 samples, 2% anomalies).
inline Dataset resolve_dataset(const std::string& ref, std::uint64_t seed) {
  if (ref.rfind("synth:", 0) != 0) return load_csv(ref);
  const auto parts = split_list([&] {
    std::string s = ref;
    std::replace(s.begin(), s.end(), ':', ',');
    return s;
  }());
  if (parts.size() != 3) throw std::invalid_argument("expected synth:<kind>:<d>, got '" + ref + "'");
  const std::size_t d = std::stoul(parts[2]);
  if (parts[1] == "gaussian") return generate_displaced_gaussian(980, 20, d, 10.0, seed);
  if (parts[1] == "subspace") return generate_subspace_dataset(857, 18, d, default_subspaces(std::min<std::size_t>(d, 14)), seed);
  throw std::invalid_argument("unknown generator '" + parts[1] + "'");
}

}  // namespace streamad
