#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "streamad/report.hpp"

using namespace streamad;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t window_size = 128;
  std::size_t window_slide = 64;
  std::size_t budget = 30;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_budget) {
  cmd->add_option("--config", c.config, "INI run configuration");
  cmd->add_option("--seed", c.seed, "stream and detector seed");
  cmd->add_option("--window-size", c.window_size, "samples per window");
  cmd->add_option("--window-slide", c.window_slide, "window advance");
  if (with_budget) cmd->add_option("--budget", c.budget, "random-search budget");
  cmd->add_option("--out", c.out, "output path");
}

// Config file first, explicitly given flags override it.
RunConfig merged_config(CLI::App* cmd, const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.config.empty() || cmd->count("--seed")) cfg.seed = c.seed;
  if (c.config.empty() || cmd->count("--window-size")) cfg.window.size = c.window_size;
  if (c.config.empty() || cmd->count("--window-slide")) cfg.window.slide = c.window_slide;
  if (cmd->get_option_no_throw("--budget") && (c.config.empty() || cmd->count("--budget"))) cfg.budget = c.budget;
  if (!c.out.empty()) cfg.out = c.out;
  return cfg;
}

void emit(const ordered_json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << j.dump(2) << '\n';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

ordered_json range_json(const IndexRange& r) { return {r.begin, r.end}; }

std::vector<BenchReport> load_reports(const std::string& input, const std::string& timings) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot open '" + input + "'");
  auto reps = read_reports_jsonl(in);
  if (!timings.empty()) {
    std::ifstream t(timings);
    if (!t) throw std::runtime_error("cannot open '" + timings + "'");
    read_timings_csv(t, reps);
  }
  return reps;
}

void write_to(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  if (path.empty()) return fn(std::cout);
  auto f = open_out(path);
  fn(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming anomaly detection benchmark"};
  app.require_subcommand(1);
  std::string command;

  Common c;
  std::string input, label = "is_anomaly", kind, timings, detector, dataset;
  std::vector<std::string> inputs;
  std::size_t dim = 2;

  auto* ingest = app.add_subcommand("ingest", "stratify a CSV dataset into a windowed stream");
  add_common(ingest, c, false);
  ingest->add_option("--input", input, "CSV dataset")->required();
  ingest->add_option("--label", label, "label column");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, c, false);
  synth->add_option("--kind", kind, "gaussian or subspace")->required();
  synth->add_option("--d", dim, "dimensionality");

  auto* tune_cmd = app.add_subcommand("tune", "random-search one detector on the validation windows");
  add_common(tune_cmd, c, true);
  tune_cmd->add_option("--detector", detector, "detector name")->required();
  tune_cmd->add_option("--dataset", dataset, "CSV path or synth:<kind>:<d>")->required();

  auto* run = app.add_subcommand("run", "tune and evaluate every (detector, dataset) pair");
  add_common(run, c, true);

  auto* report = app.add_subcommand("report", "derive a table from run output");
  report->add_option("--kind", kind, "wins, ranks, cdf, pareto or meta")->required();
  report->add_option("--input", input, "reports.jsonl")->required();
  report->add_option("--timings", timings, "timings.csv");
  report->add_option("--datasets", inputs, "dataset references for the meta report")->delimiter(',');
  report->add_option("--seed", c.seed, "seed for generated datasets");
  report->add_option("--out", c.out, "output CSV (stdout if omitted)");

  auto* meta = app.add_subcommand("meta", "meta-feature table");
  meta->add_option("--input", inputs, "dataset references")->required()->delimiter(',');
  meta->add_option("--seed", c.seed, "seed for generated datasets");
  meta->add_option("--out", c.out, "output CSV (stdout if omitted)");

  auto* pareto = app.add_subcommand("pareto", "update-time / MAP frontier");
  pareto->add_option("--input", input, "reports.jsonl")->required();
  pareto->add_option("--timings", timings, "timings.csv")->required();
  pareto->add_option("--out", c.out, "output CSV (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << ordered_json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
    return 2;
  }

  try {
    if (*ingest) {
      command = "ingest";
      const auto cfg = merged_config(ingest, c);
      const auto ds = load_csv(input, label);
      const auto ws = generate_stream(ds, cfg.window, cfg.seed);
      const auto part = partition(ws.windows.size());
      if (!c.out.empty()) save_csv(c.out, ws.data, true);
      emit({{"dataset", ds.name},
            {"samples", ds.size()},
            {"features", ds.d()},
            {"anomaly_ratio", ds.anomaly_ratio()},
            {"step", ws.step},
            {"sparse_anomalies", ws.sparse_anomalies},
            {"windows", ws.windows.size()},
            {"train", range_json(part.train)},
            {"val", range_json(part.val)},
            {"test", range_json(part.test)}},
           "");
    } else if (*synth) {
      command = "synth";
      const auto ds = resolve_dataset("synth:" + kind + ":" + std::to_string(dim), c.seed);
      if (c.out.empty()) write_csv(std::cout, ds);
      else save_csv(c.out, ds);
    } else if (*tune_cmd) {
      command = "tune";
      const auto cfg = merged_config(tune_cmd, c);
      const auto registry = default_registry();
      const auto& spec = find_detector(registry, detector);
      const auto ds = resolve_dataset(dataset, cfg.seed);
      const auto ps = prepare_stream(generate_stream(ds, cfg.window, cfg.seed), window_for(spec.kind, cfg.window));
      auto pin = cfg.pinned.find(spec.name);
      const auto r = tune(spec, ps, cfg.budget, cfg.seed, pin == cfg.pinned.end() ? HyperConfig{} : pin->second);
      ordered_json trials = ordered_json::array();
      for (const auto& t : r.trials) {
        ordered_json j{{"config", t.config}};
        if (t.error.empty()) j["val_map"] = t.map;
        else j["error"] = t.error;
        trials.push_back(j);
      }
      emit({{"detector", spec.name}, {"dataset", ds.name}, {"best", r.best}, {"val_map", r.best_map}, {"trials", trials}},
           c.out);
    } else if (*run) {
      command = "run";
      const auto cfg = merged_config(run, c);
      if (cfg.datasets.empty()) throw std::invalid_argument("no datasets configured");
      std::vector<Dataset> data;
      for (const auto& ref : cfg.datasets) data.push_back(resolve_dataset(ref, cfg.seed));
      const auto rows = run_benchmark(cfg, data);
      std::filesystem::create_directories(cfg.out);
      const std::filesystem::path dir(cfg.out);
      {
        auto f = open_out((dir / "reports.csv").string());
        write_reports_csv(f, rows);
      }
      {
        auto f = open_out((dir / "reports.jsonl").string());
        write_reports_jsonl(f, rows);
      }
      {
        auto f = open_out((dir / "timings.csv").string());
        write_timings_csv(f, rows);
      }
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.failed ? 1 : 0;
      emit({{"rows", rows.size()}, {"failed", failed}, {"out", cfg.out}}, "");
    } else if (*report) {
      command = "report";
      const auto reps = load_reports(input, timings);
      std::map<std::string, MetaFeatureVector> metas;
      for (const auto& ref : inputs) {
        const auto ds = resolve_dataset(ref, c.seed);
        metas[ds.name] = compute_metafeatures(ds);
      }
      write_to(c.out, [&](std::ostream& o) { write_report(o, kind, reps, metas); });
    } else if (*meta) {
      command = "meta";
      std::vector<std::pair<std::string, MetaFeatureVector>> rows;
      for (const auto& ref : inputs) {
        const auto ds = resolve_dataset(ref, c.seed);
        rows.emplace_back(ds.name, compute_metafeatures(ds));
      }
      write_to(c.out, [&](std::ostream& o) { write_metafeature_csv(o, rows); });
    } else if (*pareto) {
      command = "pareto";
      const auto reps = load_reports(input, timings);
      write_to(c.out, [&](std::ostream& o) { write_report(o, "pareto", reps); });
    }
  } catch (const std::exception& e) {
    std::cerr << ordered_json{{"error", e.what()}, {"command", command}}.dump() << '\n';
    return 1;
  }
  return 0;
}
