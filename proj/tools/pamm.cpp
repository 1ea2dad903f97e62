#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pamm/benchmark.hpp"
#include "pamm/error.hpp"
#include "pamm/evaluate.hpp"
#include "pamm/inference.hpp"
#include "pamm/io.hpp"
#include "pamm/serialize.hpp"
#include "pamm/simulator.hpp"
#include "pamm/trainer.hpp"

namespace fs = std::filesystem;
using namespace pamm;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
}

// "<dir>/<stem><suffix>" next to `path`
fs::path sibling(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// One manifest per artifact-producing command.
struct Manifest {
  std::string command;
  std::vector<std::string> args;
  std::string config_hash;
  std::string data_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  json warnings = json::object();
  json extra = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::string started_at = utc_now();

  void write(const fs::path& path) const {
    json j{{"command", command},
           {"args", args},
           {"config_hash", config_hash},
           {"data_hash", data_hash},
           {"seed", seed},
           {"tool_version", kVersion},
           {"started_at", started_at},
           {"timings", {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}}},
           {"outputs", outputs},
           {"warnings", warnings}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    write_text(path, j.dump(2) + "\n");
  }
};

std::size_t default_threads() {
  if (const char* env = std::getenv("PAMM_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw InputError("PAMM_THREADS must be a positive integer");
  }
  return 1;
}

CutStrategy parse_cuts(const std::string& s) {
  if (s == "event_times") return CutStrategy::event_times();
  const std::string prefix = "quantiles:";
  if (s.rfind(prefix, 0) == 0) {
    try {
      const long j = std::stol(s.substr(prefix.size()));
      if (j >= 1) return CutStrategy::quantiles(static_cast<std::size_t>(j));
    } catch (const std::exception&) {
    }
  }
  throw InputError("cut strategy must be 'event_times' or 'quantiles:<J>'");
}

bool looks_like_ped(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  return header.rfind("id,j,tj,delta,", 0) == 0;
}

std::vector<std::string> argv_vector(int argc, char** argv) { return {argv + 1, argv + argc}; }

// ---------------------------------------------------------------------------

struct TransformOpts {
  std::string input, out, cuts = "quantiles:20", config;
  std::size_t max_intervals = 0;
  int n_causes = 0;
};

int cmd_transform(const TransformOpts& o, Manifest& mf) {
  const SurvivalData data = read_records_csv(o.input);
  mf.data_hash = fnv1a(slurp(o.input));
  CutStrategy strategy = parse_cuts(o.cuts);
  std::size_t max_j = o.max_intervals;
  if (!o.config.empty()) {
    const ModelSpec spec = model_spec_from_json(read_json_file(o.config));
    strategy = spec.cuts;
    if (spec.max_intervals > 0) max_j = spec.max_intervals;
    mf.config_hash = fnv1a(slurp(o.config));
  }
  const CutPoints cuts = make_cut_points(data.records, strategy, max_j);
  const PedFrame ped = prepare_ped(data, cuts, o.n_causes);
  const fs::path out(o.out);
  {
    auto f = open_output(out);
    write_ped_csv(f, ped);
  }
  const fs::path meta = sibling(out, ".cuts.json");
  write_text(meta, ped_meta_to_json(ped).dump(2) + "\n");
  mf.outputs = {out.string(), meta.string()};
  mf.warnings["admin_censored"] = ped.admin_censored;
  mf.extra["n_rows"] = ped.rows.size();
  mf.write(sibling(out, ".manifest.json"));
  if (ped.admin_censored > 0)
    std::cerr << "warning: " << ped.admin_censored << " record(s) censored at the last cut point\n";
  return 0;
}

struct FitOpts {
  std::string input, config, train_config, cuts_doc, out;
  bool pamm_only = false;
  std::optional<std::uint64_t> seed;
};

int cmd_fit(const FitOpts& o, Manifest& mf) {
  const json spec_json = read_json_file(o.config);
  ModelSpec spec = model_spec_from_json(spec_json);
  if (o.pamm_only) spec.deep.reset();
  TrainConfig cfg;
  if (!o.train_config.empty()) cfg = train_config_from_json(read_json_file(o.train_config));
  if (o.seed) cfg.seed = *o.seed;
  mf.seed = cfg.seed;
  mf.config_hash = fnv1a(to_json(spec).dump() + to_json(cfg).dump());
  mf.data_hash = fnv1a(slurp(o.input));

  PedFrame ped;
  if (looks_like_ped(o.input)) {
    const std::string meta_path = o.cuts_doc.empty() ? sibling(o.input, ".cuts.json").string() : o.cuts_doc;
    const PedMeta meta = ped_meta_from_json(read_json_file(meta_path));
    std::ifstream in(o.input);
    ped = read_ped_csv(in, meta.cuts, meta.n_causes, meta.expanded);
  } else {
    const SurvivalData data = read_records_csv(o.input);
    const CutPoints cuts = make_cut_points(data.records, spec.cuts, spec.max_intervals);
    ped = prepare_ped(data, cuts, spec.n_causes);
    mf.warnings["admin_censored"] = ped.admin_censored;
  }
  const TuneResult res = tune(ped, spec, cfg);
  const fs::path out(o.out);
  write_text(out, to_json(res.best.model).dump(2) + "\n");
  json report = to_json(res.best.report);
  json grid = json::array();
  for (const auto& e : res.evaluated)
    grid.push_back({{"psi_scale", e.psi_scale},
                    {"lambda_re", e.lambda_re},
                    {"learning_rate", e.learning_rate},
                    {"val_deviance", e.diverged ? json(nullptr) : json(e.val_deviance)},
                    {"diverged", e.diverged}});
  report["grid"] = grid;
  report["config"] = to_json(res.config);
  const fs::path report_path = sibling(out, ".report.json");
  write_text(report_path, report.dump(2) + "\n");
  const fs::path epochs_path = sibling(out, ".epochs.csv");
  {
    auto f = open_output(epochs_path);
    write_epochs_csv(f, res.best.report);
  }
  mf.outputs = {out.string(), report_path.string(), epochs_path.string()};
  mf.warnings["unseen_clusters"] = res.best.report.unseen_clusters;
  mf.extra["pamm_only"] = o.pamm_only;
  mf.write(sibling(out, ".manifest.json"));
  return 0;
}

struct PredictOpts {
  std::string model, data, out, effects;
  std::vector<double> grid;
};

void write_effects(const HazardModel& m, const fs::path& dir, std::vector<std::string>& outputs) {
  fs::create_directories(dir);
  for (std::size_t ti = 0; ti < m.terms.size(); ++ti) {
    const auto& t = m.terms[ti];
    std::string name = to_string(t.kind);
    for (const auto& f : t.features) name += "_" + f;
    const fs::path path = dir / ("effect_" + std::to_string(ti) + "_" + name + ".csv");
    if (t.kind == TermKind::smooth || t.kind == TermKind::smooth_time) {
      auto out = open_output(path);
      out << "x";
      for (int k = 1; k <= m.n_causes; ++k) out << ",f_" << k;
      out << '\n';
      for (int g = 0; g <= 100; ++g) {
        const double x = t.basis.lo + (t.basis.hi - t.basis.lo) * g / 100.0;
        const Eigen::RowVectorXd f = smooth_effect(m, ti, x);
        out << format_double(x);
        for (Eigen::Index k = 0; k < f.size(); ++k) out << ',' << format_double(f(k));
        out << '\n';
      }
      outputs.push_back(path.string());
    } else if (t.kind == TermKind::tensor) {
      auto out = open_output(path);
      out << "x1,x2";
      for (int k = 1; k <= m.n_causes; ++k) out << ",f_" << k;
      out << '\n';
      for (int a = 0; a <= 30; ++a)
        for (int b = 0; b <= 30; ++b) {
          const double x1 = t.basis.lo + (t.basis.hi - t.basis.lo) * a / 30.0;
          const double x2 = t.basis2.lo + (t.basis2.hi - t.basis2.lo) * b / 30.0;
          const Eigen::RowVectorXd f = tensor_effect(m, ti, x1, x2);
          out << format_double(x1) << ',' << format_double(x2);
          for (Eigen::Index k = 0; k < f.size(); ++k) out << ',' << format_double(f(k));
          out << '\n';
        }
      outputs.push_back(path.string());
    }
  }
}

int cmd_predict(const PredictOpts& o, Manifest& mf) {
  const HazardModel model = model_from_json(read_json_file(o.model));
  const SurvivalData data = read_records_csv(o.data);
  mf.config_hash = fnv1a(slurp(o.model));
  mf.data_hash = fnv1a(slurp(o.data));
  std::size_t unseen = 0;
  const auto curves = predict_curves(model, data, &unseen);
  std::vector<double> grid = o.grid.empty() ? model.cuts.values() : o.grid;
  std::vector<std::string> ids;
  for (const auto& r : data.records) ids.push_back(r.id);
  const fs::path out(o.out);
  {
    auto f = open_output(out);
    write_curves_csv(f, ids, curves, grid);
  }
  mf.outputs = {out.string()};
  std::size_t extrapolated = 0;
  for (double t : grid) extrapolated += t > model.cuts.horizon() ? 1 : 0;
  if (!o.effects.empty()) write_effects(model, o.effects, mf.outputs);
  mf.warnings["unseen_clusters"] = unseen;
  mf.warnings["extrapolated_grid_points"] = extrapolated;
  mf.write(sibling(out, ".manifest.json"));
  if (extrapolated > 0) std::cerr << "warning: " << extrapolated << " grid point(s) beyond the last cut point\n";
  return 0;
}

struct EvaluateOpts {
  std::vector<std::string> positional;
  std::string out, reference;
  bool km = false;
  int cause = 0;
};

int cmd_evaluate(const EvaluateOpts& o, Manifest& mf) {
  std::string model_path, test_path;
  if (o.positional.size() == 2) {
    model_path = o.positional[0];
    test_path = o.positional[1];
  } else if (o.positional.size() == 1 && o.km) {
    test_path = o.positional[0];
  } else {
    throw InputError("evaluate expects <model.json> <test.csv>, or <test.csv> with --km");
  }
  const SurvivalData test = read_records_csv(test_path);
  mf.data_hash = fnv1a(slurp(test_path));
  EvalResult r;
  if (o.km) {
    const SurvivalData ref = o.reference.empty() ? test : read_records_csv(o.reference);
    r = evaluate_km(ref, test, o.cause);
    mf.extra["method"] = "km";
  } else {
    const HazardModel model = model_from_json(read_json_file(model_path));
    mf.config_hash = fnv1a(slurp(model_path));
    r = evaluate_model(model, test, o.cause);
    mf.extra["method"] = "model";
  }
  const fs::path out(o.out);
  json j = to_json(r);
  write_text(out, j.dump(2) + "\n");
  const fs::path brier_path = sibling(out, ".brier.csv");
  {
    auto f = open_output(brier_path);
    f << "tau,brier\n";
    for (const auto& [t, v] : r.series) f << format_double(t) << ',' << format_double(v) << '\n';
  }
  mf.outputs = {out.string(), brier_path.string()};
  mf.warnings["ipcw_dropped"] = r.dropped;
  mf.warnings["extrapolated"] = r.extrapolated;
  mf.write(sibling(out, ".manifest.json"));
  std::cout << j.dump() << "\n";
  return 0;
}

struct SimulateOpts {
  std::string scenario = "cr_v1", out;
  std::size_t n = 0;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateOpts& o, Manifest& mf) {
  Scenario sc = named_scenario(o.scenario);
  if (o.n > 0) sc.n_subjects = o.n;
  const ScenarioDataset ds = make_scenario_dataset(sc, o.seed);
  const fs::path out(o.out);
  {
    auto f = open_output(out);
    write_records_csv(f, ds.data);
  }
  const json scen{{"scenario", sc.name},
                  {"version", sc.version},
                  {"seed", o.seed},
                  {"n_subjects", sc.n_subjects},
                  {"t_max", sc.t_max},
                  {"censoring_rate", sc.censoring_rate},
                  {"n_features", sc.n_features},
                  {"feature_range", {sc.feature_lo, sc.feature_hi}},
                  {"n_clusters", sc.n_clusters},
                  {"cluster_sd", sc.cluster_sd},
                  {"n_causes", sc.causes.size()},
                  {"grid_steps", sc.grid_steps},
                  {"cluster_effects", ds.cluster_effects}};
  const fs::path scen_path = sibling(out, ".scenario.json");
  write_text(scen_path, scen.dump(2) + "\n");
  mf.seed = o.seed;
  mf.config_hash = fnv1a(scen.dump());
  mf.data_hash = fnv1a(slurp(out.string()));
  mf.outputs = {out.string(), scen_path.string()};
  mf.write(sibling(out, ".manifest.json"));
  return 0;
}

struct BenchmarkOpts {
  std::string scenario = "cr_v1", out, config;
  std::size_t reps = 25, n_train = 1000, n_test = 1000, intervals = 20;
  std::uint64_t seed = 1;
  std::optional<std::size_t> threads;
  bool pamm_only = false;
};

int cmd_benchmark(const BenchmarkOpts& o, Manifest& mf) {
  BenchmarkConfig cfg;
  cfg.scenario = o.scenario;
  cfg.n_reps = o.reps;
  cfg.n_train = o.n_train;
  cfg.n_test = o.n_test;
  cfg.n_intervals = o.intervals;
  cfg.seed = o.seed;
  cfg.threads = o.threads.value_or(default_threads());
  cfg.pamm_only = o.pamm_only;
  if (!o.config.empty()) cfg.train = train_config_from_json(read_json_file(o.config));
  mf.seed = o.seed;
  mf.config_hash = fnv1a(to_json(cfg.train).dump() + o.scenario + std::to_string(o.reps) + std::to_string(o.n_train) +
                         std::to_string(o.n_test) + std::to_string(o.intervals) + (o.pamm_only ? "1" : "0"));
  const BenchmarkResult res = run_benchmark(cfg);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::ostringstream summary;
  write_summary_csv(summary, res);
  write_text(dir / "summary.csv", summary.str());
  {
    auto f = open_output(dir / "replicates.csv");
    write_replicates_csv(f, res);
  }
  mf.data_hash = fnv1a(summary.str());
  mf.outputs = {(dir / "summary.csv").string(), (dir / "replicates.csv").string()};
  json failures = json::array();
  for (const auto& r : res.replicates)
    if (!r.ok) failures.push_back({{"replicate", r.index}, {"error", r.error}});
  mf.warnings["failed_replicates"] = failures;
  mf.extra["threads"] = cfg.threads;
  mf.write(dir / "manifest.json");
  std::cout << summary.str();
  if (res.quota_exceeded())
    throw QuotaError(std::to_string(res.n_failed) + " of " + std::to_string(res.replicates.size()) +
                     " replicates failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piecewise exponential additive mixed models with an optional deep head"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TransformOpts tr;
  auto* transform = app.add_subcommand("transform", "records CSV -> PED CSV and cut points");
  transform->add_option("input", tr.input, "records CSV")->required();
  transform->add_option("--out", tr.out, "PED CSV")->required();
  transform->add_option("--cuts", tr.cuts, "event_times or quantiles:<J>");
  transform->add_option("--max-intervals", tr.max_intervals, "cap on J");
  transform->add_option("--causes", tr.n_causes, "number of competing risks (default: from data)");
  transform->add_option("--config", tr.config, "model JSON whose cut strategy is used");

  FitOpts fo;
  std::uint64_t fit_seed = 0;
  auto* fit_cmd = app.add_subcommand("fit", "fit a model (grid search when the config has a grid)");
  fit_cmd->add_option("input", fo.input, "records CSV or PED CSV")->required();
  fit_cmd->add_option("--config", fo.config, "model specification JSON")->required();
  fit_cmd->add_option("--train-config", fo.train_config, "training configuration JSON");
  fit_cmd->add_option("--cuts", fo.cuts_doc, "cut points JSON for PED input");
  fit_cmd->add_option("--out", fo.out, "fitted model JSON")->required();
  fit_cmd->add_flag("--pamm-only", fo.pamm_only, "drop the deep head");
  auto* fit_seed_opt = fit_cmd->add_option("--seed", fit_seed, "random seed");

  PredictOpts po;
  auto* predict = app.add_subcommand("predict", "survival and CIF curves for new records");
  predict->add_option("model", po.model, "fitted model JSON")->required();
  predict->add_option("data", po.data, "records CSV")->required();
  predict->add_option("--out", po.out, "curves CSV")->required();
  predict->add_option("--grid", po.grid, "time points (default: cut points)")->delimiter(',');
  predict->add_option("--effects", po.effects, "directory for smooth effect CSVs");

  EvaluateOpts eo;
  auto* evaluate = app.add_subcommand("evaluate", "IBS at the test event quartiles");
  evaluate->add_option("files", eo.positional, "[model.json] test.csv")->required()->expected(1, 2);
  evaluate->add_option("--out", eo.out, "evaluation JSON")->required();
  evaluate->add_flag("--km", eo.km, "score the Kaplan-Meier / Aalen-Johansen baseline");
  evaluate->add_option("--reference", eo.reference, "records the baseline is fitted on (default: test)");
  evaluate->add_option("--cause", eo.cause, "cause of interest (0: any event)");

  SimulateOpts so;
  auto* simulate = app.add_subcommand("simulate", "draw a dataset from a named scenario");
  simulate->add_option("--scenario", so.scenario, "cr_v1, mixed_v1 or latent_v1");
  simulate->add_option("--n", so.n, "number of subjects (default: scenario)");
  simulate->add_option("--seed", so.seed, "random seed");
  simulate->add_option("--out", so.out, "records CSV")->required();

  BenchmarkOpts bo;
  std::size_t bench_threads = 0;
  auto* bench = app.add_subcommand("benchmark", "replicated simulation study");
  bench->add_option("--scenario", bo.scenario, "scenario name");
  bench->add_option("--reps", bo.reps, "number of replicates");
  bench->add_option("--n-train", bo.n_train, "training subjects per replicate");
  bench->add_option("--n-test", bo.n_test, "test subjects per replicate");
  bench->add_option("--intervals", bo.intervals, "quantile cut points J");
  bench->add_option("--seed", bo.seed, "master seed");
  auto* threads_opt = bench->add_option("--threads", bench_threads, "worker threads (default: $PAMM_THREADS or 1)")
                          ->check(CLI::PositiveNumber);
  bench->add_option("--config", bo.config, "training configuration JSON");
  bench->add_flag("--pamm-only", bo.pamm_only, "skip the deep model");
  bench->add_option("--out", bo.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Manifest mf;
  mf.args = argv_vector(argc, argv);
  try {
    if (*transform) {
      mf.command = "transform";
      return cmd_transform(tr, mf);
    }
    if (*fit_cmd) {
      mf.command = "fit";
      if (*fit_seed_opt) fo.seed = fit_seed;
      return cmd_fit(fo, mf);
    }
    if (*predict) {
      mf.command = "predict";
      return cmd_predict(po, mf);
    }
    if (*evaluate) {
      mf.command = "evaluate";
      return cmd_evaluate(eo, mf);
    }
    if (*simulate) {
      mf.command = "simulate";
      return cmd_simulate(so, mf);
    }
    if (*bench) {
      mf.command = "benchmark";
      if (*threads_opt) bo.threads = bench_threads;
      return cmd_benchmark(bo, mf);
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const QuotaError& e) {
    std::cerr << "benchmark failure: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
