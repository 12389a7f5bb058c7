// nnpi: synthesize data, train and evaluate prediction-interval models,
// tune hyperparameters and export report tables.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

#include "nnpi/nnpi.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Globals {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::size_t jobs = 1;
  std::string config;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
};

/// Assigns `value` to `target` when the flag was given on the command line.
template <typename T, typename U>
void override_if(const CLI::Option* opt, T& target, const U& value) {
  if (opt && opt->count() > 0) target = value;
}

json load_config_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw nnpi::ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw nnpi::ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw nnpi::ConfigError("cannot create output directory '" + out + "': " + ec.message());
  return fs::path(out);
}

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  std::size_t n = 2000, d = 22, subjects = 20, clusters = 4;
  std::string noise = "heteroscedastic";
  double sigma0 = 0.1, sigma1 = 0.4, jitter = 0.3;
  std::string file = "data.csv";
  CLI::Option *n_opt, *d_opt, *subjects_opt, *clusters_opt, *noise_opt, *sigma0_opt, *sigma1_opt, *jitter_opt;
};

nnpi::NoiseKind noise_from_string(const std::string& s) {
  if (s == "heteroscedastic") return nnpi::NoiseKind::heteroscedastic;
  if (s == "homoscedastic") return nnpi::NoiseKind::homoscedastic;
  throw nnpi::ConfigError("unknown noise model '" + s + "'");
}

std::string to_string(nnpi::NoiseKind k) {
  return k == nnpi::NoiseKind::homoscedastic ? "homoscedastic" : "heteroscedastic";
}

json to_json(const nnpi::SynthConfig& c) {
  return {{"n", c.n},
          {"d", c.d},
          {"subjects", c.subjects},
          {"clusters", c.clusters},
          {"noise", to_string(c.noise.kind)},
          {"sigma0", c.noise.sigma0},
          {"sigma1", c.noise.sigma1},
          {"jitter", c.tag_jitter},
          {"seed", c.seed}};
}

int cmd_synth(const Globals& g, const SynthFlags& f) {
  const json file = load_config_json(g.config);
  nnpi::SynthConfig c;
  if (file.contains("synth")) {
    const auto& s = file.at("synth");
    nnpi::detail::read_opt(s, "n", c.n);
    nnpi::detail::read_opt(s, "d", c.d);
    nnpi::detail::read_opt(s, "subjects", c.subjects);
    nnpi::detail::read_opt(s, "clusters", c.clusters);
    if (s.contains("noise")) c.noise.kind = noise_from_string(s.at("noise").get<std::string>());
    nnpi::detail::read_opt(s, "sigma0", c.noise.sigma0);
    nnpi::detail::read_opt(s, "sigma1", c.noise.sigma1);
    nnpi::detail::read_opt(s, "jitter", c.tag_jitter);
  }
  nnpi::detail::read_opt(file, "seed", c.seed);
  override_if(f.n_opt, c.n, f.n);
  override_if(f.d_opt, c.d, f.d);
  override_if(f.subjects_opt, c.subjects, f.subjects);
  override_if(f.clusters_opt, c.clusters, f.clusters);
  if (f.noise_opt->count()) c.noise.kind = noise_from_string(f.noise);
  override_if(f.sigma0_opt, c.noise.sigma0, f.sigma0);
  override_if(f.sigma1_opt, c.noise.sigma1, f.sigma1);
  override_if(f.jitter_opt, c.tag_jitter, f.jitter);
  override_if(g.seed_opt, c.seed, g.seed);
  c.validate();

  const fs::path out = prepare_out(g.out);
  const auto ds = nnpi::synth_generate(c);
  nnpi::save_dataset((out / f.file).string(), ds);
  nnpi::write_json_file((out / "synth_config.json").string(), {{"command", "synth"}, {"synth", to_json(c)}});
  std::cout << "wrote " << ds.rows() << " rows to " << (out / f.file).string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// shared run-config flags for train and tune

struct RunFlags {
  std::string data;
  std::string method, scenario;
  std::vector<double> confidences;
  std::size_t b = 20, k = 4, folds = 10, epochs = 300, generations = 200, batch = 128;
  double lr = 0.02, softening = 160, lambda = 15;
  std::vector<std::size_t> hidden;
  std::string activation;
  CLI::Option *data_opt, *method_opt, *scenario_opt, *conf_opt, *b_opt, *k_opt, *folds_opt, *epochs_opt,
      *generations_opt, *batch_opt, *lr_opt, *softening_opt, *lambda_opt, *hidden_opt, *activation_opt;

  void add(CLI::App* cmd) {
    data_opt = cmd->add_option("--data", data, "Input dataset (subject,label,features...)");
    method_opt = cmd->add_option("--method", method, "loss_s | loss_l | bootstrap");
    scenario_opt = cmd->add_option("--scenario", scenario, "generalized | personalized | hybrid");
    conf_opt = cmd->add_option("--confidence", confidences, "Target confidence level(s) in (0,1)");
    b_opt = cmd->add_option("--b", b, "Bootstrap ensemble size");
    k_opt = cmd->add_option("--k", k, "Number of subject clusters (hybrid)");
    folds_opt = cmd->add_option("--folds", folds, "Cross-validation folds");
    epochs_opt = cmd->add_option("--epochs", epochs, "Gradient-descent epochs");
    generations_opt = cmd->add_option("--generations", generations, "GA generations");
    batch_opt = cmd->add_option("--batch", batch, "Mini-batch size");
    lr_opt = cmd->add_option("--lr", lr, "Learning rate");
    softening_opt = cmd->add_option("--softening", softening, "Soft-loss softening factor s");
    lambda_opt = cmd->add_option("--lambda", lambda, "Soft-loss coverage weight");
    hidden_opt = cmd->add_option("--hidden", hidden, "Hidden layer widths");
    activation_opt = cmd->add_option("--activation", activation, "relu | tanh | linear");
  }
};

struct Resolved {
  nnpi::RunConfig rc;
  std::string data;
  json extra = json::object();
};

Resolved resolve(const Globals& g, const RunFlags& f) {
  Resolved r;
  const json file = load_config_json(g.config);
  nnpi::merge_json(r.rc, file);
  if (file.contains("data")) r.data = file.at("data").get<std::string>();
  auto& s = r.rc.settings;
  override_if(f.data_opt, r.data, f.data);
  if (f.method_opt->count()) s.method = nnpi::method_from_string(f.method);
  if (f.scenario_opt->count()) r.rc.scenario = nnpi::scenario_from_string(f.scenario);
  override_if(f.conf_opt, r.rc.confidences, f.confidences);
  override_if(f.b_opt, s.bootstrap_members, f.b);
  override_if(f.k_opt, s.clusters, f.k);
  override_if(f.folds_opt, s.folds, f.folds);
  override_if(f.epochs_opt, s.gd.max_epochs, f.epochs);
  override_if(f.generations_opt, s.ga.generations, f.generations);
  override_if(f.batch_opt, s.gd.batch_size, f.batch);
  override_if(f.lr_opt, s.gd.learning_rate, f.lr);
  override_if(f.softening_opt, s.loss_s.softening, f.softening);
  override_if(f.lambda_opt, s.loss_s.lambda, f.lambda);
  override_if(f.hidden_opt, s.net.hidden_layers, f.hidden);
  if (f.activation_opt->count()) s.net.hidden_activation = nnpi::activation_from_string(f.activation);
  override_if(g.seed_opt, s.seed, g.seed);
  override_if(g.jobs_opt, s.jobs, g.jobs);
  if (r.data.empty()) throw nnpi::ConfigError("--data is required");
  nnpi::validate(r.rc);
  return r;
}

/// Resolved config as written next to outputs. Worker count is left out: it
/// never changes results.
json resolved_json(const std::string& command, const Resolved& r) {
  json j = nnpi::to_json(r.rc);
  j.erase("jobs");
  j["command"] = command;
  j["data"] = r.data;
  for (auto& [k, v] : r.extra.items()) j[k] = v;
  return j;
}

// ---------------------------------------------------------------------------
// train

void write_unit_files(const fs::path& out, const nnpi::ScenarioRun& run) {
  fs::create_directories(out / "histories");
  fs::create_directories(out / "checkpoints");
  for (const auto& u : run.units) {
    const std::string stem = nnpi::unit_stem(u);
    if (!u.history.empty()) {
      std::ostringstream h;
      nnpi::write_history(h, u.history);
      nnpi::write_text_file((out / "histories" / (stem + ".csv")).string(), h.str());
    }
    if (const auto* ens = std::get_if<nnpi::BootstrapEnsemble>(&u.model)) {
      const fs::path dir = out / "checkpoints" / stem;
      fs::create_directories(dir);
      for (std::size_t b = 0; b < ens->size(); ++b) {
        std::ostringstream name;
        name << "member_" << std::setw(3) << std::setfill('0') << b << ".json";
        nnpi::write_json_file((dir / name.str()).string(), nnpi::to_json(ens->members[b]));
      }
    } else {
      nnpi::write_json_file((out / "checkpoints" / (stem + ".json")).string(),
                            nnpi::to_json(std::get<nnpi::MLPParams>(u.model)));
    }
  }
}

void write_report_files(const fs::path& out, const std::string& prefix, const nnpi::ScenarioReport& rep) {
  nnpi::write_text_file((out / (prefix + ".txt")).string(), nnpi::report_text(rep));
  nnpi::write_json_file((out / (prefix + ".json")).string(), nnpi::to_json(rep));
}

int cmd_train(const Globals& g, const RunFlags& f) {
  const Resolved r = resolve(g, f);
  const auto ds = nnpi::load_dataset(r.data);
  const fs::path out = prepare_out(g.out);
  nnpi::write_json_file((out / "config.json").string(), resolved_json("train", r));

  const auto run = nnpi::train_scenario(ds, r.rc.scenario, r.rc.settings, r.rc.confidences);
  nnpi::write_json_file((out / "run.json").string(), nnpi::to_json(run));
  write_unit_files(out, run);
  const auto rep = nnpi::assemble_report(ds, run);
  write_report_files(out, "report", rep);
  nnpi::write_quality_table(std::cout, rep);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct StoredRun {
  nnpi::ScenarioRun run;
  nnpi::Dataset ds;
  json config;
};

StoredRun load_stored_run(const std::string& dir, const std::string& data_override) {
  StoredRun s;
  const fs::path p(dir);
  s.config = nnpi::read_json_file((p / "config.json").string());
  s.run = nnpi::run_from_json(nnpi::read_json_file((p / "run.json").string()));
  const std::string data = data_override.empty() ? s.config.value("data", std::string()) : data_override;
  if (data.empty()) throw nnpi::ConfigError("run '" + dir + "' has no data path; pass --data");
  s.ds = nnpi::load_dataset(data);
  nnpi::check_run_matches(s.run, s.ds);
  return s;
}

int cmd_eval(const Globals& g, const std::string& run_dir, const std::string& data) {
  const auto s = load_stored_run(run_dir, data);
  const fs::path out = prepare_out(g.out);
  const auto rep = nnpi::assemble_report(s.ds, s.run);
  write_report_files(out, "eval_report", rep);
  nnpi::write_quality_table(std::cout, rep);
  return 0;
}

// ---------------------------------------------------------------------------
// tune

int cmd_tune(const Globals& g, const RunFlags& f, std::size_t budget, const CLI::Option* budget_opt) {
  Resolved r = resolve(g, f);
  const json file = load_config_json(g.config);
  std::size_t b = 10;
  nnpi::detail::read_opt(file, "budget", b);
  override_if(budget_opt, b, budget);
  if (b < 1) throw nnpi::ConfigError("--budget must be >= 1");
  if (r.rc.confidences.size() != 1) throw nnpi::ConfigError("tune takes exactly one --confidence");
  r.extra["budget"] = b;
  const double target = r.rc.confidences.front();

  const auto ds = nnpi::load_dataset(r.data);
  const fs::path out = prepare_out(g.out);
  nnpi::write_json_file((out / "config.json").string(), resolved_json("tune", r));

  nnpi::SearchSpace space;
  space.target(target);
  const auto res = nnpi::tune(space, r.rc.settings, b, nnpi::holdout_objective(ds),
                              nnpi::derive_seed(r.rc.settings.seed, 0x7e5));
  std::ostringstream log;
  nnpi::write_trial_log(log, res);
  nnpi::write_text_file((out / "trials.jsonl").string(), log.str());

  nnpi::RunConfig best{r.rc.scenario, {target}, res.best.config};
  json bj = nnpi::to_json(best);
  bj.erase("jobs");
  bj["data"] = r.data;
  nnpi::write_json_file((out / "best_config.json").string(), bj);
  const auto& t = res.trials[res.best_index];
  std::cout << "best trial " << t.index << ": picp " << nnpi::format_fixed(t.outcome.picp) << " mpiw "
            << nnpi::format_fixed(t.outcome.mpiw) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportFlags {
  std::vector<std::string> runs;
  std::string data;
  std::vector<double> sweep_s, sweep_lambda;
  double sweep_confidence = 0.85;
};

int cmd_report(const Globals& g, const ReportFlags& f, const RunFlags& rf) {
  if (f.runs.empty() && f.sweep_s.empty()) throw nnpi::ConfigError("report needs --run and/or --sweep-s");
  const fs::path out = prepare_out(g.out);

  std::ostringstream curve;
  curve << "scenario,method,confidence,picp,mpiw,nmpiw\n";
  for (const auto& dir : f.runs) {
    const auto s = load_stored_run(dir, f.data);
    const auto rep = nnpi::assemble_report(s.ds, s.run);
    const std::string prefix = nnpi::to_string(rep.scenario) + "_" + nnpi::to_string(rep.method);
    std::ostringstream q, l, gr;
    nnpi::write_quality_table(q, rep);
    nnpi::write_level_table(l, rep);
    nnpi::write_group_table(gr, rep);
    nnpi::write_text_file((out / (prefix + "_quality.csv")).string(), q.str());
    nnpi::write_text_file((out / (prefix + "_levels.csv")).string(), l.str());
    nnpi::write_text_file((out / (prefix + "_groups.csv")).string(), gr.str());
    for (const auto& r : rep.results)
      curve << nnpi::to_string(rep.scenario) << ',' << nnpi::to_string(rep.method) << ','
            << nnpi::format_double(r.confidence) << ',' << nnpi::format_double(r.quality.picp) << ','
           << nnpi::format_double(r.quality.mpiw) << ',' << nnpi::format_double(r.quality.nmpiw) << '\n';
    if (s.run.clusters) {
      std::ostringstream series, summary;
      nnpi::write_cluster_distances(series, summary, *s.run.clusters);
      nnpi::write_text_file((out / (prefix + "_distances.csv")).string(), series.str());
      nnpi::write_text_file((out / (prefix + "_distance_summary.csv")).string(), summary.str());
    }
  }
  if (!f.runs.empty()) nnpi::write_text_file((out / "picp_mpiw.csv").string(), curve.str());

  if (!f.sweep_s.empty()) {
    const Resolved r = resolve(g, rf);
    const auto ds = nnpi::load_dataset(r.data);
    std::vector<double> lambdas = f.sweep_lambda;
    if (lambdas.empty()) lambdas = {r.rc.settings.loss_s.lambda};
    const auto rows = nnpi::softening_sweep(ds, f.sweep_s, lambdas, r.rc.settings, f.sweep_confidence);
    std::ostringstream sw;
    nnpi::write_sweep(sw, rows);
    nnpi::write_text_file((out / "softening_sweep.csv").string(), sw.str());
    Resolved rr = r;
    rr.extra["sweep_s"] = f.sweep_s;
    rr.extra["sweep_lambda"] = lambdas;
    rr.extra["sweep_confidence"] = f.sweep_confidence;
    nnpi::write_json_file((out / "sweep_config.json").string(), resolved_json("report", rr));
  }
  std::cout << "wrote report files to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-network prediction intervals: synth | train | eval | tune | report"};
  app.require_subcommand(1);
  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "Base random seed");
  app.add_option("--out", g.out, "Output directory");
  g.jobs_opt = app.add_option("--jobs", g.jobs, "Maximum worker threads")
                   ->check(CLI::Range(std::size_t{1}, std::size_t{4096}));
  app.add_option("--config", g.config, "JSON config file; flags override its values");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset")->fallthrough();
  SynthFlags sf;
  sf.n_opt = synth->add_option("--n", sf.n, "Rows");
  sf.d_opt = synth->add_option("--d", sf.d, "Features");
  sf.subjects_opt = synth->add_option("--subjects", sf.subjects, "Subjects");
  sf.clusters_opt = synth->add_option("--clusters", sf.clusters, "Latent subject clusters")
                        ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  sf.noise_opt = synth->add_option("--noise", sf.noise, "heteroscedastic | homoscedastic");
  sf.sigma0_opt = synth->add_option("--sigma0", sf.sigma0, "Noise intercept");
  sf.sigma1_opt = synth->add_option("--sigma1", sf.sigma1, "Noise slope in feature 0");
  sf.jitter_opt = synth->add_option("--jitter", sf.jitter, "Cluster-tag jitter half-width");
  synth->add_option("--file", sf.file, "Output file name inside --out");

  auto* train = app.add_subcommand("train", "Train a scenario and write checkpoints and a report")->fallthrough();
  RunFlags train_flags;
  train_flags.add(train);

  auto* eval = app.add_subcommand("eval", "Re-evaluate a trained run on its test folds")->fallthrough();
  std::string eval_run, eval_data;
  eval->add_option("--run", eval_run, "Directory written by train")->required();
  eval->add_option("--data", eval_data, "Dataset (defaults to the run's)");

  auto* tune = app.add_subcommand("tune", "Random hyperparameter search")->fallthrough();
  RunFlags tune_flags;
  tune_flags.add(tune);
  std::size_t budget = 10;
  auto* budget_opt = tune->add_option("--budget", budget, "Number of trials");

  auto* report = app.add_subcommand("report", "Export report tables and figure data series")->fallthrough();
  ReportFlags rf;
  RunFlags report_flags;
  report->add_option("--run", rf.runs, "Directories written by train");
  report_flags.add(report);
  report->add_option("--sweep-s", rf.sweep_s, "Softening factors for the sweep series");
  report->add_option("--sweep-lambda", rf.sweep_lambda, "Coverage weights for the sweep series");
  report->add_option("--sweep-confidence", rf.sweep_confidence, "Target confidence for the sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g, sf);
    if (*train) return cmd_train(g, train_flags);
    if (*eval) return cmd_eval(g, eval_run, eval_data);
    if (*tune) return cmd_tune(g, tune_flags, budget, budget_opt);
    rf.data = report_flags.data;
    return cmd_report(g, rf, report_flags);
  } catch (const nnpi::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const nnpi::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
