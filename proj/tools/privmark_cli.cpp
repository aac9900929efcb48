// Command-line front end: experiment configuration, execution, and CSV/JSON
// emission for bound curves, equilibrium reports, and simulations.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "privmark/privmark.hpp"
#include "privmark/serialization.hpp"

namespace {

using privmark::json;
constexpr const char* kVersion = "1.0.0";

struct OutputTarget {
  std::ofstream file;
  std::ostream* stream = &std::cout;

  explicit OutputTarget(const std::string& path) {
    if (!path.empty()) {
      file.open(path);
      if (!file) throw std::invalid_argument("cannot open output file: " + path);
      stream = &file;
    }
    stream->precision(17);  // doubles survive the round trip
  }
};

void write_csv_header(std::ostream& os, const privmark::ExperimentSpec& spec) {
  os << "# privmark " << spec.command << " " << kVersion << "\n";
  os << "# spec: " << json(spec).dump() << "\n";
}

void write_json_result(std::ostream& os, const privmark::ExperimentSpec& spec,
                       const json& result) {
  const json out{{"meta",
                  {{"tool", "privmark"},
                   {"version", kVersion},
                   {"command", spec.command},
                   {"params", spec.params},
                   {"format", spec.format}}},
                 {"result", result}};
  os << out.dump(2) << "\n";
}

// Flags override config-file values; anything else falls back to defaults.
class ParamMerger {
 public:
  ParamMerger(CLI::App* cmd, json config) : cmd_(cmd), merged_(std::move(config)) {}

  template <typename T>
  T resolve(const std::string& flag, const std::string& key, const T& cli_value,
            const T& fallback) {
    if (cmd_->count(flag) > 0) {
      merged_[key] = cli_value;
      return cli_value;
    }
    if (merged_.contains(key)) return merged_[key].get<T>();
    merged_[key] = fallback;
    return fallback;
  }

  const json& merged() const { return merged_; }
  json& merged() { return merged_; }

 private:
  CLI::App* cmd_;
  json merged_;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json j;
  in >> j;
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  return j;
}

privmark::CostProfile parse_costs(const json& j) {
  privmark::CostProfile costs;
  if (j.is_array())
    for (const auto& item : j) costs.push_back(item.get<privmark::CostFn>());
  else
    costs.push_back(j.get<privmark::CostFn>());
  return costs;
}

privmark::StrategyProfile parse_profile(const json& j, int population) {
  if (j.is_object() && j.contains("all_eps"))
    return privmark::StrategyProfile(
        static_cast<std::size_t>(population),
        privmark::eps_strategy(j.at("all_eps").get<double>()));
  auto profile = j.get<privmark::StrategyProfile>();
  if (profile.size() != static_cast<std::size_t>(population))
    throw std::invalid_argument("profile length must equal the population");
  return profile;
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1)
    throw std::invalid_argument("grid needs 0 < lo <= hi and count >= 1");
  if (count > 1 && hi == lo)
    throw std::invalid_argument("grid with several points needs lo < hi");
  std::vector<double> out;
  if (count == 1) {
    out.push_back(lo);
    return out;
  }
  for (int k = 0; k < count; ++k)
    out.push_back(std::exp(std::log(lo) +
                           (std::log(hi) - std::log(lo)) * k / (count - 1)));
  return out;
}

// ---------------------------------------------------------------------------

void check_format(const std::string& format, bool curve_command) {
  if (curve_command) {
    if (format != "csv" && format != "json")
      throw std::invalid_argument("format must be csv or json");
  } else if (format != "json") {
    throw std::invalid_argument("this command only emits json");
  }
}

int cmd_bounds(CLI::App* cmd, const std::string& config_path,
               const std::string& out_path, const std::string& format,
               double theta, double prior, const std::string& cost_kind,
               double cost_scale, std::vector<double> eps_values,
               std::vector<int> populations) {
  ParamMerger pm(cmd, load_config(config_path));
  check_format(format, true);
  theta = pm.resolve("--theta", "theta", theta, 0.8);
  prior = pm.resolve("--prior-one", "prior_one", prior, 0.7);
  const std::string kind =
      pm.resolve<std::string>("--cost", "cost_kind", cost_kind, "linear");
  cost_scale = pm.resolve("--cost-scale", "cost_scale", cost_scale, 1.0);
  eps_values = pm.resolve("--eps", "eps", eps_values,
                          std::vector<double>{0.1, 0.5, 1.0, 2.0, 5.0});
  populations = pm.resolve("--populations", "populations", populations,
                           std::vector<int>{2, 10, 100});

  const privmark::CostFn g = kind == "quadratic"
                                 ? privmark::CostFn::quadratic(cost_scale)
                                 : privmark::CostFn::linear(cost_scale);
  privmark::ExperimentSpec spec{"bounds", pm.merged(), out_path, format};
  OutputTarget out(out_path);
  json rows = json::array();
  if (format == "csv") {
    write_csv_header(*out.stream, spec);
    *out.stream << "eps,N,v_lb,v_ub,gap,d\n";
  }
  for (double eps : eps_values) {
    const privmark::ModelParams m(prior, theta, 2);
    const double lb = privmark::v_lb(eps, m, g);
    for (int n : populations) {
      const auto in = privmark::v_ub_internals(eps, n, m, g);
      if (format == "csv")
        *out.stream << eps << "," << n << "," << lb << ","
                    << in.expected_payment << "," << in.expected_payment - lb
                    << "," << in.d << "\n";
      else
        rows.push_back(json{{"eps", eps},
                            {"N", n},
                            {"v_lb", lb},
                            {"v_ub", in.expected_payment},
                            {"gap", in.expected_payment - lb},
                            {"d", in.d}});
    }
  }
  if (format == "json") write_json_result(*out.stream, spec, rows);
  return 0;
}

int cmd_payment_accuracy(CLI::App* cmd, const std::string& config_path,
                         const std::string& out_path,
                         const std::string& format, double theta, double prior,
                         const std::string& cost_kind, double cost_scale,
                         double tau_min, double tau_max, int tau_count) {
  ParamMerger pm(cmd, load_config(config_path));
  check_format(format, true);
  theta = pm.resolve("--theta", "theta", theta, 0.8);
  prior = pm.resolve("--prior-one", "prior_one", prior, 0.7);
  const std::string kind =
      pm.resolve<std::string>("--cost", "cost_kind", cost_kind, "linear");
  cost_scale = pm.resolve("--cost-scale", "cost_scale", cost_scale, 1.0);
  tau_min = pm.resolve("--tau-min", "tau_min", tau_min, 0.001);
  tau_max = pm.resolve("--tau-max", "tau_max", tau_max, 0.4);
  tau_count = pm.resolve("--tau-count", "tau_count", tau_count, 50);

  const privmark::CostFn g = kind == "quadratic"
                                 ? privmark::CostFn::quadratic(cost_scale)
                                 : privmark::CostFn::linear(cost_scale);
  const privmark::ModelParams m(prior, theta, 2);
  privmark::ExperimentSpec spec{"payment-accuracy", pm.merged(), out_path,
                                format};
  OutputTarget out(out_path);
  json rows = json::array();
  if (format == "csv") {
    write_csv_header(*out.stream, spec);
    // eps_tilde is the smallest grid-level maximizer of D/V_LB (log grid
    // plus local refinement).
    *out.stream
        << "tau,eps_tilde,n_tilde,lower,upper,designed_total,chernoff\n";
  }
  std::vector<double> taus = log_spaced(tau_min, tau_max, tau_count);
  std::sort(taus.rbegin(), taus.rend());
  for (double tau : taus) {
    const auto b = privmark::payment_accuracy_bounds(tau, m, g);
    if (format == "csv")
      *out.stream << tau << "," << b.eps_tilde << "," << b.n_tilde << ","
                  << b.lower << "," << b.upper << "," << b.designed_total
                  << "," << b.chernoff << "\n";
    else {
      json row = b;
      row["tau"] = tau;
      rows.push_back(row);
    }
  }
  if (format == "json") write_json_result(*out.stream, spec, rows);
  return 0;
}

json mechanism_audit(const privmark::Mechanism& mech) {
  if (const auto* g = dynamic_cast<const privmark::GenieMechanism*>(&mech))
    return privmark::mechanism_audit_json(*g);
  if (const auto* p = dynamic_cast<const privmark::PeerMechanism*>(&mech))
    return privmark::mechanism_audit_json(*p);
  return json{{"type", "tabular"}};
}

int cmd_equilibrium(CLI::App* cmd, const std::string& config_path,
                    const std::string& out_path, const std::string& format,
                    double tolerance, bool best_response_only,
                    int individual) {
  ParamMerger pm(cmd, load_config(config_path));
  check_format(format, false);
  tolerance = pm.resolve("--tolerance", "tolerance", tolerance, 1e-6);
  json& params = pm.merged();
  if (!params.contains("model"))
    throw std::invalid_argument("equilibrium needs a model block in --config");
  const auto m = params.at("model").get<privmark::ModelParams>();
  const privmark::CostProfile costs =
      params.contains("cost") ? parse_costs(params.at("cost"))
                              : privmark::CostProfile{privmark::CostFn::linear(1.0)};
  if (!params.contains("mechanism"))
    throw std::invalid_argument("equilibrium needs a mechanism block");
  const auto mech = privmark::build_mechanism(params.at("mechanism"), m, costs);
  json profile_spec = params.value("profile", json::object());
  if (profile_spec.is_object() && !profile_spec.contains("all_eps")) {
    const double eps = params.at("mechanism").value("eps", 1.0);
    profile_spec = json{{"all_eps", eps}};
  }
  params["profile"] = profile_spec;
  const privmark::StrategyProfile profile =
      parse_profile(profile_spec, m.population);

  const std::string command = best_response_only ? "best-response" : "equilibrium";
  privmark::ExperimentSpec spec{command, params, out_path, "json"};
  OutputTarget out(out_path);
  json result;
  if (best_response_only) {
    const auto br = privmark::best_response(
        *mech, profile, static_cast<std::size_t>(individual), m,
        privmark::cost_for(costs, static_cast<std::size_t>(individual)));
    result = br;
  } else {
    result = privmark::verify_nash(*mech, profile, m, costs, tolerance);
  }
  result["mechanism"] = mechanism_audit(*mech);
  write_json_result(*out.stream, spec, result);
  return 0;
}

int cmd_simulate(CLI::App* cmd, const std::string& config_path,
                 const std::string& out_path, const std::string& format,
                 std::uint64_t trials, std::uint64_t seed, int threads,
                 const std::string& dump_path) {
  ParamMerger pm(cmd, load_config(config_path));
  check_format(format, false);
  json& params = pm.merged();
  if (!params.contains("model"))
    throw std::invalid_argument("simulate needs a model block in --config");
  privmark::SimConfig cfg;
  cfg.model = params.at("model").get<privmark::ModelParams>();
  cfg.trials = pm.resolve<std::uint64_t>("--trials", "trials", trials, 100000);
  cfg.seed = pm.resolve<std::uint64_t>("--seed", "seed", seed, 1);
  cfg.threads = pm.resolve("--threads", "threads", threads, 1);
  const privmark::CostProfile costs =
      params.contains("cost") ? parse_costs(params.at("cost"))
                              : privmark::CostProfile{privmark::CostFn::linear(1.0)};
  if (!params.contains("mechanism"))
    throw std::invalid_argument("simulate needs a mechanism block");
  const auto mech =
      privmark::build_mechanism(params.at("mechanism"), cfg.model, costs);
  json profile_spec = params.value("profile", json::object());
  if (profile_spec.is_object() && !profile_spec.contains("all_eps"))
    profile_spec = json{{"all_eps", params.at("mechanism").value("eps", 1.0)}};
  params["profile"] = profile_spec;
  cfg.profile = parse_profile(profile_spec, cfg.model.population);

  privmark::ExperimentSpec spec{"simulate", params, out_path, "json"};
  const privmark::SimResult res = privmark::run_simulation(cfg, *mech);
  OutputTarget out(out_path);
  json result = res;
  result["mechanism"] = mechanism_audit(*mech);
  write_json_result(*out.stream, spec, result);

  if (!dump_path.empty()) {
    std::ofstream dump(dump_path);
    if (!dump)
      throw std::invalid_argument("cannot open trial dump file: " + dump_path);
    dump << "trial,state,reports,decision";
    for (int i = 0; i < cfg.model.population; ++i) dump << ",payment_" << i;
    dump << "\n";
    const privmark::MapDecider decider(cfg.model, cfg.profile);
    privmark::TrialOutcome outcome;
    for (std::uint64_t t = 0; t < cfg.trials; ++t) {
      privmark::simulate_trial(cfg.model, cfg.profile, *mech, decider, cfg.seed,
                               t, outcome);
      dump << t << "," << outcome.state << ","
           << privmark::report_vector_key(outcome.reports) << ","
           << outcome.decision;
      for (double pay : outcome.payments) dump << "," << pay;
      dump << "\n";
    }
  }
  return 0;
}

int cmd_lemma1_audit(CLI::App* cmd, const std::string& config_path,
                     const std::string& out_path, const std::string& format,
                     int seeds, int population, int resolution,
                     std::uint64_t seed, double theta_in, double prior_in) {
  ParamMerger pm(cmd, load_config(config_path));
  check_format(format, false);
  seeds = pm.resolve("--seeds", "seeds", seeds, 100);
  population = pm.resolve("--population", "population", population, 2);
  resolution = pm.resolve("--resolution", "resolution", resolution, 41);
  seed = pm.resolve<std::uint64_t>("--seed", "seed", seed, 20240501);
  const double theta = pm.resolve("--theta", "theta", theta_in, 0.8);
  const double prior = pm.resolve("--prior-one", "prior_one", prior_in, 0.6);
  if (population < 2 || population > 3)
    throw std::invalid_argument("audit population must be 2 or 3");

  const privmark::ModelParams m(prior, theta, population);
  const privmark::CostFn g = privmark::CostFn::linear(1.0);
  const double spacing = 1.0 / (resolution - 1);
  privmark::SplitMix64 rng(seed);

  json cases = json::array();
  double max_distance = 0.0;
  for (int k = 0; k < seeds; ++k) {
    const std::uint64_t mech_seed = rng.next();
    const auto mech = privmark::random_tabular_mechanism(
        static_cast<std::size_t>(population), mech_seed, 2.0);
    privmark::StrategyProfile profile;
    for (int j = 0; j < population; ++j) {
      privmark::Strategy s;
      s.p1 = rng.uniform();
      s.q1 = rng.uniform() * (1.0 - s.p1);
      s.p0 = rng.uniform();
      s.q0 = rng.uniform() * (1.0 - s.p0);
      profile.push_back(s);
    }
    const auto brute =
        privmark::brute_force_best_response(mech, profile, 0, m, g, resolution);
    const double dist = privmark::equilibrium_manifold_distance(brute.strategy);
    max_distance = std::max(max_distance, dist);
    cases.push_back(json{{"seed", mech_seed},
                         {"distance", dist},
                         {"utility", brute.utility},
                         {"classification", brute.classification},
                         {"strategy", brute.strategy}});
  }
  json result{{"cases", cases},
              {"max_distance", max_distance},
              {"grid_spacing", spacing},
              {"within_one_grid_step", max_distance <= spacing + 1e-12}};
  privmark::ExperimentSpec spec{"lemma1-audit", pm.merged(), out_path, "json"};
  OutputTarget out(out_path);
  write_json_result(*out.stream, spec, result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "privmark: payment mechanisms and privacy-value bounds for strategic "
      "data markets"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path, out_path, dump_path;
  double theta = 0.8, prior = 0.7, cost_scale = 1.0, tolerance = 1e-6;
  std::string cost_kind = "linear";
  std::vector<double> eps_values;
  std::vector<int> populations;
  double tau_min = 0.001, tau_max = 0.4;
  int tau_count = 50;
  std::uint64_t trials = 100000, seed = 1;
  int threads = 1, individual = 0, seeds = 100, resolution = 41,
      audit_population = 2;
  std::string format;

  const auto add_common = [&](CLI::App* cmd, const char* default_format) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_path, "output path (default: stdout)");
    cmd->add_option("--format", format, "output format: csv | json")
        ->default_str(default_format);
  };
  const auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--theta", theta, "signal quality in (0.5, 1)")
        ->capture_default_str();
    cmd->add_option("--prior-one", prior, "prior probability of state 1")
        ->capture_default_str();
    cmd->add_option("--cost", cost_kind, "cost kind: linear | quadratic")
        ->capture_default_str();
    cmd->add_option("--cost-scale", cost_scale, "cost scale factor")
        ->capture_default_str();
  };

  CLI::App* bounds = app.add_subcommand(
      "bounds", "lower/upper bounds on the value of privacy (CSV)");
  add_common(bounds, "csv");
  add_model(bounds);
  bounds->add_option("--eps", eps_values,
                     "privacy levels (default 0.1 0.5 1 2 5)");
  bounds->add_option("--populations", populations,
                     "population sizes (default 2 10 100)");

  CLI::App* pa = app.add_subcommand(
      "payment-accuracy", "total payment bracket vs accuracy target (CSV)");
  add_common(pa, "csv");
  add_model(pa);
  pa->add_option("--tau-min", tau_min, "smallest accuracy target")
      ->capture_default_str();
  pa->add_option("--tau-max", tau_max, "largest accuracy target")
      ->capture_default_str();
  pa->add_option("--tau-count", tau_count, "log-spaced grid size")
      ->capture_default_str();

  CLI::App* eq = app.add_subcommand(
      "equilibrium", "verify a strategy profile in a mechanism (JSON)");
  add_common(eq, "json");
  eq->add_option("--tolerance", tolerance, "deviation-gain tolerance")
      ->capture_default_str();

  CLI::App* br = app.add_subcommand(
      "best-response", "best response of one individual (JSON)");
  add_common(br, "json");
  br->add_option("--individual", individual, "individual index")
      ->capture_default_str();
  br->add_option("--tolerance", tolerance, "tie tolerance")
      ->capture_default_str();

  CLI::App* sim =
      app.add_subcommand("simulate", "seeded Monte Carlo of the game (JSON)");
  add_common(sim, "json");
  sim->add_option("--trials", trials, "number of trials")->capture_default_str();
  sim->add_option("--seed", seed, "RNG seed")->capture_default_str();
  sim->add_option("--threads", threads, "worker threads")->capture_default_str();
  sim->add_option("--dump-trials", dump_path, "write per-trial CSV to path");

  CLI::App* audit = app.add_subcommand(
      "lemma1-audit", "best-response structure audit against the grid oracle");
  add_common(audit, "json");
  audit->add_option("--seeds", seeds, "number of random mechanisms")
      ->capture_default_str();
  audit->add_option("--population", audit_population, "population (2 or 3)")
      ->capture_default_str();
  audit->add_option("--resolution", resolution, "grid resolution per axis")
      ->capture_default_str();
  audit->add_option("--seed", seed, "RNG seed")->capture_default_str();
  audit->add_option("--theta", theta, "signal quality")->capture_default_str();
  audit->add_option("--prior-one", prior, "prior of state 1")
      ->capture_default_str();

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

  try {
    const auto fmt = [&](const char* fallback) {
      return format.empty() ? std::string(fallback) : format;
    };
    if (bounds->parsed())
      return cmd_bounds(bounds, config_path, out_path, fmt("csv"), theta,
                        prior, cost_kind, cost_scale, eps_values, populations);
    if (pa->parsed())
      return cmd_payment_accuracy(pa, config_path, out_path, fmt("csv"), theta,
                                  prior, cost_kind, cost_scale, tau_min,
                                  tau_max, tau_count);
    if (eq->parsed())
      return cmd_equilibrium(eq, config_path, out_path, fmt("json"), tolerance,
                             false, 0);
    if (br->parsed())
      return cmd_equilibrium(br, config_path, out_path, fmt("json"), tolerance,
                             true, individual);
    if (sim->parsed())
      return cmd_simulate(sim, config_path, out_path, fmt("json"), trials,
                          seed, threads, dump_path);
    if (audit->parsed())
      return cmd_lemma1_audit(audit, config_path, out_path, fmt("json"), seeds,
                              audit_population, resolution, seed, theta,
                              prior);
  } catch (const privmark::internal_error& err) {
    std::cerr << "internal assertion failed: " << err.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& err) {
    std::cerr << "invalid parameters: " << err.what() << "\n";
    return 2;
  } catch (const std::domain_error& err) {
    std::cerr << "invalid parameters: " << err.what() << "\n";
    return 2;
  } catch (const json::exception& err) {
    std::cerr << "invalid configuration: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
