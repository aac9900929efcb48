#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "privmark/bounds.hpp"
#include "privmark/equilibrium.hpp"
#include "privmark/mechanisms.hpp"
#include "privmark/model.hpp"
#include "privmark/simulate.hpp"

namespace privmark {

using nlohmann::json;

inline void to_json(json& j, const ModelParams& m) {
  j = json{{"prior_one", m.prior_one},
           {"quality", m.quality},
           {"population", m.population}};
}

inline void from_json(const json& j, ModelParams& m) {
  j.at("prior_one").get_to(m.prior_one);
  j.at("quality").get_to(m.quality);
  j.at("population").get_to(m.population);
  m.validate();
}

inline void to_json(json& j, const Strategy& s) {
  j = json{{"p1", s.p1}, {"q1", s.q1}, {"p0", s.p0}, {"q0", s.q0}};
}

inline void from_json(const json& j, Strategy& s) {
  j.at("p1").get_to(s.p1);
  j.at("q1").get_to(s.q1);
  j.at("p0").get_to(s.p0);
  j.at("q0").get_to(s.q0);
  s.validate();
}

inline void to_json(json& j, const CostFn& g) {
  switch (g.kind()) {
    case CostFn::Kind::linear:
      j = json{{"kind", "linear"}, {"c", g.scale()}};
      break;
    case CostFn::Kind::quadratic:
      j = json{{"kind", "quadratic"}, {"c", g.scale()}};
      break;
    default:
      j = json{{"kind", "table"}, {"knots", g.knots()}};
  }
}

inline void from_json(const json& j, CostFn& g) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear")
    g = CostFn::linear(j.at("c").get<double>());
  else if (kind == "quadratic")
    g = CostFn::quadratic(j.at("c").get<double>());
  else if (kind == "table")
    g = CostFn::from_table(
        j.at("knots").get<std::vector<std::array<double, 2>>>());
  else
    throw std::invalid_argument("unknown cost kind: " + kind);
}

inline std::string report_vector_key(std::span<const Report> reports) {
  std::string key(reports.size(), '0');
  for (std::size_t j = 0; j < reports.size(); ++j)
    key[j] = report_char(reports[j]);
  return key;
}

/// Tabular mechanisms serialize as { "<reports>": [payments...] } with one
/// key per report vector, encoded over {0, 1, n}, individual 0 first.
inline json tabular_to_json(const TabularMechanism& mech) {
  const std::size_t n = mech.population();
  std::size_t vectors = 1;
  for (std::size_t j = 0; j < n; ++j) vectors *= 3;
  json payments = json::object();
  std::vector<Report> vec(n);
  for (std::size_t v = 0; v < vectors; ++v) {
    std::size_t rest = v;
    for (std::size_t j = 0; j < n; ++j) {
      vec[j] = static_cast<Report>(rest % 3);
      rest /= 3;
    }
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) row[i] = mech.raw()[v * n + i];
    payments[report_vector_key(vec)] = row;
  }
  return json{{"population", n}, {"payments", payments}};
}

inline TabularMechanism tabular_from_json(const json& j) {
  const std::size_t n = j.at("population").get<std::size_t>();
  std::size_t vectors = 1;
  for (std::size_t j2 = 0; j2 < n; ++j2) vectors *= 3;
  std::vector<double> flat(vectors * n, 0.0);
  const json& payments = j.at("payments");
  if (payments.size() != vectors)
    throw std::invalid_argument("payment table must cover every report vector");
  for (const auto& [key, row] : payments.items()) {
    if (key.size() != n)
      throw std::invalid_argument("report key has the wrong length");
    std::vector<Report> vec(n);
    for (std::size_t j2 = 0; j2 < n; ++j2) vec[j2] = report_from_char(key[j2]);
    const std::size_t idx = TabularMechanism::vector_index(vec);
    const auto values = row.get<std::vector<double>>();
    if (values.size() != n)
      throw std::invalid_argument("payment row has the wrong length");
    for (std::size_t i = 0; i < n; ++i) flat[idx * n + i] = values[i];
  }
  return TabularMechanism(n, std::move(flat));
}

inline json mechanism_audit_json(const GenieMechanism& g) {
  return json{{"type", "genie"},
              {"eps", g.eps()},
              {"scale", g.scale()},
              {"a_hat",
               {{"11", g.a_hat(1, 1)},
                {"00", g.a_hat(0, 0)},
                {"10", g.a_hat(1, 0)},
                {"01", g.a_hat(0, 1)}}}};
}

inline json mechanism_audit_json(const PeerMechanism& p) {
  const auto& c = p.coefficients(p.model().population);
  return json{{"type", "peer"},
              {"eps", p.eps()},
              {"alpha", p.alpha()},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"d", p.decay_rate()},
              {"a", {{"11", c.a11}, {"00", c.a00}, {"10", 0.0}, {"01", 0.0}}}};
}

/// Builds a mechanism from its JSON descriptor. Knows "genie", "peer",
/// "tabular" and "zero".
inline std::unique_ptr<Mechanism> build_mechanism(const json& spec,
                                                  const ModelParams& m,
                                                  const CostProfile& costs) {
  const std::string type = spec.at("type").get<std::string>();
  if (type == "genie")
    return std::make_unique<GenieMechanism>(spec.at("eps").get<double>(), m,
                                            cost_for(costs, 0));
  if (type == "peer")
    return std::make_unique<PeerMechanism>(spec.at("eps").get<double>(), m,
                                           costs);
  if (type == "tabular")
    return std::make_unique<TabularMechanism>(tabular_from_json(spec));
  if (type == "zero") {
    std::size_t vectors = 1;
    for (int j = 0; j < m.population; ++j) vectors *= 3;
    return std::make_unique<TabularMechanism>(
        static_cast<std::size_t>(m.population),
        std::vector<double>(vectors * static_cast<std::size_t>(m.population),
                            0.0));
  }
  throw std::invalid_argument("unknown mechanism type: " + type);
}

inline void to_json(json& j, const StrategyClass& c) { j = to_string(c); }

inline void to_json(json& j, const IndividualEquilibriumResult& r) {
  j = json{{"best_strategy", r.best_strategy},
           {"profile_utility", r.profile_utility},
           {"best_utility", r.best_utility},
           {"deviation_gain", r.deviation_gain},
           {"classification", r.classification},
           {"tied", r.tied}};
}

inline void to_json(json& j, const EquilibriumReport& r) {
  j = json{{"individuals", r.individuals},
           {"tolerance", r.tolerance},
           {"max_gain", r.max_gain},
           {"is_nash", r.is_nash}};
}

inline void to_json(json& j, const BestResponse& b) {
  j = json{{"strategy", b.strategy},
           {"utility", b.utility},
           {"classification", b.classification},
           {"tied", b.tied},
           {"xi", b.xi}};
}

inline void to_json(json& j, const SimResult& r) {
  j = json{{"mean_payment", r.mean_payment},
           {"payment_std_error", r.payment_std_error},
           {"error_rate", r.error_rate},
           {"error_std_error", r.error_std_error},
           {"trials", r.trials},
           {"seed", r.seed}};
  if (r.error_bound)
    j["error_bound"] = *r.error_bound;
  else
    j["error_bound"] = nullptr;
}

inline void to_json(json& j, const PaymentAccuracyBounds& b) {
  j = json{{"lower", b.lower},
           {"upper", b.upper},
           {"designed_total", b.designed_total},
           {"n_tilde", b.n_tilde},
           {"eps_tilde", b.eps_tilde},
           {"chernoff", b.chernoff},
           {"residual_vs_asymptote", b.residual_vs_asymptote},
           {"design_population", b.design_population}};
}

/// One CLI experiment: command name, its parameter block, output routing.
struct ExperimentSpec {
  std::string command;
  json params = json::object();
  std::string output;  // empty string means stdout
  std::string format = "csv";

  bool operator==(const ExperimentSpec&) const = default;
};

inline void to_json(json& j, const ExperimentSpec& s) {
  j = json{{"command", s.command},
           {"params", s.params},
           {"output", s.output},
           {"format", s.format}};
}

inline void from_json(const json& j, ExperimentSpec& s) {
  j.at("command").get_to(s.command);
  s.params = j.value("params", json::object());
  s.output = j.value("output", std::string());
  s.format = j.value("format", std::string("csv"));
}

}  // namespace privmark
