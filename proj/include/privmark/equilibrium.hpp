#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "privmark/mechanisms.hpp"
#include "privmark/model.hpp"
#include "privmark/numeric.hpp"

namespace privmark {

/// Weights of the linear part of an individual's expected payment:
/// payment = k1 p1 + k0 p0 + l1 q1 + l0 q0 for any strategy (p1, q1, p0, q0).
struct UtilityCoefficients {
  double k1 = 0.0;
  double k0 = 0.0;
  double l1 = 0.0;
  double l0 = 0.0;

  double kbar1() const { return k1 - l1; }
  double kbar0() const { return k0 - l0; }
  double kbar() const { return l1 + l0; }

  double payoff(const Strategy& s) const {
    return k1 * s.p1 + k0 * s.p0 + l1 * s.q1 + l0 * s.q0;
  }
};

inline UtilityCoefficients utility_coefficients(const Mechanism& mech,
                                                const StrategyProfile& profile,
                                                std::size_t i,
                                                const ModelParams& m) {
  const PayoffTable t = mech.conditional_payment_table(i, profile, m);
  UtilityCoefficients c;
  for (int w : {0, 1}) {
    c.k1 += signal_state_joint(m, 1, w) * t(Report::one, w);
    c.k0 += signal_state_joint(m, 0, w) * t(Report::one, w);
    c.l1 += signal_state_joint(m, 1, w) * t(Report::zero, w);
    c.l0 += signal_state_joint(m, 0, w) * t(Report::zero, w);
  }
  return c;
}

/// Expected payment minus privacy cost for a candidate strategy of i.
inline double utility_from(const UtilityCoefficients& c, const Strategy& s,
                           const CostFn& cost) {
  const double level = privacy_level(s);
  const double g = cost(level);
  if (std::isinf(g)) return -std::numeric_limits<double>::infinity();
  return c.payoff(s) - g;
}

inline double utility(const Mechanism& mech, const StrategyProfile& profile,
                      std::size_t i, const Strategy& s_i, const ModelParams& m,
                      const CostFn& cost) {
  return utility_from(utility_coefficients(mech, profile, i, m), s_i, cost);
}

enum class StrategyClass { symmetric, non_informative, nonparticipation };

inline const char* to_string(StrategyClass c) {
  switch (c) {
    case StrategyClass::symmetric: return "symmetric";
    case StrategyClass::non_informative: return "non-informative";
    default: return "nonparticipation";
  }
}

/// Sup-norm distance to the symmetric randomized responses
/// {(a, 1-a, 1-a, a) : a in [0, 1]}.
inline double symmetric_distance(const Strategy& s) {
  const double c[4] = {s.p1, s.q0, 1.0 - s.q1, 1.0 - s.p0};
  double lo = c[0], hi = c[0];
  for (double v : c) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return 0.5 * (hi - lo);
}

/// Sup-norm distance to the non-informative strategies {(p, q, p, q)}.
inline double non_informative_distance(const Strategy& s) {
  return 0.5 * std::max(std::fabs(s.p1 - s.p0), std::fabs(s.q1 - s.q0));
}

inline double nonparticipation_distance(const Strategy& s) {
  return std::max(std::max(s.p1, s.q1), std::max(s.p0, s.q0));
}

/// Distance to the nearest equilibrium-strategy family.
inline double equilibrium_manifold_distance(const Strategy& s) {
  return std::min(symmetric_distance(s), non_informative_distance(s));
}

inline StrategyClass classify_nearest(const Strategy& s) {
  if (s.is_opt_out()) return StrategyClass::nonparticipation;
  return non_informative_distance(s) <= symmetric_distance(s)
             ? StrategyClass::non_informative
             : StrategyClass::symmetric;
}

struct BestResponse {
  Strategy strategy;
  double utility = 0.0;
  StrategyClass classification = StrategyClass::non_informative;
  bool tied = false;  // symmetric and non-informative optima coincide
  double xi = 0.0;    // response parameter when classification is symmetric
};

struct BestResponseOptions {
  // Largest response parameter the search considers. The payoff term is
  // within 3e-16 of its limit here, and beyond ~36.7 the randomized
  // response itself is no longer representable in doubles (the flip
  // probability rounds to zero, turning the strategy into disclosure).
  double xi_max = 36.0;
  double xtol = 1e-10;    // golden-section bracket tolerance
  double tie_tol = 1e-9;  // utility tolerance for the tie rule
};

/// Best response given precomputed coefficients. Searches the closure of the
/// equilibrium families: symmetric randomized responses (one concave 1-D
/// problem per sign), non-informative corners, and staying out.
inline BestResponse best_response_from(const UtilityCoefficients& c,
                                       const CostFn& cost,
                                       const BestResponseOptions& opts = {}) {
  const double kbar1 = c.kbar1(), kbar0 = c.kbar0(), kbar = c.kbar();

  const auto f_pos = [&](double xi) {
    const double sig = 1.0 / (1.0 + std::exp(-xi));
    return kbar1 * sig + kbar0 * (1.0 - sig) + kbar - cost(xi);
  };
  const auto f_neg = [&](double eta) {
    const double sig = 1.0 / (1.0 + std::exp(-eta));
    return kbar1 * (1.0 - sig) + kbar0 * sig + kbar - cost(eta);
  };
  const auto pos = detail::golden_section_max(f_pos, 0.0, opts.xi_max, opts.xtol);
  const auto neg = detail::golden_section_max(f_neg, 0.0, opts.xi_max, opts.xtol);
  const double xi_star = pos.value >= neg.value ? pos.x : -neg.x;
  const double u_sym = std::max(pos.value, neg.value);

  const double u_one = c.k1 + c.k0;
  const double u_zero = c.l1 + c.l0;

  BestResponse br;
  if (u_sym > std::max(u_one, u_zero) + opts.tie_tol) {
    br.strategy = eps_strategy(xi_star);
    br.utility = u_sym;
    br.classification = StrategyClass::symmetric;
    br.xi = xi_star;
    return br;
  }
  br.tied = std::fabs(u_sym - std::max(u_one, u_zero)) <= opts.tie_tol;
  if (u_one >= u_zero) {
    br.strategy = Strategy(1.0, 0.0, 1.0, 0.0);
    br.utility = u_one;
  } else {
    br.strategy = Strategy(0.0, 1.0, 0.0, 1.0);
    br.utility = u_zero;
  }
  br.classification = StrategyClass::non_informative;
  return br;
}

inline BestResponse best_response(const Mechanism& mech,
                                  const StrategyProfile& profile,
                                  std::size_t i, const ModelParams& m,
                                  const CostFn& cost,
                                  const BestResponseOptions& opts = {}) {
  return best_response_from(utility_coefficients(mech, profile, i, m), cost,
                            opts);
}

/// Exhaustive search over the product grid of conditional probabilities;
/// the oracle that validates the equilibrium-family structure of best
/// responses. Ties resolve to the lexicographically first grid point.
inline BestResponse brute_force_best_response(const Mechanism& mech,
                                              const StrategyProfile& profile,
                                              std::size_t i,
                                              const ModelParams& m,
                                              const CostFn& cost,
                                              int grid_resolution) {
  if (grid_resolution < 2)
    throw std::invalid_argument("grid resolution must be at least 2");
  const UtilityCoefficients c = utility_coefficients(mech, profile, i, m);
  const int r = grid_resolution - 1;
  const double step = 1.0 / r;
  BestResponse best;
  best.utility = -std::numeric_limits<double>::infinity();
  Strategy s;
  for (int a = 0; a <= r; ++a) {
    s.p1 = a * step;
    for (int b = 0; b + a <= r; ++b) {
      s.q1 = b * step;
      for (int cc = 0; cc <= r; ++cc) {
        s.p0 = cc * step;
        for (int d = 0; d + cc <= r; ++d) {
          s.q0 = d * step;
          const double u = utility_from(c, s, cost);
          if (u > best.utility) {
            best.utility = u;
            best.strategy = s;
          }
        }
      }
    }
  }
  best.classification = classify_nearest(best.strategy);
  if (best.classification == StrategyClass::symmetric && best.strategy.p1 > 0.0 &&
      best.strategy.p1 < 1.0)
    best.xi = std::log(best.strategy.p1 / (1.0 - best.strategy.p1));
  return best;
}

struct IndividualEquilibriumResult {
  Strategy best_strategy;
  double profile_utility = 0.0;
  double best_utility = 0.0;
  double deviation_gain = 0.0;
  StrategyClass classification = StrategyClass::non_informative;
  bool tied = false;
};

struct EquilibriumReport {
  std::vector<IndividualEquilibriumResult> individuals;
  double tolerance = 0.0;
  double max_gain = 0.0;
  bool is_nash = false;
};

/// Checks the profile against each individual's best response.
inline EquilibriumReport verify_nash(const Mechanism& mech,
                                     const StrategyProfile& profile,
                                     const ModelParams& m,
                                     const CostProfile& costs,
                                     double tolerance = 1e-6,
                                     const BestResponseOptions& opts = {}) {
  if (profile.size() != mech.population())
    throw std::invalid_argument("profile length must equal N");
  EquilibriumReport report;
  report.tolerance = tolerance;
  report.max_gain = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const CostFn& g = cost_for(costs, i);
    const UtilityCoefficients c = utility_coefficients(mech, profile, i, m);
    IndividualEquilibriumResult r;
    r.profile_utility = utility_from(c, profile[i], g);
    const BestResponse br = best_response_from(c, g, opts);
    r.best_strategy = br.strategy;
    r.best_utility = br.utility;
    r.deviation_gain = br.utility - r.profile_utility;
    r.classification = br.classification;
    r.tied = br.tied;
    report.max_gain = std::max(report.max_gain, r.deviation_gain);
    report.individuals.push_back(r);
  }
  report.is_nash = report.max_gain <= tolerance;
  return report;
}

}  // namespace privmark
