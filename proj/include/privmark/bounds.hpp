#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "privmark/mechanisms.hpp"
#include "privmark/model.hpp"
#include "privmark/numeric.hpp"

namespace privmark {

/// Floor on the expected equilibrium payment for eliciting privacy level eps
/// from one individual with any nonnegative mechanism.
inline double v_lb(double eps, const ModelParams& m, const CostFn& g) {
  if (!(eps > 0.0)) throw std::invalid_argument("v_lb requires eps > 0");
  const double e = std::exp(eps);
  return g.derivative(eps) * (e + 1.0) / e *
         (m.quality / (2.0 * m.quality - 1.0) * (e + 1.0) - 1.0);
}

/// Pieces of the peer-mechanism equilibrium payment, exposed for audit.
struct UpperBoundInternals {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double d = 0.0;
  double h = 0.0;      // payment factor; approaches 2q/(2q-1) as N grows
  double t = 0.0;      // prior imbalance (P1^2 + P0^2) / (P1 P0), >= 2
  double scale = 0.0;  // g'(eps) (e^eps + 1)^2 / (2 e^eps)
  double expected_payment = 0.0;
};

/// Payment factor of the peer mechanism as a function of the majority
/// statistics; non-increasing in beta on (gamma/2, gamma].
inline double h_factor(double beta, double gamma, const ModelParams& m) {
  const double q = m.quality;
  const double rho = m.prior(1) / m.prior(0);
  return (2.0 * beta * beta + (4.0 * q - 2.0 - 2.0 * gamma) * beta +
          2.0 * (1.0 - q) * gamma + beta * (1.0 - beta) * rho +
          (gamma - beta) * (1.0 - (gamma - beta)) / rho) /
         ((2.0 * beta - gamma) * (2.0 * q - 1.0));
}

inline UpperBoundInternals v_ub_internals(double eps, int population,
                                          const ModelParams& m,
                                          const CostFn& g) {
  if (!(eps > 0.0)) throw std::invalid_argument("v_ub requires eps > 0");
  if (population < 2)
    throw std::invalid_argument("v_ub requires at least 2 individuals");
  const MajorityStats st = majority_stats(eps, m, population);
  UpperBoundInternals out;
  out.alpha = st.alpha;
  out.beta = st.beta;
  out.gamma = st.gamma;
  out.d = st.d;
  const double p1 = m.prior(1), p0 = m.prior(0);
  const double q = m.quality;
  out.t = (p1 * p1 + p0 * p0) / (p1 * p0);
  out.h = h_factor(st.beta, st.gamma, m);
  const double e = std::exp(eps);
  out.scale = g.derivative(eps) * (e + 1.0) * (e + 1.0) / (2.0 * e);
  out.expected_payment =
      v_lb(eps, m, g) + out.scale * (out.h - 2.0 * q / (2.0 * q - 1.0));
  return out;
}

/// Exact expected payment per individual at the all-eps-strategies
/// equilibrium of the peer mechanism; an upper bound on the value of privacy.
inline double v_ub(double eps, int population, const ModelParams& m,
                   const CostFn& g) {
  return v_ub_internals(eps, population, m, g).expected_payment;
}

/// Chernoff information between the report distributions of the eps-strategy
/// under the two states. Even in eps; zero exactly at eps = 0.
inline double chernoff_information(double eps, const ModelParams& m) {
  const double alpha = report_match_probability(eps, m);
  return -0.5 * std::log(4.0 * alpha * (1.0 - alpha));
}

struct EpsTildeSearch {
  double lo = 1e-4;
  double hi = 20.0;
  int grid_points = 2000;
  double tie_tol = 1e-10;  // ratio ties resolve to the smallest eps
  double xtol = 1e-10;     // refinement bracket tolerance
};

struct EpsTildeResult {
  double eps = 0.0;
  double ratio = 0.0;  // D(eps) / V_LB(eps) at the maximizer
};

/// Smallest maximizer of the quality/price ratio D(eps) / V_LB(eps):
/// log-spaced grid scan, then golden-section refinement in the best cell.
inline EpsTildeResult eps_tilde(const ModelParams& m, const CostFn& g,
                                const EpsTildeSearch& cfg = {}) {
  if (!(cfg.lo > 0.0) || !(cfg.hi > cfg.lo) || cfg.grid_points < 16)
    throw std::invalid_argument("bad eps_tilde search bracket");
  const auto ratio = [&](double eps) {
    return chernoff_information(eps, m) / v_lb(eps, m, g);
  };
  const int n = cfg.grid_points;
  const double log_lo = std::log(cfg.lo), log_hi = std::log(cfg.hi);
  std::vector<double> grid(static_cast<std::size_t>(n));
  double best_val = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const double eps =
        std::exp(log_lo + (log_hi - log_lo) * k / double(n - 1));
    grid[static_cast<std::size_t>(k)] = eps;
    const double r = ratio(eps);
    if (!std::isfinite(r))
      throw std::domain_error("degenerate cost: privacy ratio is not finite");
    best_val = std::max(best_val, r);
  }
  if (!(best_val > 0.0))
    throw std::domain_error("degenerate cost: privacy ratio never positive");
  // Leftmost grid cell whose value ties the maximum.
  int best_idx = -1;
  for (int k = 0; k < n; ++k)
    if (ratio(grid[static_cast<std::size_t>(k)]) >= best_val - cfg.tie_tol) {
      best_idx = k;
      break;
    }
  const double lo = grid[static_cast<std::size_t>(std::max(0, best_idx - 1))];
  const double hi =
      grid[static_cast<std::size_t>(std::min(n - 1, best_idx + 1))];
  const auto peak = detail::golden_section_max(ratio, lo, hi, cfg.xtol);
  return {peak.x, peak.value};
}

struct PaymentAccuracyBounds {
  double lower = 0.0;           // (N~ - 1) V_LB(eps~)
  double upper = 0.0;           // cheapest feasible designed total, N >= N~
  double designed_total = 0.0;  // exact total of the canonical design at N~
  std::int64_t n_tilde = 0;
  double eps_tilde = 0.0;
  double chernoff = 0.0;               // D(eps~)
  double residual_vs_asymptote = 0.0;  // upper - N~ V_LB(eps~)
  int design_population = 0;           // population behind `upper`
};

/// Brackets the minimum total payment for hitting the accuracy target tau.
/// The upper bound is the cheapest exact total of the designed mechanism
/// over feasible populations N >= N~: the per-individual payment wobbles
/// between even and odd peer counts, so the total at N~ itself is not
/// monotone in the target, while the minimum over the (shrinking) feasible
/// set is.
inline PaymentAccuracyBounds payment_accuracy_bounds(
    double tau, const ModelParams& m, const CostFn& g,
    const EpsTildeSearch& search = {}) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("tau must lie strictly inside (0, 1)");
  const EpsTildeResult et = eps_tilde(m, g, search);
  const double dd = chernoff_information(et.eps, m);
  PaymentAccuracyBounds out;
  out.eps_tilde = et.eps;
  out.chernoff = dd;
  out.n_tilde =
      static_cast<std::int64_t>(std::ceil(std::log(1.0 / tau) / dd));
  if (out.n_tilde < 1) out.n_tilde = 1;
  const double floor_payment = v_lb(et.eps, m, g);
  out.lower = static_cast<double>(out.n_tilde - 1) * floor_payment;
  // The peer rule needs at least two heads; tau close to 1 can ask for one.
  const int canonical = static_cast<int>(std::max<std::int64_t>(out.n_tilde, 2));
  out.designed_total = canonical * v_ub(et.eps, canonical, m, g);
  out.design_population = canonical;
  out.upper = out.designed_total;
  for (int n = canonical + 1; n <= canonical + 8; ++n) {
    const double total = n * v_ub(et.eps, n, m, g);
    if (total < out.upper) {
      out.upper = total;
      out.design_population = n;
    }
  }
  out.residual_vs_asymptote =
      out.upper - static_cast<double>(out.n_tilde) * floor_payment;
  if (std::exp(-static_cast<double>(out.n_tilde) * dd) > tau * (1.0 + 1e-12))
    throw internal_error("designed mechanism misses the accuracy target");
  return out;
}

/// Accuracy feasibility of a privacy-level assignment: nullopt entries stand
/// for non-informative strategies and contribute nothing.
inline bool feasibility_check(const std::vector<std::optional<double>>& eps,
                              double tau, const ModelParams& m) {
  detail::KahanSum total;
  for (const auto& e : eps)
    if (e) total.add(chernoff_information(std::fabs(*e), m));
  return std::exp(-total.value()) <= tau;
}

}  // namespace privmark
