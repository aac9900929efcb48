#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace privmark {

/// Reported value of one individual: a bit, or staying out of the survey.
enum class Report : std::uint8_t { zero = 0, one = 1, none = 2 };

inline constexpr std::array<Report, 3> kAllReports{Report::zero, Report::one,
                                                   Report::none};

inline char report_char(Report r) {
  switch (r) {
    case Report::zero: return '0';
    case Report::one: return '1';
    default: return 'n';
  }
}

inline Report report_from_char(char c) {
  switch (c) {
    case '0': return Report::zero;
    case '1': return Report::one;
    case 'n': return Report::none;
    default: throw std::invalid_argument("report character must be 0, 1 or n");
  }
}

/// Tolerance used when classifying strategies returned by optimizers.
inline constexpr double kClassifyTol = 1e-9;

/// Population-level parameters: state prior, signal quality, head count.
struct ModelParams {
  double prior_one = 0.5;  // Pr(W = 1)
  double quality = 0.75;   // Pr(S_i = W | W)
  int population = 1;      // number of individuals

  ModelParams() = default;
  ModelParams(double prior_one_, double quality_, int population_)
      : prior_one(prior_one_), quality(quality_), population(population_) {
    validate();
  }

  void validate() const {
    if (!(prior_one > 0.0 && prior_one < 1.0))
      throw std::invalid_argument("prior_one must lie strictly inside (0, 1)");
    if (!(quality > 0.5 && quality < 1.0))
      throw std::invalid_argument("quality must lie strictly inside (0.5, 1)");
    if (population < 1)
      throw std::invalid_argument("population must be at least 1");
  }

  double prior(int w) const { return w ? prior_one : 1.0 - prior_one; }
};

/// Pr(S_i = 1 | W = w).
inline double signal_distribution(const ModelParams& m, int w) {
  return w ? m.quality : 1.0 - m.quality;
}

/// Pr(S_i = s | W = w).
inline double signal_given_state(const ModelParams& m, int s, int w) {
  const double p1 = signal_distribution(m, w);
  return s ? p1 : 1.0 - p1;
}

/// Pr(S_i = s, W = w).
inline double signal_state_joint(const ModelParams& m, int s, int w) {
  return m.prior(w) * signal_given_state(m, s, w);
}

/// A randomized reporting rule: conditional distribution of the report given
/// each signal value. The probability of staying out is the remaining mass.
struct Strategy {
  double p1 = 0.0;  // Pr(X = 1 | S = 1)
  double q1 = 0.0;  // Pr(X = 0 | S = 1)
  double p0 = 0.0;  // Pr(X = 1 | S = 0)
  double q0 = 0.0;  // Pr(X = 0 | S = 0)

  Strategy() = default;
  Strategy(double p1_, double q1_, double p0_, double q0_)
      : p1(p1_), q1(q1_), p0(p0_), q0(q0_) {
    validate();
  }

  void validate() const {
    const double slack = 1e-9;
    for (double v : {p1, q1, p0, q0})
      if (!(v >= -slack && v <= 1.0 + slack))
        throw std::invalid_argument("strategy probabilities must lie in [0, 1]");
    if (p1 + q1 > 1.0 + slack || p0 + q0 > 1.0 + slack)
      throw std::invalid_argument("strategy conditionals must not exceed mass 1");
  }

  // Parenthesized so strategies with the reports swapped land on the exact
  // same opt-out mass (floating-point addition commutes).
  double out1() const { return std::max(0.0, 1.0 - (p1 + q1)); }
  double out0() const { return std::max(0.0, 1.0 - (p0 + q0)); }

  /// Pr(X = x | S = s).
  double prob(Report x, int s) const {
    switch (x) {
      case Report::one: return s ? p1 : p0;
      case Report::zero: return s ? q1 : q0;
      default: return s ? out1() : out0();
    }
  }

  /// Never reports anything regardless of the signal.
  bool is_opt_out(double tol = kClassifyTol) const {
    return p1 <= tol && q1 <= tol && p0 <= tol && q0 <= tol;
  }

  /// Treats the two signal values symmetrically and always participates.
  bool is_symmetric(double tol = kClassifyTol) const {
    return std::fabs(p1 - q0) <= tol && std::fabs(p1 + q1 - 1.0) <= tol &&
           std::fabs(p0 + q0 - 1.0) <= tol;
  }

  /// Report independent of the signal: the two conditionals coincide.
  bool is_non_informative(double tol = kClassifyTol) const {
    return std::fabs(p1 - p0) <= tol && std::fabs(q1 - q0) <= tol;
  }

  bool operator==(const Strategy&) const = default;
};

using StrategyProfile = std::vector<Strategy>;

namespace detail {

/// max of ln(a/b) and ln(b/a), with the 0/0 = 1 convention; a one-sided
/// zero gives infinity. Evaluating both orderings keeps the result equal,
/// bit for bit, to a direct scan over the event/signal pairs.
inline double abs_log_ratio(double a, double b) {
  if (a == 0.0 && b == 0.0) return 0.0;
  if (a == 0.0 || b == 0.0) return std::numeric_limits<double>::infinity();
  return std::max(std::log(a / b), std::log(b / a));
}

}  // namespace detail

/// Local differential-privacy level of a strategy: the largest absolute
/// log-likelihood ratio over report events between the two signal values.
/// Closed form over the six nontrivial events of the three-letter alphabet.
inline double privacy_level(const Strategy& s) {
  using detail::abs_log_ratio;
  double level = abs_log_ratio(s.p1, s.p0);
  level = std::max(level, abs_log_ratio(s.q1, s.q0));
  level = std::max(level, abs_log_ratio(s.out1(), s.out0()));
  level = std::max(level, abs_log_ratio(s.p1 + s.q1, s.p0 + s.q0));
  level = std::max(level, abs_log_ratio(1.0 - s.p1, 1.0 - s.p0));
  level = std::max(level, abs_log_ratio(1.0 - s.q1, 1.0 - s.q0));
  return level;
}

/// Symmetric randomized response that flips the signal with probability
/// 1/(e^eps + 1). Negative eps swaps the roles of the two reports; the
/// privacy level is |eps| either way. Never opts out. Beyond |eps| of
/// about 36.7 the flip probability is below double resolution and the
/// strategy degenerates to deterministic disclosure.
inline Strategy eps_strategy(double eps) {
  if (!std::isfinite(eps))
    throw std::invalid_argument("eps_strategy requires finite eps");
  // Build from the larger probability so p + q is exactly 1.
  const double hi = 1.0 / (1.0 + std::exp(-std::fabs(eps)));
  const double lo = 1.0 - hi;
  Strategy s;
  if (eps >= 0.0) {
    s.p1 = hi, s.q1 = lo, s.p0 = lo, s.q0 = hi;
  } else {
    s.p1 = lo, s.q1 = hi, s.p0 = hi, s.q0 = lo;
  }
  return s;
}

/// Distribution of one individual's report given the state, mixing the
/// strategy over the signal distribution.
struct ReportDistribution {
  std::array<double, 3> mass{};  // indexed by Report

  double operator[](Report r) const { return mass[static_cast<int>(r)]; }
  double& operator[](Report r) { return mass[static_cast<int>(r)]; }
};

inline ReportDistribution report_distribution(const ModelParams& m,
                                              const Strategy& s, int w) {
  ReportDistribution d;
  for (Report x : kAllReports) {
    double acc = 0.0;
    for (int sig : {0, 1}) acc += s.prob(x, sig) * signal_given_state(m, sig, w);
    d[x] = acc;
  }
  return d;
}

/// Privacy-cost function g: maps a privacy level to a monetary cost.
/// Presets are linear and quadratic; custom piecewise-linear tables are
/// validated for properness (zero at zero, non-decreasing, convex).
class CostFn {
 public:
  enum class Kind { linear, quadratic, table };

  CostFn() = default;  // unit linear cost

  static CostFn linear(double c) {
    check_scale(c);
    CostFn g;
    g.kind_ = Kind::linear;
    g.scale_ = c;
    return g;
  }

  static CostFn quadratic(double c) {
    check_scale(c);
    CostFn g;
    g.kind_ = Kind::quadratic;
    g.scale_ = c;
    return g;
  }

  /// Piecewise-linear cost from (level, cost) knots. The first knot must be
  /// (0, 0); beyond the last knot the final segment is extended.
  static CostFn from_table(std::vector<std::array<double, 2>> knots) {
    if (knots.size() < 2)
      throw std::invalid_argument("cost table needs at least two knots");
    if (knots.front()[0] != 0.0 || knots.front()[1] != 0.0)
      throw std::invalid_argument("cost table must start at (0, 0)");
    double prev_slope = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < knots.size(); ++k) {
      const double dx = knots[k][0] - knots[k - 1][0];
      const double dy = knots[k][1] - knots[k - 1][1];
      if (dx <= 0.0)
        throw std::invalid_argument("cost table levels must be increasing");
      if (dy < 0.0)
        throw std::invalid_argument("cost table must be non-decreasing");
      if (knots[k][1] <= 0.0)
        throw std::invalid_argument("cost table must be positive off zero");
      const double slope = dy / dx;
      if (slope < prev_slope - 1e-10)
        throw std::invalid_argument("cost table must be convex");
      prev_slope = std::max(prev_slope, slope);
    }
    CostFn g;
    g.kind_ = Kind::table;
    g.knots_ = std::move(knots);
    return g;
  }

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }
  const std::vector<std::array<double, 2>>& knots() const { return knots_; }

  /// g(xi). Accepts +infinity and returns the declared limit.
  double operator()(double xi) const {
    if (xi < 0.0) throw std::invalid_argument("cost argument must be >= 0");
    if (std::isinf(xi)) return limit_at_infinity();
    switch (kind_) {
      case Kind::linear: return scale_ * xi;
      case Kind::quadratic: return scale_ * xi * xi;
      default: return table_value(xi);
    }
  }

  /// g'(xi); exact for the presets, central differences for tables.
  double derivative(double xi) const {
    if (xi < 0.0) throw std::invalid_argument("cost argument must be >= 0");
    switch (kind_) {
      case Kind::linear: return scale_;
      case Kind::quadratic: return 2.0 * scale_ * xi;
      default: {
        const double h = 1e-6 * std::max(1.0, xi);
        const double lo = std::max(0.0, xi - h);
        return (table_value(xi + h) - table_value(lo)) / (xi + h - lo);
      }
    }
  }

  bool derivative_is_exact() const { return kind_ != Kind::table; }

  double limit_at_infinity() const {
    if (kind_ != Kind::table) return std::numeric_limits<double>::infinity();
    const auto& a = knots_[knots_.size() - 2];
    const auto& b = knots_.back();
    const double slope = (b[1] - a[1]) / (b[0] - a[0]);
    return slope > 0.0 ? std::numeric_limits<double>::infinity() : b[1];
  }

 private:
  static void check_scale(double c) {
    if (!(c > 0.0)) throw std::invalid_argument("cost scale must be positive");
  }

  double table_value(double xi) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), xi,
                               [](double x, const std::array<double, 2>& k) {
                                 return x < k[0];
                               });
    std::size_t hi = it == knots_.end() ? knots_.size() - 1
                                        : static_cast<std::size_t>(it - knots_.begin());
    if (hi == 0) hi = 1;
    const auto& a = knots_[hi - 1];
    const auto& b = knots_[hi];
    const double t = (xi - a[0]) / (b[0] - a[0]);
    return a[1] + t * (b[1] - a[1]);
  }

  Kind kind_ = Kind::linear;
  double scale_ = 1.0;
  std::vector<std::array<double, 2>> knots_;
};

/// Per-individual cost assignment: one shared function or one per head.
using CostProfile = std::vector<CostFn>;

inline const CostFn& cost_for(const CostProfile& costs, std::size_t i) {
  if (costs.empty()) throw std::invalid_argument("empty cost profile");
  return costs.size() == 1 ? costs.front() : costs.at(i);
}

}  // namespace privmark
