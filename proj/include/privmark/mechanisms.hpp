#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "privmark/model.hpp"
#include "privmark/numeric.hpp"
#include "privmark/rng.hpp"

namespace privmark {

/// Expected payment to one individual by own report and state:
/// value[x][w] = E[R_i(X) | X_i = x, W = w] with peers playing a fixed
/// profile. Standard errors are zero when entries are exact.
struct PayoffTable {
  std::array<std::array<double, 2>, 3> value{};
  std::array<std::array<double, 2>, 3> std_error{};
  // Set when Pr(X_i = x, W = w) = 0 under the profile; the stored entry is
  // still the peer marginalization, which keeps deviation utilities intact.
  std::array<std::array<bool, 2>, 3> null_event{};

  double operator()(Report x, int w) const {
    return value[static_cast<int>(x)][w];
  }
};

/// A payment rule. Standard mechanisms ignore the state argument;
/// genie-aided rules read it.
class Mechanism {
 public:
  virtual ~Mechanism() = default;

  virtual std::size_t population() const = 0;

  virtual double payment_to(std::size_t i, std::span<const Report> reports,
                            int state) const = 0;

  virtual std::vector<double> payments(std::span<const Report> reports,
                                       int state) const {
    std::vector<double> out(population());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = payment_to(i, reports, state);
    return out;
  }

  /// Expected payment to i for each own report given the state, with the
  /// other individuals drawing reports from `profile`.
  virtual PayoffTable conditional_payment_table(
      std::size_t i, const StrategyProfile& profile,
      const ModelParams& m) const = 0;
};

namespace detail {

inline std::array<double, 3> report_mixture(const ModelParams& m,
                                            const Strategy& s, int w) {
  const ReportDistribution d = report_distribution(m, s, w);
  return {d[Report::zero], d[Report::one], d[Report::none]};
}

/// Enumerates all report vectors of the peers of `skip`, leaving slot `skip`
/// untouched, and invokes fn(vec, probability) with the product probability
/// of the peer mixtures.
template <typename Fn>
void for_each_peer_vector(std::size_t n, std::size_t skip,
                          const std::vector<std::array<double, 3>>& mix,
                          Fn&& fn) {
  std::vector<Report> vec(n, Report::zero);
  std::uint64_t combos = 1;
  for (std::size_t j = 0; j < n - 1; ++j) combos *= 3;
  for (std::uint64_t c = 0; c < combos; ++c) {
    std::uint64_t rest = c;
    double prob = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == skip) continue;
      const int digit = static_cast<int>(rest % 3);
      rest /= 3;
      vec[j] = static_cast<Report>(digit);
      prob *= mix[j][digit];
    }
    fn(std::span<const Report>(vec), prob);
  }
}

}  // namespace detail

/// Payment rule given by an explicit table over all 3^N report vectors.
/// Nonnegative everywhere and pays nothing to individuals who stay out.
class TabularMechanism : public Mechanism {
 public:
  TabularMechanism(std::size_t population, std::vector<double> payments)
      : population_(population), payments_(std::move(payments)) {
    if (population_ < 1 || population_ > 12)
      throw std::invalid_argument("tabular mechanism supports 1..12 individuals");
    std::size_t vectors = 1;
    for (std::size_t j = 0; j < population_; ++j) vectors *= 3;
    if (payments_.size() != vectors * population_)
      throw std::invalid_argument("payment table has the wrong size");
    std::vector<Report> vec(population_);
    for (std::size_t v = 0; v < vectors; ++v) {
      std::size_t rest = v;
      for (std::size_t j = 0; j < population_; ++j) {
        vec[j] = static_cast<Report>(rest % 3);
        rest /= 3;
      }
      for (std::size_t i = 0; i < population_; ++i) {
        const double pay = payments_[v * population_ + i];
        if (pay < 0.0)
          throw std::invalid_argument("payments must be nonnegative");
        if (vec[i] == Report::none && pay != 0.0)
          throw std::invalid_argument("individuals who stay out are paid zero");
      }
    }
  }

  std::size_t population() const override { return population_; }

  static std::size_t vector_index(std::span<const Report> reports) {
    std::size_t idx = 0, base = 1;
    for (Report r : reports) {
      idx += static_cast<std::size_t>(r) * base;
      base *= 3;
    }
    return idx;
  }

  double payment_to(std::size_t i, std::span<const Report> reports,
                    int /*state*/) const override {
    return payments_[vector_index(reports) * population_ + i];
  }

  PayoffTable conditional_payment_table(std::size_t i,
                                        const StrategyProfile& profile,
                                        const ModelParams& m) const override;

  const std::vector<double>& raw() const { return payments_; }

 private:
  std::size_t population_;
  std::vector<double> payments_;  // [vector_index * N + individual]
};

/// R' pays on the reports with individual i's bit flipped (opt-out fixed).
inline TabularMechanism flip_mechanism(const TabularMechanism& r,
                                       std::size_t i) {
  const std::size_t n = r.population();
  if (i >= n) throw std::invalid_argument("individual index out of range");
  std::size_t vectors = 1, stride = 1;
  for (std::size_t j = 0; j < n; ++j) vectors *= 3;
  for (std::size_t j = 0; j < i; ++j) stride *= 3;
  std::vector<double> flipped(vectors * n);
  for (std::size_t v = 0; v < vectors; ++v) {
    const int digit = static_cast<int>((v / stride) % 3);
    std::size_t src = v;
    if (digit == 0)
      src = v + stride;  // 0 -> 1
    else if (digit == 1)
      src = v - stride;  // 1 -> 0
    for (std::size_t j = 0; j < n; ++j)
      flipped[v * n + j] = r.raw()[src * n + j];
  }
  return TabularMechanism(n, std::move(flipped));
}

/// Uniformly random nonnegative payment table (zero for opt-outs).
inline TabularMechanism random_tabular_mechanism(std::size_t population,
                                                 std::uint64_t seed,
                                                 double max_payment = 1.0) {
  std::size_t vectors = 1;
  for (std::size_t j = 0; j < population; ++j) vectors *= 3;
  SplitMix64 rng(seed);
  std::vector<double> pay(vectors * population);
  std::vector<Report> vec(population);
  for (std::size_t v = 0; v < vectors; ++v) {
    std::size_t rest = v;
    for (std::size_t j = 0; j < population; ++j) {
      vec[j] = static_cast<Report>(rest % 3);
      rest /= 3;
    }
    for (std::size_t i = 0; i < population; ++i)
      pay[v * population + i] =
          vec[i] == Report::none ? 0.0 : rng.uniform() * max_payment;
  }
  return TabularMechanism(population, std::move(pay));
}

/// Hypothetical rule paying on (own report, true state). Achieves the
/// per-individual payment floor; used as the analysis benchmark.
class GenieMechanism : public Mechanism {
 public:
  GenieMechanism(double eps, ModelParams model, CostFn cost)
      : eps_(eps), model_(std::move(model)), cost_(std::move(cost)) {
    if (!(eps > 0.0))
      throw std::invalid_argument("genie mechanism requires eps > 0");
    model_.validate();
  }

  double eps() const { return eps_; }
  const ModelParams& model() const { return model_; }
  const CostFn& cost() const { return cost_; }

  /// Multiplier in front of the A-table: g'(eps) (e^eps + 1)^2 / (2 e^eps).
  double scale() const {
    const double e = std::exp(eps_);
    return cost_.derivative(eps_) * (e + 1.0) * (e + 1.0) / (2.0 * e);
  }

  double a_hat(int x, int w) const {
    const double denom = 2.0 * model_.quality - 1.0;
    if (x == 1 && w == 1) return 1.0 / (denom * model_.prior(1));
    if (x == 0 && w == 0) return 1.0 / (denom * model_.prior(0));
    return 0.0;
  }

  double payment(Report x, int w) const {
    if (x == Report::none) return 0.0;
    return scale() * a_hat(static_cast<int>(x), w);
  }

  std::size_t population() const override {
    return static_cast<std::size_t>(model_.population);
  }

  double payment_to(std::size_t i, std::span<const Report> reports,
                    int state) const override {
    return payment(reports[i], state);
  }

  std::vector<double> payments(std::span<const Report> reports,
                               int state) const override {
    std::vector<double> out(reports.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = payment(reports[i], state);
    return out;
  }

  PayoffTable conditional_payment_table(std::size_t i,
                                        const StrategyProfile& profile,
                                        const ModelParams& m) const override {
    PayoffTable t;
    for (Report x : kAllReports)
      for (int w : {0, 1})
        t.value[static_cast<int>(x)][w] = payment(x, w);
    if (i < profile.size())
      for (int w : {0, 1}) {
        const ReportDistribution d = report_distribution(m, profile[i], w);
        for (Report x : kAllReports)
          t.null_event[static_cast<int>(x)][w] = d[x] == 0.0;
      }
    return t;
  }

 private:
  double eps_;
  ModelParams model_;
  CostFn cost_;
};

inline double genie_payment(const GenieMechanism& g, Report x, int w) {
  return g.payment(x, w);
}

/// Majority bit of the participating peers of individual i, or nothing when
/// i has no participating peer.
inline std::optional<int> majority_excluding(std::span<const Report> reports,
                                             std::size_t i) {
  if (i >= reports.size())
    throw std::invalid_argument("individual index out of range");
  if (reports[i] == Report::none)
    throw std::invalid_argument("majority is defined for participants only");
  std::int64_t participants = 0, ones = 0;
  for (std::size_t j = 0; j < reports.size(); ++j) {
    if (reports[j] == Report::none) continue;
    ++participants;
    if (j != i && reports[j] == Report::one) ++ones;
  }
  if (participants <= 1) return std::nullopt;
  const std::int64_t threshold = (participants - 1) / 2 + 1;
  return ones >= threshold ? 1 : 0;
}

/// Probability that a report generated by the eps-strategy equals the state.
inline double report_match_probability(double eps, const ModelParams& m) {
  const double s = 1.0 / (1.0 + std::exp(-eps));
  return m.quality * s + (1.0 - m.quality) * (1.0 - s);
}

/// Distribution of the peer-majority bit when everyone plays the
/// eps-strategy and `participants` individuals take part:
/// Pr(majority = 1 | W = 1) = beta, Pr(majority = 1 | W = 0) = gamma - beta.
struct MajorityStats {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double d = 0.0;  // exponential decay rate of the majority error
};

inline MajorityStats majority_stats(double eps, const ModelParams& m,
                                    int participants) {
  if (participants < 2)
    throw std::invalid_argument("majority needs at least two participants");
  MajorityStats st;
  st.alpha = report_match_probability(eps, m);
  st.d = 0.5 * std::log(1.0 / (4.0 * st.alpha * (1.0 - st.alpha)));
  const std::int64_t peers = participants - 1;
  const std::int64_t threshold = peers / 2 + 1;
  st.beta = detail::binomial_tail_at_least(peers, threshold, st.alpha);
  st.gamma = (peers % 2 == 0)
                 ? 1.0 - detail::binomial_pmf(peers, peers / 2, st.alpha)
                 : 1.0;
  return st;
}

/// Implementable peer rule: pays on (own report, majority of peers). The
/// A parameters are recomputed at the realized participant count.
class PeerMechanism : public Mechanism {
 public:
  /// Per-count payment coefficients.
  struct Coefficients {
    double beta = 0.0;   // Pr(peer majority = 1 | W = 1)
    double gamma = 0.0;  // beta + Pr(peer majority = 1 | W = 0)
    double a11 = 0.0;
    double a00 = 0.0;
  };

  PeerMechanism(double eps, ModelParams model, CostProfile costs)
      : eps_(eps), model_(std::move(model)), costs_(std::move(costs)) {
    if (!(eps > 0.0))
      throw std::invalid_argument("peer mechanism requires eps > 0");
    model_.validate();
    if (model_.population < 2)
      throw std::invalid_argument("peer mechanism requires at least 2 individuals");
    if (costs_.size() != 1 &&
        costs_.size() != static_cast<std::size_t>(model_.population))
      throw std::invalid_argument("cost profile must have size 1 or N");
    alpha_ = report_match_probability(eps_, model_);
    d_ = 0.5 * std::log(1.0 / (4.0 * alpha_ * (1.0 - alpha_)));
    coefficients_.resize(static_cast<std::size_t>(model_.population) + 1);
    for (int n = 2; n <= model_.population; ++n)
      coefficients_[static_cast<std::size_t>(n)] = compute_coefficients(n);
  }

  PeerMechanism(double eps, ModelParams model, CostFn cost)
      : PeerMechanism(eps, std::move(model), CostProfile{std::move(cost)}) {}

  double eps() const { return eps_; }
  double alpha() const { return alpha_; }
  double decay_rate() const { return d_; }
  const ModelParams& model() const { return model_; }
  const CostProfile& costs() const { return costs_; }

  /// Coefficients at a realized participant count n in [2, N].
  const Coefficients& coefficients(int n) const {
    return coefficients_.at(static_cast<std::size_t>(n));
  }

  double scale(std::size_t i) const {
    const double e = std::exp(eps_);
    return cost_for(costs_, i).derivative(eps_) * (e + 1.0) * (e + 1.0) /
           (2.0 * e);
  }

  std::size_t population() const override {
    return static_cast<std::size_t>(model_.population);
  }

  std::vector<double> payments(std::span<const Report> reports,
                               int /*state*/) const override {
    if (reports.size() != population())
      throw std::invalid_argument("report vector length must equal N");
    std::vector<double> out(reports.size(), 0.0);
    std::int64_t participants = 0, ones = 0;
    for (Report r : reports) {
      if (r == Report::none) continue;
      ++participants;
      if (r == Report::one) ++ones;
    }
    if (participants <= 1) return out;
    const Coefficients& c = coefficients(static_cast<int>(participants));
    const std::int64_t threshold = (participants - 1) / 2 + 1;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (reports[i] == Report::none) continue;
      const std::int64_t peer_ones =
          ones - (reports[i] == Report::one ? 1 : 0);
      const int majority = peer_ones >= threshold ? 1 : 0;
      if (reports[i] == Report::one && majority == 1)
        out[i] = scale(i) * c.a11;
      else if (reports[i] == Report::zero && majority == 0)
        out[i] = scale(i) * c.a00;
    }
    return out;
  }

  double payment_to(std::size_t i, std::span<const Report> reports,
                    int state) const override {
    return payments(reports, state)[i];
  }

  PayoffTable conditional_payment_table(std::size_t i,
                                        const StrategyProfile& profile,
                                        const ModelParams& m) const override;

 private:
  Coefficients compute_coefficients(int n) const {
    const MajorityStats st = majority_stats(eps_, model_, n);
    Coefficients c;
    c.beta = st.beta;
    c.gamma = st.gamma;
    const double margin = 2.0 * c.beta - c.gamma;
    if (!(margin > 0.0))
      throw internal_error("peer mechanism needs 2 beta(n) > gamma(n)");
    const double p1 = model_.prior(1), p0 = model_.prior(0);
    const double denom = margin * (2.0 * model_.quality - 1.0) * p1 * p0;
    c.a11 = (p1 * (1.0 - c.beta) + p0 * (1.0 - (c.gamma - c.beta))) / denom;
    c.a00 = (p1 * c.beta + p0 * (c.gamma - c.beta)) / denom;
    if (c.a11 < 0.0 || c.a00 < 0.0)
      throw internal_error("peer mechanism payment coefficients went negative");
    return c;
  }

  double eps_;
  ModelParams model_;
  CostProfile costs_;
  double alpha_ = 0.0;
  double d_ = 0.0;
  std::vector<Coefficients> coefficients_;
};

inline std::vector<double> peer_payment(const PeerMechanism& p,
                                        std::span<const Report> reports) {
  return p.payments(reports, 0);
}

inline PayoffTable TabularMechanism::conditional_payment_table(
    std::size_t i, const StrategyProfile& profile, const ModelParams& m) const {
  if (profile.size() != population_)
    throw std::invalid_argument("profile length must equal N");
  std::vector<std::array<double, 3>> mix(population_);
  PayoffTable t;
  std::vector<Report> vec(population_);
  for (int w : {0, 1}) {
    for (std::size_t j = 0; j < population_; ++j)
      mix[j] = detail::report_mixture(m, profile[j], w);
    std::array<detail::KahanSum, 3> acc;
    detail::for_each_peer_vector(
        population_, i, mix, [&](std::span<const Report> peers, double prob) {
          std::copy(peers.begin(), peers.end(), vec.begin());
          for (Report x : kAllReports) {
            vec[i] = x;
            acc[static_cast<int>(x)].add(prob * payment_to(i, vec, w));
          }
        });
    const ReportDistribution d = report_distribution(m, profile[i], w);
    for (Report x : kAllReports) {
      t.value[static_cast<int>(x)][w] = acc[static_cast<int>(x)].value();
      t.null_event[static_cast<int>(x)][w] = d[x] == 0.0;
    }
  }
  return t;
}

inline PayoffTable PeerMechanism::conditional_payment_table(
    std::size_t i, const StrategyProfile& profile, const ModelParams& m) const {
  if (profile.size() != population())
    throw std::invalid_argument("profile length must equal N");
  PayoffTable t;
  const std::size_t peers = population() - 1;
  for (int w : {0, 1}) {
    // dp[k][s]: probability that k peers participate and s of them report 1.
    std::vector<std::vector<double>> dp(peers + 1);
    for (std::size_t k = 0; k <= peers; ++k) dp[k].assign(k + 1, 0.0);
    dp[0][0] = 1.0;
    std::size_t seen = 0;
    for (std::size_t j = 0; j < population(); ++j) {
      if (j == i) continue;
      const auto mix = detail::report_mixture(m, profile[j], w);
      for (std::size_t k = seen + 1; k-- > 0;) {
        for (std::size_t s = 0; s <= k; ++s) {
          const double mass = dp[k][s];
          if (mass == 0.0) continue;
          dp[k][s] = mass * mix[2];
          dp[k + 1][s + 1] += mass * mix[1];
          dp[k + 1][s] += mass * mix[0];
        }
      }
      ++seen;
    }
    for (Report x : {Report::one, Report::zero}) {
      detail::KahanSum acc;
      for (std::size_t k = 1; k <= peers; ++k) {
        const Coefficients& c = coefficients(static_cast<int>(k) + 1);
        const std::size_t threshold = k / 2 + 1;
        for (std::size_t s = 0; s <= k; ++s) {
          if (dp[k][s] == 0.0) continue;
          const int majority = s >= threshold ? 1 : 0;
          double a = 0.0;
          if (x == Report::one && majority == 1) a = c.a11;
          if (x == Report::zero && majority == 0) a = c.a00;
          if (a != 0.0) acc.add(dp[k][s] * scale(i) * a);
        }
      }
      t.value[static_cast<int>(x)][w] = acc.value();
    }
    const ReportDistribution d = report_distribution(m, profile[i], w);
    for (Report x : kAllReports)
      t.null_event[static_cast<int>(x)][w] = d[x] == 0.0;
  }
  return t;
}

/// Genie-aided rule given by explicit per-individual payoff tables, e.g. the
/// replication of a standard mechanism at a fixed profile.
class GenieTableMechanism : public Mechanism {
 public:
  explicit GenieTableMechanism(std::vector<PayoffTable> tables)
      : tables_(std::move(tables)) {
    if (tables_.empty())
      throw std::invalid_argument("need at least one payoff table");
  }

  std::size_t population() const override { return tables_.size(); }

  const PayoffTable& table(std::size_t i) const { return tables_.at(i); }

  double payment_to(std::size_t i, std::span<const Report> reports,
                    int state) const override {
    return tables_[i](reports[i], state);
  }

  PayoffTable conditional_payment_table(
      std::size_t i, const StrategyProfile& /*profile*/,
      const ModelParams& /*m*/) const override {
    return tables_[i];
  }

 private:
  std::vector<PayoffTable> tables_;
};

struct ReplicationOptions {
  std::size_t max_exact_population = 12;
  std::uint64_t mc_samples = 200000;
  std::uint64_t seed = 0x9d2c5680;
};

/// Builds the genie-aided replica paying E[R_i(X) | X_i = x, W = w] at the
/// given profile. Exact peer marginalization up to the configured population,
/// Monte Carlo with recorded standard errors above it.
inline GenieTableMechanism genie_replicate(const Mechanism& r,
                                           const StrategyProfile& profile,
                                           const ModelParams& m,
                                           ReplicationOptions opts = {}) {
  const std::size_t n = r.population();
  if (profile.size() != n)
    throw std::invalid_argument("profile length must equal N");
  std::vector<PayoffTable> tables(n);
  std::vector<std::array<double, 3>> mix(n);
  std::vector<Report> vec(n, Report::zero);
  const bool exact = n <= opts.max_exact_population;
  std::uint64_t stream = 0;
  for (std::size_t i = 0; i < n; ++i) {
    PayoffTable& t = tables[i];
    for (int w : {0, 1}) {
      for (std::size_t j = 0; j < n; ++j)
        mix[j] = detail::report_mixture(m, profile[j], w);
      if (exact) {
        std::array<detail::KahanSum, 3> acc;
        detail::for_each_peer_vector(
            n, i, mix, [&](std::span<const Report> peers, double prob) {
              std::copy(peers.begin(), peers.end(), vec.begin());
              for (Report x : kAllReports) {
                vec[i] = x;
                acc[static_cast<int>(x)].add(prob * r.payment_to(i, vec, w));
              }
            });
        for (Report x : kAllReports)
          t.value[static_cast<int>(x)][w] = acc[static_cast<int>(x)].value();
      } else {
        std::array<detail::KahanSum, 3> sum, sumsq;
        for (std::uint64_t trial = 0; trial < opts.mc_samples; ++trial) {
          SplitMix64 rng = trial_rng(opts.seed + stream, trial);
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double u = rng.uniform();
            vec[j] = u < mix[j][0]
                         ? Report::zero
                         : (u < mix[j][0] + mix[j][1] ? Report::one
                                                      : Report::none);
          }
          for (Report x : kAllReports) {
            vec[i] = x;
            const double pay = r.payment_to(i, vec, w);
            sum[static_cast<int>(x)].add(pay);
            sumsq[static_cast<int>(x)].add(pay * pay);
          }
        }
        ++stream;
        const double count = static_cast<double>(opts.mc_samples);
        for (Report x : kAllReports) {
          const double mean = sum[static_cast<int>(x)].value() / count;
          const double var = std::max(
              0.0, sumsq[static_cast<int>(x)].value() / count - mean * mean);
          t.value[static_cast<int>(x)][w] = mean;
          t.std_error[static_cast<int>(x)][w] = std::sqrt(var / count);
        }
      }
      const ReportDistribution d = report_distribution(m, profile[i], w);
      for (Report x : kAllReports)
        t.null_event[static_cast<int>(x)][w] = d[x] == 0.0;
    }
  }
  return GenieTableMechanism(std::move(tables));
}

}  // namespace privmark
