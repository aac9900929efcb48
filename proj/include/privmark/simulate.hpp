#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "privmark/bounds.hpp"
#include "privmark/mechanisms.hpp"
#include "privmark/model.hpp"
#include "privmark/numeric.hpp"
#include "privmark/rng.hpp"

namespace privmark {

/// Maximum-a-posteriori decision rule for the state given the reports, with
/// per-individual likelihoods induced by the strategy profile.
class MapDecider {
 public:
  MapDecider(const ModelParams& m, const StrategyProfile& profile) {
    log_prior_[0] = std::log(m.prior(0));
    log_prior_[1] = std::log(m.prior(1));
    loglik_.resize(profile.size());
    for (std::size_t i = 0; i < profile.size(); ++i)
      for (Report x : kAllReports) {
        auto& row = loglik_[i][static_cast<int>(x)];
        double mass[2];
        for (int w : {0, 1})
          mass[w] = report_distribution(m, profile[i], w)[x];
        // Events impossible under both states carry no evidence.
        const bool dead = mass[0] == 0.0 && mass[1] == 0.0;
        for (int w : {0, 1}) row[w] = dead ? 0.0 : std::log(mass[w]);
      }
  }

  /// Ties break toward 1.
  int decide(std::span<const Report> reports) const {
    double ll1 = log_prior_[1], ll0 = log_prior_[0];
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& row = loglik_[i][static_cast<int>(reports[i])];
      ll0 += row[0];
      ll1 += row[1];
    }
    return ll1 >= ll0 ? 1 : 0;
  }

 private:
  std::vector<std::array<std::array<double, 2>, 3>> loglik_;
  double log_prior_[2];
};

inline int map_decide(std::span<const Report> reports,
                      const StrategyProfile& profile, const ModelParams& m) {
  if (reports.size() != profile.size())
    throw std::invalid_argument("reports and profile must have equal length");
  return MapDecider(m, profile).decide(reports);
}

struct SimConfig {
  ModelParams model;
  StrategyProfile profile;
  std::uint64_t trials = 1;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    model.validate();
    if (profile.size() != static_cast<std::size_t>(model.population))
      throw std::invalid_argument("profile length must equal the population");
    if (trials < 1) throw std::invalid_argument("need at least one trial");
  }
};

struct SimResult {
  std::vector<double> mean_payment;
  std::vector<double> payment_std_error;
  double error_rate = 0.0;
  double error_std_error = 0.0;
  std::optional<double> error_bound;  // exp(-sum D); absent if unclassifiable
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
};

/// exp(-sum_i D(eps_i)) when every profile strategy is a symmetric
/// randomized response or non-informative; nothing otherwise.
inline std::optional<double> profile_error_bound(const ModelParams& m,
                                                 const StrategyProfile& profile) {
  detail::KahanSum total;
  for (const Strategy& s : profile) {
    if (s.is_non_informative() || s.is_opt_out()) continue;
    if (!s.is_symmetric()) return std::nullopt;
    total.add(chernoff_information(privacy_level(s), m));
  }
  return std::exp(-total.value());
}

struct TrialOutcome {
  int state = 0;
  std::vector<Report> reports;
  std::vector<double> payments;
  int decision = 0;
};

inline void simulate_trial(const ModelParams& m, const StrategyProfile& profile,
                           const Mechanism& mech, const MapDecider& decider,
                           std::uint64_t seed, std::uint64_t trial,
                           TrialOutcome& out) {
  SplitMix64 rng = trial_rng(seed, trial);
  const std::size_t n = profile.size();
  out.reports.resize(n);
  out.state = rng.bernoulli(m.prior_one) ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int s = rng.bernoulli(signal_distribution(m, out.state)) ? 1 : 0;
    const Strategy& sigma = profile[i];
    const double p = s ? sigma.p1 : sigma.p0;
    const double q = s ? sigma.q1 : sigma.q0;
    const double u = rng.uniform();
    out.reports[i] = u < p ? Report::one
                           : (u < p + q ? Report::zero : Report::none);
  }
  out.payments = mech.payments(out.reports, out.state);
  out.decision = decider.decide(out.reports);
}

/// Seeded Monte Carlo of the full game. Trials are split into fixed blocks;
/// block partial sums are reduced in index order, so the result is
/// bit-identical for any thread count.
inline SimResult run_simulation(const SimConfig& cfg, const Mechanism& mech) {
  cfg.validate();
  if (mech.population() != cfg.profile.size())
    throw std::invalid_argument("mechanism population must match the profile");
  const std::size_t n = cfg.profile.size();
  const MapDecider decider(cfg.model, cfg.profile);

  constexpr std::uint64_t kBlock = 8192;
  const std::uint64_t blocks = (cfg.trials + kBlock - 1) / kBlock;
  struct BlockSums {
    std::vector<double> pay, pay_sq;
    std::uint64_t errors = 0;
  };
  std::vector<BlockSums> partial(blocks);

  std::atomic<std::uint64_t> next{0};
  const auto worker = [&]() {
    TrialOutcome out;
    for (;;) {
      const std::uint64_t b = next.fetch_add(1);
      if (b >= blocks) return;
      BlockSums& sums = partial[b];
      sums.pay.assign(n, 0.0);
      sums.pay_sq.assign(n, 0.0);
      const std::uint64_t lo = b * kBlock;
      const std::uint64_t hi = std::min(cfg.trials, lo + kBlock);
      for (std::uint64_t t = lo; t < hi; ++t) {
        simulate_trial(cfg.model, cfg.profile, mech, decider, cfg.seed, t, out);
        for (std::size_t i = 0; i < n; ++i) {
          sums.pay[i] += out.payments[i];
          sums.pay_sq[i] += out.payments[i] * out.payments[i];
        }
        sums.errors += out.decision != out.state;
      }
    }
  };

  const int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<detail::KahanSum> pay(n), pay_sq(n);
  std::uint64_t errors = 0;
  for (const BlockSums& sums : partial) {
    for (std::size_t i = 0; i < n; ++i) {
      pay[i].add(sums.pay[i]);
      pay_sq[i].add(sums.pay_sq[i]);
    }
    errors += sums.errors;
  }

  SimResult res;
  res.trials = cfg.trials;
  res.seed = cfg.seed;
  res.mean_payment.resize(n);
  res.payment_std_error.resize(n);
  const double count = static_cast<double>(cfg.trials);
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = pay[i].value() / count;
    const double var = std::max(0.0, pay_sq[i].value() / count - mean * mean);
    res.mean_payment[i] = mean;
    res.payment_std_error[i] = std::sqrt(var / count);
  }
  res.error_rate = static_cast<double>(errors) / count;
  res.error_std_error =
      std::sqrt(std::max(0.0, res.error_rate * (1.0 - res.error_rate)) / count);
  res.error_bound = profile_error_bound(cfg.model, cfg.profile);
  return res;
}

struct ErrorVsBound {
  double empirical = 0.0;
  double std_error = 0.0;
  double bound = 0.0;
  bool within = false;  // empirical - 3 sigma <= bound
};

/// Empirical MAP error against the hypothesis-testing bound.
inline ErrorVsBound error_vs_bound(const SimConfig& cfg, const Mechanism& mech) {
  const SimResult res = run_simulation(cfg, mech);
  if (!res.error_bound)
    throw std::invalid_argument(
        "profile has strategies with no defined privacy parameter");
  ErrorVsBound out;
  out.empirical = res.error_rate;
  out.std_error = res.error_std_error;
  out.bound = *res.error_bound;
  out.within = out.empirical - 3.0 * out.std_error <= out.bound;
  return out;
}

}  // namespace privmark
