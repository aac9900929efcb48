#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "privmark/bounds.hpp"
#include "privmark/equilibrium.hpp"
#include "privmark/mechanisms.hpp"
#include "privmark/model.hpp"
#include "privmark/rng.hpp"

using namespace privmark;

namespace {

Strategy random_strategy(SplitMix64& rng) {
  Strategy s;
  s.p1 = rng.uniform();
  s.q1 = rng.uniform() * (1.0 - s.p1);
  s.p0 = rng.uniform();
  s.q0 = rng.uniform() * (1.0 - s.p0);
  return s;
}

TabularMechanism zero_mechanism(std::size_t n) {
  std::size_t vectors = 1;
  for (std::size_t j = 0; j < n; ++j) vectors *= 3;
  return TabularMechanism(n, std::vector<double>(vectors * n, 0.0));
}

// Full enumeration of (state, signals, reports): every individual's signal
// and report spelled out, no conditional-independence shortcuts.
double utility_oracle(const TabularMechanism& mech, std::size_t i,
                      const Strategy& si, StrategyProfile profile,
                      const ModelParams& m, const CostFn& g) {
  profile[i] = si;
  const std::size_t n = profile.size();
  std::size_t combos = 1;
  for (std::size_t j = 0; j < n; ++j) combos *= 6;  // (signal, report) pairs
  std::vector<Report> vec(n);
  double expected = 0.0;
  for (int w : {0, 1}) {
    for (std::size_t c = 0; c < combos; ++c) {
      std::size_t rest = c;
      double prob = m.prior(w);
      for (std::size_t j = 0; j < n; ++j) {
        const int digit = static_cast<int>(rest % 6);
        rest /= 6;
        const int sig = digit / 3;
        vec[j] = static_cast<Report>(digit % 3);
        prob *= signal_given_state(m, sig, w) * profile[j].prob(vec[j], sig);
      }
      if (prob > 0.0) expected += prob * mech.payment_to(i, vec, w);
    }
  }
  return expected - g(privacy_level(si));
}

}  // namespace

TEST_CASE("utility coefficients") {
  const ModelParams m(0.6, 0.8, 2);
  SECTION("zero mechanism has zero coefficients") {
    const TabularMechanism zero = zero_mechanism(2);
    const StrategyProfile profile{eps_strategy(1.0), eps_strategy(1.0)};
    const UtilityCoefficients c = utility_coefficients(zero, profile, 0, m);
    CHECK(c.k1 == 0.0);
    CHECK(c.k0 == 0.0);
    CHECK(c.l1 == 0.0);
    CHECK(c.l0 == 0.0);
  }
  SECTION("genie mechanism pins the coefficient spread") {
    for (double eps : {0.3, 1.0, 2.5}) {
      for (double theta : {0.65, 0.9}) {
        const ModelParams mm(0.7, theta, 1);
        const CostFn g = CostFn::quadratic(0.8);
        const GenieMechanism genie(eps, mm, g);
        const StrategyProfile profile{eps_strategy(eps)};
        const UtilityCoefficients c = utility_coefficients(genie, profile, 0, mm);
        const double e = std::exp(eps);
        const double expected = g.derivative(eps) * (e + 1.0) * (e + 1.0) / e;
        CHECK(c.kbar1() - c.kbar0() ==
              Catch::Approx(expected).epsilon(1e-12));
      }
    }
  }
  SECTION("one-report and zero-report weights vanish together") {
    // Full-support signals make K1, K0 (and L1, L0) zero or positive jointly.
    SplitMix64 rng(99);
    for (int trial = 0; trial < 30; ++trial) {
      const TabularMechanism mech = random_tabular_mechanism(2, rng.next());
      const StrategyProfile profile{random_strategy(rng), random_strategy(rng)};
      const UtilityCoefficients c = utility_coefficients(mech, profile, 0, m);
      CHECK((c.k1 == 0.0) == (c.k0 == 0.0));
      CHECK((c.l1 == 0.0) == (c.l0 == 0.0));
      CHECK(c.k1 >= 0.0);
      CHECK(c.l0 >= 0.0);
    }
  }
  SECTION("coefficient utility equals full enumeration") {
    SplitMix64 rng(31);
    const CostFn g = CostFn::linear(0.7);
    for (std::size_t n : {std::size_t{2}, std::size_t{3}, std::size_t{4}}) {
      const ModelParams mm(0.6, 0.8, static_cast<int>(n));
      for (int trial = 0; trial < 10; ++trial) {
        const TabularMechanism mech = random_tabular_mechanism(n, rng.next());
        StrategyProfile profile;
        for (std::size_t j = 0; j < n; ++j) profile.push_back(random_strategy(rng));
        const std::size_t who = rng.next() % n;
        const UtilityCoefficients c = utility_coefficients(mech, profile, who, mm);
        for (int k = 0; k < 3; ++k) {
          const Strategy dev = random_strategy(rng);
          const double via_coef = utility_from(c, dev, g);
          const double via_sum = utility_oracle(mech, who, dev, profile, mm, g);
          CHECK(via_coef == Catch::Approx(via_sum).margin(1e-12));
        }
      }
    }
  }
}

TEST_CASE("utility edge cases") {
  const ModelParams m(0.7, 0.8, 1);
  const CostFn lin = CostFn::linear(1.0);
  SECTION("staying out is worth exactly zero") {
    const TabularMechanism zero = zero_mechanism(1);
    const StrategyProfile profile{Strategy(0, 0, 0, 0)};
    CHECK(utility(zero, profile, 0, profile[0], m, lin) == 0.0);
  }
  SECTION("eps-strategy against the genie earns the floor minus the cost") {
    for (double eps : {0.5, 1.0, 3.0}) {
      const GenieMechanism genie(eps, m, lin);
      const StrategyProfile profile{eps_strategy(eps)};
      const double u = utility(genie, profile, 0, profile[0], m, lin);
      CHECK(u == Catch::Approx(v_lb(eps, m, lin) - lin(eps)).epsilon(1e-10));
    }
  }
  SECTION("full disclosure under unbounded cost is ruinous") {
    const GenieMechanism genie(1.0, m, lin);
    const StrategyProfile profile{eps_strategy(1.0)};
    const Strategy disclose(1.0, 0.0, 0.0, 1.0);
    CHECK(utility(genie, profile, 0, disclose, m, lin) ==
          -std::numeric_limits<double>::infinity());
  }
  SECTION("table costs also push full disclosure to minus infinity") {
    // Proper tables keep growing past the last knot, so the declared limit
    // at an unbounded privacy level is infinite.
    const CostFn table =
        CostFn::from_table({{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.5}});
    CHECK(table.limit_at_infinity() ==
          std::numeric_limits<double>::infinity());
    const GenieMechanism genie(1.0, m, CostFn::linear(1.0));
    const StrategyProfile profile{eps_strategy(1.0)};
    const Strategy disclose(1.0, 0.0, 0.0, 1.0);
    const UtilityCoefficients c = utility_coefficients(genie, profile, 0, m);
    CHECK(utility_from(c, disclose, table) ==
          -std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("best response") {
  SECTION("peer mechanism: the designed strategy, at the designed value") {
    for (double eps : {0.5, 1.0, 2.0}) {
      for (int n : {2, 5, 10}) {
        const ModelParams m(0.7, 0.8, n);
        const CostFn g = CostFn::linear(1.0);
        const PeerMechanism peer(eps, m, g);
        const StrategyProfile profile(static_cast<std::size_t>(n),
                                      eps_strategy(eps));
        const UtilityCoefficients c = utility_coefficients(peer, profile, 0, m);
        const BestResponse br = best_response_from(c, g);
        CHECK(br.classification == StrategyClass::symmetric);
        CHECK(br.xi == Catch::Approx(eps).margin(1e-7));
        const double e = std::exp(eps);
        const double expected =
            g.derivative(eps) * (e - 1.0 / e) / 2.0 - g(eps) + c.kbar();
        CHECK(br.utility == Catch::Approx(expected).margin(1e-8));
      }
    }
  }
  SECTION("zero mechanism: non-informative at utility zero") {
    const ModelParams m(0.6, 0.8, 2);
    const TabularMechanism zero = zero_mechanism(2);
    const StrategyProfile profile{eps_strategy(1.0), eps_strategy(1.0)};
    const BestResponse br = best_response(zero, profile, 0, m, CostFn::linear(1.0));
    CHECK(br.classification == StrategyClass::non_informative);
    CHECK(br.utility == 0.0);
  }
  SECTION("genie mechanism: the eps-strategy") {
    const ModelParams m(0.3, 0.95, 1);
    const CostFn g = CostFn::quadratic(1.0);
    const GenieMechanism genie(2.0, m, g);
    const StrategyProfile profile{eps_strategy(2.0)};
    const BestResponse br = best_response(genie, profile, 0, m, g);
    CHECK(br.classification == StrategyClass::symmetric);
    CHECK(br.xi == Catch::Approx(2.0).margin(1e-7));
  }
}

TEST_CASE("payoff curve is concave when the spread is positive") {
  SplitMix64 rng(404);
  const ModelParams m(0.6, 0.8, 2);
  const CostFn g = CostFn::quadratic(0.4);
  int tested = 0;
  while (tested < 10) {
    const TabularMechanism mech = random_tabular_mechanism(2, rng.next(), 3.0);
    const StrategyProfile profile{random_strategy(rng), random_strategy(rng)};
    const UtilityCoefficients c = utility_coefficients(mech, profile, 0, m);
    if (c.kbar1() <= c.kbar0()) continue;
    ++tested;
    const auto f = [&](double xi) {
      const double sig = 1.0 / (1.0 + std::exp(-xi));
      return c.kbar1() * sig + c.kbar0() * (1.0 - sig) + c.kbar() - g(xi);
    };
    const double h = 0.05;
    for (int k = 1; k < 120; ++k) {
      const double x = k * h;
      CHECK(f(x + h) - 2.0 * f(x) + f(x - h) <= 1e-9);
    }
  }
}

TEST_CASE("designed mechanism solves its own first-order condition") {
  // The coefficient spread implies f'(eps) = 0 exactly by construction.
  for (double eps : {0.25, 1.0, 3.0}) {
    for (int n : {2, 3, 7, 15}) {
      const ModelParams m(0.55, 0.85, n);
      const CostFn g = CostFn::linear(2.0);
      const PeerMechanism peer(eps, m, g);
      const StrategyProfile profile(static_cast<std::size_t>(n),
                                    eps_strategy(eps));
      const UtilityCoefficients c = utility_coefficients(peer, profile, 0, m);
      const double e = std::exp(eps);
      const double fprime = (c.kbar1() - c.kbar0()) * e / ((e + 1.0) * (e + 1.0)) -
                            g.derivative(eps);
      CHECK(fprime == Catch::Approx(0.0).margin(1e-8));
    }
  }
}

TEST_CASE("brute force grid agrees with the analytic search") {
  SplitMix64 rng(555);
  const ModelParams m(0.6, 0.8, 2);
  const CostFn g = CostFn::linear(0.8);
  const int resolution = 21;
  const double spacing = 1.0 / (resolution - 1);
  for (int trial = 0; trial < 20; ++trial) {
    const TabularMechanism mech = random_tabular_mechanism(2, rng.next(), 2.0);
    const StrategyProfile profile{random_strategy(rng), random_strategy(rng)};
    const UtilityCoefficients c = utility_coefficients(mech, profile, 0, m);
    const BestResponse analytic = best_response_from(c, g);
    const BestResponse brute =
        brute_force_best_response(mech, profile, 0, m, g, resolution);

    // The grid never beats the true optimum.
    CHECK(brute.utility <= analytic.utility + 1e-9);
    // And it is at least as good as the grid point nearest the optimum.
    Strategy snapped;
    const auto snap = [&](double v) {
      return std::min(1.0, std::round(v / spacing) * spacing);
    };
    snapped.p1 = snap(analytic.strategy.p1);
    snapped.q1 = std::min(snap(analytic.strategy.q1), 1.0 - snapped.p1);
    snapped.p0 = snap(analytic.strategy.p0);
    snapped.q0 = std::min(snap(analytic.strategy.q0), 1.0 - snapped.p0);
    CHECK(brute.utility >= utility_from(c, snapped, g) - 1e-12);
    // Structure: the winner sits next to one of the equilibrium families.
    CHECK(equilibrium_manifold_distance(brute.strategy) <= spacing + 1e-12);
  }
}

TEST_CASE("grid argmax against designed mechanisms sits on the manifolds") {
  SECTION("genie mechanism: exactly symmetric") {
    const ModelParams m(0.7, 0.8, 1);
    const CostFn g = CostFn::linear(1.0);
    const GenieMechanism genie(1.0, m, g);
    const StrategyProfile profile{eps_strategy(1.0)};
    const BestResponse brute =
        brute_force_best_response(genie, profile, 0, m, g, 41);
    CHECK(equilibrium_manifold_distance(brute.strategy) <= 1e-15);
    CHECK(symmetric_distance(brute.strategy) <= 1e-15);
    CHECK(brute.classification == StrategyClass::symmetric);
  }
  SECTION("zero mechanism: a zero-cost point") {
    const ModelParams m(0.7, 0.8, 1);
    const CostFn g = CostFn::linear(1.0);
    const TabularMechanism zero(1, std::vector<double>(3, 0.0));
    const StrategyProfile profile{eps_strategy(1.0)};
    const BestResponse brute =
        brute_force_best_response(zero, profile, 0, m, g, 21);
    CHECK(brute.utility == 0.0);
    CHECK(equilibrium_manifold_distance(brute.strategy) == 0.0);
  }
}

TEST_CASE("nash verification") {
  SECTION("designed equilibrium verifies") {
    const ModelParams m(0.7, 0.8, 5);
    const CostFn g = CostFn::linear(1.0);
    const PeerMechanism peer(1.0, m, g);
    const StrategyProfile profile(5, eps_strategy(1.0));
    const EquilibriumReport rep = verify_nash(peer, profile, m, {g});
    CHECK(rep.is_nash);
    CHECK(rep.max_gain <= 1e-6);
    CHECK(rep.max_gain >= -1e-6);
    for (const auto& r : rep.individuals)
      CHECK(r.classification == StrategyClass::symmetric);
  }
  SECTION("informative reporting for free is not an equilibrium") {
    const ModelParams m(0.7, 0.8, 2);
    const CostFn g = CostFn::linear(1.0);
    const TabularMechanism zero = zero_mechanism(2);
    const StrategyProfile profile(2, eps_strategy(1.0));
    const EquilibriumReport rep = verify_nash(zero, profile, m, {g});
    CHECK_FALSE(rep.is_nash);
    CHECK(rep.max_gain == Catch::Approx(g(1.0)).margin(1e-9));
  }
  SECTION("heterogeneous costs keep the designed equilibrium") {
    const ModelParams m(0.6, 0.85, 3);
    const CostProfile costs{CostFn::linear(1.0), CostFn::linear(3.0),
                            CostFn::quadratic(0.7)};
    const PeerMechanism peer(0.8, m, costs);
    const StrategyProfile profile(3, eps_strategy(0.8));
    const EquilibriumReport rep = verify_nash(peer, profile, m, costs);
    CHECK(rep.is_nash);
  }
  SECTION("flip transform preserves verdicts and payments") {
    SplitMix64 rng(909);
    const ModelParams m(0.6, 0.75, 2);
    const CostFn g = CostFn::linear(0.5);
    const double eps = 0.7;
    for (int trial = 0; trial < 10; ++trial) {
      const TabularMechanism r = random_tabular_mechanism(2, rng.next(), 2.0);
      const TabularMechanism flipped = flip_mechanism(r, 0);
      const StrategyProfile neg{eps_strategy(-eps), random_strategy(rng)};
      const StrategyProfile pos{eps_strategy(eps), neg[1]};
      const EquilibriumReport before = verify_nash(r, neg, m, {g});
      const EquilibriumReport after = verify_nash(flipped, pos, m, {g});
      CHECK(before.is_nash == after.is_nash);
      CHECK(before.max_gain == Catch::Approx(after.max_gain).margin(1e-9));
      for (std::size_t i = 0; i < 2; ++i)
        CHECK(before.individuals[i].profile_utility ==
              Catch::Approx(after.individuals[i].profile_utility).margin(1e-9));
    }
  }
  SECTION("ruinous profile strategies are never an equilibrium") {
    const ModelParams m(0.7, 0.8, 1);
    const CostFn g = CostFn::linear(1.0);
    const GenieMechanism genie(1.0, m, g);
    const StrategyProfile disclose{Strategy(1.0, 0.0, 0.0, 1.0)};
    const EquilibriumReport rep = verify_nash(genie, disclose, m, {g});
    CHECK_FALSE(rep.is_nash);
    CHECK(rep.max_gain == std::numeric_limits<double>::infinity());
  }
  SECTION("verdict is stable under genie replication") {
    SplitMix64 rng(13);
    const ModelParams m(0.7, 0.8, 3);
    const CostFn g = CostFn::linear(0.6);
    for (int trial = 0; trial < 6; ++trial) {
      const TabularMechanism r = random_tabular_mechanism(3, rng.next(), 2.0);
      StrategyProfile profile;
      for (int j = 0; j < 3; ++j) profile.push_back(random_strategy(rng));
      const GenieTableMechanism replica = genie_replicate(r, profile, m);
      const EquilibriumReport a = verify_nash(r, profile, m, {g});
      const EquilibriumReport b = verify_nash(replica, profile, m, {g});
      CHECK(a.is_nash == b.is_nash);
      CHECK(a.max_gain == Catch::Approx(b.max_gain).margin(1e-9));
    }
  }
}

TEST_CASE("strategy classification distances") {
  CHECK(symmetric_distance(eps_strategy(1.3)) == Catch::Approx(0.0).margin(1e-15));
  CHECK(non_informative_distance(Strategy(0.3, 0.5, 0.3, 0.5)) == 0.0);
  CHECK(nonparticipation_distance(Strategy(0, 0, 0, 0)) == 0.0);
  const Strategy s(0.9, 0.1, 0.2, 0.8);
  CHECK(symmetric_distance(s) == Catch::Approx(0.05).margin(1e-12));
  CHECK(classify_nearest(s) == StrategyClass::symmetric);
  CHECK(classify_nearest(Strategy(0.4, 0.4, 0.4, 0.4)) ==
        StrategyClass::non_informative);
  CHECK(classify_nearest(Strategy(0, 0, 0, 0)) ==
        StrategyClass::nonparticipation);
}
