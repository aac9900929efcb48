#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace privmark {

/// Violation of a structural assumption the mechanism design relies on.
class internal_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

/// Compensated accumulator (Kahan-Babuska) for order-stable sums.
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// ln C(n, k) via lgamma.
inline double log_binom(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

/// Pr(Bin(n, p) >= k0). Terms are evaluated in log space and accumulated
/// smallest-first (the tail is unimodal, so a two-pointer sweep from both
/// ends orders them by magnitude) with compensation. A tail holding most of
/// the mass is computed through its small complement: summing thousands of
/// terms that total about one otherwise costs eleven digits of the gap
/// between the tail and certainty.
inline double binomial_tail_at_least(std::int64_t n, std::int64_t k0, double p) {
  if (k0 <= 0) return 1.0;
  if (k0 > n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  if (static_cast<double>(k0) <= static_cast<double>(n) * p)
    return 1.0 - binomial_tail_at_least(n, n - k0 + 1, 1.0 - p);
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n - k0 + 1));
  for (std::int64_t k = k0; k <= n; ++k)
    terms.push_back(std::exp(log_binom(n, k) + static_cast<double>(k) * lp +
                             static_cast<double>(n - k) * lq));
  KahanSum acc;
  std::size_t lo = 0, hi = terms.size();
  while (lo < hi) {
    if (terms[lo] <= terms[hi - 1])
      acc.add(terms[lo++]);
    else
      acc.add(terms[--hi]);
  }
  return std::min(1.0, acc.value());
}

/// C(n, k) p^k (1-p)^(n-k) for a single k.
inline double binomial_pmf(std::int64_t n, std::int64_t k, double p) {
  if (k < 0 || k > n) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  return std::exp(log_binom(n, k) + static_cast<double>(k) * std::log(p) +
                  static_cast<double>(n - k) * std::log1p(-p));
}

struct ScalarMax {
  double x = 0.0;
  double value = 0.0;
};

/// Golden-section maximization of a unimodal function on [lo, hi].
template <typename F>
ScalarMax golden_section_max(F&& f, double lo, double hi, double xtol = 1e-10) {
  constexpr double invphi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > xtol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    }
  }
  const double xm = 0.5 * (a + b);
  const double fm = f(xm);
  ScalarMax best{xm, fm};
  if (f1 > best.value) best = {x1, f1};
  if (f2 > best.value) best = {x2, f2};
  // Endpoints of the original bracket are legal optima too.
  const double fl = f(lo), fh = f(hi);
  if (fl > best.value) best = {lo, fl};
  if (fh > best.value) best = {hi, fh};
  return best;
}

}  // namespace detail
}  // namespace privmark
