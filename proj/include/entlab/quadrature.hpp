#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "entlab/errors.hpp"

// Adaptive Gauss-Kronrod quadrature (7-15 pair) on finite intervals, plus a
// semi-infinite driver that extends the integration window until the tail is
// negligible relative to the accumulated value. Used for density integrals:
// normalization checks, kappa-moments, and the information functional F(t).

namespace entlab::quadrature {

struct QuadResult {
  double value = 0.0;
  double abs_error = 0.0;
  long evaluations = 0;
  bool converged = false;
};

namespace detail {

// Kronrod 15-point abscissae and weights with the embedded Gauss 7 rule
// (positive half; the rule is symmetric).
inline constexpr double kXgk[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
    0.7415311855993944, 0.5860872354676911, 0.4058451513773972,
    0.2077849550078985, 0.0};
inline constexpr double kWgk[8] = {
    0.2293532201052922e-1, 0.6309209262997855e-1, 0.1047900103222502,
    0.1406532597155259,    0.1690047266392679,    0.1903505780647854,
    0.2044329400752989,    0.2094821410847278};
inline constexpr double kWg[4] = {0.1294849661688697, 0.2797053914892767,
                                  0.3818300505051189, 0.4179591836734694};

struct Interval {
  double a;
  double b;
  double value;
  double error;
};

template <typename F>
inline Interval gauss_kronrod_15(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);

  double result_gauss = kWg[3] * f(center);
  double result_kronrod = kWgk[7] * f(center);
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double fsum = f(center - dx) + f(center + dx);
    result_kronrod += kWgk[j] * fsum;
    if (j % 2 == 1) result_gauss += kWg[j / 2] * fsum;
  }
  Interval out;
  out.a = a;
  out.b = b;
  out.value = result_kronrod * half;
  out.error = std::abs((result_kronrod - result_gauss) * half);
  return out;
}

}  // namespace detail

// Adaptive bisection on [a,b]: repeatedly split the interval with the largest
// error estimate until the summed error meets max(abs_tol, rel_tol*|value|)
// or the subdivision budget runs out.
template <typename F>
inline QuadResult integrate(const F& f, double a, double b,
                            double rel_tol = 1e-12, double abs_tol = 1e-14,
                            std::size_t max_intervals = 4000) {
  QuadResult out;
  if (!(b > a)) {
    out.converged = true;
    return out;
  }
  std::vector<detail::Interval> segs;
  segs.push_back(detail::gauss_kronrod_15(f, a, b));
  out.evaluations = 15;

  while (true) {
    double total = 0.0;
    double err = 0.0;
    for (const auto& s : segs) {
      total += s.value;
      err += s.error;
    }
    if (!std::isfinite(total)) {
      throw NumericalError("integrate: integrand produced a non-finite value");
    }
    const double target = std::max(abs_tol, rel_tol * std::abs(total));
    if (err <= target) {
      out.value = total;
      out.abs_error = err;
      out.converged = true;
      return out;
    }
    if (segs.size() >= max_intervals) {
      out.value = total;
      out.abs_error = err;
      out.converged = false;
      return out;
    }
    std::size_t worst = 0;
    for (std::size_t i = 1; i < segs.size(); ++i) {
      if (segs[i].error > segs[worst].error) worst = i;
    }
    const detail::Interval seg = segs[worst];
    const double mid = 0.5 * (seg.a + seg.b);
    if (!(seg.a < mid && mid < seg.b)) {
      // Interval collapsed to machine resolution; accept what we have.
      out.value = 0.0;
      for (const auto& s : segs) out.value += s.value;
      out.abs_error = err;
      out.converged = false;
      return out;
    }
    segs[worst] = detail::gauss_kronrod_15(f, seg.a, mid);
    segs.push_back(detail::gauss_kronrod_15(f, mid, seg.b));
    out.evaluations += 30;
  }
}

// Integrate f over [a, infinity). Walks chunks of doubling width, each
// integrated adaptively, and stops once two consecutive chunks contribute
// less than `tail_tol` of the accumulated absolute value, so the neglected
// tail is provably below that fraction for integrands that keep decaying.
// Throws if the chunk budget is exhausted before the tail dies off.
template <typename F>
inline QuadResult integrate_to_infinity(const F& f, double a,
                                        double rel_tol = 1e-10,
                                        double initial_width = 1.0,
                                        double tail_tol = 1e-12,
                                        int max_chunks = 64) {
  QuadResult out;
  double lo = a;
  double width = std::max(initial_width, 1e-6);
  double accumulated_abs = 0.0;
  int negligible_in_a_row = 0;

  for (int chunk = 0; chunk < max_chunks; ++chunk) {
    const double hi = lo + width;
    QuadResult piece = integrate(f, lo, hi, rel_tol, 1e-300);
    out.evaluations += piece.evaluations;
    if (!piece.converged && std::abs(piece.value) >
                                tail_tol * std::max(accumulated_abs, 1e-300)) {
      throw NumericalError(
          "integrate_to_infinity: chunk failed to converge before the tail "
          "became negligible");
    }
    out.value += piece.value;
    out.abs_error += piece.abs_error;
    accumulated_abs += std::abs(piece.value);

    const double scale = std::max(accumulated_abs, 1e-300);
    if (std::abs(piece.value) <= tail_tol * scale) {
      ++negligible_in_a_row;
      if (negligible_in_a_row >= 2) {
        out.converged = true;
        return out;
      }
    } else {
      negligible_in_a_row = 0;
    }
    lo = hi;
    width *= 2.0;
  }
  throw NumericalError(
      "integrate_to_infinity: tail did not become negligible within the "
      "window budget");
}

}  // namespace entlab::quadrature
