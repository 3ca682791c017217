#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "entlab/errors.hpp"
#include "entlab/quadrature.hpp"
#include "entlab/rng.hpp"

// Probability models for the site potential, living on [0,inf) (or shifted
// copies of it). Besides pdf/sampling this module carries the information
// functional F(t) = J(t) - 1 with J(t) = integral of f^2(v-t)/f(v), the
// Jensen lower bound for J, and the Hammersley-Chapman-Robbins style
// variance bound A built from F and a measured mean.

namespace entlab::densities {

enum class DensityKind {
  kExponential,
  kShiftedExponential,
  kHalfGaussian,
  kTabulated,
  kZero,  // point mass at 0; test/clean-system contrast only, no density
};

class DensityModel {
 public:
  // f(v) = a e^{-a v} on [0,inf).
  static DensityModel exponential(double rate, double kappa = 1.0) {
    if (!(rate > 0.0)) throw ConfigError("exponential density: rate must be > 0");
    DensityModel m(DensityKind::kExponential, kappa);
    m.rate_ = rate;
    return m;
  }

  // f(v) = a e^{-a (v-offset)} on [offset,inf), offset >= 0.
  static DensityModel shifted_exponential(double rate, double offset,
                                          double kappa = 1.0) {
    if (!(rate > 0.0)) {
      throw ConfigError("shifted_exponential density: rate must be > 0");
    }
    if (!(offset >= 0.0)) {
      throw ConfigError("shifted_exponential density: offset must be >= 0");
    }
    DensityModel m(DensityKind::kShiftedExponential, kappa);
    m.rate_ = rate;
    m.offset_ = offset;
    return m;
  }

  // f(v) = sqrt(2/pi)/sigma e^{-v^2/(2 sigma^2)} on [0,inf).
  static DensityModel half_gaussian(double scale, double kappa = 2.0) {
    if (!(scale > 0.0)) {
      throw ConfigError("half_gaussian density: scale must be > 0");
    }
    DensityModel m(DensityKind::kHalfGaussian, kappa);
    m.scale_ = scale;
    return m;
  }

  // Piecewise-linear density on a strictly increasing grid, renormalized and
  // extended past the last grid point with a fitted exponential tail so the
  // support is unbounded (compactly supported f breaks F(t)).
  static DensityModel tabulated(std::vector<double> grid,
                                std::vector<double> values, double kappa = 1.0,
                                std::ostream* warnings = nullptr) {
    DensityModel m(DensityKind::kTabulated, kappa);
    m.init_tabulated(std::move(grid), std::move(values), warnings);
    return m;
  }

  static DensityModel load_tabulated(const std::string& path, double kappa = 1.0,
                                     std::ostream* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw ConfigError("density file not readable: " + path);
    std::vector<double> grid;
    std::vector<double> values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream row(line);
      double v = 0.0;
      double f = 0.0;
      if (!(row >> v >> f)) {
        throw ConfigError("density file " + path + ": line " +
                          std::to_string(lineno) +
                          " is not two numeric columns");
      }
      grid.push_back(v);
      values.push_back(f);
    }
    return tabulated(std::move(grid), std::move(values), kappa, warnings);
  }

  // Point mass at 0. Samplable (always 0) so clean-system contrast runs work,
  // but it has no density: pdf/F/moment queries are rejected.
  static DensityModel zero() { return DensityModel(DensityKind::kZero, 1.0); }

  DensityKind kind() const { return kind_; }
  double kappa() const { return kappa_; }
  double rate() const { return rate_; }
  double offset() const { return offset_; }
  double scale() const { return scale_; }

  bool has_pdf() const { return kind_ != DensityKind::kZero; }

  // Smallest v with f(v) > 0.
  double support_lower() const {
    switch (kind_) {
      case DensityKind::kShiftedExponential:
        return offset_;
      case DensityKind::kTabulated:
        return grid_.front();
      default:
        return 0.0;
    }
  }

  double pdf(double v) const {
    require_pdf("pdf");
    if (v < support_lower()) return 0.0;
    switch (kind_) {
      case DensityKind::kExponential:
        return rate_ * std::exp(-rate_ * v);
      case DensityKind::kShiftedExponential:
        return rate_ * std::exp(-rate_ * (v - offset_));
      case DensityKind::kHalfGaussian:
        return kSqrt2OverPi / scale_ * std::exp(-0.5 * (v / scale_) * (v / scale_));
      case DensityKind::kTabulated:
        return tabulated_pdf(v);
      case DensityKind::kZero:
        break;
    }
    throw ConfigError("pdf: unsupported density kind");
  }

  // log f(v), -inf where f vanishes. The F integrand is assembled in log
  // space so the ratio f^2(v-t)/f(v) neither under- nor overflows spuriously.
  double log_pdf(double v) const {
    require_pdf("log_pdf");
    if (v < support_lower()) return -std::numeric_limits<double>::infinity();
    switch (kind_) {
      case DensityKind::kExponential:
        return std::log(rate_) - rate_ * v;
      case DensityKind::kShiftedExponential:
        return std::log(rate_) - rate_ * (v - offset_);
      case DensityKind::kHalfGaussian:
        return std::log(kSqrt2OverPi / scale_) - 0.5 * (v / scale_) * (v / scale_);
      case DensityKind::kTabulated: {
        const double f = tabulated_pdf(v);
        return f > 0.0 ? std::log(f)
                       : -std::numeric_limits<double>::infinity();
      }
      case DensityKind::kZero:
        break;
    }
    throw ConfigError("log_pdf: unsupported density kind");
  }

  // Mass of f above t (exact for the closed-form kinds).
  double tail_mass(double t) const {
    require_pdf("tail_mass");
    const double lo = support_lower();
    if (t <= lo) return 1.0;
    switch (kind_) {
      case DensityKind::kExponential:
        return std::exp(-rate_ * t);
      case DensityKind::kShiftedExponential:
        return std::exp(-rate_ * (t - offset_));
      case DensityKind::kHalfGaussian:
        return std::erfc(t / (scale_ * kSqrt2));
      case DensityKind::kTabulated:
        return tabulated_tail_mass(t);
      case DensityKind::kZero:
        break;
    }
    throw ConfigError("tail_mass: unsupported density kind");
  }

  // Inverse-CDF sampling; u must lie in (0,1).
  double sample(double u) const {
    if (!(u > 0.0 && u < 1.0)) {
      throw DomainError("DensityModel::sample: u must lie in (0,1)");
    }
    switch (kind_) {
      case DensityKind::kExponential:
        return -std::log1p(-u) / rate_;
      case DensityKind::kShiftedExponential:
        return offset_ - std::log1p(-u) / rate_;
      case DensityKind::kHalfGaussian:
        // V = sigma |Z| has CDF erf(v / (sigma sqrt,2)); invert through the
        // normal quantile: v = sigma * Phi^{-1}((u+1)/2).
        return scale_ * rng::inverse_normal_cdf(0.5 * (u + 1.0));
      case DensityKind::kTabulated:
        return tabulated_sample(u);
      case DensityKind::kZero:
        return 0.0;
    }
    throw ConfigError("sample: unsupported density kind");
  }

  double sup_pdf() const {
    require_pdf("sup_pdf");
    switch (kind_) {
      case DensityKind::kExponential:
      case DensityKind::kShiftedExponential:
        return rate_;
      case DensityKind::kHalfGaussian:
        return kSqrt2OverPi / scale_;
      case DensityKind::kTabulated: {
        double m = tail_start_value_;
        for (double f : values_) m = std::max(m, f);
        return m;
      }
      case DensityKind::kZero:
        break;
    }
    throw ConfigError("sup_pdf: unsupported density kind");
  }

  // Numerical integral of v^kappa f(v); finite for every honest model
  // (the tabulated kind decays exponentially past the grid by construction).
  double kappa_moment() const {
    require_pdf("kappa_moment");
    const auto integrand = [this](double v) {
      return v <= 0.0 ? 0.0 : std::pow(v, kappa_) * pdf(v);
    };
    const auto r = quadrature::integrate_to_infinity(
        integrand, support_lower(), 1e-10, scale_hint());
    return r.value;
  }

  // Type invariants: normalization within 1e-8, bounded density, positive
  // support density, finite kappa-moment. Throws ConfigError on violation.
  void validate() const {
    if (kind_ == DensityKind::kZero) {
      throw ConfigError(
          "density kind 'zero' is a point mass used for clean-system "
          "contrast runs; it has no density and fails the model hypotheses");
    }
    const auto mass = quadrature::integrate_to_infinity(
        [this](double v) { return pdf(v); }, support_lower(), 1e-11,
        scale_hint());
    if (std::abs(mass.value - 1.0) > 1e-8) {
      throw ConfigError("density normalization off by " +
                        std::to_string(mass.value - 1.0));
    }
    if (!std::isfinite(sup_pdf())) {
      throw ConfigError("density is unbounded");
    }
    if (kind_ == DensityKind::kTabulated) {
      // No interior zeros: ratios f(v-t)^2/f(v) must stay finite.
      for (std::size_t i = 0; i + 1 < values_.size(); ++i) {
        if (!(values_[i] > 0.0) || !(values_[i + 1] > 0.0)) {
          throw ConfigError(
              "tabulated density has zeros inside its grid; interior zeros "
              "are not supported");
        }
      }
    }
    const double moment = kappa_moment();
    if (!std::isfinite(moment)) {
      throw ConfigError("kappa-moment diverges for declared kappa");
    }
  }

  std::string describe() const {
    std::ostringstream out;
    switch (kind_) {
      case DensityKind::kExponential:
        out << "exponential(rate=" << rate_ << ")";
        break;
      case DensityKind::kShiftedExponential:
        out << "shifted_exponential(rate=" << rate_ << ",offset=" << offset_
            << ")";
        break;
      case DensityKind::kHalfGaussian:
        out << "half_gaussian(scale=" << scale_ << ")";
        break;
      case DensityKind::kTabulated:
        out << "tabulated(points=" << grid_.size()
            << ",tail_rate=" << tail_rate_ << ")";
        break;
      case DensityKind::kZero:
        out << "zero";
        break;
    }
    return out.str();
  }

  // Characteristic length of the density, used to size quadrature windows.
  double scale_hint() const {
    switch (kind_) {
      case DensityKind::kExponential:
      case DensityKind::kShiftedExponential:
        return 1.0 / rate_;
      case DensityKind::kHalfGaussian:
        return scale_;
      case DensityKind::kTabulated:
        return std::max(1.0 / tail_rate_,
                        (grid_.back() - grid_.front()) / 8.0);
      default:
        return 1.0;
    }
  }

 private:
  explicit DensityModel(DensityKind kind, double kappa)
      : kind_(kind), kappa_(kappa) {
    if (!(kappa > 0.0)) throw ConfigError("density: kappa must be > 0");
  }

  void require_pdf(const char* op) const {
    if (kind_ == DensityKind::kZero) {
      throw ConfigError(std::string(op) +
                        ": density kind 'zero' has no density function");
    }
  }

  void init_tabulated(std::vector<double> grid, std::vector<double> values,
                      std::ostream* warnings) {
    if (grid.size() < 4 || grid.size() != values.size()) {
      throw ConfigError(
          "tabulated density needs at least 4 matching (v, f) rows");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (i > 0 && !(grid[i] > grid[i - 1])) {
        throw ConfigError("tabulated density grid must be strictly increasing");
      }
      if (!(values[i] >= 0.0)) {
        throw ConfigError("tabulated density values must be non-negative");
      }
    }
    if (!(grid.front() >= 0.0)) {
      throw ConfigError("tabulated density grid must start at v >= 0");
    }
    if (!(values.back() > 0.0)) {
      throw ConfigError(
          "tabulated density must end with a positive value so an "
          "exponential tail can be attached");
    }
    grid_ = std::move(grid);
    values_ = std::move(values);

    // Fit the tail rate by least squares on log f over the last quarter of
    // the grid (at least 3 points); the tail continues f past the grid end.
    const std::size_t n = grid_.size();
    std::size_t tail_from = n - std::max<std::size_t>(3, n / 4);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t m = 0;
    for (std::size_t i = tail_from; i < n; ++i) {
      if (!(values_[i] > 0.0)) continue;
      const double x = grid_[i];
      const double y = std::log(values_[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++m;
    }
    if (m < 2) {
      throw ConfigError("tabulated density tail has too few positive values");
    }
    const double denom = static_cast<double>(m) * sxx - sx * sx;
    const double slope = denom != 0.0
                             ? (static_cast<double>(m) * sxy - sx * sy) / denom
                             : 0.0;
    tail_rate_ = -slope;
    if (!(tail_rate_ > 1e-8)) {
      throw ConfigError(
          "tabulated density tail is not decaying; cannot extend with an "
          "exponential tail");
    }
    tail_start_value_ = values_.back();

    // Raw mass: trapezoid over the grid plus the analytic tail.
    double mass = 0.0;
    cdf_.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      mass += 0.5 * (values_[i] + values_[i - 1]) * (grid_[i] - grid_[i - 1]);
      cdf_[i] = mass;
    }
    const double tail = tail_start_value_ / tail_rate_;
    const double total = mass + tail;
    if (!(total > 0.0)) {
      throw ConfigError("tabulated density has zero total mass");
    }
    if (std::abs(total - 1.0) > 1e-3 && warnings) {
      *warnings << "note: tabulated density mass was " << total
                << "; renormalizing\n";
    }
    for (double& f : values_) f /= total;
    for (double& c : cdf_) c /= total;
    tail_start_value_ /= total;
  }

  double tabulated_pdf(double v) const {
    if (v < grid_.front()) return 0.0;
    if (v >= grid_.back()) {
      return tail_start_value_ * std::exp(-tail_rate_ * (v - grid_.back()));
    }
    const auto it = std::upper_bound(grid_.begin(), grid_.end(), v);
    const std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
    const std::size_t lo = hi - 1;
    const double w = (v - grid_[lo]) / (grid_[hi] - grid_[lo]);
    return values_[lo] + w * (values_[hi] - values_[lo]);
  }

  double tabulated_tail_mass(double t) const {
    if (t <= grid_.front()) return 1.0;
    if (t >= grid_.back()) {
      return tail_start_value_ / tail_rate_ *
             std::exp(-tail_rate_ * (t - grid_.back()));
    }
    const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
    const std::size_t lo = hi - 1;
    const double ft = tabulated_pdf(t);
    const double below =
        cdf_[lo] + 0.5 * (values_[lo] + ft) * (t - grid_[lo]);
    const double grid_mass = cdf_.back();
    const double tail = tail_start_value_ / tail_rate_;
    return grid_mass - below + tail;
  }

  double tabulated_sample(double u) const {
    const double grid_mass = cdf_.back();
    if (u > grid_mass) {
      // Tail segment: invert the exponential tail CDF.
      const double remaining = u - grid_mass;
      const double arg = 1.0 - remaining * tail_rate_ / tail_start_value_;
      if (!(arg > 0.0)) {
        // Only reachable through rounding at u -> 1; clamp far into the tail.
        return grid_.back() + 60.0 / tail_rate_;
      }
      return grid_.back() - std::log(arg) / tail_rate_;
    }
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t hi = static_cast<std::size_t>(it - cdf_.begin());
    hi = std::min(hi, cdf_.size() - 1);
    if (hi == 0) return grid_.front();
    const std::size_t lo = hi - 1;
    const double dv = grid_[hi] - grid_[lo];
    const double f0 = values_[lo];
    const double slope = (values_[hi] - values_[lo]) / dv;
    const double target = u - cdf_[lo];
    // CDF within the segment is quadratic: f0*x + slope*x^2/2 = target.
    double x;
    if (std::abs(slope) * dv < 1e-12 * std::max(f0, 1e-300)) {
      x = f0 > 0.0 ? target / f0 : 0.0;
    } else {
      const double disc = f0 * f0 + 2.0 * slope * target;
      x = (-f0 + std::sqrt(std::max(disc, 0.0))) / slope;
    }
    x = std::clamp(x, 0.0, dv);
    return grid_[lo] + x;
  }

  static constexpr double kSqrt2 = 1.4142135623730951;
  static constexpr double kSqrt2OverPi = 0.7978845608028654;  // sqrt(2/pi)

  DensityKind kind_;
  double kappa_;
  double rate_ = 1.0;
  double offset_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> grid_;
  std::vector<double> values_;
  std::vector<double> cdf_;
  double tail_rate_ = 0.0;
  double tail_start_value_ = 0.0;
};

// J(t) = integral over [t+lo, inf) of f^2(v-t)/f(v); evaluated in log space.
inline double J_of_t(const DensityModel& model, double t) {
  if (!(t > 0.0)) throw DomainError("J_of_t: t must be > 0");
  if (!model.has_pdf()) {
    throw ConfigError("J_of_t: density kind 'zero' has no density function");
  }
  const double lo = model.support_lower();
  const auto integrand = [&model, t](double v) {
    const double num = model.log_pdf(v - t);
    if (num == -std::numeric_limits<double>::infinity()) return 0.0;
    const double den = model.log_pdf(v);
    return std::exp(2.0 * num - den);
  };
  try {
    const auto r = quadrature::integrate_to_infinity(
        integrand, lo + t, 1e-10, std::max(model.scale_hint(), 0.25 * t));
    return r.value;
  } catch (const NumericalError& err) {
    throw NumericalError(std::string("F_of_t: F(t) undefined for this "
                                     "density/t (") +
                         err.what() + ")");
  }
}

// F(t) = J(t) - 1 >= 0; tiny negative values from quadrature round-off are
// clamped, anything below -1e-8 is treated as a numerical failure.
inline double F_of_t(const DensityModel& model, double t) {
  const double f = J_of_t(model, t) - 1.0;
  if (f < -1e-8) {
    throw NumericalError("F_of_t: quadrature returned J(t) < 1");
  }
  return std::max(f, 0.0);
}

// Jensen's inequality gives J(t) >= 1 / (mass of f above t). Exact for the
// exponential kind. Returns +inf when the tail mass underflows.
inline double jensen_lower_bound(const DensityModel& model, double t) {
  if (!(t > 0.0)) throw DomainError("jensen_lower_bound: t must be > 0");
  const double tail = model.tail_mass(t);
  if (tail <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / tail;
}

struct HcrBound {
  double t0 = 0.0;           // maximizing shift on the supplied grid
  double F_value = 0.0;      // F(t0)
  double mean_S_minus = 0.0; // effective mean: E{S-} * (1 - eps(t0))
  double A = 0.0;            // mean_S_minus^2 / F_value
  bool degenerate = false;   // mean <= 0, no usable bound
};

// Variance lower bound A = (E{S-}(1-eps(t)))^2 / F(t), maximized over the
// grid. When no measured eps curve is supplied, the conservative eps = 0 is
// used at the largest grid t only (eps(t) -> 0 for large t). Grid points
// where F is undefined are skipped; if all fail, a NumericalError is thrown.
inline HcrBound hcr_bound(double mean_S_minus, const DensityModel& model,
                          std::span<const double> t_grid,
                          std::span<const double> eps_measured = {}) {
  if (t_grid.empty()) throw DomainError("hcr_bound: empty t grid");
  if (!eps_measured.empty() && eps_measured.size() != t_grid.size()) {
    throw DomainError("hcr_bound: eps grid size must match t grid");
  }
  HcrBound best;
  if (!(mean_S_minus > 0.0)) {
    best.degenerate = true;
    return best;
  }

  std::size_t usable = 0;
  std::size_t first = 0;
  std::size_t count = t_grid.size();
  if (eps_measured.empty()) {
    // No eps information: only the largest t is admissible.
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < count; ++i) {
      if (t_grid[i] > t_grid[argmax]) argmax = i;
    }
    first = argmax;
    count = argmax + 1;
  }
  for (std::size_t i = first; i < count; ++i) {
    const double t = t_grid[i];
    double F;
    try {
      F = F_of_t(model, t);
    } catch (const NumericalError&) {
      continue;
    }
    if (!(F > 0.0)) continue;
    const double eps = eps_measured.empty() ? 0.0 : eps_measured[i];
    const double effective_mean = mean_S_minus * (1.0 - eps);
    const double a = effective_mean * effective_mean / F;
    ++usable;
    if (a > best.A) {
      best.t0 = t;
      best.F_value = F;
      best.mean_S_minus = effective_mean;
      best.A = a;
    }
  }
  if (usable == 0) {
    throw NumericalError("hcr_bound: F(t) undefined on the whole grid");
  }
  return best;
}

struct HcrToyCheck {
  double lhs_variance = 0.0;
  double rhs_bound = 0.0;
  double lhs_stderr = 0.0;
  bool holds = false;
};

// Monte Carlo check of the variance inequality for the identity map:
// Var{xi} >= t^2 / F(t). Throws if the inequality fails beyond 3 standard
// errors of the sample variance; that would mean F itself is wrong.
inline HcrToyCheck hcr_toy_check(const DensityModel& model, double t,
                                 std::int64_t n, std::uint64_t seed) {
  if (n < 1000) throw DomainError("hcr_toy_check: n must be >= 1000");
  const double F = F_of_t(model, t);
  if (!(F > 0.0)) throw NumericalError("hcr_toy_check: F(t) is zero");

  std::vector<double> xs(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    xs[static_cast<std::size_t>(i)] =
        model.sample(rng::uniform_open(seed, static_cast<std::uint64_t>(i),
                                       0, 0));
  }
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double m2 = 0.0;
  double m4 = 0.0;
  for (double x : xs) {
    const double d = x - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  const double var = m2 / static_cast<double>(n - 1);
  m2 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  // Standard error of the sample variance from the fourth central moment.
  const double var_of_var =
      std::max(m4 - m2 * m2, 0.0) / static_cast<double>(n);

  HcrToyCheck out;
  out.lhs_variance = var;
  out.rhs_bound = t * t / F;
  out.lhs_stderr = std::sqrt(var_of_var);
  out.holds = out.lhs_variance >= out.rhs_bound - 3.0 * out.lhs_stderr;
  if (!out.holds) {
    throw NumericalError(
        "hcr_toy_check: variance inequality violated beyond 3 standard "
        "errors; F(t) is inconsistent");
  }
  return out;
}

}  // namespace entlab::densities
