#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "entlab/errors.hpp"
#include "entlab/rng.hpp"

// Sample statistics for ensemble runs: stable single-pass mean/variance,
// percentile bootstrap CIs for both the mean and the variance (entropy
// distributions are skewed, and the headline claim is about the variance,
// so the variance gets its own interval), and a digest of the raw samples
// for reproducibility audits.

namespace entlab::stats {

struct EnsembleStats {
  std::int64_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased (Bessel-corrected)
  double stderr_mean = 0.0;
  double mean_ci_lo = 0.0;
  double mean_ci_hi = 0.0;
  double variance_ci_lo = 0.0;
  double variance_ci_hi = 0.0;
  std::uint64_t samples_digest = 0;
};

namespace detail {

// Welford's single-pass recurrence with Neumaier compensation on the M2
// accumulator; matches the two-pass formula to ~1e-12 * mean^2.
struct Welford {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double m2_comp = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    const double term = delta * (x - mean);
    const double sum = m2 + term;
    if (std::abs(m2) >= std::abs(term)) {
      m2_comp += (m2 - sum) + term;
    } else {
      m2_comp += (term - sum) + m2;
    }
    m2 = sum;
  }

  double variance_unbiased() const {
    if (n < 2) return 0.0;
    return std::max((m2 + m2_comp) / static_cast<double>(n - 1), 0.0);
  }
};

inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

}  // namespace detail

// FNV-1a over the raw bytes of the samples in index order.
inline std::uint64_t samples_digest(std::span<const double> samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : samples) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (bits >> (8 * byte)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline double mean_of(std::span<const double> samples) {
  detail::Welford w;
  for (double v : samples) w.add(v);
  return w.mean;
}

inline double variance_of(std::span<const double> samples) {
  detail::Welford w;
  for (double v : samples) w.add(v);
  return w.variance_unbiased();
}

// Plain two-pass variance, used by tests to validate the single-pass path.
inline double variance_two_pass(std::span<const double> samples) {
  if (samples.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double sum = 0.0;
  for (double v : samples) sum += (v - mean) * (v - mean);
  return sum / static_cast<double>(samples.size() - 1);
}

// Full summary with percentile-bootstrap CIs (2000 resamples). The resample
// index stream is a pure function of `seed`, so summaries are reproducible.
inline EnsembleStats summarize(std::span<const double> samples,
                               std::uint64_t seed,
                               int bootstrap_resamples = 2000) {
  if (samples.size() < 2) {
    throw InsufficientDataError(
        "summarize: need at least 2 samples for variance and bootstrap");
  }
  EnsembleStats out;
  out.n = static_cast<std::int64_t>(samples.size());

  detail::Welford w;
  for (double v : samples) w.add(v);
  out.mean = w.mean;
  out.variance = w.variance_unbiased();
  out.stderr_mean = std::sqrt(out.variance / static_cast<double>(out.n));
  out.samples_digest = samples_digest(samples);

  const std::size_t n = samples.size();
  std::vector<double> boot_means(static_cast<std::size_t>(bootstrap_resamples));
  std::vector<double> boot_vars(static_cast<std::size_t>(bootstrap_resamples));
  for (int b = 0; b < bootstrap_resamples; ++b) {
    detail::Welford bw;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t r = rng::key4(seed, static_cast<std::uint64_t>(b),
                                        static_cast<std::uint64_t>(i), 1);
      bw.add(samples[static_cast<std::size_t>(r % n)]);
    }
    boot_means[static_cast<std::size_t>(b)] = bw.mean;
    boot_vars[static_cast<std::size_t>(b)] = bw.variance_unbiased();
  }
  std::sort(boot_means.begin(), boot_means.end());
  std::sort(boot_vars.begin(), boot_vars.end());

  out.mean_ci_lo = detail::percentile_sorted(boot_means, 0.025);
  out.mean_ci_hi = detail::percentile_sorted(boot_means, 0.975);
  out.variance_ci_lo = detail::percentile_sorted(boot_vars, 0.025);
  out.variance_ci_hi = detail::percentile_sorted(boot_vars, 0.975);

  // Percentile intervals almost always straddle the point estimate; widen
  // rather than report an interval excluding the estimate it qualifies.
  out.mean_ci_lo = std::min(out.mean_ci_lo, out.mean);
  out.mean_ci_hi = std::max(out.mean_ci_hi, out.mean);
  out.variance_ci_lo = std::min(out.variance_ci_lo, out.variance);
  out.variance_ci_hi = std::max(out.variance_ci_hi, out.variance);
  return out;
}

struct Covariance {
  double cov = 0.0;            // unbiased sample covariance
  double product_of_means = 0.0;
  double stderr_cov = 0.0;     // plug-in standard error of the covariance
};

inline Covariance covariance_of(std::span<const double> xs,
                                std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw InsufficientDataError("covariance_of: need matched samples, n >= 2");
  }
  const std::size_t n = xs.size();
  const double mx = mean_of(xs);
  const double my = mean_of(ys);
  double sum = 0.0;
  double sum22 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sum += dx * dy;
    sum22 += dx * dx * dy * dy;
  }
  Covariance out;
  out.cov = sum / static_cast<double>(n - 1);
  out.product_of_means = mx * my;
  const double m11 = sum / static_cast<double>(n);
  const double var_cov =
      std::max(sum22 / static_cast<double>(n) - m11 * m11, 0.0) /
      static_cast<double>(n);
  out.stderr_cov = std::sqrt(var_cov);
  return out;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline LinearFit linear_regression(std::span<const double> xs,
                                   std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw InsufficientDataError("linear_regression: need matched xs/ys, n >= 2");
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) {
    throw InsufficientDataError("linear_regression: all xs equal");
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 0.0;
  return fit;
}

}  // namespace entlab::stats
