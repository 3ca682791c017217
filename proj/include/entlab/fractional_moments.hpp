#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "entlab/ensemble.hpp"
#include "entlab/errors.hpp"
#include "entlab/spectral.hpp"
#include "entlab/stats.hpp"

// Monte Carlo fractional moments of the resolvent, E{|G^t(x,y;z)|^s} with
// s in (0,1): spatial decay across site pairs and the (t-E)^{-s} scaling of
// the on-diagonal moment as the origin shift grows. These sit on top of the
// ensemble runner; the config's shift_t supplies t.

namespace entlab::resolvent {

struct FractionalMomentRow {
  int x = 0;
  int y = 0;
  int distance = 0;
  stats::EnsembleStats stats;
};

struct FractionalMomentScan {
  double s = 0.0;
  SpectralParameter z;
  double t = 0.0;
  std::vector<FractionalMomentRow> per_pair;
  spectral::DecayFit decay_fit;  // log mean vs |x-y|, when >= 3 usable pairs
  bool decay_fit_valid = false;
  ensemble::RunDiagnostics diagnostics;
};

// E{|G^t(x,y;z)|^s} for each pair, plus an exponential fit of the mean over
// the pair distances (the spatial Minami-type decay check).
inline FractionalMomentScan fractional_moment_scan(
    const ensemble::EnsembleConfig& base, double s, SpectralParameter z,
    std::span<const std::pair<int, int>> pairs, double t) {
  if (!(s > 0.0 && s < 1.0)) {
    throw ConfigError("fractional_moment_scan: s must lie in (0,1)");
  }
  if (t < 0.0) throw ConfigError("fractional_moment_scan: t must be >= 0");
  if (pairs.empty()) {
    throw ConfigError("fractional_moment_scan: no site pairs given");
  }

  ensemble::EnsembleConfig cfg = base;
  cfg.shift_t = t;

  std::vector<ensemble::Estimator> estimators;
  estimators.reserve(pairs.size());
  for (const auto& [x, y] : pairs) {
    estimators.push_back(
        ensemble::Estimator::fractional_moment(s, z.lambda, z.eta, x, y));
  }
  const ensemble::MultiRunResult run =
      ensemble::run_realizations(cfg, estimators);

  FractionalMomentScan out{s, z, t, {}, {}, false, run.diagnostics};
  std::vector<std::pair<int, double>> decay_points;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    FractionalMomentRow row;
    row.x = pairs[i].first;
    row.y = pairs[i].second;
    row.distance = std::abs(pairs[i].first - pairs[i].second);
    row.stats = stats::summarize(run.columns[i],
                                 ensemble::bootstrap_seed(cfg, estimators[i]));
    decay_points.emplace_back(row.distance, row.stats.mean);
    out.per_pair.push_back(row);
  }
  if (decay_points.size() >= 3) {
    try {
      out.decay_fit = spectral::fit_exponential_decay(decay_points, s);
      out.decay_fit_valid = true;
    } catch (const InsufficientDataError&) {
      out.decay_fit_valid = false;
    }
  }
  return out;
}

struct ShiftScalingRow {
  double t = 0.0;
  stats::EnsembleStats stats;
};

struct ShiftScalingScan {
  double s = 0.0;
  SpectralParameter z;
  std::vector<ShiftScalingRow> per_t;
  stats::LinearFit loglog_fit;  // log mean vs log(t - E); slope ~ -s
  ensemble::RunDiagnostics diagnostics;
};

// E{|G^t(0,0;z)|^s} over a list of shifts, with the log-log regression of
// the mean against (t - E); the expected slope is -s.
inline ShiftScalingScan fractional_moment_shift_scan(
    const ensemble::EnsembleConfig& base, double s, SpectralParameter z,
    std::span<const double> t_list) {
  if (!(s > 0.0 && s < 1.0)) {
    throw ConfigError("fractional_moment_shift_scan: s must lie in (0,1)");
  }
  if (t_list.empty()) {
    throw ConfigError("fractional_moment_shift_scan: t_list is empty");
  }
  for (double t : t_list) {
    if (!(t > base.fermi_energy)) {
      throw ConfigError(
          "fractional_moment_shift_scan: every t must exceed fermi_energy");
    }
  }

  const ensemble::Estimator probe =
      ensemble::Estimator::fractional_moment(s, z.lambda, z.eta, 0, 0);

  ShiftScalingScan out{s, z, {}, {}, {}};
  std::vector<double> log_gap;
  std::vector<double> log_mean;
  for (double t : t_list) {
    ensemble::EnsembleConfig cfg = base;
    cfg.shift_t = t;
    const ensemble::MultiRunResult run =
        ensemble::run_realizations(cfg, {&probe, 1});
    out.diagnostics += run.diagnostics;
    ShiftScalingRow row;
    row.t = t;
    row.stats =
        stats::summarize(run.columns[0], ensemble::bootstrap_seed(cfg, probe));
    out.per_t.push_back(row);
    if (row.stats.mean > 0.0) {
      log_gap.push_back(std::log(t - base.fermi_energy));
      log_mean.push_back(std::log(row.stats.mean));
    }
  }
  if (log_gap.size() >= 2) {
    out.loglog_fit = stats::linear_regression(log_gap, log_mean);
  }
  return out;
}

}  // namespace entlab::resolvent
