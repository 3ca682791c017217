#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entlab/errors.hpp"
#include "entlab/lattice.hpp"
#include "entlab/linalg.hpp"

// Exact symmetric eigendecomposition and the Fermi projection
// P = sum of q_k q_k^T over eigenvalues in the open window (0, E),
// plus decay profiling of P's matrix elements.

namespace entlab::spectral {

struct SpectralDecomp {
  std::optional<lattice::BoxGeometry> geometry;
  std::vector<double> eigenvalues;     // ascending
  linalg::Matrix eigenvectors_rows;    // row k = eigenvector for eigenvalues[k]

  std::size_t dimension() const { return eigenvalues.size(); }

  // Conventional column-orientation view (site index in rows).
  linalg::Matrix eigenvectors() const { return eigenvectors_rows.transposed(); }
};

// Full decomposition; d=1 operators go straight to the tridiagonal QL core,
// everything else through Householder reduction first.
inline SpectralDecomp eig_sym(const lattice::HamiltonianMatrix& h) {
  SpectralDecomp decomp;
  decomp.geometry = h.geometry();
  if (h.is_tridiagonal()) {
    decomp.eigenvalues = linalg::eig_symmetric_tridiagonal(
        h.diagonal(), h.off_diagonal(), &decomp.eigenvectors_rows);
  } else {
    decomp.eigenvalues =
        linalg::eig_symmetric_dense(h.dense(), &decomp.eigenvectors_rows);
  }
  return decomp;
}

inline SpectralDecomp eig_sym(const linalg::Matrix& symmetric) {
  SpectralDecomp decomp;
  decomp.eigenvalues =
      linalg::eig_symmetric_dense(symmetric, &decomp.eigenvectors_rows);
  return decomp;
}

struct FermiProjection {
  std::optional<lattice::BoxGeometry> geometry;
  double fermi_energy = 0.0;
  linalg::Matrix matrix;  // symmetric, filled exactly (upper half mirrored)
  std::size_t rank = 0;   // number of eigenvalues in (0, fermi_energy)
};

// P = E_H((0,E)) with strict window edges. The spectrum of a random H is
// simple almost surely, but finite tolerance still needs a guard: if any
// eigenvalue sits within 1e-10 of E the projection is declared degenerate
// and the caller decides (the ensemble retries with a fresh realization).
inline FermiProjection fermi_projection(const SpectralDecomp& decomp, double E) {
  if (!(E > 0.0)) throw DomainError("fermi_projection: E must be > 0");
  const std::size_t n = decomp.dimension();
  for (double lambda : decomp.eigenvalues) {
    if (std::abs(lambda - E) < 1e-10) {
      throw DegenerateFermiLevelError(
          "fermi_projection: an eigenvalue lies within 1e-10 of the Fermi "
          "energy",
          n);
    }
  }

  // Eigenvalues are sorted, so the window (0,E) is a contiguous index range.
  std::size_t k0 = 0;
  while (k0 < n && !(decomp.eigenvalues[k0] > 0.0)) ++k0;
  std::size_t k1 = k0;
  while (k1 < n && decomp.eigenvalues[k1] < E) ++k1;

  FermiProjection p;
  p.geometry = decomp.geometry;
  p.fermi_energy = E;
  p.rank = k1 - k0;
  p.matrix = linalg::Matrix(n, n);

  // P(i,j) = sum over selected k of Q(k,i) Q(k,j). With eigenvectors stored
  // in rows, the needed slices are the contiguous column segments of the
  // transposed view; dotting rows of the transposed matrix keeps the inner
  // loop contiguous, so build from the column-oriented copy once.
  const linalg::Matrix q_cols = decomp.eigenvectors_rows.transposed();
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = q_cols.row_ptr(i);
    for (std::size_t j = i; j < n; ++j) {
      const double* qj = q_cols.row_ptr(j);
      double sum = 0.0;
      for (std::size_t k = k0; k < k1; ++k) sum += qi[k] * qj[k];
      p.matrix(i, j) = sum;
      p.matrix(j, i) = sum;
    }
  }
  return p;
}

// |P(x0, x0+r e_axis)| for r = 0..r_max. x0 must be interior: at least N/2
// sites away from the boundary along the sampled axis.
inline std::vector<std::pair<int, double>> projection_decay_profile(
    const FermiProjection& p, int axis_origin_coord, int r_max, int axis = 0) {
  if (!p.geometry) {
    throw DomainError("projection_decay_profile: projection has no geometry");
  }
  const lattice::BoxGeometry& g = *p.geometry;
  if (axis < 0 || axis >= g.dimension) {
    throw DomainError("projection_decay_profile: bad axis");
  }
  const int N = g.half_width;
  if (std::abs(axis_origin_coord) > N - N / 2) {
    throw DomainError(
        "projection_decay_profile: axis_origin must sit at least N/2 sites "
        "from the boundary");
  }
  if (r_max < 0 || axis_origin_coord + r_max > N) {
    throw DomainError("projection_decay_profile: r_max exceeds the box");
  }

  const auto site = [&g, axis](int c) {
    if (g.dimension == 1) return g.index_of(c);
    return axis == 0 ? g.index_of(c, 0) : g.index_of(0, c);
  };
  const std::size_t i0 = static_cast<std::size_t>(site(axis_origin_coord));
  std::vector<std::pair<int, double>> profile;
  profile.reserve(static_cast<std::size_t>(r_max) + 1);
  for (int r = 0; r <= r_max; ++r) {
    const std::size_t ir = static_cast<std::size_t>(site(axis_origin_coord + r));
    profile.emplace_back(r, std::abs(p.matrix(i0, ir)));
  }
  return profile;
}

struct DecayFit {
  double amplitude_log = 0.0;  // log C
  double rate = 0.0;           // gamma; positive means decay
  double exponent_s = 1.0;     // fractional-moment order when applicable
  double r_squared = 0.0;
};

// Log-linear least squares on (distance, log value). Values at or below the
// 1e-14 floor are excluded first; fewer than 3 surviving points is an error.
inline DecayFit fit_exponential_decay(
    std::span<const std::pair<int, double>> samples, double exponent_s = 1.0) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(samples.size());
  for (const auto& [r, value] : samples) {
    if (value > 1e-14) {
      pts.emplace_back(static_cast<double>(r), std::log(value));
    }
  }
  if (pts.size() < 3) {
    throw InsufficientDataError(
        "fit_exponential_decay: fewer than 3 usable points above the floor");
  }

  const double n = static_cast<double>(pts.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) {
    throw InsufficientDataError(
        "fit_exponential_decay: all points at the same distance");
  }

  DecayFit fit;
  const double slope = sxy / sxx;
  fit.amplitude_log = my - slope * mx;
  fit.rate = -slope;
  fit.exponent_s = exponent_s;
  // Flat data has syy = 0: the fit is exact but degenerate; report r^2 = 0.
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 0.0;
  return fit;
}

}  // namespace entlab::spectral
