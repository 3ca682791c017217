#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "entlab/errors.hpp"
#include "entlab/lattice.hpp"
#include "entlab/linalg.hpp"

// Lattice Green's functions G(x,y;z) = (H-z)^{-1}(x,y) and the identities
// the localization analysis leans on: the rank-one update for the origin
// shift, the decoupling of the shifted operator into half-line resolvents,
// and the Weyl-solution factorization G(x,y) = G(0,0) psi_+(x) psi_-(y).

namespace entlab::resolvent {

using linalg::cplx;

struct SpectralParameter {
  double lambda = 0.0;
  double eta = 0.0;  // z = lambda + i eta, eta != 0

  SpectralParameter(double lambda, double eta) : lambda(lambda), eta(eta) {
    if (eta == 0.0) {
      throw DomainError("SpectralParameter: eta must be nonzero");
    }
  }

  cplx value() const { return cplx(lambda, eta); }
};

struct GreensColumn {
  SpectralParameter z;
  std::size_t source = 0;  // row index of the delta right-hand side
  std::vector<cplx> entries;

  const cplx& operator[](std::size_t i) const { return entries[i]; }
};

// One resolvent column: solve (H - z) g = e_source and verify the residual
// against 1e-10 * (1 + ||H||). Tridiagonal operators use the banded solver,
// everything else a dense LU.
inline GreensColumn greens_column(const lattice::HamiltonianMatrix& h,
                                  SpectralParameter z, std::size_t source) {
  const std::size_t n = h.size();
  if (source >= n) throw DomainError("greens_column: source index out of range");

  std::vector<cplx> rhs(n, cplx(0.0, 0.0));
  rhs[source] = cplx(1.0, 0.0);

  GreensColumn col{z, source, {}};
  if (h.is_tridiagonal()) {
    col.entries = linalg::solve_tridiagonal_shifted(
        h.diagonal(), h.off_diagonal(), z.value(), std::move(rhs));
  } else {
    const linalg::ComplexLU lu(h.dense(), z.value());
    col.entries = lu.solve(std::move(rhs));
  }

  // Residual check: (H - z) g - e_source in max norm.
  std::vector<cplx> hg(n);
  h.apply<cplx>(col.entries, hg);
  double resid = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cplx r = hg[i] - z.value() * col.entries[i];
    if (i == source) r -= cplx(1.0, 0.0);
    resid = std::max(resid, std::abs(r));
  }
  const double gate = 1e-10 * (1.0 + h.inf_norm());
  if (!(resid <= gate)) {
    throw NumericalError("greens_column: solve residual " +
                             std::to_string(resid) + " exceeds " +
                             std::to_string(gate),
                         n);
  }
  return col;
}

struct RankOneCheck {
  cplx direct;   // G^t(x,y;z) from a fresh solve of the shifted operator
  cplx updated;  // G(x,y) - t G(x,0) G(0,y) / (1 + t G(0,0))
};

// The origin shift is the rank-one perturbation H^t = H + t e_0 e_0^T, so
// its resolvent follows from H's by the standard update formula. Returns
// both sides; they must agree to 1e-9 relative (asserted by the callers).
inline RankOneCheck rank_one_shift_identity_check(
    const lattice::HamiltonianMatrix& h, double t, SpectralParameter z,
    int x_coord, int y_coord) {
  if (t < 0.0) {
    throw DomainError("rank_one_shift_identity_check: t must be >= 0");
  }
  if (!h.geometry()) {
    throw DomainError(
        "rank_one_shift_identity_check: operator carries no geometry");
  }
  const lattice::BoxGeometry& g = *h.geometry();
  const std::size_t origin = static_cast<std::size_t>(g.origin_index());
  const std::size_t ix = static_cast<std::size_t>(
      g.dimension == 1 ? g.index_of(x_coord) : g.index_of(x_coord, 0));
  const std::size_t iy = static_cast<std::size_t>(
      g.dimension == 1 ? g.index_of(y_coord) : g.index_of(y_coord, 0));

  const GreensColumn col_0 = greens_column(h, z, origin);
  const GreensColumn col_y = greens_column(h, z, iy);
  const cplx g_x0 = col_0[ix];
  const cplx g_00 = col_0[origin];
  const cplx g_0y = col_y[origin];
  const cplx g_xy = col_y[ix];

  const cplx denom = cplx(1.0, 0.0) + t * g_00;
  if (std::abs(denom) < 1e-12) {
    throw NumericalError(
        "rank_one_shift_identity_check: 1 + t G(0,0) is numerically zero; "
        "update formula unusable");
  }

  RankOneCheck out;
  out.updated = g_xy - t * g_x0 * g_0y / denom;
  const lattice::HamiltonianMatrix shifted = h.with_diagonal_shift(origin, t);
  out.direct = greens_column(shifted, z, iy)[ix];
  return out;
}

struct DecoupledResiduals {
  double factor_plus;    // |G^t(x,y) - G^t(0,y) G_+(x,1)|
  double factor_minus;   // |G^t(x,y) - G^t(x,0) G_-(-1,y)|
  double reference_abs;  // |G^t(x,y)| for forming relative residuals

  double relative_plus() const {
    return factor_plus / std::max(reference_abs, 1e-300);
  }
  double relative_minus() const {
    return factor_minus / std::max(reference_abs, 1e-300);
  }
};

// The shifted operator's resolvent factorizes across the origin: with H_+
// and H_- the truncations of H to [1,N] and [-N,-1],
//   G^t(x,y) = G^t(0,y) G_+(x,1)  and  G^t(x,y) = G^t(x,0) G_-(-1,y)
// for x >= 1 >= 0 >= -1 >= y. Exact on the infinite lattice; on the box the
// residual is exponentially small in the distance to the boundary. `h` must
// already carry whatever origin shift is being probed.
inline DecoupledResiduals decoupled_resolvent_check(
    const lattice::HamiltonianMatrix& h, SpectralParameter z, int x_coord,
    int y_coord) {
  if (!h.geometry() || h.geometry()->dimension != 1) {
    throw DomainError(
        "decoupled_resolvent_check: needs a d=1 operator with geometry");
  }
  const lattice::BoxGeometry& g = *h.geometry();
  const int n_half = g.half_width;
  if (x_coord < 1 || y_coord > -1) {
    throw DomainError("decoupled_resolvent_check: require x >= 1 and y <= -1");
  }
  if (x_coord > n_half / 2 || -y_coord > n_half / 2) {
    throw DomainError(
        "decoupled_resolvent_check: x and y must be interior (|x|,|y| <= N/2)");
  }

  const std::size_t origin = static_cast<std::size_t>(g.origin_index());
  const std::size_t ix = static_cast<std::size_t>(g.index_of(x_coord));
  const std::size_t iy = static_cast<std::size_t>(g.index_of(y_coord));

  const GreensColumn col_y = greens_column(h, z, iy);
  const GreensColumn col_0 = greens_column(h, z, origin);
  const cplx gt_xy = col_y[ix];
  const cplx gt_0y = col_y[origin];
  const cplx gt_x0 = col_0[ix];

  // H_+ on sites [1,N]: local index x-1; source site 1 is local 0.
  const lattice::HamiltonianMatrix h_plus =
      h.principal_range(origin + 1, static_cast<std::size_t>(2 * n_half));
  const cplx g_plus_x1 =
      greens_column(h_plus, z, 0)[static_cast<std::size_t>(x_coord - 1)];

  // H_- on sites [-N,-1]: local index y+N; source site -1 is local N-1.
  const lattice::HamiltonianMatrix h_minus =
      h.principal_range(0, origin - 1);
  const cplx g_minus_m1y =
      greens_column(h_minus, z, static_cast<std::size_t>(n_half - 1))
          [static_cast<std::size_t>(y_coord + n_half)];

  DecoupledResiduals out;
  out.factor_plus = std::abs(gt_xy - gt_0y * g_plus_x1);
  out.factor_minus = std::abs(gt_xy - gt_x0 * g_minus_m1y);
  out.reference_abs = std::abs(gt_xy);
  return out;
}

struct WeylSolutions {
  SpectralParameter z;
  // psi_plus[x] for x in [0,N]; psi_minus[x + N] for x in [-N,0].
  std::vector<cplx> psi_plus;
  std::vector<cplx> psi_minus;

  const cplx& plus_at(int x) const {
    return psi_plus[static_cast<std::size_t>(x)];
  }
  const cplx& minus_at(int x) const {
    return psi_minus[static_cast<std::size_t>(
        x + static_cast<int>(psi_minus.size()) - 1)];
  }
};

namespace detail {

// Transfer recursion u(next) = (2 + V(x) - z) u(x) - u(prev) with periodic
// rescaling. The seed (u_boundary=1, u_beyond=0) encodes the truncated
// boundary, so u is proportional to the decaying Weyl solution of the box
// problem; only ratios u(x)/u(0) are needed, but the accumulated log scale
// keeps those ratios representable when the Lyapunov growth is steep.
struct ScaledSolution {
  std::vector<cplx> values;      // raw values, one per site visited
  std::vector<double> log_scale; // cumulative log of the divisors applied
};

inline ScaledSolution transfer_toward_origin(std::span<const double> diag,
                                             cplx z, bool from_top) {
  const std::size_t n = diag.size();
  ScaledSolution out;
  out.values.assign(n, cplx(0.0, 0.0));
  out.log_scale.assign(n, 0.0);

  // Local step order: visit sites from the far boundary toward the origin.
  const auto pos = [n, from_top](std::size_t k) {
    return from_top ? n - 1 - k : k;
  };

  cplx u_prev(0.0, 0.0);  // value beyond the boundary
  cplx u_cur(1.0, 0.0);   // value at the boundary site
  double log_scale = 0.0;
  out.values[pos(0)] = u_cur;
  out.log_scale[pos(0)] = log_scale;

  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t site = pos(k - 1);
    const cplx u_next = (cplx(diag[site], 0.0) - z) * u_cur - u_prev;
    if (!std::isfinite(u_next.real()) || !std::isfinite(u_next.imag())) {
      throw NumericalError(
          "weyl_solutions: transfer recursion overflowed despite rescaling",
          n);
    }
    u_prev = u_cur;
    u_cur = u_next;
    if (k % 32 == 0 || std::abs(u_cur.real()) > 1e290 ||
        std::abs(u_cur.imag()) > 1e290) {
      const double scale =
          std::max({std::abs(u_cur.real()), std::abs(u_cur.imag()),
                    std::abs(u_prev.real()), std::abs(u_prev.imag()), 1.0});
      u_cur /= scale;
      u_prev /= scale;
      log_scale += std::log(scale);
    }
    out.values[pos(k)] = u_cur;
    out.log_scale[pos(k)] = log_scale;
  }
  return out;
}

}  // namespace detail

// Weyl solutions of (H - z) psi = 0 on the box: psi_plus decays toward +N,
// psi_minus toward -N, both normalized to 1 at the origin. Computed by
// transfer recursion seeded at the truncated boundary.
inline WeylSolutions weyl_solutions(const lattice::HamiltonianMatrix& h,
                                    SpectralParameter z) {
  if (!h.geometry() || h.geometry()->dimension != 1 || !h.is_tridiagonal()) {
    throw DomainError("weyl_solutions: needs a d=1 operator with geometry");
  }
  const lattice::BoxGeometry& g = *h.geometry();
  const int n_half = g.half_width;
  const std::size_t origin = static_cast<std::size_t>(g.origin_index());
  const std::span<const double> diag = h.diagonal();

  // Solve on [0,N] walking down from +N, and on [-N,0] walking up from -N.
  const std::span<const double> upper = diag.subspan(origin);
  const std::span<const double> lower = diag.subspan(0, origin + 1);
  const detail::ScaledSolution up =
      detail::transfer_toward_origin(upper, z.value(), /*from_top=*/true);
  const detail::ScaledSolution down =
      detail::transfer_toward_origin(lower, z.value(), /*from_top=*/false);

  WeylSolutions out{z, {}, {}};
  out.psi_plus.resize(static_cast<std::size_t>(n_half) + 1);
  out.psi_minus.resize(static_cast<std::size_t>(n_half) + 1);

  const auto materialize = [](const detail::ScaledSolution& s,
                              std::size_t origin_pos, std::size_t i) {
    const cplx u0 = s.values[origin_pos];
    if (u0 == cplx(0.0, 0.0)) {
      throw NumericalError(
          "weyl_solutions: solution vanishes at the origin; cannot "
          "normalize");
    }
    const double rel_log = s.log_scale[i] - s.log_scale[origin_pos];
    // rel_log <= 0 away from the boundary seed; exp may underflow to 0 for
    // strongly decaying solutions, which is the honest answer.
    return s.values[i] / u0 * std::exp(rel_log);
  };

  for (std::size_t i = 0; i < out.psi_plus.size(); ++i) {
    out.psi_plus[i] = materialize(up, 0, i);
  }
  for (std::size_t i = 0; i < out.psi_minus.size(); ++i) {
    out.psi_minus[i] = materialize(down, lower.size() - 1, i);
  }

  // Recurrence self-check at interior points, skipping entries that
  // underflowed to zero.
  const auto check = [&](const std::vector<cplx>& psi, std::size_t diag_from) {
    for (std::size_t i = 1; i + 1 < psi.size(); ++i) {
      const cplx r = (cplx(diag[diag_from + i], 0.0) - z.value()) * psi[i] -
                     psi[i - 1] - psi[i + 1];
      const double scale = std::max(
          {std::abs(psi[i - 1]), std::abs(psi[i]), std::abs(psi[i + 1])});
      if (scale < 1e-280) continue;
      if (std::abs(r) > 1e-8 * scale) {
        throw NumericalError(
            "weyl_solutions: recurrence residual exceeds 1e-8 relative",
            psi.size());
      }
    }
  };
  check(out.psi_plus, origin);
  check(out.psi_minus, 0);
  return out;
}

}  // namespace entlab::resolvent
