#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "entlab/errors.hpp"
#include "entlab/linalg.hpp"
#include "entlab/spectral.hpp"

// Entanglement entropies of free fermions via the correlation-matrix method:
// S of a region is the sum of binary entropies of the eigenvalues of the
// Fermi projection restricted to that region. Also the two-cut splitting
// diagnostic and the cross-cut bound functional used by the shift scans.

namespace entlab::entropy {

enum class CutSide { kLeft, kRight };

struct EntropySample {
  double value = 0.0;  // nats
  enum class Kind { kBlock, kCut } kind = Kind::kBlock;
  int block_half_width = -1;          // M for centered blocks, -1 otherwise
  int cut_position = 0;               // cuts only
  CutSide side = CutSide::kLeft;      // cuts only
  std::uint64_t realization_index = 0;
};

// h(p) = -p log p - (1-p) log(1-p), in nats. Inputs may overshoot [0,1] by
// the clamp tolerance 1e-8 (eigensolver round-off); beyond that the
// projection upstream is broken and we say so.
inline double binary_entropy(double p) {
  constexpr double kClamp = 1e-8;
  constexpr double kFloor = 1e-30;
  if (!(p >= -kClamp && p <= 1.0 + kClamp)) {
    throw DomainError("binary_entropy: p outside [0,1] beyond clamp tolerance");
  }
  p = std::clamp(p, 0.0, 1.0);
  if (p < kFloor || 1.0 - p < kFloor) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

// Entanglement entropy of the sites in `block`: eigendecompose the principal
// submatrix P_Lambda and sum h over its eigenvalues. Eigenvalues must lie in
// [-1e-6, 1+1e-6]; excursions beyond that indicate a broken projection.
inline EntropySample block_entropy(const spectral::FermiProjection& p,
                                   std::span<const int> block) {
  if (block.empty()) throw DomainError("block_entropy: empty block");
  for (int site : block) {
    if (site < 0 || static_cast<std::size_t>(site) >= p.matrix.rows()) {
      throw DomainError("block_entropy: site index outside the box");
    }
  }
  const linalg::Matrix sub = linalg::principal_submatrix(p.matrix, block);
  const std::vector<double> sigma = linalg::eig_symmetric_dense(sub, nullptr);

  EntropySample out;
  out.kind = EntropySample::Kind::kBlock;
  for (double s : sigma) {
    if (!(s >= -1e-6 && s <= 1.0 + 1e-6)) {
      throw NumericalError(
          "block_entropy: P_Lambda eigenvalue " + std::to_string(s) +
              " outside [0,1] beyond tolerance; projection is inconsistent",
          block.size());
    }
    out.value += binary_entropy(std::clamp(s, 0.0, 1.0));
  }
  return out;
}

// Centered block [-M,M]^d.
inline EntropySample block_entropy_centered(const spectral::FermiProjection& p,
                                            int m) {
  if (!p.geometry) {
    throw DomainError("block_entropy_centered: projection has no geometry");
  }
  const std::vector<int> sites = p.geometry->block_sites(m);
  EntropySample out = block_entropy(p, sites);
  out.block_half_width = m;
  return out;
}

// Single-cut entropy in d=1: the entanglement of {-N..c-1} (side=left, the
// S_minus type) or {c..N} (side=right, the S_plus type) against the rest.
// The cut must stay `margin` sites away from the boundary so the finite box
// stands in for the half-line; margin defaults to N/4.
inline EntropySample cut_entropy(const spectral::FermiProjection& p,
                                 int cut_position, CutSide side,
                                 int margin = -1) {
  if (!p.geometry) throw DomainError("cut_entropy: projection has no geometry");
  const lattice::BoxGeometry& g = *p.geometry;
  if (g.dimension != 1) {
    throw DomainError("cut_entropy: defined for dimension 1 only");
  }
  const int n_half = g.half_width;
  if (margin < 0) margin = n_half / 4;
  if (margin >= n_half) throw DomainError("cut_entropy: margin too large");
  if (std::abs(cut_position) > n_half - margin) {
    throw DomainError(
        "cut_entropy: cut position within margin of the boundary (|c| must "
        "be <= N - margin)");
  }

  const std::vector<int> sites =
      side == CutSide::kLeft ? g.range_sites(-n_half, cut_position - 1)
                             : g.range_sites(cut_position, n_half);
  EntropySample out = block_entropy(p, sites);
  out.kind = EntropySample::Kind::kCut;
  out.block_half_width = -1;
  out.cut_position = cut_position;
  out.side = side;
  return out;
}

// S_[-M,M] minus its two single-cut contributions (right cut at -M covering
// [-M,N], left cut at M+1 covering [-N,M]): for a localized state the block
// entropy splits into independent boundary terms and this residual is o(1)
// in M, which is what the splitting scan measures.
inline double splitting_residual(const spectral::FermiProjection& p, int m) {
  if (!p.geometry) {
    throw DomainError("splitting_residual: projection has no geometry");
  }
  const lattice::BoxGeometry& g = *p.geometry;
  if (g.dimension != 1) {
    throw DomainError("splitting_residual: defined for dimension 1 only");
  }
  if (m < 1 || 2 * m > g.half_width) {
    throw DomainError("splitting_residual: M must satisfy 1 <= M <= N/2");
  }
  const double block = block_entropy_centered(p, m).value;
  const double right_at_minus_m = cut_entropy(p, -m, CutSide::kRight).value;
  const double left_at_m_plus_1 = cut_entropy(p, m + 1, CutSide::kLeft).value;
  return block - right_at_minus_m - left_at_m_plus_1;
}

// Cross-cut bound functional: sum over x >= 0 of (sum over y <= -1 of
// |P(x,y)|^2)^alpha. Tracks the single-cut entropy from above up to a
// constant, so its ensemble mean should fall alongside E{S^t} as the origin
// shift t grows.
inline double entropy_upper_bound_rhs(const spectral::FermiProjection& p,
                                      double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("entropy_upper_bound_rhs: alpha must lie in (0,1)");
  }
  if (!p.geometry) {
    throw DomainError("entropy_upper_bound_rhs: projection has no geometry");
  }
  const lattice::BoxGeometry& g = *p.geometry;
  if (g.dimension != 1) {
    throw DomainError("entropy_upper_bound_rhs: defined for dimension 1 only");
  }
  const int n_half = g.half_width;
  double total = 0.0;
  for (int x = 0; x <= n_half; ++x) {
    const std::size_t ix = static_cast<std::size_t>(g.index_of(x));
    double cross = 0.0;
    for (int y = -n_half; y <= -1; ++y) {
      const std::size_t iy = static_cast<std::size_t>(g.index_of(y));
      const double v = p.matrix(ix, iy);
      cross += v * v;
    }
    if (cross > 0.0) total += std::pow(cross, alpha);
  }
  return total;
}

}  // namespace entlab::entropy
