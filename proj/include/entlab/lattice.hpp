#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entlab/densities.hpp"
#include "entlab/errors.hpp"
#include "entlab/linalg.hpp"
#include "entlab/rng.hpp"

// Finite-box lattice model: geometry of the box [-N,N]^d with its centered
// block [-M,M]^d, i.i.d. potential sampling, the rank-one origin shift, and
// assembly of the discrete Schroedinger operator H = -Laplacian + V with
// kinetic spectrum [0,4d] (diagonal 2d + V(x), hopping -1, open boundaries).

namespace entlab::lattice {

struct BoxGeometry {
  int dimension;
  int half_width;        // N; box is [-N,N]^d
  int block_half_width;  // M; block is [-M,M]^d

  BoxGeometry(int d, int N, int M) : dimension(d), half_width(N), block_half_width(M) {
    if (d != 1 && d != 2) {
      throw ConfigError("dimension must be 1 or 2, got " + std::to_string(d));
    }
    if (N < 1) {
      throw ConfigError("half_width must be >= 1, got " + std::to_string(N));
    }
    if (M < 0 || M > N) {
      throw ConfigError("block_half_width must satisfy 0 <= M <= half_width, got " +
                        std::to_string(M));
    }
  }

  int side() const { return 2 * half_width + 1; }
  int block_side() const { return 2 * block_half_width + 1; }

  std::int64_t num_sites() const {
    std::int64_t n = side();
    return dimension == 1 ? n : n * n;
  }

  // Row-major enumeration over [-N,N]^d: the first coordinate varies slowest.
  // This bijection is the one convention every module shares.
  int index_of(std::span<const int> coord) const {
    if (static_cast<int>(coord.size()) != dimension) {
      throw DomainError("index_of: coordinate arity mismatch");
    }
    int idx = 0;
    for (int a = 0; a < dimension; ++a) {
      const int c = coord[a];
      if (c < -half_width || c > half_width) {
        throw DomainError("index_of: coordinate outside the box");
      }
      idx = idx * side() + (c + half_width);
    }
    return idx;
  }

  int index_of(int x) const {
    const std::array<int, 1> c{x};
    return index_of(std::span<const int>(c));
  }
  int index_of(int x, int y) const {
    const std::array<int, 2> c{x, y};
    return index_of(std::span<const int>(c));
  }

  std::array<int, 2> coord_of(int index) const {
    if (index < 0 || index >= num_sites()) {
      throw DomainError("coord_of: index outside the box");
    }
    if (dimension == 1) return {index - half_width, 0};
    return {index / side() - half_width, index % side() - half_width};
  }

  int origin_index() const {
    return dimension == 1 ? index_of(0) : index_of(0, 0);
  }

  // Site indices of the centered block [-m,m]^d, in enumeration order.
  std::vector<int> block_sites(int m) const {
    if (m < 0 || m > half_width) {
      throw DomainError("block_sites: block half-width outside the box");
    }
    std::vector<int> sites;
    if (dimension == 1) {
      sites.reserve(static_cast<std::size_t>(2 * m + 1));
      for (int x = -m; x <= m; ++x) sites.push_back(index_of(x));
    } else {
      sites.reserve(static_cast<std::size_t>(2 * m + 1) *
                    static_cast<std::size_t>(2 * m + 1));
      for (int x = -m; x <= m; ++x)
        for (int y = -m; y <= m; ++y) sites.push_back(index_of(x, y));
    }
    return sites;
  }

  // d=1 only: indices of the contiguous coordinate range [lo,hi].
  std::vector<int> range_sites(int lo, int hi) const {
    if (dimension != 1) {
      throw DomainError("range_sites: defined for dimension 1 only");
    }
    if (lo > hi || lo < -half_width || hi > half_width) {
      throw DomainError("range_sites: range outside the box");
    }
    std::vector<int> sites;
    sites.reserve(static_cast<std::size_t>(hi - lo + 1));
    for (int x = lo; x <= hi; ++x) sites.push_back(index_of(x));
    return sites;
  }

  bool operator==(const BoxGeometry&) const = default;
};

struct PotentialField {
  BoxGeometry geometry;
  std::vector<double> values;  // indexed by site; includes the origin shift
  double origin_shift_t = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t realization_index = 0;
};

// Draw one i.i.d. field. Each site value is a pure function of
// (master_seed, realization_index, site index), so fields are reproducible
// bit-exactly regardless of evaluation order.
inline PotentialField sample_potential(const densities::DensityModel& density,
                                       const BoxGeometry& geometry,
                                       std::uint64_t master_seed,
                                       std::uint64_t realization_index) {
  PotentialField field{geometry, {}, 0.0, master_seed, realization_index};
  const std::int64_t n = geometry.num_sites();
  field.values.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double u = rng::uniform_open(master_seed, realization_index,
                                       static_cast<std::uint64_t>(i), 0);
    field.values[static_cast<std::size_t>(i)] = density.sample(u);
  }
  return field;
}

// Raise the potential at the origin by t (the rank-one perturbation that the
// shift-decay machinery is built on). A field can be shifted once.
inline PotentialField apply_origin_shift(const PotentialField& field, double t) {
  if (t < 0.0) throw DomainError("apply_origin_shift: t must be >= 0");
  if (field.origin_shift_t != 0.0) {
    throw DomainError("apply_origin_shift: field already carries a shift");
  }
  PotentialField shifted = field;
  shifted.values[static_cast<std::size_t>(field.geometry.origin_index())] += t;
  shifted.origin_shift_t = t;
  return shifted;
}

// Symmetric operator storage: tridiagonal arrays in d=1 (the hot path),
// dense otherwise. A HamiltonianMatrix may also be built directly from raw
// arrays or a dense symmetric matrix without any box geometry attached.
class HamiltonianMatrix {
 public:
  HamiltonianMatrix(BoxGeometry geometry, std::vector<double> diag,
                    std::vector<double> off)
      : geometry_(geometry), diag_(std::move(diag)), off_(std::move(off)) {
    check_tridiagonal_sizes();
  }

  HamiltonianMatrix(BoxGeometry geometry, linalg::Matrix dense)
      : geometry_(geometry), dense_(std::move(dense)) {
    check_dense_sizes();
  }

  static HamiltonianMatrix from_tridiagonal(std::vector<double> diag,
                                            std::vector<double> off) {
    return HamiltonianMatrix(std::move(diag), std::move(off));
  }

  static HamiltonianMatrix from_dense(linalg::Matrix symmetric) {
    return HamiltonianMatrix(std::move(symmetric));
  }

  bool is_tridiagonal() const { return dense_.empty(); }
  std::size_t size() const {
    return is_tridiagonal() ? diag_.size() : dense_.rows();
  }
  const std::optional<BoxGeometry>& geometry() const { return geometry_; }

  std::span<const double> diagonal() const {
    require_tridiagonal("diagonal");
    return diag_;
  }
  std::span<const double> off_diagonal() const {
    require_tridiagonal("off_diagonal");
    return off_;
  }
  const linalg::Matrix& dense() const {
    if (is_tridiagonal()) {
      throw DomainError("dense: operator is stored tridiagonally");
    }
    return dense_;
  }

  linalg::Matrix to_dense() const {
    if (!is_tridiagonal()) return dense_;
    const std::size_t n = diag_.size();
    linalg::Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      m(i, i) = diag_[i];
      if (i + 1 < n) {
        m(i, i + 1) = off_[i];
        m(i + 1, i) = off_[i];
      }
    }
    return m;
  }

  double inf_norm() const {
    if (is_tridiagonal()) {
      double norm = 0.0;
      for (std::size_t i = 0; i < diag_.size(); ++i) {
        double row = std::abs(diag_[i]);
        if (i > 0) row += std::abs(off_[i - 1]);
        if (i + 1 < diag_.size()) row += std::abs(off_[i]);
        norm = std::max(norm, row);
      }
      return norm;
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < dense_.rows(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < dense_.cols(); ++j) {
        row += std::abs(dense_(i, j));
      }
      norm = std::max(norm, row);
    }
    return norm;
  }

  // y = H x, for real or complex vectors (used by residual checks).
  template <typename Scalar>
  void apply(std::span<const Scalar> x, std::span<Scalar> y) const {
    const std::size_t n = size();
    if (x.size() != n || y.size() != n) {
      throw DomainError("apply: vector size mismatch");
    }
    if (is_tridiagonal()) {
      for (std::size_t i = 0; i < n; ++i) {
        Scalar v = x[i] * diag_[i];
        if (i > 0) v += x[i - 1] * off_[i - 1];
        if (i + 1 < n) v += x[i + 1] * off_[i];
        y[i] = v;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        Scalar v{};
        const double* row = dense_.row_ptr(i);
        for (std::size_t j = 0; j < n; ++j) v += x[j] * row[j];
        y[i] = v;
      }
    }
  }

  // Copy with the diagonal entry at `index` raised by t (rank-one update).
  HamiltonianMatrix with_diagonal_shift(std::size_t index, double t) const {
    HamiltonianMatrix copy = *this;
    if (index >= size()) {
      throw DomainError("with_diagonal_shift: index out of range");
    }
    if (copy.is_tridiagonal()) {
      copy.diag_[index] += t;
    } else {
      copy.dense_(index, index) += t;
    }
    return copy;
  }

  // d=1 only: the restriction of H to the index range [lo,hi] (inclusive),
  // i.e. the operator with simple truncation boundary at both ends. The
  // result carries no geometry; its sites are local indices 0..hi-lo.
  HamiltonianMatrix principal_range(std::size_t lo, std::size_t hi) const {
    require_tridiagonal("principal_range");
    if (lo > hi || hi >= diag_.size()) {
      throw DomainError("principal_range: bad index range");
    }
    std::vector<double> d(diag_.begin() + static_cast<std::ptrdiff_t>(lo),
                          diag_.begin() + static_cast<std::ptrdiff_t>(hi + 1));
    std::vector<double> o;
    if (hi > lo) {
      o.assign(off_.begin() + static_cast<std::ptrdiff_t>(lo),
               off_.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    return HamiltonianMatrix(std::move(d), std::move(o));
  }

 private:
  void require_tridiagonal(const char* who) const {
    if (!is_tridiagonal()) {
      throw DomainError(std::string(who) +
                        ": operator is stored as a dense matrix");
    }
  }

  HamiltonianMatrix(std::vector<double> diag, std::vector<double> off)
      : diag_(std::move(diag)), off_(std::move(off)) {
    check_tridiagonal_sizes();
  }
  explicit HamiltonianMatrix(linalg::Matrix dense) : dense_(std::move(dense)) {
    check_dense_sizes();
  }

  void check_tridiagonal_sizes() const {
    if (diag_.empty() || off_.size() + 1 != diag_.size()) {
      throw DomainError(
          "HamiltonianMatrix: tridiagonal arrays must have sizes n and n-1");
    }
  }
  void check_dense_sizes() const {
    if (dense_.empty() || dense_.rows() != dense_.cols()) {
      throw DomainError("HamiltonianMatrix: dense storage must be square");
    }
  }

  std::optional<BoxGeometry> geometry_;
  std::vector<double> diag_;
  std::vector<double> off_;
  linalg::Matrix dense_;
};

// Assemble H for the field's box: diagonal 2d + V(x), hopping -1 between
// nearest neighbors, nothing across the open boundary.
inline HamiltonianMatrix build_hamiltonian(const PotentialField& field) {
  const BoxGeometry& g = field.geometry;
  const std::size_t n = static_cast<std::size_t>(g.num_sites());

  if (g.dimension == 1) {
    std::vector<double> diag(n);
    std::vector<double> off(n - 1, -1.0);
    for (std::size_t i = 0; i < n; ++i) diag[i] = 2.0 + field.values[i];
    return HamiltonianMatrix(g, std::move(diag), std::move(off));
  }

  linalg::Matrix m(n, n);
  const int side = g.side();
  for (int a = 0; a < side; ++a) {
    for (int b = 0; b < side; ++b) {
      const std::size_t i = static_cast<std::size_t>(a * side + b);
      m(i, i) = 4.0 + field.values[i];
      if (a + 1 < side) {
        const std::size_t j = static_cast<std::size_t>((a + 1) * side + b);
        m(i, j) = -1.0;
        m(j, i) = -1.0;
      }
      if (b + 1 < side) {
        const std::size_t j = i + 1;
        m(i, j) = -1.0;
        m(j, i) = -1.0;
      }
    }
  }
  return HamiltonianMatrix(g, std::move(m));
}

}  // namespace entlab::lattice
