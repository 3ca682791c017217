#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "entlab/densities.hpp"
#include "entlab/entropy.hpp"
#include "entlab/errors.hpp"
#include "entlab/lattice.hpp"
#include "entlab/resolvent.hpp"
#include "entlab/spectral.hpp"
#include "entlab/stats.hpp"

// Deterministic parallel Monte Carlo over disorder realizations. Work is
// partitioned by realization index; each worker owns its realizations
// end-to-end (sample -> Hamiltonian -> eigensolve -> estimators) and only
// finished scalars cross the thread boundary, stored by index. The reduction
// then runs in index order, so results are bit-identical for any thread
// count. On top of the runner sit the headline scans.

namespace entlab::ensemble {

struct EnsembleConfig {
  lattice::BoxGeometry geometry;
  densities::DensityModel density;
  double fermi_energy = 1.0;
  std::int64_t realizations = 1000;
  std::uint64_t master_seed = 1;
  double shift_t = 0.0;  // origin shift applied to every realization
  int threads = 0;       // 0: ENTLAB_THREADS env var, else hardware count

  // Test hook: when set, every slot draws this realization index, which
  // forces identical samples (variance must come out exactly 0).
  std::optional<std::uint64_t> fixed_realization_index{};

  void validate() const {
    if (realizations < 2) {
      throw ConfigError("realizations must be >= 2, got " +
                        std::to_string(realizations));
    }
    if (!(fermi_energy > 0.0)) {
      throw ConfigError("fermi_energy must be > 0");
    }
    if (shift_t < 0.0) {
      throw ConfigError("shift_t must be >= 0");
    }
  }
};

inline int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ENTLAB_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// One disorder realization, built lazily: estimators pull only the layers
// they need, and resolvent columns are cached per (z, source) so estimator
// pairs sharing a source reuse one solve.
class Realization {
 public:
  Realization(const EnsembleConfig& config, std::uint64_t index)
      : config_(config), index_(index) {}

  std::uint64_t index() const { return index_; }

  const lattice::PotentialField& field() {
    if (!field_) {
      lattice::PotentialField raw = lattice::sample_potential(
          config_.density, config_.geometry, config_.master_seed, index_);
      field_ = config_.shift_t > 0.0
                   ? lattice::apply_origin_shift(raw, config_.shift_t)
                   : std::move(raw);
    }
    return *field_;
  }

  const lattice::HamiltonianMatrix& hamiltonian() {
    if (!hamiltonian_) hamiltonian_ = lattice::build_hamiltonian(field());
    return *hamiltonian_;
  }

  const spectral::SpectralDecomp& decomposition() {
    if (!decomp_) decomp_ = spectral::eig_sym(hamiltonian());
    return *decomp_;
  }

  const spectral::FermiProjection& projection() {
    if (!projection_) {
      projection_ =
          spectral::fermi_projection(decomposition(), config_.fermi_energy);
    }
    return *projection_;
  }

  const resolvent::GreensColumn& greens(resolvent::SpectralParameter z,
                                        std::size_t source) {
    const auto key = std::make_tuple(z.lambda, z.eta, source);
    auto it = greens_cache_.find(key);
    if (it == greens_cache_.end()) {
      it = greens_cache_
               .emplace(key, resolvent::greens_column(hamiltonian(), z, source))
               .first;
    }
    return it->second;
  }

 private:
  const EnsembleConfig& config_;
  std::uint64_t index_;
  std::optional<lattice::PotentialField> field_;
  std::optional<lattice::HamiltonianMatrix> hamiltonian_;
  std::optional<spectral::SpectralDecomp> decomp_;
  std::optional<spectral::FermiProjection> projection_;
  std::map<std::tuple<double, double, std::size_t>, resolvent::GreensColumn>
      greens_cache_;
};

// The registered scalar functionals of a realization.
struct Estimator {
  enum class Kind {
    kBlockEntropy,        // S of the centered block [-M,M]^d
    kCutEntropy,          // single-cut entropy at (position, side), d=1
    kSplittingResidual,   // S_[-M,M] minus its two cut contributions
    kFractionalMoment,    // |G(x,y;z)|^s of the (possibly shifted) operator
    kProjectionEntryAbs,  // |P(x,y)| along the first axis
    kEntropyBoundRhs,     // cross-cut bound functional at alpha
  };

  Kind kind;
  int m = 0;                                      // block / splitting
  int cut_position = 0;                           // cut
  entropy::CutSide side = entropy::CutSide::kLeft;
  double s = 0.5;                                 // fractional moment order
  double lambda = 0.0;                            // Re z
  double eta = 0.1;                               // Im z
  int x = 0;                                      // site coordinates
  int y = 0;
  double alpha = 0.5;                             // bound functional

  static Estimator block_entropy(int m) {
    Estimator e{};
    e.kind = Kind::kBlockEntropy;
    e.m = m;
    return e;
  }
  static Estimator cut_entropy(int position, entropy::CutSide side) {
    Estimator e{};
    e.kind = Kind::kCutEntropy;
    e.cut_position = position;
    e.side = side;
    return e;
  }
  static Estimator splitting_residual(int m) {
    Estimator e{};
    e.kind = Kind::kSplittingResidual;
    e.m = m;
    return e;
  }
  static Estimator fractional_moment(double s, double lambda, double eta,
                                     int x, int y) {
    Estimator e{};
    e.kind = Kind::kFractionalMoment;
    e.s = s;
    e.lambda = lambda;
    e.eta = eta;
    e.x = x;
    e.y = y;
    return e;
  }
  static Estimator projection_entry_abs(int x, int y) {
    Estimator e{};
    e.kind = Kind::kProjectionEntryAbs;
    e.x = x;
    e.y = y;
    return e;
  }
  static Estimator entropy_bound_rhs(double alpha) {
    Estimator e{};
    e.kind = Kind::kEntropyBoundRhs;
    e.alpha = alpha;
    return e;
  }

  std::string name() const {
    std::ostringstream out;
    switch (kind) {
      case Kind::kBlockEntropy:
        out << "block_entropy(M=" << m << ")";
        break;
      case Kind::kCutEntropy:
        out << "cut_entropy(c=" << cut_position << ",side="
            << (side == entropy::CutSide::kLeft ? "left" : "right") << ")";
        break;
      case Kind::kSplittingResidual:
        out << "splitting_residual(M=" << m << ")";
        break;
      case Kind::kFractionalMoment:
        out << "fractional_moment(s=" << s << ",z=" << lambda << "+" << eta
            << "i,x=" << x << ",y=" << y << ")";
        break;
      case Kind::kProjectionEntryAbs:
        out << "projection_entry_abs(x=" << x << ",y=" << y << ")";
        break;
      case Kind::kEntropyBoundRhs:
        out << "entropy_bound_rhs(alpha=" << alpha << ")";
        break;
    }
    return out.str();
  }

  double evaluate(Realization& r) const {
    switch (kind) {
      case Kind::kBlockEntropy:
        return entropy::block_entropy_centered(r.projection(), m).value;
      case Kind::kCutEntropy:
        return entropy::cut_entropy(r.projection(), cut_position, side).value;
      case Kind::kSplittingResidual:
        return entropy::splitting_residual(r.projection(), m);
      case Kind::kFractionalMoment: {
        const lattice::HamiltonianMatrix& h = r.hamiltonian();
        if (!h.geometry()) {
          throw DomainError("fractional_moment: operator has no geometry");
        }
        const lattice::BoxGeometry& g = *h.geometry();
        const std::size_t iy = static_cast<std::size_t>(
            g.dimension == 1 ? g.index_of(y) : g.index_of(y, 0));
        const std::size_t ix = static_cast<std::size_t>(
            g.dimension == 1 ? g.index_of(x) : g.index_of(x, 0));
        const resolvent::SpectralParameter z(lambda, eta);
        return std::pow(std::abs(r.greens(z, iy)[ix]), s);
      }
      case Kind::kProjectionEntryAbs: {
        const spectral::FermiProjection& p = r.projection();
        const lattice::BoxGeometry& g = *p.geometry;
        const std::size_t ix = static_cast<std::size_t>(
            g.dimension == 1 ? g.index_of(x) : g.index_of(x, 0));
        const std::size_t iy = static_cast<std::size_t>(
            g.dimension == 1 ? g.index_of(y) : g.index_of(y, 0));
        return std::abs(p.matrix(ix, iy));
      }
      case Kind::kEntropyBoundRhs:
        return entropy::entropy_upper_bound_rhs(r.projection(), alpha);
    }
    throw DomainError("Estimator: unknown kind");
  }
};

struct RunDiagnostics {
  std::int64_t requested = 0;
  std::int64_t succeeded = 0;
  std::int64_t retried = 0;
  std::int64_t failed = 0;

  RunDiagnostics& operator+=(const RunDiagnostics& other) {
    requested += other.requested;
    succeeded += other.succeeded;
    retried += other.retried;
    failed += other.failed;
    return *this;
  }
};

struct MultiRunResult {
  // columns[e] holds the samples of estimator e, in realization-index order,
  // with failed realizations removed from every column consistently.
  std::vector<std::vector<double>> columns;
  RunDiagnostics diagnostics;
};

namespace detail {

// Retried realizations draw from indices far above any requested range so
// the replacement stream never collides with a regular realization.
inline constexpr std::uint64_t kRetryIndexOffset = 1ULL << 40;

}  // namespace detail

// Evaluate all estimators over n realizations. Realization i draws index i
// (or the forced test-hook index); a realization whose evaluation throws a
// numerical error is retried once at index i + 2^40 before counting as
// failed. More than 1% failures abort the run.
inline MultiRunResult run_realizations(const EnsembleConfig& config,
                                       std::span<const Estimator> estimators) {
  config.validate();
  if (estimators.empty()) {
    throw DomainError("run_realizations: no estimators given");
  }
  const std::int64_t n = config.realizations;
  const std::size_t num_estimators = estimators.size();

  std::vector<std::vector<double>> slots(
      num_estimators, std::vector<double>(static_cast<std::size_t>(n), 0.0));
  std::vector<char> ok(static_cast<std::size_t>(n), 0);
  std::atomic<std::int64_t> next{0};
  std::atomic<std::int64_t> retried{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  const auto evaluate_at = [&](std::int64_t slot, std::uint64_t index) {
    Realization r(config, index);
    std::vector<double> values(num_estimators);
    for (std::size_t e = 0; e < num_estimators; ++e) {
      values[e] = estimators[e].evaluate(r);
    }
    // All estimators succeeded; publish the whole row.
    for (std::size_t e = 0; e < num_estimators; ++e) {
      slots[e][static_cast<std::size_t>(slot)] = values[e];
    }
    ok[static_cast<std::size_t>(slot)] = 1;
  };

  const auto worker = [&]() {
    while (true) {
      const std::int64_t slot = next.fetch_add(1);
      if (slot >= n) return;
      const std::uint64_t base_index =
          config.fixed_realization_index.value_or(
              static_cast<std::uint64_t>(slot));
      try {
        try {
          evaluate_at(slot, base_index);
        } catch (const NumericalError&) {
          retried.fetch_add(1);
          try {
            evaluate_at(slot, base_index + detail::kRetryIndexOffset);
          } catch (const NumericalError&) {
            // Slot stays failed; accounted after the join.
          }
        }
      } catch (...) {
        // Non-numerical trouble is a bug or a bad config: surface it.
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int thread_count = std::max(
      1, std::min<int>(resolve_thread_count(config.threads),
                       static_cast<int>(std::min<std::int64_t>(n, 1024))));
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int i = 0; i < thread_count; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  MultiRunResult out;
  out.diagnostics.requested = n;
  out.diagnostics.retried = retried.load();
  for (std::int64_t i = 0; i < n; ++i) {
    if (ok[static_cast<std::size_t>(i)]) {
      ++out.diagnostics.succeeded;
    } else {
      ++out.diagnostics.failed;
    }
  }
  if (out.diagnostics.failed * 100 > n) {
    throw EnsembleDegradedError(
        "ensemble degraded: " + std::to_string(out.diagnostics.failed) +
            " of " + std::to_string(n) +
            " realizations failed even after retry",
        n, out.diagnostics.failed);
  }

  out.columns.assign(num_estimators, {});
  for (std::size_t e = 0; e < num_estimators; ++e) {
    out.columns[e].reserve(static_cast<std::size_t>(out.diagnostics.succeeded));
    for (std::int64_t i = 0; i < n; ++i) {
      if (ok[static_cast<std::size_t>(i)]) {
        out.columns[e].push_back(slots[e][static_cast<std::size_t>(i)]);
      }
    }
  }
  return out;
}

// Seed for the bootstrap of one estimator column: a pure function of the
// master seed and the estimator's name, so reruns and thread counts agree.
inline std::uint64_t bootstrap_seed(const EnsembleConfig& config,
                                    const Estimator& estimator) {
  const std::string name = estimator.name();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return rng::key4(config.master_seed, h, 0x626f6f74ULL, 0);
}

inline stats::EnsembleStats run_ensemble(const EnsembleConfig& config,
                                         const Estimator& estimator) {
  const MultiRunResult run = run_realizations(config, {&estimator, 1});
  return stats::summarize(run.columns[0], bootstrap_seed(config, estimator));
}

// ---------------------------------------------------------------------------
// Headline scans.

struct VarianceScanRow {
  int m = 0;
  stats::EnsembleStats stats;
};

struct VarianceScanResult {
  std::vector<VarianceScanRow> per_m;
  stats::EnsembleStats s_minus;  // cut entropy at the origin, left side
  RunDiagnostics diagnostics;
};

// Block-entropy statistics for each M in one ensemble pass (all estimators
// share the realization's eigendecomposition), plus the single-cut S_minus
// needed for the two-cut variance comparison Var{S} vs 2 Var{S_minus}.
inline VarianceScanResult variance_scan(const EnsembleConfig& base,
                                        std::span<const int> m_list) {
  if (m_list.empty()) throw ConfigError("variance_scan: M_list is empty");
  for (int m : m_list) {
    if (m < 1 || 2 * m > base.geometry.half_width) {
      throw ConfigError(
          "variance_scan: every M must satisfy 1 <= M <= half_width/2 "
          "(block_half_width " +
          std::to_string(m) + " vs half_width " +
          std::to_string(base.geometry.half_width) + ")");
    }
  }
  std::vector<Estimator> estimators;
  estimators.reserve(m_list.size() + 1);
  for (int m : m_list) estimators.push_back(Estimator::block_entropy(m));
  if (base.geometry.dimension == 1) {
    estimators.push_back(Estimator::cut_entropy(0, entropy::CutSide::kLeft));
  }

  const MultiRunResult run = run_realizations(base, estimators);
  VarianceScanResult out;
  out.diagnostics = run.diagnostics;
  for (std::size_t i = 0; i < m_list.size(); ++i) {
    out.per_m.push_back(
        {m_list[i],
         stats::summarize(run.columns[i], bootstrap_seed(base, estimators[i]))});
  }
  if (base.geometry.dimension == 1) {
    out.s_minus = stats::summarize(run.columns[m_list.size()],
                                   bootstrap_seed(base, estimators.back()));
  }
  return out;
}

struct ShiftDecayRow {
  double t = 0.0;
  stats::EnsembleStats stats;
  double eps = 0.0;  // E{S^t} / E{S^0}
};

struct ShiftDecayResult {
  std::vector<ShiftDecayRow> per_t;
  stats::EnsembleStats baseline;  // unshifted S_minus
  stats::LinearFit loglog_fit;    // log mean vs log(t - E); slope < 0 expected
  RunDiagnostics diagnostics;
};

// Mean decay of the origin-cut entropy under the origin shift t. Every run
// reuses the base master seed, so the same disorder fields underlie every t
// (common random numbers); the shift is the only difference.
inline ShiftDecayResult shift_decay_scan(const EnsembleConfig& base,
                                         std::span<const double> t_list) {
  if (t_list.empty()) throw ConfigError("shift_decay_scan: t_list is empty");
  for (double t : t_list) {
    if (!(t > base.fermi_energy)) {
      throw ConfigError(
          "shift_decay_scan: every t in t_list must exceed fermi_energy");
    }
  }
  if (base.geometry.dimension != 1) {
    throw ConfigError("shift_decay_scan: requires dimension 1");
  }

  const Estimator cut = Estimator::cut_entropy(0, entropy::CutSide::kLeft);
  ShiftDecayResult out;

  EnsembleConfig cfg = base;
  cfg.shift_t = 0.0;
  MultiRunResult baseline_run = run_realizations(cfg, {&cut, 1});
  out.baseline =
      stats::summarize(baseline_run.columns[0], bootstrap_seed(cfg, cut));
  out.diagnostics += baseline_run.diagnostics;

  std::vector<double> log_gap;
  std::vector<double> log_mean;
  for (double t : t_list) {
    cfg.shift_t = t;
    MultiRunResult run = run_realizations(cfg, {&cut, 1});
    out.diagnostics += run.diagnostics;
    ShiftDecayRow row;
    row.t = t;
    row.stats = stats::summarize(run.columns[0], bootstrap_seed(cfg, cut));
    row.eps = out.baseline.mean != 0.0 ? row.stats.mean / out.baseline.mean
                                       : 0.0;
    out.per_t.push_back(row);
    if (row.stats.mean > 0.0) {
      log_gap.push_back(std::log(t - base.fermi_energy));
      log_mean.push_back(std::log(row.stats.mean));
    }
  }
  if (log_gap.size() >= 3) {
    out.loglog_fit = stats::linear_regression(log_gap, log_mean);
  }
  return out;
}

struct MixingRow {
  int m = 0;
  stats::Covariance covariance;  // cov(right cut at +M, left cut at -M)
  stats::EnsembleStats plus_stats;
  stats::EnsembleStats minus_stats;
};

struct MixingResult {
  std::vector<MixingRow> per_m;
  RunDiagnostics diagnostics;
};

// Mixing diagnostic: the two cut entropies live 2M sites apart, so their
// covariance should die out as M grows.
inline MixingResult mixing_covariance(const EnsembleConfig& base,
                                      std::span<const int> m_list) {
  if (m_list.empty()) throw ConfigError("mixing_covariance: M_list is empty");
  for (int m : m_list) {
    if (m < 1 || 2 * m > base.geometry.half_width) {
      throw ConfigError(
          "mixing_covariance: every M must satisfy 1 <= M <= half_width/2");
    }
  }
  if (base.geometry.dimension != 1) {
    throw ConfigError("mixing_covariance: requires dimension 1");
  }

  std::vector<Estimator> estimators;
  for (int m : m_list) {
    estimators.push_back(Estimator::cut_entropy(m, entropy::CutSide::kRight));
    estimators.push_back(Estimator::cut_entropy(-m, entropy::CutSide::kLeft));
  }
  const MultiRunResult run = run_realizations(base, estimators);

  MixingResult out;
  out.diagnostics = run.diagnostics;
  for (std::size_t i = 0; i < m_list.size(); ++i) {
    const std::vector<double>& plus = run.columns[2 * i];
    const std::vector<double>& minus = run.columns[2 * i + 1];
    MixingRow row;
    row.m = m_list[i];
    row.covariance = stats::covariance_of(plus, minus);
    row.plus_stats =
        stats::summarize(plus, bootstrap_seed(base, estimators[2 * i]));
    row.minus_stats =
        stats::summarize(minus, bootstrap_seed(base, estimators[2 * i + 1]));
    out.per_m.push_back(row);
  }
  return out;
}

struct AreaLawRow {
  int m = 0;
  int side_length = 0;               // L = 2M+1
  stats::EnsembleStats s_over_l;     // statistics of S / L
};

struct AreaLawResult {
  std::vector<AreaLawRow> per_m;
  RunDiagnostics diagnostics;
};

// d=2 contrast experiment: statistics of the entropy per unit boundary
// length, S/L. Disorder should pin the mean (area law) and shrink the
// fluctuations as L grows; the clean system grows logarithmically instead.
inline AreaLawResult area_law_scan_2d(const EnsembleConfig& base,
                                      std::span<const int> m_list) {
  if (base.geometry.dimension != 2) {
    throw ConfigError("area_law_scan_2d: requires dimension 2");
  }
  const std::int64_t sites = base.geometry.num_sites();
  if (sites > 40000) {
    throw ConfigError(
        "area_law_scan_2d: box has " + std::to_string(sites) +
        " sites; the cap is 40000 ((2N+1)^2 <= 4e4)");
  }
  if (m_list.empty()) throw ConfigError("area_law_scan_2d: M_list is empty");
  for (int m : m_list) {
    if (m < 1 || 2 * m > base.geometry.half_width) {
      throw ConfigError(
          "area_law_scan_2d: every M must satisfy 1 <= M <= half_width/2");
    }
  }

  std::vector<Estimator> estimators;
  for (int m : m_list) estimators.push_back(Estimator::block_entropy(m));
  const MultiRunResult run = run_realizations(base, estimators);

  AreaLawResult out;
  out.diagnostics = run.diagnostics;
  for (std::size_t i = 0; i < m_list.size(); ++i) {
    const int side = 2 * m_list[i] + 1;
    std::vector<double> scaled = run.columns[i];
    for (double& v : scaled) v /= static_cast<double>(side);
    AreaLawRow row;
    row.m = m_list[i];
    row.side_length = side;
    row.s_over_l =
        stats::summarize(scaled, bootstrap_seed(base, estimators[i]));
    out.per_m.push_back(row);
  }
  return out;
}

}  // namespace entlab::ensemble
