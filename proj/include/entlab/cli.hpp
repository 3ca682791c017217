#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "entlab/csv.hpp"
#include "entlab/densities.hpp"
#include "entlab/ensemble.hpp"
#include "entlab/errors.hpp"
#include "entlab/fractional_moments.hpp"
#include "entlab/version.hpp"

// Command-line front end. Grammar:
//   entlab <command> [--config FILE] [--key value ...] [--output-dir DIR]
// Config files are plain key=value lines ('#' comments); flags override file
// values. Every command writes plot-ready CSVs plus a manifest.json that
// echoes the fully resolved configuration, so any run can be reproduced
// exactly. Exit codes: 0 ok, 2 config error, 3 degraded ensemble, 4
// numerical error.

namespace entlab::cli {

enum class ValueType { kInt, kReal, kString, kIntList, kRealList };

struct KeySpec {
  const char* key;
  ValueType type;
  const char* default_value;
  const char* help;
};

namespace detail {

inline const std::vector<KeySpec>& common_keys() {
  static const std::vector<KeySpec> keys = {
      {"dimension", ValueType::kInt, "1", "lattice dimension (1 or 2)"},
      {"half_width", ValueType::kInt, "64", "box half-width N; box is [-N,N]^d"},
      {"block_half_width", ValueType::kInt, "0",
       "declared block half-width M (0: derived from M_list)"},
      {"fermi_energy", ValueType::kReal, "1.0", "Fermi energy E > 0"},
      {"realizations", ValueType::kInt, "1000", "number of disorder samples"},
      {"master_seed", ValueType::kInt, "12345", "master RNG seed"},
      {"threads", ValueType::kInt, "0",
       "worker threads (0: ENTLAB_THREADS env var, else hardware count)"},
      {"density", ValueType::kString, "exponential",
       "potential law: exponential | shifted_exponential | half_gaussian | "
       "tabulated | zero"},
      {"density_rate", ValueType::kReal, "1.0",
       "rate a of the (shifted) exponential law"},
      {"density_offset", ValueType::kReal, "0.0",
       "offset of the shifted exponential law"},
      {"density_scale", ValueType::kReal, "1.0",
       "scale sigma of the half-gaussian law"},
      {"density_file", ValueType::kString, "",
       "two-column (v, f) file for the tabulated law"},
      {"density_kappa", ValueType::kReal, "1.0",
       "declared finite-moment exponent kappa"},
      {"output_dir", ValueType::kString, "entlab_out",
       "directory for CSV and manifest outputs"},
  };
  return keys;
}

struct CommandSpec {
  const char* name;
  const char* summary;
  std::vector<KeySpec> keys;  // command-specific, on top of common_keys()
};

inline const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> cmds = {
      {"variance-scan",
       "block-entropy mean/variance over M, with 2 Var{S-} and the HCR "
       "variance bound",
       {
           {"M_list", ValueType::kIntList, "8,16,32",
            "block half-widths to scan"},
           {"t_grid", ValueType::kRealList, "2,5,10,20,50",
            "shift grid for the companion eps(t) measurement"},
           {"eps_realizations", ValueType::kInt, "400",
            "ensemble size per t for the eps(t) companion scan"},
       }},
      {"shift-decay",
       "decay of the origin-cut entropy mean under the origin shift t",
       {
           {"t_list", ValueType::kRealList, "2,5,10,20,50",
            "origin shifts to scan (each must exceed fermi_energy)"},
       }},
      {"hcr-bound",
       "variance lower bound A(t) from the measured mean and eps(t)",
       {
           {"t_grid", ValueType::kRealList, "2,5,10,20,50",
            "shift grid for F(t) and eps(t)"},
           {"eps_realizations", ValueType::kInt, "400",
            "ensemble size per t for the eps(t) measurement"},
       }},
      {"splitting",
       "two-cut splitting residual S_[-M,M] - S_cut(-M) - S_cut(M+1) over M",
       {
           {"M_list", ValueType::kIntList, "8,16,24",
            "block half-widths to scan"},
       }},
      {"projection-decay",
       "ensemble mean of |P(0,r)| over r with an exponential-decay fit",
       {
           {"r_max", ValueType::kInt, "20", "largest distance r"},
       }},
      {"resolvent-check",
       "resolvent identity battery: rank-one update, Weyl factorization, "
       "half-line decoupling",
       {
           {"cases", ValueType::kInt, "100", "number of random realizations"},
           {"lambda", ValueType::kReal, "0.5", "Re z"},
           {"eta", ValueType::kReal, "0.1", "Im z (nonzero)"},
           {"t", ValueType::kReal, "50.0", "origin shift for the decoupling check"},
       }},
      {"fractional-moments",
       "Monte Carlo fractional moments of the resolvent: spatial decay and "
       "shift scaling",
       {
           {"s", ValueType::kReal, "0.5", "moment order s in (0,1)"},
           {"lambda", ValueType::kReal, "0.5", "Re z"},
           {"eta", ValueType::kReal, "0.1", "Im z (nonzero)"},
           {"x_max", ValueType::kInt, "15",
            "spatial pairs (x,-1) for x = 1..x_max"},
           {"t", ValueType::kReal, "50.0", "origin shift for the spatial scan"},
           {"t_list", ValueType::kRealList, "10,20,40,80",
            "shifts for the (t-E)^{-s} scaling scan at (0,0)"},
       }},
      {"area-law-2d",
       "d=2 contrast: statistics of S/L over block sizes",
       {
           {"M_list", ValueType::kIntList, "3,4,6",
            "block half-widths to scan"},
       }},
      {"density-check",
       "density diagnostics: F(t), J(t), Jensen bound, and the toy variance "
       "inequality",
       {
           {"t_grid", ValueType::kRealList, "0.5,1,2,5", "shifts to evaluate"},
           {"hcr_n", ValueType::kInt, "100000",
            "sample count for the toy variance check"},
       }},
  };
  return cmds;
}

inline const CommandSpec* find_command(const std::string& name) {
  for (const CommandSpec& c : commands()) {
    if (name == c.name) return &c;
  }
  return nullptr;
}

inline std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r\n");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r\n");
  return s.substr(from, to - from + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline std::int64_t parse_int(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  std::int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + raw +
                      "'");
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v.empty()) {
    throw ConfigError("key '" + key + "': expected a number, got ''");
  }
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + raw +
                      "'");
  }
  return out;
}

inline void type_check(const KeySpec& spec, const std::string& value) {
  switch (spec.type) {
    case ValueType::kInt:
      parse_int(spec.key, value);
      return;
    case ValueType::kReal:
      parse_real(spec.key, value);
      return;
    case ValueType::kString:
      return;
    case ValueType::kIntList:
      for (const std::string& part : split(value, ','))
        parse_int(spec.key, part);
      return;
    case ValueType::kRealList:
      for (const std::string& part : split(value, ','))
        parse_real(spec.key, part);
      return;
  }
}

}  // namespace detail

// Fully resolved experiment configuration: every key has a value (default or
// user-supplied), already type-checked against the command's schema.
struct ExperimentConfig {
  std::string command;
  std::map<std::string, std::string> values;

  std::int64_t get_int(const std::string& key) const {
    return detail::parse_int(key, at(key));
  }
  double get_real(const std::string& key) const {
    return detail::parse_real(key, at(key));
  }
  const std::string& get_string(const std::string& key) const {
    return at(key);
  }
  std::vector<int> get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (const std::string& part : detail::split(at(key), ',')) {
      out.push_back(static_cast<int>(detail::parse_int(key, part)));
    }
    return out;
  }
  std::vector<double> get_real_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& part : detail::split(at(key), ',')) {
      out.push_back(detail::parse_real(key, part));
    }
    return out;
  }

 private:
  const std::string& at(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) {
      throw ConfigError("internal: key '" + key + "' missing from config");
    }
    return it->second;
  }
};

// Merge defaults, an optional config file, and flag overrides (in that
// order), rejecting unknown keys and type mismatches by name.
inline ExperimentConfig parse_config(
    const std::string& command, const std::optional<std::string>& config_path,
    const std::vector<std::pair<std::string, std::string>>& flag_overrides) {
  const detail::CommandSpec* spec = detail::find_command(command);
  if (!spec) {
    throw ConfigError("unknown command '" + command + "'");
  }

  std::map<std::string, const KeySpec*> schema;
  for (const KeySpec& k : detail::common_keys()) schema[k.key] = &k;
  for (const KeySpec& k : spec->keys) schema[k.key] = &k;

  ExperimentConfig config;
  config.command = command;
  for (const auto& [key, keyspec] : schema) {
    config.values[key] = keyspec->default_value;
  }

  const auto apply = [&schema, &config](const std::string& key,
                                        const std::string& value,
                                        const std::string& origin) {
    const auto it = schema.find(key);
    if (it == schema.end()) {
      throw ConfigError("unknown key '" + key + "' (" + origin + ")");
    }
    detail::type_check(*it->second, value);
    config.values[key] = detail::trim(value);
  };

  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw ConfigError("config file not readable: " + *config_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string stripped = detail::trim(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config file " + *config_path + ": line " +
                          std::to_string(lineno) + " is not 'key = value'");
      }
      apply(detail::trim(stripped.substr(0, eq)),
            detail::trim(stripped.substr(eq + 1)),
            *config_path + ":" + std::to_string(lineno));
    }
  }
  for (const auto& [key, value] : flag_overrides) {
    apply(key, value, "command line");
  }
  return config;
}

namespace detail {

inline densities::DensityModel build_density(const ExperimentConfig& config,
                                             std::ostream& err) {
  const std::string& kind = config.get_string("density");
  const double kappa = config.get_real("density_kappa");
  if (kind == "exponential") {
    return densities::DensityModel::exponential(config.get_real("density_rate"),
                                                kappa);
  }
  if (kind == "shifted_exponential") {
    return densities::DensityModel::shifted_exponential(
        config.get_real("density_rate"), config.get_real("density_offset"),
        kappa);
  }
  if (kind == "half_gaussian") {
    return densities::DensityModel::half_gaussian(
        config.get_real("density_scale"), kappa);
  }
  if (kind == "tabulated") {
    const std::string& path = config.get_string("density_file");
    if (path.empty()) {
      throw ConfigError(
          "key 'density_file': required when density = tabulated");
    }
    return densities::DensityModel::load_tabulated(path, kappa, &err);
  }
  if (kind == "zero") {
    return densities::DensityModel::zero();
  }
  throw ConfigError("key 'density': unknown kind '" + kind + "'");
}

inline ensemble::EnsembleConfig build_ensemble_config(
    const ExperimentConfig& config, std::ostream& err,
    int default_dimension = 1) {
  int dimension = static_cast<int>(config.get_int("dimension"));
  // area-law-2d is the only d=2 command; let it default sensibly.
  if (config.command == "area-law-2d" && dimension == 1) {
    dimension = default_dimension;
  }
  const int half_width = static_cast<int>(config.get_int("half_width"));
  int block_half_width = static_cast<int>(config.get_int("block_half_width"));
  if (block_half_width == 0) {
    // Derive the declared M from the scan list when present.
    if (config.values.count("M_list")) {
      for (int m : config.get_int_list("M_list")) {
        block_half_width = std::max(block_half_width, m);
      }
    }
    if (block_half_width == 0) block_half_width = half_width / 2;
  }
  const lattice::BoxGeometry geometry(dimension, half_width, block_half_width);

  ensemble::EnsembleConfig cfg{geometry, build_density(config, err)};
  cfg.fermi_energy = config.get_real("fermi_energy");
  cfg.realizations = config.get_int("realizations");
  cfg.master_seed = static_cast<std::uint64_t>(config.get_int("master_seed"));
  cfg.threads = static_cast<int>(config.get_int("threads"));
  cfg.validate();
  return cfg;
}

inline std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json stats_json(const stats::EnsembleStats& s) {
  return nlohmann::json{
      {"n", s.n},
      {"mean", s.mean},
      {"variance", s.variance},
      {"stderr_mean", s.stderr_mean},
      {"mean_ci_95", {s.mean_ci_lo, s.mean_ci_hi}},
      {"variance_ci_95", {s.variance_ci_lo, s.variance_ci_hi}},
      {"samples_digest", s.samples_digest},
  };
}

inline nlohmann::json diagnostics_json(const ensemble::RunDiagnostics& d) {
  return nlohmann::json{{"requested", d.requested},
                        {"succeeded", d.succeeded},
                        {"retried", d.retried},
                        {"failed", d.failed}};
}

// Manifest skeleton shared by all commands; `results` filled per command.
struct ManifestBuilder {
  nlohmann::json doc;

  ManifestBuilder(const ExperimentConfig& config,
                  const ensemble::RunDiagnostics* diag) {
    doc["artifact"] = "entlab";
    doc["version"] = kVersion;
    doc["command"] = config.command;
    doc["started_utc"] = utc_timestamp();
    nlohmann::json cfg;
    for (const auto& [key, value] : config.values) cfg[key] = value;
    doc["config"] = cfg;
    if (diag) doc["realizations"] = diagnostics_json(*diag);
  }

  void write(const std::filesystem::path& dir) {
    doc["finished_utc"] = utc_timestamp();
    csv::Writer::write_file_atomically(dir / "manifest.json",
                                       doc.dump(2) + "\n");
  }
};

inline double median_abs(std::vector<double> xs) {
  for (double& x : xs) x = std::abs(x);
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// --- command bodies -------------------------------------------------------

inline void run_variance_scan(const ExperimentConfig& config,
                              const std::filesystem::path& dir,
                              std::ostream& err) {
  ensemble::EnsembleConfig cfg = build_ensemble_config(config, err);
  const std::vector<int> m_list = config.get_int_list("M_list");
  const ensemble::VarianceScanResult scan =
      ensemble::variance_scan(cfg, m_list);

  // Companion eps(t) measurement for the variance bound; only meaningful
  // for honest densities in d=1.
  double a_bound = 0.0;
  double two_var_sminus = 0.0;
  nlohmann::json hcr_json;
  ensemble::RunDiagnostics diag = scan.diagnostics;
  if (cfg.geometry.dimension == 1) {
    two_var_sminus = 2.0 * scan.s_minus.variance;
    if (cfg.density.has_pdf()) {
      const std::vector<double> t_grid = config.get_real_list("t_grid");
      ensemble::EnsembleConfig eps_cfg = cfg;
      eps_cfg.realizations = config.get_int("eps_realizations");
      const ensemble::ShiftDecayResult eps_scan =
          ensemble::shift_decay_scan(eps_cfg, t_grid);
      diag += eps_scan.diagnostics;
      std::vector<double> eps;
      for (const auto& row : eps_scan.per_t) eps.push_back(row.eps);
      const densities::HcrBound bound =
          densities::hcr_bound(scan.s_minus.mean, cfg.density, t_grid, eps);
      a_bound = bound.A;
      hcr_json = {{"t0", bound.t0},
                  {"F_value", bound.F_value},
                  {"effective_mean", bound.mean_S_minus},
                  {"A", bound.A},
                  {"degenerate", bound.degenerate}};
      nlohmann::json eps_json = nlohmann::json::array();
      for (const auto& row : eps_scan.per_t) {
        eps_json.push_back({{"t", row.t},
                            {"mean", row.stats.mean},
                            {"eps", row.eps}});
      }
      hcr_json["eps_scan"] = eps_json;
      hcr_json["eps_baseline_mean"] = eps_scan.baseline.mean;
    }
  }

  csv::Writer csv(
      "M,L,n,mean_S,var_S,var_S_ci_lo,var_S_ci_hi,two_var_Sminus,A_bound");
  for (const auto& row : scan.per_m) {
    csv.row(row.m, 2 * row.m + 1, row.stats.n, row.stats.mean,
            row.stats.variance, row.stats.variance_ci_lo,
            row.stats.variance_ci_hi, two_var_sminus, a_bound);
  }
  csv.write(dir / "variance_scan.csv");

  ManifestBuilder manifest(config, &diag);
  nlohmann::json per_m = nlohmann::json::array();
  for (const auto& row : scan.per_m) {
    per_m.push_back({{"M", row.m}, {"stats", stats_json(row.stats)}});
  }
  manifest.doc["results"]["per_M"] = per_m;
  if (cfg.geometry.dimension == 1) {
    manifest.doc["results"]["s_minus"] = stats_json(scan.s_minus);
    manifest.doc["results"]["two_var_Sminus"] = two_var_sminus;
  }
  if (!hcr_json.is_null()) manifest.doc["results"]["hcr_bound"] = hcr_json;
  manifest.write(dir);
}

inline void run_shift_decay(const ExperimentConfig& config,
                            const std::filesystem::path& dir,
                            std::ostream& err) {
  const ensemble::EnsembleConfig cfg = build_ensemble_config(config, err);
  const std::vector<double> t_list = config.get_real_list("t_list");
  const ensemble::ShiftDecayResult scan =
      ensemble::shift_decay_scan(cfg, t_list);

  csv::Writer csv("t,n,mean_St,ci_lo,ci_hi,eps_t");
  for (const auto& row : scan.per_t) {
    csv.row(row.t, row.stats.n, row.stats.mean, row.stats.mean_ci_lo,
            row.stats.mean_ci_hi, row.eps);
  }
  csv.write(dir / "shift_decay.csv");

  ManifestBuilder manifest(config, &scan.diagnostics);
  manifest.doc["results"]["baseline"] = stats_json(scan.baseline);
  manifest.doc["results"]["loglog_fit"] = {
      {"slope", scan.loglog_fit.slope},
      {"intercept", scan.loglog_fit.intercept},
      {"r_squared", scan.loglog_fit.r_squared}};
  manifest.write(dir);
}

inline void run_hcr_bound(const ExperimentConfig& config,
                          const std::filesystem::path& dir,
                          std::ostream& err) {
  const ensemble::EnsembleConfig cfg = build_ensemble_config(config, err);
  if (cfg.geometry.dimension != 1) {
    throw ConfigError("hcr-bound: requires dimension 1");
  }
  const std::vector<double> t_grid = config.get_real_list("t_grid");

  const ensemble::Estimator cut =
      ensemble::Estimator::cut_entropy(0, entropy::CutSide::kLeft);
  const stats::EnsembleStats baseline = ensemble::run_ensemble(cfg, cut);

  ensemble::EnsembleConfig eps_cfg = cfg;
  eps_cfg.realizations = config.get_int("eps_realizations");
  const ensemble::ShiftDecayResult eps_scan =
      ensemble::shift_decay_scan(eps_cfg, t_grid);
  std::vector<double> eps;
  for (const auto& row : eps_scan.per_t) eps.push_back(row.eps);

  const densities::HcrBound best =
      densities::hcr_bound(baseline.mean, cfg.density, t_grid, eps);

  csv::Writer csv("t,F_t,eps_t,A_t");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    double f_t = 0.0;
    double a_t = 0.0;
    bool defined = true;
    try {
      f_t = densities::F_of_t(cfg.density, t_grid[i]);
    } catch (const NumericalError&) {
      defined = false;
    }
    if (defined && f_t > 0.0) {
      const double eff = baseline.mean * (1.0 - eps[i]);
      a_t = eff * eff / f_t;
    }
    csv.row(t_grid[i], f_t, eps[i], a_t);
  }
  csv.write(dir / "hcr_bound.csv");

  ensemble::RunDiagnostics diag = eps_scan.diagnostics;
  diag.requested += cfg.realizations;
  diag.succeeded += baseline.n;
  diag.failed += cfg.realizations - baseline.n;
  ManifestBuilder manifest(config, &diag);
  manifest.doc["results"]["mean_S_minus"] = baseline.mean;
  manifest.doc["results"]["best"] = {{"t0", best.t0},
                                     {"F_value", best.F_value},
                                     {"effective_mean", best.mean_S_minus},
                                     {"A", best.A},
                                     {"degenerate", best.degenerate}};
  manifest.write(dir);
}

inline void run_splitting(const ExperimentConfig& config,
                          const std::filesystem::path& dir,
                          std::ostream& err) {
  const ensemble::EnsembleConfig cfg = build_ensemble_config(config, err);
  if (cfg.geometry.dimension != 1) {
    throw ConfigError("splitting: requires dimension 1");
  }
  const std::vector<int> m_list = config.get_int_list("M_list");
  for (int m : m_list) {
    if (m < 1 || 2 * m > cfg.geometry.half_width) {
      throw ConfigError(
          "splitting: every M must satisfy 1 <= M <= half_width/2");
    }
  }

  std::vector<ensemble::Estimator> estimators;
  for (int m : m_list) {
    estimators.push_back(ensemble::Estimator::splitting_residual(m));
  }
  const ensemble::MultiRunResult run =
      ensemble::run_realizations(cfg, estimators);

  csv::Writer csv("M,n,median_abs_residual,mean_residual,mean_ci_lo,mean_ci_hi");
  ManifestBuilder manifest(config, &run.diagnostics);
  nlohmann::json per_m = nlohmann::json::array();
  for (std::size_t i = 0; i < m_list.size(); ++i) {
    const stats::EnsembleStats s = stats::summarize(
        run.columns[i], ensemble::bootstrap_seed(cfg, estimators[i]));
    const double med = median_abs(run.columns[i]);
    csv.row(m_list[i], s.n, med, s.mean, s.mean_ci_lo, s.mean_ci_hi);
    per_m.push_back({{"M", m_list[i]},
                     {"median_abs_residual", med},
                     {"stats", stats_json(s)}});
  }
  csv.write(dir / "splitting.csv");
  manifest.doc["results"]["per_M"] = per_m;
  manifest.write(dir);
}

inline void run_projection_decay(const ExperimentConfig& config,
                                 const std::filesystem::path& dir,
                                 std::ostream& err) {
  const ensemble::EnsembleConfig cfg = build_ensemble_config(config, err);
  const int r_max = static_cast<int>(config.get_int("r_max"));
  if (r_max < 3 || r_max > cfg.geometry.half_width / 2) {
    throw ConfigError(
        "projection-decay: r_max must satisfy 3 <= r_max <= half_width/2");
  }

  std::vector<ensemble::Estimator> estimators;
  for (int r = 0; r <= r_max; ++r) {
    estimators.push_back(ensemble::Estimator::projection_entry_abs(0, r));
  }
  const ensemble::MultiRunResult run =
      ensemble::run_realizations(cfg, estimators);

  csv::Writer csv("r,n,mean_absP,mean_ci_lo,mean_ci_hi");
  std::vector<std::pair<int, double>> profile;
  for (int r = 0; r <= r_max; ++r) {
    const stats::EnsembleStats s =
        stats::summarize(run.columns[static_cast<std::size_t>(r)],
                         ensemble::bootstrap_seed(cfg, estimators[
                             static_cast<std::size_t>(r)]));
    csv.row(r, s.n, s.mean, s.mean_ci_lo, s.mean_ci_hi);
    if (r >= 1) profile.emplace_back(r, s.mean);
  }
  csv.write(dir / "projection_decay.csv");

  const spectral::DecayFit fit = spectral::fit_exponential_decay(profile);
  ManifestBuilder manifest(config, &run.diagnostics);
  manifest.doc["results"]["decay_fit"] = {
      {"rate", fit.rate},
      {"amplitude_log", fit.amplitude_log},
      {"r_squared", fit.r_squared}};
  manifest.write(dir);
}

inline void run_resolvent_check(const ExperimentConfig& config,
                                const std::filesystem::path& dir,
                                std::ostream& err) {
  const ensemble::EnsembleConfig cfg = build_ensemble_config(config, err);
  if (cfg.geometry.dimension != 1) {
    throw ConfigError("resolvent-check: requires dimension 1");
  }
  const std::int64_t cases = config.get_int("cases");
  if (cases < 1) throw ConfigError("resolvent-check: cases must be >= 1");
  const resolvent::SpectralParameter z(config.get_real("lambda"),
                                       config.get_real("eta"));
  const double t = config.get_real("t");
  const int n_half = cfg.geometry.half_width;
  const int xi = std::max(1, n_half / 8);

  csv::Writer csv("case,check,residual_rel");
  double max_rank_one = 0.0;
  double max_weyl = 0.0;
  double max_decoupled = 0.0;
  for (std::int64_t c = 0; c < cases; ++c) {
    const lattice::PotentialField field = lattice::sample_potential(
        cfg.density, cfg.geometry, cfg.master_seed,
        static_cast<std::uint64_t>(c));
    const lattice::HamiltonianMatrix h = lattice::build_hamiltonian(field);

    // Rank-one update identity at a handful of interior pairs.
    double rank_one_rel = 0.0;
    for (const auto& [x, y] : {std::pair{0, 0}, std::pair{xi, -xi},
                               std::pair{2 * xi, -xi}}) {
      const resolvent::RankOneCheck chk =
          resolvent::rank_one_shift_identity_check(h, t, z, x, y);
      const double rel = std::abs(chk.direct - chk.updated) /
                         std::max(std::abs(chk.direct), 1e-300);
      rank_one_rel = std::max(rank_one_rel, rel);
    }
    csv.row(c, 1, rank_one_rel);
    max_rank_one = std::max(max_rank_one, rank_one_rel);

    // Weyl factorization G(x,y) = G(0,0) psi_+(x) psi_-(y) vs direct solve.
    const resolvent::WeylSolutions weyl = resolvent::weyl_solutions(h, z);
    const std::size_t origin =
        static_cast<std::size_t>(cfg.geometry.origin_index());
    const resolvent::GreensColumn col0 = resolvent::greens_column(h, z, origin);
    double weyl_rel = 0.0;
    for (const auto& [x, y] : {std::pair{xi, -xi}, std::pair{2 * xi, 0},
                               std::pair{0, -2 * xi}}) {
      const resolvent::GreensColumn coly = resolvent::greens_column(
          h, z, static_cast<std::size_t>(cfg.geometry.index_of(y)));
      const linalg::cplx direct =
          coly[static_cast<std::size_t>(cfg.geometry.index_of(x))];
      const linalg::cplx factored =
          col0[origin] * weyl.plus_at(x) * weyl.minus_at(y);
      weyl_rel = std::max(weyl_rel, std::abs(direct - factored) /
                                        std::max(std::abs(direct), 1e-300));
    }
    csv.row(c, 2, weyl_rel);
    max_weyl = std::max(max_weyl, weyl_rel);

    // Half-line decoupling of the shifted operator.
    const lattice::HamiltonianMatrix shifted = lattice::build_hamiltonian(
        lattice::apply_origin_shift(field, t));
    const resolvent::DecoupledResiduals dec =
        resolvent::decoupled_resolvent_check(shifted, z, xi, -xi);
    const double dec_rel =
        std::max(dec.relative_plus(), dec.relative_minus());
    csv.row(c, 3, dec_rel);
    max_decoupled = std::max(max_decoupled, dec_rel);
  }
  csv.write(dir / "resolvent_check.csv");

  ManifestBuilder manifest(config, nullptr);
  manifest.doc["results"]["max_rank_one_rel"] = max_rank_one;
  manifest.doc["results"]["max_weyl_rel"] = max_weyl;
  manifest.doc["results"]["max_decoupled_rel"] = max_decoupled;
  manifest.doc["results"]["checks"] = {
      {"1", "rank-one update identity"},
      {"2", "Weyl factorization"},
      {"3", "half-line decoupling"}};
  manifest.write(dir);
}

inline void run_fractional_moments(const ExperimentConfig& config,
                                   const std::filesystem::path& dir,
                                   std::ostream& err) {
  const ensemble::EnsembleConfig cfg = build_ensemble_config(config, err);
  if (cfg.geometry.dimension != 1) {
    throw ConfigError("fractional-moments: requires dimension 1");
  }
  const double s = config.get_real("s");
  const resolvent::SpectralParameter z(config.get_real("lambda"),
                                       config.get_real("eta"));
  const double t = config.get_real("t");
  const int x_max = static_cast<int>(config.get_int("x_max"));
  if (x_max < 3 || x_max > cfg.geometry.half_width / 2) {
    throw ConfigError(
        "fractional-moments: x_max must satisfy 3 <= x_max <= half_width/2");
  }

  std::vector<std::pair<int, int>> pairs;
  for (int x = 1; x <= x_max; ++x) pairs.emplace_back(x, -1);
  const resolvent::FractionalMomentScan spatial =
      resolvent::fractional_moment_scan(cfg, s, z, pairs, t);

  csv::Writer spatial_csv("x,y,distance,n,mean_absG_s,ci_lo,ci_hi");
  for (const auto& row : spatial.per_pair) {
    spatial_csv.row(row.x, row.y, row.distance, row.stats.n, row.stats.mean,
                    row.stats.mean_ci_lo, row.stats.mean_ci_hi);
  }
  spatial_csv.write(dir / "fractional_moments_spatial.csv");

  const std::vector<double> t_list = config.get_real_list("t_list");
  const resolvent::ShiftScalingScan scaling =
      resolvent::fractional_moment_shift_scan(cfg, s, z, t_list);

  csv::Writer tscan_csv("t,n,mean_absG00_s,ci_lo,ci_hi");
  for (const auto& row : scaling.per_t) {
    tscan_csv.row(row.t, row.stats.n, row.stats.mean, row.stats.mean_ci_lo,
                  row.stats.mean_ci_hi);
  }
  tscan_csv.write(dir / "fractional_moments_tscan.csv");

  ensemble::RunDiagnostics diag = spatial.diagnostics;
  diag += scaling.diagnostics;
  ManifestBuilder manifest(config, &diag);
  if (spatial.decay_fit_valid) {
    manifest.doc["results"]["spatial_fit"] = {
        {"rate", spatial.decay_fit.rate},
        {"amplitude_log", spatial.decay_fit.amplitude_log},
        {"r_squared", spatial.decay_fit.r_squared}};
  }
  manifest.doc["results"]["shift_scaling_fit"] = {
      {"slope", scaling.loglog_fit.slope},
      {"expected_slope", -s},
      {"r_squared", scaling.loglog_fit.r_squared}};
  manifest.write(dir);
}

inline void run_area_law_2d(const ExperimentConfig& config,
                            const std::filesystem::path& dir,
                            std::ostream& err) {
  const ensemble::EnsembleConfig cfg =
      build_ensemble_config(config, err, /*default_dimension=*/2);
  const std::vector<int> m_list = config.get_int_list("M_list");
  const ensemble::AreaLawResult scan = ensemble::area_law_scan_2d(cfg, m_list);

  csv::Writer csv(
      "M,L,n,mean_S_over_L,mean_ci_lo,mean_ci_hi,var_S_over_L,var_ci_lo,"
      "var_ci_hi");
  for (const auto& row : scan.per_m) {
    csv.row(row.m, row.side_length, row.s_over_l.n, row.s_over_l.mean,
            row.s_over_l.mean_ci_lo, row.s_over_l.mean_ci_hi,
            row.s_over_l.variance, row.s_over_l.variance_ci_lo,
            row.s_over_l.variance_ci_hi);
  }
  csv.write(dir / "area_law_2d.csv");

  ManifestBuilder manifest(config, &scan.diagnostics);
  nlohmann::json per_m = nlohmann::json::array();
  for (const auto& row : scan.per_m) {
    per_m.push_back({{"M", row.m},
                     {"L", row.side_length},
                     {"stats", stats_json(row.s_over_l)}});
  }
  manifest.doc["results"]["per_M"] = per_m;
  manifest.write(dir);
}

inline void run_density_check(const ExperimentConfig& config,
                              const std::filesystem::path& dir,
                              std::ostream& err) {
  const densities::DensityModel density = build_density(config, err);
  density.validate();
  const std::vector<double> t_grid = config.get_real_list("t_grid");
  const std::int64_t hcr_n = config.get_int("hcr_n");
  const std::uint64_t seed =
      static_cast<std::uint64_t>(config.get_int("master_seed"));

  csv::Writer csv("t,F_t,J_t,jensen_bound,toy_lhs_variance,toy_rhs_bound");
  for (double t : t_grid) {
    const double f_t = densities::F_of_t(density, t);
    const double j_t = f_t + 1.0;
    const double jensen = densities::jensen_lower_bound(density, t);
    const densities::HcrToyCheck toy =
        densities::hcr_toy_check(density, t, hcr_n, seed);
    csv.row(t, f_t, j_t, jensen, toy.lhs_variance, toy.rhs_bound);
  }
  csv.write(dir / "density_check.csv");

  ManifestBuilder manifest(config, nullptr);
  manifest.doc["results"]["density"] = density.describe();
  manifest.doc["results"]["kappa_moment"] = density.kappa_moment();
  manifest.doc["results"]["sup_pdf"] = density.sup_pdf();
  manifest.write(dir);
}

inline void print_help(std::ostream& out) {
  out << "entlab " << kVersion
      << " - entanglement statistics of disordered free fermions\n\n"
         "usage: entlab <command> [--config FILE] [--key value ...] "
         "[--output-dir DIR]\n\n"
         "Config files hold 'key = value' lines ('#' comments); flags "
         "override file values.\n\ncommands:\n";
  for (const CommandSpec& cmd : commands()) {
    out << "  " << cmd.name << "\n      " << cmd.summary << "\n";
  }
  out << "\ncommon keys (defaults in parentheses):\n";
  for (const KeySpec& k : common_keys()) {
    out << "  " << k.key << " (" << (k.default_value[0] ? k.default_value : "\"\"")
        << "): " << k.help << "\n";
  }
  for (const CommandSpec& cmd : commands()) {
    if (cmd.keys.empty()) continue;
    out << "\nkeys for " << cmd.name << ":\n";
    for (const KeySpec& k : cmd.keys) {
      out << "  " << k.key << " (" << k.default_value << "): " << k.help
          << "\n";
    }
  }
  out << "\nexit codes: 0 ok, 2 config error, 3 degraded ensemble, 4 "
         "numerical error\n";
}

}  // namespace detail

// Execute a fully parsed configuration. Throws on failure; run() maps the
// exception categories to exit codes.
inline void execute(const ExperimentConfig& config, std::ostream& err) {
  const std::filesystem::path dir = config.get_string("output_dir");
  std::filesystem::create_directories(dir);

  if (config.command == "variance-scan") {
    detail::run_variance_scan(config, dir, err);
  } else if (config.command == "shift-decay") {
    detail::run_shift_decay(config, dir, err);
  } else if (config.command == "hcr-bound") {
    detail::run_hcr_bound(config, dir, err);
  } else if (config.command == "splitting") {
    detail::run_splitting(config, dir, err);
  } else if (config.command == "projection-decay") {
    detail::run_projection_decay(config, dir, err);
  } else if (config.command == "resolvent-check") {
    detail::run_resolvent_check(config, dir, err);
  } else if (config.command == "fractional-moments") {
    detail::run_fractional_moments(config, dir, err);
  } else if (config.command == "area-law-2d") {
    detail::run_area_law_2d(config, dir, err);
  } else if (config.command == "density-check") {
    detail::run_density_check(config, dir, err);
  } else {
    throw ConfigError("unknown command '" + config.command + "'");
  }
}

// Full CLI entry: parse arguments, run, map errors to exit codes.
inline int run(std::span<const std::string> args, std::ostream& out,
               std::ostream& err) {
  try {
    if (args.empty() || args[0] == "--help" || args[0] == "-h" ||
        args[0] == "help") {
      detail::print_help(out);
      return 0;
    }
    const std::string command = args[0];
    if (!detail::find_command(command)) {
      throw ConfigError("unknown command '" + command +
                        "' (run with --help for the list)");
    }

    std::optional<std::string> config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    for (std::size_t i = 1; i < args.size(); ++i) {
      const std::string& arg = args[i];
      if (arg.rfind("--", 0) != 0) {
        throw ConfigError("expected --key value, got '" + arg + "'");
      }
      if (i + 1 >= args.size()) {
        throw ConfigError("flag '" + arg + "' is missing a value");
      }
      const std::string value = args[++i];
      std::string key = arg.substr(2);
      if (key == "config") {
        config_path = value;
      } else if (key == "output-dir") {
        overrides.emplace_back("output_dir", value);
      } else {
        overrides.emplace_back(key, value);
      }
    }

    const ExperimentConfig config =
        parse_config(command, config_path, overrides);
    execute(config, err);
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const EnsembleDegradedError& e) {
    err << "degraded ensemble: " << e.what() << "\n";
    return 3;
  } catch (const InsufficientDataError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace entlab::cli
