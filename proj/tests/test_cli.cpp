#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "entlab/cli.hpp"

using namespace entlab;
using Catch::Matchers::ContainsSubstring;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  CliResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / ("entlab_cli_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

nlohmann::json load_manifest(const std::filesystem::path& dir) {
  return nlohmann::json::parse(read_file(dir / "manifest.json"));
}

}  // namespace

TEST_CASE("defaults resolve and flags override them") {
  const cli::ExperimentConfig defaults =
      cli::parse_config("variance-scan", std::nullopt, {});
  CHECK(defaults.get_int("half_width") == 64);
  CHECK(defaults.get_int("dimension") == 1);
  CHECK(defaults.get_real("fermi_energy") == 1.0);
  CHECK(defaults.get_string("density") == "exponential");
  CHECK(defaults.get_int_list("M_list") == std::vector<int>{8, 16, 32});
  CHECK(defaults.get_real_list("t_grid") ==
        std::vector<double>{2, 5, 10, 20, 50});

  const cli::ExperimentConfig overridden = cli::parse_config(
      "variance-scan", std::nullopt, {{"half_width", "128"}});
  CHECK(overridden.get_int("half_width") == 128);
}

TEST_CASE("unknown keys and type mismatches are rejected by name") {
  CHECK_THROWS_WITH(
      cli::parse_config("variance-scan", std::nullopt, {{"bogus", "1"}}),
      ContainsSubstring("unknown key 'bogus'"));
  CHECK_THROWS_WITH(
      cli::parse_config("variance-scan", std::nullopt, {{"half_width", "abc"}}),
      ContainsSubstring("half_width"));
  CHECK_THROWS_WITH(
      cli::parse_config("variance-scan", std::nullopt, {{"M_list", "4,x"}}),
      ContainsSubstring("M_list"));
  CHECK_THROWS_AS(cli::parse_config("frobnicate", std::nullopt, {}),
                  ConfigError);
}

TEST_CASE("config files load with comments and report bad lines") {
  const std::filesystem::path dir = fresh_dir("config");
  std::filesystem::create_directories(dir);
  const std::filesystem::path good = dir / "good.conf";
  {
    std::ofstream f(good);
    f << "# sample configuration\n"
      << "half_width = 24\n"
      << "\n"
      << "density = half_gaussian\n"
      << "density_scale = 2.0\n";
  }
  const cli::ExperimentConfig cfg =
      cli::parse_config("variance-scan", good.string(), {});
  CHECK(cfg.get_int("half_width") == 24);
  CHECK(cfg.get_string("density") == "half_gaussian");
  CHECK(cfg.get_real("density_scale") == 2.0);

  // Flags win over the file.
  const cli::ExperimentConfig flagged =
      cli::parse_config("variance-scan", good.string(), {{"half_width", "10"}});
  CHECK(flagged.get_int("half_width") == 10);

  const std::filesystem::path bad = dir / "bad.conf";
  {
    std::ofstream f(bad);
    f << "half_width = 24\n"
      << "whatnow\n";
  }
  CHECK_THROWS_WITH(cli::parse_config("variance-scan", bad.string(), {}),
                    ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(cli::parse_config("variance-scan", "/no/such/file", {}),
                    ContainsSubstring("not readable"));
}

TEST_CASE("help lists every command and the common keys") {
  const CliResult r = run_cli({"--help"});
  CHECK(r.code == 0);
  for (const char* cmd :
       {"variance-scan", "shift-decay", "hcr-bound", "splitting",
        "projection-decay", "resolvent-check", "fractional-moments",
        "area-law-2d", "density-check"}) {
    CHECK_THAT(r.out, ContainsSubstring(cmd));
  }
  for (const char* key : {"half_width", "fermi_energy", "density",
                          "realizations", "master_seed", "output_dir"}) {
    CHECK_THAT(r.out, ContainsSubstring(key));
  }
}

TEST_CASE("argument errors exit with code 2") {
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK_THAT(run_cli({"frobnicate"}).err, ContainsSubstring("unknown command"));
  CHECK(run_cli({"variance-scan", "--half_width"}).code == 2);
  CHECK(run_cli({"variance-scan", "12"}).code == 2);
  CHECK(run_cli({"variance-scan", "--bogus", "1"}).code == 2);

  const CliResult too_big = run_cli({"variance-scan", "--M_list", "40",
                                     "--half_width", "16", "--output-dir",
                                     fresh_dir("too_big").string()});
  CHECK(too_big.code == 2);
  CHECK_THAT(too_big.err, ContainsSubstring("block_half_width"));
}

TEST_CASE("variance scan writes its CSV, manifest, and bound") {
  const std::filesystem::path dir = fresh_dir("vscan");
  const CliResult r = run_cli(
      {"variance-scan", "--half_width", "12", "--M_list", "2,3",
       "--realizations", "8", "--eps_realizations", "6", "--t_grid", "2,5,10",
       "--threads", "1", "--output-dir", dir.string()});
  REQUIRE(r.code == 0);

  const std::string csv = read_file(dir / "variance_scan.csv");
  CHECK(first_line(csv) ==
        "M,L,n,mean_S,var_S,var_S_ci_lo,var_S_ci_hi,two_var_Sminus,A_bound");

  const nlohmann::json manifest = load_manifest(dir);
  CHECK(manifest.at("artifact") == "entlab");
  CHECK(manifest.at("command") == "variance-scan");
  CHECK(manifest.at("config").at("half_width") == "12");
  CHECK(manifest.at("results").at("per_M").size() == 2);
  CHECK(manifest.at("results").at("hcr_bound").at("A").get<double>() > 0.0);
  CHECK(manifest.at("realizations").at("failed").get<int>() == 0);
}

TEST_CASE("shift decay writes decreasing means and a log-log fit") {
  const std::filesystem::path dir = fresh_dir("sdecay");
  const CliResult r = run_cli({"shift-decay", "--half_width", "12", "--t_list",
                               "2,5,10", "--realizations", "8", "--threads",
                               "1", "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(read_file(dir / "shift_decay.csv")) ==
        "t,n,mean_St,ci_lo,ci_hi,eps_t");
  const nlohmann::json manifest = load_manifest(dir);
  CHECK(manifest.at("results").at("baseline").at("mean").get<double>() > 0.0);
  CHECK(manifest.at("results").at("loglog_fit").at("slope").get<double>() <
        0.0);
}

TEST_CASE("hcr bound command reports the best shift") {
  const std::filesystem::path dir = fresh_dir("hcr");
  const CliResult r = run_cli(
      {"hcr-bound", "--half_width", "12", "--t_grid", "2,5,10",
       "--realizations", "10", "--eps_realizations", "8", "--threads", "1",
       "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(read_file(dir / "hcr_bound.csv")) == "t,F_t,eps_t,A_t");
  const nlohmann::json manifest = load_manifest(dir);
  CHECK(manifest.at("results").at("best").at("A").get<double>() > 0.0);
  const double t0 = manifest.at("results").at("best").at("t0").get<double>();
  CHECK((t0 == 2.0 || t0 == 5.0 || t0 == 10.0));
}

TEST_CASE("splitting command writes residual statistics") {
  const std::filesystem::path dir = fresh_dir("split");
  const CliResult r = run_cli({"splitting", "--half_width", "12", "--M_list",
                               "2,3", "--realizations", "8", "--threads", "1",
                               "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(read_file(dir / "splitting.csv")) ==
        "M,n,median_abs_residual,mean_residual,mean_ci_lo,mean_ci_hi");
  CHECK(load_manifest(dir).at("results").at("per_M").size() == 2);
}

TEST_CASE("projection decay fits an exponential profile") {
  const std::filesystem::path dir = fresh_dir("pdecay");
  const CliResult r = run_cli({"projection-decay", "--half_width", "12",
                               "--r_max", "6", "--realizations", "8",
                               "--threads", "1", "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(read_file(dir / "projection_decay.csv")) ==
        "r,n,mean_absP,mean_ci_lo,mean_ci_hi");
  const nlohmann::json fit = load_manifest(dir).at("results").at("decay_fit");
  CHECK(fit.at("rate").get<double>() > 0.0);
}

TEST_CASE("resolvent check reports residual maxima") {
  const std::filesystem::path dir = fresh_dir("rescheck");
  const CliResult r = run_cli({"resolvent-check", "--half_width", "24",
                               "--cases", "5", "--threads", "1",
                               "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(read_file(dir / "resolvent_check.csv")) ==
        "case,check,residual_rel");
  const nlohmann::json res = load_manifest(dir).at("results");
  CHECK(res.at("max_rank_one_rel").get<double>() < 1e-9);
  CHECK(res.at("max_weyl_rel").get<double>() < 1e-6);
  CHECK(res.at("max_decoupled_rel").get<double>() < 1e-6);
}

TEST_CASE("fractional moments command writes both scans") {
  const std::filesystem::path dir = fresh_dir("fmom");
  const CliResult r = run_cli(
      {"fractional-moments", "--half_width", "16", "--x_max", "5",
       "--realizations", "8", "--t_list", "10,20,40", "--threads", "1",
       "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(read_file(dir / "fractional_moments_spatial.csv")) ==
        "x,y,distance,n,mean_absG_s,ci_lo,ci_hi");
  CHECK(first_line(read_file(dir / "fractional_moments_tscan.csv")) ==
        "t,n,mean_absG00_s,ci_lo,ci_hi");
  const nlohmann::json res = load_manifest(dir).at("results");
  CHECK(res.at("spatial_fit").at("rate").get<double>() > 0.0);
  CHECK(res.at("shift_scaling_fit").at("expected_slope").get<double>() ==
        -0.5);
}

TEST_CASE("2d area law command defaults to dimension 2") {
  const std::filesystem::path dir = fresh_dir("area2d");
  const CliResult r = run_cli({"area-law-2d", "--half_width", "4", "--M_list",
                               "1,2", "--realizations", "6", "--threads", "1",
                               "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(read_file(dir / "area_law_2d.csv")) ==
        "M,L,n,mean_S_over_L,mean_ci_lo,mean_ci_hi,var_S_over_L,var_ci_lo,"
        "var_ci_hi");
  CHECK(load_manifest(dir).at("config").at("dimension") == "1");
}

TEST_CASE("density check evaluates the toy inequality") {
  const std::filesystem::path dir = fresh_dir("dcheck");
  const CliResult r = run_cli({"density-check", "--hcr_n", "20000",
                               "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(read_file(dir / "density_check.csv")) ==
        "t,F_t,J_t,jensen_bound,toy_lhs_variance,toy_rhs_bound");
  const nlohmann::json res = load_manifest(dir).at("results");
  CHECK(res.at("kappa_moment").get<double>() > 0.0);
  CHECK(res.at("sup_pdf").get<double>() > 0.0);
}

TEST_CASE("reruns and thread counts leave the CSV bytes unchanged") {
  const std::vector<std::string> base = {
      "variance-scan", "--half_width", "12",   "--M_list",
      "2,3",           "--realizations", "10", "--eps_realizations",
      "6",             "--t_grid",     "2,5",  "--master_seed",
      "777"};

  auto with_output = [&base](const std::string& dir, const char* threads) {
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--threads", threads, "--output-dir", dir});
    return args;
  };

  const std::filesystem::path a = fresh_dir("bytes_a");
  const std::filesystem::path b = fresh_dir("bytes_b");
  const std::filesystem::path c = fresh_dir("bytes_c");
  REQUIRE(run_cli(with_output(a.string(), "1")).code == 0);
  REQUIRE(run_cli(with_output(b.string(), "1")).code == 0);
  REQUIRE(run_cli(with_output(c.string(), "4")).code == 0);

  const std::string csv_a = read_file(a / "variance_scan.csv");
  CHECK(csv_a == read_file(b / "variance_scan.csv"));
  CHECK(csv_a == read_file(c / "variance_scan.csv"));

  const std::filesystem::path d = fresh_dir("bytes_d");
  std::vector<std::string> reseeded = with_output(d.string(), "1");
  reseeded[reseeded.size() - 5] = "778";  // master_seed value
  REQUIRE(run_cli(reseeded).code == 0);
  CHECK(csv_a != read_file(d / "variance_scan.csv"));
}

TEST_CASE("a fully degenerate ensemble exits with code 3") {
  // A 7-site free chain has the exact eigenvalue 2, so every realization of
  // the zero density at fermi_energy 2 trips the degeneracy guard.
  const CliResult r = run_cli(
      {"variance-scan", "--density", "zero", "--fermi_energy", "2",
       "--half_width", "3", "--M_list", "1", "--realizations", "10",
       "--threads", "1", "--output-dir", fresh_dir("degraded").string()});
  CHECK(r.code == 3);
  CHECK_THAT(r.err, ContainsSubstring("degraded"));
}

TEST_CASE("an empty projection profile exits with code 4") {
  // Zero density with a tiny Fermi energy gives a rank-0 projection, so the
  // decay profile sits entirely at the floor and the fit has nothing to use.
  const CliResult r = run_cli(
      {"projection-decay", "--density", "zero", "--fermi_energy", "1e-6",
       "--half_width", "8", "--r_max", "4", "--realizations", "5", "--threads",
       "1", "--output-dir", fresh_dir("rank0").string()});
  CHECK(r.code == 4);
  CHECK_THAT(r.err, ContainsSubstring("numerical error"));
}

#ifdef ENTLAB_CLI_BINARY
TEST_CASE("installed binary runs end to end") {
  const std::filesystem::path dir = fresh_dir("binary");
  const std::string cmd = std::string(ENTLAB_CLI_BINARY) +
                          " density-check --hcr_n 20000 --output-dir " +
                          dir.string() + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
}
#endif
