#include "mlfdr/io.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mlfdr_cli_tests";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

int cli(const std::string& args) {
  const std::string cmd = std::string(MLFDR_CLI_PATH) + " " + args + " 2>" + (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Case 1 dense alternative data with strong signal, written once by simulate mode.
const fs::path& simulated_data() {
  static const fs::path dir = [] {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    write(kRoot / "dense.json", R"({"kind": "case1", "pi": "dense", "n": 100, "m": 1000, "tau_root_n": 15, "seed": 31})");
    const fs::path out = kRoot / "data";
    REQUIRE(cli("--mode simulate --scenario-file " + (kRoot / "dense.json").string() + " --reps 1 --out-dir " +
                out.string()) == 0);
    return out;
  }();
  return dir;
}

std::string analyze_args(const fs::path& data, const fs::path& out) {
  return "--exposure " + (data / "exposure.csv").string() + " --mediators " + (data / "mediators.csv").string() +
         " --outcomes " + (data / "outcomes.csv").string() + " --out-dir " + out.string();
}

std::size_t rejected_count(const fs::path& table) {
  std::size_t k = 0;
  for (const auto& r : mlfdr::io::read_hypothesis_table(table)) k += r.rejected;
  return k;
}

}  // namespace

TEST_CASE("simulate mode writes the labeled dataset") {
  const auto& data = simulated_data();
  for (const char* f : {"exposure.csv", "mediators.csv", "outcomes.csv", "truth.csv", "truth_model.json",
                        "report.json", "alpha_grid.tsv", "manifest.json"})
    CHECK(fs::exists(data / f));
  const auto med = mlfdr::io::read_csv(data / "mediators.csv");
  CHECK(med.values.rows() == 100);
  CHECK(med.values.cols() == 1000);
  CHECK(slurp(data / "alpha_grid.tsv").rfind("alpha\tfdr\tfdr_se", 0) == 0);
}

TEST_CASE("exit codes distinguish configuration, data and numeric failures") {
  const auto& data = simulated_data();
  const fs::path out = kRoot / "codes";
  CHECK(cli("--no-such-flag") == 2);
  CHECK(cli(analyze_args(data, out) + " --alpha 1.5") == 2);
  CHECK(cli("--mode simulate --out-dir " + out.string()) == 2);
  CHECK(cli("--exposure " + (kRoot / "absent.csv").string() + " --mediators x --outcomes y --out-dir " + out.string()) ==
        2);

  write(kRoot / "bad.csv", "M1,M2\n1,2\n3,oops\n");
  CHECK(cli("--exposure " + (data / "exposure.csv").string() + " --mediators " + (kRoot / "bad.csv").string() +
            " --outcomes " + (kRoot / "bad.csv").string() + " --out-dir " + out.string()) == 3);
  CHECK(slurp(kRoot / "stderr.txt").find("non-numeric") != std::string::npos);
  CHECK(cli("--exposure " + (data / "mediators.csv").string() + " --mediators " + (data / "mediators.csv").string() +
            " --outcomes " + (data / "outcomes.csv").string() + " --out-dir " + out.string()) == 3);

  // A one-step EM never converges, so every replicate fails and the study aborts.
  CHECK(cli("--mode evaluate --scenario-file " + (kRoot / "dense.json").string() +
            " --reps 3 --max-iter 1 --out-dir " + out.string()) == 4);
}

TEST_CASE("analyze output is byte-identical across repeats and thread counts") {
  const auto& data = simulated_data();
  const fs::path a = kRoot / "run_a", b = kRoot / "run_b", c = kRoot / "run_c";
  REQUIRE(cli(analyze_args(data, a) + " --seed 11") == 0);
  REQUIRE(cli(analyze_args(data, b) + " --seed 11") == 0);
  REQUIRE(cli(analyze_args(data, c) + " --seed 11 --threads 3") == 0);
  const auto table = slurp(a / "hypotheses.csv");
  CHECK(table.rfind("id,alpha_hat,beta_hat,var1,var2,status,lfdr,rejected\n", 0) == 0);
  CHECK(table == slurp(b / "hypotheses.csv"));
  CHECK(table == slurp(c / "hypotheses.csv"));
  CHECK(slurp(a / "model.json") == slurp(b / "model.json"));
  CHECK(slurp(a / "model.json") == slurp(c / "model.json"));
  CHECK(rejected_count(a / "hypotheses.csv") > 50);
}

TEST_CASE("evaluate tables are identical across thread counts") {
  const auto& data = simulated_data();
  (void)data;
  write(kRoot / "small.json", R"({"kind": "case1", "pi": "sparse", "n": 100, "m": 400, "tau_root_n": 10, "seed": 3})");
  const auto args = "--mode evaluate --reps 4 --scenario-file " + (kRoot / "small.json").string() + " --out-dir ";
  REQUIRE(cli(args + (kRoot / "eval_1").string()) == 0);
  REQUIRE(cli(args + (kRoot / "eval_3").string() + " --threads 3") == 0);
  CHECK(slurp(kRoot / "eval_1" / "replicates.csv") == slurp(kRoot / "eval_3" / "replicates.csv"));
  CHECK(slurp(kRoot / "eval_1" / "alpha_grid.tsv") == slurp(kRoot / "eval_3" / "alpha_grid.tsv"));
}

TEST_CASE("permuting the exposure leaves almost nothing to reject") {
  // The regressions carry no intercept, so a shuffled exposure with a nonzero
  // mean still predicts the mediator means; centering removes that path.
  const auto& data = simulated_data();
  const fs::path kept = kRoot / "centered", out = kRoot / "permuted";
  REQUIRE(cli(analyze_args(data, kept) + " --center") == 0);
  REQUIRE(cli(analyze_args(data, out) + " --center --permute-exposure") == 0);
  const auto k = rejected_count(out / "hypotheses.csv");
  MESSAGE("rejections before / after permutation: " << rejected_count(kept / "hypotheses.csv") << " / " << k);
  CHECK(rejected_count(kept / "hypotheses.csv") > 50);
  CHECK(k <= 5);
}

TEST_CASE("simulate mode controls the FDR in its report") {
  const auto& data = simulated_data();
  (void)data;
  const fs::path out = kRoot / "study";
  REQUIRE(cli("--mode simulate --scenario-file " + (kRoot / "dense.json").string() + " --reps 100 --out-dir " +
              out.string()) == 0);
  const auto report = read_json(out / "report.json");
  const double fdr = report["empirical_fdr"]["mean"], se = report["empirical_fdr"]["se"];
  MESSAGE("FDR " << fdr << " se " << se);
  CHECK(report["reps"] == 100);
  CHECK(fdr <= 0.05 + 2.0 * se);
  CHECK(report["alpha_grid"].size() == 6);
}

TEST_CASE("manifest records the resolved seed and every defaulted option") {
  const auto& data = simulated_data();
  const fs::path out = kRoot / "manifest";
  REQUIRE(cli(analyze_args(data, out)) == 0);
  const auto m = read_json(out / "manifest.json");
  const auto& o = m["options"];
  CHECK(o["seed"] == 1);
  CHECK(o["alpha"] == 0.05);
  CHECK(o["d1"] == 1);
  CHECK(o["d2"] == 1);
  CHECK(o["two_step"] == "auto");
  CHECK(o["tolerance"] == 1e-8);
  CHECK(o["max_iterations"] == 500);
  CHECK(o["restarts"] == 3);
  CHECK(o["threads"] == 1);
  CHECK(o["prevalence_filter"].is_null());
  CHECK(o["pseudo_count"] == 0.5);
  CHECK(o["clr"] == false);
  CHECK(o["center"] == false);
  CHECK(o["normal_calibration"] == true);
  CHECK(o["permute_exposure"] == false);
  CHECK(m.contains("version"));
  CHECK(m["timings_ms"].contains("total"));
  CHECK(m["ingestion"]["kept"].size() == 1000);

  // The scenario seed is used unless --seed overrides it.
  CHECK(read_json(data / "manifest.json")["options"]["seed"] == 31);
  const fs::path over = kRoot / "override";
  REQUIRE(cli("--mode simulate --reps 1 --seed 5 --scenario-file " + (kRoot / "dense.json").string() + " --out-dir " +
              over.string()) == 0);
  const auto mo = read_json(over / "manifest.json");
  CHECK(mo["options"]["seed"] == 5);
  CHECK(mo["scenario"]["seed"] == 5);
  CHECK(mo["options"]["d1"] == 1);

  const fs::path filtered = kRoot / "filtered";
  REQUIRE(cli(analyze_args(data, filtered) + " --prevalence-filter 0.1") == 0);
  CHECK(read_json(filtered / "manifest.json")["options"]["prevalence_filter"] == 0.1);
}
