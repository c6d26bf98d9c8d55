#include "mlfdr/error.hpp"
#include "mlfdr/io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <random>

using namespace mlfdr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mlfdr_io_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path file(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::numeric;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("a small hand-written CSV parses exactly") {
  TempDir dir("parse");
  const auto p = dir.file("m.csv", "g1,g2\n1.5,-2\n0.25,3e2\n\"7\",NA\n");
  const auto t = io::read_csv(p);
  CHECK(t.header == std::vector<std::string>{"g1", "g2"});
  REQUIRE(t.values.rows() == 3);
  CHECK(t.values(0, 0) == 1.5);
  CHECK(t.values(0, 1) == -2.0);
  CHECK(t.values(1, 0) == 0.25);
  CHECK(t.values(1, 1) == 300.0);
  CHECK(t.values(2, 0) == 7.0);
  CHECK(std::isnan(t.values(2, 1)));
}

TEST_CASE("malformed cells are data errors that name their location") {
  TempDir dir("bad");
  const auto p = dir.file("m.csv", "a,b\n1,2\n3,abc\n");
  CHECK(kind_of([&] { io::read_csv(p); }) == ErrorKind::data);
  const auto msg = message_of([&] { io::read_csv(p); });
  CHECK(msg.find(":3:") != std::string::npos);
  CHECK(msg.find("column 2") != std::string::npos);
  const auto ragged = dir.file("r.csv", "a,b\n1\n");
  CHECK(kind_of([&] { io::read_csv(ragged); }) == ErrorKind::data);
  CHECK(kind_of([&] { io::read_csv(dir.path / "missing.csv"); }) == ErrorKind::config);
}

TEST_CASE("written values read back bit for bit") {
  TempDir dir("roundtrip");
  Eigen::MatrixXd v(2, 3);
  v << 0.1, -1.0 / 3.0, 1e-300, 12345.678, std::nextafter(1.0, 2.0), -0.0;
  io::write_csv(dir.path / "v.csv", {"a", "b", "c"}, v);
  CHECK(io::read_csv(dir.path / "v.csv").values == v);
}

TEST_CASE("centered log-ratio of a constant row is zero") {
  Eigen::MatrixXd counts(2, 4);
  counts << 1, 1, 1, 1, 0, 3, 5, 2;
  const auto z = io::clr_transform(counts, 0.5);
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(z(0, c) == 0.0);
  CHECK(std::abs(z.row(1).sum()) < 1e-14);
  CHECK(z(1, 1) - z(1, 0) == doctest::Approx(std::log(3.5 / 0.5)));
}

TEST_CASE("ingestion filters sparse outcomes and drops incomplete rows") {
  TempDir dir("ingest");
  // 20 samples; outcome g2 is nonzero in one sample (5%), g1 and g3 in all.
  std::string x = "x\n", med = "g1,g2,g3\n", out = "g1,g2,g3\n";
  for (int r = 0; r < 20; ++r) {
    x += std::to_string(1 + r % 3) + "\n";
    med += std::to_string(r) + "," + std::to_string(2 * r) + "," + std::to_string(r % 5) + "\n";
    out += std::to_string(r + 1) + "," + (r == 4 ? "6" : "0") + "," + std::to_string(3 + r % 4) + "\n";
  }
  io::IngestPaths paths{dir.file("x.csv", x), dir.file("m.csv", med), dir.file("y.csv", out), std::nullopt};
  io::Preprocessing prep;
  prep.prevalence_threshold = 0.10;
  const auto got = io::ingest(paths, prep, OutcomeKind::continuous);
  CHECK(got.manifest.dropped == std::vector<std::string>{"g2"});
  CHECK(got.manifest.kept == std::vector<std::string>{"g1", "g3"});
  CHECK(got.ids == got.manifest.kept);
  CHECK(got.data.mediators.cols() == 2);
  CHECK(got.data.outcomes(3, 1) == 3.0 + 3 % 4);
  CHECK(got.data.mediators(7, 1) == 7 % 5);

  // Without the filter every column stays.
  CHECK(io::ingest(paths, io::Preprocessing{}, OutcomeKind::continuous).ids.size() == 3);

  // A missing cell removes the whole row and is counted.
  std::string holes = "g1,g2,g3\n";
  for (int r = 0; r < 20; ++r) holes += (r == 2 || r == 11 ? std::string("NA") : std::to_string(r)) + ",1,2\n";
  paths.mediators = dir.file("holes.csv", holes);
  const auto trimmed = io::ingest(paths, io::Preprocessing{}, OutcomeKind::continuous);
  CHECK(trimmed.manifest.rows_read == 20);
  CHECK(trimmed.manifest.rows_dropped == 2);
  CHECK(trimmed.data.n() == 18);
  CHECK(trimmed.data.x(2) == 1 + 3 % 3);
}

TEST_CASE("ingestion with the log-ratio transform") {
  TempDir dir("clr");
  io::IngestPaths paths{dir.file("x.csv", "x\n1\n2\n3\n4\n"), dir.file("m.csv", "a,b\n1,2\n3,4\n5,6\n7,9\n"),
                        dir.file("y.csv", "a,b\n1,1\n0,3\n2,2\n5,0\n"), std::nullopt};
  io::Preprocessing prep;
  prep.clr = true;
  const auto got = io::ingest(paths, prep, OutcomeKind::continuous);
  CHECK(got.data.outcomes(0, 0) == 0.0);
  CHECK(got.data.outcomes(1, 1) == doctest::Approx(0.5 * std::log(3.5 / 0.5)));
}

TEST_CASE("centering removes column means") {
  TempDir dir("center");
  io::IngestPaths paths{dir.file("x.csv", "x\n1\n2\n6\n"), dir.file("m.csv", "a,b\n1,2\n3,4\n5,9\n"),
                        dir.file("y.csv", "a,b\n1,1\n0,1\n1,0\n"), dir.file("z.csv", "z\n4\n4\n7\n")};
  io::Preprocessing prep;
  prep.center = true;
  const auto got = io::ingest(paths, prep, OutcomeKind::continuous);
  CHECK(got.data.x(0) == -2.0);
  CHECK(got.data.mediators(2, 1) == 4.0);
  CHECK(got.data.outcomes.colwise().sum().cwiseAbs().maxCoeff() < 1e-15);
  CHECK((*got.data.confounders)(0, 0) == -1.0);
  // Binary outcomes keep their 0/1 coding.
  CHECK(io::ingest(paths, prep, OutcomeKind::binary).data.outcomes(1, 0) == 0.0);
}

TEST_CASE("inconsistent inputs are distinct data errors") {
  TempDir dir("mismatch");
  const auto x = dir.file("x.csv", "x\n1\n2\n3\n");
  const auto m = dir.file("m.csv", "a,b\n1,2\n3,4\n5,6\n");
  const auto short_y = dir.file("y.csv", "a,b\n1,2\n3,4\n");
  const auto narrow_y = dir.file("y1.csv", "a\n1\n2\n3\n");
  const auto wide_x = dir.file("x2.csv", "x,w\n1,1\n2,2\n3,3\n");
  const auto rows = message_of([&] { io::ingest({x, m, short_y, std::nullopt}, {}, OutcomeKind::continuous); });
  const auto cols = message_of([&] { io::ingest({x, m, narrow_y, std::nullopt}, {}, OutcomeKind::continuous); });
  CHECK(rows.find("row counts") != std::string::npos);
  CHECK(cols.find("mediators vs") != std::string::npos);
  CHECK(kind_of([&] { io::ingest({wide_x, m, m, std::nullopt}, {}, OutcomeKind::continuous); }) == ErrorKind::data);
  io::Preprocessing bad;
  bad.prevalence_threshold = 1.5;
  CHECK(kind_of([&] { io::ingest({x, m, m, std::nullopt}, bad, OutcomeKind::continuous); }) == ErrorKind::config);
}

TEST_CASE("a written hypothesis table reproduces the selection") {
  TempDir dir("table");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t m = 60;
  CoefStats all;
  all.n = 49;
  all.a.resize(m);
  all.b.resize(m);
  all.var1.resize(m);
  all.var2.resize(m);
  all.status.assign(m, FitStatus::ok);
  all.status[7] = FitStatus::rank_deficient;
  all.status[30] = FitStatus::separation;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    all.a(ii) = u(rng) - 0.5;
    all.b(ii) = 3 * u(rng);
    all.var1(ii) = 0.5 + u(rng);
    all.var2(ii) = 0.5 + u(rng);
    ids.push_back("gene" + std::to_string(i));
  }
  std::vector<std::size_t> kept;
  all.valid_only(&kept);
  Eigen::VectorXd s(static_cast<Eigen::Index>(kept.size()));
  for (auto& v : s) v = u(rng) < 0.3 ? 0.1 * u(rng) : u(rng);
  const auto lfdr = lfdr_from_scores(s);
  const auto result = step_up_select(lfdr, 0.05);
  REQUIRE(result.k > 0);

  io::write_hypothesis_table(dir.path / "h.csv", io::hypothesis_rows(ids, all, kept, lfdr, result));
  const auto rows = io::read_hypothesis_table(dir.path / "h.csv");
  REQUIRE(rows.size() == m);
  CHECK(rows[7].status == FitStatus::rank_deficient);
  CHECK_FALSE(rows[7].lfdr.has_value());
  CHECK(rows[30].status == FitStatus::separation);
  CHECK(rows[3].alpha_hat == all.a(3) / 7.0);
  CHECK(rows[3].var2 == all.var2(3));

  std::vector<double> stored;
  std::vector<bool> flags;
  for (const auto& r : rows)
    if (r.lfdr) {
      stored.push_back(*r.lfdr);
      flags.push_back(r.rejected);
    }
  const auto again =
      step_up_select(lfdr_from_scores(Eigen::Map<Eigen::VectorXd>(stored.data(), static_cast<Eigen::Index>(stored.size()))), 0.05);
  CHECK(again.rejected == result.rejected);
  CHECK(flags == result.rejected);
  CHECK(again.cutoff == result.cutoff);
  CHECK(again.score_sum == result.score_sum);
}

TEST_CASE("scenario files mirror the scenario fields") {
  const auto sc = io::scenario_from_json(nlohmann::json::parse(
      R"({"kind": "case2_confounded", "pi": "sparse", "n": 400, "m": 250, "tau_root_n": 10, "seed": 77,
          "hyper": {"kappa": 2.5}})"));
  CHECK(sc.kind == ScenarioKind::case2_confounded);
  CHECK(sc.pi_truth == kSparsePi);
  CHECK(sc.n == 400);
  CHECK(sc.m == 250);
  CHECK(sc.tau == doctest::Approx(0.5));
  CHECK(sc.seed == 77);
  CHECK(sc.hyper.kappa == 2.5);
  CHECK(sc.hyper.psi == SimScenario{}.hyper.psi);

  const auto back = io::scenario_from_json(io::to_json(sc));
  CHECK(back.tau == sc.tau);
  CHECK(back.hyper.kappa == 2.5);

  CHECK(kind_of([] { io::scenario_from_json(nlohmann::json::parse(R"({"pi": "medium"})")); }) == ErrorKind::config);
  CHECK(kind_of([] { io::scenario_from_json(nlohmann::json::parse(R"({"tau": 1, "tau_root_n": 5})")); }) ==
        ErrorKind::config);
}
