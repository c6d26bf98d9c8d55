#pragma once

#include "mlfdr/evaluate.hpp"
#include "mlfdr/mixture.hpp"
#include "mlfdr/regression.hpp"
#include "mlfdr/screening.hpp"
#include "mlfdr/simulate.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mlfdr::io {

namespace fs = std::filesystem;

// Numeric CSV with a mandatory header row. Empty, NA and NaN cells are read
// as quiet NaN; any other non-numeric cell is a data error.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

CsvTable read_csv(const fs::path& path);
void write_csv(const fs::path& path, const std::vector<std::string>& header, const Eigen::MatrixXd& values);

// Shortest round-trippable decimal text for a double.
std::string format_double(double v);

struct IngestPaths {
  fs::path exposure;
  fs::path mediators;
  fs::path outcomes;
  std::optional<fs::path> confounders;
};

struct Preprocessing {
  // Drop outcome columns whose fraction of nonzero entries is below this.
  std::optional<double> prevalence_threshold;
  double pseudo_count = 0.5;
  bool clr = false;  // centered log-ratio of (outcome + pseudo_count) per sample
  // Subtract column means from exposure, mediators, confounders and continuous
  // outcomes, which is equivalent to fitting an intercept in both regressions.
  bool center = false;
};

struct IngestManifest {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;  // rows with a missing cell in any input
  std::vector<std::string> kept;
  std::vector<std::string> dropped;  // removed by the prevalence filter
};

struct Ingested {
  Dataset data;
  std::vector<std::string> ids;  // one per hypothesis
  IngestManifest manifest;
};

Ingested ingest(const IngestPaths& paths, const Preprocessing& prep, OutcomeKind kind);

// Per-row centered log-ratio after adding the pseudo-count.
Eigen::MatrixXd clr_transform(const Eigen::MatrixXd& counts, double pseudo_count);

// Fraction of nonzero entries per column.
Eigen::VectorXd nonzero_prevalence(const Eigen::MatrixXd& values);

// Per-hypothesis results table:
// id,alpha_hat,beta_hat,var1,var2,status,lfdr,rejected
// Hypotheses excluded from the fit carry lfdr = NA and rejected = 0.
struct HypothesisRow {
  std::string id;
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double var1 = 0.0;
  double var2 = 0.0;
  FitStatus status = FitStatus::ok;
  std::optional<double> lfdr;
  bool rejected = false;
};

std::vector<HypothesisRow> hypothesis_rows(const std::vector<std::string>& ids, const CoefStats& all_stats,
                                           const std::vector<std::size_t>& kept, const LfdrScores& lfdr,
                                           const ScreeningResult& result);
void write_hypothesis_table(const fs::path& path, const std::vector<HypothesisRow>& rows);
std::vector<HypothesisRow> read_hypothesis_table(const fs::path& path);

FitStatus fit_status_from(std::string_view name);

nlohmann::json to_json(const MixtureModel& model);
nlohmann::json to_json(const GeneralMixtureModel& model);
nlohmann::json to_json(const EmTrace& trace);
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const SimScenario& sc);
nlohmann::json to_json(const StudyReport& report);
nlohmann::json to_json(const IngestManifest& manifest);

// Scenario config: {"kind", "pi", "n", "m", "tau" | "tau_root_n", "seed", "hyper": {...}}.
SimScenario scenario_from_json(const nlohmann::json& j);
SimScenario read_scenario(const fs::path& path);

void write_json(const fs::path& path, const nlohmann::json& j);
void write_text(const fs::path& path, const std::string& text);

}  // namespace mlfdr::io
