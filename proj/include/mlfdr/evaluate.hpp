#pragma once

#include "mlfdr/mixture.hpp"
#include "mlfdr/screening.hpp"
#include "mlfdr/simulate.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mlfdr {

struct EvalReport {
  double fdp = 0.0;    // V / max(R, 1)
  double power = 0.0;  // (R - V) / #H11, 0 without H11
  std::size_t false_rejections = 0;       // V
  std::size_t rejections = 0;             // R
  std::size_t missed_alternatives = 0;    // P: H11 not rejected
  std::size_t alternatives = 0;           // #H11
  double w_stat = 0.0;   // sum of rejected lfdr values
  double q_tilde = 0.0;  // W / max(R, 1)
  double alpha = 0.0;
};

EvalReport score(const ScreeningResult& result, const std::vector<Hypothesis>& truth_labels);

struct StudyOptions {
  std::vector<double> alpha_grid;  // extra levels reported alongside the target alpha
  std::size_t d1 = 1;
  std::size_t d2 = 1;
  std::optional<bool> two_step;
  EmConfig em;
  RegressionOptions regression;
  bool normal_calibration = true;  // see normal_calibrated()
  std::size_t threads = 1;  // replicates run in parallel; each replicate is sequential
  double max_failure_fraction = 0.05;
};

struct GridPoint {
  double alpha = 0.0;
  double fdp = 0.0;
  double power = 0.0;
  double oracle_fdp = 0.0;
  double oracle_power = 0.0;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::size_t excluded_hypotheses = 0;
  EvalReport adaptive;
  EvalReport oracle;
  double amle_ratio = 0.0;
  bool em_converged = false;
  std::array<double, 4> class_probabilities{};
  std::vector<GridPoint> grid;
};

struct Summary {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

Summary summarize(const std::vector<double>& values);

struct GridSummary {
  double alpha = 0.0;
  Summary fdr, power, oracle_fdr, oracle_power;
};

struct StudyReport {
  SimScenario scenario;
  double alpha = 0.0;
  std::size_t reps = 0;
  std::size_t failed = 0;
  Summary fdr, power, oracle_fdr, oracle_power;
  Summary rejections;
  double median_rejections = 0.0;
  double amle_nonnegative_fraction = 0.0;
  std::vector<GridSummary> grid;
  std::vector<ReplicateRecord> replicates;
};

std::uint64_t replicate_seed(std::uint64_t root, std::size_t replicate);

// generate -> regression -> mixture -> lfdr -> step-up -> score, plus the
// oracle selection and the AMLE diagnostic, for one scenario seed.
ReplicateRecord run_replicate(const SimScenario& sc, double alpha, const StudyOptions& options);

StudyReport replicate_study(const SimScenario& sc, std::size_t reps, double alpha, const StudyOptions& options = {});

struct UnbiasednessCheck {
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double rhs_se = 0.0;
  double z_score = 0.0;
};

// Monte Carlo check that m^-1 W_m(delta) is unbiased for the null-weighted
// lfdr CDFs. Variances are per hypothesis; both sides use independent streams.
UnbiasednessCheck w_unbiasedness_check(const MixtureModel& model, const Eigen::VectorXd& var1,
                                       const Eigen::VectorXd& var2, double delta, std::size_t reps,
                                       std::uint64_t seed);

}  // namespace mlfdr
