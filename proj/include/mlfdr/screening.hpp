#pragma once

#include "mlfdr/mixture.hpp"
#include "mlfdr/regression.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace mlfdr {

// Joint local false discovery rates: posterior mass of H00, H10 and H01 at
// each (a_i, b_i).
struct LfdrScores {
  Eigen::VectorXd scores;
  Eigen::VectorXd null_density_mass;  // exp of log_null_mass (may underflow to 0)
  Eigen::VectorXd total_density;      // exp of log_total_density
  Eigen::VectorXd log_null_mass;
  Eigen::VectorXd log_total_density;
  std::vector<bool> underflow;  // total density vanished; score forced to 1

  std::size_t size() const { return static_cast<std::size_t>(scores.size()); }
};

LfdrScores compute_lfdr(const CoefStats& stats, const GeneralMixtureModel& model, std::size_t threads = 1);
LfdrScores compute_lfdr(const CoefStats& stats, const MixtureModel& model, std::size_t threads = 1);

// Wraps bare score values (e.g. re-read from a results table).
LfdrScores lfdr_from_scores(const Eigen::VectorXd& scores);

struct TieBreak {
  // Ties in the sorted scores are ordered by hypothesis index unless a seed
  // is given, in which case a seeded random permutation decides.
  std::optional<std::uint64_t> random_seed;
};

struct ScreeningResult {
  double cutoff = 0.0;         // k-th smallest score, 0 when k = 0
  std::vector<bool> rejected;  // per hypothesis
  std::size_t k = 0;
  std::vector<double> fdr_path;     // running mean of sorted scores at each rank
  std::vector<std::size_t> order;   // hypothesis indices in ascending score order
  double score_sum = 0.0;           // sum of rejected scores
  double alpha = 0.0;
};

// Rejects the longest prefix of the ascending scores whose mean is <= alpha.
ScreeningResult step_up_select(const LfdrScores& scores, double alpha, const TieBreak& ties = {});

// Same rule with scores evaluated under the generating model.
ScreeningResult oracle_select(const CoefStats& stats, const GeneralMixtureModel& truth, double alpha,
                              std::size_t threads = 1);
ScreeningResult oracle_select(const CoefStats& stats, const MixtureModel& truth, double alpha,
                              std::size_t threads = 1);

// Empirical estimate of the marginal FDR at threshold t: mean of the scores
// that are <= t (0 when none), summed in ascending order.
double q_hat(const Eigen::VectorXd& scores, double t);

}  // namespace mlfdr
