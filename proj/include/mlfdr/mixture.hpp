#pragma once

#include "mlfdr/regression.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace mlfdr {

// Latent hypothesis class. The numeric value is the column of the
// four-component responsibilities and the slot in MixtureModel::pi.
enum class Hypothesis : std::uint8_t { h00 = 0, h10 = 1, h01 = 2, h11 = 3 };

constexpr std::size_t index_of(Hypothesis h) { return static_cast<std::size_t>(h); }
constexpr bool alpha_nonzero(Hypothesis h) { return h == Hypothesis::h10 || h == Hypothesis::h11; }
constexpr bool beta_nonzero(Hypothesis h) { return h == Hypothesis::h01 || h == Hypothesis::h11; }
constexpr Hypothesis hypothesis_from(bool alpha, bool beta) {
  return static_cast<Hypothesis>((alpha ? 1 : 0) + (beta ? 2 : 0));
}

// Four-component bivariate mixture for (a, b):
//   a | alpha != 0 ~ N(mu, var1 + kappa),  b | beta != 0 ~ N(theta, var2 + psi),
// and N(0, var) for the null coordinates.
struct MixtureModel {
  std::array<double, 4> pi{0.85, 0.05, 0.05, 0.05};  // (00, 10, 01, 11)
  double mu = 0.0;
  double theta = 0.0;
  double kappa = 0.0;
  double psi = 0.0;

  // j flags a nonzero alpha, k a nonzero beta.
  double weight(int j, int k) const { return pi[static_cast<std::size_t>(j + 2 * k)]; }
  double weight(Hypothesis h) const { return pi[index_of(h)]; }
  void validate() const;
};

// (d1 + 1) x (d2 + 1) component extension. Index 0 on either axis is the
// point mass at zero, so mus[0] = kappas[0] = thetas[0] = psis[0] = 0.
struct GeneralMixtureModel {
  Eigen::MatrixXd pi_joint;  // rows u (alpha components), cols v (beta components)
  Eigen::VectorXd mus;
  Eigen::VectorXd kappas;
  Eigen::VectorXd thetas;
  Eigen::VectorXd psis;

  std::size_t d1() const { return static_cast<std::size_t>(mus.size()) - 1; }
  std::size_t d2() const { return static_cast<std::size_t>(thetas.size()) - 1; }
  std::size_t components() const { return static_cast<std::size_t>(pi_joint.size()); }
  // Column of component (u, v) in the responsibility matrix.
  std::size_t component(std::size_t u, std::size_t v) const { return u + v * (d1() + 1); }
  // P(H00), P(H10), P(H01), P(H11).
  std::array<double, 4> class_probabilities() const;
  std::optional<MixtureModel> as_standard() const;
  void validate() const;

  static GeneralMixtureModel from(const MixtureModel& model);
};

// m x K row-stochastic posterior class probabilities.
using Responsibilities = Eigen::MatrixXd;

struct EmConfig {
  double tolerance = 1e-8;  // relative log-likelihood change
  int max_iterations = 500;
  int restarts = 3;         // moment start, marginal-fit start, then perturbed starts
  std::uint64_t seed = 20240101;
  double pi_floor = 1e-6;
  int grid_points = 50;
  int refine_points = 10;
  double grid_min = 1e-3;
  double grid_max_factor = 100.0;  // upper end as a multiple of the sample variance
  std::optional<MixtureModel> init;
  std::size_t threads = 1;
  // Squared-extrapolation (SQUAREM) steps between plain EM steps. An
  // extrapolated point is kept only if it does not lower the likelihood, so
  // the ascent property and the fixed points are those of plain EM.
  bool accelerate = true;
};

struct EmTrace {
  std::vector<double> loglik;  // observed-data log-likelihood per accepted iterate
  int iterations = 0;          // M-steps performed
  bool converged = false;
  bool floor_active = false;
  int chosen_restart = 0;
  std::vector<double> restart_loglik;
};

struct EmFit {
  MixtureModel model;
  EmTrace trace;
};

struct GeneralEmFit {
  GeneralMixtureModel model;
  EmTrace trace;        // joint-weight stage
  EmTrace alpha_trace;  // marginal fit of a
  EmTrace beta_trace;   // marginal fit of b
};

Responsibilities e_step(const CoefStats& stats, const MixtureModel& model, std::size_t threads = 1);
Responsibilities e_step(const CoefStats& stats, const GeneralMixtureModel& model, std::size_t threads = 1);

// One M-step: pi as column means, mu/theta as weighted means using the
// current kappa/psi, then kappa/psi by grid search on the expected complete
// log-likelihood. The pi floor is not applied here.
MixtureModel m_step(const CoefStats& stats, const Responsibilities& resp, const MixtureModel& current,
                    const EmConfig& config);

// Joint-weight update of the two-step fit: column means of the
// responsibilities arranged as a (d1 + 1) x (d2 + 1) matrix.
Eigen::MatrixXd joint_weights(const Responsibilities& resp, const GeneralMixtureModel& shape);

// Coarse log-spaced grid for a scale parameter given the sample variance of
// the corresponding coordinate.
std::vector<double> scale_grid(double sample_variance, const EmConfig& config);

MixtureModel default_init(const CoefStats& stats);

// Single EM run from `init`, no restarts.
EmFit em_run(const CoefStats& stats, const MixtureModel& init, const EmConfig& config);

// Restarted EM. Hypotheses are put in a canonical order first, so the fit
// does not depend on their input order.
EmFit em_fit(const CoefStats& stats, const EmConfig& config = {});

GeneralEmFit em_fit_two_step(const CoefStats& stats, std::size_t d1, std::size_t d2, const EmConfig& config = {});

double loglik(const CoefStats& stats, const MixtureModel& model);
double loglik(const CoefStats& stats, const GeneralMixtureModel& model);

// loglik(fitted) - loglik(truth); non-negative when the fit is an
// approximate maximum-likelihood estimate.
double amle_ratio(const CoefStats& stats, const MixtureModel& fitted, const MixtureModel& truth);
double amle_ratio(const CoefStats& stats, const GeneralMixtureModel& fitted, const GeneralMixtureModel& truth);

// Standard EM when d1 = d2 = 1, two-step otherwise, unless overridden.
struct MixtureFit {
  GeneralMixtureModel model;
  std::optional<MixtureModel> standard;
  EmTrace trace;
  bool two_step = false;
};

MixtureFit fit_mixture(const CoefStats& stats, std::size_t d1, std::size_t d2, std::optional<bool> two_step,
                       const EmConfig& config = {});

}  // namespace mlfdr
