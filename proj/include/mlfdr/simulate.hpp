#pragma once

#include "mlfdr/mixture.hpp"
#include "mlfdr/regression.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mlfdr {

enum class ScenarioKind { case1, case2_confounded, binary, interaction, composite };

std::string_view to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from(std::string_view name);

// Regression model that matches the way a scenario generates outcomes.
OutcomeModel outcome_model_for(ScenarioKind kind);

struct ScenarioHyper {
  double kappa = 1.0;  // variance of sqrt(n) * alpha under an alpha alternative
  double psi = 4.0;    // variance of sqrt(n) * beta under a beta alternative
  double alpha_multiplier = 0.2;
  double beta_multiplier = 0.3;
  double x_mean = 2.0;
  double x_sd = 0.75;
  double gamma_mean = 1.0;
  double gamma_var = 0.5;
  double interaction_mean = 2.0;  // theta_i for the mediator-exposure interaction
  double interaction_var = 0.25;
  double confounder_mediator_coef = 1.5;
  double confounder_outcome_coef = 0.3;
  // Composite alternative: marginal weights and per-component parameters on
  // the root-n scale; locations are multiples of tau.
  std::array<double, 3> alpha_weights{0.8, 0.1, 0.1};
  std::array<double, 3> beta_weights{0.8, 0.1, 0.1};
  std::array<double, 2> mu_multipliers{0.2, 1.1};
  std::array<double, 2> theta_multipliers{-1.2, 0.3};
  std::array<double, 2> kappas{1.0, 2.0};
  std::array<double, 2> psis{4.0, 2.0};
};

struct SimScenario {
  ScenarioKind kind = ScenarioKind::case1;
  std::array<double, 4> pi_truth{0.88, 0.05, 0.05, 0.02};  // (00, 10, 01, 11)
  std::size_t n = 100;
  std::size_t m = 1000;
  // Mediation degree. Case 1 style scenarios use alpha = 0.2 tau + h, so the
  // usual grid is tau = c / sqrt(n); the composite scenario places its
  // locations at multiples of tau on the root-n scale directly.
  double tau = 1.0;
  ScenarioHyper hyper;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr std::array<double, 4> kDensePi{0.4, 0.2, 0.2, 0.2};
inline constexpr std::array<double, 4> kSparsePi{0.88, 0.05, 0.05, 0.02};

struct LabeledDataset {
  Dataset data;
  std::vector<Hypothesis> labels;
  Eigen::VectorXd true_alpha;
  Eigen::VectorXd true_beta;
  GeneralMixtureModel truth;
};

// Generating hyperparameters on the (a, b) scale.
GeneralMixtureModel truth_model(const SimScenario& sc);

LabeledDataset generate(const SimScenario& sc, std::size_t threads = 1);

// alpha * beta * (x - x*) + theta * alpha * x * (x - x*)
double natural_indirect_effect(double alpha, double beta, double theta, double x, double x_star);

}  // namespace mlfdr
