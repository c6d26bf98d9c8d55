#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace mlfdr {

enum class OutcomeKind { continuous, binary };

// Raw inputs of the mediation model. Column i of `mediators` and `outcomes`
// together form hypothesis i.
struct Dataset {
  Eigen::VectorXd x;                           // exposure, length n
  Eigen::MatrixXd mediators;                   // n x m
  Eigen::MatrixXd outcomes;                    // n x m
  std::optional<Eigen::MatrixXd> confounders;  // n x q
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  // Per-hypothesis exposures (n x m). When set, column i replaces `x` for
  // hypothesis i (high-dimensional exposure variant).
  std::optional<Eigen::MatrixXd> exposure_matrix;

  std::size_t n() const { return static_cast<std::size_t>(x.size()); }
  std::size_t m() const { return static_cast<std::size_t>(mediators.cols()); }
  std::size_t q() const { return confounders ? static_cast<std::size_t>(confounders->cols()) : 0; }
};

// Throws a data error if the dataset violates its structural invariants.
// `extra_outcome_columns` counts outcome-design regressors beyond (M, X, Z).
void validate(const Dataset& ds, std::size_t extra_outcome_columns = 0);

enum class FitStatus {
  ok,
  rank_deficient,
  degenerate_variance,  // residual sum of squares is zero
  separation,           // logistic coefficients diverged
  not_converged,
  constant_outcome,     // binary outcome column without both classes
};

std::string_view to_string(FitStatus status);

// Per-hypothesis sufficient statistics on the root-n scale:
// a = sqrt(n) alpha_hat, b = sqrt(n) beta_hat, var1 / var2 their variances.
// `status` flags hypotheses that must not enter the mixture fit.
struct CoefStats {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd var1;
  Eigen::VectorXd var2;
  std::size_t n = 0;
  // Residual degrees of freedom behind var1 / var2; 0 when the reference
  // distribution is normal (logistic Wald statistics).
  double df1 = 0.0;
  double df2 = 0.0;
  std::vector<FitStatus> status;

  std::size_t m() const { return static_cast<std::size_t>(a.size()); }
  std::size_t valid_count() const;
  // Copy restricted to status == ok; `kept` receives the original indices.
  CoefStats valid_only(std::vector<std::size_t>* kept = nullptr) const;
};

// Throws unless every hypothesis is ok with strictly positive variances.
void require_usable(const CoefStats& stats, std::string_view module);

struct RegressionOptions {
  std::size_t threads = 1;
  // Logistic Newton-Raphson controls.
  int max_iterations = 50;
  double coef_tolerance = 1e-8;
  double separation_bound = 30.0;
};

// OLS for both equations. Confounders enter the mediator and the outcome
// design; residual variances are RSS / (n - p).
CoefStats fit_linear(const Dataset& ds, const RegressionOptions& options = {});

// Mediator equation by OLS, outcome equation by maximum-likelihood logistic
// regression of Y on (M, X, Z) without intercept.
CoefStats fit_binary(const Dataset& ds, const RegressionOptions& options = {});

// OLS with the mediator-exposure product M*X added to the outcome design;
// b and var2 refer to the M coefficient.
CoefStats fit_interaction(const Dataset& ds, const RegressionOptions& options = {});

enum class OutcomeModel { linear, binary, interaction };

// Maps each studentized estimate through its t distribution onto the normal
// scale at the same variance: a -> sqrt(var1) * Phi^-1(F_t(a / sqrt(var1))).
// Under the null the result is exactly N(0, var1), which is what the mixture
// assumes. Sides with zero degrees of freedom are left unchanged.
CoefStats normal_calibrated(const CoefStats& stats);

CoefStats fit(const Dataset& ds, OutcomeModel model, const RegressionOptions& options = {});

namespace detail {

struct OlsFit {
  Eigen::VectorXd coef;
  double rss = 0.0;
  double first_inverse_diag = 0.0;  // [(D'D)^{-1}]_{00}
  bool full_rank = false;
};

// Householder QR least squares; first_inverse_diag comes from R^{-1}.
OlsFit ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response);

struct LogisticFit {
  Eigen::VectorXd coef;
  double first_inverse_info = 0.0;  // [I^{-1}]_{00} at the estimate
  FitStatus status = FitStatus::ok;
  int iterations = 0;
};

LogisticFit logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     const RegressionOptions& options);

}  // namespace detail

}  // namespace mlfdr
