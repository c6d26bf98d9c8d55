#include "mlfdr/simulate.hpp"

#include "mlfdr/error.hpp"
#include "mlfdr/parallel.hpp"
#include "mlfdr/random.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace mlfdr {

namespace {

// Stream ids below kHypothesisStream are shared draws.
constexpr std::uint64_t kExposureStream = 0;
constexpr std::uint64_t kConfounderStream = 1;
constexpr std::uint64_t kHypothesisStream = 2;

template <std::size_t N>
void check_simplex(const std::array<double, N>& w, const char* what) {
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw config_error("simulate", std::string(what) + " has a negative weight");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw config_error("simulate", std::string(what) + " does not sum to one");
}

template <std::size_t N>
std::size_t draw_category(const std::array<double, N>& w, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t c = 0; c < N; ++c) {
    acc += w[c];
    if (u < acc) return c;
  }
  // rounding in the cumulative sum: take the last category with mass
  for (std::size_t c = N; c-- > 0;)
    if (w[c] > 0.0) return c;
  return 0;
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::case1: return "case1";
    case ScenarioKind::case2_confounded: return "case2_confounded";
    case ScenarioKind::binary: return "binary";
    case ScenarioKind::interaction: return "interaction";
    case ScenarioKind::composite: return "composite";
  }
  return "unknown";
}

ScenarioKind scenario_kind_from(std::string_view name) {
  for (auto kind : {ScenarioKind::case1, ScenarioKind::case2_confounded, ScenarioKind::binary,
                    ScenarioKind::interaction, ScenarioKind::composite})
    if (to_string(kind) == name) return kind;
  throw config_error("simulate", "unknown scenario kind '" + std::string(name) + "'");
}

OutcomeModel outcome_model_for(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::binary: return OutcomeModel::binary;
    case ScenarioKind::interaction: return OutcomeModel::interaction;
    default: return OutcomeModel::linear;
  }
}

void SimScenario::validate() const {
  check_simplex(pi_truth, "pi_truth");
  if (kind == ScenarioKind::composite) {
    check_simplex(hyper.alpha_weights, "alpha_weights");
    check_simplex(hyper.beta_weights, "beta_weights");
  }
  if (n < 1 || m < 1) throw config_error("simulate", "n and m must be positive");
  if (!(tau > 0.0)) throw config_error("simulate", "tau must be positive");
  if (hyper.kappa < 0 || hyper.psi < 0 || hyper.gamma_var < 0 || hyper.interaction_var < 0 || !(hyper.x_sd >= 0))
    throw config_error("simulate", "variances must be non-negative");
}

GeneralMixtureModel truth_model(const SimScenario& sc) {
  sc.validate();
  const auto& h = sc.hyper;
  if (sc.kind == ScenarioKind::composite) {
    GeneralMixtureModel g;
    const Eigen::Vector3d p(h.alpha_weights[0], h.alpha_weights[1], h.alpha_weights[2]);
    const Eigen::Vector3d q(h.beta_weights[0], h.beta_weights[1], h.beta_weights[2]);
    g.pi_joint = p * q.transpose();
    g.pi_joint /= g.pi_joint.sum();
    g.mus = Eigen::Vector3d(0.0, h.mu_multipliers[0] * sc.tau, h.mu_multipliers[1] * sc.tau);
    g.kappas = Eigen::Vector3d(0.0, h.kappas[0], h.kappas[1]);
    g.thetas = Eigen::Vector3d(0.0, h.theta_multipliers[0] * sc.tau, h.theta_multipliers[1] * sc.tau);
    g.psis = Eigen::Vector3d(0.0, h.psis[0], h.psis[1]);
    return g;
  }
  const double root_n = std::sqrt(static_cast<double>(sc.n));
  MixtureModel model;
  model.pi = sc.pi_truth;
  model.mu = root_n * h.alpha_multiplier * sc.tau;
  model.theta = root_n * h.beta_multiplier * sc.tau;
  model.kappa = h.kappa;
  model.psi = h.psi;
  return GeneralMixtureModel::from(model);
}

LabeledDataset generate(const SimScenario& sc, std::size_t threads) {
  sc.validate();
  const auto& h = sc.hyper;
  const auto n = static_cast<Eigen::Index>(sc.n);
  const auto m = static_cast<Eigen::Index>(sc.m);
  const double root_n = std::sqrt(static_cast<double>(sc.n));

  LabeledDataset out;
  out.truth = truth_model(sc);
  out.data.outcome_kind = sc.kind == ScenarioKind::binary ? OutcomeKind::binary : OutcomeKind::continuous;
  out.data.x.resize(n);
  {
    Rng rng = make_stream(sc.seed, kExposureStream);
    std::normal_distribution<double> x_dist(h.x_mean, h.x_sd);
    for (Eigen::Index r = 0; r < n; ++r) out.data.x(r) = x_dist(rng);
  }
  const bool confounded = sc.kind == ScenarioKind::case2_confounded;
  if (confounded) {
    Rng rng = make_stream(sc.seed, kConfounderStream);
    std::normal_distribution<double> z_dist(0.0, 1.0);
    Eigen::MatrixXd z(n, 1);
    for (Eigen::Index r = 0; r < n; ++r) z(r, 0) = z_dist(rng);
    out.data.confounders = std::move(z);
  }

  out.data.mediators.resize(n, m);
  out.data.outcomes.resize(n, m);
  out.true_alpha.resize(m);
  out.true_beta.resize(m);
  out.labels.resize(sc.m);

  const Eigen::VectorXd& x = out.data.x;
  parallel_for(sc.m, threads, [&](std::size_t idx) {
    const auto i = static_cast<Eigen::Index>(idx);
    Rng rng = make_stream(sc.seed, kHypothesisStream + idx);
    std::normal_distribution<double> std_normal(0.0, 1.0);

    double alpha = 0.0, beta = 0.0;
    Hypothesis label;
    if (sc.kind == ScenarioKind::composite) {
      const std::size_t u = draw_category(h.alpha_weights, rng);
      const std::size_t v = draw_category(h.beta_weights, rng);
      label = hypothesis_from(u > 0, v > 0);
      const double za = std_normal(rng), zb = std_normal(rng);
      if (u > 0) alpha = (h.mu_multipliers[u - 1] * sc.tau + std::sqrt(h.kappas[u - 1]) * za) / root_n;
      if (v > 0) beta = (h.theta_multipliers[v - 1] * sc.tau + std::sqrt(h.psis[v - 1]) * zb) / root_n;
    } else {
      label = static_cast<Hypothesis>(draw_category(sc.pi_truth, rng));
      const double za = std_normal(rng), zb = std_normal(rng);
      if (alpha_nonzero(label)) alpha = h.alpha_multiplier * sc.tau + std::sqrt(h.kappa / static_cast<double>(sc.n)) * za;
      if (beta_nonzero(label)) beta = h.beta_multiplier * sc.tau + std::sqrt(h.psi / static_cast<double>(sc.n)) * zb;
    }
    const double gamma = h.gamma_mean + std::sqrt(h.gamma_var) * std_normal(rng);
    const double interaction = h.interaction_mean + std::sqrt(h.interaction_var) * std_normal(rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double e = std_normal(rng);
      const double eps = std_normal(rng);
      const double u = unit(rng);
      double mediator = x(r) * alpha + e;
      double linear = 0.0;
      if (confounded) mediator += h.confounder_mediator_coef * (*out.data.confounders)(r, 0);
      linear = mediator * beta + x(r) * gamma;
      if (confounded) linear += h.confounder_outcome_coef * (*out.data.confounders)(r, 0);
      if (sc.kind == ScenarioKind::interaction) linear += mediator * x(r) * interaction;
      double y = 0.0;
      if (sc.kind == ScenarioKind::binary) {
        const double prob = 1.0 / (1.0 + std::exp(-linear));
        y = u < prob ? 1.0 : 0.0;
      } else {
        y = linear + eps;
      }
      out.data.mediators(r, i) = mediator;
      out.data.outcomes(r, i) = y;
    }
    out.labels[idx] = label;
    out.true_alpha(i) = alpha;
    out.true_beta(i) = beta;
  });
  return out;
}

double natural_indirect_effect(double alpha, double beta, double theta, double x, double x_star) {
  return alpha * beta * (x - x_star) + theta * alpha * x * (x - x_star);
}

}  // namespace mlfdr
