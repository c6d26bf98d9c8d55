#include "oracles.hpp"

#include "mlfdr/error.hpp"
#include "mlfdr/regression.hpp"
#include "mlfdr/simulate.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using namespace mlfdr;

namespace {

double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::ArrayXd cx = x.array() - x.mean();
  const Eigen::ArrayXd cy = y.array() - y.mean();
  return (cx * cy).sum() / std::sqrt(cx.square().sum() * cy.square().sum());
}

bool same(const LabeledDataset& l, const LabeledDataset& r) {
  return l.data.x == r.data.x && l.data.mediators == r.data.mediators && l.data.outcomes == r.data.outcomes &&
         l.labels == r.labels && l.true_alpha == r.true_alpha && l.true_beta == r.true_beta;
}

}  // namespace

TEST_CASE("degenerate simplex gives only null hypotheses") {
  SimScenario sc;
  sc.pi_truth = {1.0, 0.0, 0.0, 0.0};
  sc.m = 300;
  const auto d = generate(sc);
  for (auto h : d.labels) CHECK(h == Hypothesis::h00);
  CHECK((d.true_alpha.array() == 0.0).all());
  CHECK((d.true_beta.array() == 0.0).all());
}

TEST_CASE("dense label frequencies follow the mixing weights") {
  SimScenario sc;
  sc.pi_truth = kDensePi;
  sc.m = 1000;
  sc.seed = 2024;
  const auto d = generate(sc);
  std::array<double, 4> freq{};
  for (auto h : d.labels) freq[index_of(h)] += 1.0 / 1000.0;
  for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(freq[c] - kDensePi[c]) < 0.05);
}

TEST_CASE("labels agree with the coefficient pattern") {
  for (auto kind : {ScenarioKind::case1, ScenarioKind::case2_confounded, ScenarioKind::binary,
                    ScenarioKind::interaction, ScenarioKind::composite}) {
    SimScenario sc;
    sc.kind = kind;
    sc.pi_truth = kDensePi;
    sc.m = 200;
    sc.n = 50;
    sc.tau = kind == ScenarioKind::composite ? 3.0 : 1.0;
    const auto d = generate(sc);
    for (std::size_t i = 0; i < sc.m; ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      CHECK(alpha_nonzero(d.labels[i]) == (d.true_alpha(idx) != 0.0));
      CHECK(beta_nonzero(d.labels[i]) == (d.true_beta(idx) != 0.0));
    }
    CHECK_NOTHROW(d.truth.validate());
  }
}

TEST_CASE("equal seeds reproduce, different seeds differ, threads do not matter") {
  SimScenario sc;
  sc.kind = ScenarioKind::case2_confounded;
  sc.pi_truth = kDensePi;
  sc.m = 150;
  sc.seed = 9;
  const auto a = generate(sc);
  const auto b = generate(sc, 4);
  CHECK(same(a, b));
  CHECK(*a.data.confounders == *b.data.confounders);
  sc.seed = 10;
  CHECK_FALSE(same(a, generate(sc)));
}

TEST_CASE("binary outcomes are zero-one") {
  SimScenario sc;
  sc.kind = ScenarioKind::binary;
  sc.m = 50;
  const auto d = generate(sc);
  CHECK(d.data.outcome_kind == OutcomeKind::binary);
  CHECK((d.data.outcomes.array() == 0.0 || d.data.outcomes.array() == 1.0).all());
}

TEST_CASE("exposure follows its stated distribution") {
  SimScenario sc;
  sc.n = 5000;
  sc.m = 1;
  const auto d = generate(sc);
  const double mean = d.data.x.mean();
  const double sd = std::sqrt((d.data.x.array() - mean).square().sum() / 4999.0);
  CHECK(std::abs(mean - 2.0) < 4.0 * 0.75 / std::sqrt(5000.0));
  CHECK(std::abs(sd - 0.75) < 0.05);
}

TEST_CASE("mediator and outcome noises are uncorrelated") {
  SimScenario sc;
  sc.pi_truth = {1.0, 0.0, 0.0, 0.0};
  sc.n = 100;
  sc.m = 20;
  sc.seed = 31;
  const auto d = generate(sc);
  const Eigen::VectorXd& x = d.data.x;
  for (Eigen::Index i = 0; i < 20; i += 4) {
    // Under H00, M = e and Y = x gamma + eps; the outcome residual on x
    // isolates eps.
    const Eigen::VectorXd y = d.data.outcomes.col(i);
    const Eigen::VectorXd eps = y - x * (x.dot(y) / x.squaredNorm());
    CHECK(std::abs(correlation(d.data.mediators.col(i), eps)) < 3.0 / std::sqrt(100.0));
  }
}

TEST_CASE("null statistics pass a bivariate normal calibration") {
  SimScenario sc;
  sc.pi_truth = {1.0, 0.0, 0.0, 0.0};
  sc.seed = 12;
  const auto st = fit_linear(generate(sc).data);
  oracle::Vec za, zb;
  for (Eigen::Index i = 0; i < st.a.size(); ++i) {
    za.push_back(st.a(i) / std::sqrt(st.var1(i)));
    zb.push_back(st.b(i) / std::sqrt(st.var2(i)));
  }
  CHECK(oracle::ks_normal_pvalue(za) > 0.01);
  CHECK(oracle::ks_normal_pvalue(zb) > 0.01);
  CHECK(std::abs(correlation(Eigen::Map<Eigen::VectorXd>(za.data(), 1000), Eigen::Map<Eigen::VectorXd>(zb.data(), 1000))) <
        3.0 / std::sqrt(1000.0));
}

TEST_CASE("truth model places alternatives on the root-n scale") {
  SimScenario sc;
  sc.n = 100;
  sc.tau = 10.0 / std::sqrt(100.0);
  const auto t = truth_model(sc).as_standard();
  REQUIRE(t.has_value());
  CHECK(t->mu == doctest::Approx(2.0));
  CHECK(t->theta == doctest::Approx(3.0));
  CHECK(t->kappa == 1.0);
  CHECK(t->psi == 4.0);
  CHECK(t->pi == kSparsePi);

  sc.kind = ScenarioKind::composite;
  sc.tau = 5.0;
  const auto g = truth_model(sc);
  CHECK(g.d1() == 2);
  CHECK(g.mus(1) == doctest::Approx(1.0));
  CHECK(g.mus(2) == doctest::Approx(5.5));
  CHECK(g.thetas(1) == doctest::Approx(-6.0));
  CHECK(g.thetas(2) == doctest::Approx(1.5));
  CHECK(g.class_probabilities()[0] == doctest::Approx(0.64));
  CHECK(g.class_probabilities()[3] == doctest::Approx(0.04));
}

TEST_CASE("composite coefficients have the generating means") {
  SimScenario sc;
  sc.kind = ScenarioKind::composite;
  sc.tau = 5.0;
  sc.m = 20000;
  sc.n = 10;
  const auto d = generate(sc);
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < d.true_alpha.size(); ++i)
    if (d.true_alpha(i) != 0.0) {
      sum += d.true_alpha(i) * std::sqrt(10.0);
      ++count;
    }
  // Equal-weight mixture of N(1, 1) and N(5.5, 2): mean 3.25.
  const double var = 0.5 * (1.0 + 2.0) + 0.25 * (5.5 - 1.0) * (5.5 - 1.0);
  CHECK(std::abs(sum / count - 3.25) < 4.0 * std::sqrt(var / count));
}

TEST_CASE("natural indirect effect") {
  CHECK(natural_indirect_effect(1, 2, 3, 2, 1) == 8.0);
  CHECK(natural_indirect_effect(1.5, 2, 0, 3, 1) == 1.5 * 2 * 2);
  CHECK(natural_indirect_effect(1.5, 2, 4, 3, 3) == 0.0);
}

TEST_CASE("invalid scenarios are configuration errors") {
  SimScenario sc;
  sc.pi_truth = {0.5, 0.5, 0.5, 0.0};
  CHECK_THROWS_AS(generate(sc), Error);
  sc.pi_truth = kSparsePi;
  sc.tau = 0.0;
  CHECK_THROWS_AS(generate(sc), Error);
  sc.tau = 1.0;
  sc.m = 0;
  CHECK_THROWS_AS(generate(sc), Error);
  CHECK_THROWS_AS(scenario_kind_from("case9"), Error);
  CHECK(scenario_kind_from("interaction") == ScenarioKind::interaction);
}
