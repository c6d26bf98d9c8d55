#include "oracles.hpp"
#include "sampling.hpp"

#include "mlfdr/error.hpp"
#include "mlfdr/screening.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace mlfdr;

namespace {

LfdrScores scores_of(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return lfdr_from_scores(v);
}

std::vector<bool> random_rejections(std::uint64_t seed, double alpha, Eigen::VectorXd* out_scores = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd s(200);
  // A mixture of small and large scores so that k lands in the interior.
  for (auto& v : s) v = u(rng) < 0.3 ? 0.2 * u(rng) * u(rng) : u(rng);
  if (out_scores) *out_scores = s;
  return step_up_select(lfdr_from_scores(s), alpha).rejected;
}

}  // namespace

TEST_CASE("step-up worked examples") {
  const auto all = step_up_select(scores_of({0.01, 0.05, 0.20}), 0.10);
  CHECK(all.k == 3);
  CHECK(all.rejected == std::vector<bool>{true, true, true});
  CHECK(all.fdr_path[0] == doctest::Approx(0.01));
  CHECK(all.fdr_path[1] == doctest::Approx(0.03));
  CHECK(all.fdr_path[2] == doctest::Approx(0.26 / 3.0));
  CHECK(all.cutoff == 0.20);

  const auto none = step_up_select(scores_of({0.2, 0.3}), 0.10);
  CHECK(none.k == 0);
  CHECK(none.rejected == std::vector<bool>{false, false});
  CHECK(none.cutoff == 0.0);
}

TEST_CASE("alpha must lie strictly inside the unit interval") {
  const auto s = scores_of({0.1, 0.2});
  CHECK_THROWS_AS(step_up_select(s, 0.0), Error);
  CHECK_THROWS_AS(step_up_select(s, 1.0), Error);
  CHECK_THROWS_AS(step_up_select(scores_of({0.1, 1.5}), 0.1), Error);
}

TEST_CASE("lfdr at a fixed point matches direct density arithmetic") {
  CoefStats st;
  st.n = 100;
  st.a = Eigen::VectorXd::Zero(1);
  st.b = Eigen::VectorXd::Zero(1);
  st.var1 = Eigen::VectorXd::Ones(1);
  st.var2 = Eigen::VectorXd::Ones(1);
  st.status.assign(1, FitStatus::ok);
  MixtureModel model;
  model.pi = {0.25, 0.25, 0.25, 0.25};
  model.mu = model.theta = 2.0;
  model.kappa = model.psi = 1.0;
  const auto got = compute_lfdr(st, model);
  const double want = oracle::lfdr({0.25, 0.25, 0.25, 0.25, 2.0, 2.0, 1.0, 1.0}, 0.0, 0.0, 1.0, 1.0);
  CHECK(std::abs(got.scores(0) - want) < 1e-12);
  CHECK(std::abs(got.scores(0) - got.null_density_mass(0) / got.total_density(0)) < 1e-12);
}

TEST_CASE("lfdr on random points matches the oracle") {
  MixtureModel model = testing_support::recovery_model();
  const auto draw = testing_support::draw_from_model(model, 300, 0.9, 1.3, 2);
  const auto got = compute_lfdr(draw.stats, model);
  for (Eigen::Index i = 0; i < 300; ++i) {
    const double want = oracle::lfdr({model.pi[0], model.pi[1], model.pi[2], model.pi[3], model.mu, model.theta,
                                      model.kappa, model.psi},
                                     draw.stats.a(i), draw.stats.b(i), 0.9, 1.3);
    CHECK(std::abs(got.scores(i) - want) < 1e-12);
  }
}

TEST_CASE("scores are one when the model has no non-null mass") {
  const auto draw = testing_support::draw_from_model(testing_support::recovery_model(), 500, 1.0, 1.0, 3);
  MixtureModel no_alt = testing_support::recovery_model();
  no_alt.pi = {0.5, 0.25, 0.25, 0.0};
  CHECK((compute_lfdr(draw.stats, no_alt).scores.array() == 1.0).all());
  MixtureModel all_null = no_alt;
  all_null.pi = {1.0, 0.0, 0.0, 0.0};
  CHECK((compute_lfdr(draw.stats, all_null).scores.array() == 1.0).all());
  CHECK(oracle_select(draw.stats, no_alt, 0.5).k == 0);
}

TEST_CASE("vanishing density gives a conservative flagged score") {
  CoefStats st;
  st.n = 10;
  st.a = Eigen::Vector2d(1e200, 0.5);
  st.b = Eigen::Vector2d(0.0, 0.5);
  st.var1 = Eigen::Vector2d::Ones();
  st.var2 = Eigen::Vector2d::Ones();
  st.status.assign(2, FitStatus::ok);
  const auto s = compute_lfdr(st, testing_support::recovery_model());
  CHECK(s.scores(0) == 1.0);
  CHECK(s.underflow[0]);
  CHECK_FALSE(s.underflow[1]);
}

TEST_CASE("raising the alternative weight never raises a score") {
  const auto draw = testing_support::draw_from_model(testing_support::recovery_model(), 400, 1.0, 1.0, 4);
  MixtureModel low = testing_support::recovery_model();
  low.pi = {0.88, 0.05, 0.05, 0.02};
  MixtureModel high = low;
  high.pi = {0.80, 0.05, 0.05, 0.10};
  const auto sl = compute_lfdr(draw.stats, low).scores;
  const auto sh = compute_lfdr(draw.stats, high).scores;
  CHECK((sh.array() <= sl.array() + 1e-15).all());
  CHECK((sl.array() >= 0.0).all());
  CHECK((sl.array() <= 1.0).all());
}

TEST_CASE("step-up agrees with the sup-definition scan") {
  int mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Eigen::VectorXd s;
    const auto rejected = random_rejections(seed, 0.1, &s);
    const auto oracle = oracle::sup_scan_reject(oracle::Vec(s.data(), s.data() + s.size()), 0.1);
    mismatches += rejected != oracle;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("rejection set does not depend on input order") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Eigen::VectorXd s;
    const auto base = random_rejections(seed, 0.05, &s);
    std::vector<Eigen::Index> perm(200);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed + 99));
    Eigen::VectorXd t(200);
    for (Eigen::Index j = 0; j < 200; ++j) t(j) = s(perm[static_cast<std::size_t>(j)]);
    const auto shuffled = step_up_select(lfdr_from_scores(t), 0.05).rejected;
    for (Eigen::Index j = 0; j < 200; ++j)
      CHECK(shuffled[static_cast<std::size_t>(j)] == base[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])]);
  }
}

TEST_CASE("rejected set is maximal and its mean respects alpha") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Eigen::VectorXd s;
    random_rejections(seed, 0.05, &s);
    const auto r = step_up_select(lfdr_from_scores(s), 0.05);
    std::vector<double> sorted(s.data(), s.data() + s.size());
    std::sort(sorted.begin(), sorted.end());
    if (r.k > 0) {
      double sum = 0.0;
      for (std::size_t j = 0; j < r.k; ++j) sum += sorted[j];
      CHECK(sum / static_cast<double>(r.k) <= 0.05);
      CHECK(r.score_sum / static_cast<double>(r.k) == q_hat(s, r.cutoff));
    }
    // No longer prefix qualifies.
    double sum = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
      sum += sorted[j];
      if (j + 1 > r.k) CHECK(sum / static_cast<double>(j + 1) > 0.05);
    }
    const auto count = static_cast<std::size_t>(std::count(r.rejected.begin(), r.rejected.end(), true));
    CHECK(count == r.k);
    for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(r.rejected[static_cast<std::size_t>(i)] == (s(i) <= r.cutoff));
  }
}

TEST_CASE("ties are broken by index or by a seeded permutation") {
  // Prefix means 0, 0.05, 0.0667: only one of the tied 0.1 values fits.
  const auto s = scores_of({0.1, 0.0, 0.1});
  const auto by_index = step_up_select(s, 0.05);
  CHECK(by_index.k == 2);
  CHECK(by_index.rejected == std::vector<bool>{true, true, false});

  TieBreak seeded;
  seeded.random_seed = 7;
  const auto first = step_up_select(s, 0.05, seeded);
  const auto again = step_up_select(s, 0.05, seeded);
  CHECK(first.rejected == again.rejected);
  CHECK(first.k == 2);
  CHECK(first.rejected[1]);
  bool saw_other = false;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    seeded.random_seed = seed;
    saw_other |= step_up_select(s, 0.05, seeded).rejected[2];
  }
  CHECK(saw_other);
}

TEST_CASE("oracle selection with the fitted model equals the adaptive path") {
  const auto model = testing_support::recovery_model();
  const auto draw = testing_support::draw_from_model(model, 1000, 1.0, 1.0, 9);
  const auto adaptive = step_up_select(compute_lfdr(draw.stats, model), 0.05);
  const auto oracle = oracle_select(draw.stats, model, 0.05);
  CHECK(adaptive.rejected == oracle.rejected);
  CHECK(adaptive.cutoff == oracle.cutoff);
  const auto general = oracle_select(draw.stats, GeneralMixtureModel::from(model), 0.05);
  CHECK(general.rejected == oracle.rejected);
}

TEST_CASE("scores are thread independent") {
  const auto model = testing_support::recovery_model();
  const auto draw = testing_support::draw_from_model(model, 3000, 1.0, 1.0, 10);
  CHECK(compute_lfdr(draw.stats, model, 1).scores == compute_lfdr(draw.stats, model, 4).scores);
}
