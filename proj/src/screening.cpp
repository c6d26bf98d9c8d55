#include "mlfdr/screening.hpp"

#include "gauss.hpp"
#include "mlfdr/error.hpp"
#include "mlfdr/parallel.hpp"
#include "mlfdr/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mlfdr {

LfdrScores compute_lfdr(const CoefStats& stats, const GeneralMixtureModel& model, std::size_t threads) {
  require_usable(stats, "screening");
  model.validate();
  const Eigen::Index m = static_cast<Eigen::Index>(stats.m());
  const Eigen::Index du = model.mus.size(), dv = model.thetas.size();
  const Eigen::ArrayXXd log_pi = model.pi_joint.array().log();

  LfdrScores out;
  out.scores.resize(m);
  out.log_null_mass.resize(m);
  out.log_total_density.resize(m);
  std::vector<char> flags(static_cast<std::size_t>(m), 0);

  parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t idx) {
    const auto i = static_cast<Eigen::Index>(idx);
    Eigen::ArrayXd la(du), lb(dv);
    for (Eigen::Index u = 0; u < du; ++u)
      la(u) = detail::log_normal_pdf(stats.a(i), model.mus(u), stats.var1(i) + model.kappas(u));
    for (Eigen::Index v = 0; v < dv; ++v)
      lb(v) = detail::log_normal_pdf(stats.b(i), model.thetas(v), stats.var2(i) + model.psis(v));
    Eigen::ArrayXXd logs(1, du * dv);
    Eigen::Index nulls = 0;
    Eigen::ArrayXXd null_logs(1, du + dv - 1);
    for (Eigen::Index v = 0; v < dv; ++v)
      for (Eigen::Index u = 0; u < du; ++u) {
        const double l = la(u) + lb(v) + log_pi(u, v);
        logs(0, u + v * du) = l;
        if (u == 0 || v == 0) null_logs(0, nulls++) = l;
      }
    const double total = detail::row_logsumexp(logs)(0);
    const double null = detail::row_logsumexp(null_logs)(0);
    out.log_total_density(i) = total;
    out.log_null_mass(i) = null;
    if (!std::isfinite(total)) {
      out.scores(i) = 1.0;
      flags[idx] = 1;
    } else {
      out.scores(i) = std::clamp(std::exp(null - total), 0.0, 1.0);
    }
  });
  out.null_density_mass = out.log_null_mass.array().exp().matrix();
  out.total_density = out.log_total_density.array().exp().matrix();
  out.underflow.assign(flags.begin(), flags.end());
  return out;
}

LfdrScores compute_lfdr(const CoefStats& stats, const MixtureModel& model, std::size_t threads) {
  model.validate();
  return compute_lfdr(stats, GeneralMixtureModel::from(model), threads);
}

LfdrScores lfdr_from_scores(const Eigen::VectorXd& scores) {
  LfdrScores out;
  out.scores = scores;
  out.log_null_mass = scores.array().log().matrix();
  out.log_total_density = Eigen::VectorXd::Zero(scores.size());
  out.null_density_mass = scores;
  out.total_density = Eigen::VectorXd::Ones(scores.size());
  out.underflow.assign(static_cast<std::size_t>(scores.size()), false);
  return out;
}

ScreeningResult step_up_select(const LfdrScores& lfdr, double alpha, const TieBreak& ties) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("screening", "alpha must lie in (0, 1)");
  const auto& s = lfdr.scores;
  const std::size_t m = static_cast<std::size_t>(s.size());
  for (std::size_t i = 0; i < m; ++i)
    if (!(s(static_cast<Eigen::Index>(i)) >= 0.0 && s(static_cast<Eigen::Index>(i)) <= 1.0))
      throw data_error("screening", "lfdr values must lie in [0, 1]");

  ScreeningResult out;
  out.alpha = alpha;
  out.order.resize(m);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::vector<std::size_t> rank(m);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  if (ties.random_seed) {
    Rng rng = make_stream(*ties.random_seed, 0);
    std::shuffle(rank.begin(), rank.end(), rng);
  }
  std::sort(out.order.begin(), out.order.end(), [&](std::size_t l, std::size_t r) {
    const double sl = s(static_cast<Eigen::Index>(l)), sr = s(static_cast<Eigen::Index>(r));
    return sl != sr ? sl < sr : rank[l] < rank[r];
  });

  out.fdr_path.resize(m);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    running += s(static_cast<Eigen::Index>(out.order[j]));
    out.fdr_path[j] = running / static_cast<double>(j + 1);
    if (out.fdr_path[j] <= alpha) {
      out.k = j + 1;
      out.score_sum = running;
    }
  }
  out.rejected.assign(m, false);
  for (std::size_t j = 0; j < out.k; ++j) out.rejected[out.order[j]] = true;
  out.cutoff = out.k ? s(static_cast<Eigen::Index>(out.order[out.k - 1])) : 0.0;
  return out;
}

ScreeningResult oracle_select(const CoefStats& stats, const GeneralMixtureModel& truth, double alpha,
                              std::size_t threads) {
  return step_up_select(compute_lfdr(stats, truth, threads), alpha);
}

ScreeningResult oracle_select(const CoefStats& stats, const MixtureModel& truth, double alpha, std::size_t threads) {
  return step_up_select(compute_lfdr(stats, truth, threads), alpha);
}

double q_hat(const Eigen::VectorXd& scores, double t) {
  std::vector<double> kept;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (scores(i) <= t) kept.push_back(scores(i));
  if (kept.empty()) return 0.0;
  std::sort(kept.begin(), kept.end());
  double sum = 0.0;
  for (double v : kept) sum += v;
  return sum / static_cast<double>(kept.size());
}

}  // namespace mlfdr
