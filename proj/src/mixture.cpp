#include "mlfdr/mixture.hpp"

#include "gauss.hpp"
#include "mlfdr/error.hpp"
#include "mlfdr/parallel.hpp"
#include "mlfdr/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

namespace mlfdr {

namespace {

constexpr Eigen::Index kBlock = 2048;

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 1.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

// Clamps entries below the floor and renormalizes; reports whether it acted.
template <typename Vec>
bool apply_floor(Vec& weights, double floor) {
  bool active = false;
  for (auto& w : weights) {
    if (w < floor) {
      w = floor;
      active = true;
    }
  }
  if (active) {
    double total = 0.0;
    for (auto w : weights) total += w;
    for (auto& w : weights) w /= total;
  }
  return active;
}

bool apply_floor(Eigen::MatrixXd& weights, double floor) {
  bool active = false;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights.data()[i] < floor) {
      weights.data()[i] = floor;
      active = true;
    }
  }
  if (active) weights /= weights.sum();
  return active;
}

struct EStepOut {
  Responsibilities resp;
  double loglik = 0.0;
};

EStepOut general_e_step(const CoefStats& stats, const GeneralMixtureModel& model, std::size_t threads) {
  const Eigen::Index m = static_cast<Eigen::Index>(stats.m());
  const Eigen::Index du = model.mus.size();
  const Eigen::Index dv = model.thetas.size();
  const Eigen::Index k = du * dv;
  EStepOut out;
  out.resp.resize(m, k);
  Eigen::ArrayXd row_log(m);
  const Eigen::ArrayXXd log_pi = model.pi_joint.array().log();
  const std::size_t blocks = static_cast<std::size_t>((m + kBlock - 1) / kBlock);
  parallel_for(blocks, threads, [&](std::size_t blk) {
    const Eigen::Index begin = static_cast<Eigen::Index>(blk) * kBlock;
    const Eigen::Index rows = std::min(kBlock, m - begin);
    const Eigen::ArrayXd a = stats.a.segment(begin, rows).array();
    const Eigen::ArrayXd b = stats.b.segment(begin, rows).array();
    const Eigen::ArrayXd v1 = stats.var1.segment(begin, rows).array();
    const Eigen::ArrayXd v2 = stats.var2.segment(begin, rows).array();
    Eigen::ArrayXXd la(rows, du), lb(rows, dv), logs(rows, k);
    for (Eigen::Index u = 0; u < du; ++u) la.col(u) = detail::log_normal_pdf(a, model.mus(u), v1, model.kappas(u));
    for (Eigen::Index v = 0; v < dv; ++v) lb.col(v) = detail::log_normal_pdf(b, model.thetas(v), v2, model.psis(v));
    for (Eigen::Index v = 0; v < dv; ++v)
      for (Eigen::Index u = 0; u < du; ++u) logs.col(u + v * du) = la.col(u) + lb.col(v) + log_pi(u, v);
    const Eigen::ArrayXd lse = detail::row_logsumexp(logs);
    row_log.segment(begin, rows) = lse;
    out.resp.middleRows(begin, rows) = (logs.colwise() - lse).exp().matrix();
  });
  // Fixed-order reduction keeps the value independent of the thread count.
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::isfinite(row_log(i)))
      throw numeric_error("mixture", "mixture density vanishes at hypothesis " + std::to_string(i));
    total += row_log(i);
  }
  out.loglik = total;
  return out;
}

// Maximizes sum_i w_i log N(x_i; center, s2_i + scale) over the coarse grid,
// a local refinement around the best cell, and the current value.
double grid_search_scale(const Eigen::ArrayXd& w, const Eigen::ArrayXd& x, const Eigen::ArrayXd& s2, double center,
                         double current, const std::vector<double>& coarse, int refine_points) {
  if (!(w.sum() > 0.0)) return current;
  // Rows with no weight do not move the objective.
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(w.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) > 0.0) rows.push_back(i);
  Eigen::ArrayXd ww(static_cast<Eigen::Index>(rows.size())), dev(ww.size()), ss(ww.size());
  for (Eigen::Index j = 0; j < ww.size(); ++j) {
    const auto i = rows[static_cast<std::size_t>(j)];
    ww(j) = w(i);
    dev(j) = (x(i) - center) * (x(i) - center);
    ss(j) = s2(i);
  }
  auto cost = [&](double scale) {
    const Eigen::ArrayXd v = ss + scale;
    return (ww * (v.log() + dev / v)).sum();
  };

  double best = current;
  double best_cost = cost(current);
  std::size_t best_idx = 0;
  bool coarse_won = false;
  for (std::size_t g = 0; g < coarse.size(); ++g) {
    const double c = cost(coarse[g]);
    if (c < best_cost) {
      best_cost = c;
      best = coarse[g];
      best_idx = g;
      coarse_won = true;
    }
  }
  if (!coarse_won) {
    // locate the cell holding the current value for refinement
    best_idx = static_cast<std::size_t>(std::lower_bound(coarse.begin(), coarse.end(), current) - coarse.begin());
    best_idx = std::min(best_idx, coarse.size() - 1);
  }
  if (refine_points > 0 && coarse.size() > 1) {
    const double lo = coarse[best_idx == 0 ? 0 : best_idx - 1];
    const double hi = coarse[std::min(best_idx + 1, coarse.size() - 1)];
    const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(refine_points + 1);
    for (int r = 1; r <= refine_points; ++r) {
      const double cand = std::exp(std::log(lo) + step * r);
      const double c = cost(cand);
      if (c < best_cost) {
        best_cost = c;
        best = cand;
      }
    }
  }
  return best;
}

double weighted_mean(const Eigen::ArrayXd& w, const Eigen::ArrayXd& x, double fallback) {
  const double total = w.sum();
  if (!(total > 0.0)) return fallback;
  return (w * x).sum() / total;
}

double trimmed_mean(std::vector<double> v, double trim) {
  std::sort(v.begin(), v.end());
  const auto cut = static_cast<std::size_t>(std::floor(trim * static_cast<double>(v.size())));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = cut; i + cut < v.size(); ++i, ++count) sum += v[i];
  return count ? sum / static_cast<double>(count) : 0.0;
}

// Location and excess spread of the most extreme decile of x.
std::pair<double, double> extreme_decile_moments(const Eigen::VectorXd& x, const Eigen::VectorXd& noise) {
  const std::size_t m = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t top = std::max<std::size_t>(1, m / 10);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(), [&](auto l, auto r) {
    const double al = std::abs(x(static_cast<Eigen::Index>(l))), ar = std::abs(x(static_cast<Eigen::Index>(r)));
    return al != ar ? al > ar : l < r;
  });
  double signed_sum = 0.0;
  for (std::size_t j = 0; j < top; ++j) signed_sum += x(static_cast<Eigen::Index>(idx[j]));
  const bool positive = signed_sum >= 0.0;
  std::vector<double> kept;
  double noise_sum = 0.0;
  for (std::size_t j = 0; j < top; ++j) {
    const auto i = static_cast<Eigen::Index>(idx[j]);
    if ((x(i) >= 0.0) == positive) {
      kept.push_back(x(i));
      noise_sum += noise(i);
    }
  }
  const double location = trimmed_mean(kept, 0.1);
  double spread = 0.0;
  if (kept.size() > 1) {
    const double mean = std::accumulate(kept.begin(), kept.end(), 0.0) / static_cast<double>(kept.size());
    double ss = 0.0;
    for (double v : kept) ss += (v - mean) * (v - mean);
    spread = ss / static_cast<double>(kept.size() - 1) - noise_sum / static_cast<double>(kept.size());
  }
  return {location, std::max(0.0, spread)};
}

// Rows sorted by value so that fits depend only on the multiset of
// hypotheses, not on their order.
CoefStats canonical_order(const CoefStats& stats) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(stats.a.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index l, Eigen::Index r) {
    return std::tie(stats.a(l), stats.b(l), stats.var1(l), stats.var2(l)) <
           std::tie(stats.a(r), stats.b(r), stats.var1(r), stats.var2(r));
  });
  CoefStats out;
  out.n = stats.n;
  const auto m = static_cast<Eigen::Index>(idx.size());
  out.a.resize(m);
  out.b.resize(m);
  out.var1.resize(m);
  out.var2.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto i = idx[static_cast<std::size_t>(j)];
    out.a(j) = stats.a(i);
    out.b(j) = stats.b(i);
    out.var1(j) = stats.var1(i);
    out.var2(j) = stats.var2(i);
  }
  out.status.assign(idx.size(), FitStatus::ok);
  return out;
}

MixtureModel perturb(const MixtureModel& base, Rng& rng) {
  std::uniform_real_distribution<double> loc(0.5, 1.5), scale(0.5, 2.0), null_w(0.5, 0.95), unit(0.0, 1.0);
  MixtureModel out = base;
  out.mu = base.mu * loc(rng);
  out.theta = base.theta * loc(rng);
  out.kappa = base.kappa * scale(rng) + 0.1 * unit(rng);
  out.psi = base.psi * scale(rng) + 0.1 * unit(rng);
  const double p00 = null_w(rng);
  std::array<double, 3> rest{};
  double total = 0.0;
  for (auto& r : rest) {
    r = -std::log(1.0 - unit(rng));  // Dirichlet(1,1,1) via exponentials
    total += r;
  }
  out.pi = {p00, (1 - p00) * rest[0] / total, (1 - p00) * rest[1] / total, (1 - p00) * rest[2] / total};
  return out;
}

// Plain EM steps interleaved with squared extrapolation. Convergence is
// judged on single EM steps: the relative log-likelihood change of one
// M-step + E-step falls below the tolerance. `iterations` counts M-steps.
template <typename Model, typename EStep, typename MStep, typename Pack, typename Unpack>
Model run_em_loop(Model model, EStep&& estep, MStep&& mstep, Pack&& pack, Unpack&& unpack, const EmConfig& config,
                  EmTrace& trace) {
  using EsOut = decltype(estep(model));
  EsOut current = estep(model);
  trace.loglik.push_back(current.loglik);
  Model best = model;
  double best_ll = current.loglik;
  int steps = 0;

  auto accept = [&](const Model& m, double ll) {
    trace.loglik.push_back(ll);
    if (ll > best_ll) {
      best_ll = ll;
      best = m;
    }
  };
  auto small_change = [&](double before, double after) {
    return std::abs(after - before) <= config.tolerance * std::abs(before);
  };

  while (steps < config.max_iterations) {
    const Eigen::VectorXd p0 = pack(model);
    Model m1 = mstep(model, current);
    ++steps;
    EsOut e1 = estep(m1);
    accept(m1, e1.loglik);
    if (small_change(current.loglik, e1.loglik)) {
      trace.converged = true;
      break;
    }
    model = std::move(m1);
    current = std::move(e1);
    if (steps >= config.max_iterations) break;

    Model m2 = mstep(model, current);
    ++steps;
    EsOut e2 = estep(m2);
    accept(m2, e2.loglik);
    if (small_change(current.loglik, e2.loglik)) {
      trace.converged = true;
      break;
    }
    if (!config.accelerate || steps >= config.max_iterations) {
      model = std::move(m2);
      current = std::move(e2);
      continue;
    }

    // Extrapolate along the last two steps: theta0 -> theta1 -> theta2.
    const Eigen::VectorXd p1 = pack(model), p2 = pack(m2);
    Eigen::VectorXd r = p1 - p0;
    const Eigen::VectorXd v = p2 - p1 - r;
    const double vn = v.norm();
    bool took = false;
    if (vn > 0.0 && std::isfinite(vn)) {
      const double step = std::min(-1.0, -r.norm() / vn);
      if (step < -1.0) {
        const Eigen::VectorXd jump = p0 - 2.0 * step * r + step * step * v;
        if (jump.allFinite()) {
          try {
            const Model mj = unpack(jump, m2);
            const EsOut ej = estep(mj);
            Model m3 = mstep(mj, ej);
            ++steps;
            EsOut e3 = estep(m3);
            if (e3.loglik >= e2.loglik) {
              accept(m3, e3.loglik);
              const bool done = small_change(ej.loglik, e3.loglik);
              model = std::move(m3);
              current = std::move(e3);
              took = true;
              if (done) {
                trace.converged = true;
                break;
              }
            }
          } catch (const Error&) {
            // density vanished at the extrapolated point; fall back
          }
        }
      }
    }
    if (!took) {
      model = std::move(m2);
      current = std::move(e2);
    }
  }
  trace.iterations = steps;
  return best;
}

// Extrapolated weights clipped at zero, renormalized, then floored.
Eigen::ArrayXd weights_from_raw(const Eigen::VectorXd& raw, double floor, bool& floored) {
  Eigen::ArrayXd w = raw.array().max(0.0);
  if (!(w.sum() > 0.0)) throw numeric_error("mixture", "extrapolated weights vanished");
  w /= w.sum();
  floored |= apply_floor(w, floor);
  return w;
}

// ---------------------------------------------------------------------------
// Marginal (univariate) mixture used by the first stage of the two-step fit
// ---------------------------------------------------------------------------

struct Univariate {
  Eigen::ArrayXd weights;  // length d + 1, index 0 is the null
  Eigen::ArrayXd centers;  // centers(0) = 0
  Eigen::ArrayXd scales;   // scales(0) = 0
};

struct UnivariateEStep {
  Eigen::ArrayXXd resp;
  double loglik = 0.0;
};

UnivariateEStep univariate_e_step(const Eigen::ArrayXd& x, const Eigen::ArrayXd& s2, const Univariate& model) {
  const Eigen::Index k = model.weights.size();
  Eigen::ArrayXXd logs(x.size(), k);
  for (Eigen::Index u = 0; u < k; ++u)
    logs.col(u) = detail::log_normal_pdf(x, model.centers(u), s2, model.scales(u)) + std::log(model.weights(u));
  const Eigen::ArrayXd lse = detail::row_logsumexp(logs);
  UnivariateEStep out;
  out.resp = (logs.colwise() - lse).exp();
  double total = 0.0;
  for (Eigen::Index i = 0; i < lse.size(); ++i) {
    if (!std::isfinite(lse(i))) throw numeric_error("mixture", "marginal mixture density vanishes");
    total += lse(i);
  }
  out.loglik = total;
  return out;
}

Univariate univariate_init(const Eigen::ArrayXd& x, const Eigen::ArrayXd& s2, std::size_t d) {
  std::vector<double> outside;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x(i)) > 2.0 * std::sqrt(s2(i))) outside.push_back(x(i));
  if (outside.size() < 2 * d) outside.assign(x.data(), x.data() + x.size());
  std::sort(outside.begin(), outside.end());
  Univariate model;
  model.weights = Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(d + 1), 0.2 / static_cast<double>(d));
  model.weights(0) = 0.8;
  model.centers = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(d + 1));
  model.scales = model.centers;
  const double mean_noise = s2.mean();
  for (std::size_t g = 0; g < d; ++g) {
    const std::size_t lo = g * outside.size() / d;
    const std::size_t hi = (g + 1) * outside.size() / d;
    double sum = 0.0;
    for (std::size_t j = lo; j < hi; ++j) sum += outside[j];
    const double count = static_cast<double>(hi - lo);
    const double mean = sum / count;
    double ss = 0.0;
    for (std::size_t j = lo; j < hi; ++j) ss += (outside[j] - mean) * (outside[j] - mean);
    const auto u = static_cast<Eigen::Index>(g + 1);
    model.centers(u) = mean;
    model.scales(u) = std::max(0.1, (count > 1 ? ss / (count - 1) : 0.0) - mean_noise);
  }
  return model;
}

struct UnivariateFit {
  Univariate model;
  EmTrace trace;
};

UnivariateFit univariate_run(const Eigen::ArrayXd& x, const Eigen::ArrayXd& s2, Univariate model,
                             const std::vector<double>& grid, const EmConfig& config) {
  UnivariateFit fit;
  fit.trace.floor_active = apply_floor(model.weights, config.pi_floor);
  const Eigen::Index k = model.weights.size();
  auto estep = [&](const Univariate& m) { return univariate_e_step(x, s2, m); };
  auto mstep = [&](const Univariate& m, const UnivariateEStep& es) {
    Univariate next = m;
    next.weights = es.resp.colwise().mean().transpose();
    for (Eigen::Index u = 1; u < k; ++u) {
      const Eigen::ArrayXd w = es.resp.col(u) / (s2 + m.scales(u));
      next.centers(u) = weighted_mean(w, x, m.centers(u));
      next.scales(u) = grid_search_scale(es.resp.col(u), x, s2, next.centers(u), m.scales(u), grid, config.refine_points);
    }
    fit.trace.floor_active |= apply_floor(next.weights, config.pi_floor);
    return next;
  };
  auto pack = [&](const Univariate& m) {
    Eigen::VectorXd p(3 * k - 2);
    p.head(k) = m.weights.matrix();
    p.segment(k, k - 1) = m.centers.tail(k - 1).matrix();
    p.tail(k - 1) = m.scales.tail(k - 1).matrix();
    return p;
  };
  auto unpack = [&](const Eigen::VectorXd& p, const Univariate& shape) {
    Univariate m = shape;
    m.weights = weights_from_raw(p.head(k), config.pi_floor, fit.trace.floor_active);
    m.centers.tail(k - 1) = p.segment(k, k - 1).array();
    m.scales.tail(k - 1) = p.tail(k - 1).array().max(0.0);
    return m;
  };
  fit.model = run_em_loop(std::move(model), estep, mstep, pack, unpack, config, fit.trace);
  return fit;
}

UnivariateFit univariate_fit(const Eigen::VectorXd& xv, const Eigen::VectorXd& s2v, std::size_t d,
                             const EmConfig& config, std::uint64_t stream) {
  const Eigen::ArrayXd x = xv.array(), s2 = s2v.array();
  const auto grid = scale_grid(sample_variance(xv), config);
  const Univariate base = univariate_init(x, s2, d);
  UnivariateFit best;
  bool have = false;
  std::vector<double> restart_ll;
  const int restarts = std::max(1, config.restarts);
  for (int r = 0; r < restarts; ++r) {
    Univariate start = base;
    if (r > 0) {
      Rng rng = make_stream(config.seed, stream * 1000 + static_cast<std::uint64_t>(r));
      std::uniform_real_distribution<double> loc(0.5, 1.5), scale(0.5, 2.0);
      for (Eigen::Index u = 1; u < start.centers.size(); ++u) {
        start.centers(u) *= loc(rng);
        start.scales(u) *= scale(rng);
      }
    }
    auto fit = univariate_run(x, s2, start, grid, config);
    const double ll = fit.trace.loglik.back();
    restart_ll.push_back(ll);
    if (!have || ll > best.trace.loglik.back()) {
      fit.trace.chosen_restart = r;
      best = std::move(fit);
      have = true;
    }
  }
  best.trace.restart_loglik = std::move(restart_ll);
  return best;
}

// Start built from one-component marginal fits of a and b, coupled as if the
// two axes were independent. It lands in a different basin from the moment
// start when one axis carries little signal.
MixtureModel marginal_init(const CoefStats& stats, const EmConfig& config) {
  const auto fa = univariate_fit(stats.a, stats.var1, 1, config, 1);
  const auto fb = univariate_fit(stats.b, stats.var2, 1, config, 2);
  const double pa = fa.model.weights(1), pb = fb.model.weights(1);
  MixtureModel out;
  out.pi = {(1 - pa) * (1 - pb), pa * (1 - pb), (1 - pa) * pb, pa * pb};
  out.mu = fa.model.centers(1);
  out.kappa = fa.model.scales(1);
  out.theta = fb.model.centers(1);
  out.psi = fb.model.scales(1);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model types
// ---------------------------------------------------------------------------

void MixtureModel::validate() const {
  double total = 0.0;
  for (double w : pi) {
    if (!(w >= 0.0)) throw config_error("mixture", "mixing weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw config_error("mixture", "mixing weights must sum to one");
  if (!(kappa >= 0.0) || !(psi >= 0.0)) throw config_error("mixture", "kappa and psi must be non-negative");
  if (!std::isfinite(mu) || !std::isfinite(theta)) throw config_error("mixture", "non-finite location parameter");
}

std::array<double, 4> GeneralMixtureModel::class_probabilities() const {
  std::array<double, 4> out{};
  for (Eigen::Index v = 0; v < pi_joint.cols(); ++v)
    for (Eigen::Index u = 0; u < pi_joint.rows(); ++u)
      out[index_of(hypothesis_from(u > 0, v > 0))] += pi_joint(u, v);
  return out;
}

std::optional<MixtureModel> GeneralMixtureModel::as_standard() const {
  if (d1() != 1 || d2() != 1) return std::nullopt;
  MixtureModel out;
  out.pi = {pi_joint(0, 0), pi_joint(1, 0), pi_joint(0, 1), pi_joint(1, 1)};
  out.mu = mus(1);
  out.theta = thetas(1);
  out.kappa = kappas(1);
  out.psi = psis(1);
  return out;
}

void GeneralMixtureModel::validate() const {
  if (mus.size() < 2 || thetas.size() < 2) throw config_error("mixture", "need at least one alternative component");
  if (kappas.size() != mus.size() || psis.size() != thetas.size())
    throw config_error("mixture", "component parameter vectors differ in length");
  if (pi_joint.rows() != mus.size() || pi_joint.cols() != thetas.size())
    throw config_error("mixture", "joint weight matrix has the wrong shape");
  if (mus(0) != 0.0 || thetas(0) != 0.0 || kappas(0) != 0.0 || psis(0) != 0.0)
    throw config_error("mixture", "component 0 must be the point mass at zero");
  if ((pi_joint.array() < 0.0).any()) throw config_error("mixture", "joint weights must be non-negative");
  if (std::abs(pi_joint.sum() - 1.0) > 1e-12) throw config_error("mixture", "joint weights must sum to one");
  if ((kappas.array() < 0.0).any() || (psis.array() < 0.0).any())
    throw config_error("mixture", "scale parameters must be non-negative");
}

GeneralMixtureModel GeneralMixtureModel::from(const MixtureModel& model) {
  GeneralMixtureModel out;
  out.pi_joint.resize(2, 2);
  out.pi_joint << model.pi[0], model.pi[2], model.pi[1], model.pi[3];
  out.mus = Eigen::Vector2d(0.0, model.mu);
  out.kappas = Eigen::Vector2d(0.0, model.kappa);
  out.thetas = Eigen::Vector2d(0.0, model.theta);
  out.psis = Eigen::Vector2d(0.0, model.psi);
  return out;
}

// ---------------------------------------------------------------------------
// EM
// ---------------------------------------------------------------------------

Responsibilities e_step(const CoefStats& stats, const MixtureModel& model, std::size_t threads) {
  return general_e_step(stats, GeneralMixtureModel::from(model), threads).resp;
}

Responsibilities e_step(const CoefStats& stats, const GeneralMixtureModel& model, std::size_t threads) {
  return general_e_step(stats, model, threads).resp;
}

std::vector<double> scale_grid(double sample_variance, const EmConfig& config) {
  const double lo = config.grid_min;
  const double hi = std::max(lo * 10.0, config.grid_max_factor * sample_variance);
  const int points = std::max(2, config.grid_points);
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(points - 1);
  for (int g = 0; g < points; ++g) grid[static_cast<std::size_t>(g)] = std::exp(std::log(lo) + step * g);
  return grid;
}

MixtureModel m_step(const CoefStats& stats, const Responsibilities& resp, const MixtureModel& current,
                    const EmConfig& config) {
  const double m = static_cast<double>(resp.rows());
  MixtureModel next = current;
  for (std::size_t c = 0; c < 4; ++c) next.pi[c] = resp.col(static_cast<Eigen::Index>(c)).sum() / m;

  const Eigen::ArrayXd a = stats.a.array(), b = stats.b.array();
  const Eigen::ArrayXd v1 = stats.var1.array(), v2 = stats.var2.array();
  const Eigen::ArrayXd alpha_mass = (resp.col(1) + resp.col(3)).array();
  const Eigen::ArrayXd beta_mass = (resp.col(2) + resp.col(3)).array();

  next.mu = weighted_mean(alpha_mass / (v1 + current.kappa), a, current.mu);
  next.kappa = grid_search_scale(alpha_mass, a, v1, next.mu, current.kappa, scale_grid(sample_variance(stats.a), config),
                                 config.refine_points);
  next.theta = weighted_mean(beta_mass / (v2 + current.psi), b, current.theta);
  next.psi = grid_search_scale(beta_mass, b, v2, next.theta, current.psi, scale_grid(sample_variance(stats.b), config),
                               config.refine_points);
  return next;
}

MixtureModel default_init(const CoefStats& stats) {
  MixtureModel init;
  init.pi = {0.85, 0.05, 0.05, 0.05};
  std::tie(init.mu, init.kappa) = extreme_decile_moments(stats.a, stats.var1);
  std::tie(init.theta, init.psi) = extreme_decile_moments(stats.b, stats.var2);
  return init;
}

EmFit em_run(const CoefStats& stats, const MixtureModel& init, const EmConfig& config) {
  EmFit fit;
  MixtureModel model = init;
  fit.trace.floor_active = apply_floor(model.pi, config.pi_floor);
  auto estep = [&](const MixtureModel& m) { return general_e_step(stats, GeneralMixtureModel::from(m), config.threads); };
  auto mstep = [&](const MixtureModel& m, const EStepOut& es) {
    MixtureModel next = m_step(stats, es.resp, m, config);
    fit.trace.floor_active |= apply_floor(next.pi, config.pi_floor);
    return next;
  };
  auto pack = [](const MixtureModel& m) {
    Eigen::VectorXd p(8);
    p << m.pi[0], m.pi[1], m.pi[2], m.pi[3], m.mu, m.theta, m.kappa, m.psi;
    return p;
  };
  auto unpack = [&](const Eigen::VectorXd& p, const MixtureModel&) {
    MixtureModel m;
    const Eigen::ArrayXd w = weights_from_raw(p.head(4), config.pi_floor, fit.trace.floor_active);
    m.pi = {w(0), w(1), w(2), w(3)};
    m.mu = p(4);
    m.theta = p(5);
    m.kappa = std::max(0.0, p(6));
    m.psi = std::max(0.0, p(7));
    return m;
  };
  fit.model = run_em_loop(std::move(model), estep, mstep, pack, unpack, config, fit.trace);
  return fit;
}

EmFit em_fit(const CoefStats& input, const EmConfig& config) {
  require_usable(input, "mixture");
  if (input.m() < 4) throw data_error("mixture", "EM needs at least 4 usable hypotheses");
  const CoefStats stats = canonical_order(input);
  const MixtureModel base = config.init ? *config.init : default_init(stats);
  base.validate();
  EmFit best;
  double best_ll = -std::numeric_limits<double>::infinity();
  bool have = false;
  std::vector<double> restart_ll;
  const int restarts = std::max(1, config.restarts);
  for (int r = 0; r < restarts; ++r) {
    MixtureModel start = base;
    if (r == 1 && !config.init) {
      start = marginal_init(stats, config);
    } else if (r > 0) {
      Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(r));
      start = perturb(base, rng);
    }
    auto fit = em_run(stats, start, config);
    const double ll = fit.trace.loglik.empty() ? -std::numeric_limits<double>::infinity()
                                               : *std::max_element(fit.trace.loglik.begin(), fit.trace.loglik.end());
    restart_ll.push_back(ll);
    if (!have || ll > best_ll) {
      fit.trace.chosen_restart = r;
      best_ll = ll;
      best = std::move(fit);
      have = true;
    }
  }
  best.trace.restart_loglik = restart_ll;
  return best;
}

GeneralEmFit em_fit_two_step(const CoefStats& input, std::size_t d1, std::size_t d2, const EmConfig& config) {
  require_usable(input, "mixture");
  if (d1 < 1 || d2 < 1) throw config_error("mixture", "d1 and d2 must be at least 1");
  if (input.m() < 4) throw data_error("mixture", "EM needs at least 4 usable hypotheses");
  const CoefStats stats = canonical_order(input);

  GeneralEmFit out;
  auto alpha = univariate_fit(stats.a, stats.var1, d1, config, 1);
  auto beta = univariate_fit(stats.b, stats.var2, d2, config, 2);
  out.alpha_trace = alpha.trace;
  out.beta_trace = beta.trace;

  GeneralMixtureModel model;
  model.mus = alpha.model.centers.matrix();
  model.kappas = alpha.model.scales.matrix();
  model.thetas = beta.model.centers.matrix();
  model.psis = beta.model.scales.matrix();
  model.mus(0) = model.kappas(0) = model.thetas(0) = model.psis(0) = 0.0;
  // Joint weights start from the product of the marginal weights.
  model.pi_joint = alpha.model.weights.matrix() * beta.model.weights.matrix().transpose();
  model.pi_joint /= model.pi_joint.sum();
  out.trace.floor_active = apply_floor(model.pi_joint, config.pi_floor);

  const Eigen::Index rows = model.pi_joint.rows(), cols = model.pi_joint.cols();
  auto estep = [&](const GeneralMixtureModel& m) { return general_e_step(stats, m, config.threads); };
  auto mstep = [&](const GeneralMixtureModel& m, const EStepOut& es) {
    GeneralMixtureModel next = m;
    next.pi_joint = joint_weights(es.resp, m);
    out.trace.floor_active |= apply_floor(next.pi_joint, config.pi_floor);
    return next;
  };
  auto pack = [](const GeneralMixtureModel& m) {
    return Eigen::VectorXd(m.pi_joint.reshaped());
  };
  auto unpack = [&](const Eigen::VectorXd& p, const GeneralMixtureModel& shape) {
    GeneralMixtureModel m = shape;
    m.pi_joint = weights_from_raw(p, config.pi_floor, out.trace.floor_active).matrix().reshaped(rows, cols);
    return m;
  };
  model = run_em_loop(std::move(model), estep, mstep, pack, unpack, config, out.trace);
  out.model = std::move(model);
  return out;
}

Eigen::MatrixXd joint_weights(const Responsibilities& resp, const GeneralMixtureModel& shape) {
  const double m = static_cast<double>(resp.rows());
  Eigen::MatrixXd out(shape.pi_joint.rows(), shape.pi_joint.cols());
  for (Eigen::Index v = 0; v < out.cols(); ++v)
    for (Eigen::Index u = 0; u < out.rows(); ++u)
      out(u, v) =
          resp.col(static_cast<Eigen::Index>(shape.component(static_cast<std::size_t>(u), static_cast<std::size_t>(v))))
              .sum() /
          m;
  return out;
}

double loglik(const CoefStats& stats, const GeneralMixtureModel& model) {
  require_usable(stats, "mixture");
  model.validate();
  return general_e_step(stats, model, 1).loglik;
}

double loglik(const CoefStats& stats, const MixtureModel& model) {
  model.validate();
  return loglik(stats, GeneralMixtureModel::from(model));
}

double amle_ratio(const CoefStats& stats, const MixtureModel& fitted, const MixtureModel& truth) {
  return loglik(stats, fitted) - loglik(stats, truth);
}

double amle_ratio(const CoefStats& stats, const GeneralMixtureModel& fitted, const GeneralMixtureModel& truth) {
  return loglik(stats, fitted) - loglik(stats, truth);
}

MixtureFit fit_mixture(const CoefStats& stats, std::size_t d1, std::size_t d2, std::optional<bool> two_step,
                       const EmConfig& config) {
  const bool standard_shape = d1 == 1 && d2 == 1;
  const bool use_two_step = two_step.value_or(!standard_shape);
  MixtureFit out;
  out.two_step = use_two_step;
  if (!use_two_step) {
    if (!standard_shape) throw config_error("mixture", "standard EM supports only d1 = d2 = 1; use the two-step fit");
    auto fit = em_fit(stats, config);
    out.model = GeneralMixtureModel::from(fit.model);
    out.standard = fit.model;
    out.trace = std::move(fit.trace);
    return out;
  }
  auto fit = em_fit_two_step(stats, d1, d2, config);
  out.model = std::move(fit.model);
  out.standard = out.model.as_standard();
  out.trace = std::move(fit.trace);
  return out;
}

}  // namespace mlfdr
