#include "mlfdr/regression.hpp"

#include "mlfdr/error.hpp"
#include "mlfdr/parallel.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <string>

namespace mlfdr {

namespace {

constexpr double kRankThreshold = 1e-10;

bool is_constant(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.maxCoeff() == v.minCoeff(); }

// RSS that is zero up to rounding relative to the response scale.
bool negligible_rss(double rss, const Eigen::VectorXd& response) {
  return rss <= 1e-24 * std::max(1.0, response.squaredNorm());
}

Eigen::VectorXd exposure_for(const Dataset& ds, std::size_t i) {
  if (ds.exposure_matrix) return ds.exposure_matrix->col(static_cast<Eigen::Index>(i));
  return ds.x;
}

Eigen::MatrixXd design(std::initializer_list<Eigen::VectorXd> leading, const Dataset& ds) {
  const Eigen::Index n = static_cast<Eigen::Index>(ds.n());
  const Eigen::Index q = static_cast<Eigen::Index>(ds.q());
  Eigen::MatrixXd d(n, static_cast<Eigen::Index>(leading.size()) + q);
  Eigen::Index c = 0;
  for (const auto& col : leading) d.col(c++) = col;
  if (q > 0) d.rightCols(q) = *ds.confounders;
  return d;
}

struct MediatorPart {
  double a = 0.0;
  double var1 = 0.0;
  FitStatus status = FitStatus::ok;
};

// Regression of M_i on (X, Z); reports the X coefficient on the root-n scale.
MediatorPart fit_mediator(const Dataset& ds, const Eigen::VectorXd& x, const Eigen::VectorXd& mi) {
  MediatorPart out;
  const double n = static_cast<double>(ds.n());
  if (is_constant(mi)) {
    out.status = FitStatus::rank_deficient;
    return out;
  }
  const auto d = design({x}, ds);
  const auto fit = detail::ols(d, mi);
  if (!fit.full_rank) {
    out.status = FitStatus::rank_deficient;
    return out;
  }
  const double dof = n - static_cast<double>(d.cols());
  out.a = std::sqrt(n) * fit.coef(0);
  out.var1 = n * (fit.rss / dof) * fit.first_inverse_diag;
  if (negligible_rss(fit.rss, mi)) {
    out.var1 = 0.0;
    out.status = FitStatus::degenerate_variance;
  }
  return out;
}

struct OutcomePart {
  double b = 0.0;
  double var2 = 0.0;
  FitStatus status = FitStatus::ok;
};

OutcomePart fit_outcome_ols(const Eigen::MatrixXd& d, const Eigen::VectorXd& y) {
  OutcomePart out;
  const double n = static_cast<double>(d.rows());
  const auto fit = detail::ols(d, y);
  if (!fit.full_rank) {
    out.status = FitStatus::rank_deficient;
    return out;
  }
  const double dof = n - static_cast<double>(d.cols());
  out.b = std::sqrt(n) * fit.coef(0);
  out.var2 = n * (fit.rss / dof) * fit.first_inverse_diag;
  if (negligible_rss(fit.rss, y)) {
    out.var2 = 0.0;
    out.status = FitStatus::degenerate_variance;
  }
  return out;
}

template <typename OutcomeFn>
CoefStats fit_all(const Dataset& ds, const RegressionOptions& options, OutcomeFn&& outcome_fit) {
  const std::size_t m = ds.m();
  CoefStats stats;
  stats.n = ds.n();
  stats.a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  stats.b = stats.a;
  stats.var1 = stats.a;
  stats.var2 = stats.a;
  stats.status.assign(m, FitStatus::ok);
  parallel_for(m, options.threads, [&](std::size_t i) {
    const auto col = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = exposure_for(ds, i);
    const Eigen::VectorXd mi = ds.mediators.col(col);
    const Eigen::VectorXd yi = ds.outcomes.col(col);
    const auto med = fit_mediator(ds, x, mi);
    OutcomePart out;
    if (med.status != FitStatus::rank_deficient) out = outcome_fit(x, mi, yi);
    stats.a(col) = med.a;
    stats.var1(col) = med.var1;
    stats.b(col) = out.b;
    stats.var2(col) = out.var2;
    // The mediator equation is reported first when both fail.
    stats.status[i] = med.status != FitStatus::ok ? med.status : out.status;
  });
  return stats;
}

// Mediator design is (X, Z); outcome_columns counts the outcome regressors
// before Z, or 0 for a normal-reference outcome fit.
void set_dof(CoefStats& stats, const Dataset& ds, std::size_t outcome_columns) {
  const double n = static_cast<double>(ds.n()), q = static_cast<double>(ds.q());
  stats.df1 = n - 1.0 - q;
  stats.df2 = outcome_columns ? n - static_cast<double>(outcome_columns) - q : 0.0;
}

// Normal quantile matching the t tail probability, computed on the tail side
// so that large statistics keep full precision.
double t_to_normal(double t, double df) {
  namespace bm = boost::math;
  const double tail = bm::cdf(bm::complement(bm::students_t(df), std::abs(t)));
  const double z = tail > 0.0 ? bm::quantile(bm::complement(bm::normal(), tail)) : std::abs(t);
  return t < 0.0 ? -z : z;
}

}  // namespace

CoefStats normal_calibrated(const CoefStats& stats) {
  CoefStats out = stats;
  for (Eigen::Index i = 0; i < out.a.size(); ++i) {
    if (out.status[static_cast<std::size_t>(i)] != FitStatus::ok) continue;
    if (out.df1 > 0.0 && out.var1(i) > 0.0) {
      const double sd = std::sqrt(out.var1(i));
      out.a(i) = sd * t_to_normal(out.a(i) / sd, out.df1);
    }
    if (out.df2 > 0.0 && out.var2(i) > 0.0) {
      const double sd = std::sqrt(out.var2(i));
      out.b(i) = sd * t_to_normal(out.b(i) / sd, out.df2);
    }
  }
  return out;
}

std::string_view to_string(FitStatus status) {
  switch (status) {
    case FitStatus::ok: return "ok";
    case FitStatus::rank_deficient: return "rank_deficient";
    case FitStatus::degenerate_variance: return "degenerate_variance";
    case FitStatus::separation: return "separation";
    case FitStatus::not_converged: return "not_converged";
    case FitStatus::constant_outcome: return "constant_outcome";
  }
  return "unknown";
}

std::size_t CoefStats::valid_count() const {
  std::size_t count = 0;
  for (auto s : status) count += s == FitStatus::ok;
  return count;
}

CoefStats CoefStats::valid_only(std::vector<std::size_t>* kept) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < status.size(); ++i)
    if (status[i] == FitStatus::ok) idx.push_back(i);
  CoefStats out;
  out.n = n;
  out.df1 = df1;
  out.df2 = df2;
  const auto k = static_cast<Eigen::Index>(idx.size());
  out.a.resize(k);
  out.b.resize(k);
  out.var1.resize(k);
  out.var2.resize(k);
  out.status.assign(idx.size(), FitStatus::ok);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto src = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]);
    out.a(j) = a(src);
    out.b(j) = b(src);
    out.var1(j) = var1(src);
    out.var2(j) = var2(src);
  }
  if (kept) *kept = std::move(idx);
  return out;
}

void require_usable(const CoefStats& stats, std::string_view module) {
  const std::string mod(module);
  const auto m = stats.a.size();
  if (stats.b.size() != m || stats.var1.size() != m || stats.var2.size() != m)
    throw data_error(mod, "coefficient vectors differ in length");
  if (!stats.status.empty() && stats.status.size() != static_cast<std::size_t>(m))
    throw data_error(mod, "status vector length mismatch");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!stats.status.empty() && stats.status[static_cast<std::size_t>(i)] != FitStatus::ok)
      throw data_error(mod, "hypothesis " + std::to_string(i) + " is flagged; filter with valid_only()");
    if (!(stats.var1(i) > 0.0) || !(stats.var2(i) > 0.0) || !std::isfinite(stats.var1(i)) ||
        !std::isfinite(stats.var2(i)))
      throw data_error(mod, "hypothesis " + std::to_string(i) + " has a non-positive variance");
    if (!std::isfinite(stats.a(i)) || !std::isfinite(stats.b(i)))
      throw data_error(mod, "hypothesis " + std::to_string(i) + " has a non-finite estimate");
  }
}

void validate(const Dataset& ds, std::size_t extra_outcome_columns) {
  const auto n = static_cast<Eigen::Index>(ds.n());
  if (n < 3) throw data_error("regression", "need at least 3 samples, got " + std::to_string(n));
  if (ds.mediators.rows() != n || ds.outcomes.rows() != n)
    throw data_error("regression", "mediator/outcome row count differs from exposure length");
  if (ds.mediators.cols() != ds.outcomes.cols())
    throw data_error("regression", "mediator and outcome matrices have different column counts");
  if (ds.confounders && ds.confounders->rows() != n)
    throw data_error("regression", "confounder row count differs from exposure length");
  if (ds.exposure_matrix && (ds.exposure_matrix->rows() != n || ds.exposure_matrix->cols() != ds.mediators.cols()))
    throw data_error("regression", "per-hypothesis exposure matrix has the wrong shape");
  const std::size_t outcome_params = 2 + ds.q() + extra_outcome_columns;
  if (ds.n() <= outcome_params)
    throw data_error("regression", "n = " + std::to_string(ds.n()) + " leaves no residual degrees of freedom for " +
                                       std::to_string(outcome_params) + " outcome coefficients");
  if (!ds.exposure_matrix && !(ds.x.squaredNorm() > 0.0))
    throw data_error("regression", "exposure has zero second moment");
  if (!ds.x.allFinite() || !ds.mediators.allFinite() || !ds.outcomes.allFinite() ||
      (ds.confounders && !ds.confounders->allFinite()))
    throw data_error("regression", "non-finite values in the dataset");
  if (ds.outcome_kind == OutcomeKind::binary) {
    for (Eigen::Index j = 0; j < ds.outcomes.cols(); ++j)
      for (Eigen::Index r = 0; r < n; ++r) {
        const double v = ds.outcomes(r, j);
        if (v != 0.0 && v != 1.0)
          throw data_error("regression", "binary outcome column " + std::to_string(j) + " holds a value outside {0,1}");
      }
  }
}

namespace detail {

OlsFit ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
  OlsFit out;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < design.cols()) return out;
  out.full_rank = true;
  out.coef = qr.solve(response);
  out.rss = (response - design * out.coef).squaredNorm();
  const Eigen::Index p = design.cols();
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = 0; k < p; ++k) {
    if (perm(k) == 0) {
      out.first_inverse_diag = r_inv.row(k).squaredNorm();
      break;
    }
  }
  return out;
}

LogisticFit logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     const RegressionOptions& options) {
  LogisticFit out;
  const Eigen::Index p = design.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);

  auto loglik = [&](const Eigen::VectorXd& coef) {
    const Eigen::ArrayXd eta = (design * coef).array();
    // log(1 + exp(eta)) computed without overflow
    const Eigen::ArrayXd softplus = eta.max(0.0) + (-eta.abs()).exp().log1p();
    return (response.array() * eta - softplus).sum();
  };
  auto information = [&](const Eigen::VectorXd& coef, Eigen::VectorXd* score) {
    const Eigen::ArrayXd prob = 1.0 / (1.0 + (-(design * coef).array()).exp());
    if (score) *score = design.transpose() * (response.array() - prob).matrix();
    const Eigen::VectorXd w = (prob * (1.0 - prob)).matrix();
    return Eigen::MatrixXd(design.transpose() * w.asDiagonal() * design);
  };

  double current = loglik(beta);
  bool converged = false;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    out.iterations = iter;
    Eigen::VectorXd score;
    const Eigen::MatrixXd info = information(beta, &score);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      out.status = FitStatus::separation;
      out.coef = beta;
      return out;
    }
    Eigen::VectorXd step = ldlt.solve(score);
    Eigen::VectorXd next = beta + step;
    double next_ll = loglik(next);
    // Step halving keeps the iteration monotone far from the optimum.
    for (int h = 0; h < 30 && !(next_ll >= current - 1e-12 * std::abs(current)); ++h) {
      step *= 0.5;
      next = beta + step;
      next_ll = loglik(next);
    }
    beta = next;
    current = next_ll;
    if (beta.cwiseAbs().maxCoeff() > options.separation_bound) {
      out.status = FitStatus::separation;
      out.coef = beta;
      return out;
    }
    if (step.cwiseAbs().maxCoeff() < options.coef_tolerance) {
      converged = true;
      break;
    }
  }
  out.coef = beta;
  if (!converged) {
    out.status = FitStatus::not_converged;
    return out;
  }
  const Eigen::MatrixXd info = information(beta, nullptr);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  const Eigen::VectorXd first = ldlt.solve(Eigen::VectorXd::Unit(p, 0));
  out.first_inverse_info = first(0);
  return out;
}

}  // namespace detail

CoefStats fit_linear(const Dataset& ds, const RegressionOptions& options) {
  if (ds.outcome_kind != OutcomeKind::continuous)
    throw config_error("regression", "fit_linear requires a continuous outcome");
  validate(ds);
  auto stats = fit_all(ds, options, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& mi, const Eigen::VectorXd& yi) {
    return fit_outcome_ols(design({mi, x}, ds), yi);
  });
  set_dof(stats, ds, 2);
  return stats;
}

CoefStats fit_interaction(const Dataset& ds, const RegressionOptions& options) {
  if (ds.outcome_kind != OutcomeKind::continuous)
    throw config_error("regression", "fit_interaction requires a continuous outcome");
  validate(ds, 1);
  auto stats = fit_all(ds, options, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& mi, const Eigen::VectorXd& yi) {
    const Eigen::VectorXd product = mi.cwiseProduct(x);
    return fit_outcome_ols(design({mi, x, product}, ds), yi);
  });
  set_dof(stats, ds, 3);
  return stats;
}

CoefStats fit_binary(const Dataset& ds, const RegressionOptions& options) {
  if (ds.outcome_kind != OutcomeKind::binary) throw config_error("regression", "fit_binary requires a binary outcome");
  validate(ds);
  const double n = static_cast<double>(ds.n());
  auto stats = fit_all(ds, options, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& mi, const Eigen::VectorXd& yi) {
    OutcomePart out;
    if (is_constant(yi)) {
      out.status = FitStatus::constant_outcome;
      return out;
    }
    const auto d = design({mi, x}, ds);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
    qr.setThreshold(kRankThreshold);
    if (qr.rank() < d.cols()) {
      out.status = FitStatus::rank_deficient;
      return out;
    }
    const auto fit = detail::logistic(d, yi, options);
    out.status = fit.status;
    if (fit.status == FitStatus::ok) {
      out.b = std::sqrt(n) * fit.coef(0);
      out.var2 = n * fit.first_inverse_info;
    }
    return out;
  });
  set_dof(stats, ds, 0);
  return stats;
}

CoefStats fit(const Dataset& ds, OutcomeModel model, const RegressionOptions& options) {
  switch (model) {
    case OutcomeModel::linear: return fit_linear(ds, options);
    case OutcomeModel::binary: return fit_binary(ds, options);
    case OutcomeModel::interaction: return fit_interaction(ds, options);
  }
  throw config_error("regression", "unknown outcome model");
}

}  // namespace mlfdr
