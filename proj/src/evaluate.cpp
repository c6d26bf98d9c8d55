#include "mlfdr/evaluate.hpp"

#include "mlfdr/error.hpp"
#include "mlfdr/parallel.hpp"
#include "mlfdr/random.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mlfdr {

namespace {

std::vector<bool> expand(const std::vector<bool>& rejected, const std::vector<std::size_t>& kept, std::size_t m) {
  std::vector<bool> full(m, false);
  for (std::size_t j = 0; j < kept.size(); ++j) full[kept[j]] = rejected[j];
  return full;
}

EvalReport score_full(const ScreeningResult& res, const std::vector<std::size_t>& kept,
                      const std::vector<Hypothesis>& labels) {
  ScreeningResult full = res;
  full.rejected = expand(res.rejected, kept, labels.size());
  return score(full, labels);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

CoefStats draws_to_stats(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& var1,
                         const Eigen::VectorXd& var2) {
  CoefStats stats;
  stats.a = a;
  stats.b = b;
  stats.var1 = var1;
  stats.var2 = var2;
  stats.status.assign(static_cast<std::size_t>(a.size()), FitStatus::ok);
  return stats;
}

}  // namespace

EvalReport score(const ScreeningResult& result, const std::vector<Hypothesis>& truth_labels) {
  if (result.rejected.size() != truth_labels.size())
    throw data_error("evaluate", "rejection vector and label vector differ in length");
  EvalReport report;
  report.alpha = result.alpha;
  for (std::size_t i = 0; i < truth_labels.size(); ++i) {
    const bool alt = truth_labels[i] == Hypothesis::h11;
    report.alternatives += alt;
    if (result.rejected[i]) {
      ++report.rejections;
      report.false_rejections += !alt;
    } else {
      report.missed_alternatives += alt;
    }
  }
  report.fdp = static_cast<double>(report.false_rejections) / static_cast<double>(std::max<std::size_t>(1, report.rejections));
  report.power = report.alternatives
                     ? static_cast<double>(report.rejections - report.false_rejections) / static_cast<double>(report.alternatives)
                     : 0.0;
  report.w_stat = result.score_sum;
  report.q_tilde = result.score_sum / static_cast<double>(std::max<std::size_t>(1, report.rejections));
  return report;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double k = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= k;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.se = std::sqrt(ss / (k - 1.0) / k);
  }
  return s;
}

std::uint64_t replicate_seed(std::uint64_t root, std::size_t replicate) {
  return derive_seed(root, 0xA5A5000000000000ULL + replicate);
}

ReplicateRecord run_replicate(const SimScenario& sc, double alpha, const StudyOptions& options) {
  ReplicateRecord rec;
  rec.seed = sc.seed;
  const auto data = generate(sc, 1);
  RegressionOptions reg = options.regression;
  reg.threads = 1;
  const auto all_stats = fit(data.data, outcome_model_for(sc.kind), reg);
  std::vector<std::size_t> kept;
  const auto valid = all_stats.valid_only(&kept);
  const auto stats = options.normal_calibration ? normal_calibrated(valid) : valid;
  rec.excluded_hypotheses = sc.m - kept.size();

  EmConfig em = options.em;
  em.threads = 1;
  const auto mix = fit_mixture(stats, options.d1, options.d2, options.two_step, em);
  rec.em_converged = mix.trace.converged;
  rec.class_probabilities = mix.model.class_probabilities();

  const auto fitted_lfdr = compute_lfdr(stats, mix.model);
  const auto oracle_lfdr = compute_lfdr(stats, data.truth);
  rec.adaptive = score_full(step_up_select(fitted_lfdr, alpha), kept, data.labels);
  rec.oracle = score_full(step_up_select(oracle_lfdr, alpha), kept, data.labels);
  rec.amle_ratio = amle_ratio(stats, mix.model, data.truth);
  for (double level : options.alpha_grid) {
    const auto adaptive = score_full(step_up_select(fitted_lfdr, level), kept, data.labels);
    const auto oracle = score_full(step_up_select(oracle_lfdr, level), kept, data.labels);
    rec.grid.push_back({level, adaptive.fdp, adaptive.power, oracle.fdp, oracle.power});
  }
  return rec;
}

StudyReport replicate_study(const SimScenario& sc, std::size_t reps, double alpha, const StudyOptions& options) {
  if (reps < 1) throw config_error("evaluate", "reps must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("evaluate", "alpha must lie in (0, 1)");
  sc.validate();

  StudyReport report;
  report.scenario = sc;
  report.alpha = alpha;
  report.reps = reps;
  report.replicates.resize(reps);
  parallel_for(reps, options.threads, [&](std::size_t r) {
    SimScenario local = sc;
    local.seed = replicate_seed(sc.seed, r);
    ReplicateRecord rec;
    try {
      rec = run_replicate(local, alpha, options);
      if (!rec.em_converged) {
        rec.failed = true;
        rec.error = "EM did not converge";
      }
    } catch (const std::exception& e) {
      rec = ReplicateRecord{};
      rec.seed = local.seed;
      rec.failed = true;
      rec.error = e.what();
    }
    rec.replicate = r;
    report.replicates[r] = std::move(rec);
  });

  std::vector<double> fdr, power, ofdr, opower, rejections;
  std::size_t amle_ok = 0;
  std::vector<std::vector<GridPoint>> grid_rows;
  for (const auto& rec : report.replicates) {
    if (rec.failed) {
      ++report.failed;
      continue;
    }
    fdr.push_back(rec.adaptive.fdp);
    power.push_back(rec.adaptive.power);
    ofdr.push_back(rec.oracle.fdp);
    opower.push_back(rec.oracle.power);
    rejections.push_back(static_cast<double>(rec.adaptive.rejections));
    amle_ok += rec.amle_ratio >= 0.0;
    grid_rows.push_back(rec.grid);
  }
  if (static_cast<double>(report.failed) > options.max_failure_fraction * static_cast<double>(reps))
    throw numeric_error("evaluate", std::to_string(report.failed) + " of " + std::to_string(reps) +
                                        " replicates failed, above the allowed fraction");
  report.fdr = summarize(fdr);
  report.power = summarize(power);
  report.oracle_fdr = summarize(ofdr);
  report.oracle_power = summarize(opower);
  report.rejections = summarize(rejections);
  report.median_rejections = median(rejections);
  report.amle_nonnegative_fraction = fdr.empty() ? 0.0 : static_cast<double>(amle_ok) / static_cast<double>(fdr.size());
  for (std::size_t g = 0; g < options.alpha_grid.size(); ++g) {
    std::vector<double> f, p, of, op;
    for (const auto& row : grid_rows) {
      f.push_back(row[g].fdp);
      p.push_back(row[g].power);
      of.push_back(row[g].oracle_fdp);
      op.push_back(row[g].oracle_power);
    }
    report.grid.push_back({options.alpha_grid[g], summarize(f), summarize(p), summarize(of), summarize(op)});
  }
  return report;
}

UnbiasednessCheck w_unbiasedness_check(const MixtureModel& model, const Eigen::VectorXd& var1,
                                       const Eigen::VectorXd& var2, double delta, std::size_t reps,
                                       std::uint64_t seed) {
  model.validate();
  if (var1.size() != var2.size() || var1.size() == 0)
    throw config_error("evaluate", "variance vectors must be non-empty and equal in length");
  if (reps < 2) throw config_error("evaluate", "need at least 2 replicates");
  const Eigen::Index m = var1.size();
  const std::array<double, 4> locs_a{0.0, model.mu, 0.0, model.mu};
  const std::array<double, 4> locs_b{0.0, 0.0, model.theta, model.theta};
  const std::array<double, 4> extra_a{0.0, model.kappa, 0.0, model.kappa};
  const std::array<double, 4> extra_b{0.0, 0.0, model.psi, model.psi};

  auto draw = [&](Hypothesis h, Eigen::Index i, Rng& rng, double& a, double& b) {
    const auto c = index_of(h);
    std::normal_distribution<double> z(0.0, 1.0);
    a = locs_a[c] + std::sqrt(var1(i) + extra_a[c]) * z(rng);
    b = locs_b[c] + std::sqrt(var2(i) + extra_b[c]) * z(rng);
  };

  // Left side: m^-1 W_m(delta) on full mixture draws, one value per replicate.
  std::vector<double> lhs_values(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    Rng rng = make_stream(seed, r);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXd a(m), b(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double u = unit(rng);
      double acc = 0.0;
      std::size_t c = 3;
      for (std::size_t k = 0; k < 4; ++k) {
        acc += model.pi[k];
        if (u < acc) {
          c = k;
          break;
        }
      }
      draw(static_cast<Hypothesis>(c), i, rng, a(i), b(i));
    }
    const auto lfdr = compute_lfdr(draws_to_stats(a, b, var1, var2), model);
    double w = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (lfdr.scores(i) <= delta) w += lfdr.scores(i);
    lhs_values[r] = w / static_cast<double>(m);
  }
  const auto lhs = summarize(lhs_values);

  // Right side: null-conditional lfdr CDFs from separate component draws.
  UnbiasednessCheck out;
  out.lhs = lhs.mean;
  out.lhs_se = lhs.se;
  double rhs_var = 0.0;
  const double draws = static_cast<double>(reps) * static_cast<double>(m);
  for (Hypothesis h : {Hypothesis::h00, Hypothesis::h10, Hypothesis::h01}) {
    const double weight = model.weight(h);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      Rng rng = make_stream(seed ^ 0x9E3779B97F4A7C15ULL, (index_of(h) + 1) * 0x100000000ULL + r);
      Eigen::VectorXd a(m), b(m);
      for (Eigen::Index i = 0; i < m; ++i) draw(h, i, rng, a(i), b(i));
      const auto lfdr = compute_lfdr(draws_to_stats(a, b, var1, var2), model);
      for (Eigen::Index i = 0; i < m; ++i) hits += lfdr.scores(i) <= delta;
    }
    const double g = static_cast<double>(hits) / draws;
    out.rhs += weight * g;
    rhs_var += weight * weight * g * (1.0 - g) / draws;
  }
  out.rhs_se = std::sqrt(rhs_var);
  const double denom = std::sqrt(out.lhs_se * out.lhs_se + rhs_var);
  out.z_score = denom > 0.0 ? (out.lhs - out.rhs) / denom : 0.0;
  return out;
}

}  // namespace mlfdr
