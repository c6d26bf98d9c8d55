#include "mlfdr/cli.hpp"

#include "mlfdr/error.hpp"
#include "mlfdr/evaluate.hpp"
#include "mlfdr/random.hpp"
#include "mlfdr/screening.hpp"
#include "mlfdr/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <sstream>

namespace mlfdr::cli {

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::analyze: return "analyze";
    case Mode::simulate: return "simulate";
    case Mode::evaluate: return "evaluate";
  }
  return "unknown";
}

std::string_view to_string(OutcomeModel model) {
  switch (model) {
    case OutcomeModel::linear: return "linear";
    case OutcomeModel::binary: return "binary";
    case OutcomeModel::interaction: return "interaction";
  }
  return "unknown";
}

EmConfig em_config(const RunConfig& config, std::uint64_t seed) {
  EmConfig em;
  em.tolerance = config.tolerance;
  em.max_iterations = config.max_iterations;
  em.restarts = config.restarts;
  em.seed = seed;
  em.threads = config.threads;
  return em;
}

json options_json(const RunConfig& c, std::uint64_t seed, std::size_t d1, std::size_t d2) {
  json j = {{"mode", std::string(to_string(c.mode))},
            {"outcome_model", std::string(to_string(c.outcome_model))},
            {"alpha", c.alpha},
            {"seed", seed},
            {"d1", d1},
            {"d2", d2},
            {"two_step", c.two_step ? json(*c.two_step) : json("auto")},
            {"tolerance", c.tolerance},
            {"max_iterations", c.max_iterations},
            {"restarts", c.restarts},
            {"threads", c.threads},
            {"prevalence_filter", c.preprocessing.prevalence_threshold ? json(*c.preprocessing.prevalence_threshold)
                                                                       : json(nullptr)},
            {"pseudo_count", c.preprocessing.pseudo_count},
            {"clr", c.preprocessing.clr},
            {"center", c.preprocessing.center},
            {"normal_calibration", c.normal_calibration},
            {"permute_exposure", c.permute_exposure},
            {"reps", c.reps},
            {"alpha_grid", c.alpha_grid},
            {"out_dir", c.out_dir.string()}};
  if (c.scenario_file) j["scenario_file"] = c.scenario_file->string();
  return j;
}

std::vector<std::string> numbered(const char* prefix, Eigen::Index count) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i + 1));
  return names;
}

std::string label_name(Hypothesis h) {
  switch (h) {
    case Hypothesis::h00: return "H00";
    case Hypothesis::h10: return "H10";
    case Hypothesis::h01: return "H01";
    case Hypothesis::h11: return "H11";
  }
  return "?";
}

void write_study_outputs(const StudyReport& report, const std::filesystem::path& dir) {
  io::write_json(dir / "report.json", io::to_json(report));
  std::ostringstream tsv;
  tsv << "alpha\tfdr\tfdr_se\tpower\tpower_se\toracle_fdr\toracle_fdr_se\toracle_power\toracle_power_se\n";
  for (const auto& g : report.grid)
    tsv << io::format_double(g.alpha) << '\t' << io::format_double(g.fdr.mean) << '\t' << io::format_double(g.fdr.se)
        << '\t' << io::format_double(g.power.mean) << '\t' << io::format_double(g.power.se) << '\t'
        << io::format_double(g.oracle_fdr.mean) << '\t' << io::format_double(g.oracle_fdr.se) << '\t'
        << io::format_double(g.oracle_power.mean) << '\t' << io::format_double(g.oracle_power.se) << '\n';
  io::write_text(dir / "alpha_grid.tsv", tsv.str());
}

int analyze(const RunConfig& config, std::uint64_t seed, json& manifest, std::ostream& log) {
  auto t0 = Clock::now();
  const auto kind = config.outcome_model == OutcomeModel::binary ? OutcomeKind::binary : OutcomeKind::continuous;
  auto ingested = io::ingest(config.inputs, config.preprocessing, kind);
  manifest["ingestion"] = io::to_json(ingested.manifest);
  if (config.permute_exposure) {
    Rng rng = make_stream(seed, 0x7065726DULL);
    std::vector<double> x(ingested.data.x.data(), ingested.data.x.data() + ingested.data.x.size());
    std::shuffle(x.begin(), x.end(), rng);
    ingested.data.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  }
  manifest["timings_ms"]["ingest"] = elapsed_ms(t0);

  t0 = Clock::now();
  RegressionOptions reg;
  reg.threads = config.threads;
  const auto all_stats = fit(ingested.data, config.outcome_model, reg);
  std::vector<std::size_t> kept;
  const auto valid = all_stats.valid_only(&kept);
  const auto stats = config.normal_calibration ? normal_calibrated(valid) : valid;
  json excluded = json::array();
  for (std::size_t i = 0; i < all_stats.m(); ++i)
    if (all_stats.status[i] != FitStatus::ok)
      excluded.push_back({{"id", ingested.ids[i]}, {"status", std::string(to_string(all_stats.status[i]))}});
  manifest["excluded"] = excluded;
  manifest["timings_ms"]["regression"] = elapsed_ms(t0);

  t0 = Clock::now();
  const std::size_t d1 = config.d1.value_or(1), d2 = config.d2.value_or(1);
  const auto mix = fit_mixture(stats, d1, d2, config.two_step, em_config(config, seed));
  manifest["timings_ms"]["mixture"] = elapsed_ms(t0);

  t0 = Clock::now();
  const auto lfdr = compute_lfdr(stats, mix.model, config.threads);
  const auto result = step_up_select(lfdr, config.alpha);
  manifest["timings_ms"]["screening"] = elapsed_ms(t0);

  io::write_hypothesis_table(config.out_dir / "hypotheses.csv",
                             io::hypothesis_rows(ingested.ids, all_stats, kept, lfdr, result));
  json model = {{"model", io::to_json(mix.model)}, {"two_step", mix.two_step}, {"trace", io::to_json(mix.trace)}};
  if (mix.standard) model["standard"] = io::to_json(*mix.standard);
  model["cutoff"] = result.cutoff;
  model["rejections"] = result.k;
  io::write_json(config.out_dir / "model.json", model);
  if (!mix.trace.converged) log << "warning: EM stopped at the iteration limit before converging\n";
  log << "analyze: " << stats.m() << " hypotheses fitted, " << excluded.size() << " excluded, " << result.k
      << " rejected at alpha " << config.alpha << "\n";
  return kOk;
}

SimScenario resolve_scenario(const RunConfig& config, std::uint64_t& seed) {
  if (!config.scenario_file) throw config_error("cli", "--scenario-file is required in this mode");
  auto sc = io::read_scenario(*config.scenario_file);
  if (config.seed) sc.seed = *config.seed;
  seed = sc.seed;
  return sc;
}

StudyOptions study_options(const RunConfig& config, const SimScenario& sc, std::uint64_t seed, std::size_t& d1,
                           std::size_t& d2) {
  const std::size_t fallback = sc.kind == ScenarioKind::composite ? 2 : 1;
  d1 = config.d1.value_or(fallback);
  d2 = config.d2.value_or(fallback);
  StudyOptions options;
  options.d1 = d1;
  options.d2 = d2;
  options.two_step = config.two_step;
  options.em = em_config(config, seed);
  options.normal_calibration = config.normal_calibration;
  options.threads = config.threads;
  options.alpha_grid = config.alpha_grid;
  return options;
}

int simulate(const RunConfig& config, const SimScenario& sc, const StudyOptions& options, json& manifest,
             std::ostream& log) {
  auto t0 = Clock::now();
  const auto ld = generate(sc, config.threads);
  const auto& d = ld.data;
  const auto m = static_cast<Eigen::Index>(sc.m);
  io::write_csv(config.out_dir / "exposure.csv", {"x"}, d.x);
  io::write_csv(config.out_dir / "mediators.csv", numbered("M", m), d.mediators);
  io::write_csv(config.out_dir / "outcomes.csv", numbered("Y", m), d.outcomes);
  if (d.confounders) io::write_csv(config.out_dir / "confounders.csv", numbered("Z", d.confounders->cols()), *d.confounders);
  std::ostringstream truth;
  truth << "id,label,true_alpha,true_beta\n";
  for (Eigen::Index i = 0; i < m; ++i)
    truth << 'M' << (i + 1) << ',' << label_name(ld.labels[static_cast<std::size_t>(i)]) << ','
          << io::format_double(ld.true_alpha(i)) << ',' << io::format_double(ld.true_beta(i)) << '\n';
  io::write_text(config.out_dir / "truth.csv", truth.str());
  io::write_json(config.out_dir / "truth_model.json", io::to_json(ld.truth));
  manifest["timings_ms"]["generate"] = elapsed_ms(t0);

  t0 = Clock::now();
  const auto report = replicate_study(sc, config.reps, config.alpha, options);
  write_study_outputs(report, config.out_dir);
  manifest["timings_ms"]["study"] = elapsed_ms(t0);
  log << "simulate: empirical FDR " << report.fdr.mean << " (se " << report.fdr.se << "), power " << report.power.mean
      << " over " << (report.reps - report.failed) << " replicates\n";
  return kOk;
}

int evaluate(const RunConfig& config, const SimScenario& sc, const StudyOptions& options, json& manifest,
             std::ostream& log) {
  const auto t0 = Clock::now();
  const auto report = replicate_study(sc, config.reps, config.alpha, options);
  write_study_outputs(report, config.out_dir);
  std::ostringstream reps;
  reps << "replicate,seed,failed,excluded,R,V,fdp,power,oracle_R,oracle_fdp,oracle_power,amle_ratio,error\n";
  for (const auto& r : report.replicates) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    reps << r.replicate << ',' << r.seed << ',' << (r.failed ? 1 : 0) << ',' << r.excluded_hypotheses << ','
         << r.adaptive.rejections << ',' << r.adaptive.false_rejections << ',' << io::format_double(r.adaptive.fdp)
         << ',' << io::format_double(r.adaptive.power) << ',' << r.oracle.rejections << ','
         << io::format_double(r.oracle.fdp) << ',' << io::format_double(r.oracle.power) << ','
         << io::format_double(r.amle_ratio) << ',' << err << '\n';
  }
  io::write_text(config.out_dir / "replicates.csv", reps.str());
  manifest["timings_ms"]["study"] = elapsed_ms(t0);
  log << "evaluate: empirical FDR " << report.fdr.mean << " (se " << report.fdr.se << "), power " << report.power.mean
      << ", oracle FDR " << report.oracle_fdr.mean << ", failed " << report.failed << "/" << report.reps << "\n";
  return kOk;
}

}  // namespace

Mode mode_from(std::string_view name) {
  for (auto m : {Mode::analyze, Mode::simulate, Mode::evaluate})
    if (to_string(m) == name) return m;
  throw config_error("cli", "unknown mode '" + std::string(name) + "'");
}

OutcomeModel outcome_model_from(std::string_view name) {
  for (auto m : {OutcomeModel::linear, OutcomeModel::binary, OutcomeModel::interaction})
    if (to_string(m) == name) return m;
  throw config_error("cli", "unknown outcome model '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("cli", "--alpha must lie in (0, 1)");
  for (double a : alpha_grid)
    if (!(a > 0.0 && a < 1.0)) throw config_error("cli", "alpha grid values must lie in (0, 1)");
  if (preprocessing.prevalence_threshold &&
      !(*preprocessing.prevalence_threshold >= 0.0 && *preprocessing.prevalence_threshold <= 1.0))
    throw config_error("cli", "--prevalence-filter must lie in [0, 1]");
  if ((d1 && *d1 < 1) || (d2 && *d2 < 1)) throw config_error("cli", "--d1 and --d2 must be at least 1");
  if (reps < 1) throw config_error("cli", "--reps must be at least 1");
  if (restarts < 1 || max_iterations < 1 || !(tolerance > 0.0))
    throw config_error("cli", "EM options must be positive");
  if (mode == Mode::analyze) {
    if (inputs.exposure.empty() || inputs.mediators.empty() || inputs.outcomes.empty())
      throw config_error("cli", "analyze needs --exposure, --mediators and --outcomes");
    for (const auto* p : {&inputs.exposure, &inputs.mediators, &inputs.outcomes})
      if (!std::filesystem::exists(*p)) throw config_error("cli", "input not found: " + p->string());
    if (inputs.confounders && !std::filesystem::exists(*inputs.confounders))
      throw config_error("cli", "input not found: " + inputs.confounders->string());
  } else if (!scenario_file) {
    throw config_error("cli", "--scenario-file is required in this mode");
  }
}

int run(const RunConfig& config, std::ostream& log) {
  try {
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    const auto started = Clock::now();
    json manifest = {{"tool", "mlfdr"}, {"version", kVersion}};
    std::uint64_t seed = config.seed.value_or(1);
    std::size_t d1 = config.d1.value_or(1), d2 = config.d2.value_or(1);
    int code = kOk;
    if (config.mode == Mode::analyze) {
      code = analyze(config, seed, manifest, log);
    } else {
      const auto sc = resolve_scenario(config, seed);
      const auto options = study_options(config, sc, seed, d1, d2);
      manifest["scenario"] = io::to_json(sc);
      code = config.mode == Mode::simulate ? simulate(config, sc, options, manifest, log)
                                           : evaluate(config, sc, options, manifest, log);
    }
    manifest["options"] = options_json(config, seed, d1, d2);
    manifest["timings_ms"]["total"] = elapsed_ms(started);
    io::write_json(config.out_dir / "manifest.json", manifest);
    return code;
  } catch (const Error& e) {
    log << "error [" << e.module() << "]: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::config: return kConfigError;
      case ErrorKind::data: return kDataError;
      case ErrorKind::numeric: return kNumericError;
    }
    return kNumericError;
  } catch (const std::filesystem::filesystem_error& e) {
    log << "error [cli]: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kNumericError;
  }
}

}  // namespace mlfdr::cli
