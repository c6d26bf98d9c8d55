// Command-line front-end: analyze CSV data, simulate scenarios, or run
// replicate studies. See README.md for the flag reference.

#include "mlfdr/cli.hpp"
#include "mlfdr/error.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Mediator screening with joint local false discovery rates"};
  mlfdr::cli::RunConfig config;

  std::string mode = "analyze";
  std::string outcome_model = "linear";
  std::string exposure, mediators, outcomes, confounders, scenario;
  std::uint64_t seed = 1;
  std::size_t d1 = 1, d2 = 1;
  bool two_step = false, standard = false;
  double prevalence = 0.10;
  std::string out_dir = config.out_dir.string();

  app.add_option("--mode", mode, "analyze | simulate | evaluate")->check(CLI::IsMember({"analyze", "simulate", "evaluate"}));
  app.add_option("--exposure", exposure, "CSV with one exposure column");
  app.add_option("--mediators", mediators, "CSV, one column per mediator");
  app.add_option("--outcomes", outcomes, "CSV, one column per outcome (paired with mediators)");
  app.add_option("--confounders", confounders, "optional CSV of confounders");
  app.add_option("--outcome-model", outcome_model, "linear | binary | interaction")
      ->check(CLI::IsMember({"linear", "binary", "interaction"}));
  app.add_option("--alpha", config.alpha, "target FDR level");
  auto* seed_opt = app.add_option("--seed", seed, "root seed (default 1, or the scenario seed)");
  auto* d1_opt = app.add_option("--d1", d1, "alternative components for alpha");
  auto* d2_opt = app.add_option("--d2", d2, "alternative components for beta");
  auto* two_step_opt = app.add_flag("--two-step", two_step, "force the two-step EM");
  auto* standard_opt = app.add_flag("--standard-em", standard, "force the standard four-component EM");
  two_step_opt->excludes(standard_opt);
  app.add_option("--tolerance", config.tolerance, "relative log-likelihood tolerance");
  app.add_option("--max-iter", config.max_iterations, "EM iteration limit");
  app.add_option("--restarts", config.restarts, "EM starts (default + perturbed)");
  app.add_option("--threads", config.threads, "worker threads, 0 = all cores");
  auto* prevalence_opt =
      app.add_option("--prevalence-filter", prevalence, "drop outcomes with nonzero prevalence below this fraction");
  app.add_option("--pseudo-count", config.preprocessing.pseudo_count, "pseudo-count added before the log-ratio");
  app.add_flag("--clr", config.preprocessing.clr, "centered log-ratio transform of the outcomes");
  app.add_flag("--center", config.preprocessing.center, "center every input column (acts as an intercept)");
  bool no_calibration = false;
  app.add_flag("--no-normal-calibration", no_calibration, "use studentized estimates without the t-to-normal mapping");
  app.add_flag("--permute-exposure", config.permute_exposure, "shuffle the exposure to build a null run");
  app.add_option("--scenario-file", scenario, "JSON scenario for simulate/evaluate");
  app.add_option("--reps", config.reps, "replicates for simulate/evaluate");
  app.add_option("--alpha-grid", config.alpha_grid, "levels for the plot table");
  app.add_option("--out-dir", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mlfdr::cli::kConfigError;
  }

  try {
    config.mode = mlfdr::cli::mode_from(mode);
    config.outcome_model = mlfdr::cli::outcome_model_from(outcome_model);
  } catch (const mlfdr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mlfdr::cli::kConfigError;
  }
  config.inputs.exposure = exposure;
  config.inputs.mediators = mediators;
  config.inputs.outcomes = outcomes;
  if (!confounders.empty()) config.inputs.confounders = confounders;
  if (!scenario.empty()) config.scenario_file = scenario;
  if (seed_opt->count()) config.seed = seed;
  if (d1_opt->count()) config.d1 = d1;
  if (d2_opt->count()) config.d2 = d2;
  if (two_step_opt->count()) config.two_step = true;
  if (standard_opt->count()) config.two_step = false;
  if (prevalence_opt->count()) config.preprocessing.prevalence_threshold = prevalence;
  config.normal_calibration = !no_calibration;
  config.out_dir = out_dir;

  return mlfdr::cli::run(config, std::cerr);
}
