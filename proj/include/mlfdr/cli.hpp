#pragma once

#include "mlfdr/io.hpp"
#include "mlfdr/regression.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mlfdr::cli {

enum class Mode { analyze, simulate, evaluate };

Mode mode_from(std::string_view name);
OutcomeModel outcome_model_from(std::string_view name);

struct RunConfig {
  Mode mode = Mode::analyze;
  io::IngestPaths inputs;
  OutcomeModel outcome_model = OutcomeModel::linear;
  double alpha = 0.05;
  std::optional<std::uint64_t> seed;  // defaults to 1, or the scenario seed
  std::optional<std::size_t> d1;
  std::optional<std::size_t> d2;
  std::optional<bool> two_step;
  double tolerance = 1e-8;
  int max_iterations = 500;
  int restarts = 3;
  std::size_t threads = 1;
  io::Preprocessing preprocessing;
  bool normal_calibration = true;
  bool permute_exposure = false;
  std::optional<std::filesystem::path> scenario_file;
  std::size_t reps = 100;
  std::vector<double> alpha_grid{0.01, 0.025, 0.05, 0.1, 0.15, 0.2};
  std::filesystem::path out_dir = "mlfdr_out";

  void validate() const;
};

inline constexpr const char* kVersion = "1.0.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericError = 4;

// Executes one run, writing artifacts under config.out_dir. Diagnostics go
// to `log`; the return value is the process exit code.
int run(const RunConfig& config, std::ostream& log);

}  // namespace mlfdr::cli
