#include "mlfdr/io.hpp"

#include "mlfdr/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mlfdr::io {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "NAN";
}

double parse_cell(const std::string& cell, const fs::path& path, std::size_t line, std::size_t col) {
  if (is_missing(cell)) return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value))
    throw data_error("cli", path.string() + ":" + std::to_string(line) + ": column " + std::to_string(col + 1) +
                                ": non-numeric cell '" + cell + "'");
  return value;
}

bool row_has_missing(const Eigen::MatrixXd& values, Eigen::Index r) { return values.row(r).hasNaN(); }

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& values, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t j = 0; j < rows.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = values.row(rows[j]);
  return out;
}

Eigen::MatrixXd take_cols(const Eigen::MatrixXd& values, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = values.col(cols[j]);
  return out;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cli", "cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw data_error("cli", path.string() + ": missing header row");
  table.header = split(line);
  const std::size_t cols = table.header.size();
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != cols)
      throw data_error("cli", path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                                  " cells, found " + std::to_string(cells.size()));
    std::vector<double> row(cols);
    for (std::size_t c = 0; c < cols; ++c) row[c] = parse_cell(cells[c], path, line_no, c);
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header, const Eigen::MatrixXd& values) {
  std::ostringstream out;
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << format_double(values(r, c));
    out << '\n';
  }
  write_text(path, out.str());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cli", "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

Eigen::MatrixXd clr_transform(const Eigen::MatrixXd& counts, double pseudo_count) {
  Eigen::MatrixXd logs = (counts.array() + pseudo_count).log().matrix();
  const Eigen::VectorXd centers = logs.rowwise().mean();
  logs.colwise() -= centers;
  return logs;
}

Eigen::VectorXd nonzero_prevalence(const Eigen::MatrixXd& values) {
  if (values.rows() == 0) return Eigen::VectorXd::Zero(values.cols());
  return (values.array() != 0.0).cast<double>().colwise().mean().transpose();
}

Ingested ingest(const IngestPaths& paths, const Preprocessing& prep, OutcomeKind kind) {
  if (prep.prevalence_threshold && !(*prep.prevalence_threshold >= 0.0 && *prep.prevalence_threshold <= 1.0))
    throw config_error("cli", "prevalence threshold must lie in [0, 1]");
  if (prep.clr && !(prep.pseudo_count > 0.0)) throw config_error("cli", "pseudo-count must be positive");

  const auto exposure = read_csv(paths.exposure);
  const auto mediators = read_csv(paths.mediators);
  const auto outcomes = read_csv(paths.outcomes);
  std::optional<CsvTable> confounders;
  if (paths.confounders) confounders = read_csv(*paths.confounders);

  if (exposure.values.cols() != 1) throw data_error("cli", "exposure file must have exactly one column");
  const Eigen::Index n = exposure.values.rows();
  if (mediators.values.rows() != n || outcomes.values.rows() != n || (confounders && confounders->values.rows() != n))
    throw data_error("cli", "dimension mismatch: input files have different row counts");
  if (mediators.values.cols() != outcomes.values.cols())
    throw data_error("cli", "dimension mismatch: " + std::to_string(mediators.values.cols()) + " mediators vs " +
                                std::to_string(outcomes.values.cols()) + " outcomes");

  Ingested out;
  out.manifest.rows_read = static_cast<std::size_t>(n);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < n; ++r) {
    const bool missing = row_has_missing(exposure.values, r) || row_has_missing(mediators.values, r) ||
                         row_has_missing(outcomes.values, r) || (confounders && row_has_missing(confounders->values, r));
    if (!missing) rows.push_back(r);
  }
  out.manifest.rows_dropped = static_cast<std::size_t>(n) - rows.size();

  Eigen::MatrixXd med = take_rows(mediators.values, rows);
  Eigen::MatrixXd outc = take_rows(outcomes.values, rows);

  std::vector<Eigen::Index> keep;
  const Eigen::VectorXd prevalence = nonzero_prevalence(outc);
  for (Eigen::Index c = 0; c < outc.cols(); ++c) {
    const auto& name = mediators.header[static_cast<std::size_t>(c)];
    if (prep.prevalence_threshold && prevalence(c) < *prep.prevalence_threshold) {
      out.manifest.dropped.push_back(name);
    } else {
      keep.push_back(c);
      out.manifest.kept.push_back(name);
      out.ids.push_back(name);
    }
  }
  med = take_cols(med, keep);
  outc = take_cols(outc, keep);
  if (prep.clr) outc = clr_transform(outc, prep.pseudo_count);

  out.data.x = take_rows(exposure.values, rows).col(0);
  out.data.mediators = std::move(med);
  out.data.outcomes = std::move(outc);
  if (confounders) out.data.confounders = take_rows(confounders->values, rows);
  if (prep.center && !rows.empty()) {
    auto center_cols = [](Eigen::MatrixXd& v) { v.rowwise() -= v.colwise().mean(); };
    out.data.x.array() -= out.data.x.mean();
    center_cols(out.data.mediators);
    if (kind == OutcomeKind::continuous) center_cols(out.data.outcomes);
    if (out.data.confounders) center_cols(*out.data.confounders);
  }
  out.data.outcome_kind = kind;
  return out;
}

FitStatus fit_status_from(std::string_view name) {
  for (auto s : {FitStatus::ok, FitStatus::rank_deficient, FitStatus::degenerate_variance, FitStatus::separation,
                 FitStatus::not_converged, FitStatus::constant_outcome})
    if (to_string(s) == name) return s;
  throw data_error("cli", "unknown status '" + std::string(name) + "'");
}

std::vector<HypothesisRow> hypothesis_rows(const std::vector<std::string>& ids, const CoefStats& all_stats,
                                           const std::vector<std::size_t>& kept, const LfdrScores& lfdr,
                                           const ScreeningResult& result) {
  const double root_n = std::sqrt(static_cast<double>(all_stats.n));
  std::vector<HypothesisRow> rows(all_stats.m());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    rows[i].id = i < ids.size() ? ids[i] : std::to_string(i);
    rows[i].alpha_hat = all_stats.a(ii) / root_n;
    rows[i].beta_hat = all_stats.b(ii) / root_n;
    rows[i].var1 = all_stats.var1(ii);
    rows[i].var2 = all_stats.var2(ii);
    rows[i].status = all_stats.status[i];
  }
  for (std::size_t j = 0; j < kept.size(); ++j) {
    rows[kept[j]].lfdr = lfdr.scores(static_cast<Eigen::Index>(j));
    rows[kept[j]].rejected = result.rejected[j];
  }
  return rows;
}

void write_hypothesis_table(const fs::path& path, const std::vector<HypothesisRow>& rows) {
  std::ostringstream out;
  out << "id,alpha_hat,beta_hat,var1,var2,status,lfdr,rejected\n";
  for (const auto& r : rows) {
    out << r.id << ',' << format_double(r.alpha_hat) << ',' << format_double(r.beta_hat) << ','
        << format_double(r.var1) << ',' << format_double(r.var2) << ',' << to_string(r.status) << ','
        << (r.lfdr ? format_double(*r.lfdr) : "NA") << ',' << (r.rejected ? 1 : 0) << '\n';
  }
  write_text(path, out.str());
}

std::vector<HypothesisRow> read_hypothesis_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cli", "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "id,alpha_hat,beta_hat,var1,var2,status,lfdr,rejected")
    throw data_error("cli", path.string() + ": not a hypothesis table");
  std::vector<HypothesisRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 8) throw data_error("cli", path.string() + ":" + std::to_string(line_no) + ": expected 8 cells");
    HypothesisRow r;
    r.id = cells[0];
    r.alpha_hat = parse_cell(cells[1], path, line_no, 1);
    r.beta_hat = parse_cell(cells[2], path, line_no, 2);
    r.var1 = parse_cell(cells[3], path, line_no, 3);
    r.var2 = parse_cell(cells[4], path, line_no, 4);
    r.status = fit_status_from(cells[5]);
    if (!is_missing(cells[6])) r.lfdr = parse_cell(cells[6], path, line_no, 6);
    r.rejected = cells[7] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json to_json(const MixtureModel& model) {
  return {{"pi00", model.pi[0]}, {"pi10", model.pi[1]}, {"pi01", model.pi[2]}, {"pi11", model.pi[3]},
          {"mu", model.mu},      {"theta", model.theta}, {"kappa", model.kappa}, {"psi", model.psi}};
}

nlohmann::json to_json(const GeneralMixtureModel& model) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json pi = nlohmann::json::array();
  for (Eigen::Index u = 0; u < model.pi_joint.rows(); ++u) {
    std::vector<double> row(static_cast<std::size_t>(model.pi_joint.cols()));
    for (Eigen::Index v = 0; v < model.pi_joint.cols(); ++v) row[static_cast<std::size_t>(v)] = model.pi_joint(u, v);
    pi.push_back(row);
  }
  const auto cls = model.class_probabilities();
  return {{"d1", model.d1()},
          {"d2", model.d2()},
          {"pi_joint", pi},
          {"mus", vec(model.mus)},
          {"kappas", vec(model.kappas)},
          {"thetas", vec(model.thetas)},
          {"psis", vec(model.psis)},
          {"class_probabilities", {{"H00", cls[0]}, {"H10", cls[1]}, {"H01", cls[2]}, {"H11", cls[3]}}}};
}

nlohmann::json to_json(const EmTrace& trace) {
  return {{"iterations", trace.iterations},
          {"converged", trace.converged},
          {"floor_active", trace.floor_active},
          {"chosen_restart", trace.chosen_restart},
          {"restart_loglik", trace.restart_loglik},
          {"final_loglik", trace.loglik.empty() ? 0.0 : trace.loglik.back()},
          {"loglik", trace.loglik}};
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"fdp", r.fdp},
          {"power", r.power},
          {"V", r.false_rejections},
          {"R", r.rejections},
          {"P", r.missed_alternatives},
          {"alternatives", r.alternatives},
          {"w_stat", r.w_stat},
          {"q_tilde", r.q_tilde},
          {"alpha", r.alpha}};
}

nlohmann::json to_json(const SimScenario& sc) {
  const auto& h = sc.hyper;
  return {{"kind", std::string(to_string(sc.kind))},
          {"pi", sc.pi_truth},
          {"n", sc.n},
          {"m", sc.m},
          {"tau", sc.tau},
          {"seed", sc.seed},
          {"hyper",
           {{"kappa", h.kappa},
            {"psi", h.psi},
            {"alpha_multiplier", h.alpha_multiplier},
            {"beta_multiplier", h.beta_multiplier},
            {"x_mean", h.x_mean},
            {"x_sd", h.x_sd},
            {"gamma_mean", h.gamma_mean},
            {"gamma_var", h.gamma_var},
            {"interaction_mean", h.interaction_mean},
            {"interaction_var", h.interaction_var},
            {"confounder_mediator_coef", h.confounder_mediator_coef},
            {"confounder_outcome_coef", h.confounder_outcome_coef},
            {"alpha_weights", h.alpha_weights},
            {"beta_weights", h.beta_weights},
            {"mu_multipliers", h.mu_multipliers},
            {"theta_multipliers", h.theta_multipliers},
            {"kappas", h.kappas},
            {"psis", h.psis}}}};
}

nlohmann::json to_json(const StudyReport& r) {
  auto summary = [](const Summary& s) { return nlohmann::json{{"mean", s.mean}, {"se", s.se}}; };
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& g : r.grid)
    grid.push_back({{"alpha", g.alpha},
                    {"fdr", summary(g.fdr)},
                    {"power", summary(g.power)},
                    {"oracle_fdr", summary(g.oracle_fdr)},
                    {"oracle_power", summary(g.oracle_power)}});
  return {{"scenario", to_json(r.scenario)},
          {"alpha", r.alpha},
          {"reps", r.reps},
          {"failed", r.failed},
          {"empirical_fdr", summary(r.fdr)},
          {"power", summary(r.power)},
          {"oracle_fdr", summary(r.oracle_fdr)},
          {"oracle_power", summary(r.oracle_power)},
          {"rejections", summary(r.rejections)},
          {"median_rejections", r.median_rejections},
          {"amle_nonnegative_fraction", r.amle_nonnegative_fraction},
          {"alpha_grid", grid}};
}

nlohmann::json to_json(const IngestManifest& m) {
  return {{"rows_read", m.rows_read}, {"rows_dropped", m.rows_dropped}, {"kept", m.kept}, {"dropped", m.dropped}};
}

SimScenario scenario_from_json(const nlohmann::json& j) {
  try {
    SimScenario sc;
    if (j.contains("kind")) sc.kind = scenario_kind_from(j.at("kind").get<std::string>());
    if (j.contains("pi")) {
      const auto& pi = j.at("pi");
      if (pi.is_string()) {
        const auto name = pi.get<std::string>();
        if (name == "dense") sc.pi_truth = kDensePi;
        else if (name == "sparse") sc.pi_truth = kSparsePi;
        else throw config_error("cli", "pi must be 'dense', 'sparse' or four weights");
      } else {
        sc.pi_truth = pi.get<std::array<double, 4>>();
      }
    }
    sc.n = get_or<std::size_t>(j, "n", sc.n);
    sc.m = get_or<std::size_t>(j, "m", sc.m);
    if (j.contains("tau") && j.contains("tau_root_n")) throw config_error("cli", "give either tau or tau_root_n");
    if (j.contains("tau")) sc.tau = j.at("tau").get<double>();
    if (j.contains("tau_root_n")) sc.tau = j.at("tau_root_n").get<double>() / std::sqrt(static_cast<double>(sc.n));
    sc.seed = get_or<std::uint64_t>(j, "seed", sc.seed);
    if (j.contains("hyper")) {
      const auto& hj = j.at("hyper");
      auto& h = sc.hyper;
      h.kappa = get_or(hj, "kappa", h.kappa);
      h.psi = get_or(hj, "psi", h.psi);
      h.alpha_multiplier = get_or(hj, "alpha_multiplier", h.alpha_multiplier);
      h.beta_multiplier = get_or(hj, "beta_multiplier", h.beta_multiplier);
      h.x_mean = get_or(hj, "x_mean", h.x_mean);
      h.x_sd = get_or(hj, "x_sd", h.x_sd);
      h.gamma_mean = get_or(hj, "gamma_mean", h.gamma_mean);
      h.gamma_var = get_or(hj, "gamma_var", h.gamma_var);
      h.interaction_mean = get_or(hj, "interaction_mean", h.interaction_mean);
      h.interaction_var = get_or(hj, "interaction_var", h.interaction_var);
      h.confounder_mediator_coef = get_or(hj, "confounder_mediator_coef", h.confounder_mediator_coef);
      h.confounder_outcome_coef = get_or(hj, "confounder_outcome_coef", h.confounder_outcome_coef);
      h.alpha_weights = get_or(hj, "alpha_weights", h.alpha_weights);
      h.beta_weights = get_or(hj, "beta_weights", h.beta_weights);
      h.mu_multipliers = get_or(hj, "mu_multipliers", h.mu_multipliers);
      h.theta_multipliers = get_or(hj, "theta_multipliers", h.theta_multipliers);
      h.kappas = get_or(hj, "kappas", h.kappas);
      h.psis = get_or(hj, "psis", h.psis);
    }
    sc.validate();
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("cli", std::string("malformed scenario: ") + e.what());
  }
}

SimScenario read_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cli", "cannot open scenario file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("cli", path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace mlfdr::io
