#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include "cpquant/io.hpp"

using namespace cpquant;

namespace {

struct CommonOpts {
  std::string config_path;
  int threads = 1;
};

struct LoadedConfig {
  FitConfig fit;
  SegmentationConstraints constraints;
  SelectionConfig selection;
};

LoadedConfig load_tool_config(const std::string& path) {
  LoadedConfig out;
  if (path.empty()) return out;
  KeyValueConfig cfg = KeyValueConfig::parse_file(path);
  out.fit = fit_config_from_config(cfg);
  out.constraints = constraints_from_config(cfg);
  out.selection = selection_from_config(cfg);
  cfg.finish();
  return out;
}

struct ScenarioFile {
  ScenarioSpec spec;
  bool has_seed = false;
  std::string study_type = "table";
  int study_k = -1;  // -1 = number of true breaks
  std::vector<Method> methods{Method::quantile};
  FitConfig fit;
  SegmentationConstraints constraints;
  SelectionConfig selection;
};

std::vector<Method> parse_methods(const std::string& text) {
  std::vector<Method> out;
  std::string token;
  for (char c : text + ",") {
    if (c == ',') {
      if (!token.empty()) out.push_back(method_from_string(token));
      token.clear();
    } else if (!isspace(static_cast<unsigned char>(c))) {
      token += c;
    }
  }
  return out;
}

ScenarioFile load_scenario_file(const std::string& path) {
  KeyValueConfig cfg = KeyValueConfig::parse_file(path);
  ScenarioFile out;
  out.has_seed = cfg.has("scenario.seed");
  out.spec = scenario_from_config(cfg);
  out.study_type = cfg.get_string("study.type", "table");
  out.study_k = cfg.get_int("study.k", -1);
  out.methods = parse_methods(cfg.get_string("study.methods", "quantile"));
  out.fit = fit_config_from_config(cfg);
  out.constraints = constraints_from_config(cfg);
  out.selection = selection_from_config(cfg);
  cfg.finish();
  if (out.study_type != "table" && out.study_type != "selection") {
    throw std::invalid_argument("study.type must be table or selection");
  }
  if (out.methods.empty()) {
    throw std::invalid_argument("study.methods must name at least one method");
  }
  return out;
}

void write_outputs(const std::string& out_path, const nlohmann::json& j,
                   const std::string& csv_path, const std::string& csv) {
  if (!out_path.empty()) {
    atomic_write_file(out_path, json_bytes(j));
  } else {
    std::cout << json_bytes(j);
  }
  if (!csv_path.empty()) atomic_write_file(csv_path, csv);
}

int run_fit(const std::string& data_path, const std::string& model_name,
            double tau, int k, std::uint64_t seed, const CommonOpts& common,
            const std::string& out_path) {
  LoadedConfig cfg = load_tool_config(common.config_path);
  cfg.fit.seed = seed;
  Dataset data = load_dataset_csv(data_path);
  RegressionModel model = make_model(model_name, data.dim_x());
  SegmentedFit fit = fit_k_changepoints(model, data, k, QuantileLevel(tau),
                                        cfg.constraints, cfg.fit, common.threads);
  write_outputs(out_path, to_json(fit), "", "");
  std::cerr << "fit: k=" << fit.k << " total_loss=" << fit.total_loss << "\n";
  return 0;
}

int run_select(const std::string& data_path, const std::string& model_name,
               double tau, int k_max, std::uint64_t seed, bool use_ls,
               const CommonOpts& common, const std::string& out_path) {
  LoadedConfig cfg = load_tool_config(common.config_path);
  cfg.fit.seed = seed;
  if (k_max >= 0) cfg.selection.k_max = k_max;
  Dataset data = load_dataset_csv(data_path);
  RegressionModel model = make_model(model_name, data.dim_x());
  SelectionResult res =
      use_ls ? select_k_ls(model, data, cfg.selection, cfg.constraints, cfg.fit,
                           common.threads)
             : select_k_quantile(model, data, QuantileLevel(tau), cfg.selection,
                                 cfg.constraints, cfg.fit, common.threads);
  write_outputs(out_path, to_json(res), "", "");
  std::cerr << "select: k_hat=" << res.k_hat << "\n";
  return 0;
}

int run_simulate(const std::string& scenario_path, int reps,
                 std::optional<std::uint64_t> seed, const std::string& study,
                 int k_flag, const std::string& methods_flag,
                 const std::string& error_law_flag, const CommonOpts& common,
                 const std::string& out_path, const std::string& csv_path) {
  if (reps < 1) throw std::invalid_argument("--reps must be >= 1");
  ScenarioFile sf = load_scenario_file(scenario_path);
  if (seed) {
    sf.spec.seed = *seed;
  } else if (!sf.has_seed) {
    throw std::invalid_argument(
        "simulate needs a seed (--seed flag or scenario.seed)");
  }
  if (!error_law_flag.empty()) {
    sf.spec.error_law = error_law_from_string(error_law_flag);
  }
  if (!methods_flag.empty()) sf.methods = parse_methods(methods_flag);
  std::string study_type = study.empty() ? sf.study_type : study;
  McReport report;
  if (study_type == "selection") {
    report = run_selection_study(sf.spec, reps, sf.selection, sf.methods,
                                 sf.constraints, sf.fit, common.threads);
  } else if (study_type == "table") {
    int k = k_flag >= 0 ? k_flag : (sf.study_k >= 0 ? sf.study_k : sf.spec.k());
    report = run_table_study(sf.spec, reps, k, sf.methods, sf.constraints,
                             sf.fit, common.threads);
  } else {
    throw std::invalid_argument("--study must be table or selection");
  }
  write_outputs(out_path, to_json(report), csv_path, mc_report_csv(report));
  for (const auto& series : report.series) {
    std::cerr << "simulate[" << to_string(series.method)
              << "]: excluded=" << series.excluded_count;
    if (!series.break_medians.empty()) {
      std::cerr << " break_medians=";
      for (double b : series.break_medians) std::cerr << b << " ";
    }
    if (!series.selection_freqs.empty()) {
      std::cerr << " freqs=";
      for (const auto& [k, c] : series.selection_freqs) {
        std::cerr << k << ":" << c << " ";
      }
    }
    std::cerr << "\n";
  }
  return 0;
}

int run_limit_law(const std::string& scenario_path, int break_index, int J,
                  long draws, std::optional<std::uint64_t> seed,
                  const CommonOpts& common, const std::string& out_path,
                  const std::string& csv_path) {
  ScenarioFile sf = load_scenario_file(scenario_path);
  if (seed) {
    sf.spec.seed = *seed;
  } else if (!sf.has_seed) {
    throw std::invalid_argument(
        "limit-law needs a seed (--seed flag or scenario.seed)");
  }
  RegressionModel model = make_model(sf.spec.model, 1);
  LimitLawPmf pmf =
      sample_limit_law(model, sf.spec, break_index, J, draws, common.threads);
  write_outputs(out_path, to_json(pmf), csv_path, pmf_csv(pmf));
  std::cerr << "limit-law: P(argmin=0)=" << pmf.at(0) << "\n";
  return 0;
}

int run_check_normality(const std::string& scenario_path, int segment, int reps,
                        const std::string& f0_policy,
                        std::optional<std::uint64_t> seed,
                        const CommonOpts& common, const std::string& out_path,
                        const std::string& csv_path) {
  if (reps < 2) throw std::invalid_argument("--reps must be >= 2");
  ScenarioFile sf = load_scenario_file(scenario_path);
  if (seed) {
    sf.spec.seed = *seed;
  } else if (!sf.has_seed) {
    throw std::invalid_argument(
        "check-normality needs a seed (--seed flag or scenario.seed)");
  }
  F0Policy policy;
  if (f0_policy == "true") {
    policy = F0Policy::true_density;
  } else if (f0_policy == "estimate") {
    policy = F0Policy::estimated;
  } else {
    throw std::invalid_argument("--f0 must be 'true' or 'estimate'");
  }
  RegressionModel model = make_model(sf.spec.model, 1);
  McReport mc = run_table_study(sf.spec, reps, sf.spec.k(), {Method::quantile},
                                sf.constraints, sf.fit, common.threads);
  NormalityCheck check = check_normality(mc, model, sf.spec, segment, policy);
  write_outputs(out_path, to_json(check), csv_path, standardized_csv(check));
  std::cerr << "check-normality: ks=";
  for (int j = 0; j < check.ks_per_coord.size(); ++j) {
    std::cerr << check.ks_per_coord[j] << " ";
  }
  std::cerr << "cov_error=" << check.cov_error << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear multi-phase regression by check-loss minimization"};
  app.require_subcommand(1);
  CommonOpts common;

  auto* fit = app.add_subcommand(
      "fit", "Estimate change-points and per-segment parameters at fixed K");
  std::string fit_data, fit_model = "mono_molecular", fit_out;
  double fit_tau = 0.5;
  int fit_k = 0;
  std::uint64_t fit_seed = 0;
  fit->add_option("--data", fit_data, "Dataset CSV (x1..xd,y)")->required();
  fit->add_option("--model", fit_model, "Registered model name");
  fit->add_option("--tau", fit_tau, "Quantile index in (0,1)");
  fit->add_option("--k", fit_k, "Number of change-points");
  fit->add_option("--seed", fit_seed, "Multistart seed");
  fit->add_option("--config", common.config_path, "Key-value config file");
  fit->add_option("--threads", common.threads, "Worker threads");
  fit->add_option("--out", fit_out, "Output JSON path (default stdout)");

  auto* sel = app.add_subcommand(
      "select", "Choose the change-point count by the penalized criterion");
  std::string sel_data, sel_model = "mono_molecular", sel_out;
  double sel_tau = 0.5;
  int sel_kmax = -1;
  std::uint64_t sel_seed = 0;
  bool sel_ls = false;
  sel->add_option("--data", sel_data, "Dataset CSV (x1..xd,y)")->required();
  sel->add_option("--model", sel_model, "Registered model name");
  sel->add_option("--tau", sel_tau, "Quantile index in (0,1)");
  sel->add_option("--k-max", sel_kmax, "Largest candidate K");
  sel->add_option("--seed", sel_seed, "Multistart seed");
  sel->add_flag("--ls", sel_ls, "Use the squared-loss criterion");
  sel->add_option("--config", common.config_path, "Key-value config file");
  sel->add_option("--threads", common.threads, "Worker threads");
  sel->add_option("--out", sel_out, "Output JSON path (default stdout)");

  auto* sim = app.add_subcommand(
      "simulate", "Monte Carlo replication study from a scenario file");
  std::string sim_scn, sim_out, sim_csv, sim_study, sim_methods, sim_law;
  int sim_reps = 0, sim_k = -1;
  std::optional<std::uint64_t> sim_seed;
  sim->add_option("--scenario", sim_scn, "Scenario config file")->required();
  sim->add_option("--reps", sim_reps, "Number of replications")->required();
  sim->add_option("--seed", sim_seed, "Base seed (overrides scenario.seed)");
  sim->add_option("--study", sim_study, "table or selection");
  sim->add_option("--k", sim_k, "Fitted change-point count (table study)");
  sim->add_option("--methods", sim_methods, "Comma list: quantile,ls");
  sim->add_option("--error-law", sim_law, "Override scenario.error_law");
  sim->add_option("--threads", common.threads, "Worker threads");
  sim->add_option("--out", sim_out, "Report JSON path (default stdout)");
  sim->add_option("--csv", sim_csv, "Per-replication CSV path");

  auto* lim = app.add_subcommand(
      "limit-law", "Simulate the argmin law of a break estimator");
  std::string lim_scn, lim_out, lim_csv;
  int lim_r = 1, lim_J = 15;
  long lim_draws = 10000;
  std::optional<std::uint64_t> lim_seed;
  lim->add_option("--scenario", lim_scn, "Scenario config file")->required();
  lim->add_option("--break-index", lim_r, "Break index r (1-based)");
  lim->add_option("--J", lim_J, "Grid half-width");
  lim->add_option("--draws", lim_draws, "Process realizations");
  lim->add_option("--seed", lim_seed, "Base seed (overrides scenario.seed)");
  lim->add_option("--threads", common.threads, "Worker threads");
  lim->add_option("--out", lim_out, "Output JSON path (default stdout)");
  lim->add_option("--csv", lim_csv, "pmf CSV path");

  auto* nrm = app.add_subcommand(
      "check-normality", "Standardized-estimate normality diagnostics");
  std::string nrm_scn, nrm_out, nrm_csv, nrm_f0 = "true";
  int nrm_segment = 1, nrm_reps = 200;
  std::optional<std::uint64_t> nrm_seed;
  nrm->add_option("--scenario", nrm_scn, "Scenario config file")->required();
  nrm->add_option("--segment", nrm_segment, "Segment index r (1-based)");
  nrm->add_option("--reps", nrm_reps, "Replications");
  nrm->add_option("--f0", nrm_f0, "Sparsity policy: true or estimate");
  nrm->add_option("--seed", nrm_seed, "Base seed (overrides scenario.seed)");
  nrm->add_option("--threads", common.threads, "Worker threads");
  nrm->add_option("--out", nrm_out, "Output JSON path (default stdout)");
  nrm->add_option("--csv", nrm_csv, "Standardized matrix CSV path");

  try {
    app.parse(argc, argv);
    if (common.threads < 1) throw std::invalid_argument("--threads must be >= 1");
    if (fit->parsed()) {
      return run_fit(fit_data, fit_model, fit_tau, fit_k, fit_seed, common,
                     fit_out);
    }
    if (sel->parsed()) {
      return run_select(sel_data, sel_model, sel_tau, sel_kmax, sel_seed, sel_ls,
                        common, sel_out);
    }
    if (sim->parsed()) {
      return run_simulate(sim_scn, sim_reps, sim_seed, sim_study, sim_k,
                          sim_methods, sim_law, common, sim_out, sim_csv);
    }
    if (lim->parsed()) {
      return run_limit_law(lim_scn, lim_r, lim_J, lim_draws, lim_seed, common,
                           lim_out, lim_csv);
    }
    if (nrm->parsed()) {
      return run_check_normality(nrm_scn, nrm_segment, nrm_reps, nrm_f0,
                                 nrm_seed, common, nrm_out, nrm_csv);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const OptimizerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
