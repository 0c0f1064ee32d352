#include "cpquant/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cpquant/parallel.hpp"

namespace cpquant {

std::string to_string(Method m) {
  return m == Method::quantile ? "quantile" : "ls";
}

Method method_from_string(const std::string& s) {
  if (s == "quantile") return Method::quantile;
  if (s == "ls" || s == "least_squares") return Method::least_squares;
  throw std::invalid_argument("unknown method: " + s);
}

void ScenarioSpec::validate(const RegressionModel& m) const {
  if (n < 1) throw std::invalid_argument("scenario needs n >= 1");
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("scenario tau must lie in (0,1)");
  }
  if (!(x_sd > 0.0)) throw std::invalid_argument("scenario x_sd must be > 0");
  if (true_phis.size() != true_breaks.size() + 1) {
    throw std::invalid_argument("scenario needs one more phi than breaks");
  }
  int prev = 1;
  for (int b : true_breaks) {
    if (b <= prev || b >= n) {
      throw std::invalid_argument(
          "scenario breaks must be strictly increasing in (1, n)");
    }
    prev = b;
  }
  for (const auto& phi : true_phis) {
    if (phi.size() != m.dim_phi) {
      throw std::invalid_argument("scenario phi dimension mismatch");
    }
  }
  for (std::size_t r = 1; r < true_phis.size(); ++r) {
    if ((true_phis[r] - true_phis[r - 1]).cwiseAbs().maxCoeff() == 0.0) {
      throw std::invalid_argument("consecutive scenario phis must differ");
    }
  }
}

int ScenarioSpec::segment_of(int i) const {
  int r = 1;
  for (int b : true_breaks) {
    if (i <= b) return r;
    ++r;
  }
  return r;
}

std::pair<Dataset, VectorXd> generate(const ScenarioSpec& spec) {
  RegressionModel model = make_model(spec.model, 1);
  spec.validate(model);
  Rng rng(spec.seed);
  Dataset data;
  data.x.resize(spec.n, model.dim_x);
  data.y.resize(spec.n);
  VectorXd eps(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    for (int j = 0; j < model.dim_x; ++j) {
      data.x(i, j) = spec.x_mean + spec.x_sd * laws::normal_quantile(rng.uniform());
    }
  }
  for (int i = 0; i < spec.n; ++i) eps[i] = sample_error(spec.error_law, rng);
  for (int i = 1; i <= spec.n; ++i) {
    const VectorXd& phi = spec.true_phis[spec.segment_of(i) - 1];
    data.y[i - 1] = model.eval(data.x.row(i - 1).transpose(), phi) + eps[i - 1];
  }
  return {std::move(data), std::move(eps)};
}

VectorXd true_phi_tau(const ScenarioSpec& spec, const RegressionModel& model,
                      int r) {
  if (r < 1 || r > spec.k() + 1) {
    throw std::invalid_argument("segment index out of range");
  }
  VectorXd phi = spec.true_phis[r - 1];
  if (model.intercept_coord && spec.error_law != ErrorLaw::none) {
    phi[*model.intercept_coord] += error_quantile(spec.error_law, spec.tau);
  }
  return phi;
}

const MethodSeries& McReport::for_method(Method m) const {
  for (const auto& s : series) {
    if (s.method == m) return s;
  }
  throw std::invalid_argument("method not present in report");
}

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void summarize_series(MethodSeries& s) {
  s.break_medians.clear();
  s.phi_means.clear();
  s.phi_sds.clear();
  s.selection_freqs.clear();
  s.excluded_count = 0;

  std::vector<const RepOutcome*> ok;
  for (const auto& rep : s.per_rep) {
    if (rep.excluded) {
      ++s.excluded_count;
    } else {
      ok.push_back(&rep);
    }
  }
  s.flagged = s.excluded_count * 20 >= static_cast<int>(s.per_rep.size()) &&
              s.excluded_count > 0;
  if (ok.empty()) return;

  for (const auto* rep : ok) {
    if (rep->k_hat) s.selection_freqs[*rep->k_hat] += 1;
  }

  const int k = static_cast<int>(ok.front()->fit.breaks.size());
  bool uniform_k = true;
  for (const auto* rep : ok) {
    if (static_cast<int>(rep->fit.breaks.size()) != k) uniform_k = false;
  }
  if (!uniform_k) return;  // selection study with mixed k: frequencies only

  for (int r = 0; r < k; ++r) {
    std::vector<double> v;
    v.reserve(ok.size());
    for (const auto* rep : ok) v.push_back(rep->fit.breaks[r]);
    s.break_medians.push_back(median_of(std::move(v)));
  }
  const int p = static_cast<int>(ok.front()->fit.phis.front().size());
  for (int r = 0; r <= k; ++r) {
    VectorXd mean = VectorXd::Zero(p);
    for (const auto* rep : ok) mean += rep->fit.phis[r];
    mean /= static_cast<double>(ok.size());
    VectorXd sd = VectorXd::Zero(p);
    if (ok.size() > 1) {
      for (const auto* rep : ok) {
        VectorXd d = rep->fit.phis[r] - mean;
        sd += d.cwiseProduct(d);
      }
      sd /= static_cast<double>(ok.size() - 1);
      sd = sd.cwiseSqrt();
    }
    s.phi_means.push_back(std::move(mean));
    s.phi_sds.push_back(std::move(sd));
  }
}

namespace {

McReport run_study(const ScenarioSpec& spec, int n_reps, bool selection,
                   int fixed_k, const SelectionConfig& sel,
                   const std::vector<Method>& methods,
                   const SegmentationConstraints& constraints,
                   const FitConfig& config, int threads) {
  if (n_reps < 1) throw std::invalid_argument("n_reps must be >= 1");
  if (methods.empty()) throw std::invalid_argument("no methods requested");
  RegressionModel model = make_model(spec.model, 1);
  spec.validate(model);

  McReport report;
  report.spec = spec;
  report.n_reps = n_reps;
  report.k = selection ? sel.k_max : fixed_k;
  report.selection_study = selection;
  report.series.resize(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    report.series[m].method = methods[m];
    report.series[m].per_rep.resize(n_reps);
  }

  parallel_for(n_reps, threads, [&](int rep) {
    ScenarioSpec rep_spec = spec;
    rep_spec.seed = spec.seed + static_cast<std::uint64_t>(rep);
    auto [data, eps] = generate(rep_spec);
    FitConfig rep_config = config;
    rep_config.seed = Rng::stream_seed(spec.seed, 0x5eedc0de, rep);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      RepOutcome& out = report.series[m].per_rep[rep];
      try {
        if (selection) {
          SelectionResult res =
              methods[m] == Method::quantile
                  ? select_k_quantile(model, data, QuantileLevel(spec.tau), sel,
                                      constraints, rep_config, 1)
                  : select_k_ls(model, data, sel, constraints, rep_config, 1);
          out.k_hat = res.k_hat;
          out.criterion = res.criterion;
          out.fit = res.fits.at(res.k_hat);
        } else {
          out.fit = methods[m] == Method::quantile
                        ? fit_k_changepoints(model, data, fixed_k,
                                             QuantileLevel(spec.tau),
                                             constraints, rep_config, 1)
                        : fit_k_changepoints_ls(model, data, fixed_k,
                                                constraints, rep_config, 1);
        }
      } catch (const OptimizerError& e) {
        out.excluded = true;
        out.error = e.what();
      } catch (const std::runtime_error& e) {
        out.excluded = true;
        out.error = e.what();
      }
    }
  });

  for (auto& s : report.series) summarize_series(s);
  return report;
}

}  // namespace

McReport run_table_study(const ScenarioSpec& spec, int n_reps, int k,
                         const std::vector<Method>& methods,
                         const SegmentationConstraints& constraints,
                         const FitConfig& config, int threads) {
  SelectionConfig unused;
  return run_study(spec, n_reps, false, k, unused, methods, constraints, config,
                   threads);
}

McReport run_selection_study(const ScenarioSpec& spec, int n_reps,
                             const SelectionConfig& sel,
                             const std::vector<Method>& methods,
                             const SegmentationConstraints& constraints,
                             const FitConfig& config, int threads) {
  return run_study(spec, n_reps, true, 0, sel, methods, constraints, config,
                   threads);
}

}  // namespace cpquant
