#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpquant/laws.hpp"
#include "cpquant/selection.hpp"

namespace cpquant {

enum class Method { quantile, least_squares };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Multi-phase data-generating design: segment r covers observations
// true_breaks[r-1]+1 .. true_breaks[r] and carries true_phis[r-1].
struct ScenarioSpec {
  int n = 0;
  std::vector<int> true_breaks;
  std::vector<VectorXd> true_phis;
  ErrorLaw error_law = ErrorLaw::normal;
  double x_mean = 1.0;
  double x_sd = 1.0;
  std::string model = "mono_molecular";
  double tau = 0.5;
  std::uint64_t seed = 0;

  int k() const { return static_cast<int>(true_breaks.size()); }
  void validate(const RegressionModel& m) const;
  // Segment index (1-based) holding observation i.
  int segment_of(int i) const;
};

// Draws X ~ N(x_mean, x_sd^2) then errors, assembles Y by segment
// membership. Returns the error draws for verification utilities.
std::pair<Dataset, VectorXd> generate(const ScenarioSpec& spec);

// The tau-quantile regression target for segment r (1-based): the true
// parameter with the error quantile absorbed into the intercept coordinate.
VectorXd true_phi_tau(const ScenarioSpec& spec, const RegressionModel& model,
                      int r);

struct RepOutcome {
  bool excluded = false;
  std::string error;
  SegmentedFit fit;  // at fixed k, or at k_hat in a selection study
  std::optional<int> k_hat;
  std::map<int, double> criterion;
};

struct MethodSeries {
  Method method = Method::quantile;
  std::vector<RepOutcome> per_rep;
  std::vector<double> break_medians;
  std::vector<VectorXd> phi_means;
  std::vector<VectorXd> phi_sds;
  std::map<int, int> selection_freqs;
  int excluded_count = 0;
  bool flagged = false;  // more than 5% of replications excluded
};

struct McReport {
  ScenarioSpec spec;
  int n_reps = 0;
  int k = 0;  // fitted change-point count (table study)
  bool selection_study = false;
  std::vector<MethodSeries> series;

  const MethodSeries& for_method(Method m) const;
};

// Recomputes the summary block of a series from its per-replication records.
void summarize_series(MethodSeries& s);

// Monte Carlo study at a fixed change-point count; replication r uses seed
// spec.seed + r so any replication is reproducible in isolation.
McReport run_table_study(const ScenarioSpec& spec, int n_reps, int k,
                         const std::vector<Method>& methods,
                         const SegmentationConstraints& constraints,
                         const FitConfig& config, int threads = 1);

// Monte Carlo study selecting the change-point count per replication.
McReport run_selection_study(const ScenarioSpec& spec, int n_reps,
                             const SelectionConfig& sel,
                             const std::vector<Method>& methods,
                             const SegmentationConstraints& constraints,
                             const FitConfig& config, int threads = 1);

}  // namespace cpquant
