#pragma once

#include <functional>
#include <vector>

#include "cpquant/simulate.hpp"

namespace cpquant {

// One realization of the two-sided loss-difference process around a break,
// evaluated on the integer grid [-J, J]; z(0) = 0 always. The draws behind
// each increment are kept so the telescoping structure is checkable.
struct LimitProcessSample {
  int J = 0;
  std::vector<double> z;  // index j + J
  int argmin_j = 0;
  MatrixXd x_right, x_left;      // J x d, row j-1 feeds step j
  VectorXd eps_right, eps_left;  // recentered error draws

  double at(int j) const { return z[static_cast<std::size_t>(j + J)]; }
};

// Empirical pmf of the argmin over the grid [-J, J].
struct LimitLawPmf {
  int J = 0;
  std::vector<double> probs;  // size 2J + 1, index j + J
  long n_draws = 0;
  double outside_mass = 0.0;  // mass beyond the grid (empirical side)

  double at(int j) const { return probs[static_cast<std::size_t>(j + J)]; }
};

// Simulates the loss-difference process for break r (1-based) with fresh
// (X, eps) draws; argmin ties go to the smallest |j|, negative before
// positive.
LimitProcessSample sample_z_process(const RegressionModel& model,
                                    const ScenarioSpec& spec, int r, int J,
                                    Rng& rng);

// Empirical argmin law from n_draws independent process realizations.
LimitLawPmf sample_limit_law(const RegressionModel& model,
                             const ScenarioSpec& spec, int r, int J,
                             long n_draws, int threads = 1);

// Empirical pmf of (break estimate - true break) from a Monte Carlo report,
// truncated to [-J, J] with outside mass tracked.
LimitLawPmf empirical_break_pmf(const McReport& mc, Method method, int r, int J);

struct BreakLawComparison {
  double tv_distance = 0.0;
  double outside_mass = 0.0;
  bool flagged = false;  // outside mass exceeded 0.2
};

// Total-variation distance between two argmin pmfs on the same grid; any
// off-grid mass is lumped into one extra bin.
BreakLawComparison compare_break_law(const LimitLawPmf& empirical,
                                     const LimitLawPmf& limit);
BreakLawComparison compare_break_law(const McReport& mc, Method method,
                                     const LimitLawPmf& limit, int r);

enum class F0Policy { true_density, estimated };

struct NormalityCheck {
  MatrixXd standardized;  // one row per usable replication, p columns
  VectorXd ks_per_coord;
  double cov_error = 0.0;  // operator-norm deviation of covariance from I
  int n_used = 0;
};

// Standardizes per-replication parameter estimates for segment r (1-based)
// with the design moment at true parameters on the true segment, then runs
// per-coordinate KS checks against the standard normal.
NormalityCheck check_normality(const McReport& mc, const RegressionModel& model,
                               const ScenarioSpec& spec, int r,
                               F0Policy policy);

// The KS/covariance stage alone (pipeline identity checks).
NormalityCheck normality_from_standardized(const MatrixXd& standardized);

// sup_x |F_emp(x) - cdf(x)| for a sample.
double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf);

}  // namespace cpquant
