#include "cpquant/limitlaw.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cpquant/parallel.hpp"

namespace cpquant {

LimitProcessSample sample_z_process(const RegressionModel& model,
                                    const ScenarioSpec& spec, int r, int J,
                                    Rng& rng) {
  if (J < 1) throw std::invalid_argument("J must be >= 1");
  if (r < 1 || r > spec.k()) {
    throw std::invalid_argument("break index out of range");
  }
  const double tau = spec.tau;
  // Recenter errors so their tau-quantile is zero; the quantile shift moves
  // into the intercept and cancels in the g-differences below.
  const double q_shift = spec.error_law == ErrorLaw::none
                             ? 0.0
                             : error_quantile(spec.error_law, tau);
  const VectorXd& phi_l = spec.true_phis[r - 1];  // segment r
  const VectorXd& phi_r = spec.true_phis[r];      // segment r + 1

  LimitProcessSample out;
  out.J = J;
  out.z.assign(2 * J + 1, 0.0);
  out.x_right.resize(J, model.dim_x);
  out.x_left.resize(J, model.dim_x);
  out.eps_right.resize(J);
  out.eps_left.resize(J);
  VectorXd x(model.dim_x);
  // Right side first, then left, in a fixed draw order.
  double acc = 0.0;
  for (int j = 1; j <= J; ++j) {
    for (int d = 0; d < model.dim_x; ++d) {
      x[d] = spec.x_mean + spec.x_sd * laws::normal_quantile(rng.uniform());
    }
    double eps = sample_error(spec.error_law, rng) - q_shift;
    out.x_right.row(j - 1) = x.transpose();
    out.eps_right[j - 1] = eps;
    double delta = model.eval(x, phi_l) - model.eval(x, phi_r);
    acc += check_loss(eps - delta, tau) - check_loss(eps, tau);
    out.z[static_cast<std::size_t>(J + j)] = acc;
  }
  acc = 0.0;
  for (int j = 1; j <= J; ++j) {
    for (int d = 0; d < model.dim_x; ++d) {
      x[d] = spec.x_mean + spec.x_sd * laws::normal_quantile(rng.uniform());
    }
    double eps = sample_error(spec.error_law, rng) - q_shift;
    out.x_left.row(j - 1) = x.transpose();
    out.eps_left[j - 1] = eps;
    double delta = model.eval(x, phi_r) - model.eval(x, phi_l);
    acc += check_loss(eps - delta, tau) - check_loss(eps, tau);
    out.z[static_cast<std::size_t>(J - j)] = acc;
  }

  // Argmin with ties to the smallest |j|, negative before positive.
  int best_j = 0;
  double best = 0.0;
  for (int a = 1; a <= J; ++a) {
    for (int j : {-a, a}) {
      double value = out.at(j);
      if (value < best) {
        best = value;
        best_j = j;
      }
    }
  }
  out.argmin_j = best_j;
  return out;
}

LimitLawPmf sample_limit_law(const RegressionModel& model,
                             const ScenarioSpec& spec, int r, int J,
                             long n_draws, int threads) {
  if (n_draws < 1) throw std::invalid_argument("n_draws must be >= 1");
  std::vector<int> argmins(static_cast<std::size_t>(n_draws));
  parallel_for(static_cast<int>(n_draws), threads, [&](int d) {
    Rng rng(Rng::stream_seed(spec.seed, 0x11aa2bb3, r, d));
    argmins[static_cast<std::size_t>(d)] =
        sample_z_process(model, spec, r, J, rng).argmin_j;
  });
  LimitLawPmf pmf;
  pmf.J = J;
  pmf.n_draws = n_draws;
  pmf.probs.assign(2 * J + 1, 0.0);
  for (int j : argmins) pmf.probs[static_cast<std::size_t>(j + J)] += 1.0;
  for (auto& p : pmf.probs) p /= static_cast<double>(n_draws);
  return pmf;
}

LimitLawPmf empirical_break_pmf(const McReport& mc, Method method, int r,
                                int J) {
  if (r < 1 || r > mc.spec.k()) {
    throw std::invalid_argument("break index out of range");
  }
  const MethodSeries& s = mc.for_method(method);
  LimitLawPmf pmf;
  pmf.J = J;
  pmf.probs.assign(2 * J + 1, 0.0);
  long used = 0;
  double outside = 0.0;
  for (const auto& rep : s.per_rep) {
    if (rep.excluded) continue;
    if (static_cast<int>(rep.fit.breaks.size()) < r) continue;
    int err = rep.fit.breaks[r - 1] - mc.spec.true_breaks[r - 1];
    ++used;
    if (err < -J || err > J) {
      outside += 1.0;
    } else {
      pmf.probs[static_cast<std::size_t>(err + J)] += 1.0;
    }
  }
  if (used == 0) throw std::runtime_error("no usable replications");
  for (auto& p : pmf.probs) p /= static_cast<double>(used);
  pmf.outside_mass = outside / static_cast<double>(used);
  pmf.n_draws = used;
  return pmf;
}

BreakLawComparison compare_break_law(const LimitLawPmf& empirical,
                                     const LimitLawPmf& limit) {
  if (empirical.J != limit.J) {
    throw std::invalid_argument("pmf grids differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < empirical.probs.size(); ++i) {
    sum += std::abs(empirical.probs[i] - limit.probs[i]);
  }
  sum += std::abs(empirical.outside_mass - limit.outside_mass);
  BreakLawComparison out;
  out.tv_distance = 0.5 * sum;
  out.outside_mass = empirical.outside_mass;
  out.flagged = empirical.outside_mass > 0.2;
  return out;
}

BreakLawComparison compare_break_law(const McReport& mc, Method method,
                                     const LimitLawPmf& limit, int r) {
  return compare_break_law(empirical_break_pmf(mc, method, r, limit.J), limit);
}

double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - f);
    d = std::max(d, f - static_cast<double>(i) / n);
  }
  return d;
}

NormalityCheck normality_from_standardized(const MatrixXd& standardized) {
  NormalityCheck out;
  out.standardized = standardized;
  out.n_used = static_cast<int>(standardized.rows());
  const int p = static_cast<int>(standardized.cols());
  if (out.n_used < 2) throw std::invalid_argument("need at least 2 rows");
  out.ks_per_coord.resize(p);
  for (int j = 0; j < p; ++j) {
    std::vector<double> col(standardized.col(j).data(),
                            standardized.col(j).data() + out.n_used);
    out.ks_per_coord[j] = ks_statistic(std::move(col), laws::normal_cdf);
  }
  VectorXd mean = standardized.colwise().mean();
  MatrixXd centered = standardized.rowwise() - mean.transpose();
  MatrixXd cov = centered.transpose() * centered /
                 static_cast<double>(out.n_used - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov - MatrixXd::Identity(p, p));
  out.cov_error = es.eigenvalues().cwiseAbs().maxCoeff();
  return out;
}

NormalityCheck check_normality(const McReport& mc, const RegressionModel& model,
                               const ScenarioSpec& spec, int r,
                               F0Policy policy) {
  if (r < 1 || r > spec.k() + 1) {
    throw std::invalid_argument("segment index out of range");
  }
  const MethodSeries& s = mc.for_method(Method::quantile);
  const int p = model.dim_phi;
  const VectorXd target = true_phi_tau(spec, model, r);

  std::vector<VectorXd> rows;
  rows.reserve(s.per_rep.size());
  const double tau = spec.tau;
  for (int rep = 0; rep < static_cast<int>(s.per_rep.size()); ++rep) {
    const RepOutcome& out_rep = s.per_rep[rep];
    if (out_rep.excluded) continue;
    if (static_cast<int>(out_rep.fit.phis.size()) != spec.k() + 1) continue;

    ScenarioSpec rep_spec = spec;
    rep_spec.seed = spec.seed + static_cast<std::uint64_t>(rep);
    auto [data, eps] = generate(rep_spec);

    // True segment bounds (est_param_chp convention).
    int true_lo = (r == 1) ? 1 : spec.true_breaks[r - 2] + 1;
    int true_hi = (r == spec.k() + 1) ? spec.n : spec.true_breaks[r - 1];
    MatrixXd sigma = design_moment(model, data, {true_lo, true_hi},
                                   spec.true_phis[r - 1]);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      throw std::runtime_error("degenerate design");
    }
    MatrixXd sqrt_sigma = es.operatorSqrt();

    int hat_lo = (r == 1) ? 1 : out_rep.fit.breaks[r - 2] + 1;
    int hat_hi =
        (r == spec.k() + 1) ? spec.n : out_rep.fit.breaks[r - 1];
    double len = hat_hi - hat_lo + 1;

    double f0;
    if (policy == F0Policy::true_density) {
      double q = error_quantile(spec.error_law, tau);
      f0 = error_pdf(spec.error_law, q);
    } else {
      VectorXd resid;
      segment_residuals(model, data, {hat_lo, hat_hi}, out_rep.fit.phis[r - 1],
                        resid);
      f0 = estimate_f0(resid, QuantileLevel(tau)).f0_hat;
    }

    VectorXd v = std::sqrt(len) * (sqrt_sigma * (out_rep.fit.phis[r - 1] - target)) *
                 f0 / std::sqrt(tau * (1.0 - tau));
    rows.push_back(std::move(v));
  }
  if (rows.size() < 2) throw std::runtime_error("no usable replications");
  MatrixXd standardized(static_cast<int>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    standardized.row(static_cast<int>(i)) = rows[i].transpose();
  }
  return normality_from_standardized(standardized);
}

}  // namespace cpquant
