#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cpquant/loss.hpp"
#include "cpquant/model.hpp"

namespace cpquant {

struct FitConfig {
  int n_multistart = 8;
  int max_iters = 500;
  // Smoothing half-width for the gradient refinement step. Unset means the
  // data-driven default 0.5 * len^{-1/2} * robust residual scale.
  std::optional<double> smooth_h;
  std::uint64_t seed = 0;
  double convergence_tol = 1e-8;

  void validate() const;
};

struct SegmentFit {
  VectorXd phi_hat;
  double loss = 0.0;
  long n_evals = 0;
  bool converged = false;
};

// Thrown when no search direction produced a finite loss; carries the best
// point seen so far.
struct OptimizerError : std::runtime_error {
  SegmentFit best;
  OptimizerError(const std::string& msg, SegmentFit b)
      : std::runtime_error(msg), best(std::move(b)) {}
};

// Extra start points, used by the segment-cost cache to chain fits along a
// row. warm_only skips the LS warm start and the random multistart; skip_ls
// marks that starts already contain a least-squares warm start.
struct FitHints {
  std::vector<VectorXd> starts;
  bool warm_only = false;
  bool skip_ls = false;
};

// Check-loss minimization over one segment: LS warm start, multistart
// Nelder-Mead on the exact loss, then quasi-Newton refinement on the smoothed
// loss accepted only when the exact loss decreases.
SegmentFit fit_quantile(const RegressionModel& model, const Dataset& data,
                        const IndexRange& range, const QuantileLevel& tau,
                        const FitConfig& config,
                        const FitHints* hints = nullptr);

// Squared-loss counterpart: Levenberg-Marquardt with multistart fallback.
SegmentFit fit_ls(const RegressionModel& model, const Dataset& data,
                  const IndexRange& range, const FitConfig& config,
                  const FitHints* hints = nullptr);

// Error density at zero, estimated by a Gaussian kernel with Silverman's
// bandwidth on segment residuals.
struct SparsityEstimate {
  double f0_hat = 0.0;
  double bandwidth = 0.0;
};

SparsityEstimate estimate_f0(const VectorXd& residuals,
                             const QuantileLevel& tau);

// Estimator covariance implied by the limit law:
// [tau(1-tau)/f0^2] * Sigma_r^{-1} / segment length, with
// Sigma_r = len^{-1} sum g'(X_i, phi) g'(X_i, phi)^t over the segment.
MatrixXd asymptotic_cov(const RegressionModel& model, const Dataset& data,
                        const IndexRange& range, const VectorXd& phi_hat,
                        const SparsityEstimate& f0, const QuantileLevel& tau);

// Design moment matrix Sigma_r alone (exposed for the asymptotics checks).
MatrixXd design_moment(const RegressionModel& model, const Dataset& data,
                       const IndexRange& range, const VectorXd& phi);

namespace detail {

// Same search pipeline as fit_quantile with an arbitrary per-residual loss;
// smoothing hooks are optional.
struct CustomLoss {
  std::function<double(double)> rho;
  std::function<double(double, double)> rho_smooth;        // (u, h)
  std::function<double(double, double)> rho_smooth_deriv;  // (u, h)
};

SegmentFit fit_custom(const RegressionModel& model, const Dataset& data,
                      const IndexRange& range, const CustomLoss& loss,
                      const FitConfig& config, const FitHints* hints = nullptr);

bool lex_less(const VectorXd& a, const VectorXd& b);

}  // namespace detail

}  // namespace cpquant
