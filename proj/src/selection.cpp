#include "cpquant/selection.hpp"

#include <cmath>
#include <limits>

namespace cpquant {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogFloor = 1e-12;
}  // namespace

void SelectionConfig::validate() const {
  if (k_max < 0) throw std::invalid_argument("k_max must be >= 0");
  if (!(b_n_exponent > 0.5 && b_n_exponent < 1.0)) {
    throw std::invalid_argument("b_n_exponent must lie in (1/2, 1)");
  }
}

double SelectionConfig::penalty_at(int k, int p) const {
  if (penalty) return penalty(k, p);
  (void)p;
  return static_cast<double>(k);
}

namespace {

SelectionResult select_impl(const RegressionModel& model, const Dataset& data,
                            Objective objective, double tau,
                            const SelectionConfig& sel,
                            const SegmentationConstraints& constraints,
                            const FitConfig& config, int threads) {
  sel.validate();
  data.validate();
  const int n = data.n();
  const double b_n = std::pow(static_cast<double>(n), sel.b_n_exponent);

  SegmentCostCache cache(model, data, objective, tau, constraints.grid_step,
                         config);
  SelectionResult out;
  for (int k = 0; k <= sel.k_max; ++k) {
    SegmentedFit fit;
    try {
      fit = objective == Objective::quantile
                ? fit_k_changepoints(model, data, k, QuantileLevel(tau),
                                     constraints, config, threads, &cache)
                : fit_k_changepoints_ls(model, data, k, constraints, config,
                                        threads, &cache);
    } catch (const std::invalid_argument&) {
      out.criterion[k] = kInf;  // infeasible for this n and min_len
      continue;
    }
    double avg = fit.total_loss / n;
    if (avg < kLogFloor) {
      avg = kLogFloor;
      out.zero_loss_flagged = true;
    }
    out.criterion[k] =
        n * std::log(avg) + sel.penalty_at(k, model.dim_phi) * b_n;
    out.fits.emplace(k, std::move(fit));
  }

  double best = kInf;
  int k_hat = 0;
  bool found = false;
  for (const auto& [k, value] : out.criterion) {
    if (std::isfinite(value) && value < best) {
      best = value;
      k_hat = k;
      found = true;
    }
  }
  if (!found) throw std::runtime_error("no feasible change-point count");
  out.k_hat = k_hat;
  return out;
}

}  // namespace

SelectionResult select_k_quantile(const RegressionModel& model,
                                  const Dataset& data, const QuantileLevel& tau,
                                  const SelectionConfig& sel,
                                  const SegmentationConstraints& constraints,
                                  const FitConfig& config, int threads) {
  return select_impl(model, data, Objective::quantile, tau.tau(), sel,
                     constraints, config, threads);
}

SelectionResult select_k_ls(const RegressionModel& model, const Dataset& data,
                            const SelectionConfig& sel,
                            const SegmentationConstraints& constraints,
                            const FitConfig& config, int threads) {
  return select_impl(model, data, Objective::least_squares, 0.5, sel,
                     constraints, config, threads);
}

}  // namespace cpquant
