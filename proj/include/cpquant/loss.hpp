#pragma once

#include <Eigen/Dense>

#include "cpquant/model.hpp"

namespace cpquant {

// Closed 1-based index interval of observations; the segment covering
// observations first..last inclusive.
struct IndexRange {
  int first = 1;
  int last = 0;

  int len() const { return last - first + 1; }
  static IndexRange whole(const Dataset& data) { return {1, data.n()}; }
};

// Check loss rho_tau(u) = u * (tau - 1{u <= 0}).
inline double check_loss(double u, double tau) {
  return u * (tau - (u <= 0.0 ? 1.0 : 0.0));
}

double check_loss(double u, const QuantileLevel& tau);

// Residuals y_i - g(x_i, phi) over a segment, vectorized when the model
// supports it.
void segment_residuals(const RegressionModel& model, const Dataset& data,
                       const IndexRange& range, const VectorXd& phi,
                       VectorXd& out);

// Sum of check losses over the segment. Throws on an empty segment.
double total_loss(const RegressionModel& model, const Dataset& data,
                  const VectorXd& phi, const QuantileLevel& tau,
                  const IndexRange& range);

// Sum of squared residuals over the segment. Throws on an empty segment.
double total_squared_loss(const RegressionModel& model, const Dataset& data,
                          const VectorXd& phi, const IndexRange& range);

// Decomposition of the loss-difference process at (phi, phi0) under known
// error draws: g_total = w + z with z >= 0. Simulation/verification only.
struct KnightTerms {
  double w = 0.0;        // -sum_i D_i(tau) h_i(phi)
  double z = 0.0;        // sum_i int_0^{h_i} (1{eps<=s} - 1{eps<=0}) ds
  double g_total = 0.0;  // sum_i rho_tau(eps_i - h_i) - rho_tau(eps_i)
};

KnightTerms knight_terms(const RegressionModel& model, const Dataset& data,
                         const VectorXd& phi, const VectorXd& phi0,
                         const QuantileLevel& tau, const VectorXd& epsilons);

// Check loss with the kink replaced by a C^2 quartic ramp on [-h, h]; equals
// the exact loss outside the band.
double smoothed_check_loss(double u, double tau, double h);
double smoothed_check_loss_deriv(double u, double tau, double h);

// Smoothed total loss and its gradient in phi over a segment.
double smoothed_total_loss(const RegressionModel& model, const Dataset& data,
                           const VectorXd& phi, double tau,
                           const IndexRange& range, double h,
                           VectorXd* grad_out = nullptr);

}  // namespace cpquant
