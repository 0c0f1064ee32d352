#include "cpquant/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace cpquant {

double check_loss(double u, const QuantileLevel& tau) {
  return check_loss(u, tau.tau());
}

void segment_residuals(const RegressionModel& model, const Dataset& data,
                       const IndexRange& range, const VectorXd& phi,
                       VectorXd& out) {
  if (range.len() <= 0) throw std::invalid_argument("empty segment");
  if (range.first < 1 || range.last > data.n()) {
    throw std::invalid_argument("segment range outside 1..n");
  }
  const int row0 = range.first - 1;
  const int len = range.len();
  model.predict(data.x, row0, len, phi, out);
  out = data.y.segment(row0, len) - out;
}

double total_loss(const RegressionModel& model, const Dataset& data,
                  const VectorXd& phi, const QuantileLevel& tau,
                  const IndexRange& range) {
  VectorXd r;
  segment_residuals(model, data, range, phi, r);
  const double t = tau.tau();
  double s = 0.0;
  for (int i = 0; i < r.size(); ++i) s += check_loss(r[i], t);
  return s;
}

double total_squared_loss(const RegressionModel& model, const Dataset& data,
                          const VectorXd& phi, const IndexRange& range) {
  VectorXd r;
  segment_residuals(model, data, range, phi, r);
  return r.squaredNorm();
}

KnightTerms knight_terms(const RegressionModel& model, const Dataset& data,
                         const VectorXd& phi, const VectorXd& phi0,
                         const QuantileLevel& tau, const VectorXd& epsilons) {
  if (epsilons.size() != data.n()) {
    throw std::invalid_argument("epsilons length does not match dataset");
  }
  const double t = tau.tau();
  VectorXd g_phi, g_phi0;
  model.predict(data.x, 0, data.n(), phi, g_phi);
  model.predict(data.x, 0, data.n(), phi0, g_phi0);

  KnightTerms out;
  for (int i = 0; i < data.n(); ++i) {
    const double h = g_phi[i] - g_phi0[i];
    const double e = epsilons[i];
    const double d = t - (e <= 0.0 ? 1.0 : 0.0);
    out.w -= d * h;
    if (h >= 0.0) {
      if (e >= 0.0 && e <= h) out.z += h - e;
    } else {
      if (e >= h && e <= 0.0) out.z += e - h;
    }
    out.g_total += check_loss(e - h, t) - check_loss(e, t);
  }
  return out;
}

double smoothed_check_loss(double u, double tau, double h) {
  if (std::abs(u) >= h) return check_loss(u, tau);
  const double u2 = u * u;
  const double q = 0.375 * h + 0.75 * u2 / h - 0.125 * u2 * u2 / (h * h * h);
  return (tau - 0.5) * u + 0.5 * q;
}

double smoothed_check_loss_deriv(double u, double tau, double h) {
  if (u >= h) return tau;
  if (u <= -h) return tau - 1.0;
  return (tau - 0.5) + 0.75 * u / h - 0.25 * u * u * u / (h * h * h);
}

double smoothed_total_loss(const RegressionModel& model, const Dataset& data,
                           const VectorXd& phi, double tau,
                           const IndexRange& range, double h,
                           VectorXd* grad_out) {
  VectorXd r;
  segment_residuals(model, data, range, phi, r);
  double s = 0.0;
  if (grad_out) grad_out->setZero(model.dim_phi);
  for (int i = 0; i < r.size(); ++i) {
    s += smoothed_check_loss(r[i], tau, h);
    if (grad_out) {
      const VectorXd gi =
          model.grad(data.x.row(range.first - 1 + i).transpose(), phi);
      *grad_out -= smoothed_check_loss_deriv(r[i], tau, h) * gi;
    }
  }
  return s;
}

}  // namespace cpquant
