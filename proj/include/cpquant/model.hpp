#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cpquant {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Quantile index tau in (0,1).
class QuantileLevel {
public:
  explicit QuantileLevel(double tau);
  double tau() const { return tau_; }

private:
  double tau_;
};

// Closed coordinate box realizing the compact parameter set.
struct ParamBox {
  VectorXd lo;
  VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const VectorXd& phi, double slack = 0.0) const;
  VectorXd clamp(const VectorXd& phi) const;
  VectorXd midpoint() const { return 0.5 * (lo + hi); }
};

// A parametric regression family g(x, phi) with gradient, optional Hessian
// and parameter bounds.
struct RegressionModel {
  std::string name;
  int dim_x = 0;    // d
  int dim_phi = 0;  // p
  std::function<double(const VectorXd& x, const VectorXd& phi)> eval;
  std::function<VectorXd(const VectorXd& x, const VectorXd& phi)> grad;
  std::function<MatrixXd(const VectorXd& x, const VectorXd& phi)> hess;  // optional
  ParamBox bounds;
  // Index of a coordinate entering g additively (dg/dphi_j == 1), if any.
  // Such a coordinate absorbs the error quantile shift at tau != 1/2.
  std::optional<int> intercept_coord;
  // Optional vectorized evaluation over rows [row0, row0+len) of X.
  std::function<void(const MatrixXd& X, int row0, int len, const VectorXd& phi,
                     VectorXd& out)>
      eval_batch;

  // g(X_i, phi) for i in the half-open 0-based row range [row0, row0+len),
  // using eval_batch when registered.
  void predict(const MatrixXd& X, int row0, int len, const VectorXd& phi,
               VectorXd& out) const;
};

// Growth curve g(x, (b1, b2)) = b1 - exp(-b2 * x) with analytic gradient and
// Hessian; bounds [-50, 50]^2.
RegressionModel mono_molecular();

// Affine g(x, phi) = phi_0 + phi_1 x_1 + ... + phi_d x_d.
RegressionModel linear_model(int dim_x);

// Registry keyed by name ("mono_molecular", "linear").
RegressionModel make_model(const std::string& name, int dim_x);
std::vector<std::string> registered_models();

// Observations (X_i, Y_i), i = 1..n; the row index is the observation time
// used for change-points.
struct Dataset {
  MatrixXd x;  // n x d
  VectorXd y;  // n

  int n() const { return static_cast<int>(y.size()); }
  int dim_x() const { return static_cast<int>(x.cols()); }
  void validate() const;  // n >= 1, shapes agree, all entries finite
};

}  // namespace cpquant
