#include "cpquant/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cpquant {

QuantileLevel::QuantileLevel(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("quantile index must satisfy 0 < tau < 1");
  }
}

bool ParamBox::contains(const VectorXd& phi, double slack) const {
  if (phi.size() != lo.size()) return false;
  for (int j = 0; j < phi.size(); ++j) {
    if (phi[j] < lo[j] - slack || phi[j] > hi[j] + slack) return false;
  }
  return true;
}

VectorXd ParamBox::clamp(const VectorXd& phi) const {
  return phi.cwiseMax(lo).cwiseMin(hi);
}

void RegressionModel::predict(const MatrixXd& X, int row0, int len,
                              const VectorXd& phi, VectorXd& out) const {
  out.resize(len);
  if (eval_batch) {
    eval_batch(X, row0, len, phi, out);
    return;
  }
  for (int i = 0; i < len; ++i) {
    out[i] = eval(X.row(row0 + i).transpose(), phi);
  }
}

RegressionModel mono_molecular() {
  RegressionModel m;
  m.name = "mono_molecular";
  m.dim_x = 1;
  m.dim_phi = 2;
  m.eval = [](const VectorXd& x, const VectorXd& phi) {
    return phi[0] - std::exp(-phi[1] * x[0]);
  };
  m.grad = [](const VectorXd& x, const VectorXd& phi) {
    VectorXd g(2);
    g[0] = 1.0;
    g[1] = x[0] * std::exp(-phi[1] * x[0]);
    return g;
  };
  m.hess = [](const VectorXd& x, const VectorXd& phi) {
    MatrixXd h = MatrixXd::Zero(2, 2);
    h(1, 1) = -x[0] * x[0] * std::exp(-phi[1] * x[0]);
    return h;
  };
  m.bounds.lo = VectorXd::Constant(2, -50.0);
  m.bounds.hi = VectorXd::Constant(2, 50.0);
  m.intercept_coord = 0;
  m.eval_batch = [](const MatrixXd& X, int row0, int len, const VectorXd& phi,
                    VectorXd& out) {
    out.array() = phi[0] - (-phi[1] * X.col(0).segment(row0, len).array()).exp();
  };
  return m;
}

RegressionModel linear_model(int dim_x) {
  if (dim_x < 1) throw std::invalid_argument("linear model needs dim_x >= 1");
  RegressionModel m;
  m.name = "linear";
  m.dim_x = dim_x;
  m.dim_phi = dim_x + 1;
  m.eval = [](const VectorXd& x, const VectorXd& phi) {
    return phi[0] + x.dot(phi.tail(phi.size() - 1));
  };
  m.grad = [](const VectorXd& x, const VectorXd& phi) {
    VectorXd g(phi.size());
    g[0] = 1.0;
    g.tail(x.size()) = x;
    return g;
  };
  m.hess = [](const VectorXd& x, const VectorXd& phi) {
    (void)x;
    return MatrixXd::Zero(phi.size(), phi.size()).eval();
  };
  m.bounds.lo = VectorXd::Constant(dim_x + 1, -1e6);
  m.bounds.hi = VectorXd::Constant(dim_x + 1, 1e6);
  m.intercept_coord = 0;
  m.eval_batch = [](const MatrixXd& X, int row0, int len, const VectorXd& phi,
                    VectorXd& out) {
    out = (X.middleRows(row0, len) * phi.tail(phi.size() - 1)).array() + phi[0];
  };
  return m;
}

RegressionModel make_model(const std::string& name, int dim_x) {
  if (name == "mono_molecular") {
    if (dim_x != 1) {
      throw std::invalid_argument("mono_molecular model requires dim_x = 1");
    }
    return mono_molecular();
  }
  if (name == "linear") return linear_model(dim_x);
  throw std::invalid_argument("unknown model: " + name);
}

std::vector<std::string> registered_models() {
  return {"mono_molecular", "linear"};
}

void Dataset::validate() const {
  if (y.size() < 1) throw std::invalid_argument("dataset must have n >= 1");
  if (x.rows() != y.size()) {
    throw std::invalid_argument("dataset x/y row count mismatch");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw std::invalid_argument("dataset contains non-finite entries");
  }
}

}  // namespace cpquant
