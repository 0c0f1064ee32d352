#include "cpquant/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cpquant/rng.hpp"

namespace cpquant {

void FitConfig::validate() const {
  if (n_multistart < 1) throw std::invalid_argument("n_multistart must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (smooth_h && !(*smooth_h > 0.0)) {
    throw std::invalid_argument("smooth_h must be positive");
  }
  if (!(convergence_tol > 0.0)) {
    throw std::invalid_argument("convergence_tol must be positive");
  }
}

namespace detail {

bool lex_less(const VectorXd& a, const VectorXd& b) {
  for (int j = 0; j < a.size() && j < b.size(); ++j) {
    if (a[j] < b[j]) return true;
    if (a[j] > b[j]) return false;
  }
  return a.size() < b.size();
}

}  // namespace detail

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Candidate merge: smaller loss wins, exact ties go to the lexicographically
// smallest parameter vector.
bool better(double loss_a, const VectorXd& phi_a, double loss_b,
            const VectorXd& phi_b) {
  if (std::isnan(loss_a)) return false;
  if (loss_a < loss_b) return true;
  if (loss_a > loss_b) return false;
  return detail::lex_less(phi_a, phi_b);
}

using LossFn = std::function<double(const VectorXd& phi)>;

struct LocalResult {
  VectorXd x;
  double f = kInf;
  bool converged = false;
};

LocalResult nelder_mead(const LossFn& f, const VectorXd& x0,
                        const VectorXd& step, const ParamBox& box,
                        int max_iters, double tol, long& evals) {
  const int p = static_cast<int>(x0.size());
  std::vector<VectorXd> xs(p + 1);
  std::vector<double> fs(p + 1);
  xs[0] = box.clamp(x0);
  for (int j = 0; j < p; ++j) {
    VectorXd v = xs[0];
    v[j] += step[j];
    v = box.clamp(v);
    if ((v - xs[0]).cwiseAbs().maxCoeff() == 0.0) v[j] = xs[0][j] - step[j];
    xs[j + 1] = box.clamp(v);
  }
  for (int j = 0; j <= p; ++j) {
    fs[j] = f(xs[j]);
    ++evals;
  }

  std::vector<int> order(p + 1);
  auto sort_order = [&]() {
    for (int j = 0; j <= p; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (std::isnan(fs[a])) return false;
      if (std::isnan(fs[b])) return true;
      return fs[a] < fs[b];
    });
  };

  bool converged = false;
  for (int it = 0; it < max_iters; ++it) {
    sort_order();
    const int ib = order[0], iw = order[p], isw = order[p - 1];
    const double fb = fs[ib], fw = fs[iw], fsw = fs[isw];
    if (std::isfinite(fb) && std::isfinite(fw)) {
      double fspread = fw - fb;
      double xspread = 0.0;
      for (int j = 1; j <= p; ++j) {
        xspread = std::max(xspread,
                           (xs[order[j]] - xs[ib]).cwiseAbs().maxCoeff());
      }
      if (fspread <= tol * (std::abs(fb) + tol) &&
          xspread <= 1e-8 * (1.0 + xs[ib].cwiseAbs().maxCoeff())) {
        converged = true;
        break;
      }
    }

    VectorXd centroid = VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) centroid += xs[order[j]];
    centroid /= p;

    VectorXd xr = box.clamp(centroid + (centroid - xs[iw]));
    double fr = f(xr);
    ++evals;
    if (better(fr, xr, fb, xs[ib])) {
      VectorXd xe = box.clamp(centroid + 2.0 * (centroid - xs[iw]));
      double fe = f(xe);
      ++evals;
      if (better(fe, xe, fr, xr)) {
        xs[iw] = xe;
        fs[iw] = fe;
      } else {
        xs[iw] = xr;
        fs[iw] = fr;
      }
      continue;
    }
    if (fr < fsw) {
      xs[iw] = xr;
      fs[iw] = fr;
      continue;
    }
    // Contraction, outside or inside.
    VectorXd xc;
    if (fr < fw) {
      xc = box.clamp(centroid + 0.5 * (xr - centroid));
    } else {
      xc = box.clamp(centroid + 0.5 * (xs[iw] - centroid));
    }
    double fc = f(xc);
    ++evals;
    if (fc < std::min(fr, fw)) {
      xs[iw] = xc;
      fs[iw] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (int j = 1; j <= p; ++j) {
      int idx = order[j];
      xs[idx] = box.clamp(xs[ib] + 0.5 * (xs[idx] - xs[ib]));
      fs[idx] = f(xs[idx]);
      ++evals;
    }
  }

  sort_order();
  LocalResult out;
  out.x = xs[order[0]];
  out.f = fs[order[0]];
  out.converged = converged;
  return out;
}

struct LmWork {
  const RegressionModel& model;
  const Dataset& data;
  IndexRange range;
  VectorXd r;       // residuals
  MatrixXd J;       // d r / d phi = -grad g
  VectorXd scratch;

  double residuals_at(const VectorXd& phi) {
    segment_residuals(model, data, range, phi, r);
    return r.allFinite() ? r.squaredNorm() : kInf;
  }

  void jacobian_at(const VectorXd& phi) {
    const int m = range.len();
    J.resize(m, phi.size());
    for (int i = 0; i < m; ++i) {
      J.row(i) = -model.grad(data.x.row(range.first - 1 + i).transpose(), phi)
                      .transpose();
    }
  }
};

LocalResult levenberg_marquardt(LmWork& w, const VectorXd& x0,
                                const ParamBox& box, int max_iters, double tol,
                                long& evals) {
  LocalResult out;
  VectorXd x = box.clamp(x0);
  double sse = w.residuals_at(x);
  ++evals;
  if (!std::isfinite(sse)) {
    out.x = x;
    out.f = kInf;
    return out;
  }
  double lambda = 1e-3;
  const int p = static_cast<int>(x.size());
  bool done = false;
  for (int it = 0; it < max_iters && !done; ++it) {
    w.residuals_at(x);
    w.jacobian_at(x);
    if (!w.J.allFinite()) break;
    MatrixXd A = w.J.transpose() * w.J;
    VectorXd g = w.J.transpose() * w.r;
    bool stepped = false;
    for (int inner = 0; inner < 25; ++inner) {
      MatrixXd Ad = A;
      for (int j = 0; j < p; ++j) {
        Ad(j, j) += lambda * std::max(A(j, j), 1e-12);
      }
      VectorXd delta = Ad.ldlt().solve(-g);
      if (!delta.allFinite()) {
        lambda *= 4.0;
        continue;
      }
      VectorXd xn = box.clamp(x + delta);
      double sn = w.residuals_at(xn);
      ++evals;
      if (std::isfinite(sn) && sn < sse) {
        double drop = sse - sn;
        x = xn;
        sse = sn;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        if (drop <= tol * (sse + tol) ||
            delta.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + x.cwiseAbs().maxCoeff())) {
          out.converged = true;
          done = true;
        }
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e14) break;
    }
    if (!stepped) {
      out.converged = true;  // no descent direction left at this scale
      break;
    }
  }
  out.x = x;
  out.f = sse;
  return out;
}

using SmoothFn = std::function<double(const VectorXd& phi, VectorXd* grad)>;

LocalResult bfgs(const SmoothFn& fg, const VectorXd& x0, const ParamBox& box,
                 int max_iters, long& evals) {
  LocalResult out;
  const int p = static_cast<int>(x0.size());
  VectorXd x = box.clamp(x0);
  VectorXd g(p);
  double fx = fg(x, &g);
  ++evals;
  if (!std::isfinite(fx) || !g.allFinite()) {
    out.x = x;
    out.f = fx;
    return out;
  }
  MatrixXd H = MatrixXd::Identity(p, p);
  for (int it = 0; it < max_iters; ++it) {
    if (g.cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + std::abs(fx))) {
      out.converged = true;
      break;
    }
    VectorXd d = -(H * g);
    double slope = d.dot(g);
    if (!(slope < 0.0)) {
      H.setIdentity();
      d = -g;
      slope = d.dot(g);
      if (!(slope < 0.0)) break;
    }
    double t = 1.0;
    VectorXd xn;
    double fn = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      xn = box.clamp(x + t * d);
      if ((xn - x).cwiseAbs().maxCoeff() == 0.0) break;
      VectorXd gn_unused;
      fn = fg(xn, nullptr);
      ++evals;
      if (std::isfinite(fn) && fn <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    VectorXd gn(p);
    fg(xn, &gn);
    ++evals;
    VectorXd s = xn - x;
    VectorXd yv = gn - g;
    double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      double rho = 1.0 / sy;
      MatrixXd I = MatrixXd::Identity(p, p);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
          rho * s * s.transpose();
    }
    double drop = fx - fn;
    x = xn;
    fx = fn;
    g = gn;
    if (drop <= 1e-13 * (std::abs(fx) + 1e-13)) {
      out.converged = true;
      break;
    }
  }
  out.x = x;
  out.f = fx;
  return out;
}

double robust_residual_scale(VectorXd r) {
  const int n = static_cast<int>(r.size());
  if (n == 0) return 0.0;
  std::vector<double> v(r.data(), r.data() + n);
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double med = v[n / 2];
  if (n % 2 == 0) {
    double lo = *std::max_element(v.begin(), v.begin() + n / 2);
    med = 0.5 * (med + lo);
  }
  for (auto& value : v) value = std::abs(value - med);
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double mad = v[n / 2];
  if (n % 2 == 0) {
    double lo = *std::max_element(v.begin(), v.begin() + n / 2);
    mad = 0.5 * (mad + lo);
  }
  return 1.4826 * mad;
}

struct Pipeline {
  const RegressionModel& model;
  const Dataset& data;
  IndexRange range;
  const FitConfig& config;

  // Exact loss of a residual vector.
  std::function<double(const VectorXd& r)> vec_loss;
  // Optional smoothed objective with gradient; null disables refinement.
  std::function<double(const VectorXd& phi, double h, VectorXd* grad)> smooth;

  SegmentFit run(const FitHints* hints) {
    config.validate();
    const int p = model.dim_phi;
    if (range.len() < p + 1) {
      throw std::invalid_argument("underdetermined segment");
    }
    const ParamBox& box = model.bounds;
    VectorXd scratch;
    long evals = 0;
    auto exact = [&](const VectorXd& phi) {
      segment_residuals(model, data, range, phi, scratch);
      double value = vec_loss(scratch);
      return std::isfinite(value) ? value : kInf;
    };

    struct Start {
      VectorXd x;
      bool polish;  // small initial simplex
    };
    std::vector<Start> starts;
    if (hints) {
      for (const auto& s : hints->starts) starts.push_back({box.clamp(s), true});
    }
    const bool full = !(hints && hints->warm_only);
    if (full) {
      if (!(hints && hints->skip_ls)) {
        try {
          SegmentFit warm = fit_ls(model, data, range, config);
          starts.push_back({warm.phi_hat, true});
        } catch (const std::exception&) {
          starts.push_back({box.midpoint(), false});
        }
      }
      Rng rng(Rng::stream_seed(config.seed, 0x9d5ab1,
                               static_cast<std::uint64_t>(range.first),
                               static_cast<std::uint64_t>(range.last)));
      for (int s = 1; s < config.n_multistart; ++s) {
        VectorXd x(p);
        for (int j = 0; j < p; ++j) x[j] = rng.uniform(box.lo[j], box.hi[j]);
        starts.push_back({x, false});
      }
    }
    if (starts.empty()) starts.push_back({box.midpoint(), false});

    SegmentFit best;
    best.loss = kInf;
    bool any_converged = false;
    for (const auto& s : starts) {
      VectorXd step(p);
      for (int j = 0; j < p; ++j) {
        step[j] = s.polish ? std::max(0.05 * std::abs(s.x[j]), 0.02)
                           : 0.05 * (box.hi[j] - box.lo[j]);
      }
      LocalResult lr = nelder_mead(exact, s.x, step, box, config.max_iters,
                                   config.convergence_tol, evals);
      if (std::isfinite(lr.f) &&
          (best.phi_hat.size() == 0 || better(lr.f, lr.x, best.loss, best.phi_hat))) {
        best.phi_hat = lr.x;
        best.loss = lr.f;
      }
      any_converged = any_converged || (lr.converged && std::isfinite(lr.f));
    }
    if (!std::isfinite(best.loss)) {
      if (best.phi_hat.size() == 0) {
        best.phi_hat = box.midpoint();
      }
      best.n_evals = evals;
      throw OptimizerError("optimizer failed", best);
    }

    if (smooth) {
      double h;
      if (config.smooth_h) {
        h = *config.smooth_h;
      } else {
        segment_residuals(model, data, range, best.phi_hat, scratch);
        h = 0.5 * robust_residual_scale(scratch) /
            std::sqrt(static_cast<double>(range.len()));
      }
      if (h > 1e-10) {
        auto fg = [&](const VectorXd& phi, VectorXd* grad) {
          return smooth(phi, h, grad);
        };
        LocalResult ref = bfgs(fg, best.phi_hat, box, 80, evals);
        if (ref.x.allFinite()) {
          double exact_ref = exact(ref.x);
          ++evals;
          if (better(exact_ref, ref.x, best.loss, best.phi_hat)) {
            best.phi_hat = ref.x;
            best.loss = exact_ref;
          }
        }
      }
    }

    best.n_evals = evals;
    best.converged = any_converged;
    return best;
  }
};

}  // namespace

SegmentFit fit_quantile(const RegressionModel& model, const Dataset& data,
                        const IndexRange& range, const QuantileLevel& tau,
                        const FitConfig& config, const FitHints* hints) {
  const double t = tau.tau();
  Pipeline pl{model, data, range, config,
              [t](const VectorXd& r) {
                double s = 0.0;
                for (int i = 0; i < r.size(); ++i) s += check_loss(r[i], t);
                return s;
              },
              [&model, &data, range, t](const VectorXd& phi, double h,
                                        VectorXd* grad) {
                return smoothed_total_loss(model, data, phi, t, range, h, grad);
              }};
  return pl.run(hints);
}

SegmentFit detail::fit_custom(const RegressionModel& model, const Dataset& data,
                              const IndexRange& range, const CustomLoss& loss,
                              const FitConfig& config, const FitHints* hints) {
  Pipeline pl{model, data, range, config,
              [&loss](const VectorXd& r) {
                double s = 0.0;
                for (int i = 0; i < r.size(); ++i) s += loss.rho(r[i]);
                return s;
              },
              nullptr};
  if (loss.rho_smooth && loss.rho_smooth_deriv) {
    pl.smooth = [&model, &data, range, &loss](const VectorXd& phi, double h,
                                              VectorXd* grad) {
      VectorXd r;
      segment_residuals(model, data, range, phi, r);
      double s = 0.0;
      if (grad) grad->setZero(model.dim_phi);
      for (int i = 0; i < r.size(); ++i) {
        s += loss.rho_smooth(r[i], h);
        if (grad) {
          *grad -= loss.rho_smooth_deriv(r[i], h) *
                   model.grad(data.x.row(range.first - 1 + i).transpose(), phi);
        }
      }
      return s;
    };
  }
  return pl.run(hints);
}

SegmentFit fit_ls(const RegressionModel& model, const Dataset& data,
                  const IndexRange& range, const FitConfig& config,
                  const FitHints* hints) {
  config.validate();
  const int p = model.dim_phi;
  if (range.len() < p + 1) {
    throw std::invalid_argument("underdetermined segment");
  }
  const ParamBox& box = model.bounds;
  LmWork work{model, data, range, {}, {}, {}};
  long evals = 0;

  std::vector<VectorXd> starts;
  if (hints) {
    for (const auto& s : hints->starts) starts.push_back(box.clamp(s));
  }
  const bool full = !(hints && hints->warm_only);
  if (full) {
    starts.push_back(box.midpoint());
    Rng rng(Rng::stream_seed(config.seed, 0x15b0c5,
                             static_cast<std::uint64_t>(range.first),
                             static_cast<std::uint64_t>(range.last)));
    for (int s = 1; s < config.n_multistart; ++s) {
      VectorXd x(p);
      for (int j = 0; j < p; ++j) x[j] = rng.uniform(box.lo[j], box.hi[j]);
      starts.push_back(x);
    }
  }
  if (starts.empty()) starts.push_back(box.midpoint());

  SegmentFit best;
  best.loss = kInf;
  bool any_converged = false;
  for (const auto& s : starts) {
    LocalResult lr = levenberg_marquardt(work, s, box, config.max_iters,
                                         config.convergence_tol, evals);
    if (std::isfinite(lr.f) &&
        (best.phi_hat.size() == 0 || better(lr.f, lr.x, best.loss, best.phi_hat))) {
      best.phi_hat = lr.x;
      best.loss = lr.f;
    }
    any_converged = any_converged || (lr.converged && std::isfinite(lr.f));
  }

  if (!std::isfinite(best.loss)) {
    // Derivative-free fallback on the squared loss.
    auto sse = [&](const VectorXd& phi) { return work.residuals_at(phi); };
    VectorXd step = 0.05 * (box.hi - box.lo);
    LocalResult lr = nelder_mead(sse, box.midpoint(), step, box,
                                 config.max_iters, config.convergence_tol, evals);
    if (std::isfinite(lr.f)) {
      best.phi_hat = lr.x;
      best.loss = lr.f;
      any_converged = any_converged || lr.converged;
    } else {
      best.phi_hat = box.midpoint();
      best.n_evals = evals;
      throw OptimizerError("optimizer failed", best);
    }
  }
  best.n_evals = evals;
  best.converged = any_converged;
  return best;
}

SparsityEstimate estimate_f0(const VectorXd& residuals,
                             const QuantileLevel& tau) {
  (void)tau;
  const int n = static_cast<int>(residuals.size());
  if (n < 20) throw std::invalid_argument("insufficient data for sparsity");
  std::vector<double> v(residuals.data(), residuals.data() + n);
  std::sort(v.begin(), v.end());
  double mean = 0.0;
  for (double value : v) mean += value;
  mean /= n;
  double var = 0.0;
  for (double value : v) var += (value - mean) * (value - mean);
  var /= (n - 1);
  double sd = std::sqrt(var);
  auto quantile = [&](double pr) {
    double idx = pr * (n - 1);
    int lo = static_cast<int>(std::floor(idx));
    int hi = std::min(lo + 1, n - 1);
    double frac = idx - lo;
    return v[lo] * (1.0 - frac) + v[hi] * frac;
  };
  double iqr = quantile(0.75) - quantile(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = std::max(sd, 1e-12);
  double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  if (!(h > 0.0)) h = 1e-12;
  double f0 = 0.0;
  const double norm = 1.0 / std::sqrt(2.0 * M_PI);
  for (double value : v) {
    double u = value / h;
    f0 += norm * std::exp(-0.5 * u * u);
  }
  f0 /= (n * h);
  return {std::max(f0, 1e-6), h};
}

MatrixXd design_moment(const RegressionModel& model, const Dataset& data,
                       const IndexRange& range, const VectorXd& phi) {
  if (range.len() <= 0) throw std::invalid_argument("empty segment");
  MatrixXd G = MatrixXd::Zero(model.dim_phi, model.dim_phi);
  for (int i = range.first; i <= range.last; ++i) {
    VectorXd g = model.grad(data.x.row(i - 1).transpose(), phi);
    G.noalias() += g * g.transpose();
  }
  return G / static_cast<double>(range.len());
}

MatrixXd asymptotic_cov(const RegressionModel& model, const Dataset& data,
                        const IndexRange& range, const VectorXd& phi_hat,
                        const SparsityEstimate& f0, const QuantileLevel& tau) {
  MatrixXd G = design_moment(model, data, range, phi_hat);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo >= 1e12) {
    throw std::runtime_error("degenerate design");
  }
  const double t = tau.tau();
  double scale = t * (1.0 - t) / (f0.f0_hat * f0.f0_hat);
  return scale * G.inverse() / static_cast<double>(range.len());
}

}  // namespace cpquant
