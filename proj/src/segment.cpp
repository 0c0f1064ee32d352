#include "cpquant/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cpquant/parallel.hpp"

namespace cpquant {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void SegmentationConstraints::validate(int dim_phi) const {
  if (!(min_seg_exponent > 0.5 && min_seg_exponent < 1.0)) {
    throw std::invalid_argument("min_seg_exponent must lie in (1/2, 1)");
  }
  if (min_seg_floor != 0 && min_seg_floor < dim_phi + 1) {
    throw std::invalid_argument("min_seg_floor must be >= p + 1");
  }
  if (grid_step < 1) throw std::invalid_argument("grid_step must be >= 1");
}

int SegmentationConstraints::min_len(int n, int dim_phi) const {
  validate(dim_phi);
  int fl = min_seg_floor > 0 ? min_seg_floor : dim_phi + 2;
  int a = static_cast<int>(
      std::ceil(std::pow(static_cast<double>(n), min_seg_exponent) - 1e-9));
  return std::max(fl, a);
}

SegmentCostCache::SegmentCostCache(const RegressionModel& model,
                                   const Dataset& data, Objective objective,
                                   double tau, int grid_step,
                                   const FitConfig& config)
    : model_(model),
      data_(data),
      objective_(objective),
      tau_(tau),
      grid_step_(std::max(1, grid_step)),
      config_(config) {}

SegmentCostCache::Cell SegmentCostCache::make_cold(int l, int k) {
  IndexRange range{l, k};
  Cell c;
  if (objective_ == Objective::quantile) {
    bool have_ls = false;
    SegmentFit ls;
    try {
      ls = fit_ls(model_, data_, range, config_);
      have_ls = true;
    } catch (const OptimizerError&) {
    }
    FitHints h;
    if (have_ls) {
      h.starts.push_back(ls.phi_hat);
      h.skip_ls = true;
    }
    c.main = fit_quantile(model_, data_, range, QuantileLevel(tau_), config_,
                          have_ls ? &h : nullptr);
    c.ls_phi = have_ls ? ls.phi_hat : c.main.phi_hat;
  } else {
    c.main = fit_ls(model_, data_, range, config_);
    c.ls_phi = c.main.phi_hat;
  }
  return c;
}

SegmentCostCache::Cell SegmentCostCache::make_ext(int l, int k,
                                                  const Cell& prev) {
  IndexRange range{l, k};
  Cell c;
  FitHints ls_hints;
  ls_hints.warm_only = true;
  ls_hints.starts.push_back(prev.ls_phi);
  if (objective_ == Objective::quantile) {
    bool have_ls = false;
    SegmentFit ls;
    try {
      ls = fit_ls(model_, data_, range, config_, &ls_hints);
      have_ls = true;
    } catch (const OptimizerError&) {
    }
    FitHints h;
    h.warm_only = true;
    h.starts.push_back(prev.main.phi_hat);
    if (have_ls) h.starts.push_back(ls.phi_hat);
    c.main = fit_quantile(model_, data_, range, QuantileLevel(tau_), config_, &h);
    c.ls_phi = have_ls ? ls.phi_hat : prev.ls_phi;
  } else {
    c.main = fit_ls(model_, data_, range, config_, &ls_hints);
    c.ls_phi = c.main.phi_hat;
  }
  return c;
}

void SegmentCostCache::build_grid_chain(Row& row, int l, int upto) {
  const int fu = first_usable_end(l);
  int e0 = ((fu + grid_step_ - 1) / grid_step_) * grid_step_;
  if (upto < e0 || upto > data_.n()) upto = std::min(upto, data_.n());
  if (upto < e0) return;
  int e = (row.grid_built_to >= e0) ? row.grid_built_to + grid_step_ : e0;
  for (; e <= upto; e += grid_step_) {
    if (e == e0) {
      row.cells.emplace(e, make_cold(l, e));
    } else {
      row.cells.emplace(e, make_ext(l, e, row.cells.at(e - grid_step_)));
    }
    row.grid_built_to = e;
  }
}

const SegmentCostCache::Cell& SegmentCostCache::cell(Row& row, int l, int k) {
  auto it = row.cells.find(k);
  if (it != row.cells.end()) return it->second;
  const int fu = first_usable_end(l);
  if (k < fu || k > data_.n()) {
    throw std::invalid_argument("underdetermined segment");
  }
  const int e0 = ((fu + grid_step_ - 1) / grid_step_) * grid_step_;
  if (k % grid_step_ == 0 && k >= e0) {
    build_grid_chain(row, l, k);
    return row.cells.at(k);
  }
  // Off-grid leaf, warm-started from the largest grid cell below it.
  int gf = grid_floor(k);
  if (gf >= e0) {
    build_grid_chain(row, l, gf);
    auto inserted = row.cells.emplace(k, make_ext(l, k, row.cells.at(gf)));
    return inserted.first->second;
  }
  auto inserted = row.cells.emplace(k, make_cold(l, k));
  return inserted.first->second;
}

const SegmentFit& SegmentCostCache::fit(int l, int k) {
  auto it = rows_.find(l);
  if (it == rows_.end()) {
    it = rows_.emplace(l, std::make_unique<Row>()).first;
  }
  return cell(*it->second, l, k).main;
}

void SegmentCostCache::prebuild(const std::vector<RowPlan>& plans,
                                int threads) {
  // Merge plans per start so each row is owned by exactly one worker.
  std::unordered_map<int, std::vector<int>> merged;
  for (const auto& plan : plans) {
    auto& ends = merged[plan.start];
    ends.insert(ends.end(), plan.ends.begin(), plan.ends.end());
  }
  std::vector<RowPlan> work;
  work.reserve(merged.size());
  for (auto& [start, ends] : merged) {
    std::sort(ends.begin(), ends.end());
    ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
    work.push_back({start, std::move(ends)});
  }
  std::sort(work.begin(), work.end(),
            [](const RowPlan& a, const RowPlan& b) { return a.start < b.start; });
  for (const auto& plan : work) {
    rows_.try_emplace(plan.start, std::make_unique<Row>());
  }
  parallel_for(static_cast<int>(work.size()), threads, [&](int i) {
    const RowPlan& plan = work[i];
    Row& row = *rows_.at(plan.start);
    for (int e : plan.ends) cell(row, plan.start, e);
  });
}

std::size_t SegmentCostCache::cell_count() const {
  std::size_t total = 0;
  for (const auto& [start, row] : rows_) total += row->cells.size();
  return total;
}

double segment_cost(const RegressionModel& model, const Dataset& data, int l,
                    int k, const QuantileLevel& tau, const FitConfig& config) {
  SegmentCostCache cache(model, data, Objective::quantile, tau.tau(), 1, config);
  return cache.cost(l, k);
}

namespace {

SegmentedFit whole_sample_fit(const RegressionModel& model, const Dataset& data,
                              Objective objective, double tau,
                              const FitConfig& config) {
  IndexRange whole = IndexRange::whole(data);
  SegmentFit f = objective == Objective::quantile
                     ? fit_quantile(model, data, whole, QuantileLevel(tau), config)
                     : fit_ls(model, data, whole, config);
  SegmentedFit out;
  out.k = 0;
  out.phis.push_back(f.phi_hat);
  out.total_loss = f.loss;
  out.per_segment.push_back(std::move(f));
  return out;
}

SegmentedFit assemble(SegmentCostCache& cache, const std::vector<int>& breaks,
                      int n) {
  SegmentedFit out;
  out.k = static_cast<int>(breaks.size());
  out.breaks = breaks;
  int prev = 0;
  double total = 0.0;
  for (int r = 0; r <= out.k; ++r) {
    int end = (r < out.k) ? breaks[r] : n;
    const SegmentFit& f = cache.fit(prev + 1, end);
    out.phis.push_back(f.phi_hat);
    out.per_segment.push_back(f);
    total += f.loss;
    prev = end;
  }
  out.total_loss = total;
  return out;
}

// Exact DP over grid-aligned break positions; returns breaks only.
// pos[0] = 0 stands for "start of sample".
bool grid_dp(SegmentCostCache& cache, int n, int k, int min_len, int grid_step,
             int threads, std::vector<int>* breaks_out) {
  std::vector<int> B;
  for (int b = ((min_len + grid_step - 1) / grid_step) * grid_step;
       b <= n - min_len; b += grid_step) {
    B.push_back(b);
  }
  if (static_cast<int>(B.size()) < k) return false;

  std::vector<SegmentCostCache::RowPlan> plans;
  {
    std::vector<int> starts;
    starts.push_back(1);
    for (int b : B) starts.push_back(b + 1);
    for (int s : starts) {
      SegmentCostCache::RowPlan plan;
      plan.start = s;
      for (int b : B) {
        if (b - (s - 1) >= min_len) plan.ends.push_back(b);
      }
      if (n - (s - 1) >= min_len) plan.ends.push_back(n);
      if (!plan.ends.empty()) plans.push_back(std::move(plan));
    }
  }
  cache.prebuild(plans, threads);

  const int M = static_cast<int>(B.size());
  auto pos = [&](int j) { return j == 0 ? 0 : B[j - 1]; };
  // D[r][j]: best cost of covering pos(j)+1..n with r segments.
  std::vector<std::vector<double>> D(k + 2, std::vector<double>(M + 1, kInf));
  for (int j = 0; j <= M; ++j) {
    if (n - pos(j) >= min_len) D[1][j] = cache.cost(pos(j) + 1, n);
  }
  for (int r = 2; r <= k + 1; ++r) {
    for (int j = 0; j <= M; ++j) {
      if (n - pos(j) < r * min_len) continue;
      double best = kInf;
      for (int m = 1; m <= M; ++m) {
        int b = B[m - 1];
        if (b - pos(j) < min_len) continue;
        if (n - b < (r - 1) * min_len) break;
        double d = D[r - 1][m];
        if (!std::isfinite(d)) continue;
        double value = cache.cost(pos(j) + 1, b) + d;
        if (value < best) best = value;
      }
      D[r][j] = best;
    }
  }
  if (!std::isfinite(D[k + 1][0])) return false;

  // Forward reconstruction; ties at each level go to the smallest position,
  // which yields the lexicographically smallest break vector.
  std::vector<int> breaks;
  int at = 0;  // index into {0} + B
  for (int r = k + 1; r >= 2; --r) {
    double best = kInf;
    int best_m = -1;
    for (int m = 1; m <= M; ++m) {
      int b = B[m - 1];
      if (b - pos(at) < min_len) continue;
      if (n - b < (r - 1) * min_len) break;
      double d = D[r - 1][m];
      if (!std::isfinite(d)) continue;
      double value = cache.cost(pos(at) + 1, b) + d;
      if (value < best) {
        best = value;
        best_m = m;
      }
    }
    if (best_m < 0) return false;
    breaks.push_back(B[best_m - 1]);
    at = best_m;
  }
  *breaks_out = std::move(breaks);
  return true;
}

// Exhaustive +-grid_step window search around coarse breaks, step 1.
std::vector<int> refine_breaks(SegmentCostCache& cache, int n, int min_len,
                               int grid_step, int threads,
                               const std::vector<int>& coarse) {
  const int k = static_cast<int>(coarse.size());
  std::vector<std::vector<int>> windows(k);
  for (int r = 0; r < k; ++r) {
    for (int b = coarse[r] - grid_step; b <= coarse[r] + grid_step; ++b) {
      if (b >= min_len && b <= n - min_len) windows[r].push_back(b);
    }
  }
  // Materialize the rows the window search can touch.
  std::vector<SegmentCostCache::RowPlan> plans;
  for (int r = 0; r < k; ++r) {
    for (int w : windows[r]) {
      SegmentCostCache::RowPlan plan;
      plan.start = w + 1;
      if (r + 1 < k) {
        for (int e : windows[r + 1]) {
          if (e - w >= min_len) plan.ends.push_back(e);
        }
      } else if (n - w >= min_len) {
        plan.ends.push_back(n);
      }
      if (!plan.ends.empty()) plans.push_back(std::move(plan));
    }
  }
  {
    SegmentCostCache::RowPlan plan;
    plan.start = 1;
    for (int e : windows[0]) {
      if (e >= min_len) plan.ends.push_back(e);
    }
    if (!plan.ends.empty()) plans.push_back(std::move(plan));
  }
  cache.prebuild(plans, threads);

  std::vector<int> best_breaks = coarse;
  double best = kInf;
  std::vector<int> current(k);
  std::function<void(int, int, double)> enumerate = [&](int r, int prev,
                                                        double acc) {
    if (r == k) {
      if (n - prev < min_len) return;
      double total = acc + cache.cost(prev + 1, n);
      if (total < best) {
        best = total;
        best_breaks = current;
      }
      return;
    }
    for (int b : windows[r]) {
      if (b - prev < min_len) continue;
      if (n - b < (k - r) * min_len) continue;
      current[r] = b;
      enumerate(r + 1, b, acc + cache.cost(prev + 1, b));
    }
  };
  enumerate(0, 0, 0.0);
  return best_breaks;
}

SegmentedFit fit_k_impl(const RegressionModel& model, const Dataset& data,
                        int k, Objective objective, double tau,
                        const SegmentationConstraints& constraints,
                        const FitConfig& config, int threads,
                        SegmentCostCache* shared_cache) {
  data.validate();
  config.validate();
  constraints.validate(model.dim_phi);
  if (k < 0) throw std::invalid_argument("k must be >= 0");
  const int n = data.n();
  const int min_len = constraints.min_len(n, model.dim_phi);
  if ((k + 1) * min_len > n) {
    throw std::invalid_argument("infeasible segmentation");
  }
  if (k == 0) return whole_sample_fit(model, data, objective, tau, config);

  std::unique_ptr<SegmentCostCache> owned;
  SegmentCostCache* cache = shared_cache;
  if (!cache) {
    owned = std::make_unique<SegmentCostCache>(model, data, objective, tau,
                                               constraints.grid_step, config);
    cache = owned.get();
  }

  std::vector<int> breaks;
  if (!grid_dp(*cache, n, k, min_len, constraints.grid_step, threads, &breaks)) {
    if (constraints.grid_step > 1) {
      // The coarse grid can miss tight-but-feasible segmentations.
      SegmentationConstraints fine = constraints;
      fine.grid_step = 1;
      return fit_k_impl(model, data, k, objective, tau, fine, config, threads,
                        nullptr);
    }
    throw std::invalid_argument("infeasible segmentation");
  }
  if (constraints.grid_step > 1) {
    breaks = refine_breaks(*cache, n, min_len, constraints.grid_step, threads,
                           breaks);
  }

  SegmentedFit out = assemble(*cache, breaks, n);
  int prev = 0;
  for (std::size_t r = 0; r <= out.breaks.size(); ++r) {
    int end = r < out.breaks.size() ? out.breaks[r] : n;
    if (end - prev < min_len) {
      throw std::logic_error("segmentation violated the minimum gap");
    }
    prev = end;
  }
  return out;
}

}  // namespace

SegmentedFit fit_k_changepoints(const RegressionModel& model,
                                const Dataset& data, int k,
                                const QuantileLevel& tau,
                                const SegmentationConstraints& constraints,
                                const FitConfig& config, int threads,
                                SegmentCostCache* shared_cache) {
  return fit_k_impl(model, data, k, Objective::quantile, tau.tau(), constraints,
                    config, threads, shared_cache);
}

SegmentedFit fit_k_changepoints_ls(const RegressionModel& model,
                                   const Dataset& data, int k,
                                   const SegmentationConstraints& constraints,
                                   const FitConfig& config, int threads,
                                   SegmentCostCache* shared_cache) {
  return fit_k_impl(model, data, k, Objective::least_squares, 0.5, constraints,
                    config, threads, shared_cache);
}

SegmentedFit brute_force_changepoints(const RegressionModel& model,
                                      const Dataset& data, int k,
                                      const QuantileLevel& tau,
                                      const SegmentationConstraints& constraints,
                                      const FitConfig& config,
                                      std::size_t max_tuples) {
  data.validate();
  config.validate();
  constraints.validate(model.dim_phi);
  if (k < 0) throw std::invalid_argument("k must be >= 0");
  const int n = data.n();
  const int min_len = constraints.min_len(n, model.dim_phi);
  if ((k + 1) * min_len > n) {
    throw std::invalid_argument("infeasible segmentation");
  }
  if (k == 0) {
    return whole_sample_fit(model, data, Objective::quantile, tau.tau(), config);
  }
  const int gs = constraints.grid_step;
  std::vector<int> B;
  for (int b = ((min_len + gs - 1) / gs) * gs; b <= n - min_len; b += gs) {
    B.push_back(b);
  }

  // Count admissible tuples before fitting anything.
  std::size_t tuples = 0;
  std::function<void(int, int)> count = [&](int r, int prev) {
    if (tuples > max_tuples) return;
    if (r == k) {
      ++tuples;
      return;
    }
    for (int b : B) {
      if (b - prev < min_len) continue;
      if (n - b < (k - r) * min_len) break;
      count(r + 1, b);
    }
  };
  count(0, 0);
  if (tuples == 0) throw std::invalid_argument("infeasible segmentation");
  if (tuples > max_tuples) throw std::runtime_error("oracle too large");

  SegmentCostCache cache(model, data, Objective::quantile, tau.tau(), gs,
                         config);
  double best = kInf;
  std::vector<int> best_breaks;
  std::vector<int> current(k);
  std::function<void(int, int, double)> enumerate = [&](int r, int prev,
                                                        double acc) {
    if (r == k) {
      double total = acc + cache.cost(prev + 1, n);
      if (total < best) {
        best = total;
        best_breaks = current;
      }
      return;
    }
    for (int b : B) {
      if (b - prev < min_len) continue;
      if (n - b < (k - r) * min_len) break;
      current[r] = b;
      enumerate(r + 1, b, acc + cache.cost(prev + 1, b));
    }
  };
  enumerate(0, 0, 0.0);
  if (best_breaks.empty()) throw std::invalid_argument("infeasible segmentation");
  return assemble(cache, best_breaks, n);
}

}  // namespace cpquant
