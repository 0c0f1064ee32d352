#pragma once

#include <cstddef>
#include <memory>
#include <unordered_map>
#include <vector>

#include "cpquant/fit.hpp"

namespace cpquant {

// Admissibility of segmentations: every segment must span at least
// max(min_seg_floor, ceil(n^min_seg_exponent)) observations; break positions
// are searched on a grid of the given step and later refined.
struct SegmentationConstraints {
  double min_seg_exponent = 0.51;  // a in (1/2, 1)
  int min_seg_floor = 0;           // 0 = auto (p + 2)
  int grid_step = 1;

  void validate(int dim_phi) const;
  int min_len(int n, int dim_phi) const;
};

enum class Objective { quantile, least_squares };

// Joint estimate for a fixed number of change-points. Segment r covers
// observations breaks[r-1]+1 .. breaks[r] (1-based, with virtual end points
// 0 and n), so breaks[r] is the last observation of segment r+1's
// predecessor.
struct SegmentedFit {
  int k = 0;
  std::vector<int> breaks;      // strictly increasing, in (1, n)
  std::vector<VectorXd> phis;   // k + 1 parameter vectors
  double total_loss = 0.0;      // S_n
  std::vector<SegmentFit> per_segment;
};

// Memoized per-segment minimization. Cell (l, k) is the fitted loss over
// observations l..k. Values are a pure function of (data, objective, config):
// each row l is a chain of fits along increasing k, warm-started from the
// grid predecessor, so results do not depend on query order or thread count.
class SegmentCostCache {
public:
  SegmentCostCache(const RegressionModel& model, const Dataset& data,
                   Objective objective, double tau, int grid_step,
                   const FitConfig& config);

  const SegmentFit& fit(int l, int k);
  double cost(int l, int k) { return fit(l, k).loss; }

  // Materializes whole rows in parallel before a serial DP pass. Ends must be
  // listed in increasing order per row.
  struct RowPlan {
    int start = 1;
    std::vector<int> ends;
  };
  void prebuild(const std::vector<RowPlan>& plans, int threads);

  std::size_t cell_count() const;
  Objective objective() const { return objective_; }
  double tau() const { return tau_; }

private:
  struct Cell {
    SegmentFit main;
    VectorXd ls_phi;  // parallel least-squares chain (quantile objective)
  };
  struct Row {
    std::unordered_map<int, Cell> cells;
    int grid_built_to = 0;  // largest grid-aligned end materialized
  };

  const Cell& cell(Row& row, int l, int k);
  void build_grid_chain(Row& row, int l, int upto);
  Cell make_cold(int l, int k);
  Cell make_ext(int l, int k, const Cell& prev);
  int first_usable_end(int l) const { return l + model_.dim_phi; }
  int grid_floor(int k) const { return (k / grid_step_) * grid_step_; }

  const RegressionModel& model_;
  const Dataset& data_;
  Objective objective_;
  double tau_;
  int grid_step_;
  FitConfig config_;
  std::unordered_map<int, std::unique_ptr<Row>> rows_;
};

// One-shot segment cost (a fresh single-cell cache).
double segment_cost(const RegressionModel& model, const Dataset& data, int l,
                    int k, const QuantileLevel& tau, const FitConfig& config);

// Exact DP minimizer of the summed segment costs over the constrained break
// grid, followed by a +-grid_step local refinement at step 1 when the grid is
// coarse. Ties go to the lexicographically smallest break vector.
SegmentedFit fit_k_changepoints(const RegressionModel& model,
                                const Dataset& data, int k,
                                const QuantileLevel& tau,
                                const SegmentationConstraints& constraints,
                                const FitConfig& config, int threads = 1,
                                SegmentCostCache* shared_cache = nullptr);

// Least-squares counterpart (used by the selection criterion's LS branch).
SegmentedFit fit_k_changepoints_ls(const RegressionModel& model,
                                   const Dataset& data, int k,
                                   const SegmentationConstraints& constraints,
                                   const FitConfig& config, int threads = 1,
                                   SegmentCostCache* shared_cache = nullptr);

// Test oracle: exhaustive enumeration of all admissible break tuples with the
// same tie-break as the DP. Throws "oracle too large" past the tuple budget.
SegmentedFit brute_force_changepoints(const RegressionModel& model,
                                      const Dataset& data, int k,
                                      const QuantileLevel& tau,
                                      const SegmentationConstraints& constraints,
                                      const FitConfig& config,
                                      std::size_t max_tuples = 100000);

}  // namespace cpquant
