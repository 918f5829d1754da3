#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "kcobra/aggregator.hpp"
#include "kcobra/kernel.hpp"

namespace kcobra {

//! Assignment of training rows to cross-validation folds. Fold ids run from
//! 1 to kappa; every fold is non-empty and sizes differ by at most one.
struct CVPlan {
    int kappa = 5;
    std::vector<int> fold_assignment;
    std::uint64_t seed = 0;
};

//! Builds a balanced fold assignment: seeded shuffle of the row indices,
//! then round-robin over the folds. Requires 2 <= kappa <= l.
CVPlan make_cv_plan(Eigen::Index l, int kappa, std::uint64_t seed);

//! Gradient-descent settings. When h0 is absent, the optimizer starts at the
//! lowest-error point among init_samples candidates drawn log-uniform from
//! [1e-3, 1e3]. lambda shrinks by lr_shrink whenever a step would go
//! nonpositive, overflow, or grow the bandwidth more than tenfold at once.
//! speed_scale, when set, multiplies lambda after five consecutive near-flat
//! iterations (relative loss change at most 1e-2); without it the fixed
//! learning rate cannot cross the flat stretches of the loss curve within
//! the iteration budget. max_iter defaults to 480 so a capped run stays
//! under 500 evaluations including initialization.
struct GDConfig {
    std::optional<double> h0;
    double lambda = 0.01;
    double delta = 1e-6;
    int max_iter = 480;
    double lr_shrink = 0.5;
    int init_samples = 10;
    std::optional<double> speed_scale = 2.0;
    std::uint64_t seed = 0;
};

//! Uniformly spaced bandwidth grid from h_min to h_max inclusive. A grid of
//! count = 1 consists of h_min alone.
struct GridConfig {
    double h_min = 1e-100;
    double h_max = 10.0;
    int count = 500;
};

//! Precomputed state shared by every bandwidth evaluation on one data set:
//! responses, fold ids, and the distance cache over the normalized rows.
//! Normalization is fitted once on all rows; folds only mask the weight sums.
struct CVContext {
    Eigen::VectorXd responses;
    std::vector<int> fold_assignment;
    int kappa = 0;
    KernelSpec kernel;
    DistanceCache cache;
};

//! Validates the plan against the data and precomputes distances.
CVContext make_cv_context(const PredictionMatrix& data, const CVPlan& plan,
                          const KernelSpec& kernel);

//! kappa-fold cross-validation loss: the sum over validation points of the
//! squared aggregation residual, divided by kappa. Fold sums are not
//! averaged over fold sizes. Zero-mass validation points predict 0.
double cv_error(const CVContext& ctx, const BandwidthParam& param);
double cv_error(const PredictionMatrix& data, const CVPlan& plan,
                const KernelSpec& kernel, const BandwidthParam& param);

//! One combined loss-and-gradient evaluation (a single pass over the same
//! kernel values, counted as one evaluation by the optimizer).
struct CVEval {
    double loss = 0.0;
    double grad = 0.0;
};

//! Loss plus d(loss)/dh for the differentiable InverseScale path. The
//! per-query gradient uses the ratio form
//!   dg/dh = (T1*S0 - S1*T0) / S0^2,
//! with S0 = sum K, S1 = sum Y*K, T0 = sum dK, T1 = sum Y*dK, which equals
//! the pairwise double sum over training points at O(l) cost per query.
//! Zero-mass queries contribute zero gradient.
CVEval cv_error_with_grad(const CVContext& ctx, const BandwidthParam& param);
double cv_error_grad(const PredictionMatrix& data, const CVPlan& plan,
                     const KernelSpec& kernel, const BandwidthParam& param);

struct GridPoint {
    double h = 0.0;
    double loss = 0.0;
};

//! Exhaustive scan result. h carries the loss-minimizing grid point, ties
//! broken toward the smallest h; trace records every point scanned.
struct GridResult {
    double h = 0.0;
    double loss = 0.0;
    std::vector<GridPoint> trace;
};

//! Scans the grid under the Scale parametrization.
//! The bandwidth ladder a GridConfig denotes: count points evenly spaced
//! over [h_min, h_max]; a single point collapses to h_min.
std::vector<double> grid_values(const GridConfig& grid);

GridResult grid_search(const CVContext& ctx, const GridConfig& grid);
GridResult grid_search(const PredictionMatrix& data, const CVPlan& plan,
                       const KernelSpec& kernel, const GridConfig& grid);

struct GDTracePoint {
    int iter = 0;
    double h = 0.0;
    double loss = 0.0;
    double grad = 0.0;
};

//! Gradient-descent outcome. h is always the lowest-loss iterate observed;
//! converged reports whether the run stopped because the terminal gradient
//! magnitude reached delta (visible in the last trace row) rather than the
//! iteration cap. Each trace row records one combined loss-gradient
//! evaluation; evaluations additionally counts the initialization samples.
struct GDResult {
    double h = 0.0;
    double loss = 0.0;
    int iterations = 0;
    bool converged = false;
    int evaluations = 0;
    std::vector<GDTracePoint> trace;
};

//! Minimizes the CV loss over h under InverseScale (Gaussian or Exp4 only).
//! Steps h <- h - lambda * grad until |grad| <= delta or max_iter steps.
//! A step that lands nonpositive, non-finite, or beyond ten times the
//! current bandwidth shrinks lambda and retries; more than 50 consecutive
//! retries raises NumericError.
GDResult gradient_descent(const CVContext& ctx, const GDConfig& cfg);
GDResult gradient_descent(const PredictionMatrix& data, const CVPlan& plan,
                          const KernelSpec& kernel, const GDConfig& cfg);

//! Mean squared aggregation error over a held-out validation part, with the
//! aggregation fitted on fit_part. With alpha supplied the weights switch to
//! the indicator-consensus rule (param.h as the per-coordinate threshold,
//! Scale parametrization required); otherwise kernel weights are used.
double holdout_error(const PredictionMatrix& fit_part,
                     const PredictionMatrix& val_part,
                     const KernelSpec& kernel, const BandwidthParam& param,
                     std::optional<double> alpha = std::nullopt);

//! Holdout analogue for the per-coordinate summed Gaussian weights.
double holdout_error_percoord(const PredictionMatrix& fit_part,
                              const PredictionMatrix& val_part, double h,
                              double sigma = 1.0);

}  // namespace kcobra
