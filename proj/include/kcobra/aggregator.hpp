#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kcobra/kernel.hpp"

namespace kcobra {

//! Base-learner predictions for the retained training points: row i holds the
//! M machine outputs for point i, paired with its observed response.
struct PredictionMatrix {
    Eigen::MatrixXd rows;                    // l x M
    Eigen::VectorXd responses;               // l
    std::vector<std::string> learner_names;  // M labels, may be empty
};

//! Throws DataError unless rows/responses are non-empty, finite, and sized
//! consistently (names, when present, must match the column count).
void validate(const PredictionMatrix& pm);

//! Column-wise affine map onto [0,1]; constant columns collapse to 0.
struct NormalizationParams {
    Eigen::VectorXd per_column_min;
    Eigen::VectorXd per_column_max;
};

//! Fits per-column min/max over the given rows. Rejects non-finite input.
NormalizationParams fit_normalization(const Eigen::MatrixXd& rows);

//! Applies (x - min) / (max - min) per column. Degenerate columns map to 0
//! for every input value; other columns are not clipped, so queries outside
//! the fitted range land outside [0,1].
Eigen::MatrixXd apply_normalization(const NormalizationParams& norm,
                                    const Eigen::MatrixXd& rows);

//! Pairwise distances between normalized prediction rows, computed once.
//! The self block covers the training rows; the cross block, when queries
//! were supplied, holds one row per query against all training rows.
//! Chebyshev blocks are filled only on request (the naive kernel needs them).
struct DistanceCache {
    Eigen::MatrixXd self_sq_euclid;   // l x l, zero diagonal, mirrored
    Eigen::MatrixXd self_chebyshev;   // l x l or empty
    Eigen::MatrixXd cross_sq_euclid;  // q x l or empty
    Eigen::MatrixXd cross_chebyshev;  // q x l or empty
    bool has_chebyshev = false;

    //! Distance entry between cross-block query q and training row j.
    DistanceSample cross(Eigen::Index q, Eigen::Index j) const;
    //! Distance entry between training rows i and j.
    DistanceSample self(Eigen::Index i, Eigen::Index j) const;
};

//! Computes the exact pairwise blocks. Coordinates are accumulated in index
//! order so results are reproducible bitwise. Pass queries = nullptr to skip
//! the cross block. Rejects non-finite input and column-count mismatches.
DistanceCache build_distance_cache(const Eigen::MatrixXd& rows,
                                   const Eigen::MatrixXd* queries,
                                   bool need_chebyshev);

//! What to predict when every kernel weight vanishes: the literal 0/0 = 0
//! convention, or the training-response mean as a pragmatic fallback.
enum class ZeroMassFallback { PaperZero, TrainMean };

//! A fitted consensual aggregator: the retained predictions and responses,
//! the normalization fitted on those rows, and the kernel with its bandwidth.
struct AggregatorModel {
    PredictionMatrix predictions;
    NormalizationParams norm;
    KernelSpec kernel;
    BandwidthParam bandwidth;
    ZeroMassFallback zero_mass_fallback = ZeroMassFallback::PaperZero;
};

//! A weight vector over the training rows. zero_mass marks the all-zero
//! outcome (no training point received positive kernel mass).
struct WeightResult {
    Eigen::VectorXd weights;
    bool zero_mass = false;
};

//! Normalized kernel weights of one cross-block query against every training
//! row: W_i = K_h(d_i) / sum_j K_h(d_j), all zero when the sum vanishes.
WeightResult consensual_weights(const AggregatorModel& model,
                                const DistanceCache& cache,
                                Eigen::Index query_index);

//! Batch prediction: the weighted response average per query, plus a flag per
//! query marking zero kernel mass (those predictions follow the model's
//! fallback rule).
struct PredictResult {
    Eigen::VectorXd predictions;
    std::vector<char> zero_mass;
};

//! Predicts for raw (un-normalized) prediction-space queries with M columns.
PredictResult predict(const AggregatorModel& model,
                      const Eigen::MatrixXd& queries);

//! Indicator-consensus weights over normalized rows: a training point
//! qualifies when at least alpha * M of its per-coordinate absolute
//! differences to the query are strictly below h; weights are uniform over
//! qualifying points. alpha must lie on the grid {1/M, 2/M, ..., 1}.
WeightResult cobra_weights(const Eigen::MatrixXd& norm_rows,
                           const Eigen::RowVectorXd& norm_query, double h,
                           double alpha);

//! Per-coordinate summed Gaussian weights over normalized rows:
//! W_i proportional to sum_m K_h(row_im - query_m), normalized over the
//! full (i, m) mass. At M = 1 this coincides with consensual_weights under
//! the Gaussian kernel.
WeightResult kernelcobra_weights(const Eigen::MatrixXd& norm_rows,
                                 const Eigen::RowVectorXd& norm_query,
                                 double h, double sigma = 1.0);

}  // namespace kcobra
