#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "kcobra/aggregator.hpp"

namespace kcobra {

enum class LearnerKind { KNN, Ridge, Tree };

//! One base regressor with its hyperparameters; only the fields for the
//! active kind are read.
struct LearnerSpec {
    LearnerKind kind = LearnerKind::KNN;
    int k = 5;                 // KNN neighbor count
    double ridge_lambda = 1.0; // Ridge penalty on standardized coefficients
    int max_depth = 8;         // Tree split levels
    int min_leaf = 5;          // Tree minimum samples per leaf
};

//! Binary regression-tree node; feature = -1 marks a leaf carrying value.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
};

//! Immutable fitted state. KNN stores its training set; Ridge stores the
//! unstandardized coefficients and intercept; Tree stores its node array
//! with node 0 as the root.
struct FittedLearner {
    LearnerSpec spec;
    Eigen::MatrixXd train_x;
    Eigen::VectorXd train_y;
    Eigen::VectorXd coef;
    double intercept = 0.0;
    std::vector<TreeNode> nodes;
};

//! Fits one learner. KNN with k > n is reduced to k = n (noted on stderr).
//! Ridge standardizes features, solves (Z'Z + lambda*I) b = Z'(y - mean(y)),
//! and unstandardizes; zero-variance columns get coefficient 0 and the
//! intercept is never penalized. Tree grows greedily on variance reduction,
//! scanning midpoints of adjacent sorted unique values per feature, keeping
//! at least min_leaf samples on each side; ties keep the first candidate in
//! scan order.
FittedLearner fit(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                  const Eigen::VectorXd& y);

//! Deterministic batch prediction. KNN averages the k nearest responses
//! under Euclidean distance, equal distances resolved toward the lower
//! training index; Tree routes queries left when x[feature] <= threshold.
Eigen::VectorXd predict(const FittedLearner& model, const Eigen::MatrixXd& X);

//! Stacks per-learner predictions on X into columns, pairing them with y.
//! Column order follows the roster; names come from learner_labels.
PredictionMatrix build_prediction_matrix(
    const std::vector<FittedLearner>& learners, const Eigen::MatrixXd& X,
    const Eigen::VectorXd& y);

//! Parses a roster string such as
//! "knn:k=5,ridge:lambda=1.0,tree:max_depth=8:min_leaf=5".
std::vector<LearnerSpec> parse_roster(std::string_view roster);

//! Unique column labels for a roster: kind names, numbered on repeats
//! ("knn", "knn2", ...).
std::vector<std::string> learner_labels(const std::vector<LearnerSpec>& specs);

}  // namespace kcobra
