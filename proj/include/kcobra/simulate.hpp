#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace kcobra {

enum class InputDesign { Uncorrelated, Correlated };

//! Recipe for one synthetic regression dataset. Inputs are either i.i.d.
//! Uniform(-1,1) entries or rows drawn from N(0, S) with S_ij = 2^-|i-j|.
struct SimDesign {
    int model_id = 1;  // 1..10
    InputDesign design = InputDesign::Uncorrelated;
    Eigen::Index n = 0;
    Eigen::Index d = 0;
    std::uint64_t seed = 0;
};

//! Design with the stock sample size and dimension for the given model.
SimDesign default_design(int model_id, InputDesign design,
                         std::uint64_t seed = 0);

//! The d x d matrix S with S_ij = 2^-|i-j| (entries are exact).
Eigen::MatrixXd correlation_matrix(Eigen::Index d);

//! Lower-triangular L with L L^T = S; rejects d > 5000 (dense factorization).
Eigen::MatrixXd correlation_cholesky(Eigen::Index d);

//! Draws the n x d input matrix for the design; bitwise reproducible for a
//! fixed (design, n, d, seed) on one build.
Eigen::MatrixXd gen_inputs(const SimDesign& design);

//! Noiseless regression surface of the model evaluated at each row of X.
//! Model 8 divides by X_{2j-1}; magnitudes below 1e-12 are clamped to 1e-12
//! with the sign preserved.
Eigen::VectorXd model_mean(int model_id, const Eigen::MatrixXd& X);

//! Standard deviation of the additive Gaussian noise (0 for model 1).
double model_noise_sd(int model_id);

//! Smallest input dimension the model's formula references.
Eigen::Index model_min_dim(int model_id);

//! model_mean plus N(0, sd^2) noise drawn from its own stream, so the same
//! inputs can be re-noised without regenerating X.
Eigen::VectorXd model_response(int model_id, const Eigen::MatrixXd& X,
                               std::uint64_t noise_seed);

struct Dataset {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

//! Inputs plus responses; the noise stream is seeded independently of the
//! input stream by a fixed offset of design.seed.
Dataset generate_dataset(const SimDesign& design);

//! Three-way split: a test slice, with the rest halved into a part that
//! trains the base learners and a part that feeds the aggregator.
struct SplitPlan {
    double test_fraction = 0.2;
    double dk_fraction_of_train = 0.5;
    std::uint64_t seed = 0;
};

struct DataSplit {
    Dataset learner;    // trains the base regressors
    Dataset aggregate;  // builds the prediction matrix
    Dataset test;
    std::vector<Eigen::Index> learner_indices;
    std::vector<Eigen::Index> aggregate_indices;
    std::vector<Eigen::Index> test_indices;
};

//! Seeded shuffle, then test gets round(n * test_fraction) rows (kept inside
//! [1, n-2]), the learner part gets ceil(train * dk_fraction_of_train), and
//! the aggregate part the remainder. Index lists are ascending.
DataSplit split_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const SplitPlan& plan);

//! Root mean squared residual between two equal-length vectors.
double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths);

}  // namespace kcobra
