#include "kcobra/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "kcobra/common.hpp"

namespace kcobra {

namespace {

void check_model_id(int model_id) {
    if (model_id < 1 || model_id > 10) {
        throw DataError("model id must be between 1 and 10");
    }
}

// Keeps the noise stream decoupled from the input stream for one seed value.
constexpr std::uint64_t kNoiseStreamOffset = 0x9e3779b97f4a7c15ULL;

}  // namespace

SimDesign default_design(int model_id, InputDesign design,
                         std::uint64_t seed) {
    check_model_id(model_id);
    static constexpr Eigen::Index stock_n[10] = {800, 600, 600, 600, 700,
                                                 500, 600, 700, 600, 700};
    static constexpr Eigen::Index stock_d[10] = {50, 100, 100, 100, 20,
                                                 20, 30,  50,  1500, 1500};
    SimDesign out;
    out.model_id = model_id;
    out.design = design;
    out.n = stock_n[model_id - 1];
    out.d = stock_d[model_id - 1];
    out.seed = seed;
    return out;
}

Eigen::MatrixXd correlation_matrix(Eigen::Index d) {
    if (d < 1) throw DataError("dimension must be positive");
    if (d > 5000) {
        throw DataError(
            "correlated design is limited to d <= 5000; the dense covariance "
            "factorization does not scale past that");
    }
    Eigen::MatrixXd sigma(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            sigma(i, j) = std::ldexp(1.0, -static_cast<int>(std::abs(i - j)));
        }
    }
    return sigma;
}

Eigen::MatrixXd correlation_cholesky(Eigen::Index d) {
    const Eigen::MatrixXd sigma = correlation_matrix(d);
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw NumericError("covariance factorization failed");
    }
    return llt.matrixL();
}

Eigen::MatrixXd gen_inputs(const SimDesign& design) {
    check_model_id(design.model_id);
    if (design.n < 1 || design.d < 1) {
        throw DataError("sample size and dimension must be positive");
    }
    std::mt19937_64 rng(design.seed);
    Eigen::MatrixXd X(design.n, design.d);
    if (design.design == InputDesign::Uncorrelated) {
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        for (Eigen::Index i = 0; i < design.n; ++i) {
            for (Eigen::Index j = 0; j < design.d; ++j) X(i, j) = unit(rng);
        }
        return X;
    }
    const Eigen::MatrixXd chol = correlation_cholesky(design.d);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(design.d);
    for (Eigen::Index i = 0; i < design.n; ++i) {
        for (Eigen::Index j = 0; j < design.d; ++j) z[j] = gauss(rng);
        X.row(i) = (chol * z).transpose();
    }
    return X;
}

Eigen::Index model_min_dim(int model_id) {
    check_model_id(model_id);
    static constexpr Eigen::Index dims[10] = {2, 10, 4, 4, 14, 20, 30, 50, 1, 1};
    return dims[model_id - 1];
}

double model_noise_sd(int model_id) {
    check_model_id(model_id);
    static const double variances[10] = {0.0,  0.5,  0.5,  0.5,  0.05,
                                         0.25, 0.25, 0.75, 1.0,  1.25};
    return std::sqrt(variances[model_id - 1]);
}

Eigen::VectorXd model_mean(int model_id, const Eigen::MatrixXd& X) {
    check_model_id(model_id);
    if (X.rows() < 1) throw DataError("input matrix is empty");
    if (X.cols() < model_min_dim(model_id)) {
        throw DataError("model " + std::to_string(model_id) +
                        " needs at least " +
                        std::to_string(model_min_dim(model_id)) + " columns");
    }
    if (!X.allFinite()) throw DataError("input contains non-finite values");

    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const double pi = std::numbers::pi;
    Eigen::VectorXd y(n);
    // x(k) below addresses the model's X_{k+1}; formulas are one-based.
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto x = X.row(i);
        double v = 0.0;
        switch (model_id) {
            case 1:
                v = x(0) * x(0) + std::exp(-x(1) * x(1));
                break;
            case 2:
                v = x(0) * x(1) + x(2) * x(2) - x(3) * x(6) + x(7) * x(9) -
                    x(5) * x(5);
                break;
            case 3:
                v = -std::sin(2.0 * x(0)) + x(1) * x(1) + x(2) -
                    std::exp(-x(3));
                break;
            case 4: {
                const double s3 = std::sin(2.0 * pi * x(2));
                const double s4 = std::sin(2.0 * pi * x(3));
                const double c4 = std::cos(2.0 * pi * x(3));
                v = x(0) + (2.0 * x(1) - 1.0) * (2.0 * x(1) - 1.0) +
                    s3 / (2.0 - s3) + s4 + 2.0 * c4 + 3.0 * s4 * s4 +
                    4.0 * c4 * c4;
                break;
            }
            case 5:
                v = (x(0) > 0.0 ? 1.0 : 0.0) + x(1) * x(1) * x(1) +
                    (x(3) + x(5) - x(7) - x(8) > 1.0 + x(13) ? 1.0 : 0.0) +
                    std::exp(-x(1) * x(1));
                break;
            case 6: {
                double sum = 0.0;
                for (int j = 1; j <= 5; ++j) {
                    for (int k = 0; k <= 3; ++k) sum += x(j + 5 * k - 1);
                }
                double prod = 1.0;
                for (int k = 1; k <= 5; ++k) prod *= x(4 * k - 1);
                v = sum * std::cos(prod * pi / 2.0);
                break;
            }
            case 7: {
                double sum = 0.0;
                for (int j = 1; j <= 15; ++j) {
                    sum += std::exp(0.25 - x(j - 1) * x(j - 1)) *
                           std::sin(pi * x(j + 15 - 1));
                }
                v = sum;
                break;
            }
            case 8: {
                double sum = 0.0;
                for (int j = 1; j <= 25; ++j) {
                    double den = x(2 * j - 2);
                    if (std::abs(den) < 1e-12) {
                        den = std::copysign(1e-12, den);
                    }
                    sum += x(2 * j - 1) * std::sin(pi / den);
                }
                double expo = 0.0;
                for (int k = 1; k <= 5; ++k) {
                    expo += x(10 * k - 1) * x(10 * k - 1) / 10.0;
                }
                v = sum * std::exp(expo);
                break;
            }
            case 9: {
                double sum = 0.0;
                for (Eigen::Index j = 1; j <= d; ++j) {
                    const double beta =
                        std::exp2(-static_cast<double>(d + 1 - j) / 50.0) +
                        std::pow(3.0, -static_cast<double>(j) / 50.0);
                    const double xj = x(j - 1);
                    sum += beta * xj * std::log(std::abs(5.0 + xj)) /
                           (1.0 + std::exp(xj));
                }
                v = pi + sum;
                break;
            }
            case 10: {
                double sum = 0.0;
                for (Eigen::Index j = 1; j <= d; ++j) {
                    const double beta =
                        std::exp(-static_cast<double>(j) / 30.0) /
                        (1.0 -
                         std::exp(-static_cast<double>(d + 1 - j) / 30.0));
                    const double xj = x(j - 1);
                    sum += beta * xj * std::exp(-xj) /
                           (1.0 - std::log(std::abs(10.0 - xj)));
                }
                v = std::numbers::e + sum;
                break;
            }
        }
        y[i] = v;
    }
    return y;
}

Eigen::VectorXd model_response(int model_id, const Eigen::MatrixXd& X,
                               std::uint64_t noise_seed) {
    Eigen::VectorXd y = model_mean(model_id, X);
    const double sd = model_noise_sd(model_id);
    if (sd == 0.0) return y;
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> gauss(0.0, sd);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += gauss(rng);
    return y;
}

Dataset generate_dataset(const SimDesign& design) {
    Dataset out;
    out.x = gen_inputs(design);
    out.y = model_response(design.model_id, out.x,
                           design.seed + kNoiseStreamOffset);
    return out;
}

DataSplit split_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const SplitPlan& plan) {
    if (plan.test_fraction <= 0.0 || plan.test_fraction >= 1.0 ||
        plan.dk_fraction_of_train <= 0.0 || plan.dk_fraction_of_train >= 1.0) {
        throw std::invalid_argument("split fractions must lie in (0, 1)");
    }
    const Eigen::Index n = X.rows();
    if (n < 10) throw DataError("splitting needs at least 10 rows");
    if (y.size() != n) {
        throw DataError("response length does not match input rows");
    }

    Eigen::Index n_test = static_cast<Eigen::Index>(
        std::lround(static_cast<double>(n) * plan.test_fraction));
    n_test = std::clamp<Eigen::Index>(n_test, 1, n - 2);
    const Eigen::Index n_train = n - n_test;
    Eigen::Index n_learner = static_cast<Eigen::Index>(
        std::ceil(static_cast<double>(n_train) * plan.dk_fraction_of_train));
    n_learner = std::clamp<Eigen::Index>(n_learner, 1, n_train - 1);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(plan.seed);
    std::shuffle(order.begin(), order.end(), rng);

    DataSplit split;
    split.test_indices.assign(order.begin(), order.begin() + n_test);
    split.learner_indices.assign(order.begin() + n_test,
                                 order.begin() + n_test + n_learner);
    split.aggregate_indices.assign(order.begin() + n_test + n_learner,
                                   order.end());
    std::sort(split.test_indices.begin(), split.test_indices.end());
    std::sort(split.learner_indices.begin(), split.learner_indices.end());
    std::sort(split.aggregate_indices.begin(), split.aggregate_indices.end());

    auto take = [&](const std::vector<Eigen::Index>& idx) {
        Dataset part;
        part.x.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
        part.y.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r) {
            part.x.row(static_cast<Eigen::Index>(r)) = X.row(idx[r]);
            part.y[static_cast<Eigen::Index>(r)] = y[idx[r]];
        }
        return part;
    };
    split.test = take(split.test_indices);
    split.learner = take(split.learner_indices);
    split.aggregate = take(split.aggregate_indices);
    return split;
}

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths) {
    if (predictions.size() != truths.size()) {
        throw DataError("prediction and truth lengths differ");
    }
    if (predictions.size() < 1) throw DataError("rmse needs at least one pair");
    double total = 0.0;
    for (Eigen::Index i = 0; i < predictions.size(); ++i) {
        const double r = predictions[i] - truths[i];
        total += r * r;
    }
    return std::sqrt(total / static_cast<double>(predictions.size()));
}

}  // namespace kcobra
