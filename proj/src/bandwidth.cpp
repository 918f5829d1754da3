#include "kcobra/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "kcobra/common.hpp"

namespace kcobra {

CVPlan make_cv_plan(Eigen::Index l, int kappa, std::uint64_t seed) {
    if (kappa < 2) throw std::invalid_argument("fold count must be at least 2");
    if (static_cast<Eigen::Index>(kappa) > l) {
        throw std::invalid_argument("fold count exceeds the number of rows");
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(l));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    CVPlan plan;
    plan.kappa = kappa;
    plan.seed = seed;
    plan.fold_assignment.assign(static_cast<std::size_t>(l), 0);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        plan.fold_assignment[static_cast<std::size_t>(order[pos])] =
            static_cast<int>(pos % static_cast<std::size_t>(kappa)) + 1;
    }
    return plan;
}

namespace {

void validate_plan(const CVPlan& plan, Eigen::Index l) {
    if (plan.kappa < 2) {
        throw std::invalid_argument("fold count must be at least 2");
    }
    if (static_cast<Eigen::Index>(plan.fold_assignment.size()) != l) {
        throw DataError("fold assignment does not cover the data rows");
    }
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(plan.kappa), 0);
    for (int id : plan.fold_assignment) {
        if (id < 1 || id > plan.kappa) {
            throw DataError("fold id outside 1..kappa");
        }
        ++sizes[static_cast<std::size_t>(id - 1)];
    }
    for (Eigen::Index size : sizes) {
        if (size == 0) throw DataError("empty cross-validation fold");
        if (size == l) throw DataError("a fold must not contain every row");
    }
}

}  // namespace

CVContext make_cv_context(const PredictionMatrix& data, const CVPlan& plan,
                          const KernelSpec& kernel) {
    validate(data);
    validate_plan(plan, data.rows.rows());
    CVContext ctx;
    ctx.responses = data.responses;
    ctx.fold_assignment = plan.fold_assignment;
    ctx.kappa = plan.kappa;
    ctx.kernel = kernel;
    const NormalizationParams norm = fit_normalization(data.rows);
    const Eigen::MatrixXd normalized = apply_normalization(norm, data.rows);
    ctx.cache = build_distance_cache(normalized, nullptr,
                                     kernel.family == KernelFamily::Naive);
    return ctx;
}

double cv_error(const CVContext& ctx, const BandwidthParam& param) {
    const Eigen::Index l = ctx.responses.size();
    double total = 0.0;
    for (Eigen::Index j = 0; j < l; ++j) {
        const int fold = ctx.fold_assignment[static_cast<std::size_t>(j)];
        double s0 = 0.0, s1 = 0.0;
        for (Eigen::Index i = 0; i < l; ++i) {
            if (ctx.fold_assignment[static_cast<std::size_t>(i)] == fold) {
                continue;
            }
            const double k = kernel_weight(ctx.kernel, param, ctx.cache.self(j, i));
            s0 += k;
            s1 += k * ctx.responses[i];
        }
        const double g = (s0 == 0.0) ? 0.0 : s1 / s0;
        const double r = g - ctx.responses[j];
        total += r * r;
    }
    return total / static_cast<double>(ctx.kappa);
}

double cv_error(const PredictionMatrix& data, const CVPlan& plan,
                const KernelSpec& kernel, const BandwidthParam& param) {
    return cv_error(make_cv_context(data, plan, kernel), param);
}

CVEval cv_error_with_grad(const CVContext& ctx, const BandwidthParam& param) {
    if (param.parametrization != Parametrization::InverseScale ||
        !is_differentiable(ctx.kernel.family)) {
        throw std::invalid_argument(
            "bandwidth gradients require gauss or exp4 under InverseScale");
    }
    const Eigen::Index l = ctx.responses.size();
    CVEval eval;
    for (Eigen::Index j = 0; j < l; ++j) {
        const int fold = ctx.fold_assignment[static_cast<std::size_t>(j)];
        double s0 = 0.0, s1 = 0.0, t0 = 0.0, t1 = 0.0;
        for (Eigen::Index i = 0; i < l; ++i) {
            if (ctx.fold_assignment[static_cast<std::size_t>(i)] == fold) {
                continue;
            }
            const DistanceSample d = ctx.cache.self(j, i);
            const double k = kernel_weight(ctx.kernel, param, d);
            const double dk = kernel_weight_dh(ctx.kernel, param, d);
            s0 += k;
            s1 += k * ctx.responses[i];
            t0 += dk;
            t1 += dk * ctx.responses[i];
        }
        double g = 0.0, dg = 0.0;
        if (s0 != 0.0) {
            g = s1 / s0;
            dg = (t1 * s0 - s1 * t0) / (s0 * s0);
        }
        const double r = g - ctx.responses[j];
        eval.loss += r * r;
        eval.grad += 2.0 * r * dg;
    }
    eval.loss /= static_cast<double>(ctx.kappa);
    eval.grad /= static_cast<double>(ctx.kappa);
    return eval;
}

double cv_error_grad(const PredictionMatrix& data, const CVPlan& plan,
                     const KernelSpec& kernel, const BandwidthParam& param) {
    return cv_error_with_grad(make_cv_context(data, plan, kernel), param).grad;
}

std::vector<double> grid_values(const GridConfig& grid) {
    if (!(grid.h_min > 0.0)) {
        throw std::invalid_argument("grid h_min must be positive");
    }
    if (grid.count < 1) {
        throw std::invalid_argument("grid needs at least one point");
    }
    if (grid.count > 1 && !(grid.h_min < grid.h_max)) {
        throw std::invalid_argument("grid requires h_min < h_max");
    }
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(grid.count));
    for (int i = 0; i < grid.count; ++i) {
        values.push_back(
            grid.count == 1
                ? grid.h_min
                : grid.h_min + (grid.h_max - grid.h_min) *
                                   (static_cast<double>(i) /
                                    static_cast<double>(grid.count - 1)));
    }
    return values;
}

GridResult grid_search(const CVContext& ctx, const GridConfig& grid) {
    GridResult result;
    const std::vector<double> values = grid_values(grid);
    result.trace.reserve(values.size());
    result.loss = std::numeric_limits<double>::infinity();
    for (double h : values) {
        const double loss = cv_error(ctx, {h, Parametrization::Scale});
        result.trace.push_back({h, loss});
        if (loss < result.loss) {  // strict: ties keep the smaller h
            result.loss = loss;
            result.h = h;
        }
    }
    return result;
}

GridResult grid_search(const PredictionMatrix& data, const CVPlan& plan,
                       const KernelSpec& kernel, const GridConfig& grid) {
    return grid_search(make_cv_context(data, plan, kernel), grid);
}

GDResult gradient_descent(const CVContext& ctx, const GDConfig& cfg) {
    if (!is_differentiable(ctx.kernel.family)) {
        throw std::invalid_argument(
            "gradient descent requires the gauss or exp4 family");
    }
    if (!(cfg.lambda > 0.0)) {
        throw std::invalid_argument("learning rate must be positive");
    }
    if (!(cfg.delta > 0.0)) {
        throw std::invalid_argument("gradient tolerance must be positive");
    }
    if (!(cfg.lr_shrink > 0.0 && cfg.lr_shrink < 1.0)) {
        throw std::invalid_argument("lr_shrink must lie in (0,1)");
    }
    if (cfg.max_iter < 1) {
        throw std::invalid_argument("max_iter must be at least 1");
    }
    if (cfg.init_samples < 1) {
        throw std::invalid_argument("init_samples must be at least 1");
    }

    GDResult result;
    double h;
    if (cfg.h0.has_value()) {
        h = *cfg.h0;
        if (!(h > 0.0)) {
            throw std::invalid_argument("initial bandwidth must be positive");
        }
    } else {
        // Start at the lowest-error candidate among random draws.
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> expo(-3.0, 3.0);
        double best_loss = std::numeric_limits<double>::infinity();
        double best_h = 1.0;
        for (int s = 0; s < cfg.init_samples; ++s) {
            const double cand = std::pow(10.0, expo(rng));
            const double loss =
                cv_error(ctx, {cand, Parametrization::InverseScale});
            ++result.evaluations;
            if (loss < best_loss) {
                best_loss = loss;
                best_h = cand;
            }
        }
        h = best_h;
    }

    // Flatness is a relative loss change; the loss scale varies by orders of
    // magnitude across data sets, so a gradient-sized threshold would never
    // fire on the approach to the minimum.
    constexpr double kFlatRelTol = 1e-2;
    constexpr int kFlatStreak = 5;
    constexpr double kMaxStepGrowth = 10.0;

    double lambda = cfg.lambda;
    double best_h = h;
    double best_loss = std::numeric_limits<double>::infinity();
    double prev_loss = std::numeric_limits<double>::infinity();
    int flat_streak = 0;
    while (true) {
        const CVEval eval =
            cv_error_with_grad(ctx, {h, Parametrization::InverseScale});
        ++result.evaluations;
        result.trace.push_back({result.iterations, h, eval.loss, eval.grad});
        if (eval.loss < best_loss) {
            best_loss = eval.loss;
            best_h = h;
        }
        if (std::abs(eval.grad) <= cfg.delta) {
            result.converged = true;
            break;
        }
        if (result.iterations >= cfg.max_iter) break;

        if (cfg.speed_scale.has_value()) {
            // Flat-error regime: accelerate after consecutive near-flat
            // iterations, keeping lambda finite.
            const bool flat = std::abs(prev_loss - eval.loss) <=
                              kFlatRelTol * std::max(1.0, std::abs(eval.loss));
            if (flat && ++flat_streak >= kFlatStreak) {
                if (std::isfinite(lambda * *cfg.speed_scale)) {
                    lambda *= *cfg.speed_scale;
                }
                flat_streak = 0;
            } else if (!flat) {
                flat_streak = 0;
            }
        }
        prev_loss = eval.loss;

        double next = h - lambda * eval.grad;
        int retries = 0;
        while (!(next > 0.0 && std::isfinite(next) &&
                 next <= kMaxStepGrowth * h)) {
            if (++retries > 50) {
                throw NumericError(
                    "bandwidth descent stalled: 50 consecutive learning-rate "
                    "reductions still step outside the valid range");
            }
            lambda *= cfg.lr_shrink;
            next = h - lambda * eval.grad;
        }
        h = next;
        ++result.iterations;
    }
    // Whether stopped by the gradient test or the cap, report the best
    // iterate seen.
    result.h = best_h;
    result.loss = best_loss;
    return result;
}

GDResult gradient_descent(const PredictionMatrix& data, const CVPlan& plan,
                          const KernelSpec& kernel, const GDConfig& cfg) {
    return gradient_descent(make_cv_context(data, plan, kernel), cfg);
}

double holdout_error(const PredictionMatrix& fit_part,
                     const PredictionMatrix& val_part,
                     const KernelSpec& kernel, const BandwidthParam& param,
                     std::optional<double> alpha) {
    validate(fit_part);
    validate(val_part);
    if (fit_part.rows.cols() != val_part.rows.cols()) {
        throw DataError("fit and validation parts disagree on column count");
    }
    const NormalizationParams norm = fit_normalization(fit_part.rows);
    const Eigen::MatrixXd nr = apply_normalization(norm, fit_part.rows);
    const Eigen::MatrixXd nq = apply_normalization(norm, val_part.rows);
    const Eigen::Index l = nr.rows();
    const Eigen::Index q = nq.rows();
    double total = 0.0;

    if (alpha.has_value()) {
        if (param.parametrization != Parametrization::Scale) {
            throw std::invalid_argument(
                "indicator-consensus holdout uses the Scale parametrization");
        }
        for (Eigen::Index j = 0; j < q; ++j) {
            const WeightResult w =
                cobra_weights(nr, nq.row(j), param.h, *alpha);
            double g = 0.0;
            if (!w.zero_mass) {
                for (Eigen::Index i = 0; i < l; ++i) {
                    g += w.weights[i] * fit_part.responses[i];
                }
            }
            const double r = g - val_part.responses[j];
            total += r * r;
        }
        return total / static_cast<double>(q);
    }

    const DistanceCache cache = build_distance_cache(
        nr, &nq, kernel.family == KernelFamily::Naive);
    for (Eigen::Index j = 0; j < q; ++j) {
        double s0 = 0.0, s1 = 0.0;
        for (Eigen::Index i = 0; i < l; ++i) {
            const double k = kernel_weight(kernel, param, cache.cross(j, i));
            s0 += k;
            s1 += k * fit_part.responses[i];
        }
        const double g = (s0 == 0.0) ? 0.0 : s1 / s0;
        const double r = g - val_part.responses[j];
        total += r * r;
    }
    return total / static_cast<double>(q);
}

double holdout_error_percoord(const PredictionMatrix& fit_part,
                              const PredictionMatrix& val_part, double h,
                              double sigma) {
    validate(fit_part);
    validate(val_part);
    if (fit_part.rows.cols() != val_part.rows.cols()) {
        throw DataError("fit and validation parts disagree on column count");
    }
    const NormalizationParams norm = fit_normalization(fit_part.rows);
    const Eigen::MatrixXd nr = apply_normalization(norm, fit_part.rows);
    const Eigen::MatrixXd nq = apply_normalization(norm, val_part.rows);
    double total = 0.0;
    for (Eigen::Index j = 0; j < nq.rows(); ++j) {
        const WeightResult w = kernelcobra_weights(nr, nq.row(j), h, sigma);
        double g = 0.0;
        if (!w.zero_mass) {
            for (Eigen::Index i = 0; i < nr.rows(); ++i) {
                g += w.weights[i] * fit_part.responses[i];
            }
        }
        const double r = g - val_part.responses[j];
        total += r * r;
    }
    return total / static_cast<double>(nq.rows());
}

}  // namespace kcobra
