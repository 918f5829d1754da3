#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "kcobra/bandwidth.hpp"
#include "kcobra/common.hpp"

using namespace kcobra;

namespace {

PredictionMatrix make_pm(std::mt19937_64& rng, Eigen::Index l,
                             Eigen::Index m, double lo = -2.0,
                             double hi = 2.0) {
    std::uniform_real_distribution<double> draw(lo, hi);
    PredictionMatrix pm;
    pm.rows.resize(l, m);
    pm.responses.resize(l);
    for (Eigen::Index i = 0; i < l; ++i) {
        for (Eigen::Index c = 0; c < m; ++c) pm.rows(i, c) = draw(rng);
        pm.responses[i] = draw(rng);
    }
    return pm;
}

}  // namespace

TEST_CASE("fold plans are balanced, exhaustive, and seeded") {
    CVPlan plan = make_cv_plan(23, 5, 99);
    REQUIRE(plan.fold_assignment.size() == 23);
    std::vector<int> sizes(5, 0);
    for (int id : plan.fold_assignment) {
        REQUIRE(id >= 1);
        REQUIRE(id <= 5);
        ++sizes[static_cast<std::size_t>(id - 1)];
    }
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*lo >= 1);
    CHECK(*hi - *lo <= 1);

    CVPlan again = make_cv_plan(23, 5, 99);
    CHECK(again.fold_assignment == plan.fold_assignment);
    CVPlan other = make_cv_plan(23, 5, 100);
    CHECK(other.fold_assignment != plan.fold_assignment);

    CHECK_THROWS_AS(make_cv_plan(10, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_cv_plan(3, 4, 0), std::invalid_argument);
}

TEST_CASE("cv error on a hand-computed two-fold fixture") {
    PredictionMatrix pm;
    pm.rows.resize(4, 1);
    pm.rows << 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0;
    pm.responses.resize(4);
    pm.responses << 0.0, 1.0, 2.0, 3.0;
    CVPlan plan;
    plan.kappa = 2;
    plan.fold_assignment = {1, 2, 1, 2};

    const KernelSpec gauss{KernelFamily::Gaussian};
    const double loss =
        cv_error(pm, plan, gauss, {1.0, Parametrization::Scale});

    // Fold-by-fold evaluation, written out by hand. Rows 1 and 3 train the
    // fold-1 queries; rows 0 and 2 train the fold-2 queries. Points 1 and 2
    // sit equidistant from their training pairs, so their residuals vanish.
    const double k_near = std::exp(-(1.0 / 9.0) / 2.0);
    const double k_far = std::exp(-1.0 / 2.0);
    const double g0 = (k_near * 1.0 + k_far * 3.0) / (k_near + k_far);
    const double g3 = (k_far * 0.0 + k_near * 2.0) / (k_far + k_near);
    const double expected = (g0 * g0 + (g3 - 3.0) * (g3 - 3.0)) / 2.0;
    CHECK(loss == doctest::Approx(expected).epsilon(1e-14));

    SUBCASE("all-zero responses give zero loss") {
        pm.responses.setZero();
        CHECK(cv_error(pm, plan, gauss, {1.0, Parametrization::Scale}) == 0.0);
    }

    SUBCASE("power-of-two response scaling scales the loss exactly") {
        PredictionMatrix scaled = pm;
        scaled.responses *= 2.0;
        const double scaled_loss =
            cv_error(scaled, plan, gauss, {1.0, Parametrization::Scale});
        CHECK(scaled_loss == 4.0 * loss);
    }

    SUBCASE("general response scaling scales the loss quadratically") {
        PredictionMatrix scaled = pm;
        scaled.responses *= 3.0;
        const double scaled_loss =
            cv_error(scaled, plan, gauss, {1.0, Parametrization::Scale});
        CHECK(scaled_loss == doctest::Approx(9.0 * loss).epsilon(1e-13));
    }

    SUBCASE("degenerate plans are rejected") {
        CVPlan bad = plan;
        bad.fold_assignment = {1, 1, 1, 2};
        CHECK_NOTHROW(cv_error(pm, bad, gauss, {1.0, Parametrization::Scale}));
        bad.fold_assignment = {1, 1, 1, 1};
        CHECK_THROWS_AS(cv_error(pm, bad, gauss, {1.0, Parametrization::Scale}),
                        DataError);
        bad.fold_assignment = {1, 2, 3, 1};
        CHECK_THROWS_AS(cv_error(pm, bad, gauss, {1.0, Parametrization::Scale}),
                        DataError);
        bad.fold_assignment = {1, 2};
        CHECK_THROWS_AS(cv_error(pm, bad, gauss, {1.0, Parametrization::Scale}),
                        DataError);
    }
}

TEST_CASE("cv gradient matches central finite differences") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> log_h(-1.5, 1.5);
    const KernelFamily families[] = {KernelFamily::Gaussian,
                                     KernelFamily::Exp4};
    int tested = 0;
    for (int rep = 0; rep < 40; ++rep) {
        PredictionMatrix pm = make_pm(rng, 20, 2);
        const int kappa = (rep % 2 == 0) ? 2 : 5;
        CVPlan plan = make_cv_plan(20, kappa, 1000 + rep);
        const KernelSpec kernel{families[rep % 2]};
        CVContext ctx = make_cv_context(pm, plan, kernel);
        const double h = std::pow(10.0, log_h(rng));

        const CVEval eval =
            cv_error_with_grad(ctx, {h, Parametrization::InverseScale});
        const double step = 1e-5 * h;
        const double up =
            cv_error(ctx, {h + step, Parametrization::InverseScale});
        const double down =
            cv_error(ctx, {h - step, Parametrization::InverseScale});
        const double fd = (up - down) / (2.0 * step);
        CHECK(cv_error(ctx, {h, Parametrization::InverseScale}) ==
              doctest::Approx(eval.loss).epsilon(1e-14));
        if (std::abs(fd) < 1e-8) {
            CHECK(std::abs(eval.grad - fd) <= 1e-8);
        } else {
            CHECK(eval.grad == doctest::Approx(fd).epsilon(1e-4));
        }
        ++tested;
    }
    CHECK(tested == 40);
}

TEST_CASE("ratio-form gradient equals the pairwise double sum") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> log_h(-1.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index l = 4 + static_cast<Eigen::Index>(rng() % 7);
        PredictionMatrix pm = make_pm(rng, l, 2);
        CVPlan plan = make_cv_plan(l, 2, 500 + rep);
        const KernelSpec kernel{KernelFamily::Gaussian};
        CVContext ctx = make_cv_context(pm, plan, kernel);
        const double h = std::pow(10.0, log_h(rng));
        const BandwidthParam param{h, Parametrization::InverseScale};

        const CVEval eval = cv_error_with_grad(ctx, param);

        // Independent evaluation via the pairwise form:
        // dg = sum_{i,q} (Y_i - Y_q) * dK_i * K_q / S0^2.
        double grad = 0.0;
        for (Eigen::Index j = 0; j < l; ++j) {
            const int fold = plan.fold_assignment[static_cast<std::size_t>(j)];
            double s0 = 0.0, s1 = 0.0;
            std::vector<Eigen::Index> train;
            for (Eigen::Index i = 0; i < l; ++i) {
                if (plan.fold_assignment[static_cast<std::size_t>(i)] == fold)
                    continue;
                train.push_back(i);
                const double k = kernel_weight(kernel, param, ctx.cache.self(j, i));
                s0 += k;
                s1 += k * pm.responses[i];
            }
            if (s0 == 0.0) continue;
            double pair_sum = 0.0;
            for (Eigen::Index i : train) {
                const double dki =
                    kernel_weight_dh(kernel, param, ctx.cache.self(j, i));
                for (Eigen::Index q : train) {
                    const double kq =
                        kernel_weight(kernel, param, ctx.cache.self(j, q));
                    pair_sum +=
                        (pm.responses[i] - pm.responses[q]) * dki * kq;
                }
            }
            const double dg = pair_sum / (s0 * s0);
            const double r = s1 / s0 - pm.responses[j];
            grad += 2.0 * r * dg;
        }
        grad /= 2.0;  // kappa
        CHECK(std::abs(eval.grad - grad) <= 1e-10);
    }
}

TEST_CASE("constant responses flatten the cv gradient") {
    std::mt19937_64 rng(31337);
    PredictionMatrix pm = make_pm(rng, 15, 2);
    pm.responses.setConstant(5.0);
    CVPlan plan = make_cv_plan(15, 3, 7);
    CVContext ctx = make_cv_context(pm, plan, {KernelFamily::Gaussian});
    for (double h : {0.01, 0.5, 2.0, 50.0}) {
        const CVEval eval =
            cv_error_with_grad(ctx, {h, Parametrization::InverseScale});
        CHECK(std::abs(eval.grad) <= 1e-10);
    }
    CHECK_THROWS_AS(cv_error_with_grad(ctx, {1.0, Parametrization::Scale}),
                    std::invalid_argument);
}

TEST_CASE("grid search scans exhaustively and breaks ties downward") {
    std::mt19937_64 rng(404);
    PredictionMatrix pm = make_pm(rng, 24, 2);
    CVPlan plan = make_cv_plan(24, 4, 11);
    CVContext ctx = make_cv_context(pm, plan, {KernelFamily::Gaussian});

    SUBCASE("returned loss equals the minimum over the trace") {
        GridResult res = grid_search(ctx, {0.01, 5.0, 100});
        REQUIRE(res.trace.size() == 100);
        double best = res.trace.front().loss;
        double best_h = res.trace.front().h;
        for (const GridPoint& p : res.trace) {
            if (p.loss < best) {
                best = p.loss;
                best_h = p.h;
            }
        }
        CHECK(res.loss == best);
        CHECK(res.h == best_h);
        CHECK(res.trace.front().h == 0.01);
        CHECK(res.trace.back().h == doctest::Approx(5.0).epsilon(1e-15));
    }

    SUBCASE("a one-point grid returns that point") {
        GridResult res = grid_search(ctx, {0.75, 10.0, 1});
        CHECK(res.h == 0.75);
        CHECK(res.trace.size() == 1);
        CHECK(res.loss == cv_error(ctx, {0.75, Parametrization::Scale}));
    }

    SUBCASE("ties break toward the smallest bandwidth") {
        PredictionMatrix flat = pm;
        flat.responses.setZero();  // every bandwidth scores exactly 0
        GridResult res = grid_search(flat, plan, {KernelFamily::Gaussian},
                                     {0.5, 2.0, 10});
        CHECK(res.loss == 0.0);
        CHECK(res.h == 0.5);
    }

    SUBCASE("invalid grids are rejected") {
        CHECK_THROWS_AS(grid_search(ctx, {0.0, 5.0, 10}),
                        std::invalid_argument);
        CHECK_THROWS_AS(grid_search(ctx, {2.0, 1.0, 10}),
                        std::invalid_argument);
        CHECK_THROWS_AS(grid_search(ctx, {1.0, 2.0, 0}),
                        std::invalid_argument);
    }

    SUBCASE("response scale leaves the selected bandwidth unchanged") {
        GridResult base = grid_search(ctx, {0.01, 5.0, 50});
        PredictionMatrix scaled = pm;
        scaled.responses *= 2.0;
        GridResult doubled = grid_search(scaled, plan, {KernelFamily::Gaussian},
                                         {0.01, 5.0, 50});
        CHECK(doubled.h == base.h);
        CHECK(doubled.loss == 4.0 * base.loss);
    }
}

TEST_CASE("gradient descent converges on a smooth instance") {
    // Responses linear in the lone prediction feature give a smooth CV curve
    // with an interior minimum near h = 2 under sigma = 0.1.
    const Eigen::Index l = 16;
    PredictionMatrix pm;
    pm.rows.resize(l, 1);
    pm.responses.resize(l);
    for (Eigen::Index i = 0; i < l; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(l - 1);
        pm.rows(i, 0) = x;
        pm.responses[i] = x;
    }
    CVPlan plan = make_cv_plan(l, 4, 3);
    CVContext ctx =
        make_cv_context(pm, plan, {KernelFamily::Gaussian, 0.1});

    GDConfig cfg;
    cfg.h0 = 1.0;
    cfg.lambda = 100.0;
    cfg.delta = 1e-8;
    cfg.max_iter = 5000;
    GDResult res = gradient_descent(ctx, cfg);
    CHECK(res.converged);
    CHECK(res.iterations >= 5);  // a real descent, not an immediate stop
    CHECK(std::abs(res.trace.back().grad) <= cfg.delta);
    CHECK(res.h > 1.5);
    CHECK(res.h < 2.5);
    CHECK(res.loss == cv_error(ctx, {res.h, Parametrization::InverseScale}));
    CHECK(res.loss <
          cv_error(ctx, {*cfg.h0, Parametrization::InverseScale}));
    CHECK(res.evaluations == static_cast<int>(res.trace.size()));

    SUBCASE("sampled initialization is deterministic under the seed") {
        GDConfig sampled;
        sampled.lambda = 100.0;
        sampled.delta = 1e-8;
        sampled.max_iter = 5000;
        sampled.seed = 12;
        GDResult first = gradient_descent(ctx, sampled);
        GDResult again = gradient_descent(ctx, sampled);
        CHECK(first.h == again.h);
        CHECK(first.loss == again.loss);
        CHECK(first.iterations == again.iterations);
        CHECK(first.evaluations ==
              sampled.init_samples + static_cast<int>(first.trace.size()));
    }

    SUBCASE("starting at a scanned minimizer stops almost immediately") {
        double best_h = 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 400; ++i) {
            const double h = std::pow(10.0, -2.0 + 4.0 * i / 400.0);
            const double loss =
                cv_error(ctx, {h, Parametrization::InverseScale});
            if (loss < best) {
                best = loss;
                best_h = h;
            }
        }
        GDConfig quick;
        quick.h0 = best_h;
        quick.delta = 1e-2;
        GDResult res2 = gradient_descent(ctx, quick);
        CHECK(res2.converged);
        CHECK(res2.iterations <= 2);
        CHECK(res2.h == doctest::Approx(best_h).epsilon(0.05));
    }
}

TEST_CASE("oversized learning rates shrink instead of failing") {
    std::mt19937_64 rng(2718);
    PredictionMatrix pm = make_pm(rng, 12, 2);
    CVPlan plan = make_cv_plan(12, 3, 5);
    CVContext ctx = make_cv_context(pm, plan, {KernelFamily::Gaussian});

    // Probe for a bandwidth with clearly positive gradient, so that a naive
    // step lands nonpositive and must trigger the shrink safeguard.
    double h_pos = 0.0, g_pos = 0.0;
    for (int i = 0; i <= 300; ++i) {
        const double h = std::pow(10.0, -2.0 + 4.0 * i / 300.0);
        const CVEval e =
            cv_error_with_grad(ctx, {h, Parametrization::InverseScale});
        if (e.grad > 1e-6) {
            h_pos = h;
            g_pos = e.grad;
            break;
        }
    }
    REQUIRE(h_pos > 0.0);

    GDConfig cfg;
    cfg.h0 = h_pos;
    cfg.lambda = 1e12;
    cfg.delta = 1e-12;
    cfg.max_iter = 8;
    GDResult res = gradient_descent(ctx, cfg);
    for (const GDTracePoint& p : res.trace) CHECK(p.h > 0.0);
    REQUIRE(res.trace.size() >= 2);
    // The realized first step implies a shrunken rate.
    const double implied =
        (res.trace[0].h - res.trace[1].h) / res.trace[0].grad;
    CHECK(implied < cfg.lambda);
    CHECK(implied > 0.0);

    SUBCASE("fifty failed retries abort with a diagnostic") {
        GDConfig doomed;
        doomed.h0 = h_pos;
        doomed.lambda = 1e25;
        doomed.lr_shrink = 0.99;  // 50 retries only shave ~40%
        doomed.delta = 1e-15;
        CHECK(g_pos > 0.0);
        CHECK_THROWS_AS(gradient_descent(ctx, doomed), NumericError);
    }
}

TEST_CASE("gradient descent validates its configuration") {
    std::mt19937_64 rng(1);
    PredictionMatrix pm = make_pm(rng, 8, 1);
    CVPlan plan = make_cv_plan(8, 2, 0);
    CVContext ctx = make_cv_context(pm, plan, {KernelFamily::Gaussian});
    GDConfig cfg;
    cfg.lambda = 0.0;
    CHECK_THROWS_AS(gradient_descent(ctx, cfg), std::invalid_argument);
    cfg = GDConfig{};
    cfg.delta = -1.0;
    CHECK_THROWS_AS(gradient_descent(ctx, cfg), std::invalid_argument);
    cfg = GDConfig{};
    cfg.lr_shrink = 1.0;
    CHECK_THROWS_AS(gradient_descent(ctx, cfg), std::invalid_argument);
    cfg = GDConfig{};
    cfg.h0 = -2.0;
    CHECK_THROWS_AS(gradient_descent(ctx, cfg), std::invalid_argument);

    CVContext compact = make_cv_context(pm, plan, {KernelFamily::BiWeight});
    CHECK_THROWS_AS(gradient_descent(compact, GDConfig{}),
                    std::invalid_argument);
}

TEST_CASE("holdout error at pinned instances") {
    SUBCASE("an exactly reproduced validation point scores zero") {
        PredictionMatrix fit;
        fit.rows.resize(1, 1);
        fit.rows << 0.5;
        fit.responses.resize(1);
        fit.responses << 1.0;
        PredictionMatrix val = fit;
        CHECK(holdout_error(fit, val, {KernelFamily::Gaussian},
                            {1.0, Parametrization::Scale}) == 0.0);
    }

    SUBCASE("a single validation point contributes its squared residual") {
        PredictionMatrix fit;
        fit.rows.resize(2, 1);
        fit.rows << 0.0, 1.0;
        fit.responses.resize(2);
        fit.responses.setZero();  // aggregate predicts exactly 0
        PredictionMatrix val;
        val.rows.resize(1, 1);
        val.rows << 0.5;
        val.responses.resize(1);
        val.responses << 0.7;
        const double expected = (-0.7) * (-0.7);
        CHECK(holdout_error(fit, val, {KernelFamily::Gaussian},
                            {1.0, Parametrization::Scale}) == expected);
    }

    SUBCASE("empty validation part is rejected") {
        PredictionMatrix fit;
        fit.rows.resize(2, 1);
        fit.rows << 0.0, 1.0;
        fit.responses.resize(2);
        fit.responses << 1.0, 2.0;
        PredictionMatrix val;
        val.rows.resize(0, 1);
        val.responses.resize(0);
        CHECK_THROWS_AS(holdout_error(fit, val, {KernelFamily::Gaussian},
                                      {1.0, Parametrization::Scale}),
                        DataError);
    }
}

TEST_CASE("holdout error matches direct recomputation") {
    std::mt19937_64 rng(987654);
    for (int rep = 0; rep < 25; ++rep) {
        PredictionMatrix fit = make_pm(rng, 10, 2);
        PredictionMatrix val = make_pm(rng, 6, 2);
        const double h = 0.2 + 0.1 * static_cast<double>(rep % 10);
        const KernelSpec kernel{KernelFamily::Gaussian};

        const double got = holdout_error(fit, val, kernel,
                                         {h, Parametrization::Scale});

        NormalizationParams norm = fit_normalization(fit.rows);
        Eigen::MatrixXd nr = apply_normalization(norm, fit.rows);
        Eigen::MatrixXd nq = apply_normalization(norm, val.rows);
        double total = 0.0;
        for (Eigen::Index j = 0; j < 6; ++j) {
            double s0 = 0.0, s1 = 0.0;
            for (Eigen::Index i = 0; i < 10; ++i) {
                double d2 = 0.0;
                for (Eigen::Index c = 0; c < 2; ++c) {
                    const double diff = nq(j, c) - nr(i, c);
                    d2 += diff * diff;
                }
                const double k = std::exp(-(d2 / (h * h)) / 2.0);
                s0 += k;
                s1 += k * fit.responses[i];
            }
            const double g = (s0 == 0.0) ? 0.0 : s1 / s0;
            total += (g - val.responses[j]) * (g - val.responses[j]);
        }
        CHECK(got == doctest::Approx(total / 6.0).epsilon(1e-12));

        // Indicator-consensus and per-coordinate variants against their
        // own weight functions.
        const double a = holdout_error(fit, val, kernel,
                                       {0.4, Parametrization::Scale}, 0.5);
        double atotal = 0.0;
        for (Eigen::Index j = 0; j < 6; ++j) {
            WeightResult w = cobra_weights(nr, nq.row(j), 0.4, 0.5);
            double g = 0.0;
            for (Eigen::Index i = 0; i < 10; ++i)
                g += w.weights[i] * fit.responses[i];
            atotal += (g - val.responses[j]) * (g - val.responses[j]);
        }
        CHECK(a == doctest::Approx(atotal / 6.0).epsilon(1e-12));

        const double pc = holdout_error_percoord(fit, val, 0.7);
        double ptotal = 0.0;
        for (Eigen::Index j = 0; j < 6; ++j) {
            WeightResult w = kernelcobra_weights(nr, nq.row(j), 0.7);
            double g = 0.0;
            for (Eigen::Index i = 0; i < 10; ++i)
                g += w.weights[i] * fit.responses[i];
            ptotal += (g - val.responses[j]) * (g - val.responses[j]);
        }
        CHECK(pc == doctest::Approx(ptotal / 6.0).epsilon(1e-12));
    }
}
