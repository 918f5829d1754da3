#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "kcobra/benchmark.hpp"
#include "kcobra/common.hpp"

using namespace kcobra;

namespace {

// Small, fast plan: Model 1 at desk scale with a coarse bandwidth ladder.
BenchmarkPlan small_plan() {
    BenchmarkPlan plan;
    plan.sim.model_id = 1;
    plan.sim.design = InputDesign::Uncorrelated;
    plan.sim.n = 120;
    plan.sim.d = 5;
    plan.roster = parse_roster("knn:k=3,ridge:lambda=1.0");
    plan.methods = parse_methods("consensual:gauss,cobra,kernelcobra");
    plan.grid.h_min = 1e-4;
    plan.grid.h_max = 5.0;
    plan.grid.count = 30;
    plan.kappa = 3;
    plan.replications = 3;
    plan.base_seed = 2024;
    plan.record_timing = false;
    return plan;
}

}  // namespace

TEST_CASE("method strings parse and label themselves") {
    const auto methods = parse_methods(
        "consensual:gauss:sigma=2,consensual:naive,cobra:alpha=0.5,"
        "kernelcobra:sigma=3,cobra,kernelcobra");
    REQUIRE(methods.size() == 6);
    CHECK(methods[0].kind == MethodSpec::Kind::Consensual);
    CHECK(methods[0].kernel.family == KernelFamily::Gaussian);
    CHECK(methods[0].kernel.sigma == 2.0);
    CHECK(methods[1].kernel.family == KernelFamily::Naive);
    CHECK(methods[2].kind == MethodSpec::Kind::Cobra);
    CHECK(methods[2].alpha == 0.5);
    CHECK(methods[3].kind == MethodSpec::Kind::KernelCobra);
    CHECK(methods[3].sigma == 3.0);
    CHECK(!methods[4].alpha.has_value());

    CHECK(method_label(methods[0]) == "consensual:gauss:sigma=2");
    CHECK(method_label(methods[2]) == "cobra:alpha=0.5");
    CHECK(method_label(methods[3]) == "kernelcobra:sigma=3");
    CHECK(method_label(methods[4]) == "cobra");
    CHECK(method_label(methods[5]) == "kernelcobra");

    CHECK_THROWS_AS(parse_methods("forest"), DataError);
    CHECK_THROWS_AS(parse_methods("cobra:alpha=0"), DataError);
    CHECK_THROWS_AS(parse_methods("cobra:alpha=1.5"), DataError);
    CHECK_THROWS_AS(parse_methods("kernelcobra:sigma=-1"), DataError);
    CHECK_THROWS_AS(parse_methods("cobra:sigma=1"), DataError);
    CHECK_THROWS_AS(parse_methods("consensual:oak"), DataError);
    CHECK_THROWS_AS(parse_methods(""), DataError);
}

TEST_CASE("benchmark reports carry one row per method and replication") {
    const BenchmarkPlan plan = small_plan();
    const BenchmarkReport report = run_benchmark(plan);

    // 2 base learners + 3 methods, over 3 replications.
    REQUIRE(report.rows.size() == 15);
    REQUIRE(report.summary.size() == 5);
    CHECK(report.errors.empty());
    CHECK(report.replications == 3);

    CHECK(report.summary[0].method == "knn");
    CHECK(report.summary[1].method == "ridge");
    CHECK(report.summary[2].method == "consensual:gauss");
    CHECK(report.summary[3].method == "cobra");
    CHECK(report.summary[4].method == "kernelcobra");

    for (const ReportRow& row : report.rows) {
        CHECK(row.ok);
        CHECK(std::isfinite(row.rmse));
        CHECK(row.rmse >= 0.0);
        CHECK(row.tune_ms == 0.0);  // timing disabled
        CHECK(row.predict_ms == 0.0);
    }
    for (const MethodSummary& summary : report.summary) {
        CHECK(summary.completed == 3);
    }
}

TEST_CASE("summary columns recompute from the rows") {
    const BenchmarkReport report = run_benchmark(small_plan());
    for (const MethodSummary& summary : report.summary) {
        double sum = 0.0;
        int count = 0;
        for (const ReportRow& row : report.rows) {
            if (row.method == summary.method && row.ok) {
                sum += row.rmse;
                ++count;
            }
        }
        REQUIRE(count == summary.completed);
        const double mean = sum / count;
        CHECK(summary.mean_rmse == doctest::Approx(mean).epsilon(1e-12));
        double ss = 0.0;
        for (const ReportRow& row : report.rows) {
            if (row.method == summary.method && row.ok) {
                ss += (row.rmse - mean) * (row.rmse - mean);
            }
        }
        const double se = std::sqrt(ss / (count - 1)) / std::sqrt(count);
        CHECK(summary.se_rmse == doctest::Approx(se).epsilon(1e-12));
    }
}

TEST_CASE("benchmarks repeat bitwise and ignore the thread count") {
    BenchmarkPlan plan = small_plan();
    const BenchmarkReport once = run_benchmark(plan);
    const BenchmarkReport twice = run_benchmark(plan);
    plan.threads = 3;
    const BenchmarkReport parallel = run_benchmark(plan);

    REQUIRE(once.rows.size() == twice.rows.size());
    REQUIRE(once.rows.size() == parallel.rows.size());
    for (std::size_t i = 0; i < once.rows.size(); ++i) {
        CHECK(once.rows[i].method == twice.rows[i].method);
        CHECK(once.rows[i].rmse == twice.rows[i].rmse);
        CHECK(once.rows[i].rmse == parallel.rows[i].rmse);
    }
}

TEST_CASE("base-learner rows match an out-of-harness recomputation") {
    BenchmarkPlan plan = small_plan();
    plan.replications = 1;
    const BenchmarkReport report = run_benchmark(plan);

    SimDesign design = plan.sim;
    design.seed = plan.base_seed;  // replication 0
    const Dataset data = generate_dataset(design);
    SplitPlan split_plan = plan.split;
    split_plan.seed = plan.base_seed;
    const DataSplit split = split_data(data.x, data.y, split_plan);
    const FittedLearner knn =
        fit(plan.roster[0], split.learner.x, split.learner.y);
    const double want = rmse(predict(knn, split.test.x), split.test.y);

    REQUIRE(report.rows[0].method == "knn");
    CHECK(report.rows[0].rmse == want);
}

TEST_CASE("gradient tuning mirrors the grid plan shape") {
    BenchmarkPlan plan = small_plan();
    plan.methods = parse_methods("consensual:gauss,consensual:exp4");
    plan.tuning = TuneMethod::GD;
    plan.replications = 2;
    const BenchmarkReport report = run_benchmark(plan);
    CHECK(report.errors.empty());
    REQUIRE(report.summary.size() == 4);
    for (const MethodSummary& summary : report.summary) {
        CHECK(summary.completed == 2);
        CHECK(std::isfinite(summary.mean_rmse));
    }
}

TEST_CASE("failing replications are recorded and skipped") {
    BenchmarkPlan plan = small_plan();
    plan.sim.model_id = 8;  // needs 50 columns, the design only has 5
    plan.replications = 2;
    const BenchmarkReport report = run_benchmark(plan);

    CHECK(report.errors.size() == 2);
    REQUIRE(report.rows.size() == 10);
    for (const ReportRow& row : report.rows) {
        CHECK(!row.ok);
        CHECK(std::isnan(row.rmse));
    }
    for (const MethodSummary& summary : report.summary) {
        CHECK(summary.completed == 0);
    }
}

TEST_CASE("degenerate plans are rejected") {
    BenchmarkPlan plan = small_plan();
    plan.roster.clear();
    CHECK_THROWS_AS(run_benchmark(plan), DataError);

    plan = small_plan();
    plan.methods.clear();
    CHECK_THROWS_AS(run_benchmark(plan), DataError);

    plan = small_plan();
    plan.replications = 0;
    CHECK_THROWS_AS(run_benchmark(plan), DataError);

    plan = small_plan();
    plan.methods = parse_methods("cobra,cobra");
    CHECK_THROWS_AS(run_benchmark(plan), DataError);
}

TEST_CASE("report files carry the mandated columns") {
    const BenchmarkReport report = run_benchmark(small_plan());
    const auto path = std::filesystem::temp_directory_path() /
                      ("kcobra-report-" +
                       std::to_string(std::random_device{}()) + ".csv");
    write_report_csv(path.string(), report);

    std::ifstream file(path);
    std::string line;
    std::getline(file, line);
    CHECK(line == "method,replication,rmse,tune_ms,predict_ms");
    std::size_t rows = 0;
    while (std::getline(file, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == report.rows.size());
    std::filesystem::remove(path);
}
