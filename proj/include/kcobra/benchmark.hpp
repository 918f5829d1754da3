#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kcobra/aggregator.hpp"
#include "kcobra/bandwidth.hpp"
#include "kcobra/learners.hpp"
#include "kcobra/simulate.hpp"

namespace kcobra {

//! One aggregation method to benchmark. Consensual carries a kernel and is
//! tuned on the CV loss; Cobra tunes its consensus share alpha on a holdout
//! split unless a fixed alpha is given; KernelCobra sums per-coordinate
//! Gaussian kernels with the given sigma.
struct MethodSpec {
    enum class Kind { Consensual, Cobra, KernelCobra };
    Kind kind = Kind::Consensual;
    KernelSpec kernel;
    std::optional<double> alpha;
    double sigma = 1.0;
};

//! Parses entries such as
//! "consensual:gauss,consensual:epanechnikov,cobra,kernelcobra", with
//! optional suffixes cobra:alpha=0.5 and kernelcobra:sigma=2.
std::vector<MethodSpec> parse_methods(std::string_view text);
std::string method_label(const MethodSpec& method);

enum class TuneMethod { Grid, GD };

//! Full recipe for a replicated benchmark run. Data comes from the
//! simulation design unless an external dataset is supplied; every
//! replication derives its seeds as base_seed + replication index.
//! GD tuning applies to the differentiable families and falls back to the
//! grid for the others.
struct BenchmarkPlan {
    SimDesign sim;
    std::optional<Dataset> data;
    std::vector<LearnerSpec> roster;
    std::vector<MethodSpec> methods;
    TuneMethod tuning = TuneMethod::Grid;
    GridConfig grid;
    GDConfig gd;
    int kappa = 5;
    SplitPlan split;
    int replications = 1;
    std::uint64_t base_seed = 0;
    int threads = 1;
    bool record_timing = true;  // false pins both time columns to 0
};

//! One method (or base learner) evaluated on one replication's test part.
//! Failed replications keep their rows with ok = false and NaN values.
struct ReportRow {
    std::string method;
    int replication = 0;
    double rmse = 0.0;
    double tune_ms = 0.0;
    double predict_ms = 0.0;
    bool ok = true;
};

struct MethodSummary {
    std::string method;
    int completed = 0;
    double mean_rmse = 0.0;
    double se_rmse = 0.0;  // sample sd / sqrt(completed), 0 below 2 rows
    double mean_tune_ms = 0.0;
    double mean_predict_ms = 0.0;
};

struct BenchmarkReport {
    std::vector<ReportRow> rows;  // replication-major, roster then methods
    std::vector<MethodSummary> summary;
    std::vector<std::string> errors;  // one entry per failed replication
    int replications = 0;
};

BenchmarkReport run_benchmark(const BenchmarkPlan& plan);

//! Report file: header `method,replication,rmse,tune_ms,predict_ms`, one
//! row per (method, replication) in report order.
void write_report_csv(const std::string& path, const BenchmarkReport& report);

}  // namespace kcobra
