#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kcobra/benchmark.hpp"
#include "kcobra/common.hpp"
#include "kcobra/csv.hpp"
#include "kcobra/model_io.hpp"

namespace {

using namespace kcobra;

//! Flag bundle shared by the tuning subcommands.
struct TuneFlags {
    std::string method = "grid";
    int kappa = 5;
    double grid_min = 1e-100;
    double grid_max = 10.0;
    int grid_count = 500;
    std::optional<double> h0;
    double lr = 0.01;
    double tol = 1e-6;
    int max_iter = 480;
};

void add_tune_flags(CLI::App* cmd, TuneFlags& flags) {
    cmd->add_option("--tune", flags.method, "Bandwidth tuner")
        ->check(CLI::IsMember({"grid", "gd"}));
    cmd->add_option("--kappa", flags.kappa,
                    "Cross-validation folds for consensual tuning")
        ->check(CLI::Range(2, 100));
    cmd->add_option("--grid-min", flags.grid_min, "Smallest grid bandwidth");
    cmd->add_option("--grid-max", flags.grid_max, "Largest grid bandwidth");
    cmd->add_option("--grid-count", flags.grid_count, "Grid size")
        ->check(CLI::Range(1, 1000000));
    cmd->add_option("--h0", flags.h0, "Descent start (default: sampled)");
    cmd->add_option("--lr", flags.lr, "Descent learning rate");
    cmd->add_option("--tol", flags.tol, "Descent gradient tolerance");
    cmd->add_option("--max-iter", flags.max_iter, "Descent iteration cap")
        ->check(CLI::Range(1, 100000000));
}

GridConfig to_grid(const TuneFlags& flags) {
    GridConfig grid;
    grid.h_min = flags.grid_min;
    grid.h_max = flags.grid_max;
    grid.count = flags.grid_count;
    return grid;
}

GDConfig to_gd(const TuneFlags& flags, std::uint64_t seed) {
    GDConfig cfg;
    cfg.h0 = flags.h0;
    cfg.lambda = flags.lr;
    cfg.delta = flags.tol;
    cfg.max_iter = flags.max_iter;
    cfg.seed = seed;
    return cfg;
}

InputDesign parse_design(const std::string& text) {
    return text == "correlated" ? InputDesign::Correlated
                                : InputDesign::Uncorrelated;
}

int run_simulate(int model, const std::string& design_text, Eigen::Index n,
                 Eigen::Index d, std::uint64_t seed, const std::string& out) {
    SimDesign design = default_design(model, parse_design(design_text), seed);
    if (n > 0) design.n = n;
    if (d > 0) design.d = d;
    write_dataset_csv(out, generate_dataset(design));
    std::cout << "wrote " << design.n << " rows, " << design.d
              << " features to " << out << "\n";
    return 0;
}

//! Splits a dataset into the learner half and the aggregation half.
std::pair<Dataset, Dataset> halve_dataset(const Dataset& data,
                                          std::uint64_t seed) {
    const Eigen::Index n = data.x.rows();
    if (n < 4) throw DataError("fitting needs at least 4 rows");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const Eigen::Index half = (n + 1) / 2;
    std::vector<Eigen::Index> first(order.begin(), order.begin() + half);
    std::vector<Eigen::Index> second(order.begin() + half, order.end());
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    auto take = [&](const std::vector<Eigen::Index>& idx) {
        Dataset part;
        part.x.resize(static_cast<Eigen::Index>(idx.size()), data.x.cols());
        part.y.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r) {
            part.x.row(static_cast<Eigen::Index>(r)) = data.x.row(idx[r]);
            part.y[static_cast<Eigen::Index>(r)] = data.y[idx[r]];
        }
        return part;
    };
    return {take(first), take(second)};
}

struct TuneOutcome {
    BandwidthParam param;
    double loss = 0.0;
    int evaluations = 0;
    std::string note;
};

TuneOutcome tune_pm(const PredictionMatrix& pm, const KernelSpec& kernel,
                    const TuneFlags& flags, std::uint64_t seed,
                    const std::string& trace_path) {
    const CVPlan folds = make_cv_plan(pm.rows.rows(), flags.kappa, seed);
    TuneOutcome outcome;
    if (flags.method == "gd" && is_differentiable(kernel.family)) {
        const GDResult res =
            gradient_descent(pm, folds, kernel, to_gd(flags, seed));
        outcome.param = {res.h, Parametrization::InverseScale};
        outcome.loss = res.loss;
        outcome.evaluations = res.evaluations;
        outcome.note = res.converged ? "converged" : "iteration cap reached";
        if (!trace_path.empty()) write_gd_trace_csv(trace_path, res);
        return outcome;
    }
    if (flags.method == "gd") {
        std::cerr << "note: " << family_name(kernel.family)
                  << " has no descent parametrization; using the grid\n";
    }
    const GridResult res = grid_search(pm, folds, kernel, to_grid(flags));
    outcome.param = {res.h, Parametrization::Scale};
    outcome.loss = res.loss;
    outcome.evaluations = static_cast<int>(res.trace.size());
    outcome.note = "grid minimum";
    if (!trace_path.empty()) write_grid_trace_csv(trace_path, res);
    return outcome;
}

void print_tune_outcome(const TuneOutcome& outcome) {
    std::cout << "h=" << format_double(outcome.param.h) << " parametrization="
              << (outcome.param.parametrization == Parametrization::Scale
                      ? "scale"
                      : "inverse_scale")
              << " loss=" << format_double(outcome.loss)
              << " evaluations=" << outcome.evaluations << " ("
              << outcome.note << ")\n";
}

int run_fit(const std::string& data_path, const std::string& pm_path,
            const std::string& roster_text, const std::string& kernel_token,
            const std::string& fallback, const TuneFlags& flags,
            std::uint64_t seed, const std::string& out,
            const std::string& trace_path) {
    const KernelSpec kernel = parse_kernel_token(kernel_token);
    PredictionMatrix pm;
    if (!pm_path.empty()) {
        pm = read_prediction_matrix_csv(pm_path);
    } else {
        const Dataset data = read_dataset_csv(data_path);
        const auto [learner_part, aggregate_part] = halve_dataset(data, seed);
        std::vector<FittedLearner> fitted;
        for (const LearnerSpec& spec : parse_roster(roster_text)) {
            fitted.push_back(fit(spec, learner_part.x, learner_part.y));
        }
        pm = build_prediction_matrix(fitted, aggregate_part.x,
                                     aggregate_part.y);
    }

    const TuneOutcome outcome = tune_pm(pm, kernel, flags, seed, trace_path);
    AggregatorModel model;
    model.predictions = pm;
    model.norm = fit_normalization(pm.rows);
    model.kernel = kernel;
    model.bandwidth = outcome.param;
    model.zero_mass_fallback = fallback == "train_mean"
                                   ? ZeroMassFallback::TrainMean
                                   : ZeroMassFallback::PaperZero;
    save_model(out, model);
    print_tune_outcome(outcome);
    std::cout << "wrote model with " << pm.rows.rows() << " retained rows to "
              << out << "\n";
    return 0;
}

int run_predict(const std::string& model_path, const std::string& query_path,
                const std::string& out) {
    const AggregatorModel model = load_model(model_path);
    const Dataset queries = read_query_csv(query_path);
    const PredictResult result = predict(model, queries.x);
    write_predictions_csv(out, result);
    std::size_t starved = 0;
    for (char flag : result.zero_mass) starved += flag ? 1 : 0;
    std::cout << "wrote " << result.predictions.size() << " predictions to "
              << out;
    if (starved > 0) std::cout << " (" << starved << " with zero mass)";
    std::cout << "\n";
    return 0;
}

int run_tune(const std::string& pm_path, const std::string& kernel_token,
             const TuneFlags& flags, std::uint64_t seed,
             const std::string& out) {
    const PredictionMatrix pm = read_prediction_matrix_csv(pm_path);
    const KernelSpec kernel = parse_kernel_token(kernel_token);
    print_tune_outcome(tune_pm(pm, kernel, flags, seed, out));
    return 0;
}

int run_benchmark_cmd(int model, const std::string& design_text,
                      Eigen::Index n, Eigen::Index d,
                      const std::string& data_path,
                      const std::string& roster_text,
                      const std::string& methods_text, const TuneFlags& flags,
                      int replications, std::uint64_t seed, int threads,
                      const std::string& timing, const std::string& out) {
    BenchmarkPlan plan;
    if (!data_path.empty()) {
        plan.data = read_dataset_csv(data_path);
    } else {
        plan.sim = default_design(model, parse_design(design_text), seed);
        if (n > 0) plan.sim.n = n;
        if (d > 0) plan.sim.d = d;
    }
    plan.roster = parse_roster(roster_text);
    plan.methods = parse_methods(methods_text);
    plan.tuning = flags.method == "gd" ? TuneMethod::GD : TuneMethod::Grid;
    plan.grid = to_grid(flags);
    plan.gd = to_gd(flags, seed);
    plan.kappa = flags.kappa;
    plan.replications = replications;
    plan.base_seed = seed;
    plan.threads = threads;
    plan.record_timing = timing != "off";

    const BenchmarkReport report = run_benchmark(plan);
    if (!out.empty()) write_report_csv(out, report);

    for (const std::string& error : report.errors) {
        std::cerr << "warning: " << error << "\n";
    }
    std::cout << "method,mean_rmse,se_rmse,mean_tune_ms,mean_predict_ms,"
                 "completed\n";
    for (const MethodSummary& summary : report.summary) {
        std::cout << summary.method << ','
                  << format_double(summary.mean_rmse) << ','
                  << format_double(summary.se_rmse) << ','
                  << format_double(summary.mean_tune_ms) << ','
                  << format_double(summary.mean_predict_ms) << ','
                  << summary.completed << '/' << report.replications << "\n";
    }
    if (!out.empty()) {
        std::cout << "wrote per-replication report to " << out << "\n";
    }
    return report.errors.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "kcobra: kernel-weighted consensual aggregation of regressors"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
    app.add_option("--seed", seed, "Base RNG seed")->capture_default_str();
    app.add_option("--threads", threads, "Worker threads for replications")
        ->check(CLI::Range(1, 1024))
        ->capture_default_str();
    app.add_option("--out", out, "Output file path");
    app.fallthrough();

    // simulate
    auto* sim_cmd =
        app.add_subcommand("simulate", "Generate a synthetic dataset CSV");
    int sim_model = 1;
    std::string sim_design = "uncorrelated";
    Eigen::Index sim_n = 0, sim_d = 0;
    sim_cmd->add_option("--model", sim_model, "Model id")
        ->check(CLI::Range(1, 10))
        ->required();
    sim_cmd->add_option("--design", sim_design, "Input distribution")
        ->check(CLI::IsMember({"uncorrelated", "correlated"}));
    sim_cmd->add_option("--n", sim_n, "Rows (default: per-model)");
    sim_cmd->add_option("--d", sim_d, "Columns (default: per-model)");

    // fit
    auto* fit_cmd = app.add_subcommand(
        "fit", "Fit base learners, tune the bandwidth, save a model file");
    std::string fit_data, fit_pm;
    std::string fit_roster = "knn:k=5,ridge:lambda=1.0,tree:max_depth=8:min_leaf=5";
    std::string fit_kernel = "gauss";
    std::string fit_fallback = "zero";
    std::string fit_trace;
    TuneFlags fit_flags;
    fit_cmd->add_option("--data", fit_data,
                        "Dataset CSV (halved into learner/aggregation parts)");
    fit_cmd->add_option("--pm", fit_pm,
                        "Prediction-matrix CSV (skips the roster)");
    fit_cmd->add_option("--roster", fit_roster, "Base learners")
        ->capture_default_str();
    fit_cmd->add_option("--kernel", fit_kernel, "Kernel token")
        ->capture_default_str();
    fit_cmd
        ->add_option("--fallback", fit_fallback,
                     "Prediction at zero-mass queries")
        ->check(CLI::IsMember({"zero", "train_mean"}));
    fit_cmd->add_option("--trace", fit_trace, "Tuning trace CSV path");
    add_tune_flags(fit_cmd, fit_flags);

    // predict
    auto* predict_cmd = app.add_subcommand(
        "predict", "Predict from a model file and a query CSV");
    std::string predict_model, predict_queries;
    predict_cmd->add_option("--model", predict_model, "Model file")
        ->required();
    predict_cmd
        ->add_option("--queries", predict_queries,
                     "Query CSV in prediction space (one column per learner)")
        ->required();

    // tune
    auto* tune_cmd = app.add_subcommand(
        "tune", "Tune a bandwidth on a prediction-matrix CSV");
    std::string tune_pm_path, tune_kernel = "gauss";
    TuneFlags tune_flags;
    tune_cmd->add_option("--pm", tune_pm_path, "Prediction-matrix CSV")
        ->required();
    tune_cmd->add_option("--kernel", tune_kernel, "Kernel token")
        ->capture_default_str();
    add_tune_flags(tune_cmd, tune_flags);

    // benchmark
    auto* bench_cmd = app.add_subcommand(
        "benchmark", "Replicated simulate/fit/tune/evaluate runs");
    int bench_model = 1;
    std::string bench_design = "uncorrelated";
    Eigen::Index bench_n = 0, bench_d = 0;
    std::string bench_data;
    std::string bench_roster =
        "knn:k=5,ridge:lambda=1.0,tree:max_depth=8:min_leaf=5";
    std::string bench_methods = "consensual:gauss";
    std::string bench_timing = "wall";
    int bench_reps = 1;
    TuneFlags bench_flags;
    bench_cmd->add_option("--model", bench_model, "Model id")
        ->check(CLI::Range(1, 10));
    bench_cmd->add_option("--design", bench_design, "Input distribution")
        ->check(CLI::IsMember({"uncorrelated", "correlated"}));
    bench_cmd->add_option("--n", bench_n, "Rows (default: per-model)");
    bench_cmd->add_option("--d", bench_d, "Columns (default: per-model)");
    bench_cmd->add_option("--data", bench_data,
                          "External dataset CSV (replaces --model)");
    bench_cmd->add_option("--roster", bench_roster, "Base learners")
        ->capture_default_str();
    bench_cmd->add_option("--methods", bench_methods, "Aggregation methods")
        ->capture_default_str();
    bench_cmd->add_option("--reps", bench_reps, "Replications")
        ->check(CLI::Range(1, 1000000))
        ->capture_default_str();
    bench_cmd
        ->add_option("--timing", bench_timing,
                     "wall: record wall-clock; off: pin time columns to 0")
        ->check(CLI::IsMember({"wall", "off"}));
    add_tune_flags(bench_cmd, bench_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim_cmd->parsed()) {
            if (out.empty()) throw DataError("simulate needs --out");
            return run_simulate(sim_model, sim_design, sim_n, sim_d, seed,
                                out);
        }
        if (fit_cmd->parsed()) {
            if (out.empty()) throw DataError("fit needs --out");
            if (fit_data.empty() == fit_pm.empty()) {
                throw DataError("fit needs exactly one of --data or --pm");
            }
            return run_fit(fit_data, fit_pm, fit_roster, fit_kernel,
                           fit_fallback, fit_flags, seed, out, fit_trace);
        }
        if (predict_cmd->parsed()) {
            if (out.empty()) throw DataError("predict needs --out");
            return run_predict(predict_model, predict_queries, out);
        }
        if (tune_cmd->parsed()) {
            return run_tune(tune_pm_path, tune_kernel, tune_flags, seed, out);
        }
        if (bench_cmd->parsed()) {
            if (!bench_data.empty() &&
                (bench_cmd->count("--model") > 0 || bench_n > 0 ||
                 bench_d > 0)) {
                throw DataError(
                    "benchmark takes either --data or a --model design");
            }
            return run_benchmark_cmd(bench_model, bench_design, bench_n,
                                     bench_d, bench_data, bench_roster,
                                     bench_methods, bench_flags, bench_reps,
                                     seed, threads, bench_timing, out);
        }
        return 1;
    } catch (const DataError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return 2;
    } catch (const NumericError& err) {
        std::cerr << "numeric error: " << err.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    }
}
