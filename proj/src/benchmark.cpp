#include "kcobra/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "kcobra/common.hpp"

namespace kcobra {

namespace {

std::vector<std::string_view> split_view(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    while (true) {
        const auto pos = text.find(sep);
        if (pos == std::string_view::npos) {
            parts.push_back(text);
            return parts;
        }
        parts.push_back(text.substr(0, pos));
        text.remove_prefix(pos + 1);
    }
}

MethodSpec parse_one_method(std::string_view entry) {
    MethodSpec method;
    constexpr std::string_view consensual_prefix = "consensual:";
    if (entry.substr(0, consensual_prefix.size()) == consensual_prefix) {
        method.kind = MethodSpec::Kind::Consensual;
        method.kernel =
            parse_kernel_token(entry.substr(consensual_prefix.size()));
        return method;
    }
    const auto parts = split_view(entry, ':');
    if (parts[0] == "cobra") {
        method.kind = MethodSpec::Kind::Cobra;
    } else if (parts[0] == "kernelcobra") {
        method.kind = MethodSpec::Kind::KernelCobra;
    } else {
        throw DataError("unknown method: '" + std::string(entry) + "'");
    }
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto kv = split_view(parts[i], '=');
        if (kv.size() != 2) {
            throw DataError("malformed method parameter: '" +
                            std::string(parts[i]) + "'");
        }
        if (method.kind == MethodSpec::Kind::Cobra && kv[0] == "alpha") {
            const double alpha = parse_double(kv[1]);
            if (!(alpha > 0.0) || alpha > 1.0) {
                throw DataError("cobra alpha must lie in (0, 1]");
            }
            method.alpha = alpha;
        } else if (method.kind == MethodSpec::Kind::KernelCobra &&
                   kv[0] == "sigma") {
            const double sigma = parse_double(kv[1]);
            if (!(sigma > 0.0)) {
                throw DataError("kernelcobra sigma must be positive");
            }
            method.sigma = sigma;
        } else {
            throw DataError("unknown parameter '" + std::string(kv[0]) +
                            "' for method '" + std::string(parts[0]) + "'");
        }
    }
    return method;
}

}  // namespace

std::vector<MethodSpec> parse_methods(std::string_view text) {
    std::vector<MethodSpec> methods;
    for (std::string_view entry : split_view(text, ',')) {
        if (entry.empty()) throw DataError("empty method entry");
        methods.push_back(parse_one_method(entry));
    }
    return methods;
}

std::string method_label(const MethodSpec& method) {
    switch (method.kind) {
        case MethodSpec::Kind::Consensual:
            return "consensual:" + kernel_token(method.kernel);
        case MethodSpec::Kind::Cobra:
            return method.alpha ? "cobra:alpha=" + format_double(*method.alpha)
                                : "cobra";
        case MethodSpec::Kind::KernelCobra:
            return method.sigma != 1.0
                       ? "kernelcobra:sigma=" + format_double(method.sigma)
                       : "kernelcobra";
    }
    throw std::logic_error("unknown method kind");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start)
        .count();
}

void validate_plan(const BenchmarkPlan& plan) {
    if (plan.roster.empty()) throw DataError("benchmark roster is empty");
    if (plan.methods.empty()) {
        throw DataError("benchmark needs at least one method");
    }
    if (plan.replications < 1) {
        throw DataError("benchmark needs at least one replication");
    }
    if (plan.threads < 1) throw DataError("thread count must be positive");
    if (plan.kappa < 2) throw DataError("cross-validation needs kappa >= 2");
    std::vector<std::string> labels;
    for (const MethodSpec& method : plan.methods) {
        labels.push_back(method_label(method));
    }
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
        throw DataError("duplicate method in benchmark plan");
    }
}

// Halves the retained rows into tuning fit/validation parts by seeded
// shuffle; both keep the original row order internally.
std::pair<PredictionMatrix, PredictionMatrix> halve_pm(
    const PredictionMatrix& pm, std::uint64_t seed) {
    const Eigen::Index l = pm.rows.rows();
    if (l < 2) throw DataError("tuning split needs at least two rows");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(l));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const Eigen::Index half = (l + 1) / 2;
    std::vector<Eigen::Index> fit_idx(order.begin(), order.begin() + half);
    std::vector<Eigen::Index> val_idx(order.begin() + half, order.end());
    std::sort(fit_idx.begin(), fit_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    auto take = [&](const std::vector<Eigen::Index>& idx) {
        PredictionMatrix part;
        part.rows.resize(static_cast<Eigen::Index>(idx.size()),
                         pm.rows.cols());
        part.responses.resize(static_cast<Eigen::Index>(idx.size()));
        part.learner_names = pm.learner_names;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            part.rows.row(static_cast<Eigen::Index>(r)) = pm.rows.row(idx[r]);
            part.responses[static_cast<Eigen::Index>(r)] =
                pm.responses[idx[r]];
        }
        return part;
    };
    return {take(fit_idx), take(val_idx)};
}

struct TunedConsensual {
    BandwidthParam param;
    int evaluations = 0;
};

TunedConsensual tune_consensual(const PredictionMatrix& pm,
                                const KernelSpec& kernel,
                                const BenchmarkPlan& plan,
                                std::uint64_t seed) {
    const CVPlan folds = make_cv_plan(pm.rows.rows(), plan.kappa, seed);
    TunedConsensual tuned;
    if (plan.tuning == TuneMethod::GD && is_differentiable(kernel.family)) {
        GDConfig cfg = plan.gd;
        cfg.seed = seed;
        const GDResult res = gradient_descent(pm, folds, kernel, cfg);
        tuned.param = {res.h, Parametrization::InverseScale};
        tuned.evaluations = res.evaluations;
        return tuned;
    }
    const GridResult res = grid_search(pm, folds, kernel, plan.grid);
    tuned.param = {res.h, Parametrization::Scale};
    tuned.evaluations = static_cast<int>(res.trace.size());
    return tuned;
}

struct TunedCobra {
    double h = 0.0;
    double alpha = 1.0;
};

// Joint scan over the consensus share and the threshold ladder; ties keep
// the smallest alpha, then the smallest h.
TunedCobra tune_cobra(const PredictionMatrix& pm, const BenchmarkPlan& plan,
                      std::optional<double> fixed_alpha, std::uint64_t seed) {
    const auto [fit_part, val_part] = halve_pm(pm, seed);
    const Eigen::Index m = pm.rows.cols();
    const std::vector<double> ladder = grid_values(plan.grid);
    const KernelSpec naive{KernelFamily::Naive, 1.0, 3.0};

    std::vector<double> alphas;
    if (fixed_alpha) {
        alphas.push_back(*fixed_alpha);
    } else {
        for (Eigen::Index j = 1; j <= m; ++j) {
            alphas.push_back(static_cast<double>(j) /
                             static_cast<double>(m));
        }
    }

    TunedCobra best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (double alpha : alphas) {
        for (double h : ladder) {
            const double loss =
                holdout_error(fit_part, val_part, naive,
                              {h, Parametrization::Scale}, alpha);
            if (loss < best_loss) {
                best_loss = loss;
                best = {h, alpha};
            }
        }
    }
    return best;
}

double tune_kernelcobra(const PredictionMatrix& pm, const BenchmarkPlan& plan,
                        double sigma, std::uint64_t seed) {
    const auto [fit_part, val_part] = halve_pm(pm, seed);
    double best_h = 0.0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (double h : grid_values(plan.grid)) {
        const double loss = holdout_error_percoord(fit_part, val_part, h, sigma);
        if (loss < best_loss) {  // strict: ties keep the smaller h
            best_loss = loss;
            best_h = h;
        }
    }
    return best_h;
}

Eigen::VectorXd predict_rowwise(const PredictionMatrix& pm,
                                const Eigen::MatrixXd& queries,
                                const MethodSpec& method, double h,
                                double alpha) {
    const NormalizationParams norm = fit_normalization(pm.rows);
    const Eigen::MatrixXd norm_rows = apply_normalization(norm, pm.rows);
    const Eigen::MatrixXd norm_queries = apply_normalization(norm, queries);
    Eigen::VectorXd out(queries.rows());
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        const Eigen::RowVectorXd query = norm_queries.row(q);
        const WeightResult w =
            method.kind == MethodSpec::Kind::Cobra
                ? cobra_weights(norm_rows, query, h, alpha)
                : kernelcobra_weights(norm_rows, query, h, method.sigma);
        out[q] = w.zero_mass ? 0.0 : w.weights.dot(pm.responses);
    }
    return out;
}

struct RepOutcome {
    std::vector<ReportRow> rows;
    std::optional<std::string> error;
};

RepOutcome run_replication(const BenchmarkPlan& plan, int rep,
                           const std::vector<std::string>& base_labels,
                           const std::vector<std::string>& method_labels) {
    const std::uint64_t rep_seed =
        plan.base_seed + static_cast<std::uint64_t>(rep);
    RepOutcome outcome;
    auto blank_rows = [&] {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (const auto& label : base_labels) {
            outcome.rows.push_back({label, rep, nan, nan, nan, false});
        }
        for (const auto& label : method_labels) {
            outcome.rows.push_back({label, rep, nan, nan, nan, false});
        }
    };

    try {
        Dataset data;
        if (plan.data) {
            data = *plan.data;
        } else {
            SimDesign design = plan.sim;
            design.seed = rep_seed;
            data = generate_dataset(design);
        }
        SplitPlan split_plan = plan.split;
        split_plan.seed = rep_seed;
        const DataSplit split = split_data(data.x, data.y, split_plan);

        std::vector<FittedLearner> fitted;
        std::vector<double> fit_ms;
        for (const LearnerSpec& spec : plan.roster) {
            const auto start = Clock::now();
            fitted.push_back(fit(spec, split.learner.x, split.learner.y));
            fit_ms.push_back(plan.record_timing ? elapsed_ms(start) : 0.0);
        }
        const PredictionMatrix pm = build_prediction_matrix(
            fitted, split.aggregate.x, split.aggregate.y);

        // Base predictions on the test part double as the aggregation
        // queries: methods weight in prediction space.
        Eigen::MatrixXd test_pred(split.test.x.rows(),
                                  static_cast<Eigen::Index>(fitted.size()));
        for (std::size_t m = 0; m < fitted.size(); ++m) {
            const auto start = Clock::now();
            test_pred.col(static_cast<Eigen::Index>(m)) =
                predict(fitted[m], split.test.x);
            outcome.rows.push_back(
                {base_labels[m], rep,
                 rmse(test_pred.col(static_cast<Eigen::Index>(m)),
                      split.test.y),
                 fit_ms[m], plan.record_timing ? elapsed_ms(start) : 0.0,
                 true});
        }

        for (std::size_t k = 0; k < plan.methods.size(); ++k) {
            const MethodSpec& method = plan.methods[k];
            const auto tune_start = Clock::now();
            Eigen::VectorXd predictions;
            double predict_ms = 0.0;
            if (method.kind == MethodSpec::Kind::Consensual) {
                const TunedConsensual tuned =
                    tune_consensual(pm, method.kernel, plan, rep_seed);
                const double tune_ms =
                    plan.record_timing ? elapsed_ms(tune_start) : 0.0;
                const auto predict_start = Clock::now();
                AggregatorModel model;
                model.predictions = pm;
                model.norm = fit_normalization(pm.rows);
                model.kernel = method.kernel;
                model.bandwidth = tuned.param;
                predictions = predict(model, test_pred).predictions;
                predict_ms =
                    plan.record_timing ? elapsed_ms(predict_start) : 0.0;
                outcome.rows.push_back({method_labels[k], rep,
                                        rmse(predictions, split.test.y),
                                        tune_ms, predict_ms, true});
                continue;
            }
            double h = 0.0;
            double alpha = 1.0;
            if (method.kind == MethodSpec::Kind::Cobra) {
                const TunedCobra tuned =
                    tune_cobra(pm, plan, method.alpha, rep_seed);
                h = tuned.h;
                alpha = tuned.alpha;
            } else {
                h = tune_kernelcobra(pm, plan, method.sigma, rep_seed);
            }
            const double tune_ms =
                plan.record_timing ? elapsed_ms(tune_start) : 0.0;
            const auto predict_start = Clock::now();
            predictions = predict_rowwise(pm, test_pred, method, h, alpha);
            predict_ms = plan.record_timing ? elapsed_ms(predict_start) : 0.0;
            outcome.rows.push_back({method_labels[k], rep,
                                    rmse(predictions, split.test.y), tune_ms,
                                    predict_ms, true});
        }
    } catch (const std::exception& err) {
        outcome.rows.clear();
        blank_rows();
        outcome.error =
            "replication " + std::to_string(rep) + ": " + err.what();
    }
    return outcome;
}

}  // namespace

BenchmarkReport run_benchmark(const BenchmarkPlan& plan) {
    validate_plan(plan);
    std::vector<std::string> base_labels;
    {
        std::vector<LearnerSpec> specs(plan.roster.begin(), plan.roster.end());
        base_labels = learner_labels(specs);
    }
    std::vector<std::string> method_labels;
    for (const MethodSpec& method : plan.methods) {
        method_labels.push_back(method_label(method));
    }

    std::vector<RepOutcome> outcomes(
        static_cast<std::size_t>(plan.replications));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int rep = next.fetch_add(1); rep < plan.replications;
             rep = next.fetch_add(1)) {
            outcomes[static_cast<std::size_t>(rep)] =
                run_replication(plan, rep, base_labels, method_labels);
        }
    };
    const int extra =
        std::min(plan.threads, plan.replications) - 1;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(std::max(extra, 0)));
    for (int t = 0; t < extra; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    BenchmarkReport report;
    report.replications = plan.replications;
    for (const RepOutcome& outcome : outcomes) {
        report.rows.insert(report.rows.end(), outcome.rows.begin(),
                           outcome.rows.end());
        if (outcome.error) report.errors.push_back(*outcome.error);
    }

    std::vector<std::string> all_labels = base_labels;
    all_labels.insert(all_labels.end(), method_labels.begin(),
                      method_labels.end());
    for (const std::string& label : all_labels) {
        MethodSummary summary;
        summary.method = label;
        std::vector<const ReportRow*> done;
        for (const ReportRow& row : report.rows) {
            if (row.method == label && row.ok) done.push_back(&row);
        }
        summary.completed = static_cast<int>(done.size());
        if (!done.empty()) {
            double rmse_sum = 0.0, tune_sum = 0.0, predict_sum = 0.0;
            for (const ReportRow* row : done) {
                rmse_sum += row->rmse;
                tune_sum += row->tune_ms;
                predict_sum += row->predict_ms;
            }
            const double n = static_cast<double>(done.size());
            summary.mean_rmse = rmse_sum / n;
            summary.mean_tune_ms = tune_sum / n;
            summary.mean_predict_ms = predict_sum / n;
            if (done.size() >= 2) {
                double ss = 0.0;
                for (const ReportRow* row : done) {
                    const double dev = row->rmse - summary.mean_rmse;
                    ss += dev * dev;
                }
                summary.se_rmse = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
            }
        }
        report.summary.push_back(summary);
    }
    return report;
}

void write_report_csv(const std::string& path, const BenchmarkReport& report) {
    std::ofstream file(path);
    if (!file) throw DataError("cannot write '" + path + "'");
    file << "method,replication,rmse,tune_ms,predict_ms\n";
    for (const ReportRow& row : report.rows) {
        file << row.method << ',' << row.replication << ','
             << format_double(row.rmse) << ',' << format_double(row.tune_ms)
             << ',' << format_double(row.predict_ms) << '\n';
    }
    file.flush();
    if (!file) throw DataError("write to '" + path + "' failed");
}

}  // namespace kcobra
