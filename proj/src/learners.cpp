#include "kcobra/learners.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "kcobra/common.hpp"

namespace kcobra {

namespace {

void validate_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() < 1 || X.cols() < 1) {
        throw DataError("learner input must have at least one row and column");
    }
    if (y.size() != X.rows()) {
        throw DataError("response length does not match input rows");
    }
    if (!X.allFinite() || !y.allFinite()) {
        throw DataError("learner input contains non-finite values");
    }
}

FittedLearner fit_knn(LearnerSpec spec, const Eigen::MatrixXd& X,
                      const Eigen::VectorXd& y) {
    if (spec.k < 1) throw std::invalid_argument("knn requires k >= 1");
    if (spec.k > X.rows()) {
        std::cerr << "note: knn k=" << spec.k << " reduced to n=" << X.rows()
                  << "\n";
        spec.k = static_cast<int>(X.rows());
    }
    FittedLearner model;
    model.spec = spec;
    model.train_x = X;
    model.train_y = y;
    return model;
}

FittedLearner fit_ridge(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& y) {
    if (spec.ridge_lambda < 0.0) {
        throw std::invalid_argument("ridge lambda must be nonnegative");
    }
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const Eigen::VectorXd mean = X.colwise().mean();
    Eigen::VectorXd sd(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        // A constant column is degenerate even when rounding leaves its
        // computed variance marginally above zero.
        if (X.col(j).minCoeff() == X.col(j).maxCoeff()) {
            sd[j] = 0.0;
            continue;
        }
        const double var =
            (X.col(j).array() - mean[j]).square().sum() / static_cast<double>(n);
        sd[j] = std::sqrt(var);
    }
    Eigen::MatrixXd Z(n, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        if (sd[j] == 0.0) {
            Z.col(j).setZero();
        } else {
            Z.col(j) = (X.col(j).array() - mean[j]) / sd[j];
        }
    }
    const double y_mean = y.mean();
    const Eigen::VectorXd yc = y.array() - y_mean;

    Eigen::MatrixXd gram = Z.transpose() * Z;
    gram.diagonal().array() += spec.ridge_lambda;
    Eigen::VectorXd bz = gram.colPivHouseholderQr().solve(Z.transpose() * yc);

    FittedLearner model;
    model.spec = spec;
    model.coef.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        model.coef[j] = sd[j] == 0.0 ? 0.0 : bz[j] / sd[j];
    }
    model.intercept = y_mean - model.coef.dot(mean);
    return model;
}

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double sse_gain = 0.0;
};

double subset_sse(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx) {
    double mean = 0.0;
    for (Eigen::Index i : idx) mean += y[i];
    mean /= static_cast<double>(idx.size());
    double sse = 0.0;
    for (Eigen::Index i : idx) {
        const double r = y[i] - mean;
        sse += r * r;
    }
    return sse;
}

SplitChoice best_split(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const std::vector<Eigen::Index>& idx, int min_leaf) {
    SplitChoice best;
    const double parent_sse = subset_sse(y, idx);
    std::vector<Eigen::Index> order(idx);
    for (int feature = 0; feature < X.cols(); ++feature) {
        std::sort(order.begin(), order.end(),
                  [&](Eigen::Index a, Eigen::Index b) {
                      if (X(a, feature) != X(b, feature)) {
                          return X(a, feature) < X(b, feature);
                      }
                      return a < b;
                  });
        // Prefix sums over the sorted order give each candidate split in O(1).
        double left_sum = 0.0, left_sq = 0.0;
        double total_sum = 0.0, total_sq = 0.0;
        for (Eigen::Index i : order) {
            total_sum += y[i];
            total_sq += y[i] * y[i];
        }
        const double n = static_cast<double>(order.size());
        for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
            const double yi = y[order[pos]];
            left_sum += yi;
            left_sq += yi * yi;
            const double lo = X(order[pos], feature);
            const double hi = X(order[pos + 1], feature);
            if (lo == hi) continue;  // not a boundary between unique values
            const double ln = static_cast<double>(pos + 1);
            const double rn = n - ln;
            if (ln < min_leaf || rn < min_leaf) continue;
            const double right_sum = total_sum - left_sum;
            const double right_sq = total_sq - left_sq;
            const double sse = (left_sq - left_sum * left_sum / ln) +
                               (right_sq - right_sum * right_sum / rn);
            const double gain = parent_sse - sse;
            if (gain > best.sse_gain) {
                best.sse_gain = gain;
                best.feature = feature;
                best.threshold = lo + (hi - lo) / 2.0;
            }
        }
    }
    return best;
}

bool constant_responses(const Eigen::VectorXd& y,
                        const std::vector<Eigen::Index>& idx) {
    for (Eigen::Index i : idx) {
        if (y[i] != y[idx.front()]) return false;
    }
    return true;
}

int grow_tree(FittedLearner& model, const Eigen::MatrixXd& X,
              const Eigen::VectorXd& y, std::vector<Eigen::Index> idx,
              int depth) {
    const int node_id = static_cast<int>(model.nodes.size());
    model.nodes.emplace_back();
    double mean = 0.0;
    for (Eigen::Index i : idx) mean += y[i];
    mean /= static_cast<double>(idx.size());
    model.nodes[static_cast<std::size_t>(node_id)].value = mean;

    if (depth >= model.spec.max_depth ||
        static_cast<int>(idx.size()) < 2 * model.spec.min_leaf ||
        constant_responses(y, idx)) {
        return node_id;
    }
    const SplitChoice split = best_split(X, y, idx, model.spec.min_leaf);
    if (split.feature < 0 || split.sse_gain <= 0.0) return node_id;

    std::vector<Eigen::Index> left, right;
    for (Eigen::Index i : idx) {
        (X(i, split.feature) <= split.threshold ? left : right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    const int left_id = grow_tree(model, X, y, std::move(left), depth + 1);
    const int right_id = grow_tree(model, X, y, std::move(right), depth + 1);
    TreeNode& node = model.nodes[static_cast<std::size_t>(node_id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left_id;
    node.right = right_id;
    return node_id;
}

FittedLearner fit_tree(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                       const Eigen::VectorXd& y) {
    if (spec.max_depth < 1) {
        throw std::invalid_argument("tree requires max_depth >= 1");
    }
    if (spec.min_leaf < 1) {
        throw std::invalid_argument("tree requires min_leaf >= 1");
    }
    if (X.rows() < spec.min_leaf) {
        throw DataError("tree requires at least min_leaf samples");
    }
    FittedLearner model;
    model.spec = spec;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    grow_tree(model, X, y, std::move(idx), 0);
    return model;
}

}  // namespace

FittedLearner fit(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                  const Eigen::VectorXd& y) {
    validate_inputs(X, y);
    switch (spec.kind) {
        case LearnerKind::KNN: return fit_knn(spec, X, y);
        case LearnerKind::Ridge: return fit_ridge(spec, X, y);
        case LearnerKind::Tree: return fit_tree(spec, X, y);
    }
    throw std::logic_error("unknown learner kind");
}

namespace {

double predict_knn(const FittedLearner& model, const Eigen::RowVectorXd& x) {
    const Eigen::Index n = model.train_x.rows();
    std::vector<std::pair<double, Eigen::Index>> dist;
    dist.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double d2 = 0.0;
        for (Eigen::Index j = 0; j < model.train_x.cols(); ++j) {
            const double diff = model.train_x(i, j) - x[j];
            d2 += diff * diff;
        }
        dist.emplace_back(d2, i);
    }
    const auto kth = dist.begin() + model.spec.k;
    std::partial_sort(dist.begin(), kth, dist.end());  // (d2, index) pairs
    double sum = 0.0;
    for (int i = 0; i < model.spec.k; ++i) {
        sum += model.train_y[dist[static_cast<std::size_t>(i)].second];
    }
    return sum / static_cast<double>(model.spec.k);
}

double predict_tree(const FittedLearner& model, const Eigen::RowVectorXd& x) {
    int node = 0;
    while (model.nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const TreeNode& n = model.nodes[static_cast<std::size_t>(node)];
        node = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return model.nodes[static_cast<std::size_t>(node)].value;
}

}  // namespace

Eigen::VectorXd predict(const FittedLearner& model, const Eigen::MatrixXd& X) {
    Eigen::Index expected_cols = 0;
    switch (model.spec.kind) {
        case LearnerKind::KNN: expected_cols = model.train_x.cols(); break;
        case LearnerKind::Ridge: expected_cols = model.coef.size(); break;
        case LearnerKind::Tree: expected_cols = -1; break;  // checked per node
    }
    if (expected_cols >= 0 && X.cols() != expected_cols) {
        throw DataError("query column count does not match the fitted learner");
    }
    if (!X.allFinite()) throw DataError("query contains non-finite values");

    Eigen::VectorXd out(X.rows());
    switch (model.spec.kind) {
        case LearnerKind::KNN:
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                out[i] = predict_knn(model, X.row(i));
            }
            break;
        case LearnerKind::Ridge:
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                out[i] = model.intercept + model.coef.dot(X.row(i));
            }
            break;
        case LearnerKind::Tree:
            for (const TreeNode& n : model.nodes) {
                if (n.feature >= X.cols()) {
                    throw DataError(
                        "query column count does not match the fitted tree");
                }
            }
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                out[i] = predict_tree(model, X.row(i));
            }
            break;
    }
    return out;
}

PredictionMatrix build_prediction_matrix(
    const std::vector<FittedLearner>& learners, const Eigen::MatrixXd& X,
    const Eigen::VectorXd& y) {
    if (learners.empty()) throw DataError("empty learner roster");
    validate_inputs(X, y);
    PredictionMatrix pm;
    pm.rows.resize(X.rows(), static_cast<Eigen::Index>(learners.size()));
    pm.responses = y;
    std::vector<LearnerSpec> specs;
    specs.reserve(learners.size());
    for (std::size_t m = 0; m < learners.size(); ++m) {
        pm.rows.col(static_cast<Eigen::Index>(m)) = predict(learners[m], X);
        specs.push_back(learners[m].spec);
    }
    pm.learner_names = learner_labels(specs);
    return pm;
}

namespace {

std::vector<std::string_view> split_view(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    while (true) {
        auto pos = text.find(sep);
        if (pos == std::string_view::npos) {
            parts.push_back(text);
            return parts;
        }
        parts.push_back(text.substr(0, pos));
        text.remove_prefix(pos + 1);
    }
}

long parse_int(std::string_view text, const char* what) {
    const double value = parse_double(text);
    const long rounded = std::lround(value);
    if (static_cast<double>(rounded) != value) {
        throw DataError(std::string(what) + " must be an integer");
    }
    return rounded;
}

}  // namespace

std::vector<LearnerSpec> parse_roster(std::string_view roster) {
    std::vector<LearnerSpec> specs;
    for (std::string_view entry : split_view(roster, ',')) {
        if (entry.empty()) throw DataError("empty roster entry");
        auto parts = split_view(entry, ':');
        LearnerSpec spec;
        if (parts[0] == "knn") spec.kind = LearnerKind::KNN;
        else if (parts[0] == "ridge") spec.kind = LearnerKind::Ridge;
        else if (parts[0] == "tree") spec.kind = LearnerKind::Tree;
        else {
            throw DataError("unknown learner kind: '" + std::string(parts[0]) +
                            "'");
        }
        for (std::size_t i = 1; i < parts.size(); ++i) {
            auto kv = split_view(parts[i], '=');
            if (kv.size() != 2) {
                throw DataError("malformed learner parameter: '" +
                                std::string(parts[i]) + "'");
            }
            if (spec.kind == LearnerKind::KNN && kv[0] == "k") {
                const long k = parse_int(kv[1], "knn k");
                if (k < 1) throw DataError("knn k must be at least 1");
                spec.k = static_cast<int>(k);
            } else if (spec.kind == LearnerKind::Ridge && kv[0] == "lambda") {
                const double lambda = parse_double(kv[1]);
                if (lambda < 0.0) {
                    throw DataError("ridge lambda must be nonnegative");
                }
                spec.ridge_lambda = lambda;
            } else if (spec.kind == LearnerKind::Tree && kv[0] == "max_depth") {
                const long depth = parse_int(kv[1], "tree max_depth");
                if (depth < 1) throw DataError("tree max_depth must be >= 1");
                spec.max_depth = static_cast<int>(depth);
            } else if (spec.kind == LearnerKind::Tree && kv[0] == "min_leaf") {
                const long leaf = parse_int(kv[1], "tree min_leaf");
                if (leaf < 1) throw DataError("tree min_leaf must be >= 1");
                spec.min_leaf = static_cast<int>(leaf);
            } else {
                throw DataError("unknown parameter '" + std::string(kv[0]) +
                                "' for learner '" + std::string(parts[0]) +
                                "'");
            }
        }
        specs.push_back(spec);
    }
    if (specs.empty()) throw DataError("empty learner roster");
    return specs;
}

std::vector<std::string> learner_labels(const std::vector<LearnerSpec>& specs) {
    std::vector<std::string> labels;
    labels.reserve(specs.size());
    for (const LearnerSpec& spec : specs) {
        std::string base;
        switch (spec.kind) {
            case LearnerKind::KNN: base = "knn"; break;
            case LearnerKind::Ridge: base = "ridge"; break;
            case LearnerKind::Tree: base = "tree"; break;
        }
        int repeat = 1;
        std::string label = base;
        while (std::find(labels.begin(), labels.end(), label) != labels.end()) {
            label = base + std::to_string(++repeat);
        }
        labels.push_back(label);
    }
    return labels;
}

}  // namespace kcobra
