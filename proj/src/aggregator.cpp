#include "kcobra/aggregator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "kcobra/common.hpp"

namespace kcobra {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) {
        throw DataError(std::string(what) + " contains non-finite values");
    }
}

}  // namespace

void validate(const PredictionMatrix& pm) {
    if (pm.rows.rows() < 1 || pm.rows.cols() < 1) {
        throw DataError("prediction matrix must have at least one row and one column");
    }
    if (pm.responses.size() != pm.rows.rows()) {
        throw DataError("response count does not match prediction row count");
    }
    require_finite(pm.rows, "prediction matrix");
    if (!pm.responses.allFinite()) {
        throw DataError("responses contain non-finite values");
    }
    if (!pm.learner_names.empty() &&
        static_cast<Eigen::Index>(pm.learner_names.size()) != pm.rows.cols()) {
        throw DataError("learner name count does not match column count");
    }
}

NormalizationParams fit_normalization(const Eigen::MatrixXd& rows) {
    if (rows.rows() < 1 || rows.cols() < 1) {
        throw DataError("cannot fit normalization on an empty matrix");
    }
    require_finite(rows, "normalization input");
    NormalizationParams norm;
    norm.per_column_min = rows.colwise().minCoeff();
    norm.per_column_max = rows.colwise().maxCoeff();
    return norm;
}

Eigen::MatrixXd apply_normalization(const NormalizationParams& norm,
                                    const Eigen::MatrixXd& rows) {
    if (rows.cols() != norm.per_column_min.size()) {
        throw DataError("column count does not match normalization parameters");
    }
    require_finite(rows, "normalization input");
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (Eigen::Index m = 0; m < rows.cols(); ++m) {
        const double lo = norm.per_column_min[m];
        const double range = norm.per_column_max[m] - lo;
        if (range == 0.0) {
            out.col(m).setZero();
        } else {
            for (Eigen::Index i = 0; i < rows.rows(); ++i) {
                out(i, m) = (rows(i, m) - lo) / range;
            }
        }
    }
    return out;
}

DistanceSample DistanceCache::cross(Eigen::Index q, Eigen::Index j) const {
    DistanceSample d;
    d.sq_euclid = cross_sq_euclid(q, j);
    d.chebyshev = has_chebyshev ? cross_chebyshev(q, j) : kNaN;
    return d;
}

DistanceSample DistanceCache::self(Eigen::Index i, Eigen::Index j) const {
    DistanceSample d;
    d.sq_euclid = self_sq_euclid(i, j);
    d.chebyshev = has_chebyshev ? self_chebyshev(i, j) : kNaN;
    return d;
}

namespace {

// Coordinates accumulate in index order; callers rely on bitwise stability.
void pair_distance(const Eigen::MatrixXd& a, Eigen::Index i,
                   const Eigen::MatrixXd& b, Eigen::Index j, double& sq,
                   double& cheb) {
    sq = 0.0;
    cheb = 0.0;
    for (Eigen::Index m = 0; m < a.cols(); ++m) {
        const double diff = a(i, m) - b(j, m);
        sq += diff * diff;
        const double ad = std::abs(diff);
        if (ad > cheb) cheb = ad;
    }
}

}  // namespace

DistanceCache build_distance_cache(const Eigen::MatrixXd& rows,
                                   const Eigen::MatrixXd* queries,
                                   bool need_chebyshev) {
    require_finite(rows, "distance cache rows");
    const Eigen::Index l = rows.rows();
    DistanceCache cache;
    cache.has_chebyshev = need_chebyshev;
    cache.self_sq_euclid.setZero(l, l);
    if (need_chebyshev) cache.self_chebyshev.setZero(l, l);
    for (Eigen::Index i = 0; i < l; ++i) {
        for (Eigen::Index j = i + 1; j < l; ++j) {
            double sq, cheb;
            pair_distance(rows, i, rows, j, sq, cheb);
            cache.self_sq_euclid(i, j) = sq;
            cache.self_sq_euclid(j, i) = sq;
            if (need_chebyshev) {
                cache.self_chebyshev(i, j) = cheb;
                cache.self_chebyshev(j, i) = cheb;
            }
        }
    }
    if (queries != nullptr) {
        require_finite(*queries, "distance cache queries");
        if (queries->cols() != rows.cols()) {
            throw DataError("query column count does not match training rows");
        }
        const Eigen::Index q = queries->rows();
        cache.cross_sq_euclid.resize(q, l);
        if (need_chebyshev) cache.cross_chebyshev.resize(q, l);
        for (Eigen::Index qi = 0; qi < q; ++qi) {
            for (Eigen::Index j = 0; j < l; ++j) {
                double sq, cheb;
                pair_distance(*queries, qi, rows, j, sq, cheb);
                cache.cross_sq_euclid(qi, j) = sq;
                if (need_chebyshev) cache.cross_chebyshev(qi, j) = cheb;
            }
        }
    }
    return cache;
}

WeightResult consensual_weights(const AggregatorModel& model,
                                const DistanceCache& cache,
                                Eigen::Index query_index) {
    const Eigen::Index l = cache.cross_sq_euclid.cols();
    WeightResult result;
    result.weights.resize(l);
    double total = 0.0;
    for (Eigen::Index j = 0; j < l; ++j) {
        const double k = kernel_weight(model.kernel, model.bandwidth,
                                       cache.cross(query_index, j));
        result.weights[j] = k;
        total += k;
    }
    if (total == 0.0) {
        result.zero_mass = true;
        return result;
    }
    for (Eigen::Index j = 0; j < l; ++j) {
        result.weights[j] /= total;
    }
    return result;
}

PredictResult predict(const AggregatorModel& model,
                      const Eigen::MatrixXd& queries) {
    validate(model.predictions);
    if (queries.cols() != model.predictions.rows.cols()) {
        throw DataError("query column count does not match the fitted model");
    }
    const Eigen::MatrixXd norm_rows =
        apply_normalization(model.norm, model.predictions.rows);
    const Eigen::MatrixXd norm_queries = apply_normalization(model.norm, queries);
    const bool need_cheb = model.kernel.family == KernelFamily::Naive;
    const DistanceCache cache =
        build_distance_cache(norm_rows, &norm_queries, need_cheb);

    const Eigen::Index q = queries.rows();
    const Eigen::Index l = norm_rows.rows();
    PredictResult out;
    out.predictions.resize(q);
    out.zero_mass.assign(static_cast<std::size_t>(q), 0);
    double fallback = 0.0;
    if (model.zero_mass_fallback == ZeroMassFallback::TrainMean) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < l; ++i) sum += model.predictions.responses[i];
        fallback = sum / static_cast<double>(l);
    }
    for (Eigen::Index qi = 0; qi < q; ++qi) {
        WeightResult w = consensual_weights(model, cache, qi);
        if (w.zero_mass) {
            out.zero_mass[static_cast<std::size_t>(qi)] = 1;
            out.predictions[qi] = fallback;
            continue;
        }
        double pred = 0.0;
        for (Eigen::Index i = 0; i < l; ++i) {
            pred += w.weights[i] * model.predictions.responses[i];
        }
        out.predictions[qi] = pred;
    }
    return out;
}

WeightResult cobra_weights(const Eigen::MatrixXd& norm_rows,
                           const Eigen::RowVectorXd& norm_query, double h,
                           double alpha) {
    if (!(h > 0.0)) throw std::invalid_argument("bandwidth h must be positive");
    if (norm_query.size() != norm_rows.cols()) {
        throw DataError("query column count does not match training rows");
    }
    const Eigen::Index l = norm_rows.rows();
    const Eigen::Index m_count = norm_rows.cols();
    const double steps = alpha * static_cast<double>(m_count);
    const long rounded = std::lround(steps);
    if (rounded < 1 || rounded > m_count || std::abs(steps - static_cast<double>(rounded)) > 1e-9) {
        throw std::invalid_argument("alpha must lie on the grid {1/M, ..., 1}");
    }
    // Consensus threshold: at least alpha * M coordinates within h (strict).
    WeightResult result;
    result.weights.setZero(l);
    Eigen::Index qualifying = 0;
    for (Eigen::Index i = 0; i < l; ++i) {
        long agree = 0;
        for (Eigen::Index m = 0; m < m_count; ++m) {
            if (std::abs(norm_rows(i, m) - norm_query[m]) < h) ++agree;
        }
        if (agree >= rounded) {
            result.weights[i] = 1.0;
            ++qualifying;
        }
    }
    if (qualifying == 0) {
        result.zero_mass = true;
        return result;
    }
    result.weights /= static_cast<double>(qualifying);
    return result;
}

WeightResult kernelcobra_weights(const Eigen::MatrixXd& norm_rows,
                                 const Eigen::RowVectorXd& norm_query,
                                 double h, double sigma) {
    if (norm_query.size() != norm_rows.cols()) {
        throw DataError("query column count does not match training rows");
    }
    const KernelSpec spec{KernelFamily::Gaussian, sigma};
    const BandwidthParam param{h, Parametrization::Scale};
    const Eigen::Index l = norm_rows.rows();
    WeightResult result;
    result.weights.resize(l);
    double total = 0.0;
    for (Eigen::Index i = 0; i < l; ++i) {
        double row_mass = 0.0;
        for (Eigen::Index m = 0; m < norm_rows.cols(); ++m) {
            const double diff = norm_rows(i, m) - norm_query[m];
            DistanceSample d;
            d.sq_euclid = diff * diff;
            row_mass += kernel_weight(spec, param, d);
        }
        result.weights[i] = row_mass;
        total += row_mass;
    }
    if (total == 0.0) {
        result.zero_mass = true;
        return result;
    }
    for (Eigen::Index i = 0; i < l; ++i) {
        result.weights[i] /= total;
    }
    return result;
}

}  // namespace kcobra
