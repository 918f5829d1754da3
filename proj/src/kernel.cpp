#include "kcobra/kernel.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kcobra/common.hpp"

namespace kcobra {

namespace {

void check_param(const KernelSpec& spec, const BandwidthParam& param) {
    if (!(param.h > 0.0)) {
        throw std::invalid_argument("bandwidth h must be positive");
    }
    if (param.parametrization == Parametrization::InverseScale &&
        !is_differentiable(spec.family)) {
        throw std::invalid_argument(
            "InverseScale parametrization is only defined for the gauss and "
            "exp4 families");
    }
    if (!(spec.sigma > 0.0)) {
        throw std::invalid_argument("kernel sigma must be positive");
    }
    if (spec.family == KernelFamily::CompactGaussian && !(spec.rho1 > 0.0)) {
        throw std::invalid_argument("kernel rho1 must be positive");
    }
}

}  // namespace

double kernel_weight(const KernelSpec& spec, const BandwidthParam& param,
                     const DistanceSample& dist) {
    check_param(spec, param);
    const double d2 = dist.sq_euclid;
    if (!(d2 >= 0.0)) {
        throw std::invalid_argument("squared distance must be nonnegative");
    }
    const double h = param.h;
    const double s2 = spec.sigma * spec.sigma;

    if (param.parametrization == Parametrization::InverseScale) {
        if (spec.family == KernelFamily::Gaussian) {
            return std::exp(-h * d2 / (2.0 * s2));
        }
        return std::exp(-h * (d2 * d2) / (2.0 * s2 * s2));  // Exp4
    }

    // Scale parametrization: evaluate K at z / h, i.e. at r^2 = d2 / h^2.
    const double r2 = d2 / (h * h);
    switch (spec.family) {
        case KernelFamily::Naive: {
            if (std::isnan(dist.chebyshev)) {
                throw std::invalid_argument(
                    "naive kernel requires a Chebyshev distance");
            }
            return dist.chebyshev <= h ? 1.0 : 0.0;
        }
        case KernelFamily::Epanechnikov:
            return r2 <= 1.0 ? 1.0 - r2 : 0.0;
        case KernelFamily::BiWeight: {
            if (r2 > 1.0) return 0.0;
            const double t = 1.0 - r2;
            return t * t;
        }
        case KernelFamily::TriWeight: {
            if (r2 > 1.0) return 0.0;
            const double t = 1.0 - r2;
            return t * t * t;
        }
        case KernelFamily::CompactGaussian:
            if (r2 > spec.rho1 * spec.rho1) return 0.0;
            return std::exp(-r2 / (2.0 * s2));
        case KernelFamily::Gaussian:
            return std::exp(-r2 / (2.0 * s2));
        case KernelFamily::Exp4:
            return std::exp(-(r2 * r2) / (2.0 * s2 * s2));
    }
    throw std::logic_error("unknown kernel family");
}

double kernel_weight_dh(const KernelSpec& spec, const BandwidthParam& param,
                        const DistanceSample& dist) {
    check_param(spec, param);
    if (param.parametrization != Parametrization::InverseScale ||
        !is_differentiable(spec.family)) {
        throw std::invalid_argument(
            "kernel_weight_dh requires gauss or exp4 under InverseScale");
    }
    const double d2 = dist.sq_euclid;
    const double s2 = spec.sigma * spec.sigma;
    if (spec.family == KernelFamily::Gaussian) {
        const double a = d2 / (2.0 * s2);
        return -a * std::exp(-param.h * a);
    }
    const double a = (d2 * d2) / (2.0 * s2 * s2);
    return -a * std::exp(-param.h * a);
}

std::string family_name(KernelFamily family) {
    switch (family) {
        case KernelFamily::Naive: return "naive";
        case KernelFamily::Epanechnikov: return "epanechnikov";
        case KernelFamily::BiWeight: return "biweight";
        case KernelFamily::TriWeight: return "triweight";
        case KernelFamily::CompactGaussian: return "cgauss";
        case KernelFamily::Gaussian: return "gauss";
        case KernelFamily::Exp4: return "exp4";
    }
    throw std::logic_error("unknown kernel family");
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

}  // namespace

KernelSpec parse_kernel_token(std::string_view token) {
    auto parts = split_view(token, ':');
    KernelSpec spec;
    const std::string_view name = parts[0];
    if (name == "naive") spec.family = KernelFamily::Naive;
    else if (name == "epanechnikov") spec.family = KernelFamily::Epanechnikov;
    else if (name == "biweight") spec.family = KernelFamily::BiWeight;
    else if (name == "triweight") spec.family = KernelFamily::TriWeight;
    else if (name == "cgauss") spec.family = KernelFamily::CompactGaussian;
    else if (name == "gauss") spec.family = KernelFamily::Gaussian;
    else if (name == "exp4") spec.family = KernelFamily::Exp4;
    else throw DataError("unknown kernel family: '" + std::string(name) + "'");

    for (std::size_t i = 1; i < parts.size(); ++i) {
        auto kv = split_view(parts[i], '=');
        if (kv.size() != 2) {
            throw DataError("malformed kernel parameter: '" +
                            std::string(parts[i]) + "'");
        }
        const double value = parse_double(kv[1]);
        if (kv[0] == "sigma") {
            if (!(value > 0.0)) throw DataError("kernel sigma must be positive");
            spec.sigma = value;
        } else if (kv[0] == "rho1") {
            if (!(value > 0.0)) throw DataError("kernel rho1 must be positive");
            spec.rho1 = value;
        } else {
            throw DataError("unknown kernel parameter: '" + std::string(kv[0]) +
                            "'");
        }
    }
    return spec;
}

std::string kernel_token(const KernelSpec& spec) {
    std::string token = family_name(spec.family);
    if (spec.sigma != 1.0) token += ":sigma=" + format_double(spec.sigma);
    if (spec.family == KernelFamily::CompactGaussian && spec.rho1 != 3.0) {
        token += ":rho1=" + format_double(spec.rho1);
    }
    return token;
}

}  // namespace kcobra
