#pragma once

#include <limits>
#include <string>
#include <string_view>

namespace kcobra {

//! Kernel families used for consensual aggregation weights. All of them map
//! a difference vector of base-learner predictions to a weight in [0, 1],
//! are 1 at the origin, and are non-increasing in the distance. The first
//! five have compact support; Gaussian and Exp4 are supported everywhere.
enum class KernelFamily {
    Naive,            // product of per-coordinate indicators 1{|x_i| <= 1}
    Epanechnikov,     // (1 - |x|^2) on |x| <= 1
    BiWeight,         // (1 - |x|^2)^2 on |x| <= 1
    TriWeight,        // (1 - |x|^2)^3 on |x| <= 1
    CompactGaussian,  // exp(-|x|^2 / (2 sigma^2)) on |x| <= rho1
    Gaussian,         // exp(-|x|^2 / (2 sigma^2))
    Exp4,             // exp(-|x|^4 / (2 sigma^4))
};

struct KernelSpec {
    KernelFamily family = KernelFamily::Gaussian;
    double sigma = 1.0;  // scale of the Gaussian-type families
    double rho1 = 3.0;   // truncation radius of CompactGaussian
};

//! How the bandwidth h enters the kernel. Scale is the usual
//! K_h(z) = K(z / h). InverseScale multiplies the exponent by h instead
//! (Gaussian: exp(-h |z|^2 / (2 sigma^2))), which makes the weight smooth
//! in h on (0, inf) and is the parametrization the gradient-descent tuner
//! differentiates. InverseScale only exists for Gaussian and Exp4.
enum class Parametrization { Scale, InverseScale };

struct BandwidthParam {
    double h = 1.0;
    Parametrization parametrization = Parametrization::Scale;
};

//! Distances between two prediction vectors. Radial kernels consume the
//! squared Euclidean distance; the Naive kernel needs the Chebyshev
//! (max-coordinate) distance, since a product of per-coordinate indicator
//! windows is an indicator on the max.
struct DistanceSample {
    double sq_euclid = 0.0;
    double chebyshev = std::numeric_limits<double>::quiet_NaN();
};

constexpr bool is_compact(KernelFamily family) {
    return family != KernelFamily::Gaussian && family != KernelFamily::Exp4;
}

//! Families the bandwidth tuner can differentiate (under InverseScale).
constexpr bool is_differentiable(KernelFamily family) {
    return family == KernelFamily::Gaussian || family == KernelFamily::Exp4;
}

//! K_h evaluated at a difference vector with the given distances.
//! Throws std::invalid_argument on h <= 0, on InverseScale with a compact
//! family, and on a Naive evaluation without a Chebyshev distance.
double kernel_weight(const KernelSpec& spec, const BandwidthParam& param,
                     const DistanceSample& dist);

//! d/dh of kernel_weight. Only the smooth tuning path is supported:
//! Gaussian or Exp4 under InverseScale; anything else throws.
double kernel_weight_dh(const KernelSpec& spec, const BandwidthParam& param,
                        const DistanceSample& dist);

//! CLI/config token, e.g. "gauss", "gauss:sigma=2", "cgauss:sigma=1:rho1=3".
//! Families: naive | epanechnikov | biweight | triweight | cgauss | gauss | exp4.
KernelSpec parse_kernel_token(std::string_view token);
std::string kernel_token(const KernelSpec& spec);
std::string family_name(KernelFamily family);

}  // namespace kcobra
