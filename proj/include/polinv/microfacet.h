#pragma once

// GGX normal distribution and separable Smith shadowing-masking with alpha = sigma.
// Templated on the scalar so the optimizer can differentiate through them.

#include <cmath>

#include "polinv/common.h"

namespace polinv {

inline constexpr double kMinRoughness = 0.01;
inline constexpr double kMinCosine = 1e-4;

template <class T>
T ggx_ndf_cos(const T& cos_h, const T& sigma) {
    const T a2 = sigma * sigma;
    const T c2 = cos_h * cos_h;
    const T denom = (a2 - T(1.0)) * c2 + T(1.0);
    return a2 / (T(kPi) * denom * denom);
}

template <class T>
T ggx_ndf(const T& theta_h, const T& sigma) {
    using std::cos;
    return ggx_ndf_cos(cos(theta_h), sigma);
}

/// Smith G1 for GGX given cos(theta).
template <class T>
T smith_g1_cos(const T& cos_t, const T& sigma) {
    using std::sqrt;
    const T c2 = cos_t * cos_t;
    const T tan2 = (T(1.0) - c2) / c2;
    return T(2.0) / (T(1.0) + sqrt(T(1.0) + sigma * sigma * tan2));
}

template <class T>
T smith_g_cos(const T& cos_i, const T& cos_o, const T& sigma) {
    return smith_g1_cos(cos_i, sigma) * smith_g1_cos(cos_o, sigma);
}

template <class T>
T smith_g(const T& theta_i, const T& theta_o, const T& sigma) {
    using std::cos;
    return smith_g_cos(T(cos(theta_i)), T(cos(theta_o)), sigma);
}

/// D·G / (4 cos_i cos_o) with grazing cosines clamped at kMinCosine.
template <class T>
T microfacet_kappa(const T& cos_h, const T& cos_i, const T& cos_o, const T& sigma) {
    const T ci = cos_i < T(kMinCosine) ? T(kMinCosine) : cos_i;
    const T co = cos_o < T(kMinCosine) ? T(kMinCosine) : cos_o;
    return ggx_ndf_cos(cos_h, sigma) * smith_g_cos(ci, co, sigma) / (T(4.0) * ci * co);
}

}  // namespace polinv
