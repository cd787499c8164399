#pragma once

// Scalar-generic residual rows shared by the loss evaluation, the autodiff
// gradients and the optimizer. Every row is affine in the albedos:
//   r = Σ_k coef[k]·a[col[k]] + offset
// where a is the 7-vector (ρ_d RGB, ρ_s, ρ_ss RGB) and col = -1 marks an
// unused slot.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "polinv/losses.h"
#include "polinv/microfacet.h"
#include "polinv/polar.h"

namespace polinv::detail {

enum class Group : std::uint8_t { psi, diffuse, specular, virt, azimuth, theta };

inline constexpr int kRowSlots = 3;

template <class T>
struct Row {
    T coef[kRowSlots];
    int col[kRowSlots];
    T offset;
    Group group;
};

template <class T>
using V3 = Eigen::Matrix<T, 3, 1>;

template <class T>
T dot3(const V3<T>& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

template <class T>
T clamp_min(const T& v, double lo) {
    return v < T(lo) ? T(lo) : v;
}

/// D·G/(4 cos²) at θ_i = θ_o = θ_h with cos θ_h given.
template <class T>
T retro_lobe_t(double cos_h, const T& sigma) {
    const T c(cos_h);
    return microfacet_kappa(c, c, c, sigma);
}

/// cos 2(φ - π/2) of the azimuth of `n` in the frame (x, y); a degenerate
/// projection takes azimuth 0.
template <class T>
T cos_double_rotation(const V3<T>& n, const Vec3& x, const Vec3& y) {
    const T px = dot3(n, x);
    const T py = dot3(n, y);
    const T r2 = px * px + py * py;
    if (!(r2 > T(1e-24))) return T(-1.0);
    return (py * py - px * px) / r2;
}

/// Diffuse contributions per unit ρ_d and unit shading to i_d = s0 - s1 and
/// to i_s = s1 for the flash state (1, 1, 0, 0), from the full diffuse chain
/// at the sample's own incident and exitant geometry.
template <class T>
void diffuse_response(const V3<T>& n, const FitSample& s, const T& cos_i, const T& cos_o,
                      const T& eta, T* to_i_d, T* to_i_s) {
    T tpi, tmi, tpo, tmo;
    kernel::fresnel_transmission_pm(clamp_min(cos_i, kMinCosine), eta, &tpi, &tmi);
    kernel::fresnel_transmission_pm(clamp_min(cos_o, kMinCosine), eta, &tpo, &tmo);
    const T in = tpi + tmi * cos_double_rotation(n, s.in_x, s.in_y);
    const T lin = tmo * cos_double_rotation(n, s.exit_x, s.exit_y);
    *to_i_d = in * (tpo - lin);
    *to_i_s = in * lin;
}

// Albedo column indices inside the 7-vector.
inline constexpr int kColRhoD = 0;
inline constexpr int kColRhoS = 3;
inline constexpr int kColRhoSs = 4;

/// Builds all residual rows for nonlinear variables `nl` = (η, σ_s, σ_ss, u,
/// v, Δθ_h) around `base_normal`. `w` is passed separately from the problem
/// so raw (λ = 1) losses can be evaluated without copying it.
template <class T>
void build_rows(const FitProblem& pb, const LossWeights& w, const T* nl, const Vec3& base_normal,
                std::vector<Row<T>>& rows) {
    using std::sqrt;
    using std::cos;
    rows.clear();
    const LossTerms& terms = pb.terms;
    const T& eta = nl[kEta];
    const T& sigma_s = nl[kSigmaS];
    const T& sigma_ss = nl[kSigmaSs];
    const double inv_scale = 1.0 / pb.intensity_scale;

    V3<T> shared_n;
    if (!pb.per_sample_normals) {
        const auto [t1, t2] = tangent_basis(base_normal);
        V3<T> n;
        for (int k = 0; k < 3; ++k)
            n[k] = T(base_normal[k]) + nl[kNormalU] * t1[k] + nl[kNormalV] * t2[k];
        const T len = sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        shared_n = n / len;
    }

    auto push = [&rows](Group g, const T& offset, int c0 = -1, const T& k0 = T(0.0), int c1 = -1,
                        const T& k1 = T(0.0), int c2 = -1, const T& k2 = T(0.0)) {
        Row<T> r;
        r.coef[0] = k0;
        r.coef[1] = k1;
        r.coef[2] = k2;
        r.col[0] = c0;
        r.col[1] = c1;
        r.col[2] = c2;
        r.offset = offset;
        r.group = g;
        rows.push_back(r);
    };

    for (const FitSample& s : pb.samples) {
        V3<T> n = pb.per_sample_normals ? V3<T>(s.normal.cast<T>()) : shared_n;
        const T cos_i = dot3(n, s.omega_i);
        const T cos_o = dot3(n, s.omega_o);
        const T co = clamp_min(cos_o, kMinCosine);

        if (terms.psi && s.obs.dop_reliable && s.w_v > 0.0) {
            T tp, tm;
            kernel::fresnel_transmission_pm(co, eta, &tp, &tm);
            const T psi_hat = -tm / tp;
            push(Group::psi, T(std::sqrt(w.lambda1 * s.w_v)) * (psi_hat - T(s.obs.dop)));
        }

        const T shading = clamp_min(cos_i, 0.0) / T(s.distance * s.distance);
        T d_to_i_d(0.0), d_to_i_s(0.0);
        if ((terms.diffuse || terms.specular) && s.w_v > 0.0)
            diffuse_response(n, s, cos_i, cos_o, T(pb.eta_prev), &d_to_i_d, &d_to_i_s);

        if (terms.diffuse && s.w_v > 0.0) {
            const double sw = std::sqrt(w.lambda2 * s.w_v) * inv_scale;
            const T a = T(sw) * shading * d_to_i_d;
            for (int c = 0; c < 3; ++c)
                push(Group::diffuse, T(-sw * s.obs.i_d[c]), kColRhoD + c, a);
        }

        if (terms.specular && s.w_v > 0.0) {
            const Vec3 h = (s.omega_i + s.omega_o).normalized();
            const T r_plus = kernel::fresnel_r_plus(T(s.omega_i.dot(h)), eta);
            T cos_h = dot3(n, h);
            if (terms.theta_h_offset) {
                using std::acos;
                // Per-sample normals are constants here, so acos is never
                // differentiated at θ_h = 0.
                const double theta_h = std::acos(std::clamp(s.normal.dot(h), -1.0, 1.0));
                cos_h = cos(T(theta_h) + nl[kDeltaThetaH]);
            }
            const T ks = microfacet_kappa(cos_h, cos_i, cos_o, sigma_s);
            const T kss = microfacet_kappa(cos_h, cos_i, cos_o, sigma_ss);
            const double sw = std::sqrt(w.lambda3 * s.w_v) * inv_scale;
            const T base = T(sw) * shading * r_plus;
            const T diffuse_part = T(sw) * shading * d_to_i_s;
            for (int c = 0; c < 3; ++c) {
                if (pb.per_sample_normals)
                    push(Group::specular, diffuse_part * s.rho_d[c] - T(sw * s.obs.i_s[c]), kColRhoS,
                         base * ks, kColRhoSs + c, base * kss);
                else
                    push(Group::specular, T(-sw * s.obs.i_s[c]), kColRhoS, base * ks, kColRhoSs + c,
                         base * kss, kColRhoD + c, diffuse_part);
            }
        }

        if (terms.azimuth && s.obs.azimuth_reliable && s.w_p > 0.0) {
            const T px = dot3(n, s.exit_x);
            const T py = dot3(n, s.exit_y);
            const T r = sqrt(px * px + py * py);
            if (r > T(1e-12)) {
                const double cphi = std::cos(s.obs.phi_obs), sphi = std::sin(s.obs.phi_obs);
                const T sin_diff = (py * cphi - px * sphi) / r;
                push(Group::azimuth, T(std::sqrt(w.lambda4 * s.w_p)) * sin_diff);
            }
        }
    }

    if (terms.virtuals && w.lambda_g > 0.0 && !pb.virtuals.empty()) {
        const T r0 = kernel::fresnel_r_plus(T(1.0), eta);
        const bool use_cache = pb.virtual_kss_cache.size() == pb.virtuals.size() &&
                               sigma_ss == T(pb.cached_sigma_ss);
        for (std::size_t m = 0; m < pb.virtuals.size(); ++m) {
            const VirtualObservation& v = pb.virtuals[m];
            if (v.weight <= 0.0) continue;
            const double ch = std::cos(v.theta_h);
            const T ks = retro_lobe_t(ch, sigma_s);
            const T kss = use_cache ? T(pb.virtual_kss_cache[m]) : retro_lobe_t(ch, sigma_ss);
            const double sw = std::sqrt(w.lambda3 * w.lambda_g * v.weight) * inv_scale;
            for (int c = 0; c < 3; ++c)
                push(Group::virt, T(-sw * v.target_i_s[c]), kColRhoS, T(sw) * ks * r0,
                     kColRhoSs + c, T(sw) * kss * r0);
        }
    }

    if (terms.theta_h_offset) push(Group::theta, nl[kDeltaThetaH]);
}

template <class T, class A>
T row_value(const Row<T>& r, const A& albedo) {
    T v = r.offset;
    for (int k = 0; k < kRowSlots; ++k)
        if (r.col[k] >= 0) v += r.coef[k] * albedo[r.col[k]];
    return v;
}

}  // namespace polinv::detail
