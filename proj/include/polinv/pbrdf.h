#pragma once

// Polarimetric BRDF lobes. Every lobe is available as the explicit
// rotation/Fresnel chain and as the expanded closed form; the two must agree.

#include <optional>

#include "polinv/common.h"
#include "polinv/polar.h"

namespace polinv {

struct PbrdfParams {
    double eta = 1.5;
    Rgb rho_d = Rgb::Constant(0.5);
    double rho_s = 0.1;
    double sigma_s = 0.3;
    Rgb rho_ss = Rgb::Constant(0.025);
    double sigma_ss = 0.9;

    bool operator==(const PbrdfParams& o) const {
        return eta == o.eta && (rho_d == o.rho_d).all() && rho_s == o.rho_s &&
               sigma_s == o.sigma_s && (rho_ss == o.rho_ss).all() && sigma_ss == o.sigma_ss;
    }
};

struct ParamBounds {
    double eta_min = 1.01, eta_max = 3.0;
    double sigma_min = 0.01, sigma_max = 1.0;
    double rho_d_max = 1.0;
};

/// Throws std::invalid_argument if a field is non-finite or out of bounds.
void validate_params(const PbrdfParams& p, const ParamBounds& bounds = {});

struct PhysicalSsParams {
    double eta_p = 1.33;
    double g = 0.0;
    Rgb rho_ss = Rgb::Constant(0.1);
};

/// Test hook for the closed forms: a deliberately wrong variant used to show
/// that the chain-vs-closed-form check detects sign errors.
enum class ClosedFormVariant { correct, swapped_fresnel_components };

/// ρ·D·G / (4 cos_i cos_o) for the given roughness (cosines clamped).
double microfacet_term(const InteractionAngles& a, double rho, double sigma);

MuellerRgb diffuse_lobe(const InteractionAngles& a, const PbrdfParams& p);
MuellerRgb diffuse_lobe_chain(const InteractionAngles& a, const PbrdfParams& p);

/// Specular lobe structure without κ (Fresnel reflection at θ_d, rotated).
Mueller specular_structure(const InteractionAngles& a, double eta,
                           ClosedFormVariant variant = ClosedFormVariant::correct);
Mueller specular_structure_chain(const InteractionAngles& a, double eta);

Mueller specular_lobe(const InteractionAngles& a, const PbrdfParams& p,
                      ClosedFormVariant variant = ClosedFormVariant::correct);
Mueller specular_lobe_chain(const InteractionAngles& a, const PbrdfParams& p);

MuellerRgb single_scattering_practical(const InteractionAngles& a, const PbrdfParams& p,
                                       ClosedFormVariant variant = ClosedFormVariant::correct);
MuellerRgb single_scattering_practical_chain(const InteractionAngles& a, const PbrdfParams& p);

struct ScatteringGeometry {
    Vec3 normal;
    Vec3 omega_i;
    Vec3 omega_o;
    FramePair frames;
    /// Medium-side microfacet normal; defaults to the half vector of the
    /// refracted directions.
    std::optional<Vec3> inner_halfway;
};

struct PhysicalSsResult {
    MuellerRgb m = zero_mueller_rgb();
    bool total_internal_reflection = false;
};

/// Henyey-Greenstein phase function for scattering-angle cosine `cos_theta`.
double henyey_greenstein(double cos_theta, double g);

/// Forward-only physically based single scattering (refract, scatter, refract).
PhysicalSsResult single_scattering_physical(const ScatteringGeometry& geo,
                                            const PhysicalSsParams& phys, double eta);

/// Diffuse + specular + practical single scattering.
MuellerRgb pbrdf_eval(const InteractionAngles& a, const PbrdfParams& p);

/// Sparse near-coaxial approximation: shared zenith θ = θ_o and azimuth φ = φ_o.
MuellerRgb coaxial_pbrdf(const InteractionAngles& a, const PbrdfParams& p);

}  // namespace polinv
