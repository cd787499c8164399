#pragma once

// Polarimetric observables derived from the four filter channels.
//
// Sign note: with the flash emitting (1, 1, 0, 0), the diffuse lobe produces
// s2 = -S·ρ_d·T⁻T⁺·α (the exitant-frame α), so i_alpha = i135 - i45 = -s2
// carries +S·ρ_d·T⁻T⁺·α while i_beta carries -S·ρ_d·T⁻T⁺·β. The observed
// azimuth therefore uses atan2(-i_alpha, i_beta), which returns the normal
// azimuth itself (mod π) because T⁻ ≤ 0 for η > 1.

#include "polinv/common.h"
#include "polinv/render.h"

namespace polinv {

struct PolarObservables {
    Rgb i_d = Rgb::Zero();
    Rgb i_alpha = Rgb::Zero();
    Rgb i_s = Rgb::Zero();
    Rgb i_beta = Rgb::Zero();
    double gamma = 0.0;
    double dop = 0.0;
    double phi_obs = 0.0;
    /// Both flags also require the residual to be diffuse-consistent
    /// (|avg i_beta| <= avg i_d and Γ <= avg(i_d + i_beta)) and the specular
    /// correction to stay below Γ.
    bool dop_reliable = false;
    bool azimuth_reliable = false;
};

struct Decomposition {
    Rgb i_d;
    Rgb i_alpha;
    Rgb i_s;
};

Decomposition decompose(const VertexObservation& obs);

Rgb beta_observation(const Rgb& i_s, const Rgb& predicted_specular, const Rgb& predicted_ss);

/// Γ = sqrt(avg(i_alpha)² + avg(i_beta)²) with avg the RGB mean.
double diffuse_polarization_magnitude(const Rgb& i_alpha, const Rgb& i_beta);

/// Γ divided by the channel-mean diffuse radiance. The denominator is
/// i_d + i_beta, which equals the diffuse s0 once the specular prediction is
/// exact; returns 0 when the denominator is not positive.
double estimate_dop(const Rgb& i_d, const Rgb& i_alpha, const Rgb& i_beta);

/// φ_I = ½·atan2(-avg(i_alpha), avg(i_beta)) in (-π/2, π/2]. The axis case
/// (i_alpha = 0, i_beta < 0) returns π/2.
double observed_azimuth(const Rgb& i_alpha, const Rgb& i_beta);

struct ReliabilityThresholds {
    /// Channel-mean i_d below this marks the DoP unreliable.
    double darkness = 0.0;
    /// Γ below this excludes the sample from the azimuth loss.
    double gamma_floor = 0.0;
};

/// Relative thresholds: darkness = 0.03 and gamma floor = 1e-4 of the
/// brightest channel-mean i_d.
ReliabilityThresholds default_thresholds(double max_mean_i_d);

PolarObservables make_observables(const VertexObservation& obs, const Rgb& predicted_specular,
                                  const Rgb& predicted_ss, const ReliabilityThresholds& t);

}  // namespace polinv
