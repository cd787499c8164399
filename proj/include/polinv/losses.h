#pragma once

// Loss terms of the per-vertex inverse problem and the shared residual layout
// used by the optimizer.
//
// Intensity residuals (diffuse, specular, virtual) are divided by
// `intensity_scale` so the relative weight of the intensity and polarization
// terms does not depend on the absolute exposure. With the default scale of 1
// the functions below return the raw weighted losses.

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "polinv/common.h"
#include "polinv/observe.h"
#include "polinv/pbrdf.h"

namespace polinv {

struct LossWeights {
    double lambda1 = 1.0;    // DoP
    double lambda2 = 100.0;  // diffuse intensity
    double lambda3 = 1.0;    // specular intensity
    double lambda4 = 100.0;  // azimuth
    double lambda_g = 0.1;   // virtual specular observations
};

struct VirtualObservation {
    double theta_h = 0.0;
    Rgb target_i_s = Rgb::Zero();
    double weight = 0.0;
};

/// One real observation of a vertex, prepared for the losses.
struct FitSample {
    Vec3 omega_i = Vec3::UnitZ();
    Vec3 omega_o = Vec3::UnitZ();
    double distance = 1.0;
    /// Exitant polarization frame axes (for the normal azimuth).
    Vec3 exit_x = Vec3::UnitX();
    Vec3 exit_y = Vec3::UnitY();
    /// Incident polarization frame axes (z along -ω_i).
    Vec3 in_x = Vec3::UnitX();
    Vec3 in_y = Vec3::UnitY();
    /// Normal and diffuse albedo used when the problem has per-sample normals
    /// (pooled clusters).
    Vec3 normal = Vec3::UnitZ();
    Rgb rho_d = Rgb::Zero();
    PolarObservables obs;
    double w_v = 0.0;
    double w_p = 0.0;
};

/// Which loss terms a problem includes.
struct LossTerms {
    bool psi = true;
    bool diffuse = true;
    bool specular = true;
    bool azimuth = true;
    bool virtuals = true;
    /// Cluster regression: D is evaluated at θ_h + Δθ_h and Δθ_h² is added.
    bool theta_h_offset = false;
};

struct FitProblem {
    std::vector<FitSample> samples;
    std::vector<VirtualObservation> virtuals;
    LossWeights weights;
    LossTerms terms;
    /// Index used for the Fresnel transmissions of the diffuse prediction.
    double eta_prev = 1.5;
    double intensity_scale = 1.0;
    /// True when each sample carries its own fixed normal and diffuse albedo;
    /// ρ_d is then not solved for.
    bool per_sample_normals = false;
    /// Optional precomputed D·G/(4cos²) of the single-scattering lobe at each
    /// virtual θ_h, valid only while σ_ss stays at `cached_sigma_ss`.
    std::vector<double> virtual_kss_cache;
    double cached_sigma_ss = -1.0;
};

/// Flat variable vector: nonlinear variables first, then the albedos.
enum VarIndex : int {
    kEta = 0,
    kSigmaS,
    kSigmaSs,
    kNormalU,
    kNormalV,
    kDeltaThetaH,
    kRhoDr,
    kRhoDg,
    kRhoDb,
    kRhoS,
    kRhoSsR,
    kRhoSsG,
    kRhoSsB,
    kNumVars
};
inline constexpr int kNumNonlinear = 6;
inline constexpr int kNumAlbedo = 7;

using VarVector = Eigen::Matrix<double, kNumVars, 1>;

/// Variables plus the base normal that (u, v) perturb in the tangent plane.
struct FitVariables {
    VarVector x = VarVector::Zero();
    Vec3 base_normal = Vec3::UnitZ();

    static FitVariables from(const PbrdfParams& p, const Vec3& normal, double dtheta_h = 0.0);
    PbrdfParams params() const;
    Vec3 normal() const;
};

/// Orthonormal tangent basis (t1, t2) of a unit normal.
std::pair<Vec3, Vec3> tangent_basis(const Vec3& n);

/// Raw (unweighted by λ) loss values; `total` applies the λ weights.
struct LossValues {
    double psi = 0.0;
    double diffuse = 0.0;
    double specular_real = 0.0;
    double specular_virtual = 0.0;
    double azimuth = 0.0;
    double theta_reg = 0.0;
    double total = 0.0;

    /// Real term plus λ_g times the virtual term.
    double specular(const LossWeights& w) const { return specular_real + w.lambda_g * specular_virtual; }
};

LossValues evaluate_losses(const FitProblem& problem, const FitVariables& v);

struct LossGradients {
    VarVector psi, diffuse, specular, azimuth, total;
};

/// Autodiff gradients of every loss with respect to all flat variables.
LossGradients loss_gradients(const FitProblem& problem, const FitVariables& v);

// Convenience wrappers over a parameter record and a normal.
double loss_psi(const FitProblem& problem, const PbrdfParams& p, const Vec3& n);
double loss_diffuse(const FitProblem& problem, const PbrdfParams& p, const Vec3& n);
double loss_specular(const FitProblem& problem, const PbrdfParams& p, const Vec3& n);
double loss_azimuth(const FitProblem& problem, const PbrdfParams& p, const Vec3& n);

/// w_v = 1/K over the given samples, and w_p = w_v·Γ normalized over the
/// azimuth-reliable samples (0 elsewhere).
void assign_view_weights(std::vector<FitSample>& samples);

/// Unit D·G/(4 cos²θ) retroreflective lobe value at θ_h (θ_i = θ_o = θ_h).
double retro_lobe(double theta_h, double sigma);

/// M virtual observations at θ_h = 0, 90/M, ... from regressed parameters,
/// with cos θ_h weights normalized to 1.
std::vector<VirtualObservation> generate_virtuals(const PbrdfParams& cluster_params, int m = 180);

/// Coaxial prediction S·κ·R⁺ of the specular and single-scattering parts of i_s.
struct SpecularPrediction {
    Rgb specular = Rgb::Zero();
    Rgb single_scattering = Rgb::Zero();
};
SpecularPrediction predict_specular(const FitSample& s, const PbrdfParams& p, const Vec3& n);

}  // namespace polinv
