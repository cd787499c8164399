#pragma once

// Stokes/Mueller algebra, dielectric Fresnel terms and polarization frames.
//
// Conventions:
//   * A frame rotated counterclockwise by `angle` maps Stokes vectors through
//     rotation_mueller(angle).
//   * Local frames are right-handed with x = y × z and z along propagation.
//     The incident frame points z toward the surface (z = -omega_i); the
//     exitant frame points z from the surface to the camera (z = omega_o).
//   * Azimuths are atan2(v·y, v·x), counterclockwise from +x.
//   * The retardance of dielectric interfaces is real (sin δ = 0); cos δ is
//     -1 below the Brewster angle and +1 at or above it.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

#include "polinv/common.h"

namespace polinv {

/// Raised when a polarization frame cannot be built (alignment ∥ propagation).
class FrameError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct FresnelCoefficients {
    double r_perp = 0.0;
    double r_par = 0.0;
    double t_perp = 1.0;
    double t_par = 1.0;

    double r_plus() const { return 0.5 * (r_perp + r_par); }
    double r_minus() const { return 0.5 * (r_perp - r_par); }
    double r_cross() const { return std::sqrt(r_perp * r_par); }
    double t_plus() const { return 0.5 * (t_perp + t_par); }
    double t_minus() const { return 0.5 * (t_perp - t_par); }
    double t_cross() const { return std::sqrt(t_perp * t_par); }
};

enum class Interaction { reflection, transmission };

struct LocalFrame {
    Vec3 x_axis = Vec3::UnitX();
    Vec3 y_axis = Vec3::UnitY();
    Vec3 z_axis = Vec3::UnitZ();
};

struct FramePair {
    LocalFrame incident;
    LocalFrame exitant;
};

struct InteractionAngles {
    double theta_i = 0.0;
    double theta_o = 0.0;
    double theta_h = 0.0;
    double theta_d = 0.0;
    double phi_i = 0.0;     // azimuth of the normal, incident frame
    double phi_o = 0.0;     // azimuth of the normal, exitant frame
    double varphi_i = 0.0;  // azimuth of the halfway vector, incident frame
    double varphi_o = 0.0;  // azimuth of the halfway vector, exitant frame
    double rot_phi_i = 0.0;
    double rot_phi_o = 0.0;
    double rot_varphi_i = 0.0;
    double rot_varphi_o = 0.0;
    double cos_i = 1.0;  // n · omega_i
    double cos_o = 1.0;  // n · omega_o
    bool normal_azimuth_degenerate = false;
    bool halfway_azimuth_degenerate = false;

    double alpha_i() const { return std::sin(2.0 * phi_i); }
    double beta_i() const { return std::cos(2.0 * phi_i); }
    double alpha_o() const { return std::sin(2.0 * phi_o); }
    double beta_o() const { return std::cos(2.0 * phi_o); }
    double chi_i() const { return std::sin(2.0 * varphi_i); }
    double gamma_i() const { return std::cos(2.0 * varphi_i); }
    double chi_o() const { return std::sin(2.0 * varphi_o); }
    double gamma_o() const { return std::cos(2.0 * varphi_o); }
};

struct DopAolp {
    double dop = 0.0;
    double aolp = 0.0;  // [0, pi)
};

/// Mueller matrix of a counterclockwise frame rotation by `angle` radians.
Mueller rotation_mueller(double angle);

/// Reflectance/transmittance of a smooth dielectric boundary for an incidence
/// angle `theta` (outer medium) and relative index `eta`. Total internal
/// reflection (eta < 1 beyond the critical angle) yields R = 1.
FresnelCoefficients fresnel_coefficients(double theta, double eta);

/// Fresnel Mueller matrix with sin δ = 0. `cos_delta` must be exactly ±1.
Mueller fresnel_matrix(const FresnelCoefficients& coeffs, Interaction kind, double cos_delta);

/// atan(eta).
double brewster_angle(double eta);

/// Dielectric retardance sign: -1 below the Brewster angle, +1 otherwise.
double dielectric_cos_delta(double theta, double eta);

/// Builds the incident and exitant polarization frames. The exitant y axis is
/// the camera up vector projected orthogonal to omega_o. The incident y axis is
/// the direction orthogonal to the flash polarizer axis within the beam plane,
/// so that the polarizer transmission axis is ±x and s_i = (1, 1, 0, 0).
FramePair build_frames(const Vec3& omega_i, const Vec3& omega_o, const Vec3& cam_up,
                       const Vec3& light_pol_axis);

/// Returns std::nullopt when either direction is back-facing (n·ω ≤ 0).
std::optional<InteractionAngles> interaction_angles(const Vec3& n, const Vec3& omega_i,
                                                    const Vec3& omega_o,
                                                    const FramePair& frames);

/// Azimuth atan2(v·y, v·x) of `v` in `frame`; 0 and `degenerate` when v ∥ z.
double frame_azimuth(const LocalFrame& frame, const Vec3& v, bool* degenerate = nullptr);

/// Counterclockwise angle that takes frame `from` onto frame `to` (shared z).
double frame_rotation_angle(const LocalFrame& from, const LocalFrame& to);

/// Throws std::domain_error if s0 ≤ 0. AoLP is 0 for unpolarized input.
DopAolp stokes_to_dop_aolp(const Stokes& s);

/// Closed-form diffuse degree of polarization |T-/T+| of a dielectric at
/// exitant zenith `theta`.
double diffuse_dop(double theta, double eta);

// Scalar-generic kernels shared with the autodiff paths of the optimizer.
namespace kernel {

/// Dielectric Fresnel reflectances for cos(theta_i) and relative index eta.
template <class T>
void fresnel_reflectance(const T& cos_i, const T& eta, T* r_perp, T* r_par) {
    using std::sqrt;
    const T sin2_t = (T(1.0) - cos_i * cos_i) / (eta * eta);
    if (sin2_t >= T(1.0)) {
        *r_perp = T(1.0);
        *r_par = T(1.0);
        return;
    }
    const T cos_t = sqrt(T(1.0) - sin2_t);
    const T rs = (cos_i - eta * cos_t) / (cos_i + eta * cos_t);
    const T rp = (eta * cos_i - cos_t) / (eta * cos_i + cos_t);
    *r_perp = rs * rs;
    *r_par = rp * rp;
}

/// T+ and T- transmission combinations.
template <class T>
void fresnel_transmission_pm(const T& cos_i, const T& eta, T* t_plus, T* t_minus) {
    T r_perp, r_par;
    fresnel_reflectance(cos_i, eta, &r_perp, &r_par);
    *t_plus = T(1.0) - T(0.5) * (r_perp + r_par);
    *t_minus = T(0.5) * (r_par - r_perp);
}

/// R+ reflection combination.
template <class T>
T fresnel_r_plus(const T& cos_i, const T& eta) {
    T r_perp, r_par;
    fresnel_reflectance(cos_i, eta, &r_perp, &r_par);
    return T(0.5) * (r_perp + r_par);
}

}  // namespace kernel

}  // namespace polinv
