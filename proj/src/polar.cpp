#include "polinv/polar.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace polinv {

double wrap_angle(double angle, double period) {
    double r = std::fmod(angle, period);
    if (r < 0.0) r += period;
    if (r >= period) r -= period;  // fmod of a tiny negative can round up to period
    return r;
}

double angle_difference(double a, double b, double period) {
    return wrap_angle(a - b + 0.5 * period, period) - 0.5 * period;
}

Mueller rotation_mueller(double angle) {
    const double c = std::cos(2.0 * angle);
    const double s = std::sin(2.0 * angle);
    Mueller m = Mueller::Identity();
    m(1, 1) = c;
    m(1, 2) = s;
    m(2, 1) = -s;
    m(2, 2) = c;
    return m;
}

FresnelCoefficients fresnel_coefficients(double theta, double eta) {
    if (!std::isfinite(theta) || !std::isfinite(eta))
        throw std::invalid_argument("fresnel_coefficients: non-finite input");
    if (eta <= 0.0) throw std::invalid_argument("fresnel_coefficients: eta must be positive");
    FresnelCoefficients f;
    kernel::fresnel_reflectance(std::cos(theta), eta, &f.r_perp, &f.r_par);
    f.t_perp = 1.0 - f.r_perp;
    f.t_par = 1.0 - f.r_par;
    return f;
}

Mueller fresnel_matrix(const FresnelCoefficients& coeffs, Interaction kind, double cos_delta) {
    if (cos_delta != 1.0 && cos_delta != -1.0)
        throw std::invalid_argument("fresnel_matrix: cos_delta must be +1 or -1");
    const bool refl = kind == Interaction::reflection;
    const double plus = refl ? coeffs.r_plus() : coeffs.t_plus();
    const double minus = refl ? coeffs.r_minus() : coeffs.t_minus();
    const double cross = refl ? coeffs.r_cross() : coeffs.t_cross();
    Mueller m = Mueller::Zero();
    m(0, 0) = plus;
    m(0, 1) = minus;
    m(1, 0) = minus;
    m(1, 1) = plus;
    m(2, 2) = cos_delta * cross;
    m(3, 3) = cos_delta * cross;
    return m;
}

double brewster_angle(double eta) { return std::atan(eta); }

double dielectric_cos_delta(double theta, double eta) {
    return theta < brewster_angle(eta) ? -1.0 : 1.0;
}

namespace {

constexpr double kDegenerateFrame = 1e-8;

LocalFrame frame_from_y(const Vec3& z, const Vec3& align) {
    const Vec3 y = align - align.dot(z) * z;
    if (y.norm() < kDegenerateFrame)
        throw FrameError("polarization frame alignment vector is parallel to propagation");
    LocalFrame f;
    f.z_axis = z;
    f.y_axis = y.normalized();
    f.x_axis = f.y_axis.cross(z);
    return f;
}

}  // namespace

FramePair build_frames(const Vec3& omega_i, const Vec3& omega_o, const Vec3& cam_up,
                       const Vec3& light_pol_axis) {
    FramePair frames;
    frames.exitant = frame_from_y(omega_o.normalized(), cam_up);

    // y_i = pol × z_i keeps y_i orthogonal to the polarizer and gives
    // x_i = -pol projected, so the flash emits s = (1, 1, 0, 0) in this frame.
    const Vec3 z_i = -omega_i.normalized();
    const Vec3 y_i = light_pol_axis.cross(z_i);
    if (y_i.norm() < kDegenerateFrame)
        throw FrameError("flash polarizer axis is parallel to the incident direction");
    frames.incident.z_axis = z_i;
    frames.incident.y_axis = y_i.normalized();
    frames.incident.x_axis = frames.incident.y_axis.cross(z_i);
    return frames;
}

double frame_azimuth(const LocalFrame& frame, const Vec3& v, bool* degenerate) {
    const double px = v.dot(frame.x_axis);
    const double py = v.dot(frame.y_axis);
    const bool deg = std::hypot(px, py) < 1e-12;
    if (degenerate) *degenerate = deg;
    return deg ? 0.0 : std::atan2(py, px);
}

double frame_rotation_angle(const LocalFrame& from, const LocalFrame& to) {
    return std::atan2(to.x_axis.dot(from.y_axis), to.x_axis.dot(from.x_axis));
}

std::optional<InteractionAngles> interaction_angles(const Vec3& n, const Vec3& omega_i,
                                                    const Vec3& omega_o,
                                                    const FramePair& frames) {
    const double cos_i = n.dot(omega_i);
    const double cos_o = n.dot(omega_o);
    if (!(cos_i > 0.0) || !(cos_o > 0.0)) return std::nullopt;

    const Vec3 h = (omega_i + omega_o).normalized();
    InteractionAngles a;
    a.cos_i = std::min(cos_i, 1.0);
    a.cos_o = std::min(cos_o, 1.0);
    a.theta_i = std::acos(a.cos_i);
    a.theta_o = std::acos(a.cos_o);
    a.theta_h = std::acos(std::clamp(n.dot(h), -1.0, 1.0));
    a.theta_d = std::acos(std::clamp(omega_i.dot(h), -1.0, 1.0));

    bool deg_i = false, deg_o = false, hdeg_i = false, hdeg_o = false;
    a.phi_i = frame_azimuth(frames.incident, n, &deg_i);
    a.phi_o = frame_azimuth(frames.exitant, n, &deg_o);
    a.varphi_i = frame_azimuth(frames.incident, h, &hdeg_i);
    a.varphi_o = frame_azimuth(frames.exitant, h, &hdeg_o);
    a.normal_azimuth_degenerate = deg_i || deg_o;
    a.halfway_azimuth_degenerate = hdeg_i || hdeg_o;

    const double quarter = 0.5 * kPi;
    a.rot_phi_i = a.phi_i - quarter;
    a.rot_phi_o = a.phi_o - quarter;
    a.rot_varphi_i = a.varphi_i - quarter;
    a.rot_varphi_o = a.varphi_o - quarter;
    return a;
}

DopAolp stokes_to_dop_aolp(const Stokes& s) {
    if (!(s[0] > 0.0)) throw std::domain_error("stokes_to_dop_aolp: s0 must be positive");
    DopAolp out;
    out.dop = s.tail<3>().norm() / s[0];
    if (s[1] == 0.0 && s[2] == 0.0) {
        out.aolp = 0.0;
    } else {
        out.aolp = wrap_angle(0.5 * std::atan2(s[2], s[1]), kPi);
    }
    return out;
}

double diffuse_dop(double theta, double eta) {
    double t_plus = 0.0, t_minus = 0.0;
    kernel::fresnel_transmission_pm(std::cos(theta), eta, &t_plus, &t_minus);
    return std::abs(t_minus / t_plus);
}

}  // namespace polinv
