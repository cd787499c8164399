#include "polinv/pbrdf.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include "polinv/microfacet.h"

namespace polinv {

void validate_params(const PbrdfParams& p, const ParamBounds& b) {
    auto check = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("invalid pBRDF parameter: ") + what);
    };
    check(std::isfinite(p.eta) && p.eta >= b.eta_min && p.eta <= b.eta_max, "eta");
    check(p.rho_d.isFinite().all() && (p.rho_d >= 0.0).all() && (p.rho_d <= b.rho_d_max).all(),
          "rho_d");
    check(std::isfinite(p.rho_s) && p.rho_s >= 0.0, "rho_s");
    check(std::isfinite(p.sigma_s) && p.sigma_s >= b.sigma_min && p.sigma_s <= b.sigma_max,
          "sigma_s");
    check(p.rho_ss.isFinite().all() && (p.rho_ss >= 0.0).all(), "rho_ss");
    check(std::isfinite(p.sigma_ss) && p.sigma_ss >= b.sigma_min && p.sigma_ss <= b.sigma_max,
          "sigma_ss");
}

double microfacet_term(const InteractionAngles& a, double rho, double sigma) {
    return rho * microfacet_kappa(std::cos(a.theta_h), a.cos_i, a.cos_o, sigma);
}

MuellerRgb diffuse_lobe(const InteractionAngles& a, const PbrdfParams& p) {
    const FresnelCoefficients fi = fresnel_coefficients(a.theta_i, p.eta);
    const FresnelCoefficients fo = fresnel_coefficients(a.theta_o, p.eta);
    const double tpi = fi.t_plus(), tmi = fi.t_minus();
    const double tpo = fo.t_plus(), tmo = fo.t_minus();
    const double ai = a.alpha_i(), bi = a.beta_i(), ao = a.alpha_o(), bo = a.beta_o();

    Mueller base = Mueller::Zero();
    base(0, 0) = tpo * tpi;
    base(0, 1) = -tpo * tmi * bi;
    base(0, 2) = -tpo * tmi * ai;
    base(1, 0) = -tmo * tpi * bo;
    base(1, 1) = tmo * tmi * bi * bo;
    base(1, 2) = tmo * tmi * ai * bo;
    base(2, 0) = -tmo * tpi * ao;
    base(2, 1) = tmo * tmi * ao * bi;
    base(2, 2) = tmo * tmi * ao * ai;

    MuellerRgb out;
    for (int c = 0; c < 3; ++c) out[c] = p.rho_d[c] * base;
    return out;
}

MuellerRgb diffuse_lobe_chain(const InteractionAngles& a, const PbrdfParams& p) {
    const Mueller fti = fresnel_matrix(fresnel_coefficients(a.theta_i, p.eta),
                                       Interaction::transmission, 1.0);
    const Mueller fto = fresnel_matrix(fresnel_coefficients(a.theta_o, p.eta),
                                       Interaction::transmission, 1.0);
    MuellerRgb out;
    for (int c = 0; c < 3; ++c) {
        Mueller depol = Mueller::Zero();
        depol(0, 0) = p.rho_d[c];
        out[c] = rotation_mueller(-a.rot_phi_o) * fto * depol * fti * rotation_mueller(a.rot_phi_i);
    }
    return out;
}

Mueller specular_structure(const InteractionAngles& a, double eta, ClosedFormVariant variant) {
    FresnelCoefficients f = fresnel_coefficients(a.theta_d, eta);
    if (variant == ClosedFormVariant::swapped_fresnel_components) std::swap(f.r_perp, f.r_par);
    const double rp = f.r_plus(), rm = f.r_minus(), rx = f.r_cross();
    const double cd = dielectric_cos_delta(a.theta_d, eta);
    const double gi = a.gamma_i(), ci = a.chi_i(), go = a.gamma_o(), co = a.chi_o();

    Mueller m = Mueller::Zero();
    m(0, 0) = rp;
    m(0, 1) = -rm * gi;
    m(0, 2) = -rm * ci;
    m(1, 0) = -rm * go;
    m(1, 1) = rp * gi * go + rx * ci * co * cd;
    m(1, 2) = rp * ci * go - rx * gi * co * cd;
    m(2, 0) = -rm * co;
    m(2, 1) = rp * gi * co - rx * ci * go * cd;
    m(2, 2) = rp * ci * co + rx * gi * go * cd;
    m(3, 3) = rx * cd;
    return m;
}

Mueller specular_structure_chain(const InteractionAngles& a, double eta) {
    const Mueller fr = fresnel_matrix(fresnel_coefficients(a.theta_d, eta),
                                      Interaction::reflection,
                                      dielectric_cos_delta(a.theta_d, eta));
    return rotation_mueller(-a.rot_varphi_o) * fr * rotation_mueller(a.rot_varphi_i);
}

Mueller specular_lobe(const InteractionAngles& a, const PbrdfParams& p,
                      ClosedFormVariant variant) {
    return microfacet_term(a, p.rho_s, p.sigma_s) * specular_structure(a, p.eta, variant);
}

Mueller specular_lobe_chain(const InteractionAngles& a, const PbrdfParams& p) {
    return microfacet_term(a, p.rho_s, p.sigma_s) * specular_structure_chain(a, p.eta);
}

MuellerRgb single_scattering_practical(const InteractionAngles& a, const PbrdfParams& p,
                                       ClosedFormVariant variant) {
    const Mueller s = specular_structure(a, p.eta, variant);
    const double k = microfacet_term(a, 1.0, p.sigma_ss);
    MuellerRgb out;
    for (int c = 0; c < 3; ++c) out[c] = p.rho_ss[c] * k * s;
    return out;
}

MuellerRgb single_scattering_practical_chain(const InteractionAngles& a, const PbrdfParams& p) {
    const Mueller s = specular_structure_chain(a, p.eta);
    const double k = microfacet_term(a, 1.0, p.sigma_ss);
    MuellerRgb out;
    for (int c = 0; c < 3; ++c) out[c] = p.rho_ss[c] * k * s;
    return out;
}

double henyey_greenstein(double cos_theta, double g) {
    const double denom = 1.0 + g * g - 2.0 * g * cos_theta;
    return (1.0 - g * g) / (4.0 * kPi * denom * std::sqrt(denom));
}

namespace {

// Upward-pointing direction inside the medium for an outside direction `w`.
std::optional<Vec3> refract_inward(const Vec3& n, const Vec3& w, double eta) {
    const double cos_o = n.dot(w);
    const Vec3 tangent = w - cos_o * n;
    const double sin2 = tangent.squaredNorm() / (eta * eta);
    if (sin2 >= 1.0) return std::nullopt;
    return Vec3(tangent / eta + std::sqrt(1.0 - sin2) * n);
}

// Frame with propagation `z` whose x axis is perpendicular to the plane
// spanned by `z` and `plane_normal`; falls back to `prev`'s x when coplanar.
LocalFrame plane_frame(const Vec3& z, const Vec3& plane_normal, const LocalFrame& prev) {
    Vec3 x = plane_normal.cross(z);
    if (x.norm() < 1e-12) x = prev.x_axis - prev.x_axis.dot(z) * z;
    LocalFrame f;
    f.z_axis = z;
    f.x_axis = x.normalized();
    f.y_axis = z.cross(f.x_axis);
    return f;
}

// Same x axis, new propagation direction (x is invariant through a Fresnel event).
LocalFrame carry_frame(const LocalFrame& f, const Vec3& z) {
    LocalFrame g;
    g.z_axis = z;
    g.x_axis = f.x_axis;
    g.y_axis = z.cross(f.x_axis);
    return g;
}

}  // namespace

PhysicalSsResult single_scattering_physical(const ScatteringGeometry& geo,
                                            const PhysicalSsParams& phys, double eta) {
    PhysicalSsResult out;
    const Vec3& n = geo.normal;
    const double cos_i = n.dot(geo.omega_i);
    const double cos_o = n.dot(geo.omega_o);
    if (!(cos_i > 0.0) || !(cos_o > 0.0)) return out;

    const auto wi = refract_inward(n, geo.omega_i, eta);
    const auto wo = refract_inward(n, geo.omega_o, eta);
    if (!wi || !wo) {
        out.total_internal_reflection = true;
        return out;
    }
    const Vec3 hp = geo.inner_halfway ? geo.inner_halfway->normalized()
                                      : Vec3((*wi + *wo).normalized());
    const double cos_id = std::clamp(hp.dot(*wi), -1.0, 1.0);
    const double denom = hp.dot(*wi) + hp.dot(*wo);
    if (!(cos_id > 0.0) || !(denom > 0.0)) return out;
    const double theta_d_inner = std::acos(cos_id);

    const LocalFrame f0 = geo.frames.incident;
    const LocalFrame f1 = plane_frame(-geo.omega_i, n, f0);
    const LocalFrame f2 = carry_frame(f1, -*wi);
    const LocalFrame f3 = plane_frame(-*wi, hp, f2);
    const LocalFrame f4 = carry_frame(f3, *wo);
    const LocalFrame f5 = plane_frame(*wo, n, f4);
    const LocalFrame f6 = carry_frame(f5, geo.omega_o);
    const LocalFrame& f7 = geo.frames.exitant;

    const Mueller ft_in = fresnel_matrix(fresnel_coefficients(std::acos(std::min(cos_i, 1.0)), eta),
                                         Interaction::transmission, 1.0);
    const Mueller fr = fresnel_matrix(fresnel_coefficients(theta_d_inner, phys.eta_p),
                                      Interaction::reflection,
                                      dielectric_cos_delta(theta_d_inner, phys.eta_p));
    const Mueller ft_out = fresnel_matrix(fresnel_coefficients(std::acos(std::min(cos_o, 1.0)), eta),
                                          Interaction::transmission, 1.0);

    const Mueller chain = rotation_mueller(frame_rotation_angle(f6, f7)) * ft_out *
                          rotation_mueller(frame_rotation_angle(f4, f5)) * fr *
                          rotation_mueller(frame_rotation_angle(f2, f3)) * ft_in *
                          rotation_mueller(frame_rotation_angle(f0, f1));
    const double phase = henyey_greenstein(-wi->dot(*wo), phys.g);
    for (int c = 0; c < 3; ++c) out.m[c] = (phys.rho_ss[c] * phase / denom) * chain;
    return out;
}

MuellerRgb pbrdf_eval(const InteractionAngles& a, const PbrdfParams& p) {
    MuellerRgb out = diffuse_lobe(a, p);
    const Mueller spec = specular_lobe(a, p);
    const MuellerRgb ss = single_scattering_practical(a, p);
    for (int c = 0; c < 3; ++c) out[c] += spec + ss[c];
    return out;
}

MuellerRgb coaxial_pbrdf(const InteractionAngles& a, const PbrdfParams& p) {
    const FresnelCoefficients fo = fresnel_coefficients(a.theta_o, p.eta);
    const double tp = fo.t_plus(), tm = fo.t_minus();
    const double alpha = a.alpha_o(), beta = a.beta_o();
    const double r_plus = fresnel_coefficients(a.theta_d, p.eta).r_plus();
    const double ks = microfacet_term(a, p.rho_s, p.sigma_s);
    const double kss = microfacet_term(a, 1.0, p.sigma_ss);

    MuellerRgb out;
    for (int c = 0; c < 3; ++c) {
        const double d = p.rho_d[c];
        const double k = (ks + p.rho_ss[c] * kss) * r_plus;
        Mueller m = Mueller::Zero();
        m(0, 0) = d * tp * tp + k;
        m(0, 1) = -d * tm * tp * beta;
        m(0, 2) = d * tm * tp * alpha;
        m(1, 0) = -d * tm * tp * beta;
        m(1, 1) = k;
        m(2, 0) = -d * tm * tp * alpha;
        m(2, 2) = -k;
        m(3, 3) = -k;
        out[c] = m;
    }
    return out;
}

}  // namespace polinv
