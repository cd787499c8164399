#include "polinv/losses.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <ceres/jet.h>

#include "residuals.h"

namespace polinv {

using detail::Group;
using detail::Row;

FitVariables FitVariables::from(const PbrdfParams& p, const Vec3& normal, double dtheta_h) {
    FitVariables v;
    v.x[kEta] = p.eta;
    v.x[kSigmaS] = p.sigma_s;
    v.x[kSigmaSs] = p.sigma_ss;
    v.x[kNormalU] = 0.0;
    v.x[kNormalV] = 0.0;
    v.x[kDeltaThetaH] = dtheta_h;
    for (int c = 0; c < 3; ++c) {
        v.x[kRhoDr + c] = p.rho_d[c];
        v.x[kRhoSsR + c] = p.rho_ss[c];
    }
    v.x[kRhoS] = p.rho_s;
    v.base_normal = normal.normalized();
    return v;
}

PbrdfParams FitVariables::params() const {
    PbrdfParams p;
    p.eta = x[kEta];
    p.sigma_s = x[kSigmaS];
    p.sigma_ss = x[kSigmaSs];
    p.rho_s = x[kRhoS];
    for (int c = 0; c < 3; ++c) {
        p.rho_d[c] = x[kRhoDr + c];
        p.rho_ss[c] = x[kRhoSsR + c];
    }
    return p;
}

Vec3 FitVariables::normal() const {
    const auto [t1, t2] = tangent_basis(base_normal);
    return (base_normal + x[kNormalU] * t1 + x[kNormalV] * t2).normalized();
}

std::pair<Vec3, Vec3> tangent_basis(const Vec3& n) {
    // Branch-free orthonormal basis (Duff et al. construction).
    const double sign = std::copysign(1.0, n.z());
    const double a = -1.0 / (sign + n.z());
    const double b = n.x() * n.y() * a;
    return {Vec3(1.0 + sign * n.x() * n.x() * a, sign * b, -sign * n.x()),
            Vec3(b, sign + n.y() * n.y() * a, -n.y())};
}

namespace {

LossWeights unit_weights() { return {1.0, 1.0, 1.0, 1.0, 1.0}; }

LossValues accumulate(const std::vector<Row<double>>& rows, const VarVector& x,
                      const LossWeights& w) {
    const Eigen::Matrix<double, kNumAlbedo, 1> albedo = x.tail<kNumAlbedo>();
    LossValues v;
    for (const auto& r : rows) {
        const double e = detail::row_value(r, albedo);
        switch (r.group) {
            case Group::psi: v.psi += e * e; break;
            case Group::diffuse: v.diffuse += e * e; break;
            case Group::specular: v.specular_real += e * e; break;
            case Group::virt: v.specular_virtual += e * e; break;
            case Group::azimuth: v.azimuth += e * e; break;
            case Group::theta: v.theta_reg += e * e; break;
        }
    }
    v.total = w.lambda1 * v.psi + w.lambda2 * v.diffuse + w.lambda3 * v.specular(w) +
              w.lambda4 * v.azimuth + v.theta_reg;
    return v;
}

}  // namespace

LossValues evaluate_losses(const FitProblem& problem, const FitVariables& v) {
    std::vector<Row<double>> rows;
    detail::build_rows(problem, unit_weights(), v.x.data(), v.base_normal, rows);
    return accumulate(rows, v.x, problem.weights);
}

LossGradients loss_gradients(const FitProblem& problem, const FitVariables& v) {
    using J = ceres::Jet<double, kNumVars>;
    J nl[kNumNonlinear];
    for (int k = 0; k < kNumNonlinear; ++k) nl[k] = J(v.x[k], k);
    std::array<J, kNumAlbedo> albedo;
    for (int k = 0; k < kNumAlbedo; ++k) albedo[k] = J(v.x[kNumNonlinear + k], kNumNonlinear + k);

    std::vector<Row<J>> rows;
    detail::build_rows(problem, unit_weights(), nl, v.base_normal, rows);
    LossGradients g;
    g.psi.setZero();
    g.diffuse.setZero();
    g.specular.setZero();
    g.azimuth.setZero();
    VarVector spec_real = VarVector::Zero(), spec_virt = VarVector::Zero(),
              theta = VarVector::Zero();
    for (const auto& r : rows) {
        const J e = detail::row_value(r, albedo);
        const VarVector d = 2.0 * e.a * e.v;
        switch (r.group) {
            case Group::psi: g.psi += d; break;
            case Group::diffuse: g.diffuse += d; break;
            case Group::specular: spec_real += d; break;
            case Group::virt: spec_virt += d; break;
            case Group::azimuth: g.azimuth += d; break;
            case Group::theta: theta += d; break;
        }
    }
    const LossWeights& w = problem.weights;
    g.specular = spec_real + w.lambda_g * spec_virt;
    g.total = w.lambda1 * g.psi + w.lambda2 * g.diffuse + w.lambda3 * g.specular +
              w.lambda4 * g.azimuth + theta;
    return g;
}

double loss_psi(const FitProblem& problem, const PbrdfParams& p, const Vec3& n) {
    return evaluate_losses(problem, FitVariables::from(p, n)).psi;
}

double loss_diffuse(const FitProblem& problem, const PbrdfParams& p, const Vec3& n) {
    return evaluate_losses(problem, FitVariables::from(p, n)).diffuse;
}

double loss_specular(const FitProblem& problem, const PbrdfParams& p, const Vec3& n) {
    return evaluate_losses(problem, FitVariables::from(p, n)).specular(problem.weights);
}

double loss_azimuth(const FitProblem& problem, const PbrdfParams& p, const Vec3& n) {
    return evaluate_losses(problem, FitVariables::from(p, n)).azimuth;
}

void assign_view_weights(std::vector<FitSample>& samples) {
    if (samples.empty()) return;
    const double wv = 1.0 / static_cast<double>(samples.size());
    double norm = 0.0;
    for (auto& s : samples) {
        s.w_v = wv;
        if (s.obs.azimuth_reliable) norm += wv * s.obs.gamma;
    }
    for (auto& s : samples)
        s.w_p = (s.obs.azimuth_reliable && norm > 0.0) ? wv * s.obs.gamma / norm : 0.0;
}

double retro_lobe(double theta_h, double sigma) {
    return detail::retro_lobe_t(std::cos(theta_h), sigma);
}

std::vector<VirtualObservation> generate_virtuals(const PbrdfParams& p, int m) {
    if (m < 1) throw std::invalid_argument("generate_virtuals: m must be positive");
    std::vector<VirtualObservation> out(m);
    const double r0 = kernel::fresnel_r_plus(1.0, p.eta);
    const double step = 0.5 * kPi / m;
    double wsum = 0.0;
    for (int k = 0; k < m; ++k) {
        VirtualObservation& v = out[k];
        v.theta_h = k * step;
        const double ks = p.rho_s * retro_lobe(v.theta_h, p.sigma_s);
        const double kss = retro_lobe(v.theta_h, p.sigma_ss);
        v.target_i_s = (ks + p.rho_ss * kss) * r0;
        v.weight = std::cos(v.theta_h);
        wsum += v.weight;
    }
    for (auto& v : out) v.weight /= wsum;
    return out;
}

SpecularPrediction predict_specular(const FitSample& s, const PbrdfParams& p, const Vec3& n) {
    SpecularPrediction out;
    const double cos_i = n.dot(s.omega_i);
    const double cos_o = n.dot(s.omega_o);
    if (!(cos_i > 0.0) || !(cos_o > 0.0)) return out;
    const Vec3 h = (s.omega_i + s.omega_o).normalized();
    const double r_plus = kernel::fresnel_r_plus(s.omega_i.dot(h), p.eta);
    const double shading = cos_i / (s.distance * s.distance);
    const double cos_h = n.dot(h);
    const double base = shading * r_plus;
    out.specular = Rgb::Constant(base * p.rho_s * microfacet_kappa(cos_h, cos_i, cos_o, p.sigma_s));
    out.single_scattering = base * p.rho_ss * microfacet_kappa(cos_h, cos_i, cos_o, p.sigma_ss);
    return out;
}

}  // namespace polinv
