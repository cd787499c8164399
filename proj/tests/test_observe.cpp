#include <doctest.h>

#include <cmath>
#include <random>

#include "polinv/observe.h"
#include "polinv/render.h"
#include "polinv/scene.h"

using namespace polinv;

namespace {

PbrdfParams material(double rho_d, double rho_s, double rho_ss) {
    PbrdfParams p;
    p.eta = 1.5;
    p.rho_d = rho_d * Rgb(1.0, 0.5, 0.4);
    p.rho_s = rho_s;
    p.sigma_s = 0.25;
    p.rho_ss = rho_ss * Rgb(1.0, 0.5, 0.5);
    p.sigma_ss = 0.9;
    return p;
}

Vec3 tilted(double zenith_deg, double azimuth) {
    const double t = deg_to_rad(zenith_deg);
    return Vec3(std::sin(t) * std::cos(azimuth), std::sin(t) * std::sin(azimuth), std::cos(t));
}

struct Shot {
    VertexObservation obs;
    InteractionAngles angles;
};

// One vertex at the origin seen by a camera on +z at 0.5 m.
Shot shoot(const Vec3& normal, const PbrdfParams& p, PbrdfModel model, const ViewPose& cam) {
    Scene scene;
    Vertex v;
    v.normal = normal;
    v.params = p;
    scene.vertices.push_back(v);
    scene.views.push_back(cam);
    RenderConfig cfg;
    cfg.model = model;
    const ObservationSet set = render_views(scene, cfg);
    Shot s;
    s.obs = set.at(0, 0);
    const ViewGeometry g = view_geometry(v.position, cam, scene.light);
    s.angles = *interaction_angles(normal, g.omega_i, g.omega_o, g.frames);
    return s;
}

ViewPose default_cam() { return look_at(Vec3(0, 0, 0.5), Vec3::Zero()); }

// Exact specular and single-scattering parts of i_s from the same renderer.
std::pair<Rgb, Rgb> exact_predictions(const Vec3& n, PbrdfParams p, PbrdfModel model) {
    p.rho_d = Rgb::Zero();
    PbrdfParams spec = p, ss = p;
    spec.rho_ss = Rgb::Zero();
    ss.rho_s = 0.0;
    return {decompose(shoot(n, spec, model, default_cam()).obs).i_s,
            decompose(shoot(n, ss, model, default_cam()).obs).i_s};
}

}  // namespace

TEST_CASE("decompose unpolarized input") {
    VertexObservation o;
    const Rgb c(0.3, 0.2, 0.1);
    o.i0 = o.i45 = o.i90 = o.i135 = c;
    const Decomposition d = decompose(o);
    CHECK(((d.i_d - 2.0 * c).abs() < 1e-16).all());
    CHECK((d.i_alpha == 0.0).all());
    CHECK((d.i_s == 0.0).all());
}

TEST_CASE("decompose is linear") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_obs = [&] {
        VertexObservation o;
        o.i0 = Rgb(u(rng), u(rng), u(rng));
        o.i45 = Rgb(u(rng), u(rng), u(rng));
        o.i90 = Rgb(u(rng), u(rng), u(rng));
        o.i135 = Rgb(u(rng), u(rng), u(rng));
        return o;
    };
    for (int k = 0; k < 100; ++k) {
        const VertexObservation x = random_obs(), y = random_obs();
        const double a = 3 * u(rng) - 1, b = 3 * u(rng) - 1;
        VertexObservation z;
        z.i0 = a * x.i0 + b * y.i0;
        z.i45 = a * x.i45 + b * y.i45;
        z.i90 = a * x.i90 + b * y.i90;
        z.i135 = a * x.i135 + b * y.i135;
        const Decomposition dz = decompose(z), dx = decompose(x), dy = decompose(y);
        CHECK(((dz.i_d - a * dx.i_d - b * dy.i_d).abs() < 1e-14).all());
        CHECK(((dz.i_alpha - a * dx.i_alpha - b * dy.i_alpha).abs() < 1e-14).all());
        CHECK(((dz.i_s - a * dx.i_s - b * dy.i_s).abs() < 1e-14).all());
    }
}

TEST_CASE("diffuse vertex at normal view has no polarization") {
    // Light and camera both on the normal.
    Scene scene;
    Vertex v;
    v.params = material(0.7, 0.0, 0.0);
    scene.vertices.push_back(v);
    scene.views.push_back(look_at(Vec3(0, 0, 1), Vec3::Zero()));
    scene.light.offset = Vec3::Zero();
    RenderConfig cfg;
    cfg.model = PbrdfModel::coaxial;
    const Decomposition d = decompose(render_views(scene, cfg).at(0, 0));
    CHECK((d.i_alpha.abs() < 1e-16).all());
    CHECK((d.i_s.abs() < 1e-16).all());
    CHECK((d.i_d > 0.0).all());
}

TEST_CASE("pure specular vertex") {
    const Vec3 n = tilted(20.0, 0.4);
    const PbrdfParams p = material(0.0, 0.6, 0.0);
    const Shot s = shoot(n, p, PbrdfModel::coaxial, default_cam());
    const Decomposition d = decompose(s.obs);
    const double shade = s.angles.cos_i / (s.obs.distance * s.obs.distance);
    const double k = microfacet_term(s.angles, p.rho_s, p.sigma_s);
    const double rp = fresnel_coefficients(s.angles.theta_d, p.eta).r_plus();
    for (int c = 0; c < 3; ++c) {
        CHECK(d.i_s[c] == doctest::Approx(shade * k * rp).epsilon(1e-12));
        CHECK(std::abs(d.i_d[c]) < 1e-15);
    }
}

TEST_CASE("beta observation") {
    const Rgb is(0.3, 0.2, 0.1), ps(0.1, 0.05, 0.02), pss(0.01, 0.02, 0.03);
    CHECK((beta_observation(is, Rgb::Zero(), Rgb::Zero()) == is).all());
    CHECK((beta_observation(is, is, Rgb::Zero()) == 0.0).all());
    CHECK(((beta_observation(is, ps, pss) - (is - ps - pss)).abs() < 1e-16).all());

    // Perfect predictions leave the diffuse term -rho_d·S·T-·T+·beta.
    const Vec3 n = tilted(35.0, 1.1);
    const PbrdfParams p = material(0.6, 0.5, 0.1);
    const Shot s = shoot(n, p, PbrdfModel::coaxial, default_cam());
    const auto [spec, ss] = exact_predictions(n, p, PbrdfModel::coaxial);
    const Rgb beta = beta_observation(decompose(s.obs).i_s, spec, ss);
    const auto fo = fresnel_coefficients(s.angles.theta_o, p.eta);
    const double shade = s.angles.cos_i / (s.obs.distance * s.obs.distance);
    for (int c = 0; c < 3; ++c)
        CHECK(beta[c] == doctest::Approx(-p.rho_d[c] * shade * fo.t_minus() * fo.t_plus() * s.angles.beta_o()).epsilon(1e-10));
}

TEST_CASE("dop estimate") {
    CHECK(estimate_dop(Rgb::Constant(0.5), Rgb::Zero(), Rgb::Zero()) == 0.0);

    // Diffuse material, 60 degree view, zero predictions.
    const Vec3 n = tilted(60.0, 0.3);
    const Shot s = shoot(n, material(0.6, 0.0, 0.0), PbrdfModel::full, default_cam());
    const Decomposition d = decompose(s.obs);
    CHECK(std::abs(estimate_dop(d.i_d, d.i_alpha, d.i_s) - diffuse_dop(s.angles.theta_o, 1.5)) < 1e-12);

    const Shot z = shoot(Vec3(0, 0, 1), material(0.6, 0.0, 0.0), PbrdfModel::full,
                         look_at(Vec3(0, 0.0, 0.5), Vec3::Zero()));
    const Decomposition dz = decompose(z.obs);
    // The flash sits 5 cm off axis, so the view is not exactly normal.
    CHECK(estimate_dop(dz.i_d, dz.i_alpha, dz.i_s) < 1e-4);
}

TEST_CASE("dop estimate with perfect predictions over zenith") {
    const PbrdfParams p = material(0.6, 0.5, 0.1);
    for (double deg = 5.0; deg <= 85.0; deg += 5.0) {
        const Vec3 n = tilted(deg, 0.7);
        const Shot s = shoot(n, p, PbrdfModel::full, default_cam());
        if (!s.obs.visible) continue;
        const auto [spec, ss] = exact_predictions(n, p, PbrdfModel::full);
        const Decomposition d = decompose(s.obs);
        const Rgb beta = beta_observation(d.i_s, spec, ss);
        CHECK(std::abs(estimate_dop(d.i_d, d.i_alpha, beta) - diffuse_dop(s.angles.theta_o, p.eta)) < 1e-6);
    }
}

TEST_CASE("observed azimuth") {
    CHECK(observed_azimuth(Rgb::Zero(), Rgb::Constant(-1.0)) == doctest::Approx(kPi / 2));
    CHECK(observed_azimuth(Rgb::Zero(), Rgb::Constant(1.0)) == 0.0);

    const PbrdfParams p = material(0.6, 0.3, 0.05);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        const Vec3 n = tilted(20.0 + 50.0 * u(rng), 2 * kPi * u(rng));
        const Shot s = shoot(n, p, PbrdfModel::full, default_cam());
        REQUIRE(s.obs.visible);
        const auto [spec, ss] = exact_predictions(n, p, PbrdfModel::full);
        const Decomposition d = decompose(s.obs);
        const double phi = observed_azimuth(d.i_alpha, beta_observation(d.i_s, spec, ss));
        CHECK(std::abs(angle_difference(phi, s.angles.phi_o, kPi)) < 1e-3);
    }
}

TEST_CASE("camera roll shifts the observed azimuth") {
    const PbrdfParams p = material(0.6, 0.0, 0.0);
    const Vec3 n = tilted(40.0, 0.5);
    const ViewPose cam = default_cam();
    const Decomposition d0 = decompose(shoot(n, p, PbrdfModel::full, cam).obs);
    const double phi0 = observed_azimuth(d0.i_alpha, d0.i_s);
    for (double roll : {0.2, -0.7, 1.3}) {
        ViewPose rolled = cam;
        rolled.rotation = cam.rotation * Eigen::AngleAxisd(roll, Vec3::UnitZ()).toRotationMatrix();
        const Decomposition d = decompose(shoot(n, p, PbrdfModel::full, rolled).obs);
        const double phi = observed_azimuth(d.i_alpha, d.i_s);
        CHECK(std::abs(angle_difference(phi, phi0 - roll, kPi)) < 1e-9);
    }
}

TEST_CASE("observables and reliability") {
    const Shot s = shoot(tilted(45.0, 0.2), material(0.6, 0.0, 0.0), PbrdfModel::full, default_cam());
    const double id = decompose(s.obs).i_d.mean();
    const PolarObservables o = make_observables(s.obs, Rgb::Zero(), Rgb::Zero(), default_thresholds(id));
    CHECK(o.dop_reliable);
    CHECK(o.azimuth_reliable);
    CHECK(o.gamma == doctest::Approx(std::hypot(o.i_alpha.mean(), o.i_beta.mean())));
    CHECK((o.i_d >= 0.0).all());

    // Far brighter scene elsewhere: this sample falls under the darkness floor.
    const PolarObservables dark = make_observables(s.obs, Rgb::Zero(), Rgb::Zero(), default_thresholds(100.0 * id));
    CHECK_FALSE(dark.dop_reliable);

    const auto t = default_thresholds(2.0);
    CHECK(t.darkness == doctest::Approx(0.06));
    CHECK(t.gamma_floor == doctest::Approx(2e-4));
}
