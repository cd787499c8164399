#include <doctest.h>

#include <cmath>
#include <random>

#include "polinv/microfacet.h"
#include "polinv/pbrdf.h"

using namespace polinv;

namespace {

struct Geometry {
    Vec3 n, wi, wo;
    FramePair frames;
    InteractionAngles a;
};

Vec3 dir(double zenith, double azimuth) {
    return Vec3(std::sin(zenith) * std::cos(azimuth), std::sin(zenith) * std::sin(azimuth),
                std::cos(zenith));
}

// Random front-facing geometry around a normal tilted off +z.
Geometry random_geometry(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        Geometry g;
        g.n = dir(0.4 * u(rng), 2 * kPi * u(rng));
        g.wi = dir(1.3 * u(rng), 2 * kPi * u(rng));
        g.wo = dir(1.3 * u(rng), 2 * kPi * u(rng));
        if (g.n.dot(g.wi) < 0.05 || g.n.dot(g.wo) < 0.05) continue;
        const Vec3 pol = Vec3(0, 0, 1).cross(g.wi);
        if (pol.norm() < 1e-3 || Vec3(0, 0, 1).cross(g.wo).norm() < 1e-3) continue;
        g.frames = build_frames(g.wi, g.wo, Vec3(0, 0, 1), pol.normalized());
        const auto a = interaction_angles(g.n, g.wi, g.wo, g.frames);
        if (!a) continue;
        g.a = *a;
        return g;
    }
}

PbrdfParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PbrdfParams p;
    p.eta = 1.2 + 0.8 * u(rng);
    p.rho_d = Rgb(u(rng), u(rng), u(rng));
    p.rho_s = u(rng);
    p.sigma_s = 0.05 + 0.6 * u(rng);
    p.rho_ss = 0.2 * Rgb(u(rng), u(rng), u(rng));
    p.sigma_ss = 0.5 + 0.5 * u(rng);
    return p;
}

double max_abs(const Mueller& m) { return m.cwiseAbs().maxCoeff(); }

double max_diff(const MuellerRgb& a, const MuellerRgb& b) {
    double d = 0.0;
    for (int c = 0; c < 3; ++c) d = std::max(d, max_abs(a[c] - b[c]));
    return d;
}

InteractionAngles coaxial_angles(double theta_deg, const Vec3& n) {
    const Vec3 w = dir(deg_to_rad(theta_deg), 0.9);
    const auto f = build_frames(w, w, Vec3(0, 1, 0), Vec3(0, 1, 0).cross(w).normalized());
    return *interaction_angles(n, w, w, f);
}

}  // namespace

TEST_CASE("ggx ndf values") {
    CHECK(ggx_ndf(0.0, 1.0) == doctest::Approx(kInvPi).epsilon(1e-15));
    // alpha = sigma: D(0) = 1 / (pi sigma^2).
    CHECK(ggx_ndf(0.0, 0.2) == doctest::Approx(1.0 / (kPi * 0.04)).epsilon(1e-13));
    CHECK(ggx_ndf(0.0, 0.01) / ggx_ndf(0.0, 0.02) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("ggx ndf is normalized") {
    for (double sigma : {0.1, 0.5, 1.0}) {
        // Midpoint rule in cos(theta), which is smooth for the GGX density.
        const int n = 200000;
        double sum = 0.0;
        for (int k = 0; k < n; ++k) {
            const double c = (k + 0.5) / n;
            sum += ggx_ndf_cos(c, sigma) * c;
        }
        const double integral = 2.0 * kPi * sum / n;
        CHECK(integral == doctest::Approx(1.0).epsilon(0.01));
    }
}

TEST_CASE("smith shadowing") {
    CHECK(smith_g(0.0, 0.0, 0.4) == doctest::Approx(1.0));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.5);
    for (int k = 0; k < 100; ++k) {
        const double a = u(rng), b = u(rng);
        CHECK(smith_g(a, b, 0.3) == smith_g(b, a, 0.3));
        CHECK(smith_g(a, b, 0.3) <= 1.0);
        CHECK(smith_g(a, b, 0.3) >= 0.0);
    }
    // Closed-form G1 = 2 / (1 + sqrt(1 + sigma^2 tan^2 theta)).
    const double t = deg_to_rad(80.0), s = 0.5;
    const double g1 = 2.0 / (1.0 + std::sqrt(1.0 + s * s * std::tan(t) * std::tan(t)));
    CHECK(smith_g(t, t, s) == doctest::Approx(g1 * g1).epsilon(1e-13));
    CHECK(smith_g(t, 0.0, s) == doctest::Approx(g1).epsilon(1e-13));
}

TEST_CASE("diffuse lobe at normal incidence") {
    const auto a = coaxial_angles(0.0, Vec3(0, 0, 1));
    PbrdfParams p;
    p.rho_d = Rgb(0.6, 0.3, 0.2);
    const auto m = diffuse_lobe(a, p);
    const double tp = 0.96;
    for (int c = 0; c < 3; ++c) {
        CHECK(m[c](0, 0) == doctest::Approx(p.rho_d[c] * tp * tp).epsilon(1e-13));
        Mueller rest = m[c];
        rest(0, 0) = 0.0;
        CHECK(max_abs(rest) < 1e-15);
    }
}

TEST_CASE("closed forms match the rotation and fresnel chains") {
    std::mt19937_64 rng(2024);
    double d = 0.0, s = 0.0, ss = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const Geometry g = random_geometry(rng);
        const PbrdfParams p = random_params(rng);
        d = std::max(d, max_diff(diffuse_lobe(g.a, p), diffuse_lobe_chain(g.a, p)));
        s = std::max(s, max_abs(specular_lobe(g.a, p) - specular_lobe_chain(g.a, p)) /
                            std::max(1.0, max_abs(specular_lobe(g.a, p))));
        ss = std::max(ss, max_diff(single_scattering_practical(g.a, p),
                                   single_scattering_practical_chain(g.a, p)));
    }
    CHECK(d < 1e-10);
    CHECK(s < 1e-10);
    CHECK(ss < 1e-10);
}

TEST_CASE("swapped fresnel components break the closed form") {
    std::mt19937_64 rng(9);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        const Geometry g = random_geometry(rng);
        worst = std::max(worst, max_abs(specular_structure(g.a, 1.5, ClosedFormVariant::swapped_fresnel_components) -
                                        specular_structure_chain(g.a, 1.5)));
    }
    CHECK(worst > 1e-3);
}

TEST_CASE("diffuse lobe has no circular row or column") {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 200; ++k) {
        const Geometry g = random_geometry(rng);
        const auto m = diffuse_lobe(g.a, random_params(rng));
        for (int c = 0; c < 3; ++c) {
            CHECK(m[c].row(3).cwiseAbs().maxCoeff() == 0.0);
            CHECK(m[c].col(3).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("specular lobe retardance flips across brewster") {
    // Coaxial geometry gives theta_d = 0; use a bistatic pair in the plane of
    // the normal and scan theta_d through the Brewster angle.
    const double eta = 1.5, b = brewster_angle(eta);
    const Vec3 n(0, 0, 1);
    auto m33 = [&](double td) {
        const Vec3 wi = dir(td, 0.0), wo = dir(td, kPi);
        const auto f = build_frames(wi, wo, Vec3(0, 1, 0), Vec3(0, 1, 0).cross(wi).normalized());
        const auto a = interaction_angles(n, wi, wo, f);
        PbrdfParams p;
        p.eta = eta;
        return specular_lobe(*a, p)(3, 3);
    };
    CHECK(m33(b - 0.01) < 0.0);
    CHECK(m33(b + 0.01) > 0.0);

    // theta_d = 0: equal Fresnel components remove the linear diattenuation.
    const auto a0 = coaxial_angles(25.0, dir(deg_to_rad(25.0), 0.9));
    CHECK(a0.theta_d == doctest::Approx(0.0));
    const Mueller s0 = specular_lobe(a0, PbrdfParams{});
    CHECK(std::abs(s0(0, 1)) < 1e-15);
    CHECK(std::abs(s0(1, 0)) < 1e-15);
}

TEST_CASE("single scattering shares the specular structure") {
    std::mt19937_64 rng(6);
    for (int k = 0; k < 100; ++k) {
        const Geometry g = random_geometry(rng);
        PbrdfParams p = random_params(rng);
        p.rho_ss = Rgb::Ones();
        p.sigma_ss = p.sigma_s;
        p.rho_s = 1.0;
        const auto ss = single_scattering_practical(g.a, p);
        const Mueller sp = specular_lobe(g.a, p);
        for (int c = 0; c < 3; ++c) CHECK(max_abs(ss[c] - sp) <= 1e-14 * std::max(1.0, max_abs(sp)));

        p = random_params(rng);
        p.rho_ss = Rgb(1, 0, 0);
        const auto red = single_scattering_practical(g.a, p);
        CHECK(max_abs(red[1]) == 0.0);
        CHECK(max_abs(red[2]) == 0.0);
        const double kss = microfacet_term(g.a, 1.0, p.sigma_ss);
        const double ks = microfacet_term(g.a, 1.0, p.sigma_s);
        CHECK(max_abs(red[0] / kss - specular_lobe(g.a, p) / (p.rho_s * ks)) < 1e-12);
    }
}

TEST_CASE("physical single scattering") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int evaluated = 0;
    for (int k = 0; k < 1000; ++k) {
        const Geometry g = random_geometry(rng);
        ScatteringGeometry geo{g.n, g.wi, g.wo, g.frames, std::nullopt};
        PhysicalSsParams phys;
        phys.eta_p = 1.1 + u(rng);
        phys.g = 1.6 * u(rng) - 0.8;
        phys.rho_ss = Rgb(u(rng), u(rng), u(rng));
        const auto r = single_scattering_physical(geo, phys, 1.2 + u(rng));
        if (r.total_internal_reflection) continue;
        ++evaluated;
        for (int c = 0; c < 3; ++c) CHECK(r.m[c](0, 0) >= 0.0);
    }
    CHECK(evaluated > 900);

    const Geometry g = random_geometry(rng);
    ScatteringGeometry geo{g.n, g.wi, g.wo, g.frames, std::nullopt};
    PhysicalSsParams phys;
    phys.g = 0.0;
    phys.rho_ss = Rgb(0.1, 0.2, 0.4);
    const auto base = single_scattering_physical(geo, phys, 1.4);
    phys.rho_ss *= 3.0;
    const auto tripled = single_scattering_physical(geo, phys, 1.4);
    for (int c = 0; c < 3; ++c) CHECK(max_abs(tripled.m[c] - 3.0 * base.m[c]) < 1e-14);
    CHECK(base.m[1](0, 0) == doctest::Approx(2.0 * base.m[0](0, 0)));

    // Index-matched boundary: only the interior reflection remains.
    phys.rho_ss = Rgb::Ones();
    phys.eta_p = 1.5;
    const auto matched = single_scattering_physical(geo, phys, 1.0);
    const double td = g.a.theta_d;
    const double expect = (1.0 / (4.0 * kPi)) / (2.0 * std::cos(td)) * fresnel_coefficients(td, 1.5).r_plus();
    CHECK(matched.m[0](0, 0) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("henyey greenstein") {
    CHECK(henyey_greenstein(0.3, 0.0) == doctest::Approx(1.0 / (4.0 * kPi)));
    // Normalized over the sphere.
    for (double g : {-0.5, 0.3, 0.8}) {
        const int n = 100000;
        double sum = 0.0;
        for (int k = 0; k < n; ++k) sum += henyey_greenstein(-1.0 + (k + 0.5) * 2.0 / n, g);
        CHECK(2.0 * kPi * sum * 2.0 / n == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("pbrdf lobe switch-off and positivity") {
    std::mt19937_64 rng(12);
    for (int k = 0; k < 500; ++k) {
        const Geometry g = random_geometry(rng);
        PbrdfParams p = random_params(rng);
        const auto full = pbrdf_eval(g.a, p);
        for (int c = 0; c < 3; ++c) CHECK(full[c](0, 0) >= 0.0);

        p.rho_s = 0.0;
        p.rho_ss = Rgb::Zero();
        CHECK(max_diff(pbrdf_eval(g.a, p), diffuse_lobe(g.a, p)) == 0.0);
        p.rho_d = Rgb::Zero();
        CHECK(max_diff(pbrdf_eval(g.a, p), zero_mueller_rgb()) == 0.0);
    }
}

TEST_CASE("scalar reciprocity of specular and single scattering") {
    std::mt19937_64 rng(13);
    for (int k = 0; k < 200; ++k) {
        const Geometry g = random_geometry(rng);
        const PbrdfParams p = random_params(rng);
        const auto fr = build_frames(g.wo, g.wi, Vec3(0, 0, 1), Vec3(0, 0, 1).cross(g.wo).normalized());
        const auto b = interaction_angles(g.n, g.wo, g.wi, fr);
        REQUIRE(b);
        CHECK(specular_lobe(g.a, p)(0, 0) == doctest::Approx(specular_lobe(*b, p)(0, 0)).epsilon(1e-12));
        CHECK(single_scattering_practical(g.a, p)[1](0, 0) ==
              doctest::Approx(single_scattering_practical(*b, p)[1](0, 0)).epsilon(1e-12));
    }
}

TEST_CASE("diffuse lobe dop under unpolarized light") {
    std::mt19937_64 rng(14);
    for (int k = 0; k < 300; ++k) {
        const Geometry g = random_geometry(rng);
        const PbrdfParams p = random_params(rng);
        const Stokes out = diffuse_lobe(g.a, p)[0] * Stokes(1, 0, 0, 0);
        if (out[0] <= 0.0) continue;
        const double dop = out.tail<3>().norm() / out[0];
        CHECK(std::abs(dop - diffuse_dop(g.a.theta_o, p.eta)) < 1e-8);
    }
}

TEST_CASE("coaxial form structure") {
    std::mt19937_64 rng(15);
    for (int k = 0; k < 200; ++k) {
        const Geometry g = random_geometry(rng);
        const auto m = coaxial_pbrdf(g.a, random_params(rng));
        for (int c = 0; c < 3; ++c) {
            CHECK(m[c](1, 2) == 0.0);
            CHECK(m[c](2, 1) == 0.0);
        }
    }
    // Normal view: T- vanishes, so does every diffuse off-diagonal term.
    PbrdfParams p;
    p.rho_s = 0.0;
    p.rho_ss = Rgb::Zero();
    const auto m0 = coaxial_pbrdf(coaxial_angles(0.0, Vec3(0, 0, 1)), p);
    Mueller off = m0[0];
    off.diagonal().setZero();
    CHECK(max_abs(off) < 1e-15);
}

TEST_CASE("coaxial form against the full model at zero separation") {
    PbrdfParams p;
    p.eta = 1.5;
    p.rho_d = Rgb(0.6, 0.3, 0.2);
    p.rho_s = 0.5;
    p.sigma_s = 0.3;
    p.rho_ss = Rgb(0.1, 0.05, 0.05);
    p.sigma_ss = 0.95;
    for (double deg : {10.0, 30.0, 50.0, 60.0}) {
        const auto a = coaxial_angles(deg, Vec3(0, 0, 1));
        const auto full = pbrdf_eval(a, p);
        const auto coax = coaxial_pbrdf(a, p);
        for (int c = 0; c < 3; ++c) {
            const double m00 = full[c](0, 0);
            for (auto [r, q] : {std::pair{0, 0}, {0, 1}, {1, 0}, {3, 3}})
                CHECK(std::abs(coax[c](r, q) - full[c](r, q)) <= 0.02 * std::abs(full[c](r, q)) + 1e-15);
            // Entries the coaxial form drops, including the diffuse T-·T- part
            // of m11 and m22, stay below 2% of m00 up to 60 degrees.
            CHECK(std::abs(full[c](1, 2)) < 0.02 * m00);
            CHECK(std::abs(full[c](2, 1)) < 0.02 * m00);
            CHECK(std::abs(coax[c](1, 1) - full[c](1, 1)) < 0.02 * m00);
            CHECK(std::abs(coax[c](2, 2) - full[c](2, 2)) < 0.02 * m00);
        }
    }
}

TEST_CASE("validate params") {
    PbrdfParams p;
    CHECK_NOTHROW(validate_params(p));
    p.eta = 0.9;
    CHECK_THROWS_AS(validate_params(p), std::invalid_argument);
    p = PbrdfParams{};
    p.sigma_s = 0.001;
    CHECK_THROWS_AS(validate_params(p), std::invalid_argument);
    p = PbrdfParams{};
    p.rho_d[1] = std::nan("");
    CHECK_THROWS_AS(validate_params(p), std::invalid_argument);
}
