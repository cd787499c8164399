#include "polinv/scene.h"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace polinv {

Vec3 light_position(const ViewPose& view, const LightConfig& light) {
    return view.translation + view.rotation * light.offset;
}

Vec3 light_pol_axis(const ViewPose& view, const LightConfig& light) {
    return view.rotation * Vec3(std::cos(light.pol_angle), std::sin(light.pol_angle), 0.0);
}

ViewGeometry view_geometry(const Vec3& position, const ViewPose& view, const LightConfig& light) {
    ViewGeometry g;
    const Vec3 to_light = light_position(view, light) - position;
    const Vec3 to_cam = view.translation - position;
    g.light_distance = to_light.norm();
    g.camera_distance = to_cam.norm();
    g.omega_i = to_light / g.light_distance;
    g.omega_o = to_cam / g.camera_distance;
    g.frames = build_frames(g.omega_i, g.omega_o, view.up(), light_pol_axis(view, light));
    return g;
}

ViewPose look_at(const Vec3& eye, const Vec3& target, const Intrinsics& intrinsics) {
    const Vec3 back = (eye - target).normalized();
    Vec3 world_up = Vec3::UnitZ();
    if (std::abs(back.dot(world_up)) > 0.99) world_up = Vec3::UnitY();
    const Vec3 right = world_up.cross(back).normalized();
    const Vec3 up = back.cross(right);
    ViewPose v;
    v.rotation.col(0) = right;
    v.rotation.col(1) = up;
    v.rotation.col(2) = back;
    v.translation = eye;
    v.intrinsics = intrinsics;
    return v;
}

void validate_scene(const Scene& scene) {
    for (std::size_t i = 0; i < scene.vertices.size(); ++i) {
        const Vertex& v = scene.vertices[i];
        if (!v.position.allFinite() || std::abs(v.normal.norm() - 1.0) > 1e-6)
            throw std::invalid_argument("vertex " + std::to_string(i) + ": invalid position/normal");
        validate_params(v.params);
    }
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
        const Mat3& r = scene.views[i].rotation;
        if (!r.allFinite() || !(r.transpose() * r).isApprox(Mat3::Identity(), 1e-9) ||
            r.determinant() < 0.0)
            throw std::invalid_argument("view " + std::to_string(i) + ": rotation not orthonormal");
    }
    if (!scene.light.offset.allFinite())
        throw std::invalid_argument("light offset is not finite");
}

Scene make_synthetic_sphere(const SphereSpec& spec, const ParamsFn& params_fn) {
    if (spec.n_vertices < 100 || spec.n_views < 3)
        throw std::invalid_argument("make_synthetic_sphere: need >= 100 vertices and >= 3 views");
    if (!(spec.radius > 0.0) || !(spec.view_distance > spec.radius))
        throw std::invalid_argument("make_synthetic_sphere: cameras must be outside the sphere");

    Scene scene;
    scene.generator = spec;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    const int n = spec.n_vertices;
    scene.vertices.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        const Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
        Vertex v;
        v.normal = dir.normalized();
        v.position = spec.radius * v.normal;
        v.params = params_fn(v.normal, i);
        scene.vertices.push_back(v);
    }

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    scene.views.reserve(spec.n_views);
    while (static_cast<int>(scene.views.size()) < spec.n_views) {
        Vec3 d(gauss(rng), gauss(rng), gauss(rng));
        if (d.norm() < 1e-9) continue;
        d.normalize();
        if (spec.hemisphere && d.z() < 0.0) d.z() = -d.z();
        scene.views.push_back(look_at(spec.view_distance * d, Vec3::Zero()));
    }
    return scene;
}

ParamsFn uniform_params(const PbrdfParams& p) {
    return [p](const Vec3&, int) { return p; };
}

}  // namespace polinv
