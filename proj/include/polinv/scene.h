#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "polinv/common.h"
#include "polinv/pbrdf.h"
#include "polinv/polar.h"

namespace polinv {

struct Vertex {
    Vec3 position = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    PbrdfParams params;
};

struct Intrinsics {
    double fx = 600.0;
    double fy = 600.0;
    double cx = 160.0;
    double cy = 120.0;
    int width = 320;
    int height = 240;
};

/// Camera pose. Rotation columns are the camera right, up and backward axes
/// in world coordinates (the camera looks along -column 2); translation is the
/// camera center.
struct ViewPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    Intrinsics intrinsics;

    Vec3 right() const { return rotation.col(0); }
    Vec3 up() const { return rotation.col(1); }
    Vec3 forward() const { return -rotation.col(2); }
};

/// Flash rig shared by every view, expressed in camera coordinates.
struct LightConfig {
    Vec3 offset{0.0, -0.05, 0.0};
    /// Polarizer transmission axis angle in the camera image plane, from +x.
    double pol_angle = 0.0;
};

struct SphereSpec {
    double radius = 0.1;
    int n_vertices = 1000;
    int n_views = 100;
    double view_distance = 0.8;
    std::uint64_t seed = 1;
    /// Restrict camera directions to the upper hemisphere (z > 0).
    bool hemisphere = false;
};

struct Scene {
    std::vector<Vertex> vertices;
    std::vector<ViewPose> views;
    LightConfig light;
    std::optional<SphereSpec> generator;
};

/// World-space geometry of one vertex seen from one view.
struct ViewGeometry {
    Vec3 omega_i;
    Vec3 omega_o;
    double light_distance = 1.0;
    double camera_distance = 1.0;
    FramePair frames;
};

Vec3 light_position(const ViewPose& view, const LightConfig& light);
Vec3 light_pol_axis(const ViewPose& view, const LightConfig& light);

ViewGeometry view_geometry(const Vec3& position, const ViewPose& view, const LightConfig& light);

/// Camera looking from `eye` at `target`; world up is +z unless nearly
/// parallel to the viewing direction, in which case +y is used.
ViewPose look_at(const Vec3& eye, const Vec3& target, const Intrinsics& intrinsics = {});

/// Throws std::invalid_argument on non-unit normals, non-orthonormal
/// rotations or invalid parameters.
void validate_scene(const Scene& scene);

using ParamsFn = std::function<PbrdfParams(const Vec3& unit_position, int index)>;

/// Fibonacci-sphere vertices centered at the origin and cameras at
/// `view_distance` looking at the center from seeded random directions.
Scene make_synthetic_sphere(const SphereSpec& spec, const ParamsFn& params_fn);

/// Uniform material over the whole sphere.
ParamsFn uniform_params(const PbrdfParams& p);

}  // namespace polinv
