#pragma once

#include <array>
#include <cstdint>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace polinv {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// 4x4 real Mueller matrix; rows/columns follow Stokes component order.
using Mueller = Eigen::Matrix4d;

/// Stokes vector (s0, s1, s2, s3).
using Stokes = Eigen::Vector4d;

/// Linear RGB triple.
using Rgb = Eigen::Array3d;

/// One Mueller matrix per color channel (R, G, B).
using MuellerRgb = std::array<Mueller, 3>;

/// One Stokes vector per color channel.
using StokesRgb = std::array<Stokes, 3>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInvPi = std::numbers::inv_pi;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle into [0, period).
double wrap_angle(double angle, double period);

/// Signed difference a - b wrapped into [-period/2, period/2).
double angle_difference(double a, double b, double period);

inline MuellerRgb zero_mueller_rgb() {
    return {Mueller::Zero(), Mueller::Zero(), Mueller::Zero()};
}

}  // namespace polinv
