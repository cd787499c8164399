#pragma once

// Per-view rasters of vertex data: filter channels, Stokes components, DoP,
// AoLP, Mueller grids and recovered parameter maps.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "polinv/io.h"
#include "polinv/pipeline.h"

namespace polinv {

/// A raster plus the pixels some vertex landed on.
struct Raster {
    FloatImage image;
    std::vector<std::uint8_t> covered;
};

/// Writes `channels` floats for `vertex` into `out`; returning false skips it.
using VertexValueFn = std::function<bool(int vertex, float* out)>;

/// Splats every vertex that is visible in `view` as a disc sized from the
/// median nearest-neighbor spacing; the nearest surface wins each pixel.
Raster splat_view(const Capture& capture, int view, int channels, const VertexValueFn& value);

/// Median distance from a vertex to its nearest neighbor.
double median_vertex_spacing(const std::vector<Vec3>& positions);

/// Heat colour ramp, black → red → yellow → white, for t clamped to [0, 1].
Rgb heat_color(double t);

/// Cyclic hue for an angle of period π: 0 is red, π/3 green, 2π/3 blue.
Rgb aolp_color(double angle);

/// Scalar raster mapped through the heat ramp over [lo, hi]; uncovered
/// pixels stay black.
FloatImage heat_map(const Raster& scalar, double lo, double hi);

/// Per-filter RGB rasters in the order I0, I45, I90, I135.
std::array<FloatImage, 4> filter_rasters(const Capture& capture, int view);

/// Per-component RGB rasters s0..s3.
std::array<FloatImage, 4> stokes_rasters(const Capture& capture, int view);

/// DoP of the channel-mean Stokes vector, in [0, 1].
Raster dop_raster(const Capture& capture, int view);

/// AoLP of the channel-mean Stokes vector in [0, π) (unpolarized pixels hold 0).
Raster aolp_raster(const Capture& capture, int view);

/// Hue map of an AoLP raster; brightness follows coverage only.
FloatImage aolp_hue_map(const Raster& aolp);

/// Display scale of Mueller element (row, col): off-diagonal ×10,
/// m11 and m22 ×4, m00 and m33 ×1.
double mueller_display_scale(int row, int col);

/// 4×4 grid of RGB panels holding the shaded Mueller matrix S·P of every
/// vertex of `model` in `view`, scaled by mueller_display_scale. Panel (r, c)
/// occupies columns [c·W, (c+1)·W) and rows [r·H, (r+1)·H).
FloatImage mueller_grid(const Capture& capture, int view, const std::vector<Vertex>& model,
                        PbrdfModel pbrdf_model);

/// Text describing the grid layout and the scaling, for a sidecar file.
std::string mueller_legend();

/// One raster per recovered parameter, keyed by file stem: eta, sigma_s,
/// sigma_ss, rho_s (scalars) and rho_d, rho_ss (RGB).
struct ParameterMaps {
    std::vector<std::pair<std::string, Raster>> maps;
};
ParameterMaps parameter_maps(const Capture& capture, int view, const std::vector<VertexEstimate>& estimates);

}  // namespace polinv
