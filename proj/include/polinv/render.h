#pragma once

// Near-coaxial polarimetric flash renderer over scene vertices.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "polinv/common.h"
#include "polinv/pbrdf.h"
#include "polinv/scene.h"

namespace polinv {

enum class PbrdfModel { full, coaxial };

/// Observations with a zenith beyond this (light or camera side) are invisible.
inline constexpr double kMaxVisibleZenithDeg = 89.0;

/// Shot-noise-like sensor model applied per flash exposure.
struct NoiseSpec {
    bool enabled = false;
    /// Standard deviation is shot * sqrt(sensor value); sensor values are in
    /// units of full scale.
    double shot = 0.01;
    bool quantize_12bit = false;
    /// Sensor value per unit radiance at flash level 1; zero or negative
    /// selects auto exposure.
    double exposure = 0.0;
    std::uint64_t seed = 7;
};

struct RenderConfig {
    PbrdfModel model = PbrdfModel::full;
    std::vector<double> flash_levels{0.25, 0.125, 0.0625};
    NoiseSpec noise;
};

/// Linear-analyzer intensities behind the 0/45/90/135 degree filters.
struct FilterChannels {
    double i0 = 0.0, i45 = 0.0, i90 = 0.0, i135 = 0.0;
};

struct VertexObservation {
    Rgb i0 = Rgb::Zero();
    Rgb i45 = Rgb::Zero();
    Rgb i90 = Rgb::Zero();
    Rgb i135 = Rgb::Zero();
    Vec3 omega_i = Vec3::UnitZ();
    Vec3 omega_o = Vec3::UnitZ();
    /// Light-to-vertex distance.
    double distance = 1.0;
    bool visible = false;
    int view_id = 0;

    Stokes stokes(int channel) const;
};

/// Observations for every (view, vertex) pair, stored view-major.
struct ObservationSet {
    int n_vertices = 0;
    int n_views = 0;
    /// Exposure used for the noisy capture (0 when noise-free).
    double exposure = 0.0;
    std::vector<VertexObservation> obs;

    const VertexObservation& at(int view, int vertex) const {
        return obs[static_cast<std::size_t>(view) * n_vertices + vertex];
    }
    VertexObservation& at(int view, int vertex) {
        return obs[static_cast<std::size_t>(view) * n_vertices + vertex];
    }
};

/// Analyzer model with the physical 1/2 factor.
FilterChannels stokes_to_filter_channels(const Stokes& s);
Stokes filter_channels_to_stokes(const FilterChannels& c);

/// Visible iff both zeniths are below kMaxVisibleZenithDeg.
bool is_visible(const Vec3& normal, const Vec3& omega_i, const Vec3& omega_o);

/// s_o = S·P·s_i with s_i = (1, 1, 0, 0) and S = (n·ω_i)/d². Returns nullopt
/// when the pair is not visible.
std::optional<StokesRgb> shade_vertex(const Vertex& vertex, const ViewPose& view,
                                      const LightConfig& light, PbrdfModel model);

/// Same as shade_vertex for an arbitrary Mueller matrix.
StokesRgb shade_with(const MuellerRgb& p, double shading);

ObservationSet render_views(const Scene& scene, const RenderConfig& config);

/// Auto exposure puts the 99th percentile of the noise-free filter values at
/// this fraction of full scale for the brightest flash level.
inline constexpr double kAutoExposureTarget = 0.9;
double auto_exposure(std::vector<double> filter_values, const std::vector<double>& flash_levels);

/// Deterministic per-stream seed mixing (splitmix64 finalizer chain).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);

}  // namespace polinv
