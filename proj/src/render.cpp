#include "polinv/render.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace polinv {

Stokes VertexObservation::stokes(int c) const {
    return filter_channels_to_stokes({i0[c], i45[c], i90[c], i135[c]});
}

FilterChannels stokes_to_filter_channels(const Stokes& s) {
    return {0.5 * (s[0] + s[1]), 0.5 * (s[0] + s[2]), 0.5 * (s[0] - s[1]), 0.5 * (s[0] - s[2])};
}

Stokes filter_channels_to_stokes(const FilterChannels& c) {
    return {c.i0 + c.i90, c.i0 - c.i90, c.i45 - c.i135, 0.0};
}

bool is_visible(const Vec3& normal, const Vec3& omega_i, const Vec3& omega_o) {
    const double min_cos = std::cos(deg_to_rad(kMaxVisibleZenithDeg));
    return normal.dot(omega_i) > min_cos && normal.dot(omega_o) > min_cos;
}

StokesRgb shade_with(const MuellerRgb& p, double shading) {
    const Stokes s_in(1.0, 1.0, 0.0, 0.0);
    StokesRgb out;
    for (int c = 0; c < 3; ++c) out[c] = shading * (p[c] * s_in);
    return out;
}

std::optional<StokesRgb> shade_vertex(const Vertex& vertex, const ViewPose& view,
                                      const LightConfig& light, PbrdfModel model) {
    const ViewGeometry g = view_geometry(vertex.position, view, light);
    if (!is_visible(vertex.normal, g.omega_i, g.omega_o)) return std::nullopt;
    const auto angles = interaction_angles(vertex.normal, g.omega_i, g.omega_o, g.frames);
    if (!angles) return std::nullopt;
    const MuellerRgb p = model == PbrdfModel::full ? pbrdf_eval(*angles, vertex.params)
                                                   : coaxial_pbrdf(*angles, vertex.params);
    const double shading = angles->cos_i / (g.light_distance * g.light_distance);
    return shade_with(p, shading);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed);
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return h;
}

namespace {

constexpr double kSaturation = 0.98;

// Four filter channels for the three colors, flattened as [filter][color].
using ChannelBlock = std::array<double, 12>;

ChannelBlock to_block(const StokesRgb& s) {
    ChannelBlock b{};
    for (int c = 0; c < 3; ++c) {
        const FilterChannels f = stokes_to_filter_channels(s[c]);
        b[0 * 3 + c] = f.i0;
        b[1 * 3 + c] = f.i45;
        b[2 * 3 + c] = f.i90;
        b[3 * 3 + c] = f.i135;
    }
    return b;
}

// Exposes the block at every flash level, adds sensor noise, and merges the
// brackets with inverse-variance weights (variance of value/level ∝ 1/level).
ChannelBlock capture_hdr(const ChannelBlock& radiance, const RenderConfig& cfg, double exposure,
                         int vertex, int view) {
    const NoiseSpec& noise = cfg.noise;
    ChannelBlock merged{};
    ChannelBlock weight{};
    ChannelBlock fallback{};
    ChannelBlock fallback_level{};
    fallback_level.fill(0.0);
    for (std::size_t f = 0; f < cfg.flash_levels.size(); ++f) {
        const double level = cfg.flash_levels[f];
        std::mt19937_64 rng(mix_seed(noise.seed, static_cast<std::uint64_t>(vertex),
                                     static_cast<std::uint64_t>(view), f));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t k = 0; k < radiance.size(); ++k) {
            const double clean = std::max(0.0, exposure * level * radiance[k]);
            double v = clean + noise.shot * std::sqrt(clean) * gauss(rng);
            v = std::clamp(v, 0.0, 1.0);
            if (noise.quantize_12bit) v = std::round(v * 4095.0) / 4095.0;
            const double estimate = v / (exposure * level);
            if (v < kSaturation) {
                merged[k] += level * estimate;
                weight[k] += level;
            } else if (fallback_level[k] == 0.0 || level < fallback_level[k]) {
                fallback[k] = estimate;
                fallback_level[k] = level;
            }
        }
    }
    for (std::size_t k = 0; k < merged.size(); ++k)
        merged[k] = weight[k] > 0.0 ? merged[k] / weight[k] : fallback[k];
    return merged;
}

// Projects independently noisy filter channels onto the nearest physically
// consistent linear Stokes state so i0+i90 = i45+i135 and all channels ≥ 0.
void store_consistent(const ChannelBlock& b, VertexObservation& o) {
    for (int c = 0; c < 3; ++c) {
        const double i0 = b[c], i45 = b[3 + c], i90 = b[6 + c], i135 = b[9 + c];
        const double s0 = std::max(0.0, 0.5 * (i0 + i90 + i45 + i135));
        const double s1 = std::clamp(i0 - i90, -s0, s0);
        const double s2 = std::clamp(i45 - i135, -s0, s0);
        const FilterChannels f = stokes_to_filter_channels(Stokes(s0, s1, s2, 0.0));
        o.i0[c] = f.i0;
        o.i45[c] = f.i45;
        o.i90[c] = f.i90;
        o.i135[c] = f.i135;
    }
}

}  // namespace

ObservationSet render_views(const Scene& scene, const RenderConfig& cfg) {
    if (cfg.flash_levels.empty()) throw std::invalid_argument("render_views: no flash levels");
    for (double l : cfg.flash_levels)
        if (!(l > 0.0 && l <= 1.0)) throw std::invalid_argument("render_views: flash level out of (0, 1]");

    ObservationSet set;
    set.n_vertices = static_cast<int>(scene.vertices.size());
    set.n_views = static_cast<int>(scene.views.size());
    set.obs.resize(static_cast<std::size_t>(set.n_vertices) * set.n_views);

    std::vector<ChannelBlock> clean(set.obs.size());
    std::vector<double> values;
    for (int v = 0; v < set.n_views; ++v) {
        const ViewPose& view = scene.views[v];
        for (int i = 0; i < set.n_vertices; ++i) {
            const Vertex& vert = scene.vertices[i];
            VertexObservation& o = set.at(v, i);
            const ViewGeometry g = view_geometry(vert.position, view, scene.light);
            o.view_id = v;
            o.omega_i = g.omega_i;
            o.omega_o = g.omega_o;
            o.distance = g.light_distance;
            const auto stokes = shade_vertex(vert, view, scene.light, cfg.model);
            if (!stokes) continue;
            o.visible = true;
            ChannelBlock& b = clean[static_cast<std::size_t>(v) * set.n_vertices + i];
            b = to_block(*stokes);
            if (cfg.noise.enabled && !(cfg.noise.exposure > 0.0))
                values.insert(values.end(), b.begin(), b.end());
        }
    }

    double exposure = cfg.noise.exposure;
    if (cfg.noise.enabled && !(exposure > 0.0)) exposure = auto_exposure(values, cfg.flash_levels);
    set.exposure = cfg.noise.enabled ? exposure : 0.0;

    for (std::size_t k = 0; k < set.obs.size(); ++k) {
        VertexObservation& o = set.obs[k];
        if (!o.visible) continue;
        if (!cfg.noise.enabled) {
            for (int c = 0; c < 3; ++c) {
                o.i0[c] = clean[k][c];
                o.i45[c] = clean[k][3 + c];
                o.i90[c] = clean[k][6 + c];
                o.i135[c] = clean[k][9 + c];
            }
        } else {
            const int v = static_cast<int>(k / set.n_vertices);
            const int i = static_cast<int>(k % set.n_vertices);
            store_consistent(capture_hdr(clean[k], cfg, exposure, i, v), o);
        }
    }
    return set;
}

double auto_exposure(std::vector<double> filter_values, const std::vector<double>& flash_levels) {
    if (filter_values.empty() || flash_levels.empty()) return 1.0;
    const std::size_t idx = static_cast<std::size_t>(std::floor(0.99 * (filter_values.size() - 1)));
    std::nth_element(filter_values.begin(), filter_values.begin() + idx, filter_values.end());
    const double p99 = filter_values[idx];
    const double top = *std::max_element(flash_levels.begin(), flash_levels.end());
    return p99 > 0.0 ? kAutoExposureTarget / (top * p99) : 1.0;
}

}  // namespace polinv
