#include "polinv/visualize.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace polinv {

double median_vertex_spacing(const std::vector<Vec3>& positions) {
    const std::size_t n = positions.size();
    if (n < 2) return 0.0;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = (positions[i] - positions[j]).squaredNorm();
            nearest[i] = std::min(nearest[i], d);
            nearest[j] = std::min(nearest[j], d);
        }
    auto mid = nearest.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(nearest.begin(), mid, nearest.end());
    return std::sqrt(*mid);
}

Raster splat_view(const Capture& capture, int view, int channels, const VertexValueFn& value) {
    const ViewPose& pose = capture.views.at(static_cast<std::size_t>(view));
    const Intrinsics& k = pose.intrinsics;
    Raster r{FloatImage(k.width, k.height, channels), std::vector<std::uint8_t>(std::size_t(k.width) * k.height, 0)};
    std::vector<double> depth(std::size_t(k.width) * k.height, std::numeric_limits<double>::infinity());
    // Discs slightly wider than half the spacing close the gaps between
    // neighboring vertices.
    const double world_radius = 0.7 * median_vertex_spacing(capture.positions);
    std::vector<float> vals(static_cast<std::size_t>(channels));

    for (int i = 0; i < capture.observations.n_vertices; ++i) {
        if (!capture.observations.at(view, i).visible) continue;
        const Vec3 pc = pose.rotation.transpose() * (capture.positions[i] - pose.translation);
        const double z = -pc.z();
        if (!(z > 0.0)) continue;
        if (!value(i, vals.data())) continue;
        const double u = k.cx + k.fx * pc.x() / z;
        const double v = k.cy - k.fy * pc.y() / z;
        const double rad = std::max(0.75, world_radius * k.fx / z);
        const int x0 = std::max(0, static_cast<int>(std::floor(u - rad)));
        const int x1 = std::min(k.width - 1, static_cast<int>(std::ceil(u + rad)));
        const int y0 = std::max(0, static_cast<int>(std::floor(v - rad)));
        const int y1 = std::min(k.height - 1, static_cast<int>(std::ceil(v + rad)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x + 0.5 - u, dy = y + 0.5 - v;
                if (dx * dx + dy * dy > rad * rad) continue;
                const std::size_t p = std::size_t(y) * k.width + x;
                if (z >= depth[p]) continue;
                depth[p] = z;
                r.covered[p] = 1;
                for (int c = 0; c < channels; ++c) r.image.at(x, y, c) = vals[c];
            }
    }
    return r;
}

Rgb heat_color(double t) {
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
    return Rgb(std::clamp(3.0 * t, 0.0, 1.0), std::clamp(3.0 * t - 1.0, 0.0, 1.0), std::clamp(3.0 * t - 2.0, 0.0, 1.0));
}

Rgb aolp_color(double angle) {
    const double h = 6.0 * wrap_angle(angle, kPi) / kPi;  // hue sector in [0, 6)
    const int sector = std::min(5, static_cast<int>(h));
    const double f = h - sector;
    switch (sector) {
        case 0: return Rgb(1.0, f, 0.0);
        case 1: return Rgb(1.0 - f, 1.0, 0.0);
        case 2: return Rgb(0.0, 1.0, f);
        case 3: return Rgb(0.0, 1.0 - f, 1.0);
        case 4: return Rgb(f, 0.0, 1.0);
        default: return Rgb(1.0, 0.0, 1.0 - f);
    }
}

FloatImage heat_map(const Raster& scalar, double lo, double hi) {
    const FloatImage& s = scalar.image;
    FloatImage out(s.width, s.height, 3);
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            if (!scalar.covered[std::size_t(y) * s.width + x]) continue;
            const Rgb c = heat_color((s.at(x, y) - lo) / span);
            for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = static_cast<float>(c[ch]);
        }
    return out;
}

std::array<FloatImage, 4> filter_rasters(const Capture& capture, int view) {
    std::array<FloatImage, 4> out;
    for (int f = 0; f < 4; ++f) {
        out[f] = splat_view(capture, view, 3, [&](int i, float* v) {
                     const VertexObservation& o = capture.observations.at(view, i);
                     const Rgb& c = f == 0 ? o.i0 : f == 1 ? o.i45 : f == 2 ? o.i90 : o.i135;
                     for (int ch = 0; ch < 3; ++ch) v[ch] = static_cast<float>(c[ch]);
                     return true;
                 }).image;
    }
    return out;
}

std::array<FloatImage, 4> stokes_rasters(const Capture& capture, int view) {
    std::array<FloatImage, 4> out;
    for (int comp = 0; comp < 4; ++comp) {
        out[comp] = splat_view(capture, view, 3, [&](int i, float* v) {
                        const VertexObservation& o = capture.observations.at(view, i);
                        for (int ch = 0; ch < 3; ++ch) v[ch] = static_cast<float>(o.stokes(ch)[comp]);
                        return true;
                    }).image;
    }
    return out;
}

namespace {

Stokes mean_stokes(const VertexObservation& o) {
    return (o.stokes(0) + o.stokes(1) + o.stokes(2)) / 3.0;
}

}  // namespace

Raster dop_raster(const Capture& capture, int view) {
    return splat_view(capture, view, 1, [&](int i, float* v) {
        const Stokes s = mean_stokes(capture.observations.at(view, i));
        v[0] = s[0] > 0.0 ? static_cast<float>(std::min(1.0, stokes_to_dop_aolp(s).dop)) : 0.0f;
        return true;
    });
}

Raster aolp_raster(const Capture& capture, int view) {
    return splat_view(capture, view, 1, [&](int i, float* v) {
        const Stokes s = mean_stokes(capture.observations.at(view, i));
        v[0] = s[0] > 0.0 ? static_cast<float>(stokes_to_dop_aolp(s).aolp) : 0.0f;
        return true;
    });
}

FloatImage aolp_hue_map(const Raster& aolp) {
    const FloatImage& a = aolp.image;
    FloatImage out(a.width, a.height, 3);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!aolp.covered[std::size_t(y) * a.width + x]) continue;
            const Rgb c = aolp_color(a.at(x, y));
            for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = static_cast<float>(c[ch]);
        }
    return out;
}

double mueller_display_scale(int row, int col) {
    if (row != col) return 10.0;
    return row == 1 || row == 2 ? 4.0 : 1.0;
}

FloatImage mueller_grid(const Capture& capture, int view, const std::vector<Vertex>& model,
                        PbrdfModel pbrdf_model) {
    const ViewPose& pose = capture.views.at(static_cast<std::size_t>(view));
    const Vec3 pol = light_pol_axis(pose, capture.light);
    // 16 elements × 3 colors per vertex, flattened as [row][col][color].
    const Raster r = splat_view(capture, view, 48, [&](int i, float* v) {
        const VertexObservation& o = capture.observations.at(view, i);
        const FramePair frames = build_frames(o.omega_i, o.omega_o, pose.up(), pol);
        const auto a = interaction_angles(model[i].normal, o.omega_i, o.omega_o, frames);
        if (!a) return false;
        const MuellerRgb p = pbrdf_model == PbrdfModel::full ? pbrdf_eval(*a, model[i].params)
                                                             : coaxial_pbrdf(*a, model[i].params);
        const double shading = a->cos_i / (o.distance * o.distance);
        for (int row = 0; row < 4; ++row)
            for (int col = 0; col < 4; ++col)
                for (int c = 0; c < 3; ++c)
                    v[(row * 4 + col) * 3 + c] =
                        static_cast<float>(shading * mueller_display_scale(row, col) * p[c](row, col));
        return true;
    });
    const int w = r.image.width, h = r.image.height;
    FloatImage grid(4 * w, 4 * h, 3);
    for (int row = 0; row < 4; ++row)
        for (int col = 0; col < 4; ++col)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c)
                        grid.at(col * w + x, row * h + y, c) = r.image.at(x, y, (row * 4 + col) * 3 + c);
    return grid;
}

std::string mueller_legend() {
    std::ostringstream os;
    os << "Mueller grid: 4x4 panels, panel (r, c) shows element m[r][c] of the shaded\n"
          "Mueller matrix S*P per vertex (RGB, signed values kept).\n"
          "Display scaling per element:\n";
    for (int r = 0; r < 4; ++r) {
        os << " ";
        for (int c = 0; c < 4; ++c) os << " x" << mueller_display_scale(r, c);
        os << "\n";
    }
    os << "Off-diagonal elements x10, m11 and m22 x4, m00 and m33 x1.\n";
    return os.str();
}

ParameterMaps parameter_maps(const Capture& capture, int view, const std::vector<VertexEstimate>& estimates) {
    auto skip = [&](int i) { return (estimates[i].flags & kFlagNoObservations) != 0; };
    auto scalar = [&](double PbrdfParams::*field) {
        return splat_view(capture, view, 1, [&, field](int i, float* v) {
            if (skip(i)) return false;
            v[0] = static_cast<float>(estimates[i].params.*field);
            return true;
        });
    };
    auto color = [&](Rgb PbrdfParams::*field) {
        return splat_view(capture, view, 3, [&, field](int i, float* v) {
            if (skip(i)) return false;
            const Rgb& c = estimates[i].params.*field;
            for (int ch = 0; ch < 3; ++ch) v[ch] = static_cast<float>(c[ch]);
            return true;
        });
    };
    ParameterMaps out;
    out.maps.emplace_back("eta", scalar(&PbrdfParams::eta));
    out.maps.emplace_back("rho_d", color(&PbrdfParams::rho_d));
    out.maps.emplace_back("rho_s", scalar(&PbrdfParams::rho_s));
    out.maps.emplace_back("sigma_s", scalar(&PbrdfParams::sigma_s));
    out.maps.emplace_back("rho_ss", color(&PbrdfParams::rho_ss));
    out.maps.emplace_back("sigma_ss", scalar(&PbrdfParams::sigma_ss));
    return out;
}

}  // namespace polinv
