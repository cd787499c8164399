#pragma once

// File formats: scene documents (JSON), the binary observation bundle, run
// configurations, manifests, portable float maps and CSV tables.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "polinv/pipeline.h"
#include "polinv/render.h"
#include "polinv/scene.h"

namespace polinv {

/// Malformed input file; the message carries the location (JSON pointer,
/// byte offset or line) of the problem.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kSceneSchemaVersion = 1;

// ---- scene documents ------------------------------------------------------
//
// {
//   "schema_version": 1,
//   "materials": [ {params}, ... ],            optional
//   "vertices": [ {"position": [x,y,z], "normal": [x,y,z],
//                  "params": {params} | "material": index}, ... ],
//   "views": [ {"rotation": [[r00,r01,r02],[..],[..]], "translation": [x,y,z],
//               "intrinsics": {"fx","fy","cx","cy","width","height"},
//               "flash_offset": [x,y,z], "pol_angle": rad}, ... ],
//   "generator": {"radius","n_vertices","n_views","view_distance","seed","hemisphere"}
// }
// params = {"eta", "rho_d": [r,g,b], "rho_s", "sigma_s", "rho_ss": [r,g,b], "sigma_ss"}
//
// The flash rig is shared by all views, so every view must carry the same
// flash offset and polarizer angle.

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& doc);
Scene read_scene(const std::filesystem::path& path);
void write_scene(const std::filesystem::path& path, const Scene& scene);

// ---- run configuration ----------------------------------------------------

struct RunConfig {
    LossWeights weights;
    int iterations = 10;
    int clusters = 8;
    int virtuals = 180;
    NoiseSpec noise;
    std::uint64_t seed = 1;
    std::vector<double> flash_levels{0.25, 0.125, 0.0625};
    PbrdfModel model = PbrdfModel::full;
    bool fix_sigma_ss = false;
    int workers = 1;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig read_run_config(const std::filesystem::path& path);

RenderConfig render_config(const RunConfig& cfg);
PipelineConfig pipeline_config(const RunConfig& cfg);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
/// fnv1a of the canonical (sorted-key) JSON of the configuration.
std::uint64_t config_hash(const RunConfig& cfg);
std::string hex64(std::uint64_t v);

// ---- observation bundle ---------------------------------------------------
//
// Little-endian binary, all reals IEEE-754 binary64:
//   char[4]  magic "PLOB"
//   u32      version (kBundleVersion)
//   u32      n_vertices, u32 n_views
//   f64      exposure (0 for noise-free captures)
//   f64[3]   flash offset, f64 polarizer angle
//   views:    f64[9] rotation (row-major), f64[3] translation,
//             f64 fx, fy, cx, cy, i32 width, i32 height
//   vertices: f64[3] position, f64[3] initial normal
//   u8       has_truth; if 1, per vertex: f64[3] normal,
//             f64 eta, f64[3] rho_d, f64 rho_s, f64 sigma_s, f64[3] rho_ss, f64 sigma_ss
//   observations, view-major (n_views × n_vertices):
//             u8 visible, f64[3] omega_i, f64[3] omega_o, f64 distance,
//             f64[3] i0, f64[3] i45, f64[3] i90, f64[3] i135

inline constexpr std::uint32_t kBundleVersion = 1;

std::vector<std::uint8_t> encode_bundle(const Capture& capture);
Capture decode_bundle(const std::vector<std::uint8_t>& bytes);
void write_bundle(const std::filesystem::path& path, const Capture& capture);
Capture read_bundle(const std::filesystem::path& path);

// ---- float images -----------------------------------------------------------

/// Row-major, top row first, interleaved channels (1 or 3).
struct FloatImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;

    FloatImage() = default;
    FloatImage(int w, int h, int c) : width(w), height(h), channels(c), data(std::size_t(w) * h * c, 0.0f) {}
    float& at(int x, int y, int c = 0) { return data[(std::size_t(y) * width + x) * channels + c]; }
    float at(int x, int y, int c = 0) const { return data[(std::size_t(y) * width + x) * channels + c]; }
};

/// Portable float map: 32-bit little-endian, bottom-up scanlines.
void write_pfm(const std::filesystem::path& path, const FloatImage& img);
FloatImage read_pfm(const std::filesystem::path& path);

// ---- tables and manifests ----------------------------------------------------

void write_params_csv(const std::filesystem::path& path, const PipelineResult& result);
/// Reads the estimates back from a parameter table (cluster ids are dropped).
std::vector<VertexEstimate> read_params_csv(const std::filesystem::path& path);
void write_log_csv(const std::filesystem::path& path, const std::vector<IterationLog>& log);
void write_truth_csv(const std::filesystem::path& path, const TruthReport& report);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// Fails with std::runtime_error when the directory cannot be created or
/// written.
void ensure_writable_dir(const std::filesystem::path& dir);

}  // namespace polinv
