#pragma once

// Iterative multiview inverse rendering: per-vertex fits, material clustering,
// cluster regression, virtual specular observations and a geometry hook.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "polinv/cluster.h"
#include "polinv/fit.h"
#include "polinv/render.h"
#include "polinv/scene.h"

namespace polinv {

/// Everything the inversion consumes: poses, the flash rig, vertex positions,
/// initial normals and per-(view, vertex) observations; truth is optional.
struct Capture {
    std::vector<ViewPose> views;
    LightConfig light;
    std::vector<Vec3> positions;
    std::vector<Vec3> initial_normals;
    ObservationSet observations;
    std::optional<std::vector<Vertex>> truth;
};

Capture make_capture(const Scene& scene, const ObservationSet& observations,
                     const std::vector<Vec3>& initial_normals);

/// Rotates every normal by an angle drawn from N(0, sigma) about a random
/// tangent axis (deterministic in `seed`).
std::vector<Vec3> perturb_normals(const std::vector<Vec3>& normals, double sigma_deg,
                                  std::uint64_t seed);

using GeometryHook = std::function<void(std::vector<Vec3>& normals, const Capture& capture)>;

/// Default hook: positions stay frozen; normals are re-normalized and kept.
void renormalize_normals(std::vector<Vec3>& normals, const Capture& capture);

struct PipelineConfig {
    LossWeights weights;
    int iterations = 10;
    int clusters = 8;
    /// Clusters smaller than this fraction of the fitted vertices (and at
    /// least 5 members) are merged into their nearest neighbor cluster.
    double min_cluster_fraction = 0.02;
    int virtuals = 180;
    std::uint64_t seed = 1;
    bool fix_sigma_ss = false;
    bool final_pass = true;
    /// Per-vertex fits first solve (η, normal) without the specular terms,
    /// then the remaining variables with the normal fixed.
    bool polarization_normals = true;
    int workers = 1;
    FitBounds bounds;
    OptimizerOptions optimizer;
    PbrdfParams init;  // η, σ_s, σ_ss, ρ_s used; ρ_d fitted, ρ_ss = 0.05·ρ_d
    GeometryHook geometry_hook = renormalize_normals;
};

struct IterationLog {
    int iteration = 0;
    double total = 0.0;
    double psi = 0.0;
    double diffuse = 0.0;
    double specular = 0.0;
    double azimuth = 0.0;
    int clusters = 0;
    int failed_vertices = 0;
    double seconds = 0.0;
};

struct PipelineResult {
    std::vector<VertexEstimate> estimates;
    std::vector<ClusterModel> clusters;
    std::vector<int> cluster_of;
    std::vector<IterationLog> log;
    double intensity_scale = 1.0;
    double seconds = 0.0;
    int hard_failures = 0;
};

PipelineResult run_pipeline(const Capture& capture, const PipelineConfig& config);

/// Samples of one vertex (visible observations in canonical order) with
/// observables computed against `predict_from` (or zero predictions).
std::vector<FitSample> vertex_samples(const Capture& capture, int vertex,
                                      const ReliabilityThresholds& thresholds,
                                      const VertexEstimate* predict_from);

/// Largest channel-mean i_d and its 99th percentile over visible observations.
struct IntensityStats {
    double max_mean_i_d = 0.0;
    double p99_mean_i_d = 1.0;
};
IntensityStats intensity_stats(const ObservationSet& observations);

struct TruthReport {
    std::vector<double> eta_rel_error;
    std::vector<double> normal_error_deg;
    std::vector<bool> azimuth_flip;
    double mean_eta_rel_error = 0.0;
    double median_normal_error_deg = 0.0;
    double flip_rate = 0.0;
    double mean_sigma_s_rel_error = 0.0;
    double mean_sigma_ss = 0.0;
    Rgb mean_rho_d_rel_error = Rgb::Zero();
};

/// Compares estimates with the capture's truth. A vertex counts as flipped
/// when its normal is closer to the truth rotated by π about the mean viewing
/// direction than to the truth itself.
TruthReport compare_to_truth(const Capture& capture, const std::vector<VertexEstimate>& estimates);

}  // namespace polinv
