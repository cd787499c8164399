#pragma once

// Material clustering and per-cluster specular regression used to synthesize
// virtual specular observations.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "polinv/fit.h"
#include "polinv/losses.h"

namespace polinv {

struct ClusterModel {
    /// Feature centroid (η, ρ_d RGB) in original units.
    Eigen::Vector4d centroid = Eigen::Vector4d::Zero();
    std::vector<int> members;
    PbrdfParams params;
    double delta_theta_h = 0.0;
    bool roughness_frozen = false;
};

struct KMeansResult {
    std::vector<int> assignment;
    std::vector<Eigen::VectorXd> centroids;
};

/// Lloyd's iterations with k-means++ seeding on features standardized per
/// dimension (zero-variance dimensions are only centered). Empty clusters are
/// re-seeded from the point farthest from its centroid. Deterministic in
/// `seed`. Throws std::invalid_argument if k < 1 or k > number of points.
KMeansResult kmeans(const std::vector<Eigen::VectorXd>& points, int k, std::uint64_t seed,
                    int max_iterations = 100);

/// Clusters vertices on (η, ρ_d RGB). Clusters with fewer than `min_members`
/// vertices are dissolved into the nearest remaining centroid (unless none
/// would remain). Only non-empty clusters are returned; members are sorted
/// ascending.
std::vector<ClusterModel> cluster_vertices(const std::vector<VertexEstimate>& estimates, int k,
                                           std::uint64_t seed, int min_members = 1);

struct RegressionOptions {
    LossWeights weights;
    FitBounds bounds;
    OptimizerOptions optimizer;
    /// Below this many samples with θ_h under `bright_theta_h` the roughness
    /// is frozen.
    int min_bright_samples = 3;
    double bright_theta_h = deg_to_rad(20.0);
    bool fix_sigma_ss = false;
};

/// Pools member samples (each with its own fixed normal) as one vertex and
/// fits (η, σ_s, σ_ss, ρ_s, ρ_ss, Δθ_h) to the DoP and real specular losses
/// plus the Δθ_h² regularizer. `init` seeds the nonlinear variables.
void regress_cluster(ClusterModel& cluster, std::vector<FitSample> pooled, const PbrdfParams& init,
                     const RegressionOptions& options, double intensity_scale = 1.0);

}  // namespace polinv
