#include "polinv/cluster.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace polinv {

KMeansResult kmeans(const std::vector<Eigen::VectorXd>& points, int k, std::uint64_t seed,
                    int max_iterations) {
    const int n = static_cast<int>(points.size());
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (k > n) throw std::invalid_argument("kmeans: k exceeds the number of points");
    const int dim = static_cast<int>(points[0].size());

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (const auto& p : points) mean += p;
    mean /= n;
    Eigen::VectorXd sd = Eigen::VectorXd::Zero(dim);
    for (const auto& p : points) sd += (p - mean).cwiseAbs2();
    sd = (sd / n).cwiseSqrt();
    for (int d = 0; d < dim; ++d)
        if (!(sd[d] > 1e-12)) sd[d] = 1.0;
    std::vector<Eigen::VectorXd> z(n);
    for (int i = 0; i < n; ++i) z[i] = (points[i] - mean).cwiseQuotient(sd);

    std::mt19937_64 rng(seed);
    std::vector<Eigen::VectorXd> centers;
    centers.push_back(z[std::uniform_int_distribution<int>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, (z[i] - c).squaredNorm());
            d2[i] = best;
            total += best;
        }
        if (!(total > 0.0)) break;  // every point coincides with a center
        double pick = std::uniform_real_distribution<double>(0.0, total)(rng);
        int chosen = n - 1;
        for (int i = 0; i < n; ++i) {
            pick -= d2[i];
            if (pick < 0.0) {
                chosen = i;
                break;
            }
        }
        centers.push_back(z[chosen]);
    }

    const int kc = static_cast<int>(centers.size());
    std::vector<int> assign(n, -1);
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best_c = 0;
            double best = std::numeric_limits<double>::infinity();
            for (int c = 0; c < kc; ++c) {
                const double d = (z[i] - centers[c]).squaredNorm();
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            if (assign[i] != best_c) {
                assign[i] = best_c;
                changed = true;
            }
        }
        std::vector<Eigen::VectorXd> sums(kc, Eigen::VectorXd::Zero(dim));
        std::vector<int> counts(kc, 0);
        for (int i = 0; i < n; ++i) {
            sums[assign[i]] += z[i];
            ++counts[assign[i]];
        }
        for (int c = 0; c < kc; ++c) {
            if (counts[c] > 0) {
                centers[c] = sums[c] / counts[c];
                continue;
            }
            // Re-seed an empty cluster at the point farthest from its center.
            int far = -1;
            double far_d = 0.0;
            for (int i = 0; i < n; ++i) {
                const double d = (z[i] - centers[assign[i]]).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far >= 0) {
                centers[c] = z[far];
                assign[far] = c;
                changed = true;
            }
        }
        if (!changed) break;
    }

    KMeansResult out;
    out.assignment = assign;
    out.centroids.resize(kc);
    for (int c = 0; c < kc; ++c) out.centroids[c] = centers[c].cwiseProduct(sd) + mean;
    return out;
}

std::vector<ClusterModel> cluster_vertices(const std::vector<VertexEstimate>& estimates, int k,
                                           std::uint64_t seed, int min_members) {
    std::vector<Eigen::VectorXd> feats;
    feats.reserve(estimates.size());
    for (const auto& e : estimates) {
        Eigen::VectorXd f(4);
        f << e.params.eta, e.params.rho_d[0], e.params.rho_d[1], e.params.rho_d[2];
        feats.push_back(f);
    }
    const KMeansResult km = kmeans(feats, k, seed);
    std::vector<ClusterModel> all(km.centroids.size());
    for (std::size_t c = 0; c < all.size(); ++c) all[c].centroid = km.centroids[c];
    for (std::size_t i = 0; i < estimates.size(); ++i)
        all[km.assignment[i]].members.push_back(static_cast<int>(i));

    // Members of undersized clusters move to the nearest surviving centroid
    // (standardized distance), so every regression has pooled support.
    const int n = static_cast<int>(feats.size());
    std::vector<bool> keep(all.size());
    bool any_kept = false;
    for (std::size_t c = 0; c < all.size(); ++c) {
        keep[c] = static_cast<int>(all[c].members.size()) >= min_members;
        any_kept = any_kept || keep[c];
    }
    if (any_kept) {
        Eigen::Vector4d mean = Eigen::Vector4d::Zero(), sd = Eigen::Vector4d::Zero();
        for (const auto& f : feats) mean += f;
        mean /= n;
        for (const auto& f : feats) sd += (f - mean).cwiseAbs2();
        sd = (sd / n).cwiseSqrt();
        for (int d = 0; d < 4; ++d)
            if (!(sd[d] > 1e-12)) sd[d] = 1.0;
        for (std::size_t c = 0; c < all.size(); ++c) {
            if (keep[c]) continue;
            for (int i : all[c].members) {
                std::size_t best_c = 0;
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t t = 0; t < all.size(); ++t) {
                    if (!keep[t]) continue;
                    const double d = (feats[i] - all[t].centroid).cwiseQuotient(sd).squaredNorm();
                    if (d < best) {
                        best = d;
                        best_c = t;
                    }
                }
                all[best_c].members.push_back(i);
            }
            all[c].members.clear();
        }
    }

    std::vector<ClusterModel> out;
    for (auto& c : all) {
        if (c.members.empty()) continue;
        std::sort(c.members.begin(), c.members.end());
        // Centroid from the final membership, in original feature units.
        Eigen::Vector4d m = Eigen::Vector4d::Zero();
        for (int i : c.members) m += feats[i];
        c.centroid = m / static_cast<double>(c.members.size());
        out.push_back(std::move(c));
    }
    return out;
}

void regress_cluster(ClusterModel& cluster, std::vector<FitSample> pooled, const PbrdfParams& init,
                     const RegressionOptions& options, double intensity_scale) {
    cluster.params = init;
    cluster.delta_theta_h = 0.0;
    cluster.roughness_frozen = false;
    if (pooled.empty()) {
        cluster.roughness_frozen = true;
        return;
    }

    FitProblem pb;
    pb.samples = std::move(pooled);
    assign_view_weights(pb.samples);
    pb.weights = options.weights;
    pb.terms = {true, false, true, false, false, true};
    pb.per_sample_normals = true;
    pb.eta_prev = init.eta;
    pb.intensity_scale = intensity_scale;

    int bright = 0;
    for (const auto& s : pb.samples) {
        const Vec3 h = (s.omega_i + s.omega_o).normalized();
        if (std::acos(std::clamp(s.normal.dot(h), -1.0, 1.0)) < options.bright_theta_h) ++bright;
    }

    FreeMask mask;
    mask.normal = false;
    mask.delta_theta_h = true;
    mask.sigma_ss = !options.fix_sigma_ss;
    if (bright < options.min_bright_samples) {
        cluster.roughness_frozen = true;
        mask.sigma_s = false;
        mask.sigma_ss = false;
        mask.delta_theta_h = false;
    }
    const FitVariables fitted = fit_variables(pb, FitVariables::from(init, Vec3::UnitZ()), mask,
                                              options.bounds, options.optimizer);
    cluster.params = fitted.params();
    // The regression has no diffuse term; keep the member-averaged ρ_d.
    cluster.params.rho_d = init.rho_d;
    cluster.delta_theta_h = fitted.x[kDeltaThetaH];
}

}  // namespace polinv
