#include "polinv/pipeline.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <thread>
#include <tuple>

namespace polinv {

namespace {

template <class F>
void parallel_for(int n, int workers, F&& f) {
    if (workers <= 1 || n < 2) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int w = std::min(workers, n);
    pool.reserve(w);
    for (int t = 0; t < w; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) f(i);
        });
    for (auto& th : pool) th.join();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
    return m;
}

}  // namespace

Capture make_capture(const Scene& scene, const ObservationSet& observations,
                     const std::vector<Vec3>& initial_normals) {
    Capture c;
    c.views = scene.views;
    c.light = scene.light;
    c.positions.reserve(scene.vertices.size());
    for (const auto& v : scene.vertices) c.positions.push_back(v.position);
    c.initial_normals = initial_normals;
    c.observations = observations;
    c.truth = scene.vertices;
    return c;
}

std::vector<Vec3> perturb_normals(const std::vector<Vec3>& normals, double sigma_deg,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, deg_to_rad(sigma_deg));
    std::uniform_real_distribution<double> uni(0.0, 2.0 * kPi);
    std::vector<Vec3> out;
    out.reserve(normals.size());
    for (const Vec3& n : normals) {
        const double angle = gauss(rng);
        const double dir = uni(rng);
        const auto [t1, t2] = tangent_basis(n);
        const Vec3 axis = std::cos(dir) * t1 + std::sin(dir) * t2;
        out.push_back((Eigen::AngleAxisd(angle, axis) * n).normalized());
    }
    return out;
}

void renormalize_normals(std::vector<Vec3>& normals, const Capture&) {
    for (auto& n : normals) n.normalize();
}

IntensityStats intensity_stats(const ObservationSet& observations) {
    std::vector<double> vals;
    for (const auto& o : observations.obs)
        if (o.visible) vals.push_back(2.0 * o.i90.mean());
    IntensityStats st;
    if (vals.empty()) return st;
    std::sort(vals.begin(), vals.end());
    st.max_mean_i_d = vals.back();
    const std::size_t idx = static_cast<std::size_t>(std::floor(0.99 * (vals.size() - 1)));
    st.p99_mean_i_d = vals[idx] > 0.0 ? vals[idx] : (st.max_mean_i_d > 0.0 ? st.max_mean_i_d : 1.0);
    return st;
}

std::vector<FitSample> vertex_samples(const Capture& capture, int vertex,
                                      const ReliabilityThresholds& thresholds,
                                      const VertexEstimate* predict_from) {
    const ObservationSet& set = capture.observations;
    std::vector<const VertexObservation*> visible;
    for (int v = 0; v < set.n_views; ++v) {
        const VertexObservation& o = set.at(v, vertex);
        if (o.visible) visible.push_back(&o);
    }
    // Canonical order so results do not depend on the order of the views.
    auto key = [](const VertexObservation* o) {
        return std::make_tuple(o->omega_o.x(), o->omega_o.y(), o->omega_o.z(), o->omega_i.x(),
                               o->omega_i.y(), o->omega_i.z());
    };
    std::sort(visible.begin(), visible.end(),
              [&](const auto* a, const auto* b) { return key(a) < key(b); });

    std::vector<FitSample> samples;
    samples.reserve(visible.size());
    for (const VertexObservation* o : visible) {
        const ViewPose& view = capture.views[o->view_id];
        const FramePair frames =
            build_frames(o->omega_i, o->omega_o, view.up(), light_pol_axis(view, capture.light));
        FitSample s;
        s.omega_i = o->omega_i;
        s.omega_o = o->omega_o;
        s.distance = o->distance;
        s.exit_x = frames.exitant.x_axis;
        s.exit_y = frames.exitant.y_axis;
        s.in_x = frames.incident.x_axis;
        s.in_y = frames.incident.y_axis;
        s.normal = predict_from ? predict_from->normal : capture.initial_normals[vertex];
        SpecularPrediction pred;
        if (predict_from) pred = predict_specular(s, predict_from->params, predict_from->normal);
        s.obs = make_observables(*o, pred.specular, pred.single_scattering, thresholds);
        samples.push_back(s);
    }
    assign_view_weights(samples);
    return samples;
}

PipelineResult run_pipeline(const Capture& capture, const PipelineConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    const int n = static_cast<int>(capture.positions.size());
    PipelineResult result;
    const IntensityStats stats = intensity_stats(capture.observations);
    const ReliabilityThresholds thr = default_thresholds(stats.max_mean_i_d);
    result.intensity_scale = stats.p99_mean_i_d;
    const double scale = result.intensity_scale;

    std::vector<double> kss_cache;
    if (cfg.fix_sigma_ss) {
        const auto probe = generate_virtuals(cfg.init, cfg.virtuals);
        for (const auto& v : probe) kss_cache.push_back(retro_lobe(v.theta_h, 1.0));
    }

    auto make_problem = [&](std::vector<FitSample> samples, const VertexEstimate& est,
                            const std::vector<VirtualObservation>& virtuals) {
        FitProblem pb;
        pb.samples = std::move(samples);
        pb.virtuals = virtuals;
        pb.weights = cfg.weights;
        pb.eta_prev = est.params.eta;
        pb.intensity_scale = scale;
        if (cfg.fix_sigma_ss && kss_cache.size() == pb.virtuals.size()) {
            pb.virtual_kss_cache = kss_cache;
            pb.cached_sigma_ss = 1.0;
        }
        return pb;
    };

    // Initialization: ρ_d in closed form at the initial η, ρ_ss = 0.05·ρ_d.
    std::vector<VertexEstimate>& est = result.estimates;
    est.resize(n);
    parallel_for(n, cfg.workers, [&](int i) {
        VertexEstimate& e = est[i];
        e.params = cfg.init;
        if (cfg.fix_sigma_ss) e.params.sigma_ss = 1.0;
        e.normal = capture.initial_normals[i].normalized();
        FitProblem pb = make_problem(vertex_samples(capture, i, thr, nullptr), e, {});
        if (pb.samples.empty()) {
            e.flags |= kFlagNoObservations;
            return;
        }
        pb.terms = {false, true, false, false, false, false};
        const AlbedoSolution a = solve_albedos(pb, FitVariables::from(e.params, e.normal));
        e.params.rho_d = a.rho_d;
        e.params.rho_ss = 0.05 * a.rho_d;
    });

    FreeMask mask;
    mask.sigma_ss = !cfg.fix_sigma_ss;
    std::vector<std::vector<VirtualObservation>> vertex_virtuals(n);
    std::vector<std::vector<FitSample>> samples(n);
    result.cluster_of.assign(n, -1);

    constexpr std::uint32_t kTransientFlags = kFlagEtaUnconstrained | kFlagAzimuthUnconstrained |
                                              kFlagSpecularFrozen | kFlagOptimizerFailed;
    // Fits one start whose observables use predictions from `start` itself.
    // Returns the estimate, its samples and the self-consistent total: the
    // loss re-evaluated with predictions from the fitted parameters.
    struct Candidate {
        VertexEstimate est;
        std::vector<FitSample> samples;
        double consistent_total = std::numeric_limits<double>::infinity();
    };
    auto fit_from = [&](int i, VertexEstimate start, const FreeMask& m, bool predict) {
        start.flags &= ~kTransientFlags;
        Candidate c;
        c.samples = vertex_samples(capture, i, thr, predict ? &start : nullptr);
        FitProblem pb = make_problem(c.samples, start, vertex_virtuals[i]);
        if (m.normal && cfg.polarization_normals) {
            // Normal and η from the polarization and diffuse terms only; a
            // mis-modelled highlight would otherwise tilt the normal.
            FitProblem geo = pb;
            geo.terms.specular = geo.terms.virtuals = false;
            FreeMask gm;
            gm.eta = m.eta;
            gm.sigma_s = gm.sigma_ss = false;
            start = optimize_vertex(geo, start, gm, cfg.bounds, cfg.optimizer);
            FreeMask rest = m;
            rest.normal = false;
            c.est = optimize_vertex(pb, start, rest, cfg.bounds, cfg.optimizer);
        } else {
            c.est = optimize_vertex(pb, start, m, cfg.bounds, cfg.optimizer);
        }
        if (c.est.flags & kFlagOptimizerFailed) return c;
        const FitProblem check =
            make_problem(vertex_samples(capture, i, thr, &c.est), start, vertex_virtuals[i]);
        c.consistent_total =
            evaluate_losses(check, FitVariables::from(c.est.params, c.est.normal)).total;
        return c;
    };

    // Each vertex continues from its previous estimate; once clusters exist a
    // second start from its cluster's regressed parameters guards against
    // self-consistent traps of the lagged specular predictions.
    auto optimize_all = [&](const FreeMask& m, bool first) {
        parallel_for(n, cfg.workers, [&](int i) {
            if (est[i].flags & kFlagNoObservations) return;
            Candidate best = fit_from(i, est[i], m, !first);
            const int c = result.cluster_of[i];
            if (c >= 0) {
                VertexEstimate alt = est[i];
                const PbrdfParams& cp = result.clusters[c].params;
                alt.params.eta = cp.eta;
                alt.params.sigma_s = cp.sigma_s;
                alt.params.sigma_ss = cp.sigma_ss;
                alt.params.rho_s = cp.rho_s;
                alt.params.rho_ss = cp.rho_ss;
                Candidate other = fit_from(i, alt, m, true);
                if (other.consistent_total < best.consistent_total) best = std::move(other);
            }
            if (best.est.flags & kFlagOptimizerFailed) {
                est[i].flags |= kFlagOptimizerFailed;
                samples[i] = std::move(best.samples);
                return;
            }
            est[i] = best.est;
            samples[i] = std::move(best.samples);
        });
    };

    auto log_iteration = [&](int it, int n_clusters, double secs) {
        IterationLog log;
        log.iteration = it;
        log.clusters = n_clusters;
        log.seconds = secs;
        for (const auto& e : est) {
            log.total += e.residuals.total;
            log.psi += e.residuals.psi;
            log.diffuse += e.residuals.diffuse;
            log.specular += e.residuals.specular(cfg.weights);
            log.azimuth += e.residuals.azimuth;
            if (e.flags & kFlagOptimizerFailed) ++log.failed_vertices;
        }
        result.log.push_back(log);
    };

    for (int it = 1; it <= cfg.iterations; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        optimize_all(mask, it == 1);

        std::vector<int> active;
        std::vector<VertexEstimate> active_est;
        for (int i = 0; i < n; ++i)
            if (!(est[i].flags & kFlagNoObservations)) {
                active.push_back(i);
                active_est.push_back(est[i]);
            }
        result.clusters.clear();
        if (!active.empty() && cfg.clusters > 0) {
            const int k = std::min<int>(cfg.clusters, static_cast<int>(active.size()));
            const int min_members = std::max(
                5, static_cast<int>(std::ceil(cfg.min_cluster_fraction * active.size())));
            result.clusters = cluster_vertices(active_est, k, cfg.seed + static_cast<std::uint64_t>(it),
                                               min_members);
            RegressionOptions ro;
            ro.weights = cfg.weights;
            ro.bounds = cfg.bounds;
            ro.optimizer = cfg.optimizer;
            ro.fix_sigma_ss = cfg.fix_sigma_ss;
            for (std::size_t c = 0; c < result.clusters.size(); ++c) {
                ClusterModel& cl = result.clusters[c];
                for (int& m : cl.members) m = active[m];
                std::vector<FitSample> pooled;
                PbrdfParams mean_p = cfg.init;
                mean_p.eta = mean_p.sigma_s = mean_p.sigma_ss = mean_p.rho_s = 0.0;
                mean_p.rho_d = mean_p.rho_ss = Rgb::Zero();
                for (int m : cl.members) {
                    for (FitSample s : samples[m]) {
                        s.normal = est[m].normal;
                        s.rho_d = est[m].params.rho_d;
                        pooled.push_back(s);
                    }
                    const PbrdfParams& p = est[m].params;
                    mean_p.eta += p.eta;
                    mean_p.sigma_s += p.sigma_s;
                    mean_p.sigma_ss += p.sigma_ss;
                    mean_p.rho_s += p.rho_s;
                    mean_p.rho_d += p.rho_d;
                    mean_p.rho_ss += p.rho_ss;
                    result.cluster_of[m] = static_cast<int>(c);
                }
                const double inv = 1.0 / static_cast<double>(cl.members.size());
                mean_p.eta *= inv;
                mean_p.sigma_s *= inv;
                mean_p.sigma_ss *= inv;
                mean_p.rho_s *= inv;
                mean_p.rho_d *= inv;
                mean_p.rho_ss *= inv;
                regress_cluster(cl, std::move(pooled), mean_p, ro, scale);
                if (cfg.weights.lambda_g > 0.0 && cfg.virtuals > 0) {
                    const auto virt = generate_virtuals(cl.params, cfg.virtuals);
                    for (int m : cl.members) vertex_virtuals[m] = virt;
                }
            }
        }

        std::vector<Vec3> normals(n);
        for (int i = 0; i < n; ++i) normals[i] = est[i].normal;
        cfg.geometry_hook(normals, capture);
        for (int i = 0; i < n; ++i) est[i].normal = normals[i];

        log_iteration(it, static_cast<int>(result.clusters.size()), seconds_since(t0));
    }

    if (cfg.final_pass) {
        const auto t0 = std::chrono::steady_clock::now();
        FreeMask frozen = mask;
        frozen.normal = false;
        optimize_all(frozen, cfg.iterations == 0);
        log_iteration(cfg.iterations + 1, static_cast<int>(result.clusters.size()), seconds_since(t0));
    }

    for (const auto& e : est)
        if (e.flags & kFlagOptimizerFailed) ++result.hard_failures;
    result.seconds = seconds_since(t_start);
    return result;
}

TruthReport compare_to_truth(const Capture& capture, const std::vector<VertexEstimate>& estimates) {
    TruthReport r;
    if (!capture.truth) return r;
    const auto& truth = *capture.truth;
    const int n = static_cast<int>(estimates.size());
    std::vector<double> sigma_err;
    double sigma_ss_sum = 0.0;
    int counted = 0;
    for (int i = 0; i < n; ++i) {
        if (estimates[i].flags & kFlagNoObservations) continue;
        const PbrdfParams& t = truth[i].params;
        const PbrdfParams& e = estimates[i].params;
        r.eta_rel_error.push_back(std::abs(e.eta - t.eta) / t.eta);
        sigma_err.push_back(std::abs(e.sigma_s - t.sigma_s) / t.sigma_s);
        sigma_ss_sum += e.sigma_ss;
        r.mean_rho_d_rel_error += ((e.rho_d - t.rho_d).abs() / t.rho_d.max(1e-12));
        ++counted;

        const Vec3 nt = truth[i].normal;
        const Vec3 ne = estimates[i].normal.normalized();
        const double err = rad_to_deg(std::acos(std::clamp(nt.dot(ne), -1.0, 1.0)));
        r.normal_error_deg.push_back(err);
        Vec3 view = Vec3::Zero();
        for (int v = 0; v < capture.observations.n_views; ++v) {
            const auto& o = capture.observations.at(v, i);
            if (o.visible) view += o.omega_o;
        }
        bool flip = false;
        if (view.norm() > 0.0) {
            view.normalize();
            const Vec3 flipped = 2.0 * nt.dot(view) * view - nt;
            flip = ne.dot(flipped) > ne.dot(nt) + 1e-12;
        }
        r.azimuth_flip.push_back(flip);
    }
    if (counted == 0) return r;
    for (double e : r.eta_rel_error) r.mean_eta_rel_error += e;
    r.mean_eta_rel_error /= counted;
    for (double e : sigma_err) r.mean_sigma_s_rel_error += e;
    r.mean_sigma_s_rel_error /= counted;
    r.mean_sigma_ss = sigma_ss_sum / counted;
    r.mean_rho_d_rel_error /= counted;
    r.median_normal_error_deg = median(r.normal_error_deg);
    r.flip_rate = static_cast<double>(std::count(r.azimuth_flip.begin(), r.azimuth_flip.end(), true)) /
                  counted;
    return r;
}

}  // namespace polinv
