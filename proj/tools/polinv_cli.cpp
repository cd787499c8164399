// polinv: render, decompose, invert, ablate, visualize and validate
// polarimetric flash captures.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "polinv/io.h"
#include "polinv/observe.h"
#include "polinv/pipeline.h"
#include "polinv/render.h"
#include "polinv/validate.h"
#include "polinv/visualize.h"

namespace fs = std::filesystem;
using namespace polinv;

namespace {

// RunConfig overrides; a --config file is applied first, then these.
struct RunFlags {
    std::string config_file;
    std::optional<int> iterations, clusters, virtuals, workers;
    std::optional<std::uint64_t> seed, noise_seed;
    std::optional<double> shot, exposure, lambda1, lambda2, lambda3, lambda4, lambda_g;
    std::optional<std::vector<double>> flash_levels;
    std::optional<std::string> model;
    std::int64_t noise = 0;  // +1 on, -1 off, 0 keep
    std::int64_t quantize = 0;
    std::int64_t fix_sigma_ss = 0;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "RunConfig JSON file (flags override it)")->check(CLI::ExistingFile);
        app->add_option("--iterations", iterations, "Pipeline iterations");
        app->add_option("--clusters", clusters, "Material clusters k");
        app->add_option("--virtuals", virtuals, "Virtual specular observations per cluster");
        app->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
        app->add_option("--seed", seed, "Pipeline seed");
        app->add_option("--noise-seed", noise_seed, "Sensor noise seed");
        app->add_flag("--noise,!--no-noise", noise, "Enable or disable sensor noise");
        app->add_option("--shot", shot, "Shot noise coefficient");
        app->add_flag("--quantize,!--no-quantize", quantize, "12-bit quantization");
        app->add_option("--exposure", exposure, "Sensor value per unit radiance (<= 0: auto)");
        app->add_option("--flash-levels", flash_levels, "Flash intensity fractions")->expected(1, -1);
        app->add_option("--model", model, "pBRDF used for rendering")->check(CLI::IsMember({"full", "coaxial"}));
        app->add_flag("--fix-sigma-ss,!--free-sigma-ss", fix_sigma_ss, "Fix sigma_ss at 1");
        app->add_option("--lambda1", lambda1, "DoP loss weight");
        app->add_option("--lambda2", lambda2, "Diffuse loss weight");
        app->add_option("--lambda3", lambda3, "Specular loss weight");
        app->add_option("--lambda4", lambda4, "Azimuth loss weight");
        app->add_option("--lambda-g", lambda_g, "Virtual observation weight");
    }

    RunConfig resolve() const {
        RunConfig c = config_file.empty() ? RunConfig{} : read_run_config(config_file);
        if (iterations) c.iterations = *iterations;
        if (clusters) c.clusters = *clusters;
        if (virtuals) c.virtuals = *virtuals;
        if (workers) c.workers = *workers;
        if (seed) c.seed = *seed;
        if (noise_seed) c.noise.seed = *noise_seed;
        if (noise) c.noise.enabled = noise > 0;
        if (shot) c.noise.shot = *shot;
        if (quantize) c.noise.quantize_12bit = quantize > 0;
        if (exposure) c.noise.exposure = *exposure;
        if (flash_levels) c.flash_levels = *flash_levels;
        if (model) c.model = *model == "full" ? PbrdfModel::full : PbrdfModel::coaxial;
        if (fix_sigma_ss) c.fix_sigma_ss = fix_sigma_ss > 0;
        if (lambda1) c.weights.lambda1 = *lambda1;
        if (lambda2) c.weights.lambda2 = *lambda2;
        if (lambda3) c.weights.lambda3 = *lambda3;
        if (lambda4) c.weights.lambda4 = *lambda4;
        if (lambda_g) c.weights.lambda_g = *lambda_g;
        return c;
    }
};

std::string view_stem(int view) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "view%03d", view);
    return buf;
}

int raster_view_count(const Capture& capture, int max_views) {
    const int n = static_cast<int>(capture.views.size());
    return max_views > 0 ? std::min(n, max_views) : n;
}

void write_rgb(const fs::path& path, const FloatImage& img) { write_pfm(path, img); }

void write_manifest(const fs::path& out, const RunConfig& cfg, const fs::path& scene_file, const Scene& scene,
                    const Capture& capture, const std::vector<std::string>& files) {
    nlohmann::json m;
    m["tool"] = "polinv render";
    m["bundle_version"] = kBundleVersion;
    m["scene_schema_version"] = kSceneSchemaVersion;
    m["scene_file"] = scene_file.string();
    m["scene_hash"] = hex64(fnv1a(scene_to_json(scene).dump()));
    m["config"] = run_config_to_json(cfg);
    m["config_hash"] = hex64(config_hash(cfg));
    m["seeds"] = {{"noise", cfg.noise.seed}, {"pipeline", cfg.seed}};
    m["n_vertices"] = capture.positions.size();
    m["n_views"] = capture.views.size();
    m["exposure"] = capture.observations.exposure;
    m["files"] = files;
    write_json(out / "manifest.json", m);
}

// ---- subcommands ------------------------------------------------------------------

struct SphereArgs {
    SphereSpec spec;
    PbrdfParams material;
    std::vector<double> rho_d{0.6, 0.3, 0.2}, rho_ss{0.1, 0.05, 0.05};
    std::string out;
};

int cmd_sphere(const SphereArgs& a) {
    PbrdfParams p = a.material;
    p.rho_d = Rgb(a.rho_d[0], a.rho_d[1], a.rho_d[2]);
    p.rho_ss = Rgb(a.rho_ss[0], a.rho_ss[1], a.rho_ss[2]);
    validate_params(p);
    write_scene(a.out, make_synthetic_sphere(a.spec, uniform_params(p)));
    std::cout << "wrote " << a.out << " (" << a.spec.n_vertices << " vertices, " << a.spec.n_views << " views)\n";
    return 0;
}

struct RenderArgs {
    std::string scene, out;
    double perturb_deg = 0.0;
    int max_views = 0;
    RunFlags flags;
};

int cmd_render(const RenderArgs& a) {
    const RunConfig cfg = a.flags.resolve();
    const Scene scene = read_scene(a.scene);
    ensure_writable_dir(a.out);
    const ObservationSet obs = render_views(scene, render_config(cfg));
    std::vector<Vec3> normals;
    for (const auto& v : scene.vertices) normals.push_back(v.normal);
    if (a.perturb_deg > 0.0) normals = perturb_normals(normals, a.perturb_deg, mix_seed(cfg.seed, 1, 0, 0));
    const Capture capture = make_capture(scene, obs, normals);

    std::vector<std::string> files;
    write_bundle(fs::path(a.out) / "observations.plob", capture);
    files.push_back("observations.plob");
    static const char* names[4] = {"I0", "I45", "I90", "I135"};
    for (int v = 0; v < raster_view_count(capture, a.max_views); ++v) {
        const auto rasters = filter_rasters(capture, v);
        for (int f = 0; f < 4; ++f) {
            const std::string name = view_stem(v) + "_" + names[f] + ".pfm";
            write_rgb(fs::path(a.out) / name, rasters[f]);
            files.push_back(name);
        }
    }
    write_manifest(a.out, cfg, a.scene, scene, capture, files);
    std::cout << "rendered " << capture.views.size() << " views of " << capture.positions.size() << " vertices; "
              << files.size() - 1 << " rasters; config hash " << hex64(config_hash(cfg)) << "\n";
    return 0;
}

struct DecomposeArgs {
    std::string bundle, out;
    int max_views = 0;
};

int cmd_decompose(const DecomposeArgs& a) {
    const Capture capture = read_bundle(a.bundle);
    ensure_writable_dir(a.out);
    int written = 0;
    for (int v = 0; v < raster_view_count(capture, a.max_views); ++v) {
        for (int part = 0; part < 3; ++part) {
            const Raster r = splat_view(capture, v, 3, [&](int i, float* out) {
                const Decomposition d = decompose(capture.observations.at(v, i));
                const Rgb& c = part == 0 ? d.i_d : part == 1 ? d.i_alpha : d.i_s;
                for (int ch = 0; ch < 3; ++ch) out[ch] = static_cast<float>(c[ch]);
                return true;
            });
            static const char* names[3] = {"i_d", "i_alpha", "i_s"};
            write_rgb(fs::path(a.out) / (view_stem(v) + "_" + names[part] + ".pfm"), r.image);
            ++written;
        }
    }
    std::cout << "wrote " << written << " rasters\n";
    return 0;
}

struct InvertArgs {
    std::string bundle, out;
    bool init_from_truth = false;
    int map_view = 0;
    double max_failure_fraction = 0.05;
    RunFlags flags;
};

PipelineConfig pipeline_for(const RunConfig& cfg, const Capture& capture, bool init_from_truth) {
    PipelineConfig pc = pipeline_config(cfg);
    if (init_from_truth) {
        if (!capture.truth || capture.truth->empty())
            throw std::runtime_error("--init-from-truth: the bundle carries no truth");
        pc.init = capture.truth->front().params;
    }
    return pc;
}

void write_summary(const fs::path& path, const TruthReport& t, const PipelineResult& r) {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path.string());
    std::fprintf(f, "mean eta relative error: %.6f%%\n", 100.0 * t.mean_eta_rel_error);
    std::fprintf(f, "median normal error: %.4f deg\n", t.median_normal_error_deg);
    std::fprintf(f, "azimuth flip rate: %.4f%%\n", 100.0 * t.flip_rate);
    std::fprintf(f, "mean sigma_s relative error: %.6f\n", t.mean_sigma_s_rel_error);
    std::fprintf(f, "mean sigma_ss: %.6f\n", t.mean_sigma_ss);
    std::fprintf(f, "mean rho_d relative error: %.6f %.6f %.6f\n", t.mean_rho_d_rel_error[0], t.mean_rho_d_rel_error[1],
                 t.mean_rho_d_rel_error[2]);
    std::fprintf(f, "hard failures: %d of %zu vertices\n", r.hard_failures, r.estimates.size());
    std::fprintf(f, "runtime: %.2f s\n", r.seconds);
    std::fclose(f);
}

int cmd_invert(const InvertArgs& a) {
    const RunConfig cfg = a.flags.resolve();
    const Capture capture = read_bundle(a.bundle);
    ensure_writable_dir(a.out);
    const PipelineResult r = run_pipeline(capture, pipeline_for(cfg, capture, a.init_from_truth));
    const fs::path out(a.out);
    write_params_csv(out / "params.csv", r);
    write_log_csv(out / "residuals.csv", r.log);
    if (capture.truth) {
        const TruthReport t = compare_to_truth(capture, r.estimates);
        write_truth_csv(out / "truth.csv", t);
        write_summary(out / "summary.txt", t, r);
        std::printf("eta error %.4f%%, median normal error %.3f deg\n", 100.0 * t.mean_eta_rel_error,
                    t.median_normal_error_deg);
    }
    if (a.map_view >= 0 && a.map_view < static_cast<int>(capture.views.size())) {
        const ParameterMaps maps = parameter_maps(capture, a.map_view, r.estimates);
        const ParamBounds b;
        for (const auto& [name, raster] : maps.maps) {
            write_pfm(out / ("map_" + name + ".pfm"), raster.image);
            if (raster.image.channels == 1) {
                const bool is_eta = name == "eta";
                write_pfm(out / ("map_" + name + "_color.pfm"),
                          heat_map(raster, is_eta ? b.eta_min : 0.0, is_eta ? 2.0 : 1.0));
            }
        }
    }
    nlohmann::json m{{"tool", "polinv invert"},
                     {"bundle", a.bundle},
                     {"config", run_config_to_json(cfg)},
                     {"config_hash", hex64(config_hash(cfg))},
                     {"hard_failures", r.hard_failures},
                     {"vertices", r.estimates.size()},
                     {"seconds", r.seconds}};
    write_json(out / "manifest.json", m);
    const double fraction = r.estimates.empty() ? 0.0 : double(r.hard_failures) / double(r.estimates.size());
    std::printf("%d hard failures (%.2f%%), %.1f s\n", r.hard_failures, 100.0 * fraction, r.seconds);
    return fraction > a.max_failure_fraction ? 2 : 0;
}

struct AblateArgs {
    std::string bundle, out;
    RunFlags flags;
};

/// PSNR of s0 = i0 + i90 re-rendered from `estimates` against the capture.
double reconstruction_psnr(const Capture& capture, const std::vector<VertexEstimate>& estimates, PbrdfModel model) {
    Scene scene;
    scene.views = capture.views;
    scene.light = capture.light;
    for (std::size_t i = 0; i < capture.positions.size(); ++i)
        scene.vertices.push_back({capture.positions[i], estimates[i].normal, estimates[i].params});
    RenderConfig rc;
    rc.model = model;
    const ObservationSet got = render_views(scene, rc);
    double se = 0.0, peak = 0.0;
    long n = 0;
    for (std::size_t k = 0; k < got.obs.size(); ++k) {
        const VertexObservation& want = capture.observations.obs[k];
        if (!want.visible) continue;
        const VertexObservation& have = got.obs[k];
        const Rgb a = want.i0 + want.i90;
        const Rgb b = have.visible ? Rgb(have.i0 + have.i90) : Rgb::Zero();
        se += (a - b).square().sum();
        n += 3;
        peak = std::max(peak, a.maxCoeff());
    }
    return n && se > 0.0 ? 10.0 * std::log10(peak * peak / (se / double(n))) : INFINITY;
}

int cmd_ablate(const AblateArgs& a) {
    const RunConfig cfg = a.flags.resolve();
    const Capture capture = read_bundle(a.bundle);
    ensure_writable_dir(a.out);
    const fs::path out(a.out);
    struct Arm {
        const char* name;
        PipelineResult result;
        double psnr = 0.0;
        std::optional<TruthReport> truth;
    };
    std::vector<Arm> arms;
    for (bool with : {true, false}) {
        PipelineConfig pc = pipeline_config(cfg);
        if (!with) pc.weights.lambda_g = 0.0;
        Arm arm{with ? "with" : "without", run_pipeline(capture, pc), 0.0, std::nullopt};
        arm.psnr = reconstruction_psnr(capture, arm.result.estimates, cfg.model);
        if (capture.truth) arm.truth = compare_to_truth(capture, arm.result.estimates);
        write_params_csv(out / (std::string("params_") + arm.name + ".csv"), arm.result);
        arms.push_back(std::move(arm));
    }
    std::FILE* f = std::fopen((out / "ablation.csv").string().c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + (out / "ablation.csv").string());
    std::fprintf(f, "vertex,sigma_s_with,sigma_s_without,sigma_s_diff,eta_with,eta_without\n");
    for (std::size_t i = 0; i < capture.positions.size(); ++i) {
        const PbrdfParams &w = arms[0].result.estimates[i].params, &wo = arms[1].result.estimates[i].params;
        std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, w.sigma_s, wo.sigma_s, w.sigma_s - wo.sigma_s, w.eta,
                     wo.eta);
    }
    std::fclose(f);
    for (const Arm& arm : arms) {
        std::printf("%-8s augmentation: PSNR %.2f dB", arm.name, arm.psnr);
        if (arm.truth)
            std::printf(", sigma_s error %.4f, eta error %.4f%%", arm.truth->mean_sigma_s_rel_error,
                        100.0 * arm.truth->mean_eta_rel_error);
        std::printf("\n");
    }
    std::printf("PSNR gain %.2f dB\n", arms[0].psnr - arms[1].psnr);
    return 0;
}

struct VisualizeArgs {
    std::string bundle, out, params, mode, model = "full";
    int max_views = 0;
};

int cmd_visualize(const VisualizeArgs& a) {
    const Capture capture = read_bundle(a.bundle);
    ensure_writable_dir(a.out);
    const fs::path out(a.out);
    std::vector<Vertex> model;
    if (a.mode == "mueller") {
        if (!a.params.empty()) {
            const auto est = read_params_csv(a.params);
            if (est.size() != capture.positions.size())
                throw FormatError(a.params + ": " + std::to_string(est.size()) + " rows for " +
                                  std::to_string(capture.positions.size()) + " vertices");
            for (std::size_t i = 0; i < est.size(); ++i) model.push_back({capture.positions[i], est[i].normal, est[i].params});
        } else if (capture.truth) {
            model = *capture.truth;
        } else {
            throw std::runtime_error("mueller mode needs --params or a bundle with truth");
        }
        std::FILE* f = std::fopen((out / "mueller_legend.txt").string().c_str(), "w");
        if (!f) throw std::runtime_error("cannot write the legend");
        std::fputs(mueller_legend().c_str(), f);
        std::fclose(f);
    }
    int written = 0;
    for (int v = 0; v < raster_view_count(capture, a.max_views); ++v) {
        const std::string stem = view_stem(v);
        if (a.mode == "dop") {
            const Raster r = dop_raster(capture, v);
            write_pfm(out / (stem + "_dop.pfm"), r.image);
            write_pfm(out / (stem + "_dop_color.pfm"), heat_map(r, 0.0, 1.0));
            written += 2;
        } else if (a.mode == "aolp") {
            const Raster r = aolp_raster(capture, v);
            write_pfm(out / (stem + "_aolp.pfm"), r.image);
            write_pfm(out / (stem + "_aolp_color.pfm"), aolp_hue_map(r));
            written += 2;
        } else if (a.mode == "stokes") {
            const auto s = stokes_rasters(capture, v);
            for (int c = 0; c < 4; ++c) write_pfm(out / (stem + "_s" + std::to_string(c) + ".pfm"), s[c]);
            written += 4;
        } else {
            write_pfm(out / (stem + "_mueller.pfm"),
                      mueller_grid(capture, v, model, a.model == "full" ? PbrdfModel::full : PbrdfModel::coaxial));
            ++written;
        }
    }
    std::cout << "wrote " << written << " rasters\n";
    return 0;
}

struct ValidateArgs {
    bool quick = false;
    bool mutate_fresnel = false;
    std::vector<int> criteria;
    int workers = 1;
};

int cmd_validate(const ValidateArgs& a) {
    ValidationOptions o;
    o.quick = a.quick;
    o.criteria = a.criteria;
    o.workers = a.workers;
    if (a.mutate_fresnel) o.closed_form = ClosedFormVariant::swapped_fresnel_components;
    o.progress = [](const std::string& line) { std::cerr << "  " << line << std::endl; };
    const auto results = run_validation(o);
    std::cout << format_report(results);
    for (const auto& r : results)
        if (!r.pass) return 1;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Polarimetric flash capture: forward rendering and multiview inverse rendering"};
    app.require_subcommand(1);

    SphereArgs sphere;
    auto* s = app.add_subcommand("sphere", "Write a synthetic single-material sphere scene document");
    s->add_option("--out", sphere.out, "Scene JSON to write")->required();
    s->add_option("--vertices", sphere.spec.n_vertices, "Vertex count")->check(CLI::PositiveNumber);
    s->add_option("--views", sphere.spec.n_views, "View count")->check(CLI::PositiveNumber);
    s->add_option("--radius", sphere.spec.radius, "Sphere radius [m]");
    s->add_option("--distance", sphere.spec.view_distance, "Camera distance [m]");
    s->add_option("--seed", sphere.spec.seed, "Camera placement seed");
    s->add_flag("--hemisphere", sphere.spec.hemisphere, "Cameras in the upper hemisphere only");
    s->add_option("--eta", sphere.material.eta, "Index of refraction");
    s->add_option("--rho-d", sphere.rho_d, "Diffuse albedo RGB")->expected(3);
    s->add_option("--rho-s", sphere.material.rho_s, "Specular albedo");
    s->add_option("--sigma-s", sphere.material.sigma_s, "Specular roughness");
    s->add_option("--rho-ss", sphere.rho_ss, "Single-scattering albedo RGB")->expected(3);
    s->add_option("--sigma-ss", sphere.material.sigma_ss, "Single-scattering roughness");
    sphere.material.rho_s = 0.5;
    sphere.material.sigma_s = 0.2;
    sphere.material.sigma_ss = 0.95;

    RenderArgs render;
    auto* r = app.add_subcommand("render", "Render a scene into an observation bundle and channel rasters");
    r->add_option("--scene", render.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
    r->add_option("--out", render.out, "Output directory")->required();
    r->add_option("--perturb-normals", render.perturb_deg, "Gaussian perturbation of the stored initial normals [deg]");
    r->add_option("--max-views", render.max_views, "Rasterize at most this many views (0: all)");
    render.flags.attach(r);

    DecomposeArgs dec;
    auto* d = app.add_subcommand("decompose", "Write I^d, I^alpha and I^s rasters per view");
    d->add_option("--bundle", dec.bundle, "Observation bundle")->required()->check(CLI::ExistingFile);
    d->add_option("--out", dec.out, "Output directory")->required();
    d->add_option("--max-views", dec.max_views, "At most this many views (0: all)");

    InvertArgs inv;
    auto* i = app.add_subcommand("invert", "Recover per-vertex pBRDF parameters and normals");
    i->add_option("--bundle", inv.bundle, "Observation bundle")->required()->check(CLI::ExistingFile);
    i->add_option("--out", inv.out, "Output directory")->required();
    i->add_flag("--init-from-truth", inv.init_from_truth, "Start from the first truth vertex's material");
    i->add_option("--map-view", inv.map_view, "View used for the parameter maps (-1: none)");
    i->add_option("--max-failure-fraction", inv.max_failure_fraction, "Exit nonzero above this hard-failure fraction");
    inv.flags.attach(i);

    AblateArgs abl;
    auto* b = app.add_subcommand("ablate", "Invert with and without specular augmentation and compare");
    b->add_option("--bundle", abl.bundle, "Observation bundle")->required()->check(CLI::ExistingFile);
    b->add_option("--out", abl.out, "Output directory")->required();
    abl.flags.attach(b);

    VisualizeArgs vis;
    auto* v = app.add_subcommand("visualize", "DoP, AoLP, Stokes or Mueller rasters");
    v->add_option("--bundle", vis.bundle, "Observation bundle")->required()->check(CLI::ExistingFile);
    v->add_option("--mode", vis.mode, "dop | aolp | mueller | stokes")
        ->required()
        ->check(CLI::IsMember({"dop", "aolp", "mueller", "stokes"}));
    v->add_option("--out", vis.out, "Output directory")->required();
    v->add_option("--params", vis.params, "Parameter CSV for mueller mode (default: bundle truth)")
        ->check(CLI::ExistingFile);
    v->add_option("--model", vis.model, "pBRDF for mueller mode")->check(CLI::IsMember({"full", "coaxial"}));
    v->add_option("--max-views", vis.max_views, "At most this many views (0: all)");

    ValidateArgs val;
    auto* t = app.add_subcommand("validate", "Run the built-in acceptance suite");
    t->add_flag("--quick", val.quick, "Smaller scenes (same thresholds)");
    t->add_option("--criteria", val.criteria, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
    t->add_option("--workers", val.workers, "Worker threads")->check(CLI::PositiveNumber);
    t->add_flag("--mutate-fresnel", val.mutate_fresnel, "Test hook: swap Fresnel components in the closed forms");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*s) return cmd_sphere(sphere);
        if (*r) return cmd_render(render);
        if (*d) return cmd_decompose(dec);
        if (*i) return cmd_invert(inv);
        if (*b) return cmd_ablate(abl);
        if (*v) return cmd_visualize(vis);
        if (*t) return cmd_validate(val);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
