#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "polinv/io.h"
#include "polinv/visualize.h"

using namespace polinv;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path d = fs::temp_directory_path() / "polinv_test_io";
    fs::create_directories(d);
    return d;
}

Scene small_scene(int n_vertices = 100, int n_views = 4) {
    SphereSpec spec;
    spec.n_vertices = n_vertices;
    spec.n_views = n_views;
    spec.seed = 3;
    PbrdfParams p;
    p.eta = 1.6;
    p.rho_d = Rgb(0.5, 0.25, 0.125);
    return make_synthetic_sphere(spec, uniform_params(p));
}

Capture small_capture(bool noisy) {
    const Scene scene = small_scene();
    RenderConfig rc;
    rc.noise.enabled = noisy;
    const ObservationSet obs = render_views(scene, rc);
    std::vector<Vec3> normals;
    for (const auto& v : scene.vertices) normals.push_back(v.normal);
    return make_capture(scene, obs, normals);
}

std::string error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("scene json round trip") {
    const Scene a = small_scene();
    const Scene b = scene_from_json(scene_to_json(a));
    REQUIRE(b.vertices.size() == a.vertices.size());
    REQUIRE(b.views.size() == a.views.size());
    for (std::size_t i = 0; i < a.vertices.size(); ++i) {
        CHECK(b.vertices[i].position == a.vertices[i].position);
        CHECK(b.vertices[i].normal == a.vertices[i].normal);
        CHECK(b.vertices[i].params == a.vertices[i].params);
    }
    for (std::size_t v = 0; v < a.views.size(); ++v) {
        CHECK(b.views[v].rotation == a.views[v].rotation);
        CHECK(b.views[v].translation == a.views[v].translation);
        CHECK(b.views[v].intrinsics.width == a.views[v].intrinsics.width);
    }
    CHECK(b.light.offset == a.light.offset);
    CHECK(b.generator.has_value() == a.generator.has_value());

    const fs::path path = scratch_dir() / "scene.json";
    write_scene(path, a);
    CHECK(scene_to_json(read_scene(path)) == scene_to_json(a));
}

TEST_CASE("scene json rejects unknown keys with their location") {
    nlohmann::json doc = scene_to_json(small_scene(100, 3));
    doc["vertices"][2]["colour"] = 1;
    const std::string msg = error_of([&] { scene_from_json(doc); });
    CHECK(msg.find("/vertices/2/colour") != std::string::npos);

    nlohmann::json top = scene_to_json(small_scene(100, 3));
    top["extra"] = true;
    CHECK(error_of([&] { scene_from_json(top); }).find("extra") != std::string::npos);

    nlohmann::json wrong = scene_to_json(small_scene(100, 3));
    wrong["schema_version"] = 99;
    CHECK_THROWS_AS(scene_from_json(wrong), FormatError);

    nlohmann::json bad = scene_to_json(small_scene(100, 3));
    bad["vertices"][0]["params"]["eta"] = 0.5;
    CHECK_THROWS_AS(scene_from_json(bad), FormatError);
}

TEST_CASE("run config defaults and hash") {
    const RunConfig d = run_config_from_json(nlohmann::json::object());
    CHECK(d.iterations == 10);
    CHECK(d.clusters == 8);
    CHECK(d.virtuals == 180);
    CHECK(d.flash_levels == std::vector<double>{0.25, 0.125, 0.0625});
    CHECK(d.weights.lambda2 == 100.0);
    CHECK(d.model == PbrdfModel::full);
    CHECK_FALSE(d.fix_sigma_ss);

    const RunConfig back = run_config_from_json(run_config_to_json(d));
    CHECK(config_hash(back) == config_hash(d));
    CHECK(hex64(config_hash(d)).size() == 16);

    // Every field feeds the hash.
    const std::uint64_t h0 = config_hash(d);
    auto changed = [&](auto edit) {
        RunConfig c = d;
        edit(c);
        return config_hash(c) != h0;
    };
    CHECK(changed([](RunConfig& c) { c.weights.lambda1 = 2.0; }));
    CHECK(changed([](RunConfig& c) { c.weights.lambda_g = 0.2; }));
    CHECK(changed([](RunConfig& c) { c.iterations = 3; }));
    CHECK(changed([](RunConfig& c) { c.clusters = 2; }));
    CHECK(changed([](RunConfig& c) { c.virtuals = 90; }));
    CHECK(changed([](RunConfig& c) { c.noise.enabled = !c.noise.enabled; }));
    CHECK(changed([](RunConfig& c) { c.noise.seed += 1; }));
    CHECK(changed([](RunConfig& c) { c.seed = 7; }));
    CHECK(changed([](RunConfig& c) { c.flash_levels = {0.5}; }));
    CHECK(changed([](RunConfig& c) { c.model = PbrdfModel::coaxial; }));
    CHECK(changed([](RunConfig& c) { c.fix_sigma_ss = true; }));

    CHECK(fnv1a("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);

    nlohmann::json unknown = {{"iteratons", 3}};
    CHECK(error_of([&] { run_config_from_json(unknown); }).find("iteratons") != std::string::npos);
    CHECK_THROWS_AS(run_config_from_json({{"model", "other"}}), FormatError);
}

TEST_CASE("bundle round trip is bit exact") {
    for (bool noisy : {false, true}) {
        const Capture c = small_capture(noisy);
        const std::vector<std::uint8_t> bytes = encode_bundle(c);
        const Capture d = decode_bundle(bytes);
        CHECK(encode_bundle(d) == bytes);
        REQUIRE(d.observations.obs.size() == c.observations.obs.size());
        for (std::size_t k = 0; k < c.observations.obs.size(); ++k) {
            const auto& x = c.observations.obs[k];
            const auto& y = d.observations.obs[k];
            CHECK(x.visible == y.visible);
            CHECK(std::memcmp(x.i0.data(), y.i0.data(), sizeof(double) * 3) == 0);
            CHECK(std::memcmp(x.i135.data(), y.i135.data(), sizeof(double) * 3) == 0);
        }
        REQUIRE(d.truth.has_value());
        CHECK((*d.truth)[5].params == (*c.truth)[5].params);
    }

    const fs::path path = scratch_dir() / "capture.plob";
    const Capture c = small_capture(false);
    write_bundle(path, c);
    CHECK(encode_bundle(read_bundle(path)) == encode_bundle(c));
}

TEST_CASE("bundle errors") {
    const std::vector<std::uint8_t> good = encode_bundle(small_capture(false));

    std::vector<std::uint8_t> version = good;
    version[4] = 2;
    CHECK(error_of([&] { decode_bundle(version); }).find("version mismatch") != std::string::npos);

    std::vector<std::uint8_t> magic = good;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_bundle(magic), FormatError);

    for (std::size_t cut : {std::size_t(3), std::size_t(20), good.size() / 2, good.size() - 1}) {
        const std::vector<std::uint8_t> truncated(good.begin(), good.begin() + cut);
        CHECK_THROWS_AS(decode_bundle(truncated), FormatError);
    }

    std::vector<std::uint8_t> trailing = good;
    trailing.push_back(0);
    CHECK(error_of([&] { decode_bundle(trailing); }).find("trailing") != std::string::npos);
}

TEST_CASE("pfm round trip") {
    for (int channels : {1, 3}) {
        FloatImage img(5, 3, channels);
        for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = 0.25f * k - 1.0f;
        const fs::path path = scratch_dir() / ("img" + std::to_string(channels) + ".pfm");
        write_pfm(path, img);
        const FloatImage back = read_pfm(path);
        CHECK(back.width == 5);
        CHECK(back.height == 3);
        CHECK(back.channels == channels);
        CHECK(back.data == img.data);
    }
    // Top row first in memory, bottom-up on disk.
    FloatImage tall(1, 2, 1);
    tall.at(0, 0) = 1.0f;
    tall.at(0, 1) = 2.0f;
    const fs::path path = scratch_dir() / "tall.pfm";
    write_pfm(path, tall);
    std::ifstream in(path, std::ios::binary);
    std::string header((std::istreambuf_iterator<char>(in)), {});
    float first;
    std::memcpy(&first, header.data() + header.size() - 8, 4);
    CHECK(first == 2.0f);

    std::ofstream(scratch_dir() / "junk.pfm") << "P5\n1 1\n255\n";
    CHECK_THROWS_AS(read_pfm(scratch_dir() / "junk.pfm"), FormatError);
}

TEST_CASE("parameter csv round trip") {
    PipelineResult r;
    for (int i = 0; i < 20; ++i) {
        VertexEstimate e;
        e.params.eta = 1.3 + i / 77.0;
        e.params.rho_d = Rgb(0.1 + i / 91.0, 1.0 / 3.0, 2.0 / 7.0);
        e.params.rho_s = std::sqrt(2.0) / (i + 1);
        e.params.sigma_s = 0.1 + i / 300.0;
        e.params.rho_ss = Rgb(1e-7, 0.05, 1.0 / 9.0);
        e.params.sigma_ss = 0.95;
        e.normal = Vec3(std::sin(i), std::cos(i), 0.5).normalized();
        e.flags = i % 3;
        r.estimates.push_back(e);
        r.cluster_of.push_back(i % 4);
    }
    const fs::path path = scratch_dir() / "params.csv";
    write_params_csv(path, r);
    const std::vector<VertexEstimate> back = read_params_csv(path);
    REQUIRE(back.size() == r.estimates.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        const PbrdfParams& a = r.estimates[i].params;
        const PbrdfParams& b = back[i].params;
        CHECK(std::abs(a.eta - b.eta) <= 1e-9);
        CHECK(((a.rho_d - b.rho_d).abs() <= 1e-9).all());
        CHECK(std::abs(a.rho_s - b.rho_s) <= 1e-9);
        CHECK(std::abs(a.sigma_s - b.sigma_s) <= 1e-9);
        CHECK(((a.rho_ss - b.rho_ss).abs() <= 1e-9).all());
        CHECK(std::abs(a.sigma_ss - b.sigma_ss) <= 1e-9);
        CHECK((r.estimates[i].normal - back[i].normal).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(back[i].flags == r.estimates[i].flags);
    }

    std::ofstream(scratch_dir() / "bad.csv") << "vertex,x\n";
    CHECK_THROWS_AS(read_params_csv(scratch_dir() / "bad.csv"), FormatError);
}

TEST_CASE("output directory checks") {
    const fs::path ok = scratch_dir() / "out" / "nested";
    CHECK_NOTHROW(ensure_writable_dir(ok));
    CHECK(fs::is_directory(ok));
    std::ofstream(scratch_dir() / "plainfile") << "x";
    CHECK_THROWS_AS(ensure_writable_dir(scratch_dir() / "plainfile" / "sub"), std::runtime_error);
}

TEST_CASE("dop and aolp rasters") {
    Capture c = small_capture(false);
    int view = 0;
    for (auto& o : c.observations.obs) {
        const Rgb v = Rgb::Constant(0.3);
        o.i0 = o.i45 = o.i90 = o.i135 = v;
    }
    const Raster unpolarized = dop_raster(c, view);
    bool any = false;
    for (std::size_t k = 0; k < unpolarized.covered.size(); ++k) {
        if (!unpolarized.covered[k]) continue;
        any = true;
        CHECK(unpolarized.image.data[k] == 0.0f);
    }
    CHECK(any);

    // Horizontal linear polarization: I0 bright, I90 dark.
    for (auto& o : c.observations.obs) {
        o.i0 = Rgb::Constant(1.0);
        o.i90 = Rgb::Zero();
        o.i45 = o.i135 = Rgb::Constant(0.5);
    }
    const Raster aolp = aolp_raster(c, view);
    const Raster dop = dop_raster(c, view);
    for (std::size_t k = 0; k < aolp.covered.size(); ++k) {
        if (!aolp.covered[k]) continue;
        CHECK(aolp.image.data[k] == doctest::Approx(0.0).epsilon(1e-6));
        CHECK(dop.image.data[k] == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("mueller grid of a diffuse model") {
    const Capture c = small_capture(false);
    std::vector<Vertex> model = *c.truth;
    for (auto& v : model) {
        v.params.rho_s = 0.0;
        v.params.rho_ss = Rgb::Zero();
    }
    const FloatImage grid = mueller_grid(c, 0, model, PbrdfModel::full);
    const int w = grid.width / 4, h = grid.height / 4;
    REQUIRE(w > 0);
    // Diffuse Mueller matrices have no circular coupling.
    double m33 = 0.0, m00 = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                m33 = std::max(m33, std::abs(double(grid.at(3 * w + x, 3 * h + y, ch))));
                m00 = std::max(m00, double(grid.at(x, y, ch)));
            }
    CHECK(m33 == 0.0);
    CHECK(m00 > 0.0);

    CHECK(mueller_display_scale(0, 0) == 1.0);
    CHECK(mueller_display_scale(3, 3) == 1.0);
    CHECK(mueller_display_scale(1, 1) == 4.0);
    CHECK(mueller_display_scale(2, 2) == 4.0);
    CHECK(mueller_display_scale(0, 2) == 10.0);
    const std::string legend = mueller_legend();
    CHECK(legend.find("x10") != std::string::npos);
    CHECK(legend.find("x4") != std::string::npos);
}

TEST_CASE("colour ramps") {
    CHECK((heat_color(0.0) == Rgb::Zero()).all());
    CHECK((heat_color(1.0) == Rgb::Ones()).all());
    CHECK((heat_color(-3.0) == heat_color(0.0)).all());
    const Rgb red = aolp_color(0.0);
    CHECK(red[0] > red[1]);
    CHECK(red[0] > red[2]);
    CHECK(((aolp_color(kPi) - red).abs() < 1e-9).all());
}
