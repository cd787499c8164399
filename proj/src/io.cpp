#include "polinv/io.h"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace polinv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- JSON helpers -----------------------------------------------------------

[[noreturn]] void fail_at(const std::string& where, const std::string& what) {
    throw FormatError(where + ": " + what);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail_at(where, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items())
        if (!ok.count(key)) fail_at(where + "/" + key, "unknown key '" + key + "'");
}

const json& require(const json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) fail_at(where, std::string("missing key '") + key + "'");
    return *it;
}

double get_number(const json& v, const std::string& where) {
    if (!v.is_number()) fail_at(where, "expected a number");
    return v.get<double>();
}

std::int64_t get_integer(const json& v, const std::string& where) {
    if (!v.is_number_integer()) fail_at(where, "expected an integer");
    return v.get<std::int64_t>();
}

bool get_bool(const json& v, const std::string& where) {
    if (!v.is_boolean()) fail_at(where, "expected a boolean");
    return v.get<bool>();
}

Vec3 get_vec3(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3) fail_at(where, "expected an array of 3 numbers");
    Vec3 out;
    for (int k = 0; k < 3; ++k) out[k] = get_number(v[k], where + "/" + std::to_string(k));
    return out;
}

Rgb get_rgb(const json& v, const std::string& where) {
    const Vec3 x = get_vec3(v, where);
    return Rgb(x[0], x[1], x[2]);
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
json rgb_json(const Rgb& v) { return json::array({v[0], v[1], v[2]}); }

json params_json(const PbrdfParams& p) {
    return {{"eta", p.eta},           {"rho_d", rgb_json(p.rho_d)},   {"rho_s", p.rho_s},
            {"sigma_s", p.sigma_s},   {"rho_ss", rgb_json(p.rho_ss)}, {"sigma_ss", p.sigma_ss}};
}

PbrdfParams params_from(const json& j, const std::string& where) {
    check_keys(j, where, {"eta", "rho_d", "rho_s", "sigma_s", "rho_ss", "sigma_ss"});
    PbrdfParams p;
    p.eta = get_number(require(j, "eta", where), where + "/eta");
    p.rho_d = get_rgb(require(j, "rho_d", where), where + "/rho_d");
    p.rho_s = get_number(require(j, "rho_s", where), where + "/rho_s");
    p.sigma_s = get_number(require(j, "sigma_s", where), where + "/sigma_s");
    p.rho_ss = get_rgb(require(j, "rho_ss", where), where + "/rho_ss");
    p.sigma_ss = get_number(require(j, "sigma_ss", where), where + "/sigma_ss");
    return p;
}

// ---- little-endian byte streams ---------------------------------------------

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int k = 0; k < 4; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
    }
    void vec3(const Vec3& v) {
        for (int k = 0; k < 3; ++k) f64(v[k]);
    }
    void rgb(const Rgb& v) {
        for (int k = 0; k < 3; ++k) f64(v[k]);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= std::uint32_t(b_[pos_ + k]) << (8 * k);
        pos_ += 4;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= std::uint64_t(b_[pos_ + k]) << (8 * k);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    Vec3 vec3() {
        Vec3 v;
        for (int k = 0; k < 3; ++k) v[k] = f64();
        return v;
    }
    Rgb rgb() {
        Rgb v;
        for (int k = 0; k < 3; ++k) v[k] = f64();
        return v;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size())
            throw FormatError("bundle: truncated at byte " + std::to_string(pos_));
    }
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

void write_params_bin(Writer& w, const PbrdfParams& p) {
    w.f64(p.eta);
    w.rgb(p.rho_d);
    w.f64(p.rho_s);
    w.f64(p.sigma_s);
    w.rgb(p.rho_ss);
    w.f64(p.sigma_ss);
}

PbrdfParams read_params_bin(Reader& r) {
    PbrdfParams p;
    p.eta = r.f64();
    p.rho_d = r.rgb();
    p.rho_s = r.f64();
    p.sigma_s = r.f64();
    p.rho_ss = r.rgb();
    p.sigma_ss = r.f64();
    return p;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_text(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace

// ---- scenes ---------------------------------------------------------------------

json scene_to_json(const Scene& scene) {
    json doc;
    doc["schema_version"] = kSceneSchemaVersion;
    json verts = json::array();
    for (const auto& v : scene.vertices)
        verts.push_back({{"position", vec_json(v.position)},
                         {"normal", vec_json(v.normal)},
                         {"params", params_json(v.params)}});
    doc["vertices"] = std::move(verts);
    json views = json::array();
    for (const auto& v : scene.views) {
        json rot = json::array();
        for (int r = 0; r < 3; ++r)
            rot.push_back(json::array({v.rotation(r, 0), v.rotation(r, 1), v.rotation(r, 2)}));
        const Intrinsics& k = v.intrinsics;
        views.push_back({{"rotation", rot},
                         {"translation", vec_json(v.translation)},
                         {"intrinsics",
                          {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
                         {"flash_offset", vec_json(scene.light.offset)},
                         {"pol_angle", scene.light.pol_angle}});
    }
    doc["views"] = std::move(views);
    if (scene.generator) {
        const SphereSpec& g = *scene.generator;
        doc["generator"] = {{"radius", g.radius},       {"n_vertices", g.n_vertices},
                            {"n_views", g.n_views},     {"view_distance", g.view_distance},
                            {"seed", g.seed},           {"hemisphere", g.hemisphere}};
    }
    return doc;
}

Scene scene_from_json(const json& doc) {
    check_keys(doc, "/", {"schema_version", "materials", "vertices", "views", "generator"});
    const auto version = get_integer(require(doc, "schema_version", "/"), "/schema_version");
    if (version != kSceneSchemaVersion)
        fail_at("/schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                                       std::to_string(kSceneSchemaVersion) + ")");

    std::vector<PbrdfParams> materials;
    if (doc.contains("materials")) {
        const json& m = doc["materials"];
        if (!m.is_array()) fail_at("/materials", "expected an array");
        for (std::size_t i = 0; i < m.size(); ++i)
            materials.push_back(params_from(m[i], "/materials/" + std::to_string(i)));
    }

    Scene scene;
    const json& verts = require(doc, "vertices", "/");
    if (!verts.is_array()) fail_at("/vertices", "expected an array");
    for (std::size_t i = 0; i < verts.size(); ++i) {
        const std::string w = "/vertices/" + std::to_string(i);
        check_keys(verts[i], w, {"position", "normal", "params", "material"});
        Vertex v;
        v.position = get_vec3(require(verts[i], "position", w), w + "/position");
        v.normal = get_vec3(require(verts[i], "normal", w), w + "/normal");
        const bool has_params = verts[i].contains("params");
        const bool has_material = verts[i].contains("material");
        if (has_params == has_material) fail_at(w, "exactly one of 'params' or 'material' is required");
        if (has_params) {
            v.params = params_from(verts[i]["params"], w + "/params");
        } else {
            const auto idx = get_integer(verts[i]["material"], w + "/material");
            if (idx < 0 || idx >= static_cast<std::int64_t>(materials.size()))
                fail_at(w + "/material", "index out of range");
            v.params = materials[static_cast<std::size_t>(idx)];
        }
        scene.vertices.push_back(v);
    }

    const json& views = require(doc, "views", "/");
    if (!views.is_array()) fail_at("/views", "expected an array");
    for (std::size_t i = 0; i < views.size(); ++i) {
        const std::string w = "/views/" + std::to_string(i);
        check_keys(views[i], w, {"rotation", "translation", "intrinsics", "flash_offset", "pol_angle"});
        ViewPose pose;
        const json& rot = require(views[i], "rotation", w);
        if (!rot.is_array() || rot.size() != 3) fail_at(w + "/rotation", "expected a 3x3 array");
        for (int r = 0; r < 3; ++r) {
            const Vec3 row = get_vec3(rot[r], w + "/rotation/" + std::to_string(r));
            pose.rotation.row(r) = row.transpose();
        }
        pose.translation = get_vec3(require(views[i], "translation", w), w + "/translation");
        if (views[i].contains("intrinsics")) {
            const json& k = views[i]["intrinsics"];
            const std::string wk = w + "/intrinsics";
            check_keys(k, wk, {"fx", "fy", "cx", "cy", "width", "height"});
            Intrinsics& in = pose.intrinsics;
            in.fx = get_number(require(k, "fx", wk), wk + "/fx");
            in.fy = get_number(require(k, "fy", wk), wk + "/fy");
            in.cx = get_number(require(k, "cx", wk), wk + "/cx");
            in.cy = get_number(require(k, "cy", wk), wk + "/cy");
            in.width = static_cast<int>(get_integer(require(k, "width", wk), wk + "/width"));
            in.height = static_cast<int>(get_integer(require(k, "height", wk), wk + "/height"));
        }
        LightConfig light;
        light.offset = get_vec3(require(views[i], "flash_offset", w), w + "/flash_offset");
        light.pol_angle = get_number(require(views[i], "pol_angle", w), w + "/pol_angle");
        if (i == 0) {
            scene.light = light;
        } else if (light.offset != scene.light.offset || light.pol_angle != scene.light.pol_angle) {
            fail_at(w, "flash rig differs from view 0 (the rig is shared by all views)");
        }
        scene.views.push_back(pose);
    }

    if (doc.contains("generator")) {
        const json& g = doc["generator"];
        const std::string w = "/generator";
        check_keys(g, w, {"radius", "n_vertices", "n_views", "view_distance", "seed", "hemisphere"});
        SphereSpec s;
        s.radius = get_number(require(g, "radius", w), w + "/radius");
        s.n_vertices = static_cast<int>(get_integer(require(g, "n_vertices", w), w + "/n_vertices"));
        s.n_views = static_cast<int>(get_integer(require(g, "n_views", w), w + "/n_views"));
        s.view_distance = get_number(require(g, "view_distance", w), w + "/view_distance");
        const json& seed = require(g, "seed", w);
        if (!seed.is_number_unsigned()) fail_at(w + "/seed", "expected a nonnegative integer");
        s.seed = seed.get<std::uint64_t>();
        s.hemisphere = get_bool(require(g, "hemisphere", w), w + "/hemisphere");
        scene.generator = s;
    }
    try {
        validate_scene(scene);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("invalid scene: ") + e.what());
    }
    return scene;
}

Scene read_scene(const fs::path& path) { return scene_from_json(read_json(path)); }

void write_scene(const fs::path& path, const Scene& scene) { write_json(path, scene_to_json(scene)); }

// ---- run configuration -----------------------------------------------------------

json run_config_to_json(const RunConfig& c) {
    return {{"weights",
             {{"lambda1", c.weights.lambda1},
              {"lambda2", c.weights.lambda2},
              {"lambda3", c.weights.lambda3},
              {"lambda4", c.weights.lambda4},
              {"lambda_g", c.weights.lambda_g}}},
            {"iterations", c.iterations},
            {"clusters", c.clusters},
            {"virtuals", c.virtuals},
            {"noise",
             {{"enabled", c.noise.enabled},
              {"shot", c.noise.shot},
              {"quantize_12bit", c.noise.quantize_12bit},
              {"exposure", c.noise.exposure},
              {"seed", c.noise.seed}}},
            {"seed", c.seed},
            {"flash_levels", c.flash_levels},
            {"model", c.model == PbrdfModel::full ? "full" : "coaxial"},
            {"fix_sigma_ss", c.fix_sigma_ss},
            {"workers", c.workers}};
}

RunConfig run_config_from_json(const json& doc) {
    check_keys(doc, "/", {"weights", "iterations", "clusters", "virtuals", "noise", "seed", "flash_levels",
                          "model", "fix_sigma_ss", "workers"});
    RunConfig c;
    auto seed_of = [](const json& v, const std::string& where) {
        if (!v.is_number_unsigned()) fail_at(where, "expected a nonnegative integer");
        return v.get<std::uint64_t>();
    };
    if (doc.contains("weights")) {
        const json& w = doc["weights"];
        check_keys(w, "/weights", {"lambda1", "lambda2", "lambda3", "lambda4", "lambda_g"});
        auto opt = [&](const char* k, double& dst) {
            if (w.contains(k)) dst = get_number(w[k], std::string("/weights/") + k);
        };
        opt("lambda1", c.weights.lambda1);
        opt("lambda2", c.weights.lambda2);
        opt("lambda3", c.weights.lambda3);
        opt("lambda4", c.weights.lambda4);
        opt("lambda_g", c.weights.lambda_g);
    }
    auto opt_int = [&](const char* k, int& dst) {
        if (doc.contains(k)) dst = static_cast<int>(get_integer(doc[k], std::string("/") + k));
    };
    opt_int("iterations", c.iterations);
    opt_int("clusters", c.clusters);
    opt_int("virtuals", c.virtuals);
    opt_int("workers", c.workers);
    if (doc.contains("noise")) {
        const json& n = doc["noise"];
        check_keys(n, "/noise", {"enabled", "shot", "quantize_12bit", "exposure", "seed"});
        if (n.contains("enabled")) c.noise.enabled = get_bool(n["enabled"], "/noise/enabled");
        if (n.contains("shot")) c.noise.shot = get_number(n["shot"], "/noise/shot");
        if (n.contains("quantize_12bit"))
            c.noise.quantize_12bit = get_bool(n["quantize_12bit"], "/noise/quantize_12bit");
        if (n.contains("exposure")) c.noise.exposure = get_number(n["exposure"], "/noise/exposure");
        if (n.contains("seed")) c.noise.seed = seed_of(n["seed"], "/noise/seed");
    }
    if (doc.contains("seed")) c.seed = seed_of(doc["seed"], "/seed");
    if (doc.contains("flash_levels")) {
        const json& f = doc["flash_levels"];
        if (!f.is_array() || f.empty()) fail_at("/flash_levels", "expected a non-empty array");
        c.flash_levels.clear();
        for (std::size_t i = 0; i < f.size(); ++i)
            c.flash_levels.push_back(get_number(f[i], "/flash_levels/" + std::to_string(i)));
    }
    if (doc.contains("model")) {
        const json& m = doc["model"];
        if (m == "full") c.model = PbrdfModel::full;
        else if (m == "coaxial") c.model = PbrdfModel::coaxial;
        else fail_at("/model", "expected \"full\" or \"coaxial\"");
    }
    if (doc.contains("fix_sigma_ss")) c.fix_sigma_ss = get_bool(doc["fix_sigma_ss"], "/fix_sigma_ss");
    if (c.iterations < 0) fail_at("/iterations", "must be >= 0");
    if (c.clusters < 0) fail_at("/clusters", "must be >= 0");
    if (c.virtuals < 0) fail_at("/virtuals", "must be >= 0");
    if (c.workers < 1) fail_at("/workers", "must be >= 1");
    return c;
}

RunConfig read_run_config(const fs::path& path) { return run_config_from_json(read_json(path)); }

RenderConfig render_config(const RunConfig& c) {
    RenderConfig r;
    r.model = c.model;
    r.flash_levels = c.flash_levels;
    r.noise = c.noise;
    return r;
}

PipelineConfig pipeline_config(const RunConfig& c) {
    PipelineConfig p;
    p.weights = c.weights;
    p.iterations = c.iterations;
    p.clusters = c.clusters;
    p.virtuals = c.virtuals;
    p.seed = c.seed;
    p.fix_sigma_ss = c.fix_sigma_ss;
    p.workers = c.workers;
    return p;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(run_config_to_json(cfg).dump()); }

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

// ---- bundle ------------------------------------------------------------------------

std::vector<std::uint8_t> encode_bundle(const Capture& c) {
    const ObservationSet& obs = c.observations;
    const std::size_t nv = c.positions.size();
    if (c.initial_normals.size() != nv || static_cast<std::size_t>(obs.n_vertices) != nv ||
        static_cast<std::size_t>(obs.n_views) != c.views.size() ||
        obs.obs.size() != nv * c.views.size() || (c.truth && c.truth->size() != nv))
        throw std::invalid_argument("encode_bundle: inconsistent capture sizes");

    Writer w;
    for (char ch : {'P', 'L', 'O', 'B'}) w.u8(static_cast<std::uint8_t>(ch));
    w.u32(kBundleVersion);
    w.u32(static_cast<std::uint32_t>(nv));
    w.u32(static_cast<std::uint32_t>(c.views.size()));
    w.f64(obs.exposure);
    w.vec3(c.light.offset);
    w.f64(c.light.pol_angle);
    for (const auto& v : c.views) {
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k) w.f64(v.rotation(r, k));
        w.vec3(v.translation);
        w.f64(v.intrinsics.fx);
        w.f64(v.intrinsics.fy);
        w.f64(v.intrinsics.cx);
        w.f64(v.intrinsics.cy);
        w.i32(v.intrinsics.width);
        w.i32(v.intrinsics.height);
    }
    for (std::size_t i = 0; i < nv; ++i) {
        w.vec3(c.positions[i]);
        w.vec3(c.initial_normals[i]);
    }
    w.u8(c.truth ? 1 : 0);
    if (c.truth)
        for (const auto& t : *c.truth) {
            w.vec3(t.normal);
            write_params_bin(w, t.params);
        }
    for (const auto& o : obs.obs) {
        w.u8(o.visible ? 1 : 0);
        w.vec3(o.omega_i);
        w.vec3(o.omega_o);
        w.f64(o.distance);
        w.rgb(o.i0);
        w.rgb(o.i45);
        w.rgb(o.i90);
        w.rgb(o.i135);
    }
    return w.take();
}

Capture decode_bundle(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    for (char& ch : magic) ch = static_cast<char>(r.u8());
    if (std::memcmp(magic, "PLOB", 4) != 0) throw FormatError("bundle: bad magic (not an observation bundle)");
    const std::uint32_t version = r.u32();
    if (version != kBundleVersion)
        throw FormatError("bundle: version mismatch (expected " + std::to_string(kBundleVersion) +
                          ", found " + std::to_string(version) + ")");
    const std::uint32_t nv = r.u32();
    const std::uint32_t nviews = r.u32();
    // Every observation takes at least 1 + 19·8 bytes; reject absurd headers
    // before allocating.
    const std::uint64_t min_size = std::uint64_t(nv) * nviews * 153;
    if (min_size > bytes.size()) throw FormatError("bundle: header sizes exceed the file length");

    Capture c;
    c.observations.n_vertices = static_cast<int>(nv);
    c.observations.n_views = static_cast<int>(nviews);
    c.observations.exposure = r.f64();
    c.light.offset = r.vec3();
    c.light.pol_angle = r.f64();
    c.views.resize(nviews);
    for (auto& v : c.views) {
        for (int row = 0; row < 3; ++row)
            for (int k = 0; k < 3; ++k) v.rotation(row, k) = r.f64();
        v.translation = r.vec3();
        v.intrinsics.fx = r.f64();
        v.intrinsics.fy = r.f64();
        v.intrinsics.cx = r.f64();
        v.intrinsics.cy = r.f64();
        v.intrinsics.width = r.i32();
        v.intrinsics.height = r.i32();
    }
    c.positions.resize(nv);
    c.initial_normals.resize(nv);
    for (std::uint32_t i = 0; i < nv; ++i) {
        c.positions[i] = r.vec3();
        c.initial_normals[i] = r.vec3();
    }
    const std::uint8_t has_truth = r.u8();
    if (has_truth > 1) throw FormatError("bundle: bad truth flag at byte " + std::to_string(r.pos() - 1));
    if (has_truth) {
        std::vector<Vertex> truth(nv);
        for (std::uint32_t i = 0; i < nv; ++i) {
            truth[i].position = c.positions[i];
            truth[i].normal = r.vec3();
            truth[i].params = read_params_bin(r);
        }
        c.truth = std::move(truth);
    }
    c.observations.obs.resize(std::size_t(nv) * nviews);
    for (std::size_t k = 0; k < c.observations.obs.size(); ++k) {
        VertexObservation& o = c.observations.obs[k];
        const std::uint8_t vis = r.u8();
        if (vis > 1) throw FormatError("bundle: bad visibility flag at byte " + std::to_string(r.pos() - 1));
        o.visible = vis == 1;
        o.view_id = static_cast<int>(k / nv);
        o.omega_i = r.vec3();
        o.omega_o = r.vec3();
        o.distance = r.f64();
        o.i0 = r.rgb();
        o.i45 = r.rgb();
        o.i90 = r.rgb();
        o.i135 = r.rgb();
    }
    if (!r.done()) throw FormatError("bundle: trailing bytes after offset " + std::to_string(r.pos()));
    return c;
}

void write_bundle(const fs::path& path, const Capture& capture) {
    const auto bytes = encode_bundle(capture);
    write_file(path, bytes.data(), bytes.size());
}

Capture read_bundle(const fs::path& path) { return decode_bundle(read_file(path)); }

// ---- PFM -------------------------------------------------------------------------------

void write_pfm(const fs::path& path, const FloatImage& img) {
    if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_pfm: 1 or 3 channels");
    if (img.data.size() != std::size_t(img.width) * img.height * img.channels)
        throw std::invalid_argument("write_pfm: data size mismatch");
    std::string header = std::string(img.channels == 3 ? "PF" : "Pf") + "\n" + std::to_string(img.width) +
                         " " + std::to_string(img.height) + "\n-1.0\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.data.size() * 4);
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const auto bits = std::bit_cast<std::uint32_t>(img.at(x, y, c));
                for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
            }
    write_file(path, out.data(), out.size());
}

FloatImage read_pfm(const fs::path& path) {
    const auto bytes = read_file(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
        return t;
    };
    const std::string kind = token();
    int channels = 0;
    if (kind == "PF") channels = 3;
    else if (kind == "Pf") channels = 1;
    else throw FormatError(path.string() + ": not a PFM file");
    int w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        scale = std::stod(token());
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PFM header");
    }
    if (w <= 0 || h <= 0 || scale == 0.0) throw FormatError(path.string() + ": malformed PFM header");
    ++pos;  // the single whitespace byte ending the header
    const bool little = scale < 0.0;
    const std::size_t need = std::size_t(w) * h * channels * 4;
    if (bytes.size() - pos != need) throw FormatError(path.string() + ": PFM payload size mismatch");
    FloatImage img(w, h, channels);
    for (int y = h - 1; y >= 0; --y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                std::uint32_t bits = 0;
                for (int k = 0; k < 4; ++k) {
                    const int shift = little ? 8 * k : 8 * (3 - k);
                    bits |= std::uint32_t(bytes[pos + k]) << shift;
                }
                pos += 4;
                img.at(x, y, c) = std::bit_cast<float>(bits);
            }
    return img;
}

// ---- CSV -------------------------------------------------------------------------------------

void write_params_csv(const fs::path& path, const PipelineResult& result) {
    auto out = open_text(path);
    out << "vertex,eta,rho_d_r,rho_d_g,rho_d_b,rho_s,sigma_s,rho_ss_r,rho_ss_g,rho_ss_b,sigma_ss,"
           "normal_x,normal_y,normal_z,flags,cluster\n";
    for (std::size_t i = 0; i < result.estimates.size(); ++i) {
        const VertexEstimate& e = result.estimates[i];
        const PbrdfParams& p = e.params;
        const int cluster = i < result.cluster_of.size() ? result.cluster_of[i] : -1;
        out << i << ',' << fmt17(p.eta) << ',' << fmt17(p.rho_d[0]) << ',' << fmt17(p.rho_d[1]) << ','
            << fmt17(p.rho_d[2]) << ',' << fmt17(p.rho_s) << ',' << fmt17(p.sigma_s) << ','
            << fmt17(p.rho_ss[0]) << ',' << fmt17(p.rho_ss[1]) << ',' << fmt17(p.rho_ss[2]) << ','
            << fmt17(p.sigma_ss) << ',' << fmt17(e.normal[0]) << ',' << fmt17(e.normal[1]) << ','
            << fmt17(e.normal[2]) << ',' << e.flags << ',' << cluster << '\n';
    }
}

std::vector<VertexEstimate> read_params_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("vertex,eta,", 0) != 0) throw FormatError(path.string() + ":1: not a parameter table");
    std::vector<VertexEstimate> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 16)
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 16 columns");
        try {
            VertexEstimate e;
            PbrdfParams& p = e.params;
            p.eta = std::stod(cells[1]);
            p.rho_d = Rgb(std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]));
            p.rho_s = std::stod(cells[5]);
            p.sigma_s = std::stod(cells[6]);
            p.rho_ss = Rgb(std::stod(cells[7]), std::stod(cells[8]), std::stod(cells[9]));
            p.sigma_ss = std::stod(cells[10]);
            e.normal = Vec3(std::stod(cells[11]), std::stod(cells[12]), std::stod(cells[13]));
            e.flags = static_cast<std::uint32_t>(std::stoul(cells[14]));
            out.push_back(e);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
        }
    }
    return out;
}

void write_log_csv(const fs::path& path, const std::vector<IterationLog>& log) {
    auto out = open_text(path);
    out << "iteration,total,psi,diffuse,specular,azimuth,clusters,failed_vertices,seconds\n";
    for (const auto& l : log)
        out << l.iteration << ',' << fmt17(l.total) << ',' << fmt17(l.psi) << ',' << fmt17(l.diffuse) << ','
            << fmt17(l.specular) << ',' << fmt17(l.azimuth) << ',' << l.clusters << ',' << l.failed_vertices
            << ',' << fmt17(l.seconds) << '\n';
}

void write_truth_csv(const fs::path& path, const TruthReport& r) {
    auto out = open_text(path);
    out << "row,eta_rel_error,normal_error_deg,azimuth_flip\n";
    for (std::size_t i = 0; i < r.eta_rel_error.size(); ++i)
        out << i << ',' << fmt17(r.eta_rel_error[i]) << ',' << fmt17(r.normal_error_deg[i]) << ','
            << (r.azimuth_flip[i] ? 1 : 0) << '\n';
    out << "mean," << fmt17(r.mean_eta_rel_error) << ',' << fmt17(r.median_normal_error_deg) << ','
        << fmt17(r.flip_rate) << '\n';
}

void write_json(const fs::path& path, const json& doc) {
    const std::string text = doc.dump(2) + "\n";
    write_file(path, text.data(), text.size());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void ensure_writable_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
    const fs::path probe = dir / ".polinv_write_probe";
    {
        std::ofstream out(probe);
        if (!out) throw std::runtime_error("output directory is not writable: " + dir.string());
    }
    fs::remove(probe, ec);
}

}  // namespace polinv
