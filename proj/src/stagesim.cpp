#include "relharm/stagesim.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace relharm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Geometry g) {
    switch (g) {
        case Geometry::sphere: return "sphere";
        case Geometry::capsule: return "capsule";
        case Geometry::bust: return "bust";
    }
    return "?";
}

Geometry geometry_from_string(const std::string& s) {
    if (s == "sphere") return Geometry::sphere;
    if (s == "capsule") return Geometry::capsule;
    if (s == "bust") return Geometry::bust;
    throw ContractError("unknown geometry: " + s);
}

void SubjectSpec::validate() const {
    if (!(radius > 0.0)) throw ContractError("SubjectSpec: radius must be positive");
    if (half_length < 0.0) throw ContractError("SubjectSpec: half_length must be >= 0");
    for (double a : albedo)
        if (!(a >= 0.0 && a <= 1.0)) throw ContractError("SubjectSpec: albedo must lie in [0,1]");
    if (!(specular_strength >= 0.0 && specular_strength <= 1.0))
        throw ContractError("SubjectSpec: specular_strength must lie in [0,1]");
    if (!(specular_exponent >= 1.0)) throw ContractError("SubjectSpec: specular_exponent must be >= 1");
}

namespace {

struct SurfaceHit {
    double sd;  // signed distance to the silhouette, camera units, negative inside
    Vec3 n;     // camera-frame normal
};

SurfaceHit sphere_hit(double x, double y, double cx, double cy, double r) {
    const double dx = x - cx, dy = y - cy;
    const double rho = std::sqrt(dx * dx + dy * dy);
    double qx = dx / r, qy = dy / r;
    const double q2 = qx * qx + qy * qy;
    if (q2 > 1.0) {
        const double s = 1.0 / std::sqrt(q2);
        qx *= s;
        qy *= s;
    }
    return {rho - r, {qx, qy, -std::sqrt(std::max(0.0, 1.0 - qx * qx - qy * qy))}};
}

// Depth of the front surface (towards the camera) of a sphere hit.
double front_depth(const SurfaceHit& h) { return -h.n[2]; }

struct Bounds {
    double x0, x1, y0, y1;
};

constexpr double kTorsoOffset = 1.55;
constexpr double kTorsoScale = 1.25;

Bounds subject_bounds(const SubjectSpec& s) {
    switch (s.geometry) {
        case Geometry::sphere: return {s.cx - s.radius, s.cx + s.radius, s.cy - s.radius, s.cy + s.radius};
        case Geometry::capsule:
            return {s.cx - s.radius, s.cx + s.radius, s.cy - s.half_length - s.radius, s.cy + s.half_length + s.radius};
        case Geometry::bust: {
            const double tr = kTorsoScale * s.radius;
            const double ty = s.cy - kTorsoOffset * s.radius;
            return {s.cx - tr, s.cx + tr, ty - tr, s.cy + s.radius};
        }
    }
    return {};
}

SurfaceHit subject_hit(const SubjectSpec& s, double x, double y) {
    switch (s.geometry) {
        case Geometry::sphere: return sphere_hit(x, y, s.cx, s.cy, s.radius);
        case Geometry::capsule: {
            const double py = std::clamp(y, s.cy - s.half_length, s.cy + s.half_length);
            return sphere_hit(x, y, s.cx, py, s.radius);
        }
        case Geometry::bust: {
            const SurfaceHit head = sphere_hit(x, y, s.cx, s.cy, s.radius);
            const SurfaceHit torso =
                sphere_hit(x, y, s.cx, s.cy - kTorsoOffset * s.radius, kTorsoScale * s.radius);
            const bool in_head = head.sd < 0.0, in_torso = torso.sd < 0.0;
            SurfaceHit out;
            if (in_head && in_torso)
                out = front_depth(head) >= front_depth(torso) ? head : torso;
            else
                out = head.sd <= torso.sd ? head : torso;
            out.sd = std::min(head.sd, torso.sd);
            return out;
        }
    }
    return {};
}

// Camera frame -> world frame, matching crop_ray.
Vec3 view_to_world(const CropSpec& view, const Vec3& d) {
    const double cp = std::cos(view.pitch), sp = std::sin(view.pitch);
    const Vec3 p{d[0], d[1] * cp + d[2] * sp, -d[1] * sp + d[2] * cp};
    const double cy = std::cos(view.yaw), sy = std::sin(view.yaw);
    return {p[0] * cy + p[2] * sy, p[1], -p[0] * sy + p[2] * cy};
}

struct Texel {
    Vec3 dir;
    Rgb weighted;  // radiance * solid angle
};

std::vector<Texel> lit_texels(const EnvMap& env) {
    std::vector<Texel> out;
    for (int v = 0; v < env.height(); ++v) {
        const double dw = env.texel_solid_angle(v);
        for (int u = 0; u < env.width(); ++u) {
            const Rgb l{env.at(0, v, u) * dw, env.at(1, v, u) * dw, env.at(2, v, u) * dw};
            if (l[0] == 0.0 && l[1] == 0.0 && l[2] == 0.0) continue;
            out.push_back({equirect_to_dir(u + 0.5, v + 0.5, env.height(), env.width()), l});
        }
    }
    return out;
}

double uniform(std::mt19937_64& rng, Range r) {
    return r.lo == r.hi ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

RenderResult render_subject(const SubjectSpec& subject, const EnvMap& env, int size, const CropSpec& view) {
    subject.validate();
    if (size < 8) throw ContractError("render_subject: size must be >= 8");
    const Bounds b = subject_bounds(subject);
    if (b.x0 < -1.0 || b.x1 > 1.0 || b.y0 < -1.0 || b.y1 > 1.0) throw ContractError("subject out of frame");

    const std::vector<Texel> texels = lit_texels(env);
    const Vec3 to_eye = view_to_world(view, {0.0, 0.0, -1.0});
    const double spec_norm = subject.specular_strength * (subject.specular_exponent + 8.0) / (8.0 * kPi);

    RenderResult r{Image(3, size, size), Image(3, size, size), Image(1, size, size)};
    const double px_size = 2.0 / size;
    for (int i = 0; i < size; ++i) {
        const double y = 1.0 - (i + 0.5) * px_size;
        for (int j = 0; j < size; ++j) {
            const double x = (j + 0.5) * px_size - 1.0;
            const SurfaceHit hit = subject_hit(subject, x, y);
            const double alpha = std::clamp(0.5 - hit.sd / px_size, 0.0, 1.0);
            if (alpha <= 0.0) continue;
            const Vec3 n = view_to_world(view, hit.n);
            Rgb diffuse{}, spec{};
            for (const Texel& t : texels) {
                const double cosine = dot(n, t.dir);
                if (cosine <= 0.0) continue;
                for (int c = 0; c < 3; ++c) diffuse[c] += t.weighted[c] * cosine;
                if (spec_norm > 0.0) {
                    const Vec3 h = normalize({t.dir[0] + to_eye[0], t.dir[1] + to_eye[1], t.dir[2] + to_eye[2]});
                    const double nh = dot(n, h);
                    if (nh > 0.0) {
                        const double k = std::pow(nh, subject.specular_exponent) * cosine;
                        for (int c = 0; c < 3; ++c) spec[c] += t.weighted[c] * k;
                    }
                }
            }
            for (int c = 0; c < 3; ++c) {
                const double v = subject.albedo[c] / kPi * diffuse[c] + spec_norm * spec[c];
                r.linear.at(c, i, j) = static_cast<float>(v);
                r.fg.at(c, i, j) = tonemap_value(static_cast<float>(v));
            }
            r.alpha.at(0, i, j) = static_cast<float>(alpha);
        }
    }
    return r;
}

Image composite(const Image& fg, const Mask& alpha, const Image& bg) {
    require_same_shape(fg, bg, "composite");
    if (alpha.channels != 1 || alpha.height != fg.height || alpha.width != fg.width)
        throw ShapeError("composite: alpha must be 1 x H x W matching the images");
    Image out(fg.channels, fg.height, fg.width);
    const std::size_t plane = fg.plane();
    for (int c = 0; c < fg.channels; ++c)
        for (std::size_t p = 0; p < plane; ++p) {
            const float a = alpha.data[p];
            out.data[c * plane + p] = a * fg.data[c * plane + p] + (1.0f - a) * bg.data[c * plane + p];
        }
    return out;
}

TrainingTuple render_tuple(const SubjectSpec& subject, const EnvMap& env_a, const EnvMap& env_b, const CropSpec& crop_b,
                           int size, std::uint64_t seed) {
    CropSpec crop = crop_b;
    crop.out_w = crop.out_h = size;
    const RenderResult ra = render_subject(subject, env_a, size, crop);
    const RenderResult rb = render_subject(subject, env_b, size, crop);

    TrainingTuple t;
    t.m = quantize8(ra.alpha);
    t.y_b = quantize8(tonemap_ldr(project_to_background(env_b, crop)));
    t.x_a = quantize8(composite(ra.fg, t.m, t.y_b));
    t.x_b = quantize8(composite(rb.fg, t.m, t.y_b));
    t.z_b = env_b;
    t.z_thumb = quantize8(env_thumbnail(env_b, size));
    t.meta.subject = subject;
    t.meta.crop = crop;
    t.meta.seed = seed;
    return t;
}

void validate_tuple(const TrainingTuple& t) {
    const int s = t.x_b.height;
    auto check = [&](const Image& img, int ch, const char* name) {
        if (img.channels != ch || img.height != s || img.width != s)
            throw std::runtime_error(std::string("tuple ") + std::to_string(t.meta.id) + ": bad shape for " + name);
        for (float v : img.data)
            if (!(v >= 0.0f && v <= 1.0f))
                throw std::runtime_error(std::string("tuple ") + std::to_string(t.meta.id) + ": " + name +
                                         " outside [0,1]");
    };
    check(t.x_a, 3, "x_a");
    check(t.m, 1, "m");
    check(t.y_b, 3, "y_b");
    check(t.x_b, 3, "x_b");
    check(t.z_thumb, 3, "z_thumb");
    const std::size_t plane = t.m.plane();
    for (std::size_t p = 0; p < plane; ++p) {
        if (t.m.data[p] != 0.0f) continue;
        for (int c = 0; c < 3; ++c)
            if (t.x_b.data[c * plane + p] != t.y_b.data[c * plane + p])
                throw std::runtime_error("tuple " + std::to_string(t.meta.id) +
                                         ": target differs from background outside the mask");
    }
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finaliser over the combined words
    std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

EnvMap generate_envmap(const EnvGenConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double amb = uniform(rng, cfg.ambient);
    Rgb sky, ground;
    for (int c = 0; c < 3; ++c) sky[c] = amb * uniform(rng, {0.7, 1.3});
    const double ground_scale = uniform(rng, {0.3, 0.8});
    for (int c = 0; c < 3; ++c) ground[c] = sky[c] * ground_scale * uniform(rng, {0.8, 1.2});

    struct Lobe {
        Vec3 dir;
        Rgb color;
        double peak, halo, inv_core, inv_halo;
    };
    std::vector<Lobe> lobes;
    const int count = std::uniform_int_distribution<int>(cfg.min_blobs, cfg.max_blobs)(rng);
    for (int k = 0; k < count; ++k) {
        const double phi = uniform(rng, cfg.azimuth);
        const double sy = uniform(rng, cfg.elevation);
        const double cy = std::sqrt(1.0 - sy * sy);
        Lobe l;
        l.dir = {cy * std::sin(phi), sy, cy * std::cos(phi)};
        const double warm = uniform(rng, {-0.25, 0.25});
        l.color = {1.0 + warm, 1.0, 1.0 - warm};
        // later lobes are dimmer so one light dominates
        const double rank = 1.0 / (1.0 + k);
        l.peak = uniform(rng, cfg.peak) * rank;
        l.halo = uniform(rng, cfg.halo) * rank;
        const double sigma = uniform(rng, cfg.sharpness);
        l.inv_core = 1.0 / (sigma * sigma);
        l.inv_halo = 1.0 / 0.45;
        lobes.push_back(l);
    }

    const int h = cfg.height, w = 2 * h;
    Image img(3, h, w);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const Vec3 d = equirect_to_dir(u + 0.5, v + 0.5, h, w);
            const double t = std::clamp((d[1] + 0.15) / 0.3, 0.0, 1.0);
            const double blend = t * t * (3.0 - 2.0 * t);
            Rgb rad;
            for (int c = 0; c < 3; ++c) rad[c] = ground[c] + (sky[c] - ground[c]) * blend;
            for (const Lobe& l : lobes) {
                const double cd = dot(d, l.dir);
                const double g = l.peak * std::exp((cd - 1.0) * l.inv_core) + l.halo * std::exp((cd - 1.0) * l.inv_halo);
                for (int c = 0; c < 3; ++c) rad[c] += g * l.color[c];
            }
            for (int c = 0; c < 3; ++c) img.at(c, v, u) = static_cast<float>(rad[c]);
        }
    return EnvMap(std::move(img));
}

SubjectSpec generate_subject(int subject_id, std::uint64_t seed, const std::vector<Geometry>& geometries) {
    if (geometries.empty()) throw ContractError("generate_subject: no geometries configured");
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(subject_id)));
    SubjectSpec s;
    s.subject_id = subject_id;
    s.geometry = geometries[std::uniform_int_distribution<std::size_t>(0, geometries.size() - 1)(rng)];
    switch (s.geometry) {
        case Geometry::sphere:
            s.radius = uniform(rng, {0.45, 0.65});
            s.cx = uniform(rng, {-0.1, 0.1});
            s.cy = uniform(rng, {-0.1, 0.1});
            break;
        case Geometry::capsule:
            s.radius = uniform(rng, {0.3, 0.4});
            s.half_length = uniform(rng, {0.2, 0.35});
            s.cx = uniform(rng, {-0.1, 0.1});
            s.cy = uniform(rng, {-0.1, 0.1});
            break;
        case Geometry::bust:
            s.radius = uniform(rng, {0.26, 0.32});
            s.cx = uniform(rng, {-0.08, 0.08});
            s.cy = uniform(rng, {0.3, 0.4});
            break;
    }
    for (double& a : s.albedo) a = uniform(rng, {0.35, 0.9});
    s.specular_strength = uniform(rng, {0.0, 0.3});
    s.specular_exponent = uniform(rng, {8.0, 48.0});
    return s;
}

std::vector<SubjectSpec> subject_pool(const DatasetConfig& cfg) {
    std::vector<SubjectSpec> out;
    for (int i = 0; i < cfg.n_subjects; ++i) out.push_back(generate_subject(i, cfg.pool_seed, cfg.geometries));
    return out;
}

std::vector<EnvMap> env_pool(const DatasetConfig& cfg) {
    std::vector<EnvMap> out;
    for (int i = 0; i < cfg.n_envs; ++i)
        out.push_back(generate_envmap(cfg.env, mix_seed(cfg.pool_seed ^ 0xE5F00Dull, static_cast<std::uint64_t>(i))));
    return out;
}

TupleMeta sample_tuple_meta(const DatasetConfig& cfg, const std::vector<SubjectSpec>& subjects, int i,
                            std::uint64_t seed) {
    TupleMeta m;
    m.id = i;
    m.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(m.seed);
    m.subject = subjects[std::uniform_int_distribution<std::size_t>(0, subjects.size() - 1)(rng)];
    m.env_a = std::uniform_int_distribution<int>(0, cfg.n_envs - 1)(rng);
    m.env_b = std::uniform_int_distribution<int>(0, cfg.n_envs - 1)(rng);
    const int w = 2 * cfg.env.height;
    // rotations are whole texel shifts so metadata reproduces them exactly
    auto rot = [&] {
        return cfg.rotate_envs ? 2.0 * kPi * std::uniform_int_distribution<int>(0, w - 1)(rng) / w : 0.0;
    };
    m.rot_a = rot();
    m.rot_b = rot();
    m.crop.fov_deg = uniform(rng, cfg.fov_deg);
    m.crop.yaw = uniform(rng, cfg.yaw);
    m.crop.pitch = uniform(rng, cfg.pitch);
    m.crop.out_w = m.crop.out_h = cfg.size;
    return m;
}

TrainingTuple render_from_meta(const DatasetConfig& cfg, const std::vector<EnvMap>& envs, const TupleMeta& meta) {
    const EnvMap env_a = rotate_envmap(envs.at(meta.env_a), meta.rot_a);
    const EnvMap env_b = rotate_envmap(envs.at(meta.env_b), meta.rot_b);
    TrainingTuple t = render_tuple(meta.subject, env_a, env_b, meta.crop, cfg.size, meta.seed);
    t.meta = meta;
    return t;
}

// ---------------------------------------------------------------------------
// persistence

namespace {

json range_json(Range r) { return json::array({r.lo, r.hi}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json config_json(const DatasetConfig& c) {
    json geoms = json::array();
    for (Geometry g : c.geometries) geoms.push_back(to_string(g));
    return {{"size", c.size},
            {"n_subjects", c.n_subjects},
            {"n_envs", c.n_envs},
            {"pool_seed", c.pool_seed},
            {"fov_deg", range_json(c.fov_deg)},
            {"yaw", range_json(c.yaw)},
            {"pitch", range_json(c.pitch)},
            {"rotate_envs", c.rotate_envs},
            {"geometries", geoms},
            {"env",
             {{"height", c.env.height},
              {"min_blobs", c.env.min_blobs},
              {"max_blobs", c.env.max_blobs},
              {"ambient", range_json(c.env.ambient)},
              {"peak", range_json(c.env.peak)},
              {"halo", range_json(c.env.halo)},
              {"sharpness", range_json(c.env.sharpness)},
              {"elevation", range_json(c.env.elevation)},
              {"azimuth", range_json(c.env.azimuth)}}}};
}

DatasetConfig config_from(const json& j) {
    DatasetConfig c;
    c.size = j.at("size");
    c.n_subjects = j.at("n_subjects");
    c.n_envs = j.at("n_envs");
    c.pool_seed = j.at("pool_seed");
    c.fov_deg = range_from(j.at("fov_deg"));
    c.yaw = range_from(j.at("yaw"));
    c.pitch = range_from(j.at("pitch"));
    c.rotate_envs = j.at("rotate_envs");
    c.geometries.clear();
    for (const auto& g : j.at("geometries")) c.geometries.push_back(geometry_from_string(g));
    const json& e = j.at("env");
    c.env.height = e.at("height");
    c.env.min_blobs = e.at("min_blobs");
    c.env.max_blobs = e.at("max_blobs");
    c.env.ambient = range_from(e.at("ambient"));
    c.env.peak = range_from(e.at("peak"));
    c.env.halo = range_from(e.at("halo"));
    c.env.sharpness = range_from(e.at("sharpness"));
    c.env.elevation = range_from(e.at("elevation"));
    c.env.azimuth = range_from(e.at("azimuth"));
    return c;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, '\t')) out.push_back(cur);
    if (!line.empty() && line.back() == '\t') out.emplace_back();
    return out;
}

}  // namespace

json dataset_config_to_json(const DatasetConfig& c) { return config_json(c); }
DatasetConfig dataset_config_from_json(const json& j) { return config_from(j); }

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t file_hash(const fs::path& path, std::uint64_t h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a(buf.data(), buf.size(), h);
}

std::string manifest_header() {
    return "id\tsubject_id\tgeometry\tcx\tcy\tradius\thalf_length\talbedo_r\talbedo_g\talbedo_b\tspec_strength\t"
           "spec_exponent\tenv_a\trot_a\tenv_b\trot_b\tfov_deg\tyaw\tpitch\tseed\tx_a\tm\ty_b\tx_b\tz_thumb\tz_b\t"
           "content_hash\tprovenance";
}

std::string manifest_line(const ManifestRow& r) {
    const TupleMeta& m = r.meta;
    const SubjectSpec& s = m.subject;
    std::ostringstream o;
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, r.content_hash);
    o << m.id << '\t' << s.subject_id << '\t' << to_string(s.geometry) << '\t' << fmt_double(s.cx) << '\t'
      << fmt_double(s.cy) << '\t' << fmt_double(s.radius) << '\t' << fmt_double(s.half_length) << '\t'
      << fmt_double(s.albedo[0]) << '\t' << fmt_double(s.albedo[1]) << '\t' << fmt_double(s.albedo[2]) << '\t'
      << fmt_double(s.specular_strength) << '\t' << fmt_double(s.specular_exponent) << '\t' << m.env_a << '\t'
      << fmt_double(m.rot_a) << '\t' << m.env_b << '\t' << fmt_double(m.rot_b) << '\t' << fmt_double(m.crop.fov_deg)
      << '\t' << fmt_double(m.crop.yaw) << '\t' << fmt_double(m.crop.pitch) << '\t' << m.seed << '\t' << r.x_a
      << '\t' << r.m << '\t' << r.y_b << '\t' << r.x_b << '\t' << r.z_thumb << '\t' << r.z_b << '\t' << hash << '\t'
      << r.provenance;
    return o.str();
}

void write_dataset_config(const fs::path& root, const DatasetConfig& cfg) {
    std::ofstream out(root / "config.json");
    out << config_json(cfg).dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + (root / "config.json").string());
}

void write_tuple_files(const fs::path& root, const TrainingTuple& t, ManifestRow& row) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "t%05d", t.meta.id);
    const std::string s = stem;
    row.meta = t.meta;
    row.x_a = s + "_xa.png";
    row.m = s + "_m.png";
    row.y_b = s + "_yb.png";
    row.x_b = s + "_xb.png";
    row.z_thumb = s + "_zb.png";
    row.z_b = s + "_zb.envm";
    write_png(root / row.x_a, t.x_a);
    write_png(root / row.m, t.m);
    write_png(root / row.y_b, t.y_b);
    write_png(root / row.x_b, t.x_b);
    write_png(root / row.z_thumb, t.z_thumb);
    write_envm(root / row.z_b, t.z_b);
    std::uint64_t h = 14695981039346656037ull;
    for (const std::string* f : {&row.x_a, &row.m, &row.y_b, &row.x_b, &row.z_thumb, &row.z_b})
        h = file_hash(root / *f, h);
    row.content_hash = h;
}

void build_dataset(const DatasetConfig& cfg, int n_tuples, std::uint64_t seed, const fs::path& root) {
    if (n_tuples < 1) throw ContractError("build_dataset: n_tuples must be >= 1");
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw std::runtime_error("cannot create dataset directory " + root.string() + ": " + ec.message());
    write_dataset_config(root, cfg);

    const auto subjects = subject_pool(cfg);
    const auto envs = env_pool(cfg);
    std::ofstream manifest(root / "manifest.tsv");
    if (!manifest) throw std::runtime_error("cannot open " + (root / "manifest.tsv").string());
    manifest << manifest_header() << '\n';
    for (int i = 0; i < n_tuples; ++i) {
        const TrainingTuple t = render_from_meta(cfg, envs, sample_tuple_meta(cfg, subjects, i, seed));
        validate_tuple(t);
        ManifestRow row;
        write_tuple_files(root, t, row);
        manifest << manifest_line(row) << '\n';
    }
    if (!manifest) throw std::runtime_error("write failed: " + (root / "manifest.tsv").string());
}

Dataset open_dataset(const fs::path& root) {
    Dataset ds;
    ds.root = root;
    {
        std::ifstream in(root / "config.json");
        if (!in) throw std::runtime_error("missing dataset config: " + (root / "config.json").string());
        ds.config = config_from(json::parse(in));
    }
    std::ifstream in(root / "manifest.tsv");
    if (!in) throw std::runtime_error("missing manifest: " + (root / "manifest.tsv").string());
    std::string line;
    std::getline(in, line);
    if (line != manifest_header()) throw std::runtime_error("unexpected manifest header in " + root.string());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        if (f.size() != 28) throw std::runtime_error("malformed manifest row in " + root.string());
        ManifestRow r;
        TupleMeta& m = r.meta;
        SubjectSpec& s = m.subject;
        m.id = std::stoi(f[0]);
        s.subject_id = std::stoi(f[1]);
        s.geometry = geometry_from_string(f[2]);
        s.cx = std::stod(f[3]);
        s.cy = std::stod(f[4]);
        s.radius = std::stod(f[5]);
        s.half_length = std::stod(f[6]);
        s.albedo = {std::stod(f[7]), std::stod(f[8]), std::stod(f[9])};
        s.specular_strength = std::stod(f[10]);
        s.specular_exponent = std::stod(f[11]);
        m.env_a = std::stoi(f[12]);
        m.rot_a = std::stod(f[13]);
        m.env_b = std::stoi(f[14]);
        m.rot_b = std::stod(f[15]);
        m.crop.fov_deg = std::stod(f[16]);
        m.crop.yaw = std::stod(f[17]);
        m.crop.pitch = std::stod(f[18]);
        m.crop.out_w = m.crop.out_h = ds.config.size;
        m.seed = std::stoull(f[19]);
        r.x_a = f[20];
        r.m = f[21];
        r.y_b = f[22];
        r.x_b = f[23];
        r.z_thumb = f[24];
        r.z_b = f[25];
        r.content_hash = std::stoull(f[26], nullptr, 16);
        r.provenance = f[27];
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

TrainingTuple Dataset::load(std::size_t i) const {
    const ManifestRow& r = rows.at(i);
    TrainingTuple t;
    t.meta = r.meta;
    t.x_a = read_png(root / r.x_a);
    t.m = read_png(root / r.m);
    t.y_b = read_png(root / r.y_b);
    t.x_b = read_png(root / r.x_b);
    t.z_thumb = read_png(root / r.z_thumb);
    t.z_b = read_envm(root / r.z_b);
    return t;
}

std::size_t validate_dataset(const fs::path& root) {
    const Dataset ds = open_dataset(root);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        validate_tuple(ds.load(i));
        const ManifestRow& r = ds.rows[i];
        std::uint64_t h = 14695981039346656037ull;
        for (const std::string* f : {&r.x_a, &r.m, &r.y_b, &r.x_b, &r.z_thumb, &r.z_b}) h = file_hash(root / *f, h);
        if (h != r.content_hash) throw std::runtime_error("content hash mismatch for tuple " + std::to_string(r.meta.id));
    }
    return ds.size();
}

std::uint64_t manifest_hash(const fs::path& root) { return file_hash(root / "manifest.tsv"); }

}  // namespace relharm
