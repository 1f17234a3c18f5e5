#include "relharm/harmoneval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "relharm/metrics.hpp"

namespace relharm {

namespace {

nn::Tensor<float> as_tensor(const Image& img, bool signed_range) {
    std::vector<float> v(img.data);
    if (signed_range)
        for (float& x : v) x = x * 2.0f - 1.0f;
    return nn::Tensor<float>::from({1, img.channels, img.height, img.width}, std::move(v));
}

Image fit(const Image& img, int size) {
    if (img.height == size && img.width == size) return img;
    return resize_bilinear(img, size, size);
}

}  // namespace

Image harmonize_composite(const HarmonizerModel<float>& model, const NoiseSchedule& sched, const Image& x_a,
                          const Mask& m, const Conditioning& cond, const SamplerParams& params) {
    const int s = model.config.denoiser.size;
    if (x_a.channels != 3 || x_a.height != s || x_a.width != s) throw ShapeError("harmonize: composite size");
    if (m.channels != 1 || m.height != s || m.width != s) throw ShapeError("harmonize: mask size");
    nn::NoGradGuard no_grad;
    nn::Tensor<float> bg, env;
    if (!cond.background.empty()) bg = as_tensor(fit(cond.background, s), true);
    if (!cond.env_thumb.empty()) env = as_tensor(fit(cond.env_thumb, s), true);
    const auto feature = model.features(cond.source, bg, env);
    const auto out = sample(model, sched, as_tensor(x_a, true), as_tensor(m, false), feature, params);
    Image img(3, s, s);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = std::clamp((out.data()[i] + 1.0f) * 0.5f, 0.0f, 1.0f);
    return img;
}

Harmonizer::Harmonizer(Checkpoint ckpt) : ckpt_(std::move(ckpt)) {
    if (ckpt_.stage != StageTag::final && ckpt_.stage != StageTag::finetuned) {
        const std::string need = ckpt_.stage == StageTag::stage1_env ? " (it needs an environment map)" : "";
        throw StageMismatch("checkpoint stage " + to_string(ckpt_.stage) +
                            " cannot harmonize from a background; use a final or finetuned checkpoint" + need);
    }
    model_ = restore_model(ckpt_);
    sched_ = model_.config.make_noise_schedule();
}

Image Harmonizer::operator()(const Image& fg, const Mask& alpha, const Image& bg, const SamplerParams& params) const {
    if (fg.channels != 3 || bg.channels != 3 || alpha.channels != 1) throw ShapeError("harmonize: channel count");
    for (float a : alpha.data)
        if (!(a >= 0.0f && a <= 1.0f)) throw ContractError("harmonize: alpha outside [0,1]");
    const int s = size();
    const Image f = fit(fg, s), b = fit(bg, s);
    const Mask m = fit(alpha, s);
    return harmonize_composite(model_, sched_, composite(f, m, b), m, {LightingSource::aligned_background, b, {}},
                               params);
}

Image harmonize(const HarmonizeRequest& req) {
    const Harmonizer h(load_checkpoint(req.checkpoint));
    return h(req.fg, req.alpha, req.bg, req.sampler);
}

// ---------------------------------------------------------------------------

EvalRow score_prediction(const Image& pred, const TrainingTuple& t) {
    EvalRow r;
    r.sample_id = std::to_string(t.meta.id);
    r.mse = mse(pred, t.x_b);
    r.psnr_db = psnr_from_mse(r.mse);
    r.ssim = ssim(pred, t.x_b);
    r.fg_mse = masked_mse(pred, t.x_b, t.m);
    r.fg_psnr_db = psnr_from_mse(r.fg_mse);
    const std::size_t plane = t.m.plane();
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        if (t.m.data[p] != 0.0f) continue;
        for (int c = 0; c < 3; ++c) s += std::abs(pred.data[c * plane + p] - t.y_b.data[c * plane + p]);
        n += 3;
    }
    r.bg_mad = n ? s / static_cast<double>(n) : 0.0;
    return r;
}

EvalReport summarize(std::vector<EvalRow> rows) {
    EvalReport rep;
    auto stat = [&](double EvalRow::*field) {
        Stat st;
        if (rows.empty()) return st;
        for (const auto& r : rows) st.mean += r.*field;
        st.mean /= static_cast<double>(rows.size());
        for (const auto& r : rows) st.std += (r.*field - st.mean) * (r.*field - st.mean);
        st.std = std::sqrt(st.std / static_cast<double>(rows.size()));
        return st;
    };
    rep.mse = stat(&EvalRow::mse);
    rep.psnr_db = stat(&EvalRow::psnr_db);
    rep.ssim = stat(&EvalRow::ssim);
    rep.fg_mse = stat(&EvalRow::fg_mse);
    rep.fg_psnr_db = stat(&EvalRow::fg_psnr_db);
    rep.bg_mad = stat(&EvalRow::bg_mad);
    rep.rows = std::move(rows);
    return rep;
}

EvalReport evaluate(const HarmonizerModel<float>& model, LightingSource source,
                    const std::vector<TrainingTuple>& test_set, const SamplerParams& params) {
    const NoiseSchedule sched = model.config.make_noise_schedule();
    std::vector<EvalRow> rows;
    rows.reserve(test_set.size());
    for (const TrainingTuple& t : test_set) {
        SamplerParams p = params;
        p.seed = mix_seed(params.seed, static_cast<std::uint64_t>(t.meta.id));
        const Image pred = harmonize_composite(model, sched, t.x_a, t.m, {source, t.y_b, t.z_thumb}, p);
        rows.push_back(score_prediction(pred, t));
    }
    EvalReport rep = summarize(std::move(rows));
    Checkpoint probe;
    probe.config = model.config;
    rep.config_hash = probe.config_hash();
    rep.source = to_string(source);
    return rep;
}

void write_report_tsv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << "sample_id\tmse\tpsnr_db\tssim\tlpips\tfg_mse\tfg_psnr_db\tbg_mad\n";
    char buf[256];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%s\t%.8g\t%.6f\t%.6f\tn/a\t%.8g\t%.6f\t%.6f\n", r.sample_id.c_str(), r.mse,
                      r.psnr_db, r.ssim, r.fg_mse, r.fg_psnr_db, r.bg_mad);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string format_report(const EvalReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "samples      %zu\n"
                  "source       %s\n"
                  "config hash  %016llx\n"
                  "MSE          %.5f (%.5f)\n"
                  "PSNR [dB]    %.3f (%.3f)\n"
                  "SSIM         %.4f (%.4f)\n"
                  "LPIPS        n/a\n"
                  "fg MSE       %.5f (%.5f)\n"
                  "fg PSNR [dB] %.3f (%.3f)\n"
                  "bg |diff|    %.4f (%.4f)\n",
                  r.rows.size(), r.source.c_str(), static_cast<unsigned long long>(r.config_hash), r.mse.mean,
                  r.mse.std, r.psnr_db.mean, r.psnr_db.std, r.ssim.mean, r.ssim.std, r.fg_mse.mean, r.fg_mse.std,
                  r.fg_psnr_db.mean, r.fg_psnr_db.std, r.bg_mad.mean, r.bg_mad.std);
    return buf;
}

// ---------------------------------------------------------------------------

ProbeResult light_azimuth_probe(const Image& img, const Mask& m) {
    if (img.channels != 3 || m.channels != 1 || img.height != m.height || img.width != m.width)
        throw ShapeError("probe: image/mask shape");
    const double px = 2.0 / img.width, py = 2.0 / img.height;
    double cx = 0.0, cy = 0.0, n = 0.0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(0, y, x) > 0.5f) {
                cx += (x + 0.5) * px - 1.0;
                cy += 1.0 - (y + 0.5) * py;
                n += 1.0;
            }
    if (n == 0.0) throw ContractError("probe: empty mask");
    cx /= n;
    cy /= n;
    const double radius = std::sqrt(n * px * py / kPi);

    struct Px {
        double b, nx, nz;
    };
    std::vector<Px> pts;
    double mean_b = 0.0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (m.at(0, y, x) <= 0.5f) continue;
            const double nx = std::clamp(((x + 0.5) * px - 1.0 - cx) / radius, -1.0, 1.0);
            const double ny = std::clamp((1.0 - (y + 0.5) * py - cy) / radius, -1.0, 1.0);
            const double nz = -std::sqrt(std::max(0.0, 1.0 - nx * nx - ny * ny));
            const double b = 0.2126 * img.at(0, y, x) + 0.7152 * img.at(1, y, x) + 0.0722 * img.at(2, y, x);
            pts.push_back({b, nx, nz});
            mean_b += b;
        }
    mean_b /= n;
    double dx = 0.0, dz = 0.0;
    for (const Px& p : pts) {
        dx += (p.b - mean_b) * p.nx;
        dz += (p.b - mean_b) * p.nz;
    }
    dx /= n;
    dz /= n;
    ProbeResult r;
    r.strength = std::hypot(dx, dz);
    r.lateral = dx;
    r.directional = r.strength >= kProbeThreshold;
    r.azimuth = r.directional ? std::atan2(dx, -dz) : 0.0;
    return r;
}

bool strongly_directional(const ProbeResult& p) { return p.directional && std::abs(std::sin(p.azimuth)) >= 0.5; }

FlipReport flip_consistency(const Harmonizer& h, const std::vector<FlipCase>& cases, const SamplerParams& params) {
    FlipReport rep;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const FlipCase& c = cases[i];
        SamplerParams p = params;
        p.seed = mix_seed(params.seed, i);
        const Image out = h(c.fg, c.m, c.bg, p);
        const Image out_f = h(c.fg, c.m, flip_horizontal(c.bg), p);
        const Mask m = c.m.height == h.size() ? c.m : resize_bilinear(c.m, h.size(), h.size());
        FlipOutcome o{c.id, light_azimuth_probe(out, m), light_azimuth_probe(out_f, m), false};
        o.consistent = o.normal.directional && o.flipped.directional && o.normal.lateral * o.flipped.lateral < 0.0;
        rep.consistent += o.consistent;
        rep.cases.push_back(std::move(o));
    }
    rep.rate = cases.empty() ? 0.0 : static_cast<double>(rep.consistent) / static_cast<double>(cases.size());
    return rep;
}

std::vector<FlipCase> flip_cases_from(const std::vector<TrainingTuple>& test_set) {
    std::vector<FlipCase> out;
    for (const auto& t : test_set) {
        if (t.meta.subject.geometry != Geometry::sphere) continue;
        if (!strongly_directional(light_azimuth_probe(t.x_b, t.m))) continue;
        out.push_back({std::to_string(t.meta.id), t.x_a, t.m, t.y_b});
    }
    return out;
}

std::vector<FlipCase> lateral_light_cases(const DatasetConfig& cfg, int n, std::uint64_t seed) {
    EnvGenConfig lit = cfg.env;
    lit.min_blobs = lit.max_blobs = 1;
    lit.azimuth = {0.45, 0.75};
    lit.elevation = {0.0, 0.3};
    EnvGenConfig ambient = lit;
    ambient.min_blobs = ambient.max_blobs = 0;
    const CropSpec view{80.0, 0.0, 0.0, cfg.size, cfg.size};
    const std::vector<Geometry> spheres{Geometry::sphere};

    std::vector<FlipCase> out;
    for (int k = 0; static_cast<int>(out.size()) < n; ++k) {
        if (k >= 50 * n) throw std::runtime_error("lateral_light_cases: too few directional cases");
        const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(k));
        EnvMap env = generate_envmap(lit, s);
        if (k % 2) env = env.mirrored();
        const SubjectSpec subject = generate_subject(k, s, spheres);
        const RenderResult target = render_subject(subject, env, cfg.size, view);
        if (!strongly_directional(light_azimuth_probe(target.fg, target.alpha))) continue;
        const RenderResult fg = render_subject(subject, generate_envmap(ambient, s), cfg.size, view);
        out.push_back({"lateral" + std::to_string(k), fg.fg, fg.alpha,
                       quantize8(tonemap_ldr(project_to_background(env, view)))});
    }
    return out;
}

}  // namespace relharm
