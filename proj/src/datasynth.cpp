#include "relharm/datasynth.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "relharm/harmoneval.hpp"

namespace relharm {

namespace fs = std::filesystem;

std::string to_string(RelightCondition::Kind k) {
    return k == RelightCondition::Kind::environment ? "env" : "bg";
}

RelightCondition draw_condition(const EnvGenConfig& env_cfg, const CropSpec& crop, int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RelightCondition c;
    c.seed = seed;
    c.kind = std::bernoulli_distribution(0.5)(rng) ? RelightCondition::Kind::environment
                                                    : RelightCondition::Kind::background;
    c.env = generate_envmap(env_cfg, rng());
    CropSpec view = crop;
    view.out_w = view.out_h = size;
    c.background = quantize8(tonemap_ldr(project_to_background(c.env, view)));
    c.env_thumb = quantize8(env_thumbnail(c.env, size));
    return c;
}

Relighter model_relighter(const Checkpoint& ckpt, int steps) {
    auto harmonizer = std::make_shared<const Harmonizer>(ckpt);
    return [harmonizer, steps](const Image& x_a, const Mask& m, const RelightCondition& cond, const TupleMeta&,
                               std::uint64_t seed) {
        const HarmonizerModel<float>& model = harmonizer->model();
        const NoiseSchedule sched = model.config.make_noise_schedule();
        Conditioning c;
        c.source = cond.kind == RelightCondition::Kind::environment ? LightingSource::environment
                                                                    : LightingSource::aligned_background;
        c.background = cond.background;
        c.env_thumb = cond.env_thumb;
        return harmonize_composite(model, sched, x_a, m, c, {SamplerMode::ddim, steps, seed});
    };
}

Relighter simulator_relighter(int size) {
    return [size](const Image&, const Mask& m, const RelightCondition& cond, const TupleMeta& scene, std::uint64_t) {
        CropSpec view = scene.crop;
        view.out_w = view.out_h = size;
        const RenderResult r = render_subject(scene.subject, cond.env, size, view);
        return composite(r.fg, m, cond.background);
    };
}

CleanBackgrounds::CleanBackgrounds(const Dataset& scenes) : cfg_(scenes.config), envs_(env_pool(scenes.config)) {}

Image CleanBackgrounds::operator()(const TupleMeta& scene) const {
    if (scene.env_b < 0 || scene.env_b >= static_cast<int>(envs_.size()))
        throw ContractError("missing scene metadata for scene " + std::to_string(scene.id));
    CropSpec view = scene.crop;
    view.out_w = view.out_h = cfg_.size;
    return quantize8(tonemap_ldr(project_to_background(rotate_envmap(envs_[scene.env_b], scene.rot_b), view)));
}

double masked_mean_abs_diff(const Image& a, const Image& b, const Mask& m) {
    require_same_shape(a, b, "masked_mean_abs_diff");
    const std::size_t plane = m.plane();
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        if (m.data[p] <= 0.5f) continue;
        for (int c = 0; c < a.channels; ++c) s += std::abs(a.data[c * plane + p] - b.data[c * plane + p]);
        n += a.channels;
    }
    return n ? s / static_cast<double>(n) : 0.0;
}

RelightResult relight_input(const Image& real, const Mask& m, const Image& clean_bg, const TupleMeta& scene,
                            const Relighter& relighter, const std::function<RelightCondition(int)>& draw,
                            std::uint64_t seed) {
    require_same_shape(real, clean_bg, "relight_input");
    RelightResult r;
    for (int k = 0; k < kMaxRelightAttempts; ++k) {
        RelightCondition cond = draw(k);
        const Image x_a = composite(real, m, cond.background);
        const Image relit = relighter(x_a, m, cond, scene, mix_seed(seed, static_cast<std::uint64_t>(k)));
        for (float v : relit.data)
            if (!std::isfinite(v)) throw std::runtime_error("relight: model produced non-finite output");
        Image input = quantize8(composite(relit, m, clean_bg));
        const double diff = masked_mean_abs_diff(input, real, m);
        if (diff > kMinRelightDiff) {
            r.input = std::move(input);
            r.cond = std::move(cond);
            r.attempts = k + 1;
            r.fg_diff = diff;
            return r;
        }
    }
    throw std::runtime_error("relight: no candidate differed from the source after " +
                             std::to_string(kMaxRelightAttempts) + " attempts (scene " + std::to_string(scene.id) +
                             ")");
}

void build_synth_dataset(const fs::path& scenes_root, const Relighter& relighter, const SynthOptions& opt,
                         const fs::path& out_root) {
    if (opt.n < 1) throw ContractError("build_synth_dataset: n must be >= 1");
    const Dataset scenes = open_dataset(scenes_root);
    if (scenes.size() == 0) throw ContractError("build_synth_dataset: no source scenes");
    const CleanBackgrounds clean(scenes);

    std::error_code ec;
    fs::create_directories(out_root, ec);
    if (ec) throw std::runtime_error("cannot create dataset directory " + out_root.string() + ": " + ec.message());
    write_dataset_config(out_root, scenes.config);
    std::ofstream manifest(out_root / "manifest.tsv");
    if (!manifest) throw std::runtime_error("cannot open " + (out_root / "manifest.tsv").string());
    manifest << manifest_header() << '\n';

    for (int i = 0; i < opt.n; ++i) {
        const std::size_t src = static_cast<std::size_t>(i) % scenes.size();
        const TrainingTuple real = scenes.load(src);
        const Image bg = clean(real.meta);
        const std::uint64_t pair_seed = mix_seed(opt.seed, static_cast<std::uint64_t>(i));
        auto draw = [&](int k) {
            return draw_condition(scenes.config.env, real.meta.crop, scenes.config.size,
                                  mix_seed(pair_seed, 0x100 + static_cast<std::uint64_t>(k)));
        };
        const RelightResult rel = relight_input(real.x_b, real.m, bg, real.meta, relighter, draw, pair_seed);

        TrainingTuple t;
        t.x_a = rel.input;
        t.m = real.m;
        t.y_b = bg;
        t.x_b = real.x_b;
        t.z_b = real.z_b;
        t.z_thumb = real.z_thumb;
        t.meta = real.meta;
        t.meta.id = i;
        validate_tuple(t);

        ManifestRow row;
        write_tuple_files(out_root, t, row);
        char prov[160];
        std::snprintf(prov, sizeof prov, "real=%d;cond=%s:%016" PRIx64 ";model=%s;attempts=%d", real.meta.id,
                      to_string(rel.cond.kind).c_str(), rel.cond.seed, opt.relighter_id.c_str(), rel.attempts);
        row.provenance = prov;
        manifest << manifest_line(row) << '\n';
    }
    if (!manifest) throw std::runtime_error("write failed: " + (out_root / "manifest.tsv").string());
}

}  // namespace relharm
