#include "relharm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace relharm {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(TrainStage s) {
    switch (s) {
        case TrainStage::stage1_bg: return "stage1-bg";
        case TrainStage::stage1_env: return "stage1-env";
        case TrainStage::stage1_uncond: return "stage1-uncond";
        case TrainStage::align: return "align";
        case TrainStage::finetune: return "finetune";
    }
    return "?";
}

TrainStage train_stage_from_string(const std::string& s) {
    for (TrainStage t : {TrainStage::stage1_bg, TrainStage::stage1_env, TrainStage::stage1_uncond, TrainStage::align,
                         TrainStage::finetune})
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown training stage: " + s);
}

std::vector<std::string> StageConfig::trainable_groups() const {
    switch (stage) {
        case TrainStage::stage1_bg: return {"unet", "branch", "f_bg"};
        case TrainStage::stage1_env: return {"unet", "branch", "f_env"};
        case TrainStage::stage1_uncond: return {"unet"};
        case TrainStage::align: return {"align"};
        case TrainStage::finetune: return {"unet"};
    }
    return {};
}

json stage_config_to_json(const StageConfig& c) {
    return {{"stage", to_string(c.stage)},
            {"dataset", c.dataset},
            {"synth_dataset", c.synth_dataset},
            {"mix", {{"lightstage", c.mix_lightstage}, {"synth", c.mix_synth}}},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"seed", c.seed},
            {"checkpoint", {{"every", c.checkpoint_every}, {"path", c.checkpoint_path}, {"resume", c.resume}}},
            {"loss_log", c.loss_log},
            {"inputs", {{"bg", c.bg_checkpoint}, {"env", c.env_checkpoint}, {"final", c.final_checkpoint}}},
            {"model", to_json(c.model)},
            {"trainable", c.trainable_groups()}};
}

StageConfig stage_config_from_json(const json& j) {
    StageConfig c;
    if (j.contains("stage")) c.stage = train_stage_from_string(j.at("stage"));
    c.dataset = j.value("dataset", c.dataset);
    c.synth_dataset = j.value("synth_dataset", c.synth_dataset);
    if (j.contains("mix")) {
        c.mix_lightstage = j.at("mix").value("lightstage", c.mix_lightstage);
        c.mix_synth = j.at("mix").value("synth", c.mix_synth);
    }
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    if (j.contains("checkpoint")) {
        const json& k = j.at("checkpoint");
        c.checkpoint_every = k.value("every", c.checkpoint_every);
        c.checkpoint_path = k.value("path", c.checkpoint_path);
        c.resume = k.value("resume", c.resume);
    }
    c.loss_log = j.value("loss_log", c.loss_log);
    if (j.contains("inputs")) {
        const json& k = j.at("inputs");
        c.bg_checkpoint = k.value("bg", c.bg_checkpoint);
        c.env_checkpoint = k.value("env", c.env_checkpoint);
        c.final_checkpoint = k.value("final", c.final_checkpoint);
    }
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("trainable")) {
        const auto listed = j.at("trainable").get<std::vector<std::string>>();
        if (listed != c.trainable_groups())
            throw std::invalid_argument("config: trainable set does not match stage " + to_string(c.stage));
    }
    if (c.steps < 0 || c.batch_size < 1 || !(c.lr > 0.0)) throw std::invalid_argument("config: bad steps/batch/lr");
    return c;
}

StageConfig load_stage_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    return stage_config_from_json(json::parse(in, nullptr, true, /*ignore_comments=*/true));
}

// ---------------------------------------------------------------------------

Sample make_sample(const TrainingTuple& t) {
    auto signed_values = [](const Image& img) {
        std::vector<float> v(img.data);
        for (float& x : v) x = x * 2.0f - 1.0f;
        return v;
    };
    return {signed_values(t.x_a), t.m.data, signed_values(t.y_b), signed_values(t.z_thumb), signed_values(t.x_b)};
}

TrainingData to_training_data(const std::vector<TrainingTuple>& tuples) {
    TrainingData d;
    if (!tuples.empty()) d.size = tuples.front().x_b.height;
    for (const auto& t : tuples) d.samples.push_back(make_sample(t));
    return d;
}

TrainingData load_training_data(const fs::path& root) {
    const Dataset ds = open_dataset(root);
    TrainingData d;
    d.size = ds.config.size;
    for (std::size_t i = 0; i < ds.size(); ++i) d.samples.push_back(make_sample(ds.load(i)));
    return d;
}

Batch make_batch(const std::vector<const Sample*>& samples, int size) {
    const int n = static_cast<int>(samples.size());
    auto stack = [&](auto member, int ch) {
        std::vector<float> v;
        v.reserve(static_cast<std::size_t>(n) * ch * size * size);
        for (const Sample* s : samples) v.insert(v.end(), (s->*member).begin(), (s->*member).end());
        return nn::Tensor<float>::from({n, ch, size, size}, std::move(v));
    };
    return {stack(&Sample::x_a, 3), stack(&Sample::m, 1), stack(&Sample::y_b, 3), stack(&Sample::z_thumb, 3),
            stack(&Sample::x_b, 3)};
}

MixedBatchSampler::MixedBatchSampler(std::size_t pool0, std::size_t pool1, double ratio0, double ratio1,
                                     std::uint64_t seed)
    : sizes_{pool0, pool1}, p0_(ratio0 / (ratio0 + ratio1)), rng_(seed) {
    if (!(ratio0 >= 0.0 && ratio1 >= 0.0 && ratio0 + ratio1 > 0.0)) throw std::invalid_argument("mix ratio");
    if ((ratio0 > 0.0 && pool0 == 0) || (ratio1 > 0.0 && pool1 == 0))
        throw std::invalid_argument("mixed sampler: empty pool with nonzero ratio");
}

std::vector<MixedBatchSampler::Pick> MixedBatchSampler::next(int batch_size) {
    std::vector<Pick> out;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int i = 0; i < batch_size; ++i) {
        const int pool = coin(rng_) < p0_ ? 0 : 1;
        out.push_back({pool, std::uniform_int_distribution<std::size_t>(0, sizes_[pool] - 1)(rng_)});
    }
    return out;
}

// ---------------------------------------------------------------------------

nn::Tensor<float> denoising_loss(const HarmonizerModel<float>& model, const NoiseSchedule& sched, const Batch& batch,
                                 LightingSource source, const std::vector<int>& t, const std::vector<float>& eps) {
    const nn::Shape shape = batch.x_b.shape();
    const std::size_t per = static_cast<std::size_t>(shape.c) * shape.plane();
    std::vector<float> x_t(shape.numel());
    for (int n = 0; n < shape.n; ++n) {
        const std::span<const float> x0(batch.x_b.data() + n * per, per);
        const std::span<const float> e(eps.data() + n * per, per);
        q_sample_ab(x0, sched.alpha_bar.at(t[n]), e, std::span<float>(x_t.data() + n * per, per));
    }
    const auto x_t_tensor = nn::Tensor<float>::from(shape, std::move(x_t));
    const auto feature = model.features(source, batch.y_b, batch.z_thumb);
    const auto eps_hat = model.predict_eps(x_t_tensor, t, batch.x_a, batch.m, feature);
    return nn::mse_loss(eps_hat, eps);
}

namespace {

using Clock = std::chrono::steady_clock;

nn::ParamList<float> group_params(const HarmonizerModel<float>& model, const std::string& group) {
    if (group == "unet") return model.unet_params();
    if (group == "branch") return model.branch_params();
    if (group == "f_bg") return model.f_bg_params();
    if (group == "f_env") return model.f_env_params();
    if (group == "align") return model.align_params();
    throw std::invalid_argument("unknown parameter group: " + group);
}

nn::ParamList<float> trainable_params(const HarmonizerModel<float>& model, const std::vector<std::string>& groups) {
    nn::set_trainable(model.all_params(), false);
    nn::ParamList<float> out;
    for (const auto& g : groups) {
        auto list = group_params(model, g);
        out.insert(out.end(), list.begin(), list.end());
    }
    nn::set_trainable(out, true);
    return out;
}

class LossLog {
public:
    explicit LossLog(const std::string& path) {
        if (path.empty()) return;
        const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
        out_.open(path, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open loss log: " + path);
        if (fresh) out_ << "step\tloss\tseconds\n";
    }
    void append(const LossRecord& r) {
        if (out_.is_open()) out_ << r.step << '\t' << r.loss << '\t' << r.seconds << '\n' << std::flush;
    }

private:
    std::ofstream out_;
};

std::vector<float> normal_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(normal(rng));
    return v;
}

StageTag tag_for(TrainStage s) {
    switch (s) {
        case TrainStage::stage1_bg:
        case TrainStage::stage1_uncond: return StageTag::stage1_bg;
        case TrainStage::stage1_env: return StageTag::stage1_env;
        case TrainStage::align: return StageTag::align;
        case TrainStage::finetune: return StageTag::finetuned;
    }
    return StageTag::stage1_bg;
}

// Shared optimisation loop: `step_loss(step, rng)` builds the loss graph.
template <class LossFn>
TrainResult optimise(HarmonizerModel<float>& model, const StageConfig& cfg, StageTag tag, LightingSource source,
                     std::int64_t start_step, const Checkpoint* resume, LossFn&& step_loss, const ProgressFn& progress) {
    const nn::ParamList<float> params = trainable_params(model, cfg.trainable_groups());
    nn::Adam<float> opt(params, {cfg.lr});
    if (resume) load_optimizer(*resume, opt);
    LossLog log(cfg.loss_log);
    TrainResult result;
    const auto t0 = Clock::now();

    auto make_checkpoint = [&](std::int64_t step) {
        Checkpoint c = snapshot(model, tag, step, cfg.seed);
        c.extra["lighting_source"] = to_string(source);
        c.extra["train_config"] = stage_config_to_json(cfg);
        store_optimizer(c, opt);
        return c;
    };

    for (std::int64_t step = start_step + 1; step <= cfg.steps; ++step) {
        std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
        const nn::Tensor<float> loss = step_loss(step, rng);
        const double value = loss.values()[0];
        if (!std::isfinite(value))
            throw TrainingAborted("non-finite loss at step " + std::to_string(step) + " (lr " + std::to_string(cfg.lr) +
                                  ")");
        opt.zero_grad();
        nn::backward(loss);
        opt.step();
        const LossRecord rec{step, value, std::chrono::duration<double>(Clock::now() - t0).count()};
        result.losses.push_back(rec);
        log.append(rec);
        if (progress) progress(rec);
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && !cfg.checkpoint_path.empty())
            save_checkpoint(cfg.checkpoint_path, make_checkpoint(step));
    }
    result.checkpoint = make_checkpoint(std::max<std::int64_t>(start_step, cfg.steps));
    nn::set_trainable(model.all_params(), true);
    return result;
}

std::vector<const Sample*> pick_uniform(const TrainingData& data, int n, std::mt19937_64& rng) {
    std::vector<const Sample*> out;
    std::uniform_int_distribution<std::size_t> pick(0, data.samples.size() - 1);
    for (int i = 0; i < n; ++i) out.push_back(&data.samples[pick(rng)]);
    return out;
}

std::vector<int> pick_timesteps(int n, int T, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dist(1, T);
    std::vector<int> t(n);
    for (int& v : t) v = dist(rng);
    return t;
}

void check_model_compatible(const ModelConfig& a, const ModelConfig& b, const char* what) {
    if (to_json(a.denoiser) != to_json(b.denoiser) || a.feature_channels != b.feature_channels)
        throw std::invalid_argument(std::string("incompatible checkpoints: ") + what);
}

}  // namespace

TrainResult train_stage1(const TrainingData& data, LightingSource source, const StageConfig& cfg,
                         const ProgressFn& progress) {
    if (data.samples.empty()) throw std::invalid_argument("train_stage1: empty dataset");
    if (data.size != cfg.model.denoiser.size) throw std::invalid_argument("train_stage1: dataset size != model size");
    StageConfig c = cfg;
    c.stage = source == LightingSource::environment ? TrainStage::stage1_env
              : source == LightingSource::none      ? TrainStage::stage1_uncond
                                                    : TrainStage::stage1_bg;
    if (source == LightingSource::aligned_background) throw std::invalid_argument("train_stage1: bad lighting source");

    std::optional<Checkpoint> resume;
    HarmonizerModel<float> model(c.model);
    std::int64_t start = 0;
    if (!c.resume.empty()) {
        resume = load_checkpoint(c.resume);
        check_model_compatible(resume->config, c.model, "resume");
        copy_params(*resume, model.all_params());
        start = resume->step;
    }
    const NoiseSchedule sched = c.model.make_noise_schedule();
    const std::size_t per = static_cast<std::size_t>(3) * data.size * data.size;
    return optimise(
        model, c, tag_for(c.stage), source, start, resume ? &*resume : nullptr,
        [&](std::int64_t, std::mt19937_64& rng) {
            const auto picks = pick_uniform(data, c.batch_size, rng);
            const auto t = pick_timesteps(c.batch_size, sched.T, rng);
            const auto eps = normal_vector(rng, per * c.batch_size);
            return denoising_loss(model, sched, make_batch(picks, data.size), source, t, eps);
        },
        progress);
}

namespace {

struct FeaturePairs {
    nn::Shape shape;  // of one feature
    std::vector<std::vector<float>> bg, env;
};

FeaturePairs compute_feature_pairs(const HarmonizerModel<float>& model, const TrainingData& data) {
    nn::NoGradGuard no_grad;
    FeaturePairs out;
    constexpr int chunk = 32;
    for (std::size_t i = 0; i < data.samples.size(); i += chunk) {
        std::vector<const Sample*> part;
        for (std::size_t j = i; j < std::min(data.samples.size(), i + chunk); ++j) part.push_back(&data.samples[j]);
        const Batch b = make_batch(part, data.size);
        const auto fb = model.f_bg(b.y_b), fe = model.f_env(b.z_thumb);
        out.shape = fb.shape();
        out.shape.n = 1;
        const std::size_t per = out.shape.numel();
        for (std::size_t k = 0; k < part.size(); ++k) {
            out.bg.emplace_back(fb.data() + k * per, fb.data() + (k + 1) * per);
            out.env.emplace_back(fe.data() + k * per, fe.data() + (k + 1) * per);
        }
    }
    return out;
}

}  // namespace

TrainResult train_align(const TrainingData& data, const Checkpoint& bg_ckpt, const Checkpoint& env_ckpt,
                        const StageConfig& cfg, const ProgressFn& progress) {
    if (data.samples.empty()) throw std::invalid_argument("train_align: empty dataset");
    check_model_compatible(bg_ckpt.config, env_ckpt.config, "bg vs env model");
    StageConfig c = cfg;
    c.stage = TrainStage::align;
    c.model = env_ckpt.config;

    HarmonizerModel<float> model = restore_model(env_ckpt);
    copy_params(bg_ckpt, model.f_bg_params());
    std::optional<Checkpoint> resume;
    std::int64_t start = 0;
    if (!c.resume.empty()) {
        resume = load_checkpoint(c.resume);
        copy_params(*resume, model.align_params());
        start = resume->step;
    }
    const FeaturePairs pairs = compute_feature_pairs(model, data);
    return optimise(
        model, c, StageTag::align, LightingSource::aligned_background, start, resume ? &*resume : nullptr,
        [&](std::int64_t, std::mt19937_64& rng) {
            std::uniform_int_distribution<std::size_t> pick(0, pairs.bg.size() - 1);
            std::vector<float> in, target;
            for (int i = 0; i < c.batch_size; ++i) {
                const std::size_t k = pick(rng);
                in.insert(in.end(), pairs.bg[k].begin(), pairs.bg[k].end());
                target.insert(target.end(), pairs.env[k].begin(), pairs.env[k].end());
            }
            nn::Shape s = pairs.shape;
            s.n = c.batch_size;
            return nn::l1_loss(model.align(nn::Tensor<float>::from(s, std::move(in))), target);
        },
        progress);
}

Checkpoint assemble_final(const Checkpoint& env_unet_ckpt, const Checkpoint& bg_extractor_ckpt,
                          const Checkpoint& align_ckpt) {
    check_model_compatible(env_unet_ckpt.config, bg_extractor_ckpt.config, "denoiser vs extractor");
    check_model_compatible(env_unet_ckpt.config, align_ckpt.config, "denoiser vs align");
    HarmonizerModel<float> model = restore_model(env_unet_ckpt);
    copy_params(bg_extractor_ckpt, model.f_bg_params());
    copy_params(align_ckpt, model.align_params());
    Checkpoint c = snapshot(model, StageTag::final, 0, env_unet_ckpt.seed);
    c.extra["lighting_source"] = to_string(LightingSource::aligned_background);
    return c;
}

TrainResult train_finetune(const TrainingData& lightstage, const TrainingData& synth, const Checkpoint& final_ckpt,
                           const StageConfig& cfg, const ProgressFn& progress) {
    if (final_ckpt.stage != StageTag::final && final_ckpt.stage != StageTag::finetuned)
        throw std::invalid_argument("train_finetune: needs a final checkpoint");
    if (synth.samples.empty()) throw std::invalid_argument("train_finetune: empty synthesized dataset");
    StageConfig c = cfg;
    c.stage = TrainStage::finetune;
    c.model = final_ckpt.config;
    HarmonizerModel<float> model = restore_model(final_ckpt);
    std::optional<Checkpoint> resume;
    std::int64_t start = 0;
    if (!c.resume.empty()) {
        resume = load_checkpoint(c.resume);
        copy_params(*resume, model.unet_params());
        start = resume->step;
    }
    const NoiseSchedule sched = c.model.make_noise_schedule();
    const int size = c.model.denoiser.size;
    const std::size_t per = static_cast<std::size_t>(3) * size * size;
    return optimise(
        model, c, StageTag::finetuned, LightingSource::aligned_background, start, resume ? &*resume : nullptr,
        [&](std::int64_t step, std::mt19937_64& rng) {
            MixedBatchSampler mixer(lightstage.samples.size(), synth.samples.size(), c.mix_lightstage, c.mix_synth,
                                    mix_seed(c.seed ^ 0xF17E, static_cast<std::uint64_t>(step)));
            std::vector<const Sample*> picks;
            for (const auto& p : mixer.next(c.batch_size))
                picks.push_back(p.pool == 0 ? &lightstage.samples[p.index] : &synth.samples[p.index]);
            const auto t = pick_timesteps(c.batch_size, sched.T, rng);
            const auto eps = normal_vector(rng, per * c.batch_size);
            return denoising_loss(model, sched, make_batch(picks, size), LightingSource::aligned_background, t, eps);
        },
        progress);
}

AlignmentReport alignment_l1(const HarmonizerModel<float>& model, const TrainingData& data) {
    const FeaturePairs pairs = compute_feature_pairs(model, data);
    nn::NoGradGuard no_grad;
    AlignmentReport r;
    double n = 0;
    for (std::size_t k = 0; k < pairs.bg.size(); ++k) {
        const auto aligned = model.align(nn::Tensor<float>::from(pairs.shape, pairs.bg[k]));
        for (std::size_t i = 0; i < pairs.env[k].size(); ++i) {
            r.aligned_l1 += std::abs(aligned.data()[i] - pairs.env[k][i]);
            r.baseline_l1 += std::abs(pairs.bg[k][i] - pairs.env[k][i]);
        }
        n += static_cast<double>(pairs.env[k].size());
    }
    if (n > 0) {
        r.aligned_l1 /= n;
        r.baseline_l1 /= n;
    }
    return r;
}

Checkpoint run_training_job(const StageConfig& cfg, const fs::path& out, const ProgressFn& progress) {
    auto need = [](const std::string& path, const char* what) {
        if (path.empty() || !fs::exists(path))
            throw std::runtime_error(std::string("missing ") + what + " checkpoint: " + (path.empty() ? "<unset>" : path));
        return load_checkpoint(path);
    };
    StageConfig c = cfg;
    if (c.checkpoint_path.empty()) c.checkpoint_path = out.string();
    TrainResult r;
    switch (c.stage) {
        case TrainStage::stage1_bg:
            r = train_stage1(load_training_data(c.dataset), LightingSource::background, c, progress);
            break;
        case TrainStage::stage1_env:
            r = train_stage1(load_training_data(c.dataset), LightingSource::environment, c, progress);
            break;
        case TrainStage::stage1_uncond:
            r = train_stage1(load_training_data(c.dataset), LightingSource::none, c, progress);
            break;
        case TrainStage::align: {
            const Checkpoint bg = need(c.bg_checkpoint, "background model");
            const Checkpoint env = need(c.env_checkpoint, "environment model");
            r = train_align(load_training_data(c.dataset), bg, env, c, progress);
            break;
        }
        case TrainStage::finetune: {
            const Checkpoint fin = need(c.final_checkpoint, "final model");
            r = train_finetune(load_training_data(c.dataset), load_training_data(c.synth_dataset), fin, c, progress);
            break;
        }
    }
    save_checkpoint(out, r.checkpoint);
    return r.checkpoint;
}

}  // namespace relharm
