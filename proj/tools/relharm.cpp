// Command-line front end: dataset generation, training stages, synthesis,
// inference, evaluation and probes.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "relharm/datasynth.hpp"
#include "relharm/harmoneval.hpp"
#include "relharm/lightcond/features.hpp"
#include "relharm/trainer.hpp"

using namespace relharm;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in, nullptr, true, true);
}

std::string hex(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

void print_loss(const LossRecord& r) {
    if (r.step % 50 == 0) std::fprintf(stderr, "step %6" PRId64 "  loss %.5f  %.1fs\n", r.step, r.loss, r.seconds);
}

TrainStage stage_from_cli(const std::string& s) { return train_stage_from_string(s); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lighting-aware portrait harmonization toolkit"};
    app.require_subcommand(1);

    // gen-data
    std::string data_cfg, out_dir;
    int n_tuples = 512;
    std::uint64_t seed = 0;
    bool dump = false;
    auto* gen = app.add_subcommand("gen-data", "Render a light-stage tuple dataset");
    gen->add_option("--config", data_cfg, "Dataset config (JSON)");
    gen->add_option("--n", n_tuples, "Number of tuples");
    gen->add_option("--seed", seed, "Sampling seed");
    gen->add_option("--out", out_dir, "Output directory");
    gen->add_flag("--dump-config", dump, "Print the default config and exit");

    std::string dataset_dir;
    auto* val = app.add_subcommand("validate", "Check a dataset's invariants and hashes");
    val->add_option("--dataset", dataset_dir)->required();

    // train
    std::string stage_name, train_cfg, out_path;
    auto* train = app.add_subcommand("train", "Run one training stage");
    train->add_option("--stage", stage_name)
        ->required()
        ->check(CLI::IsMember({"stage1-bg", "stage1-env", "stage1-uncond", "align", "finetune"}));
    train->add_option("--config", train_cfg, "Stage config (JSON)");
    train->add_option("--out", out_path, "Output checkpoint");
    train->add_flag("--dump-config", dump, "Print the effective config and exit");

    std::string unet_ckpt, extractor_ckpt, align_ckpt;
    auto* assemble = app.add_subcommand("assemble", "Combine stage checkpoints into the final model");
    assemble->add_option("--unet", unet_ckpt, "Environment-conditioned Stage I checkpoint")->required();
    assemble->add_option("--extractor", extractor_ckpt, "Background-conditioned Stage I checkpoint")->required();
    assemble->add_option("--align", align_ckpt, "Alignment checkpoint")->required();
    assemble->add_option("--out", out_path)->required();

    std::string ckpt_path, scenes_dir;
    int n_pairs = 200;
    auto* synth = app.add_subcommand("synth", "Build relit training pairs from held-out scenes");
    synth->add_option("--scenes", scenes_dir)->required();
    synth->add_option("--ckpt", ckpt_path)->required();
    synth->add_option("--n", n_pairs);
    synth->add_option("--seed", seed);
    synth->add_option("--out", out_dir)->required();

    std::string fg_path, mask_path, bg_path, mode = "ddim";
    int steps = 20;
    auto* harm = app.add_subcommand("harmonize", "Harmonize a foreground onto a background");
    harm->add_option("--fg", fg_path)->required();
    harm->add_option("--mask", mask_path)->required();
    harm->add_option("--bg", bg_path)->required();
    harm->add_option("--ckpt", ckpt_path)->required();
    harm->add_option("--seed", seed);
    harm->add_option("--steps", steps);
    harm->add_option("--mode", mode)->check(CLI::IsMember({"ddim", "ddpm"}));
    harm->add_option("--out", out_path)->required();

    std::string testset, source_name;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a test set");
    eval->add_option("--ckpt", ckpt_path)->required();
    eval->add_option("--testset", testset)->required();
    eval->add_option("--out", out_path, "Per-sample TSV")->required();
    eval->add_option("--source", source_name, "Lighting source (default: the checkpoint's)")
        ->check(CLI::IsMember({"none", "background", "aligned_background", "environment"}));
    eval->add_option("--seed", seed);
    eval->add_option("--steps", steps);

    auto* flip = app.add_subcommand("probe-flip", "Flip-consistency probe on sphere test cases");
    flip->add_option("--ckpt", ckpt_path)->required();
    flip->add_option("--testset", testset)->required();
    flip->add_option("--seed", seed);
    flip->add_option("--steps", steps);

    std::string image_path, kind = "bg", png_out, feat_out;
    auto* fmap = app.add_subcommand("feature-map", "Export a lighting feature and its norm map");
    fmap->add_option("--ckpt", ckpt_path)->required();
    fmap->add_option("--image", image_path, "Background PNG or environment thumbnail PNG")->required();
    fmap->add_option("--kind", kind)->check(CLI::IsMember({"bg", "env", "aligned"}));
    fmap->add_option("--png", png_out);
    fmap->add_option("--feat", feat_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            DatasetConfig cfg;
            if (!data_cfg.empty()) cfg = dataset_config_from_json(read_json(data_cfg));
            if (dump) {
                std::cout << dataset_config_to_json(cfg).dump(2) << '\n';
                return 0;
            }
            if (out_dir.empty()) throw std::invalid_argument("--out is required");
            build_dataset(cfg, n_tuples, seed, out_dir);
            std::cout << "wrote " << n_tuples << " tuples to " << out_dir << ", manifest " << hex(manifest_hash(out_dir))
                      << '\n';
        } else if (*val) {
            const std::size_t n = validate_dataset(dataset_dir);
            std::cout << "ok: " << n << " tuples\n";
        } else if (*train) {
            StageConfig cfg;
            if (!train_cfg.empty()) cfg = load_stage_config(train_cfg);
            cfg.stage = stage_from_cli(stage_name);
            if (dump) {
                std::cout << stage_config_to_json(cfg).dump(2) << '\n';
                return 0;
            }
            if (out_path.empty()) throw std::invalid_argument("--out is required");
            const Checkpoint c = run_training_job(cfg, out_path, print_loss);
            std::cout << "wrote " << out_path << " (stage " << to_string(c.stage) << ", step " << c.step << ")\n";
        } else if (*assemble) {
            const Checkpoint c =
                assemble_final(load_checkpoint(unet_ckpt), load_checkpoint(extractor_ckpt), load_checkpoint(align_ckpt));
            save_checkpoint(out_path, c);
            std::cout << "wrote " << out_path << '\n';
        } else if (*synth) {
            const Checkpoint c = load_checkpoint(ckpt_path);
            build_synth_dataset(scenes_dir, model_relighter(c), {n_pairs, seed, hex(file_hash(ckpt_path))}, out_dir);
            std::cout << "wrote " << n_pairs << " pairs to " << out_dir << ", manifest " << hex(manifest_hash(out_dir))
                      << '\n';
        } else if (*harm) {
            HarmonizeRequest req{read_png(fg_path), read_png(mask_path), read_png(bg_path), ckpt_path,
                                 {sampler_mode_from_string(mode), steps, seed}};
            if (req.alpha.channels != 1) throw std::invalid_argument("mask must be a single-channel PNG");
            write_png(out_path, harmonize(req));
        } else if (*eval) {
            const Checkpoint c = load_checkpoint(ckpt_path);
            LightingSource src = source_name.empty()
                                     ? lighting_source_from_string(c.extra.value("lighting_source", to_string(default_source(c.stage))))
                                     : lighting_source_from_string(source_name);
            const Dataset ds = open_dataset(testset);
            std::vector<TrainingTuple> tuples;
            for (std::size_t i = 0; i < ds.size(); ++i) tuples.push_back(ds.load(i));
            const EvalReport rep = evaluate(restore_model(c), src, tuples, {SamplerMode::ddim, steps, seed});
            write_report_tsv(rep, out_path);
            std::cout << format_report(rep);
        } else if (*flip) {
            const Dataset ds = open_dataset(testset);
            std::vector<TrainingTuple> tuples;
            for (std::size_t i = 0; i < ds.size(); ++i) tuples.push_back(ds.load(i));
            const auto cases = flip_cases_from(tuples);
            const FlipReport rep = flip_consistency(Harmonizer(load_checkpoint(ckpt_path)), cases,
                                                    {SamplerMode::ddim, steps, seed});
            std::printf("case\tazimuth\tazimuth_flipped\tconsistent\n");
            for (const auto& o : rep.cases)
                std::printf("%s\t%.3f\t%.3f\t%d\n", o.id.c_str(), o.normal.azimuth, o.flipped.azimuth, o.consistent);
            std::printf("consistent %d / %zu (%.1f%%)\n", rep.consistent, rep.cases.size(), 100.0 * rep.rate);
        } else if (*fmap) {
            const HarmonizerModel<float> model = restore_model(load_checkpoint(ckpt_path));
            const int s = model.config.denoiser.size;
            Image img = read_png(image_path);
            if (img.height != s || img.width != s) img = resize_bilinear(img, s, s);
            const auto x = nn::Tensor<float>::from({1, 3, s, s}, to_signed(img).data);
            nn::NoGradGuard no_grad;
            const auto f = kind == "env"   ? model.f_env(x)
                           : kind == "bg"  ? model.f_bg(x)
                                           : model.align(model.f_bg(x));
            if (!png_out.empty()) write_png(png_out, feature_norm_map(f));
            if (!feat_out.empty()) write_feature(feat_out, f);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
