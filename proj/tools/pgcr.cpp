// Command-line front end: data generation, pretraining, adversarial
// fine-tuning, evaluation, inference, and gradient verification.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
// The PGCR_SEED environment variable overrides the config-file seed; an
// explicit --seed flag overrides both.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "pgcr/checkpoint.hpp"
#include "pgcr/config.hpp"
#include "pgcr/data.hpp"
#include "pgcr/gradcheck_suite.hpp"
#include "pgcr/image.hpp"
#include "pgcr/metrics.hpp"
#include "pgcr/training.hpp"

namespace fs = std::filesystem;
using namespace pgcr;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Precedence: defaults < config file < PGCR_SEED < explicit flags.
RunConfig build_config(const std::string& config_path, const Overrides& overrides) {
    RunConfig c;
    if (!config_path.empty())
        parse_config_text(c, read_text_file(config_path), config_path);
    if (const char* env = std::getenv("PGCR_SEED")) config_set(c, "seed", env);
    for (const auto& [key, value] : overrides) config_set(c, key, value);
    return c;
}

void write_file(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    write_text_file(path, text);
}

std::string grid_str(const PatchGrid& g) {
    return std::to_string(g.image_size) + "x" + std::to_string(g.image_size) + "/p" +
           std::to_string(g.patch_size) + "c" + std::to_string(g.channels);
}

// Copy the architecture recorded in a checkpoint into the run config so the
// artifacts we write describe the model actually trained.
void adopt_architecture(RunConfig& c, const RunConfig& from) {
    c.preset = from.preset;
    c.image_size = from.image_size;
    c.patch_size = from.patch_size;
    c.channels = from.channels;
    c.enc_dim = from.enc_dim;
    c.enc_depth = from.enc_depth;
    c.enc_heads = from.enc_heads;
    c.dec_dim = from.dec_dim;
    c.dec_depth = from.dec_depth;
    c.dec_heads = from.dec_heads;
}

std::vector<ImagePair> load_split(const std::vector<PairEntry>& entries) {
    std::vector<ImagePair> pairs;
    pairs.reserve(entries.size());
    for (const auto& e : entries) pairs.push_back(load_pair(e));
    return pairs;
}

struct GenDataArgs {
    std::string out;
    std::size_t count = 50;
    std::size_t size = 64;
    std::string coverage = "0.3:0.5";
    std::uint64_t seed = 42;
    bool seed_given = false;
};

int cmd_gen_data(const GenDataArgs& a) {
    CloudParamsRange range;
    const std::size_t colon = a.coverage.find(':');
    if (colon == std::string::npos) {
        range.coverage_lo = range.coverage_hi = detail::parse_double("coverage", a.coverage);
    } else {
        range.coverage_lo = detail::parse_double("coverage", a.coverage.substr(0, colon));
        range.coverage_hi = detail::parse_double("coverage", a.coverage.substr(colon + 1));
    }
    std::uint64_t seed = a.seed;
    if (!a.seed_given)
        if (const char* env = std::getenv("PGCR_SEED"))
            seed = detail::parse_size("PGCR_SEED", env);

    SyntheticDataset ds = gen_synthetic_dataset(a.count, a.size, range, seed);
    save_synthetic_dataset(a.out, ds);
    std::printf("wrote %zu pairs to %s (train %zu, val %zu, test %zu)\n", ds.pairs.size(),
                a.out.c_str(), ds.train.size(), ds.val.size(), ds.test.size());
    return 0;
}

struct TrainArgs {
    std::string data, config, out, init;
    Overrides overrides;
    bool quiet = false;
};

int cmd_pretrain(const TrainArgs& a) {
    RunConfig cfg = build_config(a.config, a.overrides);
    cfg.data_dir = a.data;
    cfg.out_dir = a.out;

    DatasetSplit split = load_dataset(a.data, "auto");
    std::vector<ImageU8> cleans;
    cleans.reserve(split.train.size());
    for (const auto& e : split.train) cleans.push_back(load_pair(e).clean);
    if (cleans.empty()) throw DataError("pretrain: training split is empty");

    GeneratorModel gen = init_generator(cfg.generator_config(), cfg.seed);
    // Uniform learning rate here; the layer-wise decay schedule belongs to
    // fine-tuning, where early layers carry transferred weights.
    auto groups = generator_param_groups(gen, static_cast<float>(cfg.base_lr), 1.0f);
    TrainState state;
    state.rng_seed = derive_seed(cfg.seed, 20);

    std::string csv = "epoch,loss\n";
    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const double loss = pretrain_epoch(gen, cleans, cfg.mask_ratio, groups, state, epoch);
        char row[64];
        std::snprintf(row, sizeof(row), "%zu,%.9g\n", epoch + 1, loss);
        csv += row;
        if (!a.quiet)
            std::fprintf(stderr, "pretrain epoch %zu/%zu: loss %.6f\n", epoch + 1,
                         cfg.pretrain_epochs, loss);
    }

    write_file((fs::path(a.out) / "pretrain_loss.csv").string(), csv);
    save_checkpoint((fs::path(a.out) / "pretrained.pgcr").string(),
                    generator_checkpoint(gen, cfg));
    std::printf("pretrained %zu epochs on %zu images -> %s\n", cfg.pretrain_epochs,
                cleans.size(), (fs::path(a.out) / "pretrained.pgcr").string().c_str());
    return 0;
}

int cmd_finetune(const TrainArgs& a) {
    RunConfig cfg = build_config(a.config, a.overrides);
    cfg.data_dir = a.data;
    cfg.out_dir = a.out;
    if (!a.init.empty()) cfg.init = a.init;

    GeneratorModel gen;
    if (cfg.init == "random") {
        gen = init_generator(cfg.generator_config(), cfg.seed);
    } else {
        Checkpoint ck = load_checkpoint(cfg.init);
        RunConfig ck_cfg = checkpoint_config(ck);
        const PatchGrid run_grid = cfg.generator_config().grid;
        const PatchGrid ck_grid = ck_cfg.generator_config().grid;
        if (ck_grid.image_size != run_grid.image_size ||
            ck_grid.patch_size != run_grid.patch_size ||
            ck_grid.channels != run_grid.channels)
            throw DataError("finetune: checkpoint grid " + grid_str(ck_grid) +
                            " does not match run grid " + grid_str(run_grid));
        adopt_architecture(cfg, ck_cfg);
        gen = generator_from_checkpoint(ck);
    }
    DiscriminatorModel disc = init_discriminator(cfg.discriminator_config(), cfg.seed);

    DatasetSplit split = load_dataset(a.data, "auto");
    std::vector<ImagePair> train = load_split(split.train);
    std::vector<ImagePair> val = load_split(split.val);

    FinetuneOptions opt;
    opt.epochs = cfg.epochs;
    opt.batch_size = cfg.batch_size;
    opt.base_lr = cfg.base_lr;
    opt.llrd_decay = cfg.llrd_decay;
    opt.lambda_adv = cfg.lambda_adv;
    opt.disc_lr_scale = cfg.disc_lr_scale;
    opt.seed = cfg.seed;
    opt.verbose = !a.quiet;
    FinetuneResult result = finetune(gen, disc, train, val, opt);

    std::string history = history_csv_header() + "\n";
    for (const auto& row : result.history) history += history_csv_row(row) + "\n";
    std::string steps = loss_csv_header() + "\n";
    for (std::size_t i = 0; i < result.step_log.size(); ++i)
        steps += loss_csv_row(i + 1, result.step_log[i]) + "\n";

    write_file((fs::path(a.out) / "history.csv").string(), history);
    write_file((fs::path(a.out) / "steps.csv").string(), steps);
    write_file((fs::path(a.out) / "config.txt").string(), serialize_config(cfg));
    save_checkpoint((fs::path(a.out) / "generator_best.pgcr").string(),
                    generator_checkpoint(result.best_generator, cfg));
    save_checkpoint((fs::path(a.out) / "discriminator_final.pgcr").string(),
                    discriminator_checkpoint(disc, cfg));
    std::printf("finetuned %zu epochs (%zu train / %zu val): best val PSNR %.3f at epoch %zu\n",
                cfg.epochs, train.size(), val.size(), result.best_val_psnr,
                result.best_epoch);
    return 0;
}

struct EvalArgs {
    std::string data, checkpoint, split = "test", report;
};

int cmd_eval(const EvalArgs& a) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    GeneratorModel gen = generator_from_checkpoint(ck);
    const PatchGrid& grid = gen.config.grid;

    DatasetSplit split = load_dataset(a.data, "auto");
    const std::vector<PairEntry>* entries = nullptr;
    if (a.split == "train") entries = &split.train;
    else if (a.split == "val") entries = &split.val;
    else if (a.split == "test") entries = &split.test;
    else throw UsageError("eval: unknown split '" + a.split + "' (expected train|val|test)");
    if (entries->empty()) throw DataError("eval: split '" + a.split + "' is empty");

    std::vector<MetricRow> model_rows, baseline_rows;
    for (const auto& e : *entries) {
        const ImagePair crop = center_crop(load_pair(e), grid.image_size);
        const ImageU8 out = denormalize(generate(gen, normalize(crop.cloudy), false));
        model_rows.push_back({crop.id, psnr(out, crop.clean), ssim(out, crop.clean)});
        baseline_rows.push_back(
            {crop.id, psnr(crop.cloudy, crop.clean), ssim(crop.cloudy, crop.clean)});
    }
    MetricReport model = summarize_metrics(std::move(model_rows));
    MetricReport baseline = summarize_metrics(std::move(baseline_rows));

    write_file((fs::path(a.report) / "eval.csv").string(), metric_csv(model));
    write_file((fs::path(a.report) / "eval_baseline.csv").string(), metric_csv(baseline));
    write_file((fs::path(a.report) / "eval.json").string(),
               "{\"split\":\"" + a.split + "\",\"model\":" + metric_json(model) +
                   ",\"baseline\":" + metric_json(baseline) + "}\n");
    std::printf("%s split (%zu pairs): model PSNR %.4f SSIM %.4f | identity PSNR %.4f SSIM %.4f\n",
                a.split.c_str(), model.rows.size(), model.mean_psnr, model.mean_ssim,
                baseline.mean_psnr, baseline.mean_ssim);
    return 0;
}

struct InferArgs {
    std::string checkpoint, in, out;
};

int cmd_infer(const InferArgs& a) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    GeneratorModel gen = generator_from_checkpoint(ck);
    const std::size_t s = gen.config.grid.image_size;

    ImageU8 input = read_image(a.in);
    if (input.width < s || input.height < s)
        throw DataError("infer: input is " + std::to_string(input.width) + "x" +
                        std::to_string(input.height) + ", need at least " + std::to_string(s) +
                        "x" + std::to_string(s));
    ImagePair pair;
    pair.cloudy = input;
    pair.clean = input;
    pair.id = a.in;
    const ImageU8 crop = center_crop(pair, s).cloudy;
    const ImageU8 out = denormalize(generate(gen, normalize(crop), false));
    fs::create_directories(fs::path(a.out).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(a.out).parent_path());
    write_image(a.out, out);
    std::printf("wrote %zux%zu image to %s\n", out.width, out.height, a.out.c_str());
    return 0;
}

struct GradCheckArgs {
    std::string preset = "toy";
    double tolerance = 1e-3;
    bool corrupt_backward = false;
};

int cmd_grad_check(const GradCheckArgs& a) {
    if (a.preset != "toy")
        throw UsageError("grad-check: only the toy preset is supported (got '" + a.preset +
                         "')");
    if (a.corrupt_backward) gelu_backward_scale<float>() = 1.02f;

    const auto rows = run_gradcheck_suite(a.tolerance);
    std::size_t failed = 0;
    std::printf("%-28s %14s %10s  %s\n", "op", "max_rel_err", "tolerance", "status");
    for (const auto& r : rows) {
        std::printf("%-28s %14.3e %10.0e  %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                    r.passed ? "pass" : "FAIL");
        if (!r.passed) ++failed;
    }
    std::printf("%zu/%zu gradient checks passed\n", rows.size() - failed, rows.size());
    return failed == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patch-adversarial cloud removal: transfer-learned masked-autoencoder pipeline"};
    app.require_subcommand(1);

    GenDataArgs gd;
    auto* gen_data = app.add_subcommand("gen-data", "Generate a synthetic cloudy/clean dataset");
    gen_data->add_option("--out", gd.out, "Output dataset directory")->required();
    gen_data->add_option("--count", gd.count, "Number of image pairs");
    gen_data->add_option("--size", gd.size, "Image side length in pixels");
    gen_data->add_option("--coverage", gd.coverage, "Cloud coverage: value or lo:hi range");
    auto* gd_seed = gen_data->add_option("--seed", gd.seed, "Random seed");

    TrainArgs pt;
    auto* pretrain = app.add_subcommand("pretrain", "Masked-reconstruction pretraining");
    pretrain->add_option("--data", pt.data, "Dataset directory")->required();
    pretrain->add_option("--out", pt.out, "Output directory")->required();
    pretrain->add_option("--config", pt.config, "Config file (key=value lines)");
    pretrain->add_flag("--quiet", pt.quiet, "Suppress progress output");

    TrainArgs ft;
    auto* finetune_cmd = app.add_subcommand("finetune", "Adversarial fine-tuning");
    finetune_cmd->add_option("--data", ft.data, "Dataset directory")->required();
    finetune_cmd->add_option("--out", ft.out, "Output directory")->required();
    finetune_cmd->add_option("--config", ft.config, "Config file (key=value lines)");
    finetune_cmd->add_option("--init", ft.init, "Generator checkpoint path, or 'random'");
    finetune_cmd->add_flag("--quiet", ft.quiet, "Suppress progress output");

    // Config-key overrides shared by the training commands.
    struct KeyFlag {
        const char* flag;
        const char* key;
    };
    static const KeyFlag key_flags[] = {
        {"--preset", "preset"},           {"--mask-ratio", "mask_ratio"},
        {"--epochs", "epochs"},           {"--pretrain-epochs", "pretrain_epochs"},
        {"--batch-size", "batch_size"},   {"--base-lr", "base_lr"},
        {"--llrd-decay", "llrd_decay"},   {"--lambda-adv", "lambda_adv"},
        {"--disc-hidden", "disc_hidden"}, {"--seed", "seed"},
        {"--disc-lr-scale", "disc_lr_scale"},
    };
    for (const auto& kf : key_flags) {
        for (auto [sub, args] : {std::pair{pretrain, &pt}, std::pair{finetune_cmd, &ft}}) {
            const std::string key = kf.key;
            sub->add_option_function<std::string>(
                kf.flag,
                [args, key](const std::string& v) { args->overrides.emplace_back(key, v); },
                std::string("Override config key ") + key);
        }
    }

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a generator checkpoint");
    eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Generator checkpoint")->required();
    eval_cmd->add_option("--split", ev.split, "Split to evaluate: train|val|test");
    eval_cmd->add_option("--report", ev.report, "Report output directory")->required();

    InferArgs in;
    auto* infer_cmd = app.add_subcommand("infer", "Run cloud removal on one image");
    infer_cmd->add_option("--checkpoint", in.checkpoint, "Generator checkpoint")->required();
    infer_cmd->add_option("--in", in.in, "Input image (PNG or PPM)")->required();
    infer_cmd->add_option("--out", in.out, "Output image path")->required();

    GradCheckArgs gc;
    auto* grad_check = app.add_subcommand("grad-check", "Verify gradients by finite differences");
    grad_check->add_option("--preset", gc.preset, "Model preset (toy)");
    grad_check->add_option("--tolerance", gc.tolerance, "Max relative error allowed");
    grad_check->add_flag("--corrupt-backward", gc.corrupt_backward,
                         "Deliberately skew one backward rule (harness sensitivity test)")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    gd.seed_given = gd_seed->count() > 0;

    try {
        if (app.got_subcommand(gen_data)) return cmd_gen_data(gd);
        if (app.got_subcommand(pretrain)) return cmd_pretrain(pt);
        if (app.got_subcommand(finetune_cmd)) return cmd_finetune(ft);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(ev);
        if (app.got_subcommand(infer_cmd)) return cmd_infer(in);
        if (app.got_subcommand(grad_check)) return cmd_grad_check(gc);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
