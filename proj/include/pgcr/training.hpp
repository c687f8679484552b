#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "pgcr/data.hpp"
#include "pgcr/discriminator.hpp"
#include "pgcr/errors.hpp"
#include "pgcr/generator.hpp"
#include "pgcr/losses.hpp"
#include "pgcr/metrics.hpp"
#include "pgcr/optimizer.hpp"
#include "pgcr/patch_ops.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

template <class S>
GeneratorModelT<S> clone_generator(const GeneratorModelT<S>& src) {
    GeneratorModelT<S> dst = init_generator<S>(src.config, 0);
    auto s = named_params(src);
    auto d = named_params(dst);
    for (std::size_t i = 0; i < s.size(); ++i) d[i].tensor.data() = s[i].tensor.data();
    return dst;
}

// Forward the batch through the generator with the graph recording.
template <class S>
std::vector<TensorT<S>> generate_batch(const GeneratorModelT<S>& gen,
                                       const std::vector<ImagePair>& batch) {
    std::vector<TensorT<S>> fakes;
    fakes.reserve(batch.size());
    for (const auto& pair : batch)
        fakes.push_back(generate(gen, normalize<S>(pair.cloudy), /*training=*/true));
    return fakes;
}

// Discriminator update: real = clean images, fake = detached generator
// output, so no gradient reaches the generator. Returns the batch loss.
template <class S>
double gan_disc_phase(DiscriminatorModelT<S>& disc, const std::vector<ImagePair>& batch,
                      const std::vector<TensorT<S>>& fakes, const PatchGrid& grid,
                      std::vector<ParamGroupT<S>>& disc_groups, TrainStateT<S>& disc_state) {
    TensorT<S> total = TensorT<S>::scalar(S(0));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto real_scores = discriminate(disc, patchify(normalize<S>(batch[i].clean), grid));
        auto fake_scores = discriminate(disc, patchify(fakes[i].detach(), grid));
        total = add(total, d_loss(real_scores, fake_scores));
    }
    auto loss = mul_scalar(total, S(1) / S(batch.size()));
    backward(loss);
    adam_step(disc_state, disc_groups);
    return static_cast<double>(loss.item());
}

// Generator update against the just-updated discriminator. The discriminator
// is frozen for this pass, so only generator parameters receive gradients.
// Returns {mse, g_adv} batch means.
template <class S>
std::pair<double, double> gan_gen_phase(DiscriminatorModelT<S>& disc,
                                        const std::vector<ImagePair>& batch,
                                        const std::vector<TensorT<S>>& fakes,
                                        const PatchGrid& grid,
                                        std::vector<ParamGroupT<S>>& gen_groups,
                                        TrainStateT<S>& gen_state, double lambda_adv) {
    auto disc_params = named_params(disc);
    for (auto& p : disc_params) p.tensor.set_requires_grad(false);

    TensorT<S> mse_total = TensorT<S>::scalar(S(0));
    TensorT<S> adv_total = TensorT<S>::scalar(S(0));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        mse_total = add(mse_total, mse_loss(fakes[i], normalize<S>(batch[i].clean)));
        auto fresh_scores = discriminate(disc, patchify(fakes[i], grid));
        adv_total = add(adv_total, g_adv_loss(fresh_scores));
    }
    const S inv = S(1) / S(batch.size());
    auto mse = mul_scalar(mse_total, inv);
    auto g_adv = mul_scalar(adv_total, inv);
    auto loss = combined_generator_loss(mse, g_adv, lambda_adv);
    backward(loss);
    adam_step(gen_state, gen_groups);

    for (auto& p : disc_params) p.tensor.set_requires_grad(true);
    return {static_cast<double>(mse.item()), static_cast<double>(g_adv.item())};
}

// One alternating adversarial step over a mini-batch: a discriminator update
// on detached generator output, then a generator update scored by the fresh
// discriminator.
template <class S>
LossReport gan_train_step(GeneratorModelT<S>& gen, DiscriminatorModelT<S>& disc,
                          const std::vector<ImagePair>& batch,
                          std::vector<ParamGroupT<S>>& gen_groups, TrainStateT<S>& gen_state,
                          std::vector<ParamGroupT<S>>& disc_groups,
                          TrainStateT<S>& disc_state) {
    if (batch.empty()) throw ShapeError("gan_train_step: empty batch");
    const PatchGrid& grid = gen.config.grid;
    for (const auto& pair : batch)
        if (pair.cloudy.width != grid.image_size || pair.cloudy.height != grid.image_size)
            throw ShapeError("gan_train_step: pair " + pair.id + " is " +
                             std::to_string(pair.cloudy.width) + "x" +
                             std::to_string(pair.cloudy.height) + ", expected " +
                             std::to_string(grid.image_size) + "x" +
                             std::to_string(grid.image_size));
    auto& graph = GraphT<S>::current();
    graph.clear();

    auto fakes = generate_batch(gen, batch);
    LossReport report;
    report.lambda_adv = gen_state.lambda_adv;
    report.d = gan_disc_phase(disc, batch, fakes, grid, disc_groups, disc_state);
    auto [mse, g_adv] = gan_gen_phase(disc, batch, fakes, grid, gen_groups, gen_state,
                                      gen_state.lambda_adv);
    report.mse = mse;
    report.g_adv = g_adv;
    graph.clear();
    return report;
}

// One pass of masked-reconstruction pretraining over the clean images.
// Per image: random crop to the grid, mask, reconstruct, MSE over the masked
// patch rows only (all rows when mask_ratio is 0), one optimizer step.
// Returns the mean reconstruction loss.
template <class S>
double pretrain_epoch(GeneratorModelT<S>& gen, const std::vector<ImageU8>& clean_images,
                      double mask_ratio, std::vector<ParamGroupT<S>>& groups,
                      TrainStateT<S>& state, std::size_t epoch) {
    if (clean_images.empty()) throw DataError("pretrain_epoch: empty dataset");
    const PatchGrid& grid = gen.config.grid;
    auto& graph = GraphT<S>::current();
    double total = 0.0;
    for (std::size_t i = 0; i < clean_images.size(); ++i) {
        const std::uint64_t stream = (epoch + 1) * 1000003ull + 2 * i;
        ImagePair pair;
        pair.id = "pretrain";
        pair.cloudy = clean_images[i];
        pair.clean = clean_images[i];
        pair = random_crop(pair, grid.image_size, derive_seed(state.rng_seed, stream));

        graph.clear();
        auto image = normalize<S>(pair.clean);
        auto rec = reconstruct(gen, image, mask_ratio, derive_seed(state.rng_seed, stream + 1));
        auto target = patchify(image, grid);
        TensorT<S> loss;
        if (rec.plan.num_masked() > 0) {
            const auto masked = rec.plan.masked_indices();
            loss = mse_loss(take_rows(rec.pred, masked), take_rows(target, masked));
        } else {
            loss = mse_loss(rec.pred, target);
        }
        backward(loss);
        adam_step(state, groups);
        total += static_cast<double>(loss.item());
        graph.clear();
    }
    return total / static_cast<double>(clean_images.size());
}

struct HistoryRow {
    std::size_t epoch = 0;  // 1-based
    double mse = 0.0;
    double g_adv = 0.0;
    double d = 0.0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
    double val_mse = 0.0;  // float-domain, tracked for experiments
};

inline std::string history_csv_header() {
    return "epoch,mse,g_adv,d_loss,val_psnr,val_ssim";
}

inline std::string history_csv_row(const HistoryRow& r) {
    char buf[224];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.6f,%.6f", r.epoch, r.mse, r.g_adv,
                  r.d, r.val_psnr, r.val_ssim);
    return std::string(buf);
}

struct FinetuneOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double base_lr = 1e-3;
    double llrd_decay = 0.75;
    double lambda_adv = 0.1;
    // Discriminator lr = base_lr * disc_lr_scale (two-timescale training).
    double disc_lr_scale = 1.0;
    std::uint64_t seed = 42;
    bool verbose = false;
};

template <class S>
struct FinetuneResultT {
    GeneratorModelT<S> best_generator;
    std::size_t best_epoch = 0;  // 0 = validation never improved (initial weights kept)
    double best_val_psnr = -std::numeric_limits<double>::infinity();
    std::vector<HistoryRow> history;
    std::vector<LossReport> step_log;
};

using FinetuneResult = FinetuneResultT<float>;

// Mean validation metrics on deterministic center crops.
template <class S>
HistoryRow validate_generator(const GeneratorModelT<S>& gen, const std::vector<ImagePair>& val) {
    const PatchGrid& grid = gen.config.grid;
    HistoryRow row;
    std::vector<MetricRow> rows;
    double mse_sum = 0.0;
    for (const auto& pair : val) {
        const ImagePair crop = center_crop(pair, grid.image_size);
        auto out = generate(gen, normalize<S>(crop.cloudy), /*training=*/false);
        const ImageU8 img = denormalize(out);
        rows.push_back({crop.id, psnr(img, crop.clean), ssim(img, crop.clean)});
        auto clean_t = normalize<S>(crop.clean);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const double d = static_cast<double>(out.data()[i]) -
                             static_cast<double>(clean_t.data()[i]);
            acc += d * d;
        }
        mse_sum += acc / static_cast<double>(out.numel());
    }
    MetricReport rep = summarize_metrics(std::move(rows));
    row.val_psnr = (rep.inf_psnr_count == rep.rows.size() && !rep.rows.empty())
                       ? std::numeric_limits<double>::infinity()
                       : rep.mean_psnr;
    row.val_ssim = rep.mean_ssim;
    row.val_mse = val.empty() ? 0.0 : mse_sum / static_cast<double>(val.size());
    return row;
}

// Adversarial fine-tuning: shuffled mini-batches with per-epoch random crops,
// validation after each epoch, best-PSNR weights retained.
template <class S>
FinetuneResultT<S> finetune(GeneratorModelT<S>& gen, DiscriminatorModelT<S>& disc,
                            const std::vector<ImagePair>& train,
                            const std::vector<ImagePair>& val, const FinetuneOptions& opt) {
    if (train.empty()) throw DataError("finetune: empty training split");
    if (val.empty()) throw DataError("finetune: empty validation split");
    if (opt.batch_size == 0) throw UsageError("finetune: batch size must be positive");

    FinetuneResultT<S> result;
    result.best_generator = clone_generator(gen);
    if (opt.epochs == 0) return result;

    auto gen_groups = generator_param_groups(gen, opt.base_lr, opt.llrd_decay);
    auto disc_groups = discriminator_param_groups(disc, opt.base_lr * opt.disc_lr_scale);
    TrainStateT<S> gen_state, disc_state;
    gen_state.rng_seed = derive_seed(opt.seed, 10);
    gen_state.lambda_adv = opt.lambda_adv;
    disc_state.rng_seed = derive_seed(opt.seed, 11);

    const PatchGrid& grid = gen.config.grid;
    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(opt.seed, 700000 + epoch));
        shuffle_rng.shuffle(order);

        double mse_sum = 0.0, adv_sum = 0.0, d_sum = 0.0;
        std::size_t images = 0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + opt.batch_size);
            std::vector<ImagePair> batch;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k)
                batch.push_back(random_crop(
                    train[order[k]], grid.image_size,
                    derive_seed(opt.seed, 2000003ull * epoch + order[k])));
            LossReport report = gan_train_step(gen, disc, batch, gen_groups, gen_state,
                                               disc_groups, disc_state);
            result.step_log.push_back(report);
            const auto b = static_cast<double>(batch.size());
            mse_sum += report.mse * b;
            adv_sum += report.g_adv * b;
            d_sum += report.d * b;
            images += batch.size();
        }

        HistoryRow row = validate_generator(gen, val);
        row.epoch = epoch;
        row.mse = mse_sum / static_cast<double>(images);
        row.g_adv = adv_sum / static_cast<double>(images);
        row.d = d_sum / static_cast<double>(images);
        result.history.push_back(row);
        if (row.val_psnr > result.best_val_psnr) {
            result.best_val_psnr = row.val_psnr;
            result.best_epoch = epoch;
            result.best_generator = clone_generator(gen);
        }
        if (opt.verbose) {
            std::fprintf(stderr, "epoch %zu: mse %.5f g_adv %.4f d %.4f val_psnr %.3f val_ssim %.4f\n",
                         epoch, row.mse, row.g_adv, row.d, row.val_psnr, row.val_ssim);
        }
    }
    return result;
}

}  // namespace pgcr
