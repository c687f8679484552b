#pragma once

#include <cstdio>
#include <string>

#include "pgcr/errors.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

// Probabilities are clamped away from {0, 1} before any log so the losses
// stay finite even for a saturated discriminator.
inline constexpr double kLogitEps = 1e-7;

// Mean squared error over all elements.
template <class S>
TensorT<S> mse_loss(const TensorT<S>& pred, const TensorT<S>& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_loss: shapes " + shape_str(pred.shape()) + " and " +
                         shape_str(target.shape()) + " differ");
    auto d = sub(pred, target);
    return mean(mul(d, d));
}

// Discriminator objective: -mean(log D(real)) - mean(log(1 - D(fake))).
template <class S>
TensorT<S> d_loss(const TensorT<S>& real_scores, const TensorT<S>& fake_scores) {
    if (real_scores.shape() != fake_scores.shape())
        throw ShapeError("d_loss: score shapes " + shape_str(real_scores.shape()) + " and " +
                         shape_str(fake_scores.shape()) + " differ");
    const S lo = S(kLogitEps), hi = S(1.0 - kLogitEps);
    auto real_term = mean(log_op(clamp(real_scores, lo, hi)));
    auto fake_term = mean(log_op(clamp(rsub_scalar(S(1), fake_scores), lo, hi)));
    return neg(add(real_term, fake_term));
}

// Generator's adversarial objective: -mean(log D(fake)).
template <class S>
TensorT<S> g_adv_loss(const TensorT<S>& fake_scores) {
    const S lo = S(kLogitEps), hi = S(1.0 - kLogitEps);
    return neg(mean(log_op(clamp(fake_scores, lo, hi))));
}

// Total generator loss: reconstruction + lambda * adversarial.
template <class S>
TensorT<S> combined_generator_loss(const TensorT<S>& mse, const TensorT<S>& g_adv,
                                   double lambda_adv) {
    if (lambda_adv < 0.0) throw UsageError("lambda_adv must be non-negative");
    return add(mse, mul_scalar(g_adv, S(lambda_adv)));
}

// Scalar snapshot of one training step, for logs and CSV output.
struct LossReport {
    double mse = 0.0;
    double g_adv = 0.0;
    double d = 0.0;
    double lambda_adv = 0.0;

    double gan_total() const { return d + g_adv; }
    double g_total() const { return mse + lambda_adv * g_adv; }
};

inline std::string loss_csv_header() { return "step,mse,g_adv,d_loss,g_total"; }

inline std::string loss_csv_row(std::size_t step, const LossReport& r) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g", step, r.mse, r.g_adv, r.d,
                  r.g_total());
    return std::string(buf);
}

}  // namespace pgcr
