#include "a2k/losses.hpp"

#include <cmath>

#include "a2k/errors.hpp"

namespace a2k {

void LossWeights::validate() const {
  for (double w : {w_adv, w_reg, w_piv_gen, w_piv_piv}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("loss weights must be finite and nonnegative");
    }
  }
  if (!(margin > 0.0) || !std::isfinite(margin)) {
    throw ValidationError("triplet margin must be positive");
  }
}

namespace losses {

namespace {

void check_finite_scalar(const Var& v, const char* what) {
  if (v->value.size() != 1 || !v->value.all_finite()) {
    throw ValidationError(std::string(what) + " must be a finite scalar");
  }
}

// RMS distance between a fixed vector and every row: sqrt(mean_d (row - v)^2).
Var rms_distance_rows(const Var& rows, const Var& v) {
  const int n = rows->value.dim(0);
  return ad::sqrt(ad::mean_axis1(ad::square(ad::sub(rows, ad::broadcast_row(v, n)))));
}

}  // namespace

Var adversarial_gen(const Var& d_score_fake) {
  check_finite_scalar(d_score_fake, "discriminator score");
  return ad::square(ad::add_scalar(ad::neg(d_score_fake), 1.0));
}

Var regression(const Var& y, const Var& y_hat) {
  if (!y->value.same_shape(y_hat->value)) {
    throw ValidationError("regression loss: shape mismatch " + y->value.shape_string() +
                          " vs " + y_hat->value.shape_string());
  }
  return ad::mean_all(ad::abs(ad::sub(y, y_hat)));
}

Var piv_gen(const Var& e_k, const Var& e_yhat_frames) {
  if (e_yhat_frames->value.ndim() != 2 ||
      e_yhat_frames->value.dim(1) != e_k->value.dim(0)) {
    throw ValidationError("piv_gen loss: latent dims disagree, " + e_k->value.shape_string() +
                          " vs frames " + e_yhat_frames->value.shape_string());
  }
  return ad::sum_all(ad::square(ad::sub(e_k, ad::mean_rows(e_yhat_frames))));
}

Var piv_triplet(const Var& e_k, const Var& e_y_frames, const Var& e_yhat_frames, double margin) {
  if (e_y_frames->value.ndim() != 2 || !e_y_frames->value.same_shape(e_yhat_frames->value) ||
      e_y_frames->value.dim(1) != e_k->value.dim(0)) {
    throw ValidationError("triplet loss: latent dims disagree, anchor " +
                          e_k->value.shape_string() + ", positives " +
                          e_y_frames->value.shape_string() + ", negatives " +
                          e_yhat_frames->value.shape_string());
  }
  if (!(margin > 0.0)) throw ValidationError("triplet margin must be positive");
  const Var d_pos = rms_distance_rows(e_y_frames, e_k);
  const Var d_neg = rms_distance_rows(e_yhat_frames, e_k);
  return ad::mean_all(ad::relu(ad::add_scalar(ad::sub(d_pos, d_neg), margin)));
}

Var discriminator(const Var& d_score_real, const Var& d_score_fake) {
  check_finite_scalar(d_score_real, "discriminator score");
  check_finite_scalar(d_score_fake, "discriminator score");
  return ad::add(ad::square(ad::add_scalar(ad::neg(d_score_real), 1.0)),
                 ad::square(d_score_fake));
}

Var generator_total(const Var& l_adv, const Var& l_reg, const Var& l_piv_gen,
                    const LossWeights& w) {
  return ad::add(ad::add(ad::scale(l_adv, w.w_adv), ad::scale(l_reg, w.w_reg)),
                 ad::scale(l_piv_gen, w.w_piv_gen));
}

Var piv_total(const Var& l_reg, const Var& l_adv, const Var& l_piv_piv, const LossWeights& w) {
  return ad::add(ad::add(ad::scale(l_reg, w.w_reg), ad::scale(l_adv, w.w_adv)),
                 ad::scale(l_piv_piv, w.w_piv_piv));
}

double adversarial_gen(double d_score_fake) {
  return ad::scalar_value(adversarial_gen(ad::constant(Tensor::scalar(d_score_fake))));
}

double discriminator(double d_score_real, double d_score_fake) {
  return ad::scalar_value(discriminator(ad::constant(Tensor::scalar(d_score_real)),
                                        ad::constant(Tensor::scalar(d_score_fake))));
}

double regression(const Tensor& y, const Tensor& y_hat) {
  return ad::scalar_value(regression(ad::constant(y), ad::constant(y_hat)));
}

}  // namespace losses
}  // namespace a2k
