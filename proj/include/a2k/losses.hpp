#pragma once

#include "a2k/autodiff.hpp"

namespace a2k {

struct LossWeights {
  double w_adv = 1.0;
  double w_reg = 1.0;
  double w_piv_gen = 1.0;
  double w_piv_piv = 1.0;
  double margin = 0.2;

  void validate() const;
};

namespace losses {

using ad::Var;

// (1 - D(y_hat))^2, the least-squares generator objective.
Var adversarial_gen(const Var& d_score_fake);

// Mean absolute difference over all T x 136 entries.
Var regression(const Var& y, const Var& y_hat);

// Squared L2 distance between the reference encoding and the time-average of
// the per-frame encodings of the generated sequence.
Var piv_gen(const Var& e_k, const Var& e_yhat_frames);

// Per-frame hinge triplet with RMS distances: anchors are the reference
// encoding, positives the ground-truth frame encodings, negatives the
// generated frame encodings. Mean over frames.
Var piv_triplet(const Var& e_k, const Var& e_y_frames, const Var& e_yhat_frames, double margin);

// (1 - D(y))^2 + D(y_hat)^2.
Var discriminator(const Var& d_score_real, const Var& d_score_fake);

// Weighted aggregates; unit weights reproduce the plain sums.
Var generator_total(const Var& l_adv, const Var& l_reg, const Var& l_piv_gen,
                    const LossWeights& w);
Var piv_total(const Var& l_reg, const Var& l_adv, const Var& l_piv_piv, const LossWeights& w);

// Plain-scalar conveniences evaluated through the same graph ops.
double adversarial_gen(double d_score_fake);
double discriminator(double d_score_real, double d_score_fake);
double regression(const Tensor& y, const Tensor& y_hat);

}  // namespace losses

}  // namespace a2k
