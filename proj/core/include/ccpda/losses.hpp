#pragma once

#include <optional>
#include <span>
#include <utility>

#include "ccpda/tensor.hpp"
#include "ccpda/weighting.hpp"

namespace ccpda {

/// Coefficients of the combined objective:
/// total = L_y + lambda*L_d + centroid_weight*L_c + mu*L_inf + zeta*L_e.
/// centroid_weight defaults to 1 (L_c enters unscaled); it exists as an
/// override because the unscaled term can dominate on small from-scratch
/// networks whose feature norms are not pinned by a pretrained backbone.
struct LossWeights {
  double lambda = 1.0;
  double mu = 0.1;
  double zeta = 0.1;
  double centroid_weight = 1.0;
};

struct LossBreakdown {
  double l_y = 0.0;
  double l_d_tilde = 0.0;
  double l_c = 0.0;
  double l_inf = 0.0;
  double l_e = 0.0;
  double total = 0.0;
};

/// Class-weighted cross-entropy over source probability rows:
/// (1/b) * sum_i gamma[label_i] * (-log p_i[label_i]).
Tensor weighted_classification_loss(const Tensor& probs_s, std::span<const int> labels_s,
                                    const ClassWeights& gamma);

/// Cross-entropy of the joint domain-class discriminator. Source sample of
/// class c belongs to category c (gamma-weighted); target sample with
/// pseudo-label c belongs to category num_classes + c. The discriminator
/// minimizes this value; the feature extractor maximizes it through the
/// gradient-reversal path inside discriminate().
Tensor multiclass_discriminator_loss(const Tensor& disc_probs_s,
                                     std::span<const int> labels_s,
                                     const ClassWeights& gamma,
                                     const Tensor& disc_probs_t,
                                     std::span<const int> pseudo_t);

/// Plain two-way domain cross-entropy (source = category 0, target = 1),
/// gamma-weighted on the source side. Used by the binary-discriminator
/// ablations and the PADA baseline.
Tensor binary_discriminator_loss(const Tensor& disc_probs_s, std::span<const int> labels_s,
                                 const ClassWeights& gamma, const Tensor& disc_probs_t);

/// sum_c gamma_c * ||M_s^c - M_t^c||^2 over classes with both centroids
/// initialized. Gradients reach only the current batch's contributions
/// blended into the bank by the latest update.
Tensor centroid_alignment_loss(const CentroidBank& bank, const ClassWeights& gamma);

/// Row-sparsity selector: stack target probability rows as columns and take
/// (1/classes) * sum of per-class maxima. Bounded in [1/classes, 1]; pushed
/// down, it concentrates predictions on a small subset of classes.
Tensor selection_loss(const Tensor& target_probs);

/// Shannon entropy of the classifier rows, gamma-weighted on the source side:
/// (1/b_s) sum_i gamma[label_i] H(p_i) + (1/b_t) sum_j H(p_j).
Tensor entropy_loss(const Tensor& probs_s, std::span<const int> labels_s,
                    const ClassWeights& gamma, const Tensor& probs_t);

/// Terms of the combined objective; absent optionals contribute nothing
/// (their breakdown entry stays 0).
struct ObjectiveTerms {
  std::optional<Tensor> classification;
  std::optional<Tensor> discriminator;
  std::optional<Tensor> centroid;
  std::optional<Tensor> selection;
  std::optional<Tensor> entropy;
};

/// total = L_y + lambda*L_d + L_c + mu*L_inf + zeta*L_e, assembled in that
/// order so the breakdown's total matches the tensor bit-for-bit.
std::pair<Tensor, LossBreakdown> total_objective(const ObjectiveTerms& terms,
                                                 const LossWeights& weights);

}  // namespace ccpda
