#include "ccpda/losses.hpp"

#include <string>

#include "ccpda/error.hpp"

namespace ccpda {

namespace {

void check_prob_matrix(const Tensor& t, const char* what) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(what) + ": expected [b x k], got " +
                         shape_str(t.shape()));
  if (t.rows() == 0) throw EmptyInputError(std::string(what) + ": empty batch");
}

std::vector<double> gamma_of_labels(std::span<const int> labels, const ClassWeights& gamma,
                                    const char* what) {
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= gamma.num_classes())
      throw ContractViolation(std::string(what) + ": label " + std::to_string(labels[i]) +
                              " out of range [0, " + std::to_string(gamma.num_classes()) +
                              ")");
    w[i] = gamma[static_cast<std::size_t>(labels[i])];
  }
  return w;
}

/// (1/b) * sum_i w_i * (-log p_i[label_i])
Tensor weighted_nll(const Tensor& probs, std::span<const int> labels,
                    std::span<const double> weights) {
  Tensor picked = gather_labels(log_clamped(probs), labels);
  return scale(weighted_sum(picked, weights), -1.0 / static_cast<double>(probs.rows()));
}

}  // namespace

Tensor weighted_classification_loss(const Tensor& probs_s, std::span<const int> labels_s,
                                    const ClassWeights& gamma) {
  check_prob_matrix(probs_s, "weighted_classification_loss");
  const auto w = gamma_of_labels(labels_s, gamma, "weighted_classification_loss");
  return weighted_nll(probs_s, labels_s, w);
}

Tensor multiclass_discriminator_loss(const Tensor& disc_probs_s,
                                     std::span<const int> labels_s,
                                     const ClassWeights& gamma,
                                     const Tensor& disc_probs_t,
                                     std::span<const int> pseudo_t) {
  check_prob_matrix(disc_probs_s, "multiclass_discriminator_loss");
  check_prob_matrix(disc_probs_t, "multiclass_discriminator_loss");
  if (disc_probs_s.cols() != disc_probs_t.cols())
    throw DimensionError("multiclass_discriminator_loss: category widths disagree, " +
                         shape_str(disc_probs_s.shape()) + " vs " +
                         shape_str(disc_probs_t.shape()));
  const std::size_t categories = disc_probs_s.cols();
  if (categories != 2 * gamma.num_classes())
    throw DimensionError("multiclass_discriminator_loss: expected 2*" +
                         std::to_string(gamma.num_classes()) + " categories, got " +
                         std::to_string(categories));
  const std::size_t num_classes = gamma.num_classes();

  const auto w_s = gamma_of_labels(labels_s, gamma, "multiclass_discriminator_loss");
  Tensor source_term = weighted_nll(disc_probs_s, labels_s, w_s);

  if (pseudo_t.size() != disc_probs_t.rows())
    throw ContractViolation("multiclass_discriminator_loss: " +
                            std::to_string(pseudo_t.size()) + " pseudo-labels for " +
                            std::to_string(disc_probs_t.rows()) + " target rows");
  std::vector<int> target_categories(pseudo_t.size());
  for (std::size_t i = 0; i < pseudo_t.size(); ++i) {
    if (pseudo_t[i] < 0 || static_cast<std::size_t>(pseudo_t[i]) >= num_classes)
      throw ContractViolation("multiclass_discriminator_loss: pseudo-label " +
                              std::to_string(pseudo_t[i]) + " out of range [0, " +
                              std::to_string(num_classes) + ")");
    target_categories[i] = static_cast<int>(num_classes) + pseudo_t[i];
  }
  const std::vector<double> ones(pseudo_t.size(), 1.0);
  Tensor target_term = weighted_nll(disc_probs_t, target_categories, ones);

  return add(source_term, target_term);
}

Tensor binary_discriminator_loss(const Tensor& disc_probs_s, std::span<const int> labels_s,
                                 const ClassWeights& gamma, const Tensor& disc_probs_t) {
  check_prob_matrix(disc_probs_s, "binary_discriminator_loss");
  check_prob_matrix(disc_probs_t, "binary_discriminator_loss");
  if (disc_probs_s.cols() != 2 || disc_probs_t.cols() != 2)
    throw DimensionError("binary_discriminator_loss: expected 2 categories, got " +
                         shape_str(disc_probs_s.shape()) + " and " +
                         shape_str(disc_probs_t.shape()));

  const auto w_s = gamma_of_labels(labels_s, gamma, "binary_discriminator_loss");
  const std::vector<int> zeros(disc_probs_s.rows(), 0);
  Tensor source_term = weighted_nll(disc_probs_s, zeros, w_s);

  const std::vector<int> ones_lbl(disc_probs_t.rows(), 1);
  const std::vector<double> ones_w(disc_probs_t.rows(), 1.0);
  Tensor target_term = weighted_nll(disc_probs_t, ones_lbl, ones_w);

  return add(source_term, target_term);
}

Tensor centroid_alignment_loss(const CentroidBank& bank, const ClassWeights& gamma) {
  if (gamma.num_classes() != bank.num_classes())
    throw ContractViolation("centroid_alignment_loss: gamma has " +
                            std::to_string(gamma.num_classes()) + " classes, bank has " +
                            std::to_string(bank.num_classes()));
  Tensor total;
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    if (!bank.initialized(Domain::source, c) || !bank.initialized(Domain::target, c))
      continue;
    Tensor diff = sub(bank.centroid(Domain::source, c), bank.centroid(Domain::target, c));
    Tensor term = scale(sum(mul(diff, diff)), gamma[c]);
    total = total.valid() ? add(total, term) : term;
  }
  return total.valid() ? total : Tensor::scalar(0.0);
}

Tensor selection_loss(const Tensor& target_probs) {
  check_prob_matrix(target_probs, "selection_loss");
  const double inv_classes = 1.0 / static_cast<double>(target_probs.cols());
  return scale(sum(colwise_max(target_probs)), inv_classes);
}

Tensor entropy_loss(const Tensor& probs_s, std::span<const int> labels_s,
                    const ClassWeights& gamma, const Tensor& probs_t) {
  check_prob_matrix(probs_s, "entropy_loss");
  check_prob_matrix(probs_t, "entropy_loss");

  // H(p) = -sum_c p_c log p_c, with the clamp giving 0*log(0) = 0.
  auto row_entropies = [](const Tensor& p) {
    return scale(rowwise_sum(mul(p, log_clamped(p))), -1.0);
  };
  const auto w_s = gamma_of_labels(labels_s, gamma, "entropy_loss");
  Tensor source_term =
      scale(weighted_sum(row_entropies(probs_s), w_s), 1.0 / static_cast<double>(probs_s.rows()));
  const std::vector<double> ones(probs_t.rows(), 1.0);
  Tensor target_term =
      scale(weighted_sum(row_entropies(probs_t), ones), 1.0 / static_cast<double>(probs_t.rows()));
  return add(source_term, target_term);
}

std::pair<Tensor, LossBreakdown> total_objective(const ObjectiveTerms& terms,
                                                 const LossWeights& weights) {
  LossBreakdown breakdown;
  Tensor total;
  auto accumulate = [&total](const Tensor& term) {
    total = total.valid() ? add(total, term) : term;
  };

  if (terms.classification) {
    breakdown.l_y = terms.classification->item();
    accumulate(*terms.classification);
  }
  if (terms.discriminator) {
    // The CE enters the optimizer's scalar unscaled so the discriminator
    // trains at full rate; lambda reaches the feature extractor through the
    // reversal coefficient inside discriminate(). The reported objective
    // value below still carries lambda.
    breakdown.l_d_tilde = terms.discriminator->item();
    accumulate(*terms.discriminator);
  }
  if (terms.centroid) {
    breakdown.l_c = terms.centroid->item();
    accumulate(weights.centroid_weight == 1.0
                   ? *terms.centroid
                   : scale(*terms.centroid, weights.centroid_weight));
  }
  if (terms.selection) {
    breakdown.l_inf = terms.selection->item();
    accumulate(scale(*terms.selection, weights.mu));
  }
  if (terms.entropy) {
    breakdown.l_e = terms.entropy->item();
    accumulate(scale(*terms.entropy, weights.zeta));
  }
  if (!total.valid()) total = Tensor::scalar(0.0);
  breakdown.total = breakdown.l_y + weights.lambda * breakdown.l_d_tilde +
                    weights.centroid_weight * breakdown.l_c +
                    weights.mu * breakdown.l_inf + weights.zeta * breakdown.l_e;
  return {total, breakdown};
}

}  // namespace ccpda
