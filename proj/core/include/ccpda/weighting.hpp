#pragma once

#include <span>
#include <vector>

#include "ccpda/tensor.hpp"

namespace ccpda {

/// Per-class importance weights, normalized so the largest entry is 1.
/// Outlier classes (absent from the target domain) are expected to end up
/// with weights near 0.
struct ClassWeights {
  std::vector<double> gamma;

  static ClassWeights uniform(std::size_t num_classes) {
    return ClassWeights{std::vector<double>(num_classes, 1.0)};
  }
  std::size_t num_classes() const { return gamma.size(); }
  double operator[](std::size_t c) const { return gamma[c]; }
};

/// gamma = mean of the target probability rows, divided by its max entry.
/// Throws EmptyInputError when the batch has no rows.
ClassWeights compute_class_weights(const Tensor& target_probs);

/// Row-wise argmax; ties resolve to the lowest class index.
std::vector<int> pseudo_label(const Tensor& probs);

enum class Domain { source, target };

/// Per-class moving-average feature centroids for both domains.
///
/// Centroids are stored as tensors: the update blends the (detached) running
/// value with the current batch's class mean, so gradients flow only into the
/// current batch's contribution. A class's centroid is readable once its
/// initialized flag is set; the first observation seeds the centroid with the
/// batch mean directly.
class CentroidBank {
 public:
  CentroidBank(std::size_t num_classes, std::size_t feature_dim, double ema_coeff);

  /// Folds the batch's per-class means into the bank. labels[i] is the class
  /// of features row i (true labels for source, pseudo-labels for target).
  void update(const Tensor& features, std::span<const int> labels, Domain domain);

  bool initialized(Domain domain, std::size_t cls) const;
  const Tensor& centroid(Domain domain, std::size_t cls) const;

  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return feature_dim_; }
  double ema_coeff() const { return ema_coeff_; }

  /// Value-only copy with all graph history dropped; flags preserved.
  CentroidBank detached_copy() const;

 private:
  std::size_t num_classes_;
  std::size_t feature_dim_;
  double ema_coeff_;
  std::vector<Tensor> source_;
  std::vector<Tensor> target_;
  std::vector<bool> source_init_;
  std::vector<bool> target_init_;
};

}  // namespace ccpda
