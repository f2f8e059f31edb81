#include "ccpda/weighting.hpp"

#include <algorithm>

#include "ccpda/error.hpp"

namespace ccpda {

ClassWeights compute_class_weights(const Tensor& target_probs) {
  if (target_probs.shape().size() != 2)
    throw DimensionError("compute_class_weights: expected [n x classes], got " +
                         shape_str(target_probs.shape()));
  const std::size_t n = target_probs.rows(), k = target_probs.cols();
  if (n == 0) throw EmptyInputError("compute_class_weights: no target rows");

  std::vector<double> gamma(k, 0.0);
  const auto d = target_probs.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) gamma[c] += d[i * k + c];
  for (double& g : gamma) g /= static_cast<double>(n);

  const double mx = *std::max_element(gamma.begin(), gamma.end());
  if (mx <= 0.0)
    throw ContractViolation("compute_class_weights: column means are all zero; "
                            "rows are not probability distributions");
  for (double& g : gamma) g /= mx;
  return ClassWeights{std::move(gamma)};
}

std::vector<int> pseudo_label(const Tensor& probs) {
  if (probs.shape().size() != 2)
    throw DimensionError("pseudo_label: expected [b x classes], got " +
                         shape_str(probs.shape()));
  const std::size_t b = probs.rows(), k = probs.cols();
  std::vector<int> out(b, 0);
  const auto d = probs.data();
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (d[i * k + c] > d[i * k + best]) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

CentroidBank::CentroidBank(std::size_t num_classes, std::size_t feature_dim,
                           double ema_coeff)
    : num_classes_(num_classes),
      feature_dim_(feature_dim),
      ema_coeff_(ema_coeff),
      source_(num_classes),
      target_(num_classes),
      source_init_(num_classes, false),
      target_init_(num_classes, false) {
  if (num_classes == 0 || feature_dim == 0)
    throw ConfigError("CentroidBank: num_classes and feature_dim must be positive");
  if (ema_coeff < 0.0 || ema_coeff > 1.0)
    throw ConfigError("CentroidBank: ema_coeff must lie in [0, 1]");
}

void CentroidBank::update(const Tensor& features, std::span<const int> labels,
                          Domain domain) {
  if (features.shape().size() != 2 || features.cols() != feature_dim_)
    throw DimensionError("CentroidBank::update: features " + shape_str(features.shape()) +
                         " do not match feature_dim " + std::to_string(feature_dim_));
  if (labels.size() != features.rows())
    throw ContractViolation("CentroidBank::update: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(features.rows()) + " rows");

  std::vector<std::vector<std::size_t>> members(num_classes_);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes_)
      throw ContractViolation("CentroidBank::update: label " + std::to_string(labels[i]) +
                              " out of range [0, " + std::to_string(num_classes_) + ")");
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  auto& bank = domain == Domain::source ? source_ : target_;
  auto& init = domain == Domain::source ? source_init_ : target_init_;
  for (std::size_t c = 0; c < num_classes_; ++c) {
    if (members[c].empty()) continue;  // absent classes keep their centroid
    Tensor batch_mean = mean_of_rows(features, members[c]);
    if (!init[c]) {
      bank[c] = batch_mean;
      init[c] = true;
    } else {
      // new = ema*old + (1-ema)*batch_mean; the running value is a constant.
      Tensor old_part = scale(bank[c].detach(), ema_coeff_);
      bank[c] = add(old_part, scale(batch_mean, 1.0 - ema_coeff_));
    }
  }
}

bool CentroidBank::initialized(Domain domain, std::size_t cls) const {
  const auto& init = domain == Domain::source ? source_init_ : target_init_;
  return cls < num_classes_ && init[cls];
}

const Tensor& CentroidBank::centroid(Domain domain, std::size_t cls) const {
  if (!initialized(domain, cls))
    throw ContractViolation("CentroidBank::centroid: class " + std::to_string(cls) +
                            " has no initialized centroid for this domain");
  return (domain == Domain::source ? source_ : target_)[cls];
}

CentroidBank CentroidBank::detached_copy() const {
  CentroidBank copy(num_classes_, feature_dim_, ema_coeff_);
  for (std::size_t c = 0; c < num_classes_; ++c) {
    if (source_init_[c]) {
      copy.source_[c] = source_[c].detach();
      copy.source_init_[c] = true;
    }
    if (target_init_[c]) {
      copy.target_[c] = target_[c].detach();
      copy.target_init_[c] = true;
    }
  }
  return copy;
}

}  // namespace ccpda
