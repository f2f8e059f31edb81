#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ccpda/tensor.hpp"

namespace ccpda {

/// Fully-connected stack. Weights are [in x out]; forward is x.W + b with an
/// optional relu after every layer (feature extractor) or only between hidden
/// layers (classifier/discriminator heads, which emit raw logits).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden_dims,
      std::size_t out_dim, bool relu_on_output, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }

 private:
  struct Affine {
    Tensor weight;
    Tensor bias;
  };
  std::vector<Affine> layers_;
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  bool relu_on_output_ = false;

  friend class ModelBundle;
};

enum class ParamRole { feature_extractor, head };

struct ModelConfig {
  std::size_t input_dim = 2;
  std::size_t feature_dim = 8;
  std::size_t num_classes = 8;
  std::vector<std::size_t> hidden_dims = {16};       // feature extractor
  std::vector<std::size_t> classifier_hidden = {};   // empty = single affine
  std::vector<std::size_t> disc_hidden = {};
  /// 2*num_classes for the joint domain-class discriminator; 2 for the
  /// plain binary domain discriminator used by the ablations.
  std::size_t disc_categories = 0;  // 0 = default to 2*num_classes
  std::uint64_t seed = 0;
};

/// The three networks: feature extractor, classifier, domain discriminator.
class ModelBundle {
 public:
  ModelBundle() = default;

  /// Feature batch [b x feature_dim] from inputs [b x input_dim].
  Tensor forward_features(const Tensor& x) const;

  /// Classifier probability rows [b x num_classes]; each row sums to 1.
  Tensor classify(const Tensor& features) const;
  Tensor classifier_logits(const Tensor& features) const;

  /// Discriminator probability rows [b x disc_categories]. The features pass
  /// through grad_reverse(grl_coeff) first, so the loss on this output trains
  /// the discriminator while pushing the feature extractor the other way.
  Tensor discriminate(const Tensor& features, double grl_coeff) const;

  struct Param {
    Tensor tensor;
    ParamRole role;
  };
  std::vector<Param> parameters() const;

  std::size_t input_dim() const { return config_.input_dim; }
  std::size_t feature_dim() const { return config_.feature_dim; }
  std::size_t num_classes() const { return config_.num_classes; }
  std::size_t disc_categories() const { return config_.disc_categories; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  Mlp feature_net_;
  Mlp classifier_net_;
  Mlp discriminator_net_;

  friend ModelBundle init_model(const ModelConfig&);
  friend ModelBundle load_checkpoint(const std::filesystem::path&);
  friend void save_checkpoint(const ModelBundle&, const std::filesystem::path&);
};

/// Builds the bundle with fan-in-scaled random weights (std sqrt(2/fan_in))
/// and zero biases, deterministically from config.seed.
ModelBundle init_model(const ModelConfig& config);
ModelBundle init_model(std::size_t input_dim, std::size_t feature_dim,
                       const std::vector<std::size_t>& hidden_dims,
                       std::size_t num_classes, std::uint64_t seed);

/// Textual checkpoint of shapes + parameter values, round-trippable
/// bit-exactly (17 significant digits).
void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace ccpda
