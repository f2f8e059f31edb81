#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ccpda/data.hpp"
#include "ccpda/losses.hpp"
#include "ccpda/model.hpp"
#include "ccpda/weighting.hpp"

namespace ccpda {

struct TrainConfig {
  int epochs = 20;
  std::size_t per_domain = 36;  // samples per domain per batch (batch size 72)

  double base_lr = 1e-2;  // eta = base_lr / (1 + alpha*rho)^beta
  double lr_alpha = 10.0;
  double lr_beta = 0.75;
  double momentum = 0.95;
  double head_lr_multiplier = 10.0;  // classifier/discriminator train from scratch

  double lambda = 1.0;
  double mu_final = 0.1;
  double mu_ramp_fraction = 0.25;  // mu ramps 0 -> mu_final over this prefix
  double zeta = 0.1;
  double centroid_weight = 1.0;  // L_c scale override; 1 = unscaled
  /// Ease the centroid term in over the mu ramp window: early pseudo-labels
  /// are noise, and anchoring to them locks in wrong assignments.
  bool centroid_ramp = false;
  double ema_coeff = 0.7;

  // Ablation switches (CCPDA_inf / CCPDA_e / CCPDA_dc variants).
  bool disable_selection = false;
  bool disable_entropy = false;
  bool binary_discriminator_no_centroids = false;
  // Method plumbing beyond the paper ablations.
  bool disable_adversarial = false;  // drop the discriminator entirely
  bool disable_centroids = false;
  bool uniform_gamma = false;  // keep gamma = 1 (source-only baseline)
  bool adversarial_ramp = false;  // DANN-style 2/(1+e^(-10 rho)) - 1 reversal ramp
  bool full_set_selection_diagnostic = false;  // log L_inf over all targets per epoch

  std::uint64_t seed = 0;

  void validate() const;
};

/// eta0 / (1 + alpha*rho)^beta with rho in [0, 1].
double lr_schedule(double rho, const TrainConfig& cfg);

/// Linear 0 -> mu_final over the first mu_ramp_fraction of training, then flat.
double mu_schedule(double rho, const TrainConfig& cfg);

/// 2/(1+exp(-10 rho)) - 1.
double dann_ramp(double rho);

/// Momentum SGD over a fixed parameter list:
///   v <- momentum*v + g;  p <- p - lr*mult(p)*v
/// where mult is head_lr_multiplier for classifier/discriminator parameters
/// and 1 for the feature extractor.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<ModelBundle::Param> params, double momentum,
               double head_lr_multiplier);

  void step(double lr);
  void zero_grad();
  std::size_t iterations() const { return iterations_; }

 private:
  std::vector<ModelBundle::Param> params_;
  std::vector<std::vector<double>> velocities_;
  double momentum_;
  double head_lr_multiplier_;
  std::size_t iterations_ = 0;
};

struct IterationRecord {
  int iteration = 0;
  int epoch = 0;
  double lr = 0.0;
  double mu = 0.0;
  LossBreakdown losses;
};

struct EpochRecord {
  int epoch = 0;
  std::vector<double> gamma;  // the weights used during this epoch
  /// Fraction of target pseudo-labels matching withheld ground truth at the
  /// start of the epoch; -1 when no ground truth was provided.
  double pseudo_label_accuracy = -1.0;
  std::optional<double> selection_full_set;
};

struct TrainingHistory {
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;

  const std::vector<double>& gamma_for_iteration(std::size_t i) const {
    return epochs[static_cast<std::size_t>(iterations[i].epoch)].gamma;
  }
  std::vector<double> final_gamma() const {
    return epochs.empty() ? std::vector<double>() : epochs.back().gamma;
  }
};

/// Runs the minimax loop: one forward, one backward through the reversal
/// layer, one SGD step per iteration; gamma refreshes over the full target
/// set at every epoch boundary (uniform during epoch 0).
TrainingHistory train(ModelBundle& model, const SampleSet& source, const SampleSet& target,
                      const TrainConfig& cfg, std::span<const int> target_ground_truth = {});

}  // namespace ccpda
