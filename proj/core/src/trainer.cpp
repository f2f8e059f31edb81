#include "ccpda/trainer.hpp"

#include <cmath>
#include <string>

#include "ccpda/error.hpp"

namespace ccpda {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be non-negative");
  if (per_domain == 0) throw ConfigError("train: per_domain must be positive");
  if (base_lr < 0 || lr_alpha < 0 || lr_beta < 0 || momentum < 0 ||
      head_lr_multiplier < 0 || lambda < 0 || mu_final < 0 || zeta < 0 ||
      centroid_weight < 0)
    throw ConfigError("train: rates and loss weights must be non-negative");
  if (mu_ramp_fraction < 0.0 || mu_ramp_fraction > 1.0)
    throw ConfigError("train: mu_ramp_fraction must lie in [0, 1]");
  if (ema_coeff < 0.0 || ema_coeff > 1.0)
    throw ConfigError("train: ema_coeff must lie in [0, 1]");
}

double lr_schedule(double rho, const TrainConfig& cfg) {
  if (rho < 0.0 || rho > 1.0)
    throw ContractViolation("lr_schedule: rho must lie in [0, 1], got " +
                            std::to_string(rho));
  return cfg.base_lr / std::pow(1.0 + cfg.lr_alpha * rho, cfg.lr_beta);
}

double mu_schedule(double rho, const TrainConfig& cfg) {
  if (rho < 0.0 || rho > 1.0)
    throw ContractViolation("mu_schedule: rho must lie in [0, 1], got " +
                            std::to_string(rho));
  if (cfg.mu_ramp_fraction <= 0.0) return cfg.mu_final;
  if (rho >= cfg.mu_ramp_fraction) return cfg.mu_final;
  return cfg.mu_final * rho / cfg.mu_ramp_fraction;
}

double dann_ramp(double rho) { return 2.0 / (1.0 + std::exp(-10.0 * rho)) - 1.0; }

// ---- SgdOptimizer ----------------------------------------------------------

SgdOptimizer::SgdOptimizer(std::vector<ModelBundle::Param> params, double momentum,
                           double head_lr_multiplier)
    : params_(std::move(params)),
      momentum_(momentum),
      head_lr_multiplier_(head_lr_multiplier) {
  velocities_.reserve(params_.size());
  for (const auto& p : params_) velocities_.emplace_back(p.tensor.size(), 0.0);
}

void SgdOptimizer::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto& v = velocities_[i];
    const auto g = p.tensor.grad();
    if (!g.empty() && g.size() != v.size())
      throw ContractViolation("sgd_step: gradient size " + std::to_string(g.size()) +
                              " does not match parameter size " + std::to_string(v.size()));
    const double mult = p.role == ParamRole::head ? head_lr_multiplier_ : 1.0;
    auto data = p.tensor.mutable_data();
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double grad_j = g.empty() ? 0.0 : g[j];
      v[j] = momentum_ * v[j] + grad_j;
      data[j] -= lr * mult * v[j];
    }
  }
  ++iterations_;
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ---- train -----------------------------------------------------------------

namespace {

/// Classifier probabilities for a whole sample set, without recording.
Tensor full_pass_probs(const ModelBundle& model, const SampleSet& set) {
  NoGradGuard no_grad;
  return model.classify(model.forward_features(set.features));
}

double pseudo_accuracy(std::span<const int> pseudo, std::span<const int> truth) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pseudo.size(); ++i)
    if (pseudo[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pseudo.size());
}

}  // namespace

TrainingHistory train(ModelBundle& model, const SampleSet& source, const SampleSet& target,
                      const TrainConfig& cfg, std::span<const int> target_ground_truth) {
  cfg.validate();
  if (source.domain != DomainTag::source || target.domain != DomainTag::target)
    throw ContractViolation("train: sample sets carry the wrong domain tags");
  if (!target_ground_truth.empty() && target_ground_truth.size() != target.size())
    throw ContractViolation("train: ground-truth label count does not match target set");

  const std::size_t num_classes = model.num_classes();
  const bool use_multiclass_disc = !cfg.binary_discriminator_no_centroids;
  const bool use_adversarial = !cfg.disable_adversarial;
  const bool use_centroids =
      !cfg.binary_discriminator_no_centroids && !cfg.disable_centroids;
  const bool use_selection = !cfg.disable_selection;
  const bool use_entropy = !cfg.disable_entropy;
  const std::size_t expected_disc = use_multiclass_disc ? 2 * num_classes : 2;
  if (use_adversarial && model.disc_categories() != expected_disc)
    throw ConfigError("train: model has " + std::to_string(model.disc_categories()) +
                      " discriminator categories but this configuration needs " +
                      std::to_string(expected_disc));

  BatchSampler sampler(source, target, cfg.per_domain, cfg.seed);
  SgdOptimizer optimizer(model.parameters(), cfg.momentum, cfg.head_lr_multiplier);
  CentroidBank bank(num_classes, model.feature_dim(), cfg.ema_coeff);

  const std::size_t total_iterations =
      static_cast<std::size_t>(cfg.epochs) * sampler.batches_per_epoch();

  TrainingHistory history;
  ClassWeights gamma = ClassWeights::uniform(num_classes);
  std::size_t iteration = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord epoch_record;
    epoch_record.epoch = epoch;

    // Epoch-boundary target inference: refresh gamma (after epoch 0; the
    // untrained classifier is uninformative) and track pseudo-label quality.
    const bool need_inference = !cfg.uniform_gamma || !target_ground_truth.empty() ||
                                cfg.full_set_selection_diagnostic;
    if (need_inference) {
      Tensor probs = full_pass_probs(model, target);
      if (!cfg.uniform_gamma && epoch > 0) gamma = compute_class_weights(probs);
      if (!target_ground_truth.empty())
        epoch_record.pseudo_label_accuracy =
            pseudo_accuracy(pseudo_label(probs), target_ground_truth);
      if (cfg.full_set_selection_diagnostic)
        epoch_record.selection_full_set = selection_loss(probs).item();
    }
    epoch_record.gamma = gamma.gamma;
    history.epochs.push_back(epoch_record);

    for (DomainBatch& batch : sampler.epoch()) {
      const double rho =
          static_cast<double>(iteration) / static_cast<double>(total_iterations);
      const double lr = lr_schedule(rho, cfg);
      const double mu = mu_schedule(rho, cfg);
      // lambda acts on the feature extractor through the reversal coefficient
      // (optionally eased in); the discriminator always minimizes plain CE.
      const double grl = cfg.lambda * (cfg.adversarial_ramp ? dann_ramp(rho) : 1.0);

      Tape::active().clear();
      optimizer.zero_grad();

      Tensor f_s = model.forward_features(batch.source_features);
      Tensor probs_s = model.classify(f_s);

      const bool need_target = use_adversarial || use_centroids || use_selection ||
                               use_entropy;
      Tensor f_t, probs_t;
      std::vector<int> pseudo;
      if (need_target) {
        f_t = model.forward_features(batch.target_features);
        probs_t = model.classify(f_t);
        pseudo = pseudo_label(probs_t);
      }

      if (use_centroids) {
        bank.update(f_s, batch.source_labels, Domain::source);
        bank.update(f_t, pseudo, Domain::target);
      }

      ObjectiveTerms terms;
      terms.classification = weighted_classification_loss(probs_s, batch.source_labels, gamma);
      if (use_adversarial) {
        Tensor disc_s = model.discriminate(f_s, grl);
        Tensor disc_t = model.discriminate(f_t, grl);
        terms.discriminator =
            use_multiclass_disc
                ? multiclass_discriminator_loss(disc_s, batch.source_labels, gamma, disc_t,
                                                pseudo)
                : binary_discriminator_loss(disc_s, batch.source_labels, gamma, disc_t);
      }
      if (use_centroids) terms.centroid = centroid_alignment_loss(bank, gamma);
      if (use_selection) terms.selection = selection_loss(probs_t);
      if (use_entropy) terms.entropy = entropy_loss(probs_s, batch.source_labels, gamma, probs_t);

      double centroid_w = cfg.centroid_weight;
      if (cfg.centroid_ramp && cfg.mu_ramp_fraction > 0.0 && rho < cfg.mu_ramp_fraction)
        centroid_w *= rho / cfg.mu_ramp_fraction;
      LossWeights weights{cfg.lambda, mu, cfg.zeta, centroid_w};
      auto [total, breakdown] = total_objective(terms, weights);

      backward(total);
      optimizer.step(lr);
      Tape::active().clear();

      IterationRecord rec;
      rec.iteration = static_cast<int>(iteration);
      rec.epoch = epoch;
      rec.lr = lr;
      rec.mu = mu;
      rec.losses = breakdown;
      history.iterations.push_back(rec);
      ++iteration;
    }
  }
  return history;
}

}  // namespace ccpda
