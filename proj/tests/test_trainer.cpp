#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ccpda/data.hpp"
#include "ccpda/error.hpp"
#include "ccpda/experiment.hpp"
#include "ccpda/trainer.hpp"

using namespace ccpda;

namespace {

PdaTaskSpec small_task() {
  PdaTaskSpec spec;
  spec.num_classes = 4;
  spec.shared_classes = {0, 1};
  spec.samples_per_class = 30;
  spec.input_dim = 2;
  spec.circle_radius = 3.0;
  spec.blob_std = 0.4;
  spec.rotation_deg = 20.0;
  spec.translation = {0.5, 0.2};
  spec.seed = 2;
  return spec;
}

ModelBundle small_model(std::uint64_t seed, std::size_t disc_categories = 8) {
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.feature_dim = 6;
  cfg.num_classes = 4;
  cfg.hidden_dims = {10};
  cfg.disc_categories = disc_categories;
  cfg.seed = seed;
  return init_model(cfg);
}

std::vector<double> flatten_params(const ModelBundle& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters())
    out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("lr schedule") {
  TrainConfig cfg;
  CHECK(lr_schedule(0.0, cfg) == 0.01);
  CHECK(lr_schedule(1.0, cfg) == doctest::Approx(0.01 / std::pow(11.0, 0.75)).epsilon(1e-12));

  double prev = lr_schedule(0.0, cfg);
  for (int i = 1; i <= 100; ++i) {
    const double lr = lr_schedule(i / 100.0, cfg);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_schedule(-0.1, cfg), ContractViolation);
  CHECK_THROWS_AS(lr_schedule(1.1, cfg), ContractViolation);
}

TEST_CASE("mu schedule ramps linearly then holds") {
  TrainConfig cfg;
  cfg.mu_final = 0.1;
  cfg.mu_ramp_fraction = 0.25;
  CHECK(mu_schedule(0.0, cfg) == 0.0);
  CHECK(mu_schedule(0.125, cfg) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(mu_schedule(0.25, cfg) == 0.1);
  CHECK(mu_schedule(0.9, cfg) == 0.1);

  cfg.mu_ramp_fraction = 0.0;  // no ramp: constant at the final value
  CHECK(mu_schedule(0.0, cfg) == 0.1);
}

TEST_CASE("sgd momentum recurrence") {
  ModelConfig mc;
  mc.input_dim = 2;
  mc.feature_dim = 2;
  mc.num_classes = 2;
  mc.hidden_dims = {};
  mc.seed = 0;
  ModelBundle m = init_model(mc);
  auto params = m.parameters();
  SgdOptimizer opt(params, 0.95, 10.0);

  // pick one feature-extractor weight and drive it with a constant gradient
  Tensor w = params[0].tensor;
  const double w0 = w.data()[0];
  const double g = 0.25, lr = 0.1;

  auto set_grad = [&](double value) {
    w.zero_grad();
    Tape::active().clear();
    Tensor loss = scale(sum(w), value);  // dL/dw = value everywhere
    backward(loss);
  };

  SUBCASE("zero gradients leave parameters unchanged") {
    set_grad(0.0);
    opt.step(lr);
    CHECK(w.data()[0] == w0);
  }
  SUBCASE("single step from rest moves by -lr*g") {
    set_grad(g);
    opt.step(lr);
    CHECK(w.data()[0] == doctest::Approx(w0 - lr * g).epsilon(1e-12));
  }
  SUBCASE("two steps with constant gradient accumulate momentum") {
    set_grad(g);
    opt.step(lr);
    set_grad(g);
    opt.step(lr);
    // v1 = g, v2 = 0.95 g + g -> total = -lr * 2.95 g
    CHECK(w.data()[0] == doctest::Approx(w0 - lr * 2.95 * g).epsilon(1e-12));
  }
  SUBCASE("zero gradient after a step decays the velocity by 0.95") {
    set_grad(g);
    opt.step(lr);
    const double after_first = w.data()[0];
    set_grad(0.0);
    opt.step(lr);
    CHECK(w.data()[0] == doctest::Approx(after_first - lr * 0.95 * g).epsilon(1e-12));
  }
  SUBCASE("head parameters move 10x faster") {
    Tensor head_w;
    for (auto& p : params)
      if (p.role == ParamRole::head) {
        head_w = p.tensor;
        break;
      }
    const double h0 = head_w.data()[0];
    w.zero_grad();
    head_w.zero_grad();
    Tape::active().clear();
    backward(add(sum(w), sum(head_w)));
    opt.step(lr);
    CHECK(w.data()[0] == doctest::Approx(w0 - lr).epsilon(1e-12));
    CHECK(head_w.data()[0] == doctest::Approx(h0 - lr * 10.0).epsilon(1e-12));
  }
  Tape::active().clear();
}

TEST_CASE("zero epochs leave the model untouched") {
  PdaTask task = generate_pda_task(small_task());
  ModelBundle model = small_model(1);
  const auto before = flatten_params(model);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto history = train(model, task.source, task.target, cfg, task.target_labels);
  CHECK(flatten_params(model) == before);
  CHECK(history.iterations.empty());
}

TEST_CASE("training is bit-deterministic in seed and config") {
  PdaTask task = generate_pda_task(small_task());
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.per_domain = 16;
  cfg.seed = 5;

  ModelBundle a = small_model(7);
  ModelBundle b = small_model(7);
  auto ha = train(a, task.source, task.target, cfg, task.target_labels);
  auto hb = train(b, task.source, task.target, cfg, task.target_labels);
  CHECK(flatten_params(a) == flatten_params(b));
  REQUIRE(ha.iterations.size() == hb.iterations.size());
  for (std::size_t i = 0; i < ha.iterations.size(); ++i)
    CHECK(ha.iterations[i].losses.total == hb.iterations[i].losses.total);
}

TEST_CASE("recorded schedules follow lr_schedule and mu_schedule exactly") {
  PdaTask task = generate_pda_task(small_task());
  ModelBundle model = small_model(3);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.per_domain = 16;
  auto history = train(model, task.source, task.target, cfg, task.target_labels);

  const auto total = static_cast<double>(history.iterations.size());
  REQUIRE(total > 0);
  CHECK(history.iterations.front().lr == 0.01);
  CHECK(history.iterations.front().mu == 0.0);
  double prev_lr = history.iterations.front().lr;
  bool reached_mu = false;
  for (std::size_t t = 0; t < history.iterations.size(); ++t) {
    const double rho = static_cast<double>(t) / total;
    CHECK(history.iterations[t].lr == lr_schedule(rho, cfg));
    CHECK(history.iterations[t].mu == mu_schedule(rho, cfg));
    CHECK(history.iterations[t].lr <= prev_lr);
    prev_lr = history.iterations[t].lr;
    if (history.iterations[t].mu == cfg.mu_final) reached_mu = true;
  }
  CHECK(reached_mu);
}

TEST_CASE("gamma refresh: uniform during epoch 0, refreshed afterwards") {
  PdaTask task = generate_pda_task(small_task());
  ModelBundle model = small_model(11);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.per_domain = 16;
  auto history = train(model, task.source, task.target, cfg, task.target_labels);

  REQUIRE(history.epochs.size() == 3);
  for (double g : history.epochs[0].gamma) CHECK(g == 1.0);
  // later epochs: normalized, max exactly 1, not all ones
  for (std::size_t e = 1; e < 3; ++e) {
    const auto& gamma = history.epochs[e].gamma;
    CHECK(*std::max_element(gamma.begin(), gamma.end()) == 1.0);
    bool any_below = false;
    for (double g : gamma) {
      CHECK(g >= 0.0);
      if (g < 0.999) any_below = true;
    }
    CHECK(any_below);
  }
  // pseudo-label accuracy recorded when ground truth is supplied
  for (const auto& e : history.epochs) {
    CHECK(e.pseudo_label_accuracy >= 0.0);
    CHECK(e.pseudo_label_accuracy <= 1.0);
  }
}

TEST_CASE("one iteration of the minimax moves the discriminator down the CE slope") {
  PdaTask task = generate_pda_task(small_task());
  ModelBundle model = small_model(13);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.per_domain = 16;
  cfg.zeta = 0.0;
  cfg.disable_entropy = true;
  cfg.disable_selection = true;

  // Freeze one batch and measure CE before/after a single trainer iteration.
  BatchSampler sampler(task.source, task.target, 16, cfg.seed);
  auto batches = sampler.epoch();
  const DomainBatch& frozen = batches.front();

  auto disc_ce = [&] {
    NoGradGuard no_grad;
    Tensor f_s = model.forward_features(frozen.source_features);
    Tensor f_t = model.forward_features(frozen.target_features);
    auto pseudo = pseudo_label(model.classify(f_t));
    return multiclass_discriminator_loss(model.discriminate(f_s, 1.0),
                                         frozen.source_labels,
                                         ClassWeights::uniform(4),
                                         model.discriminate(f_t, 1.0), pseudo)
        .item();
  };

  // Manually run one iteration against the same frozen batch.
  SgdOptimizer opt(model.parameters(), cfg.momentum, 1.0);
  const double before = disc_ce();
  Tape::active().clear();
  Tensor f_s = model.forward_features(frozen.source_features);
  Tensor f_t = model.forward_features(frozen.target_features);
  Tensor probs_t = model.classify(f_t);
  auto pseudo = pseudo_label(probs_t);
  ObjectiveTerms terms;
  terms.classification = weighted_classification_loss(model.classify(f_s),
                                                      frozen.source_labels,
                                                      ClassWeights::uniform(4));
  terms.discriminator = multiclass_discriminator_loss(
      model.discriminate(f_s, 1.0), frozen.source_labels, ClassWeights::uniform(4),
      model.discriminate(f_t, 1.0), pseudo);
  auto [total, breakdown] = total_objective(terms, LossWeights{1.0, 0.0, 0.0});
  backward(total);

  // Step ONLY the discriminator head: CE must drop (gradient descent side).
  // parameters() lists feature net, classifier, discriminator in order; the
  // discriminator here is a single affine (weight + bias).
  auto params = model.parameters();
  for (std::size_t i = 0; i + 2 < params.size(); ++i) params[i].tensor.zero_grad();
  opt.step(1e-3);
  Tape::active().clear();
  const double after = disc_ce();
  CHECK(after < before);
}

TEST_CASE("source-only config degenerates to a plain classifier loop") {
  PdaTask task = generate_pda_task(small_task());

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.per_domain = 16;
  cfg.seed = 3;
  cfg = configure_method(cfg, Method::source_only);

  ModelBundle trained = small_model(21, 2);
  train(trained, task.source, task.target, cfg, {});

  // Reference loop: same sampler stream, plain batch cross-entropy, same SGD.
  ModelBundle reference = small_model(21, 2);
  BatchSampler sampler(task.source, task.target, cfg.per_domain, cfg.seed);
  SgdOptimizer opt(reference.parameters(), cfg.momentum, cfg.head_lr_multiplier);
  const std::size_t total =
      static_cast<std::size_t>(cfg.epochs) * sampler.batches_per_epoch();
  std::size_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& batch : sampler.epoch()) {
      Tape::active().clear();
      opt.zero_grad();
      Tensor probs = reference.classify(reference.forward_features(batch.source_features));
      backward(weighted_classification_loss(probs, batch.source_labels,
                                            ClassWeights::uniform(4)));
      opt.step(lr_schedule(static_cast<double>(t) / static_cast<double>(total), cfg));
      ++t;
    }
  }
  Tape::active().clear();

  CHECK(flatten_params(trained) == flatten_params(reference));
}

TEST_CASE("train validates configuration and tags") {
  PdaTask task = generate_pda_task(small_task());
  ModelBundle model = small_model(2);
  TrainConfig cfg;
  cfg.epochs = -1;
  CHECK_THROWS_AS(train(model, task.source, task.target, cfg, {}), ConfigError);

  cfg = TrainConfig{};
  CHECK_THROWS_AS(train(model, task.target, task.source, cfg, {}), ContractViolation);

  // binary-discriminator config against a 2C-head model
  cfg = TrainConfig{};
  cfg.binary_discriminator_no_centroids = true;
  CHECK_THROWS_AS(train(model, task.source, task.target, cfg, {}), ConfigError);
}
