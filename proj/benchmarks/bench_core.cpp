#include <benchmark/benchmark.h>

#include <random>

#include "ccpda/data.hpp"
#include "ccpda/losses.hpp"
#include "ccpda/model.hpp"
#include "ccpda/trainer.hpp"

using namespace ccpda;

namespace {

Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> data(rows * cols);
  for (double& v : data) v = dist(rng);
  return Tensor::from({rows, cols}, std::move(data));
}

}  // namespace

static void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_batch(n, n, 1);
  Tensor b = random_batch(n, n, 2);
  a.set_requires_grad(true);
  for (auto _ : state) {
    Tape::active().clear();
    a.zero_grad();
    backward(sum(matmul(a, b)));
    benchmark::DoNotOptimize(a.grad().data());
  }
  Tape::active().clear();
}
BENCHMARK(BM_MatmulBackward)->Arg(16)->Arg(64)->Arg(128);

static void BM_ObjectiveForwardBackward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.feature_dim = 8;
  cfg.num_classes = 8;
  cfg.hidden_dims = {16};
  ModelBundle model = init_model(cfg);

  Tensor x_s = random_batch(36, 2, 3);
  Tensor x_t = random_batch(36, 2, 4);
  std::vector<int> labels(36);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 8);
  ClassWeights gamma = ClassWeights::uniform(8);
  auto params = model.parameters();

  for (auto _ : state) {
    Tape::active().clear();
    for (auto& p : params) p.tensor.zero_grad();
    Tensor f_s = model.forward_features(x_s);
    Tensor f_t = model.forward_features(x_t);
    Tensor probs_s = model.classify(f_s);
    Tensor probs_t = model.classify(f_t);
    auto pseudo = pseudo_label(probs_t);

    ObjectiveTerms terms;
    terms.classification = weighted_classification_loss(probs_s, labels, gamma);
    terms.discriminator = multiclass_discriminator_loss(
        model.discriminate(f_s, 1.0), labels, gamma, model.discriminate(f_t, 1.0), pseudo);
    terms.selection = selection_loss(probs_t);
    terms.entropy = entropy_loss(probs_s, labels, gamma, probs_t);
    auto [total, breakdown] = total_objective(terms, LossWeights{1.0, 0.1, 0.1});
    backward(total);
    benchmark::DoNotOptimize(breakdown.total);
  }
  Tape::active().clear();
}
BENCHMARK(BM_ObjectiveForwardBackward);

static void BM_TrainEpoch(benchmark::State& state) {
  PdaTaskSpec spec;
  spec.samples_per_class = 50;
  PdaTask task = generate_pda_task(spec);

  for (auto _ : state) {
    state.PauseTiming();
    ModelConfig mc;
    mc.input_dim = 2;
    mc.feature_dim = 8;
    mc.num_classes = 8;
    mc.hidden_dims = {16};
    ModelBundle model = init_model(mc);
    TrainConfig cfg;
    cfg.epochs = 1;
    state.ResumeTiming();
    auto history = train(model, task.source, task.target, cfg, task.target_labels);
    benchmark::DoNotOptimize(history.iterations.size());
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
