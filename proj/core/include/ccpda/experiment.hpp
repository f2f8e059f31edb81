#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ccpda/data.hpp"
#include "ccpda/model.hpp"
#include "ccpda/trainer.hpp"

namespace ccpda {

/// Training method: the full system, its ablation variants, the baseline
/// with a binary discriminator and no extra regularizers, and plain
/// source-only training.
enum class Method { ccpda, ccpda_inf, ccpda_e, ccpda_dc, pada, source_only };

const std::vector<Method>& all_methods();
std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// Applies a method's ablation switches on top of a base TrainConfig.
TrainConfig configure_method(TrainConfig base, Method method);
/// Discriminator width the method needs (2*num_classes or 2).
std::size_t disc_categories_for(Method method, std::size_t num_classes);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // indexed by class; -1 if unseen
  std::vector<std::size_t> per_class_counts;
  std::vector<int> predictions;
};

/// Argmax-vs-ground-truth accuracy with a per-class breakdown. The count-
/// weighted average of per-class accuracies equals the overall accuracy.
EvalResult evaluate(const ModelBundle& model, const Tensor& target_features,
                    std::span<const int> ground_truth);

struct ModelShape {
  std::size_t feature_dim = 8;
  std::vector<std::size_t> hidden_dims = {16};
  std::vector<std::size_t> classifier_hidden = {};
  std::vector<std::size_t> disc_hidden = {};
};

struct ExperimentConfig {
  PdaTaskSpec task;
  TrainConfig train;
  ModelShape model;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<Method> methods = {Method::ccpda};
  std::filesystem::path output_dir = "ccpda_out";
  /// When set, load data from CSV instead of generating the synthetic task.
  std::optional<std::filesystem::path> source_csv;
  std::optional<std::filesystem::path> target_csv;
  std::optional<std::filesystem::path> target_labels_csv;
  int jobs = 1;
  bool emit_files = true;

  void validate() const;
};

struct RunReport {
  Method method = Method::ccpda;
  std::uint64_t seed = 0;
  EvalResult eval;
  std::vector<double> final_gamma;
  /// Mean gamma over shared / outlier classes; only meaningful for the
  /// synthetic task where the shared set is known.
  std::optional<double> shared_gamma_mean;
  std::optional<double> outlier_gamma_mean;
  double wall_seconds = 0.0;  // reported on stdout only, never in files
  TrainingHistory history;
};

struct MethodSummary {
  Method method = Method::ccpda;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample std (n-1); 0 for a single run
  std::size_t runs = 0;
};

struct ExperimentReport {
  std::vector<RunReport> runs;
  std::vector<MethodSummary> summaries;
};

/// Trains every (method, seed) pair, evaluates on the target, aggregates a
/// per-method table and (when emit_files) writes metrics logs, predictions,
/// embeddings, checkpoints and the summary under output_dir.
ExperimentReport run_experiment(const ExperimentConfig& config);

std::vector<MethodSummary> summarize(const std::vector<RunReport>& runs);

/// Fixed-order text table of per-method mean +/- std accuracy.
std::string format_table(const std::vector<MethodSummary>& summaries);

}  // namespace ccpda
