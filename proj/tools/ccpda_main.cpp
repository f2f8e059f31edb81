#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ccpda/data.hpp"
#include "ccpda/error.hpp"
#include "ccpda/experiment.hpp"
#include "ccpda/model.hpp"

namespace {

using namespace ccpda;

struct CliOptions {
  ExperimentConfig experiment;
  std::vector<std::string> method_names = {"ccpda"};
  std::string source_csv, target_csv, target_labels_csv;
  std::string checkpoint;
  std::string eval_csv;
};

void add_task_options(CLI::App* cmd, PdaTaskSpec& task) {
  cmd->add_option("--num_classes", task.num_classes, "Number of source classes");
  cmd->add_option("--shared_classes", task.shared_classes,
                  "Class indices present in the target domain")
      ->delimiter(',');
  cmd->add_option("--samples_per_class", task.samples_per_class,
                  "Samples per class per domain");
  cmd->add_option("--input_dim", task.input_dim, "Input dimensionality");
  cmd->add_option("--circle_radius", task.circle_radius, "Radius of the class-mean circle");
  cmd->add_option("--blob_std", task.blob_std, "Within-class standard deviation");
  cmd->add_option("--rotation_deg", task.rotation_deg,
                  "Target rotation (degrees, first two dims)");
  cmd->add_option("--translation", task.translation, "Target translation vector")
      ->delimiter(',');
  cmd->add_option("--noise_scale", task.noise_scale, "Extra target noise after the shift");
  cmd->add_option("--task_seed", task.seed, "Seed for the generate subcommand");
}

void add_train_options(CLI::App* cmd, TrainConfig& train, ModelShape& model) {
  cmd->add_option("--epochs", train.epochs, "Training epochs");
  cmd->add_option("--per_domain", train.per_domain, "Samples per domain per batch");
  cmd->add_option("--base_lr", train.base_lr, "Initial learning rate");
  cmd->add_option("--lr_alpha", train.lr_alpha, "Learning-rate annealing alpha");
  cmd->add_option("--lr_beta", train.lr_beta, "Learning-rate annealing beta");
  cmd->add_option("--momentum", train.momentum, "SGD momentum");
  cmd->add_option("--head_lr_multiplier", train.head_lr_multiplier,
                  "LR multiplier for classifier/discriminator");
  cmd->add_option("--lambda", train.lambda, "Adversarial loss weight");
  cmd->add_option("--mu_final", train.mu_final, "Final selection-loss weight");
  cmd->add_option("--mu_ramp_fraction", train.mu_ramp_fraction,
                  "Fraction of training over which mu ramps up");
  cmd->add_option("--zeta", train.zeta, "Entropy loss weight");
  cmd->add_option("--centroid_weight", train.centroid_weight,
                  "Scale on the centroid alignment term (1 = unscaled)");
  cmd->add_flag("--centroid_ramp", train.centroid_ramp,
                "Ease the centroid term in over the mu ramp window");
  cmd->add_option("--ema_coeff", train.ema_coeff, "Centroid moving-average coefficient");
  cmd->add_flag("--disable_selection", train.disable_selection,
                "Drop the selection regularizer");
  cmd->add_flag("--disable_entropy", train.disable_entropy, "Drop the entropy regularizer");
  cmd->add_flag("--binary_discriminator_no_centroids",
                train.binary_discriminator_no_centroids,
                "Binary discriminator, no centroid alignment");
  cmd->add_flag("--adversarial_ramp", train.adversarial_ramp,
                "Ramp the reversal coefficient 2/(1+e^-10rho)-1");
  cmd->add_flag("--full_set_selection", train.full_set_selection_diagnostic,
                "Log the selection loss over the full target set each epoch");
  cmd->add_option("--feature_dim", model.feature_dim, "Feature extractor output width");
  cmd->add_option("--hidden_dims", model.hidden_dims, "Feature extractor hidden widths")
      ->delimiter(',');
  cmd->add_option("--classifier_hidden", model.classifier_hidden,
                  "Classifier hidden widths")
      ->delimiter(',');
  cmd->add_option("--disc_hidden", model.disc_hidden, "Discriminator hidden widths")
      ->delimiter(',');
}

void add_data_options(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--source_csv", opt.source_csv, "Labeled source features (CSV)");
  cmd->add_option("--target_csv", opt.target_csv, "Unlabeled target features (CSV)");
  cmd->add_option("--target_labels_csv", opt.target_labels_csv,
                  "Ground-truth target labels, one per line (evaluation only)");
}

void finalize_data_options(CliOptions& opt) {
  if (!opt.source_csv.empty()) opt.experiment.source_csv = opt.source_csv;
  if (!opt.target_csv.empty()) opt.experiment.target_csv = opt.target_csv;
  if (!opt.target_labels_csv.empty())
    opt.experiment.target_labels_csv = opt.target_labels_csv;
}

int run_generate(const CliOptions& opt) {
  const PdaTaskSpec& spec = opt.experiment.task;
  PdaTask task = generate_pda_task(spec);
  const auto& dir = opt.experiment.output_dir;
  std::filesystem::create_directories(dir);
  save_feature_csv(dir / "source.csv", task.source.features, &*task.source.labels);
  save_feature_csv(dir / "target.csv", task.target.features, nullptr);
  save_label_column(dir / "target_labels.csv", task.target_labels);
  std::cout << "wrote " << task.source.size() << " source and " << task.target.size()
            << " target samples to " << dir.string() << "\n";
  return 0;
}

int run_sweep(CliOptions& opt) {
  finalize_data_options(opt);
  opt.experiment.methods.clear();
  for (const std::string& name : opt.method_names)
    opt.experiment.methods.push_back(method_from_name(name));
  ExperimentReport report = run_experiment(opt.experiment);
  std::cout << format_table(report.summaries);
  double wall = 0.0;
  for (const RunReport& r : report.runs) wall += r.wall_seconds;
  std::cout << "total train+eval time: " << wall << " s\n";
  std::cout << "artifacts in " << opt.experiment.output_dir.string() << "\n";
  return 0;
}

int run_train(CliOptions& opt) {
  if (opt.method_names.size() != 1)
    throw ConfigError("train: exactly one --method expected");
  if (opt.experiment.seeds.size() != 1)
    throw ConfigError("train: exactly one seed expected (use sweep for several)");
  return run_sweep(opt);
}

int run_eval(const CliOptions& opt) {
  if (opt.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  if (opt.eval_csv.empty()) throw ConfigError("eval: --features is required");
  ModelBundle model = load_checkpoint(opt.checkpoint);
  LoadedCsv csv = load_feature_csv(opt.eval_csv, true);
  EvalResult result = evaluate(model, csv.features, *csv.labels);
  std::cout << "accuracy " << result.accuracy << " over " << csv.features.rows()
            << " samples\n";
  for (std::size_t c = 0; c < result.per_class_accuracy.size(); ++c)
    if (result.per_class_counts[c] > 0)
      std::cout << "  class " << c << ": " << result.per_class_accuracy[c] << " ("
                << result.per_class_counts[c] << " samples)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial domain adaptation trainer: class-weighted adversarial "
               "alignment with centroid, selection and entropy regularizers"};
  app.require_subcommand(1);

  CliOptions opt;

  auto add_common = [&opt](CLI::App* cmd) {
    cmd->set_config("--config", "", "Flat key=value config file; flags override it");
    cmd->allow_config_extras(CLI::config_extras_mode::error);
    cmd->add_option("--output_dir", opt.experiment.output_dir, "Artifact directory");
  };

  CLI::App* generate = app.add_subcommand("generate", "Write a synthetic task to CSV");
  add_common(generate);
  add_task_options(generate, opt.experiment.task);

  CLI::App* train_cmd = app.add_subcommand("train", "Train a single run");
  add_common(train_cmd);
  add_task_options(train_cmd, opt.experiment.task);
  add_train_options(train_cmd, opt.experiment.train, opt.experiment.model);
  add_data_options(train_cmd, opt);
  train_cmd->add_option("--method", opt.method_names, "Training method")->delimiter(',');
  train_cmd->add_option("--seeds", opt.experiment.seeds, "Run seed")->delimiter(',');

  CLI::App* sweep = app.add_subcommand("sweep", "Train methods x seeds and tabulate");
  add_common(sweep);
  add_task_options(sweep, opt.experiment.task);
  add_train_options(sweep, opt.experiment.train, opt.experiment.model);
  add_data_options(sweep, opt);
  sweep->add_option("--methods", opt.method_names, "Methods to compare")->delimiter(',');
  sweep->add_option("--seeds", opt.experiment.seeds, "Seeds (one run per seed)")
      ->delimiter(',');
  sweep->add_option("--jobs", opt.experiment.jobs, "Concurrent runs");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on labeled CSV");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", opt.checkpoint, "Model checkpoint path");
  eval_cmd->add_option("--features", opt.eval_csv, "Labeled feature CSV");

  try {
    app.parse(argc, argv);
    if (generate->parsed()) return run_generate(opt);
    if (train_cmd->parsed()) return run_train(opt);
    if (sweep->parsed()) return run_sweep(opt);
    if (eval_cmd->parsed()) return run_eval(opt);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
