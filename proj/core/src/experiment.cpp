#include "ccpda/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>
#include <string_view>

#include "json.hpp"

#include "ccpda/error.hpp"

namespace ccpda {

using nlohmann::json;

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {Method::ccpda,    Method::ccpda_inf,
                                              Method::ccpda_e,  Method::ccpda_dc,
                                              Method::pada,     Method::source_only};
  return methods;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::ccpda: return "ccpda";
    case Method::ccpda_inf: return "ccpda_inf";
    case Method::ccpda_e: return "ccpda_e";
    case Method::ccpda_dc: return "ccpda_dc";
    case Method::pada: return "pada";
    case Method::source_only: return "source_only";
  }
  throw ContractViolation("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
  for (Method m : all_methods())
    if (method_name(m) == name) return m;
  throw ConfigError("unknown method '" + name +
                    "' (expected ccpda, ccpda_inf, ccpda_e, ccpda_dc, pada or source_only)");
}

TrainConfig configure_method(TrainConfig base, Method method) {
  switch (method) {
    case Method::ccpda:
      break;
    case Method::ccpda_inf:
      base.disable_selection = true;
      break;
    case Method::ccpda_e:
      base.disable_entropy = true;
      break;
    case Method::ccpda_dc:
      base.binary_discriminator_no_centroids = true;
      break;
    case Method::pada:
      base.binary_discriminator_no_centroids = true;
      base.disable_selection = true;
      base.disable_entropy = true;
      break;
    case Method::source_only:
      base.disable_adversarial = true;
      base.disable_centroids = true;
      base.disable_selection = true;
      base.disable_entropy = true;
      base.uniform_gamma = true;
      break;
  }
  return base;
}

std::size_t disc_categories_for(Method method, std::size_t num_classes) {
  switch (method) {
    case Method::ccpda_dc:
    case Method::pada:
    case Method::source_only:
      return 2;
    default:
      return 2 * num_classes;
  }
}

EvalResult evaluate(const ModelBundle& model, const Tensor& target_features,
                    std::span<const int> ground_truth) {
  if (target_features.rows() != ground_truth.size())
    throw ContractViolation("evaluate: " + std::to_string(ground_truth.size()) +
                            " labels for " + std::to_string(target_features.rows()) +
                            " samples");
  NoGradGuard no_grad;
  Tensor probs = model.classify(model.forward_features(target_features));
  EvalResult result;
  result.predictions = pseudo_label(probs);

  const std::size_t k = model.num_classes();
  std::vector<std::size_t> hits(k, 0), counts(k, 0);
  std::size_t total_hits = 0;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const int truth = ground_truth[i];
    if (truth < 0 || static_cast<std::size_t>(truth) >= k)
      throw ContractViolation("evaluate: ground-truth label " + std::to_string(truth) +
                              " out of range [0, " + std::to_string(k) + ")");
    ++counts[static_cast<std::size_t>(truth)];
    if (result.predictions[i] == truth) {
      ++hits[static_cast<std::size_t>(truth)];
      ++total_hits;
    }
  }
  result.accuracy = static_cast<double>(total_hits) / static_cast<double>(ground_truth.size());
  result.per_class_counts = counts;
  result.per_class_accuracy.resize(k, -1.0);
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] > 0)
      result.per_class_accuracy[c] =
          static_cast<double>(hits[c]) / static_cast<double>(counts[c]);
  return result;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment: need at least one seed");
  if (methods.empty()) throw ConfigError("experiment: need at least one method");
  if (jobs < 1) throw ConfigError("experiment: jobs must be >= 1");
  const bool any_csv = source_csv || target_csv;
  if (any_csv && !(source_csv && target_csv))
    throw ConfigError("experiment: CSV input needs both source_csv and target_csv");
  if (!any_csv) task.validate();
  train.validate();
  if (model.feature_dim == 0) throw ConfigError("experiment: feature_dim must be positive");
}

namespace {

struct RunInputs {
  SampleSet source;
  SampleSet target;
  std::vector<int> target_labels;
};

RunInputs prepare_inputs(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.source_csv) {
    LoadedCsv src = load_feature_csv(*cfg.source_csv, true);
    LoadedCsv tgt = load_feature_csv(*cfg.target_csv, false);
    RunInputs inputs{
        make_sample_set(src.features, std::move(src.labels), DomainTag::source),
        make_sample_set(tgt.features, std::nullopt, DomainTag::target),
        {}};
    if (cfg.target_labels_csv) inputs.target_labels = load_label_column(*cfg.target_labels_csv);
    if (!inputs.target_labels.empty() &&
        inputs.target_labels.size() != inputs.target.size())
      throw ConfigError("experiment: target label file size does not match target CSV");
    return inputs;
  }
  PdaTaskSpec spec = cfg.task;
  spec.seed = seed;  // fresh data draw per run seed
  PdaTask task = generate_pda_task(spec);
  return RunInputs{std::move(task.source), std::move(task.target),
                   std::move(task.target_labels)};
}

RunReport execute_run(const ExperimentConfig& cfg, Method method, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  RunInputs inputs = prepare_inputs(cfg, seed);

  ModelConfig model_cfg;
  model_cfg.input_dim = inputs.source.dim();
  model_cfg.feature_dim = cfg.model.feature_dim;
  model_cfg.num_classes = cfg.source_csv
                              ? static_cast<std::size_t>(
                                    *std::max_element(inputs.source.labels->begin(),
                                                      inputs.source.labels->end()) +
                                    1)
                              : cfg.task.num_classes;
  model_cfg.hidden_dims = cfg.model.hidden_dims;
  model_cfg.classifier_hidden = cfg.model.classifier_hidden;
  model_cfg.disc_hidden = cfg.model.disc_hidden;
  model_cfg.disc_categories = disc_categories_for(method, model_cfg.num_classes);
  model_cfg.seed = seed;
  ModelBundle model = init_model(model_cfg);

  TrainConfig train_cfg = configure_method(cfg.train, method);
  train_cfg.seed = seed;
  TrainingHistory history =
      train(model, inputs.source, inputs.target, train_cfg, inputs.target_labels);

  RunReport report;
  report.method = method;
  report.seed = seed;
  if (!inputs.target_labels.empty())
    report.eval = evaluate(model, inputs.target.features, inputs.target_labels);
  report.final_gamma = history.final_gamma();
  if (!cfg.source_csv && !report.final_gamma.empty()) {
    double shared_sum = 0.0, outlier_sum = 0.0;
    std::size_t shared_n = 0, outlier_n = 0;
    for (std::size_t c = 0; c < report.final_gamma.size(); ++c) {
      if (cfg.task.is_shared(c)) {
        shared_sum += report.final_gamma[c];
        ++shared_n;
      } else {
        outlier_sum += report.final_gamma[c];
        ++outlier_n;
      }
    }
    if (shared_n) report.shared_gamma_mean = shared_sum / static_cast<double>(shared_n);
    if (outlier_n) report.outlier_gamma_mean = outlier_sum / static_cast<double>(outlier_n);
  }
  report.history = std::move(history);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (cfg.emit_files) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const std::string stem = method_name(method) + "_seed" + std::to_string(seed);

    // metrics log: per-epoch gamma/pseudo-accuracy records followed by one
    // JSON record per iteration
    {
      std::ofstream os(cfg.output_dir / (stem + ".metrics.jsonl"));
      for (const EpochRecord& e : report.history.epochs) {
        json rec{{"record", "epoch"},
                 {"epoch", e.epoch},
                 {"gamma", e.gamma},
                 {"pseudo_label_accuracy", e.pseudo_label_accuracy}};
        if (e.selection_full_set) rec["selection_full_set"] = *e.selection_full_set;
        os << rec.dump() << '\n';
      }
      for (std::size_t i = 0; i < report.history.iterations.size(); ++i) {
        const IterationRecord& r = report.history.iterations[i];
        json rec{{"iteration", r.iteration}, {"epoch", r.epoch},       {"lr", r.lr},
                 {"mu", r.mu},               {"l_y", r.losses.l_y},    {"l_d_tilde", r.losses.l_d_tilde},
                 {"l_c", r.losses.l_c},      {"l_inf", r.losses.l_inf}, {"l_e", r.losses.l_e},
                 {"total", r.losses.total},  {"gamma", report.history.gamma_for_iteration(i)}};
        os << rec.dump() << '\n';
      }
    }
    // per-sample predictions (index, predicted, truth)
    if (!inputs.target_labels.empty()) {
      std::ofstream os(cfg.output_dir / (stem + ".predictions.csv"));
      for (std::size_t i = 0; i < report.eval.predictions.size(); ++i)
        os << i << ',' << report.eval.predictions[i] << ',' << inputs.target_labels[i]
           << '\n';
    }
    // final-epoch embeddings: domain, label (true for source, pseudo for target), features
    {
      NoGradGuard no_grad;
      Tensor f_s = model.forward_features(inputs.source.features);
      Tensor f_t = model.forward_features(inputs.target.features);
      std::vector<int> pseudo = pseudo_label(model.classify(f_t));
      std::ofstream os(cfg.output_dir / (stem + ".embeddings.csv"));
      auto dump = [&os](const Tensor& f, std::span<const int> labels, int domain) {
        for (std::size_t i = 0; i < f.rows(); ++i) {
          os << domain << ',' << labels[i];
          for (std::size_t j = 0; j < f.cols(); ++j) {
            char buf[40];
            auto res = std::to_chars(buf, buf + sizeof(buf), f.at(i, j),
                                     std::chars_format::general, 17);
            os << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
          }
          os << '\n';
        }
      };
      dump(f_s, *inputs.source.labels, 0);
      dump(f_t, pseudo, 1);
    }
    save_checkpoint(model, cfg.output_dir / (stem + ".checkpoint.txt"));
  }
  return report;
}

}  // namespace

std::vector<MethodSummary> summarize(const std::vector<RunReport>& runs) {
  std::vector<MethodSummary> out;
  for (Method m : all_methods()) {
    std::vector<double> accs;
    for (const RunReport& r : runs)
      if (r.method == m) accs.push_back(r.eval.accuracy);
    if (accs.empty()) continue;
    MethodSummary s;
    s.method = m;
    s.runs = accs.size();
    double sum = 0.0;
    for (double a : accs) sum += a;
    s.mean_accuracy = sum / static_cast<double>(accs.size());
    if (accs.size() > 1) {
      double sq = 0.0;
      for (double a : accs) sq += (a - s.mean_accuracy) * (a - s.mean_accuracy);
      s.std_accuracy = std::sqrt(sq / static_cast<double>(accs.size() - 1));
    }
    out.push_back(s);
  }
  return out;
}

std::string format_table(const std::vector<MethodSummary>& summaries) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "method" << std::right << std::setw(10) << "mean_acc"
     << std::setw(10) << "std" << std::setw(6) << "runs" << '\n';
  for (const MethodSummary& s : summaries) {
    os << std::left << std::setw(14) << method_name(s.method) << std::right << std::fixed
       << std::setprecision(4) << std::setw(10) << s.mean_accuracy << std::setw(10)
       << s.std_accuracy << std::setw(6) << s.runs << '\n';
  }
  return os.str();
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();

  struct Job {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Method m : config.methods)
    for (std::uint64_t s : config.seeds) jobs.push_back({m, s});

  ExperimentReport report;
  report.runs.resize(jobs.size());

  if (config.jobs <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      report.runs[i] = execute_run(config, jobs[i].method, jobs[i].seed);
  } else {
    // Bounded pool; each run owns its model/tape/RNGs, so runs are independent.
    std::size_t next = 0;
    while (next < jobs.size()) {
      const std::size_t batch =
          std::min<std::size_t>(static_cast<std::size_t>(config.jobs), jobs.size() - next);
      std::vector<std::future<RunReport>> futures;
      for (std::size_t i = 0; i < batch; ++i) {
        const Job j = jobs[next + i];
        futures.push_back(std::async(std::launch::async, [&config, j] {
          return execute_run(config, j.method, j.seed);
        }));
      }
      for (std::size_t i = 0; i < batch; ++i) report.runs[next + i] = futures[i].get();
      next += batch;
    }
  }

  report.summaries = summarize(report.runs);

  if (config.emit_files) {
    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);
    std::ofstream table(config.output_dir / "summary.txt");
    table << format_table(report.summaries);
    std::ofstream csv(config.output_dir / "summary.csv");
    csv << "method,mean_accuracy,std_accuracy,runs\n";
    for (const MethodSummary& s : report.summaries)
      csv << method_name(s.method) << ',' << std::setprecision(17) << s.mean_accuracy << ','
          << s.std_accuracy << ',' << s.runs << '\n';

    json j;
    j["seeds"] = config.seeds;
    j["methods"] = json::array();
    for (Method m : config.methods) j["methods"].push_back(method_name(m));
    j["config"] = {{"epochs", config.train.epochs},
                   {"per_domain", config.train.per_domain},
                   {"base_lr", config.train.base_lr},
                   {"lr_alpha", config.train.lr_alpha},
                   {"lr_beta", config.train.lr_beta},
                   {"momentum", config.train.momentum},
                   {"head_lr_multiplier", config.train.head_lr_multiplier},
                   {"lambda", config.train.lambda},
                   {"mu_final", config.train.mu_final},
                   {"mu_ramp_fraction", config.train.mu_ramp_fraction},
                   {"zeta", config.train.zeta},
                   {"centroid_weight", config.train.centroid_weight},
                   {"centroid_ramp", config.train.centroid_ramp},
                   {"ema_coeff", config.train.ema_coeff},
                   {"feature_dim", config.model.feature_dim},
                   {"hidden_dims", config.model.hidden_dims},
                   {"classifier_hidden", config.model.classifier_hidden},
                   {"disc_hidden", config.model.disc_hidden},
                   {"num_classes", config.task.num_classes},
                   {"shared_classes", config.task.shared_classes},
                   {"samples_per_class", config.task.samples_per_class},
                   {"input_dim", config.task.input_dim},
                   {"circle_radius", config.task.circle_radius},
                   {"blob_std", config.task.blob_std},
                   {"rotation_deg", config.task.rotation_deg},
                   {"translation", config.task.translation},
                   {"noise_scale", config.task.noise_scale}};
    j["runs"] = json::array();
    for (const RunReport& r : report.runs) {
      json run{{"method", method_name(r.method)},
               {"seed", r.seed},
               {"accuracy", r.eval.accuracy},
               {"per_class_accuracy", r.eval.per_class_accuracy},
               {"per_class_counts", r.eval.per_class_counts},
               {"final_gamma", r.final_gamma}};
      if (r.shared_gamma_mean) run["shared_gamma_mean"] = *r.shared_gamma_mean;
      if (r.outlier_gamma_mean) run["outlier_gamma_mean"] = *r.outlier_gamma_mean;
      j["runs"].push_back(run);
    }
    std::ofstream(config.output_dir / "report.json") << j.dump(2) << '\n';
  }
  return report;
}

}  // namespace ccpda
