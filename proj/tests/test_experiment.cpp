#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ccpda/error.hpp"
#include "ccpda/experiment.hpp"

using namespace ccpda;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_experiment(const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.task.num_classes = 4;
  cfg.task.shared_classes = {0, 1};
  cfg.task.samples_per_class = 30;
  cfg.task.blob_std = 0.4;
  cfg.task.rotation_deg = 15.0;
  cfg.task.translation = {0.4, 0.1};
  cfg.train.epochs = 2;
  cfg.train.per_domain = 16;
  cfg.model.feature_dim = 6;
  cfg.model.hidden_dims = {10};
  cfg.seeds = {7};
  cfg.methods = {Method::source_only};
  cfg.output_dir = dir;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("method names round-trip and configure the right switches") {
  for (Method m : all_methods()) CHECK(method_from_name(method_name(m)) == m);
  CHECK_THROWS_AS(method_from_name("nope"), ConfigError);

  TrainConfig base;
  CHECK(configure_method(base, Method::ccpda_inf).disable_selection);
  CHECK(configure_method(base, Method::ccpda_e).disable_entropy);
  CHECK(configure_method(base, Method::ccpda_dc).binary_discriminator_no_centroids);
  TrainConfig pada = configure_method(base, Method::pada);
  CHECK(pada.binary_discriminator_no_centroids);
  CHECK(pada.disable_selection);
  CHECK(pada.disable_entropy);
  CHECK_FALSE(pada.uniform_gamma);
  TrainConfig src = configure_method(base, Method::source_only);
  CHECK(src.disable_adversarial);
  CHECK(src.uniform_gamma);

  CHECK(disc_categories_for(Method::ccpda, 8) == 16);
  CHECK(disc_categories_for(Method::pada, 8) == 2);
}

TEST_CASE("evaluate basics") {
  ModelConfig mc;
  mc.input_dim = 2;
  mc.feature_dim = 4;
  mc.num_classes = 3;
  mc.hidden_dims = {};
  ModelBundle model = init_model(mc);

  SUBCASE("constant predictor on a balanced set scores 1/k") {
    // zero all parameters, then bias class 2 up: every row predicts 2
    for (auto& p : model.parameters())
      for (double& v : p.tensor.mutable_data()) v = 0.0;
    auto params = model.parameters();
    // classifier bias is the 4th tensor (feature w,b then classifier w,b)
    params[3].tensor.mutable_data()[2] = 5.0;

    std::vector<double> x(30 * 2, 0.5);
    std::vector<int> labels(30);
    for (std::size_t i = 0; i < 30; ++i) labels[i] = static_cast<int>(i % 3);
    EvalResult r = evaluate(model, Tensor::from({30, 2}, std::move(x)), labels);
    CHECK(r.accuracy == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.per_class_accuracy[2] == 1.0);
    CHECK(r.per_class_accuracy[0] == 0.0);
  }

  SUBCASE("per-class accuracies average back to the total") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<double> x(60 * 2);
    for (double& v : x) v = dist(rng);
    std::vector<int> labels(60);
    for (std::size_t i = 0; i < 60; ++i) labels[i] = static_cast<int>(rng() % 3);
    EvalResult r = evaluate(model, Tensor::from({60, 2}, std::move(x)), labels);
    double weighted = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
      if (r.per_class_counts[c])
        weighted += r.per_class_accuracy[c] * static_cast<double>(r.per_class_counts[c]);
    CHECK(std::abs(weighted / 60.0 - r.accuracy) <= 1e-9);
  }

  SUBCASE("length mismatch is a contract violation") {
    std::vector<int> labels = {0, 1};
    CHECK_THROWS_AS(evaluate(model, Tensor::zeros({3, 2}), labels), ContractViolation);
  }
}

TEST_CASE("uniform-random predictions score within the binomial band of chance") {
  // Oracle for the evaluation path: predictions drawn uniformly over the
  // shared classes hit 1/|C_t| within a 99% binomial interval.
  PdaTaskSpec spec;
  spec.num_classes = 8;
  spec.shared_classes = {0, 1, 2, 3};
  spec.samples_per_class = 200;
  PdaTask task = generate_pda_task(spec);

  std::mt19937_64 rng(123);
  const std::size_t n = task.target_labels.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int pred = static_cast<int>(spec.shared_classes[rng() % 4]);
    if (pred == task.target_labels[i]) ++hits;
  }
  const double acc = static_cast<double>(hits) / static_cast<double>(n);
  const double p = 0.25;
  const double band = 2.576 * std::sqrt(p * (1 - p) / static_cast<double>(n));
  CHECK(acc > p - band);
  CHECK(acc < p + band);
}

TEST_CASE("summaries: single run has zero std; mean and std match hand values") {
  std::vector<RunReport> runs(1);
  runs[0].method = Method::ccpda;
  runs[0].eval.accuracy = 0.9;
  auto s1 = summarize(runs);
  REQUIRE(s1.size() == 1);
  CHECK(s1[0].mean_accuracy == 0.9);
  CHECK(s1[0].std_accuracy == 0.0);

  runs.resize(2);
  runs[1].method = Method::ccpda;
  runs[1].eval.accuracy = 1.0;
  auto s2 = summarize(runs);
  CHECK(s2[0].mean_accuracy == doctest::Approx(0.95).epsilon(1e-12));

  // five values against the (n-1) formula done by hand
  const std::vector<double> accs = {0.6, 0.7, 0.8, 0.9, 1.0};
  runs.clear();
  for (double a : accs) {
    RunReport r;
    r.method = Method::pada;
    r.eval.accuracy = a;
    runs.push_back(r);
  }
  auto s3 = summarize(runs);
  const double mean = 0.8;
  double sq = 0.0;
  for (double a : accs) sq += (a - mean) * (a - mean);
  CHECK(s3[0].mean_accuracy == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s3[0].std_accuracy == doctest::Approx(std::sqrt(sq / 4.0)).epsilon(1e-12));

  std::string table = format_table(s3);
  CHECK(table.find("pada") != std::string::npos);
}

TEST_CASE("run_experiment emits reproducible artifacts") {
  const fs::path dir_a = fs::temp_directory_path() / "ccpda_exp_a";
  const fs::path dir_b = fs::temp_directory_path() / "ccpda_exp_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  ExperimentConfig cfg = tiny_experiment(dir_a);
  ExperimentReport report = run_experiment(cfg);
  REQUIRE(report.runs.size() == 1);
  CHECK(report.runs[0].eval.accuracy >= 0.0);
  REQUIRE(report.summaries.size() == 1);
  CHECK(report.summaries[0].runs == 1);

  cfg.output_dir = dir_b;
  run_experiment(cfg);

  for (const char* name :
       {"summary.txt", "summary.csv", "report.json", "source_only_seed7.metrics.jsonl",
        "source_only_seed7.predictions.csv", "source_only_seed7.embeddings.csv",
        "source_only_seed7.checkpoint.txt"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(dir_a / name));
    CHECK(slurp(dir_a / name) == slurp(dir_b / name));
  }

  SUBCASE("reported accuracy equals a recount from the predictions file") {
    std::ifstream is(dir_a / "source_only_seed7.predictions.csv");
    std::string line;
    std::size_t hits = 0, total = 0;
    while (std::getline(is, line)) {
      std::stringstream ss(line);
      std::string idx, pred, truth;
      std::getline(ss, idx, ',');
      std::getline(ss, pred, ',');
      std::getline(ss, truth, ',');
      if (pred == truth) ++hits;
      ++total;
    }
    REQUIRE(total > 0);
    CHECK(report.runs[0].eval.accuracy ==
          doctest::Approx(static_cast<double>(hits) / static_cast<double>(total))
              .epsilon(1e-12));
  }

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("parallel sweep matches the sequential result") {
  const fs::path dir = fs::temp_directory_path() / "ccpda_exp_par";
  fs::remove_all(dir);
  ExperimentConfig cfg = tiny_experiment(dir);
  cfg.methods = {Method::source_only, Method::pada};
  cfg.seeds = {1, 2};
  cfg.emit_files = false;

  cfg.jobs = 1;
  ExperimentReport seq = run_experiment(cfg);
  cfg.jobs = 4;
  ExperimentReport par = run_experiment(cfg);
  REQUIRE(seq.runs.size() == par.runs.size());
  for (std::size_t i = 0; i < seq.runs.size(); ++i) {
    CHECK(seq.runs[i].method == par.runs[i].method);
    CHECK(seq.runs[i].seed == par.runs[i].seed);
    CHECK(seq.runs[i].eval.accuracy == par.runs[i].eval.accuracy);
    CHECK(seq.runs[i].final_gamma == par.runs[i].final_gamma);
  }
}

TEST_CASE("invalid experiment configs fail before any training") {
  ExperimentConfig cfg = tiny_experiment("unused");
  cfg.seeds = {};
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);

  cfg = tiny_experiment("unused");
  cfg.task.shared_classes = {0, 1, 2, 3};
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);

  cfg = tiny_experiment("unused");
  cfg.source_csv = "only_source.csv";
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);

  cfg = tiny_experiment("unused");
  cfg.train.mu_ramp_fraction = 2.0;
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("csv-backed experiment runs end to end") {
  const fs::path dir = fs::temp_directory_path() / "ccpda_exp_csv";
  fs::remove_all(dir);
  fs::create_directories(dir);

  PdaTaskSpec spec;
  spec.num_classes = 4;
  spec.shared_classes = {0, 1};
  spec.samples_per_class = 25;
  PdaTask task = generate_pda_task(spec);
  save_feature_csv(dir / "source.csv", task.source.features, &*task.source.labels);
  save_feature_csv(dir / "target.csv", task.target.features, nullptr);
  save_label_column(dir / "target_labels.csv", task.target_labels);

  ExperimentConfig cfg = tiny_experiment(dir / "out");
  cfg.source_csv = dir / "source.csv";
  cfg.target_csv = dir / "target.csv";
  cfg.target_labels_csv = dir / "target_labels.csv";
  cfg.emit_files = false;
  ExperimentReport report = run_experiment(cfg);
  REQUIRE(report.runs.size() == 1);
  CHECK(report.runs[0].eval.accuracy >= 0.0);
  CHECK_FALSE(report.runs[0].shared_gamma_mean.has_value());
  fs::remove_all(dir);
}
