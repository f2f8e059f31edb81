#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ccpda/tensor.hpp"

namespace ccpda {

enum class DomainTag { source, target };

/// Immutable batch of samples. Labels travel with the set only for the
/// source domain; synthetic target labels are ground truth for evaluation
/// and are returned separately by the generator.
struct SampleSet {
  Tensor features;  // [n x d]
  std::optional<std::vector<int>> labels;
  DomainTag domain = DomainTag::source;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

SampleSet make_sample_set(Tensor features, std::optional<std::vector<int>> labels,
                          DomainTag domain);

/// Synthetic partial-domain-adaptation task: Gaussian blobs with class means
/// on a circle; the target draws only from the shared classes and is then
/// rotated, translated and re-noised.
struct PdaTaskSpec {
  std::size_t num_classes = 8;
  std::vector<std::size_t> shared_classes = {0, 1, 2, 3};
  std::size_t samples_per_class = 200;  // per domain
  std::size_t input_dim = 2;
  double circle_radius = 3.0;
  double blob_std = 0.5;
  double rotation_deg = 30.0;            // applied in the first two dimensions
  std::vector<double> translation = {};  // padded with zeros to input_dim
  double noise_scale = 0.0;              // extra target noise after the shift
  std::uint64_t seed = 0;

  void validate() const;
  bool is_shared(std::size_t cls) const;
};

struct PdaTask {
  SampleSet source;
  SampleSet target;
  std::vector<int> target_labels;  // evaluation-only ground truth
};

PdaTask generate_pda_task(const PdaTaskSpec& spec);

/// Parsed CSV: features plus an optional trailing integer label column.
struct LoadedCsv {
  Tensor features;
  std::optional<std::vector<int>> labels;
};

/// Strict CSV reader: equal-width numeric rows, no header; malformed rows are
/// rejected with their 1-based line number.
LoadedCsv load_feature_csv(const std::filesystem::path& path, bool has_labels);

/// Writes features (and labels when present) with 17 significant digits so a
/// write-then-read round trip is bit-exact.
void save_feature_csv(const std::filesystem::path& path, const Tensor& features,
                      const std::vector<int>* labels = nullptr);

/// One integer label per line.
std::vector<int> load_label_column(const std::filesystem::path& path);
void save_label_column(const std::filesystem::path& path, std::span<const int> labels);

/// A paired mini-batch: labeled source samples plus unlabeled target samples.
struct DomainBatch {
  Tensor source_features;
  std::vector<int> source_labels;
  Tensor target_features;
};

/// Epoch-wise paired sampling: both domains reshuffle at each epoch, batches
/// take exactly per_domain samples from each side, and the smaller domain
/// reshuffles and cycles as needed. Deterministic given the seed.
class BatchSampler {
 public:
  BatchSampler(const SampleSet& source, const SampleSet& target, std::size_t per_domain,
               std::uint64_t seed);

  std::size_t batches_per_epoch() const { return batches_per_epoch_; }
  std::vector<DomainBatch> epoch();

 private:
  struct Stream {
    const SampleSet* set;
    std::vector<std::size_t> order;
    std::size_t pos = 0;

    void reshuffle(std::mt19937_64& rng);
    std::vector<std::size_t> take(std::size_t count, std::mt19937_64& rng);
  };

  Stream source_;
  Stream target_;
  std::size_t per_domain_;
  std::size_t batches_per_epoch_;
  std::mt19937_64 rng_;
};

}  // namespace ccpda
