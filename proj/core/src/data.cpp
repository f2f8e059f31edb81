#include "ccpda/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ccpda/error.hpp"

namespace ccpda {

SampleSet make_sample_set(Tensor features, std::optional<std::vector<int>> labels,
                          DomainTag domain) {
  if (features.shape().size() != 2)
    throw DimensionError("make_sample_set: features must be [n x d], got " +
                         shape_str(features.shape()));
  if (domain == DomainTag::source && !labels)
    throw ContractViolation("make_sample_set: source sets carry labels");
  if (domain == DomainTag::target && labels)
    throw ContractViolation("make_sample_set: target sets are unlabeled; keep ground "
                            "truth separate");
  if (labels && labels->size() != features.rows())
    throw ContractViolation("make_sample_set: " + std::to_string(labels->size()) +
                            " labels for " + std::to_string(features.rows()) + " rows");
  return SampleSet{std::move(features), std::move(labels), domain};
}

void PdaTaskSpec::validate() const {
  if (num_classes < 2) throw ConfigError("task: need at least 2 source classes");
  if (shared_classes.empty()) throw ConfigError("task: shared_classes must be non-empty");
  if (shared_classes.size() >= num_classes)
    throw ConfigError("task: shared classes (" + std::to_string(shared_classes.size()) +
                      ") must be a proper subset of the " + std::to_string(num_classes) +
                      " source classes");
  for (std::size_t c : shared_classes)
    if (c >= num_classes)
      throw ConfigError("task: shared class " + std::to_string(c) + " out of range");
  if (samples_per_class == 0) throw ConfigError("task: samples_per_class must be positive");
  if (input_dim == 0) throw ConfigError("task: input_dim must be positive");
  if (blob_std < 0.0 || noise_scale < 0.0 || circle_radius < 0.0)
    throw ConfigError("task: radius and noise scales must be non-negative");
}

bool PdaTaskSpec::is_shared(std::size_t cls) const {
  return std::find(shared_classes.begin(), shared_classes.end(), cls) !=
         shared_classes.end();
}

namespace {

std::vector<double> class_mean(const PdaTaskSpec& spec, std::size_t cls) {
  std::vector<double> mean(spec.input_dim, 0.0);
  const double angle =
      2.0 * std::numbers::pi * static_cast<double>(cls) / static_cast<double>(spec.num_classes);
  mean[0] = spec.circle_radius * std::cos(angle);
  if (spec.input_dim > 1) mean[1] = spec.circle_radius * std::sin(angle);
  return mean;
}

void apply_shift(const PdaTaskSpec& spec, std::vector<double>& x) {
  if (spec.input_dim > 1 && spec.rotation_deg != 0.0) {
    const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double x0 = x[0], x1 = x[1];
    x[0] = c * x0 - s * x1;
    x[1] = s * x0 + c * x1;
  }
  for (std::size_t j = 0; j < spec.input_dim && j < spec.translation.size(); ++j)
    x[j] += spec.translation[j];
}

}  // namespace

PdaTask generate_pda_task(const PdaTaskSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  const std::size_t d = spec.input_dim;
  const std::size_t n_s = spec.num_classes * spec.samples_per_class;
  const std::size_t n_t = spec.shared_classes.size() * spec.samples_per_class;

  std::vector<double> src(n_s * d);
  std::vector<int> src_labels(n_s);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto mean = class_mean(spec, c);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i, ++row) {
      src_labels[row] = static_cast<int>(c);
      for (std::size_t j = 0; j < d; ++j)
        src[row * d + j] = mean[j] + spec.blob_std * unit_normal(rng);
    }
  }

  std::vector<double> tgt(n_t * d);
  std::vector<int> tgt_labels(n_t);
  row = 0;
  std::vector<double> x(d);
  for (std::size_t c : spec.shared_classes) {
    const auto mean = class_mean(spec, c);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i, ++row) {
      tgt_labels[row] = static_cast<int>(c);
      for (std::size_t j = 0; j < d; ++j) x[j] = mean[j] + spec.blob_std * unit_normal(rng);
      apply_shift(spec, x);
      for (std::size_t j = 0; j < d; ++j)
        tgt[row * d + j] = x[j] + spec.noise_scale * unit_normal(rng);
    }
  }

  PdaTask task;
  task.source = make_sample_set(Tensor::from({n_s, d}, std::move(src)),
                                std::move(src_labels), DomainTag::source);
  task.target = make_sample_set(Tensor::from({n_t, d}, std::move(tgt)), std::nullopt,
                                DomainTag::target);
  task.target_labels = std::move(tgt_labels);
  return task;
}

// ---- CSV -------------------------------------------------------------------

namespace {

std::string format_value(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_value(const std::string& field, std::size_t line_no) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ParseError("csv: non-numeric field '" + field + "' on line " +
                     std::to_string(line_no));
  return v;
}

int parse_label(const std::string& field, std::size_t line_no) {
  int v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ParseError("csv: non-integer label '" + field + "' on line " +
                     std::to_string(line_no));
  return v;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

LoadedCsv load_feature_csv(const std::filesystem::path& path, bool has_labels) {
  std::ifstream is(path);
  if (!is) throw ParseError("csv: cannot open " + path.string());

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t width = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    const std::size_t feature_count = fields.size() - (has_labels ? 1 : 0);
    if (has_labels && fields.size() < 2)
      throw ParseError("csv: line " + std::to_string(line_no) +
                       " has no room for a label column");
    if (feature_count == 0)
      throw ParseError("csv: line " + std::to_string(line_no) + " has no features");
    if (width == 0) width = feature_count;
    if (feature_count != width)
      throw ParseError("csv: ragged row on line " + std::to_string(line_no) + " (" +
                       std::to_string(feature_count) + " fields, expected " +
                       std::to_string(width) + ")");
    for (std::size_t j = 0; j < width; ++j) values.push_back(parse_value(fields[j], line_no));
    if (has_labels) labels.push_back(parse_label(fields.back(), line_no));
    ++rows;
  }
  if (rows == 0) throw ParseError("csv: " + path.string() + " contains no data rows");

  LoadedCsv out;
  out.features = Tensor::from({rows, width}, std::move(values));
  if (has_labels) out.labels = std::move(labels);
  return out;
}

void save_feature_csv(const std::filesystem::path& path, const Tensor& features,
                      const std::vector<int>* labels) {
  if (features.shape().size() != 2)
    throw DimensionError("save_feature_csv: features must be [n x d], got " +
                         shape_str(features.shape()));
  if (labels && labels->size() != features.rows())
    throw ContractViolation("save_feature_csv: label count mismatch");
  std::ofstream os(path);
  if (!os) throw ParseError("csv: cannot open " + path.string() + " for writing");
  const std::size_t n = features.rows(), d = features.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) os << ',';
      os << format_value(features.at(i, j));
    }
    if (labels) os << ',' << (*labels)[i];
    os << '\n';
  }
  if (!os) throw ParseError("csv: write failed for " + path.string());
}

std::vector<int> load_label_column(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("labels: cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.push_back(parse_label(line, line_no));
  }
  if (labels.empty()) throw ParseError("labels: " + path.string() + " is empty");
  return labels;
}

void save_label_column(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream os(path);
  if (!os) throw ParseError("labels: cannot open " + path.string() + " for writing");
  for (int l : labels) os << l << '\n';
}

// ---- BatchSampler ----------------------------------------------------------

void BatchSampler::Stream::reshuffle(std::mt19937_64& rng) {
  std::shuffle(order.begin(), order.end(), rng);
  pos = 0;
}

std::vector<std::size_t> BatchSampler::Stream::take(std::size_t count,
                                                    std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (pos >= order.size()) reshuffle(rng);
    out.push_back(order[pos++]);
  }
  return out;
}

BatchSampler::BatchSampler(const SampleSet& source, const SampleSet& target,
                           std::size_t per_domain, std::uint64_t seed)
    : per_domain_(per_domain), rng_(seed) {
  if (per_domain == 0) throw ConfigError("batch_sampler: per_domain must be positive");
  if (source.size() == 0 || target.size() == 0)
    throw EmptyInputError("batch_sampler: both domains must be non-empty");

  source_.set = &source;
  target_.set = &target;
  source_.order.resize(source.size());
  target_.order.resize(target.size());
  for (std::size_t i = 0; i < source.size(); ++i) source_.order[i] = i;
  for (std::size_t i = 0; i < target.size(); ++i) target_.order[i] = i;

  batches_per_epoch_ =
      std::max<std::size_t>(1, std::max(source.size(), target.size()) / per_domain);
}

namespace {

Tensor gather_feature_rows(const Tensor& features, std::span<const std::size_t> rows) {
  const std::size_t d = features.cols();
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = features.at(rows[i], j);
  return Tensor::from({rows.size(), d}, std::move(out));
}

}  // namespace

std::vector<DomainBatch> BatchSampler::epoch() {
  source_.reshuffle(rng_);
  target_.reshuffle(rng_);

  std::vector<DomainBatch> batches;
  batches.reserve(batches_per_epoch_);
  for (std::size_t b = 0; b < batches_per_epoch_; ++b) {
    const auto s_rows = source_.take(per_domain_, rng_);
    const auto t_rows = target_.take(per_domain_, rng_);

    DomainBatch batch;
    batch.source_features = gather_feature_rows(source_.set->features, s_rows);
    batch.source_labels.reserve(per_domain_);
    for (std::size_t r : s_rows) batch.source_labels.push_back((*source_.set->labels)[r]);
    batch.target_features = gather_feature_rows(target_.set->features, t_rows);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace ccpda
