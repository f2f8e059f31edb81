#include "ccpda/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ccpda/error.hpp"

namespace ccpda {

namespace {

Tensor he_init(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in_dim)));
  std::vector<double> w(in_dim * out_dim);
  for (double& v : w) v = dist(rng);
  Tensor t = Tensor::from({in_dim, out_dim}, std::move(w));
  t.set_requires_grad(true);
  return t;
}

void check_width(const Tensor& x, std::size_t expected, const char* what) {
  if (x.shape().size() != 2 || x.cols() != expected)
    throw DimensionError(std::string(what) + ": expected input width " +
                         std::to_string(expected) + ", got " + shape_str(x.shape()));
}

}  // namespace

Mlp::Mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden_dims,
         std::size_t out_dim, bool relu_on_output, std::mt19937_64& rng)
    : in_dim_(in_dim), out_dim_(out_dim), relu_on_output_(relu_on_output) {
  if (in_dim == 0 || out_dim == 0)
    throw ConfigError("Mlp: dimensions must be positive");
  for (std::size_t h : hidden_dims)
    if (h == 0) throw ConfigError("Mlp: hidden dimension must be positive");

  std::size_t prev = in_dim;
  for (std::size_t h : hidden_dims) {
    Affine layer;
    layer.weight = he_init(prev, h, rng);
    layer.bias = Tensor::zeros({h});
    layer.bias.set_requires_grad(true);
    layers_.push_back(std::move(layer));
    prev = h;
  }
  Affine out;
  out.weight = he_init(prev, out_dim, rng);
  out.bias = Tensor::zeros({out_dim});
  out.bias.set_requires_grad(true);
  layers_.push_back(std::move(out));
}

Tensor Mlp::forward(const Tensor& x) const {
  check_width(x, in_dim_, "Mlp::forward");
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = add_row(matmul(h, layers_[i].weight), layers_[i].bias);
    const bool last = (i + 1 == layers_.size());
    if (!last || relu_on_output_) h = relu(h);
  }
  return h;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  out.reserve(layers_.size() * 2);
  for (const Affine& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

ModelBundle init_model(const ModelConfig& config) {
  ModelConfig cfg = config;
  if (cfg.input_dim == 0 || cfg.feature_dim == 0 || cfg.num_classes == 0)
    throw ConfigError("init_model: input_dim, feature_dim and num_classes must be positive");
  if (cfg.disc_categories == 0) cfg.disc_categories = 2 * cfg.num_classes;
  if (cfg.disc_categories != 2 * cfg.num_classes && cfg.disc_categories != 2)
    throw ConfigError("init_model: disc_categories must be 2*num_classes or 2, got " +
                      std::to_string(cfg.disc_categories));

  std::mt19937_64 rng(cfg.seed);
  ModelBundle m;
  m.config_ = cfg;
  m.feature_net_ = Mlp(cfg.input_dim, cfg.hidden_dims, cfg.feature_dim, true, rng);
  m.classifier_net_ = Mlp(cfg.feature_dim, cfg.classifier_hidden, cfg.num_classes, false, rng);
  m.discriminator_net_ = Mlp(cfg.feature_dim, cfg.disc_hidden, cfg.disc_categories, false, rng);
  return m;
}

ModelBundle init_model(std::size_t input_dim, std::size_t feature_dim,
                       const std::vector<std::size_t>& hidden_dims,
                       std::size_t num_classes, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.feature_dim = feature_dim;
  cfg.num_classes = num_classes;
  cfg.hidden_dims = hidden_dims;
  cfg.seed = seed;
  return init_model(cfg);
}

Tensor ModelBundle::forward_features(const Tensor& x) const {
  check_width(x, config_.input_dim, "forward_features");
  return feature_net_.forward(x);
}

Tensor ModelBundle::classifier_logits(const Tensor& features) const {
  check_width(features, config_.feature_dim, "classify");
  return classifier_net_.forward(features);
}

Tensor ModelBundle::classify(const Tensor& features) const {
  return softmax(classifier_logits(features));
}

Tensor ModelBundle::discriminate(const Tensor& features, double grl_coeff) const {
  check_width(features, config_.feature_dim, "discriminate");
  Tensor reversed = grad_reverse(features, grl_coeff);
  return softmax(discriminator_net_.forward(reversed));
}

std::vector<ModelBundle::Param> ModelBundle::parameters() const {
  std::vector<Param> out;
  for (const Tensor& t : feature_net_.parameters())
    out.push_back({t, ParamRole::feature_extractor});
  for (const Tensor& t : classifier_net_.parameters()) out.push_back({t, ParamRole::head});
  for (const Tensor& t : discriminator_net_.parameters()) out.push_back({t, ParamRole::head});
  return out;
}

// ---- checkpoint ------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "ccpda_checkpoint";
constexpr int kCheckpointVersion = 1;

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string join_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(dims[i]);
  }
  return out;
}

std::vector<std::size_t> parse_dims(const std::string& s) {
  if (s == "-") return {};
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoul(tok));
  return out;
}

void write_mlp(std::ostream& os, const std::string& name, const Mlp& mlp) {
  const auto params = mlp.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params[i];
    os << name << (i % 2 == 0 ? ".w" : ".b") << i / 2;
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << '\n';
    const auto d = t.data();
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (j) os << ' ';
      os << format_double(d[j]);
    }
    os << '\n';
  }
}

void read_mlp_params(std::istream& is, Mlp& mlp) {
  for (Tensor t : mlp.parameters()) {
    std::string header;
    if (!std::getline(is, header)) throw ParseError("checkpoint: truncated parameter block");
    std::string values;
    if (!std::getline(is, values)) throw ParseError("checkpoint: missing values after " + header);
    auto dst = t.mutable_data();
    const char* p = values.c_str();
    const char* end = p + values.size();
    for (std::size_t j = 0; j < dst.size(); ++j) {
      while (p < end && *p == ' ') ++p;
      auto res = std::from_chars(p, end, dst[j]);
      if (res.ec != std::errc())
        throw ParseError("checkpoint: bad value in block '" + header + "'");
      p = res.ptr;
    }
  }
}

}  // namespace

void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open checkpoint for writing: " + path.string());
  const ModelConfig& c = model.config();
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "input_dim " << c.input_dim << '\n';
  os << "feature_dim " << c.feature_dim << '\n';
  os << "num_classes " << c.num_classes << '\n';
  os << "disc_categories " << c.disc_categories << '\n';
  os << "hidden_dims " << join_dims(c.hidden_dims) << '\n';
  os << "classifier_hidden " << join_dims(c.classifier_hidden) << '\n';
  os << "disc_hidden " << join_dims(c.disc_hidden) << '\n';
  os << "seed " << c.seed << '\n';
  // Parameter order mirrors ModelBundle::parameters().
  write_mlp(os, "feat", model.feature_net_);
  write_mlp(os, "cls", model.classifier_net_);
  write_mlp(os, "disc", model.discriminator_net_);
  if (!os) throw ParseError("checkpoint write failed: " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open checkpoint: " + path.string());

  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != kCheckpointMagic)
    throw ParseError("not a ccpda checkpoint: " + path.string());
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  auto read_field = [&is](const char* key) {
    std::string name, value;
    if (!(is >> name >> value) || name != key)
      throw ParseError(std::string("checkpoint: expected field '") + key + "'");
    return value;
  };
  cfg.input_dim = std::stoul(read_field("input_dim"));
  cfg.feature_dim = std::stoul(read_field("feature_dim"));
  cfg.num_classes = std::stoul(read_field("num_classes"));
  cfg.disc_categories = std::stoul(read_field("disc_categories"));
  cfg.hidden_dims = parse_dims(read_field("hidden_dims"));
  cfg.classifier_hidden = parse_dims(read_field("classifier_hidden"));
  cfg.disc_hidden = parse_dims(read_field("disc_hidden"));
  cfg.seed = std::stoull(read_field("seed"));
  is.ignore();  // trailing newline

  ModelBundle m = init_model(cfg);
  read_mlp_params(is, m.feature_net_);
  read_mlp_params(is, m.classifier_net_);
  read_mlp_params(is, m.discriminator_net_);
  return m;
}

}  // namespace ccpda
