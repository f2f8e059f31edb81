#include "ccpda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ccpda/error.hpp"

namespace ccpda {

namespace {

thread_local bool g_recording = true;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require_valid(const Tensor& t, const char* what) {
  if (!t.valid()) throw ContractViolation(std::string(what) + ": empty tensor handle");
}

void require_rank2(const Tensor& t, const char* what) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(what) + ": expected a rank-2 tensor, got " +
                         shape_str(t.shape()));
}

constexpr double kLogClamp = 1e-12;

}  // namespace

std::string shape_str(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor make_op_output(std::vector<std::size_t> shape, std::vector<double> data,
                      bool track) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = track;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_numel(shape);
  return make_op_output(std::move(shape), std::vector<double>(n, 0.0), false);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = shape_numel(shape);
  return make_op_output(std::move(shape), std::vector<double>(n, value), false);
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size())
    throw DimensionError("Tensor::from: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  return make_op_output(std::move(shape), std::move(data), false);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const std::vector<std::size_t>& Tensor::shape() const {
  require_valid(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::size() const {
  require_valid(*this, "size");
  return node_->data.size();
}

std::size_t Tensor::rows() const {
  require_valid(*this, "rows");
  return node_->shape.empty() ? 0 : node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_valid(*this, "cols");
  return node_->shape.size() >= 2 ? node_->shape[1] : 1;
}

std::span<const double> Tensor::data() const {
  require_valid(*this, "data");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  require_valid(*this, "mutable_data");
  return node_->data;
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractViolation("item: tensor " + shape_str(shape()) + " is not a scalar");
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require_rank2(*this, "at");
  return node_->data[r * cols() + c];
}

double Tensor::operator[](std::size_t i) const {
  require_valid(*this, "operator[]");
  return node_->data[i];
}

Tensor& Tensor::set_requires_grad(bool enabled) {
  require_valid(*this, "set_requires_grad");
  node_->requires_grad = enabled;
  return *this;
}

bool Tensor::requires_grad() const {
  require_valid(*this, "requires_grad");
  return node_->requires_grad;
}

std::span<const double> Tensor::grad() const {
  require_valid(*this, "grad");
  return node_->grad;
}

void Tensor::zero_grad() {
  require_valid(*this, "zero_grad");
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  require_valid(*this, "detach");
  return make_op_output(node_->shape, node_->data, false);
}

// ---- Tape ------------------------------------------------------------------

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::clear() { entries_.clear(); }

void Tape::record(std::vector<detail::NodePtr> nodes, std::function<void()> pull) {
  entries_.push_back(Entry{std::move(nodes), std::move(pull)});
}

void Tape::run_backward(const detail::NodePtr& loss) {
  std::unordered_set<detail::TensorNode*> touched;
  touched.reserve(entries_.size() * 2 + 1);
  for (const Entry& e : entries_)
    for (const auto& n : e.nodes)
      if (touched.insert(n.get()).second) n->adjoint.assign(n->data.size(), 0.0);
  if (touched.insert(loss.get()).second) loss->adjoint.assign(loss->data.size(), 0.0);

  loss->adjoint[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->pull();

  for (detail::TensorNode* n : touched) {
    if (!n->requires_grad) continue;
    if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
    for (std::size_t i = 0; i < n->adjoint.size(); ++i) n->grad[i] += n->adjoint[i];
  }
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }

bool grad_recording_enabled() { return g_recording; }

void backward(const Tensor& loss) {
  require_valid(loss, "backward");
  if (!loss.is_scalar())
    throw ContractViolation("backward: loss must be a scalar, got " +
                            shape_str(loss.shape()));
  Tape::active().run_backward(loss.node());
}

// ---- primitives ------------------------------------------------------------

namespace {

bool should_track(std::initializer_list<const Tensor*> inputs) {
  if (!g_recording) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_valid(a, "matmul");
  require_valid(b, "matmul");
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));

  std::vector<double> out(m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * bd[p * n + j];
    }

  bool track = should_track({&a, &b});
  Tensor y = make_op_output({m, n}, std::move(out), track);
  if (track) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active().record({yn, an, bn}, [an, bn, yn, m, k, n] {
      const auto& gy = yn->adjoint;
      // dL/da = gy . b^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gy[i * n + j] * bn->data[p * n + j];
          an->adjoint[i * k + p] += acc;
        }
      // dL/db = a^T . gy
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += an->data[i * k + p] * gy[i * n + j];
          bn->adjoint[p * n + j] += acc;
        }
    });
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_valid(a, "add");
  require_valid(b, "add");
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  bool track = should_track({&a, &b});
  Tensor y = make_op_output(a.shape(), std::move(out), track);
  if (track) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active().record({yn, an, bn}, [an, bn, yn] {
      for (std::size_t i = 0; i < yn->adjoint.size(); ++i) {
        an->adjoint[i] += yn->adjoint[i];
        bn->adjoint[i] += yn->adjoint[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_valid(a, "sub");
  require_valid(b, "sub");
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  bool track = should_track({&a, &b});
  Tensor y = make_op_output(a.shape(), std::move(out), track);
  if (track) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active().record({yn, an, bn}, [an, bn, yn] {
      for (std::size_t i = 0; i < yn->adjoint.size(); ++i) {
        an->adjoint[i] += yn->adjoint[i];
        bn->adjoint[i] -= yn->adjoint[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_valid(a, "mul");
  require_valid(b, "mul");
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  bool track = should_track({&a, &b});
  Tensor y = make_op_output(a.shape(), std::move(out), track);
  if (track) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active().record({yn, an, bn}, [an, bn, yn] {
      for (std::size_t i = 0; i < yn->adjoint.size(); ++i) {
        an->adjoint[i] += yn->adjoint[i] * bn->data[i];
        bn->adjoint[i] += yn->adjoint[i] * an->data[i];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double factor) {
  require_valid(x, "scale");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  bool track = should_track({&x});
  Tensor y = make_op_output(x.shape(), std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn, factor] {
      for (std::size_t i = 0; i < yn->adjoint.size(); ++i)
        xn->adjoint[i] += yn->adjoint[i] * factor;
    });
  }
  return y;
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_valid(x, "add_row");
  require_valid(bias, "add_row");
  require_rank2(x, "add_row");
  const std::size_t b = x.rows(), n = x.cols();
  if (bias.size() != n)
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) +
                         " does not match row width of " + shape_str(x.shape()));
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] + bias[j];
  bool track = should_track({&x, &bias});
  Tensor y = make_op_output(x.shape(), std::move(out), track);
  if (track) {
    auto xn = x.node(), bn = bias.node(), yn = y.node();
    Tape::active().record({yn, xn, bn}, [xn, bn, yn, b, n] {
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          xn->adjoint[i * n + j] += yn->adjoint[i * n + j];
          bn->adjoint[j] += yn->adjoint[i * n + j];
        }
    });
  }
  return y;
}

Tensor relu(const Tensor& x) {
  require_valid(x, "relu");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  bool track = should_track({&x});
  Tensor y = make_op_output(x.shape(), std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn] {
      for (std::size_t i = 0; i < yn->adjoint.size(); ++i)
        if (xn->data[i] > 0.0) xn->adjoint[i] += yn->adjoint[i];
    });
  }
  return y;
}

Tensor exp(const Tensor& x) {
  require_valid(x, "exp");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data()[i]);
  bool track = should_track({&x});
  Tensor y = make_op_output(x.shape(), std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn] {
      for (std::size_t i = 0; i < yn->adjoint.size(); ++i)
        xn->adjoint[i] += yn->adjoint[i] * yn->data[i];
    });
  }
  return y;
}

Tensor log_clamped(const Tensor& x) {
  require_valid(x, "log_clamped");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::log(std::max(x.data()[i], kLogClamp));
  bool track = should_track({&x});
  Tensor y = make_op_output(x.shape(), std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn] {
      for (std::size_t i = 0; i < yn->adjoint.size(); ++i)
        if (xn->data[i] > kLogClamp) xn->adjoint[i] += yn->adjoint[i] / xn->data[i];
    });
  }
  return y;
}

Tensor log_softmax(const Tensor& x) {
  require_valid(x, "log_softmax");
  require_rank2(x, "log_softmax");
  const std::size_t b = x.rows(), k = x.cols();
  if (k == 0) throw DimensionError("log_softmax: zero-width rows " + shape_str(x.shape()));
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < b; ++i) {
    double mx = xd[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, xd[i * k + j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < k; ++j) lse += std::exp(xd[i * k + j] - mx);
    lse = std::log(lse) + mx;
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = xd[i * k + j] - lse;
  }
  bool track = should_track({&x});
  Tensor y = make_op_output(x.shape(), std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn, b, k] {
      // d/dx_i = g_i - softmax_i * sum_j g_j, per row
      for (std::size_t i = 0; i < b; ++i) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < k; ++j) gsum += yn->adjoint[i * k + j];
        for (std::size_t j = 0; j < k; ++j)
          xn->adjoint[i * k + j] +=
              yn->adjoint[i * k + j] - std::exp(yn->data[i * k + j]) * gsum;
      }
    });
  }
  return y;
}

Tensor softmax(const Tensor& x) { return exp(log_softmax(x)); }

Tensor grad_reverse(const Tensor& x, double coeff) {
  require_valid(x, "grad_reverse");
  if (coeff < 0.0)
    throw ContractViolation("grad_reverse: coefficient must be non-negative, got " +
                            std::to_string(coeff));
  std::vector<double> out(x.data().begin(), x.data().end());
  bool track = should_track({&x});
  Tensor y = make_op_output(x.shape(), std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn, coeff] {
      for (std::size_t i = 0; i < yn->adjoint.size(); ++i)
        xn->adjoint[i] -= coeff * yn->adjoint[i];
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  require_valid(x, "sum");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  bool track = should_track({&x});
  Tensor y = make_op_output({1}, {acc}, track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn] {
      for (std::size_t i = 0; i < xn->adjoint.size(); ++i) xn->adjoint[i] += yn->adjoint[0];
    });
  }
  return y;
}

Tensor rowwise_sum(const Tensor& x) {
  require_valid(x, "rowwise_sum");
  require_rank2(x, "rowwise_sum");
  const std::size_t b = x.rows(), k = x.cols();
  std::vector<double> out(b, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += x.data()[i * k + j];
  bool track = should_track({&x});
  Tensor y = make_op_output({b}, std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn, b, k] {
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < k; ++j) xn->adjoint[i * k + j] += yn->adjoint[i];
    });
  }
  return y;
}

Tensor colwise_max(const Tensor& x) {
  require_valid(x, "colwise_max");
  require_rank2(x, "colwise_max");
  const std::size_t b = x.rows(), k = x.cols();
  if (b == 0) throw EmptyInputError("colwise_max: tensor has no rows");
  std::vector<double> out(k);
  std::vector<std::size_t> argmax(k, 0);
  for (std::size_t j = 0; j < k; ++j) {
    double best = x.data()[j];
    std::size_t row = 0;
    for (std::size_t i = 1; i < b; ++i)
      if (x.data()[i * k + j] > best) {
        best = x.data()[i * k + j];
        row = i;
      }
    out[j] = best;
    argmax[j] = row;
  }
  bool track = should_track({&x});
  Tensor y = make_op_output({k}, std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn, k, argmax = std::move(argmax)] {
      for (std::size_t j = 0; j < k; ++j) xn->adjoint[argmax[j] * k + j] += yn->adjoint[j];
    });
  }
  return y;
}

Tensor gather_labels(const Tensor& x, std::span<const int> labels) {
  require_valid(x, "gather_labels");
  require_rank2(x, "gather_labels");
  const std::size_t b = x.rows(), k = x.cols();
  if (labels.size() != b)
    throw ContractViolation("gather_labels: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(b) + " rows");
  std::vector<double> out(b);
  std::vector<std::size_t> idx(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw ContractViolation("gather_labels: label " + std::to_string(labels[i]) +
                              " out of range [0, " + std::to_string(k) + ") at row " +
                              std::to_string(i));
    idx[i] = i * k + static_cast<std::size_t>(labels[i]);
    out[i] = x.data()[idx[i]];
  }
  bool track = should_track({&x});
  Tensor y = make_op_output({b}, std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    Tape::active().record({yn, xn}, [xn, yn, idx = std::move(idx)] {
      for (std::size_t i = 0; i < idx.size(); ++i) xn->adjoint[idx[i]] += yn->adjoint[i];
    });
  }
  return y;
}

Tensor mean_of_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_valid(x, "mean_of_rows");
  require_rank2(x, "mean_of_rows");
  if (rows.empty()) throw EmptyInputError("mean_of_rows: no rows selected");
  const std::size_t b = x.rows(), d = x.cols();
  std::vector<double> out(d, 0.0);
  for (std::size_t r : rows) {
    if (r >= b)
      throw ContractViolation("mean_of_rows: row " + std::to_string(r) +
                              " out of range for " + shape_str(x.shape()));
    for (std::size_t j = 0; j < d; ++j) out[j] += x.data()[r * d + j];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& v : out) v *= inv;
  bool track = should_track({&x});
  Tensor y = make_op_output({d}, std::move(out), track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    std::vector<std::size_t> sel(rows.begin(), rows.end());
    Tape::active().record({yn, xn}, [xn, yn, d, inv, sel = std::move(sel)] {
      for (std::size_t r : sel)
        for (std::size_t j = 0; j < d; ++j) xn->adjoint[r * d + j] += yn->adjoint[j] * inv;
    });
  }
  return y;
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  require_valid(x, "weighted_sum");
  if (weights.size() != x.size())
    throw ContractViolation("weighted_sum: " + std::to_string(weights.size()) +
                            " weights for " + std::to_string(x.size()) + " elements");
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x.data()[i];
  bool track = should_track({&x});
  Tensor y = make_op_output({1}, {acc}, track);
  if (track) {
    auto xn = x.node(), yn = y.node();
    std::vector<double> w(weights.begin(), weights.end());
    Tape::active().record({yn, xn}, [xn, yn, w = std::move(w)] {
      for (std::size_t i = 0; i < w.size(); ++i) xn->adjoint[i] += yn->adjoint[0] * w[i];
    });
  }
  return y;
}

}  // namespace ccpda
