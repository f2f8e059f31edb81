#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ccpda {

namespace detail {

/// Backing storage for a tensor. Shared between tensor handles and the tape.
struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  /// Accumulated gradient. Lazily allocated on the first backward pass that
  /// reaches this node; persists (and keeps accumulating) until zero_grad.
  std::vector<double> grad;
  /// Scratch adjoint used while a backward pass is replaying the tape.
  std::vector<double> adjoint;
  bool requires_grad = false;
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

/// Dense row-major tensor of doubles with optional gradient tracking.
///
/// Tensor is a cheap value-semantic handle onto a shared node; copies alias
/// the same storage. All arithmetic goes through the free functions below,
/// which record onto the thread-local Tape whenever an input requires
/// gradients, so that backward() can replay the recording in reverse.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data);
  static Tensor scalar(double value);

  bool valid() const { return node_ != nullptr; }

  const std::vector<std::size_t>& shape() const;
  std::size_t size() const;
  /// Number of rows / cols for rank-2 tensors ([n] counts as n rows, 1 col).
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return size() == 1; }

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;  ///< value of a one-element tensor
  double at(std::size_t r, std::size_t c) const;
  double operator[](std::size_t i) const;

  Tensor& set_requires_grad(bool enabled);
  bool requires_grad() const;

  /// Gradient buffer; empty span if no backward pass has reached this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  /// A fresh leaf holding a copy of this tensor's values, detached from any
  /// recorded history.
  Tensor detach() const;

  const detail::NodePtr& node() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;

  friend Tensor make_op_output(std::vector<std::size_t> shape,
                               std::vector<double> data, bool track);
};

/// Ordered record of the primitive operations of one forward pass.
///
/// Recording is append-only, so entry order is a topological order of the
/// graph; replaying entries back-to-front visits each node exactly once in
/// reverse topological order. One tape per thread; independent training runs
/// on separate threads never share state.
class Tape {
 public:
  static Tape& active();

  void clear();
  std::size_t size() const { return entries_.size(); }

  /// nodes[0] is the entry's output; the rest are its inputs. `pull` reads
  /// the output's adjoint and accumulates into the inputs' adjoints.
  void record(std::vector<detail::NodePtr> nodes, std::function<void()> pull);

  void run_backward(const detail::NodePtr& loss);

 private:
  struct Entry {
    std::vector<detail::NodePtr> nodes;
    std::function<void()> pull;
  };
  std::vector<Entry> entries_;
};

/// Suppresses tape recording for its lifetime (forward-only inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

// ---- primitives -----------------------------------------------------------

/// Matrix product [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum/difference/product of same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// Multiply every element by a constant.
Tensor scale(const Tensor& x, double factor);

/// Add a length-n bias vector to every row of [b x n].
Tensor add_row(const Tensor& x, const Tensor& bias);

/// Elementwise max(0, x). Subgradient at exactly 0 is 0.
Tensor relu(const Tensor& x);

/// Elementwise exp.
Tensor exp(const Tensor& x);

/// Elementwise log(max(x, 1e-12)); keeps saturated probabilities finite.
/// Gradient is 1/x above the clamp and 0 below it.
Tensor log_clamped(const Tensor& x);

/// Row-wise log-softmax of [b x k], computed with max-subtraction.
Tensor log_softmax(const Tensor& x);

/// Row-wise softmax; rows are finite, non-negative and sum to 1.
Tensor softmax(const Tensor& x);

/// Identity forward; backward multiplies the incoming gradient by -coeff.
/// Turns a single minimisation pass into a minimax game.
Tensor grad_reverse(const Tensor& x, double coeff);

/// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);

/// Row sums of [b x k] -> [b].
Tensor rowwise_sum(const Tensor& x);

/// Column maxima of [b x k] -> [k]; gradient routes to the first maximal
/// row of each column.
Tensor colwise_max(const Tensor& x);

/// out[i] = x[i, labels[i]] for [b x k] -> [b].
Tensor gather_labels(const Tensor& x, std::span<const int> labels);

/// Mean of the selected rows of [b x d] -> [d].
Tensor mean_of_rows(const Tensor& x, std::span<const std::size_t> rows);

/// sum_i w[i] * x[i] with constant weights -> scalar.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

/// Reverse-mode pass from a scalar loss. Every requires_grad tensor reached
/// by the pass has its grad buffer accumulated; repeated calls without
/// zero_grad accumulate additively.
void backward(const Tensor& loss);

std::string shape_str(std::span<const std::size_t> shape);

}  // namespace ccpda
