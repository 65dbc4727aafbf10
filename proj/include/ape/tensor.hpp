#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every operation whose inputs require gradients records its parents and a
// gradient rule on the result node. Nodes carry a global creation sequence
// number, so sorting the reachable interior nodes by descending sequence is
// exactly reverse execution order. backward() consumes the graph: a second
// call on the same loss, or on any loss sharing consumed nodes, throws.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ape/random.hpp"

namespace ape {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  bool consumed = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  bool is_interior() const { return static_cast<bool>(backward_fn); }
  // Lazily allocated gradient buffer.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  // Rows of equal length; convenient in tests.
  static Tensor matrix(const std::vector<std::vector<T>>& rows, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // All-zero view when no gradient has arrived yet.
  std::vector<T> grad() const;
  std::span<T> grad_mut() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  void backward();

  // Copy of the values with no graph history.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Graph recording is on by default; this guard turns it off for the current
// thread (evaluation, decoding).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// a[m x k] * b[k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a[m x k] * b[n x k]^T
template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
// a[m x n] + bias[n] broadcast over rows
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

// Row-wise softmax, stabilized by max subtraction. -inf entries map to 0;
// a row with no finite entry throws ContractError; NaN or +inf input throws NumericError.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a);
template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& a);

// (h - mean) / sqrt(var + eps) * gain + bias over the last dimension.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& h, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids);

// Inverted dropout: survivors scaled by 1/(1-p). Identity when !train or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double p, bool train, Rng* rng);

}  // namespace ape
