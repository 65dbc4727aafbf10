#include "ape/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "ape/errors.hpp"

namespace ape {

namespace {

std::atomic<std::uint64_t> g_sequence{1};
thread_local bool g_grad_enabled = true;

std::uint64_t next_seq() { return g_sequence.fetch_add(1, std::memory_order_relaxed); }

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
             bool accumulate) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, k, n, a, bt.data(), c, accumulate);
}

// C[m x n] (+)= A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T api = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

// Builds the result node; attaches parents and the gradient rule only when
// recording is enabled and some input needs a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<NodePtr<T>> inputs,
                      std::function<void(TensorNode<T>&)> rule) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->seq = next_seq();
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(inputs);
    node->backward_fn = std::move(rule);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = next_seq();
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from(Shape{}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::matrix(const std::vector<std::vector<T>>& rows, bool requires_grad) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.front().size() : 0;
  std::vector<T> flat;
  flat.reserve(m * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw DimensionError("tensor: ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return from({m, n}, std::move(flat), requires_grad);
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  return dim() == 2 ? shape()[0] : 1;
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return dim() == 0 ? 1 : shape().back();
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->data[0];
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node_->grad.empty()) return std::vector<T>(size(), T(0));
  return node_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), node_->data, false);
}

template <typename T>
void Tensor<T>::backward() {
  if (size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(shape()));
  }
  if (node_->consumed) throw ContractError("backward: graph already consumed");

  // Collect interior nodes reachable from the loss.
  // Owning pointers: releasing parents below must not free nodes still listed.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> seen;
  std::vector<std::shared_ptr<Node>> stack{node_};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    if (n->consumed) throw ContractError("backward: graph already consumed");
    if (!n->is_interior()) continue;
    for (const auto& p : n->parents) stack.push_back(p);
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });

  if (!node_->requires_grad) {
    node_->consumed = true;
    return;
  }
  auto& g = node_->grad_buffer();
  g[0] += T(1);
  for (const auto& n : order) {
    if (!n->grad.empty()) n->backward_fn(*n);
  }
  for (const auto& n : order) {
    n->consumed = true;
    n->backward_fn = nullptr;
    n->parents.clear();
  }
  node_->consumed = true;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data(), false);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>({m, n}, std::move(out), {an, bn}, [m, k, n](TensorNode<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad)
      gemm_nt(m, n, k, self.grad.data(), B.data.data(), A.grad_buffer().data(), true);
    if (B.requires_grad)
      gemm_tn(k, m, n, A.data.data(), self.grad.data(), B.grad_buffer().data(), true);
  });
}

template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_bt");
  require_matrix(b, "matmul_bt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_bt: inner dimensions differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<T> out(m * n);
  gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data(), false);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_result<T>({m, n}, std::move(out), {an, bn}, [m, k, n](TensorNode<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad)
      gemm_nn(m, n, k, self.grad.data(), B.data.data(), A.grad_buffer().data(), true);
    if (B.requires_grad)
      gemm_tn(n, m, k, self.grad.data(), A.data.data(), B.grad_buffer().data(), true);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  const auto src = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  return make_result<T>({n, m}, std::move(out), {a.node_ptr()}, [m, n](TensorNode<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](TensorNode<T>& self) {
                          for (auto& p : self.parents) {
                            if (!p->requires_grad) continue;
                            auto& g = p->grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  const std::size_t n = a.cols();
  if (bias.size() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(a.shape()));
  }
  const std::size_t m = a.size() / n;
  std::vector<T> out(a.size());
  const auto x = a.data(), b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + b[j];
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), bias.node_ptr()},
                        [m, n](TensorNode<T>& self) {
                          auto& A = *self.parents[0];
                          auto& B = *self.parents[1];
                          if (A.requires_grad) {
                            auto& g = A.grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                          }
                          if (B.requires_grad) {
                            auto& g = B.grad_buffer();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](TensorNode<T>& self) {
                          auto& A = *self.parents[0];
                          auto& B = *self.parents[1];
                          if (A.requires_grad) {
                            auto& g = A.grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.data[i];
                          }
                          if (B.requires_grad) {
                            auto& g = B.grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.data[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr()}, [factor](TensorNode<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr()}, [](TensorNode<T>& self) {
    auto& A = *self.parents[0];
    auto& g = A.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (A.data[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total(0);
  for (T v : a.data()) total += v;
  return make_result<T>(Shape{}, {total}, {a.node_ptr()}, [](TensorNode<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const T s = self.grad[0];
    for (auto& v : g) v += s;
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  require_matrix(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(row[j]) || row[j] == std::numeric_limits<T>::infinity()) {
        throw NumericError("softmax_rows: row " + std::to_string(i) + " holds NaN or +inf");
      }
      mx = std::max(mx, row[j]);
    }
    if (!std::isfinite(mx)) {
      throw ContractError("softmax_rows: row " + std::to_string(i) + " has no finite entry");
    }
    T total(0);
    T* o = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(row[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return make_result<T>({m, n}, std::move(out), {a.node_ptr()}, [m, n](TensorNode<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.data.data() + i * n;
      const T* gy = self.grad.data() + i * n;
      T dot(0);
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
  require_matrix(a, "log_softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(row[j]) || row[j] == std::numeric_limits<T>::infinity()) {
        throw NumericError("log_softmax_rows: row " + std::to_string(i) + " holds NaN or +inf");
      }
      mx = std::max(mx, row[j]);
    }
    if (!std::isfinite(mx)) {
      throw ContractError("log_softmax_rows: row " + std::to_string(i) + " has no finite entry");
    }
    T total(0);
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return make_result<T>({m, n}, std::move(out), {a.node_ptr()}, [m, n](TensorNode<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.data.data() + i * n;
      const T* gy = self.grad.data() + i * n;
      T total(0);
      for (std::size_t j = 0; j < n; ++j) total += gy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gy[j] - std::exp(y[j]) * total;
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& h, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t d = last_dim(h.shape());
  if (d < 2) throw DimensionError("layer_norm: feature dimension must be >= 2");
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match " + shape_str(h.shape()));
  }
  const std::size_t m = h.size() / d;
  std::vector<T> out(h.size());
  std::vector<T> xhat(h.size());
  std::vector<T> rstd(m);
  const auto x = h.data(), gm = gain.data(), bs = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * d;
    T mean(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(d);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (row[j] - mean) * rstd[i];
      xhat[i * d + j] = xh;
      out[i * d + j] = xh * gm[j] + bs[j];
    }
  }
  return make_result<T>(
      h.shape(), std::move(out), {h.node_ptr(), gain.node_ptr(), bias.node_ptr()},
      [m, d, xhat = std::move(xhat), rstd = std::move(rstd)](TensorNode<T>& self) {
        auto& H = *self.parents[0];
        auto& G = *self.parents[1];
        auto& B = *self.parents[2];
        if (G.requires_grad) {
          auto& gg = G.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += self.grad[i * d + j] * xhat[i * d + j];
        }
        if (B.requires_grad) {
          auto& gb = B.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += self.grad[i * d + j];
        }
        if (H.requires_grad) {
          auto& gh = H.grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            T mean_dx(0), mean_dx_xh(0);
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = self.grad[i * d + j] * G.data[j];
              mean_dx += dxh;
              mean_dx_xh += dxh * xhat[i * d + j];
            }
            mean_dx /= T(d);
            mean_dx_xh /= T(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = self.grad[i * d + j] * G.data[j];
              gh[i * d + j] += rstd[i] * (dxh - mean_dx - xhat[i * d + j] * mean_dx_xh);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<std::shared_ptr<TensorNode<T>>> inputs;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
    inputs.push_back(p.node_ptr());
  }
  std::vector<T> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(src.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  return make_result<T>({m, total}, std::move(out), std::move(inputs),
                        [m, total, widths](TensorNode<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t k = 0; k < self.parents.size(); ++k) {
                            auto& P = *self.parents[k];
                            if (P.requires_grad) {
                              auto& g = P.grad_buffer();
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < widths[k]; ++j)
                                  g[i * widths[k] + j] += self.grad[i * total + off + j];
                            }
                            off += widths[k];
                          }
                        });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids) {
  require_matrix(table, "embedding_lookup");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<T> out(idx.size() * d);
  const auto src = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw VocabularyError("embedding_lookup: id " + std::to_string(idx[i]) +
                            " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(src.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  const std::size_t m = idx.size();
  return make_result<T>({m, d}, std::move(out), {table.node_ptr()},
                        [d, idx = std::move(idx)](TensorNode<T>& self) {
                          auto& g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            T* row = g.data() + static_cast<std::size_t>(idx[i]) * d;
                            for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
                          }
                        });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double p, bool train, Rng* rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must lie in [0, 1)");
  if (!train || p == 0.0) return a;
  if (rng == nullptr) throw ContractError("dropout: training mode needs a generator");
  const T keep = T(1.0 / (1.0 - p));
  std::vector<T> mask(a.size());
  for (auto& v : mask) v = rng->uniform() < p ? T(0) : keep;
  std::vector<T> out(a.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr()},
                        [mask = std::move(mask)](TensorNode<T>& self) {
                          auto& g = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                        });
}

#define APE_INSTANTIATE_TENSOR(T)                                                         \
  template class Tensor<T>;                                                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> matmul_bt(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> transpose(const Tensor<T>&);                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> relu(const Tensor<T>&);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                       \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                                   \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> embedding_lookup(const Tensor<T>&, std::span<const int>);             \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng*);

APE_INSTANTIATE_TENSOR(float)
APE_INSTANTIATE_TENSOR(double)

}  // namespace ape
