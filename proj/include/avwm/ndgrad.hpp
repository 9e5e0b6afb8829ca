#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace avwm::ndgrad {

// Dense row-major 2-D tensor participating in a define-by-run reverse-mode
// graph. The op set is exactly what the diffusion transformer needs:
// matmul (plain/transposed), add, mul, scalar_mul, SiLU/GELU/sigmoid/exp/log,
// layer_norm with externally supplied scale/shift, softmax over the last
// axis, concat/split along either axis, mean reductions, reshape, detach.
//
// Graphs are rebuilt every step; backward() runs once per graph and
// accumulates into leaf gradients, so parameter leaves can be shared across
// the per-example graphs of one batch.
class Tensor;

namespace detail {

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> val;
  std::vector<double> grad;  // allocated on demand, same extent as val
  bool requires_grad = false;
  bool leaf = false;
  bool consumed = false;  // set on a loss node after backward
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // scatter this->grad into parents

  int64_t size() const { return static_cast<int64_t>(rows) * cols; }
  void ensure_grad() {
    if (grad.empty()) grad.assign(val.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, double value, bool requires_grad = false);
  static Tensor from(int rows, int cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false) {
    return from(1, 1, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(n_); }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  int64_t size() const { return n_->size(); }
  bool requires_grad() const { return n_->requires_grad; }
  bool is_leaf() const { return n_->leaf; }

  const std::vector<double>& values() const { return n_->val; }
  // Mutable access is reserved for leaves (parameter updates, data uploads).
  std::vector<double>& mutable_values();

  bool has_grad() const { return defined() && !n_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() {
    n_->grad.assign(n_->val.size(), 0.0);
  }
  void drop_grad() { n_->grad.clear(); }

  double at(int r, int c) const { return n_->val[static_cast<size_t>(r) * n_->cols + c]; }
  double item() const;

  std::shared_ptr<detail::Node> node() const { return n_; }

 private:
  friend Tensor wrap_(std::shared_ptr<detail::Node> n);
  std::shared_ptr<detail::Node> n_;
};

// --- primitives ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // a[m,k] * b[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a[m,k] * b[n,k]^T
Tensor add(const Tensor& a, const Tensor& b);        // same shape, or b = [1,n] row broadcast
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // same shape, or b = [1,n] row broadcast
Tensor scalar_mul(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

// Normalizes each row to zero mean / unit variance (epsilon 1e-5), then
// applies y = n * scale + shift with scale/shift broadcast as [1,cols] rows.
// A zero-variance row normalizes to zeros by convention.
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift);

Tensor softmax(const Tensor& a);  // along the last axis, rowwise

Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& a, const std::vector<int>& sizes, int axis);

Tensor mean_all(const Tensor& a);           // -> [1,1]
Tensor sum_all(const Tensor& a);            // -> [1,1]
Tensor mean_axis0(const Tensor& a);         // column means -> [1,cols]
Tensor reshape(const Tensor& a, int rows, int cols);
Tensor detach(const Tensor& a);             // stop-gradient copy

// Runs reverse-mode accumulation from a scalar loss. Every reachable leaf
// with requires_grad receives (accumulates) its gradient. Throws
// ContractError for a non-scalar loss and UsageError if this loss was
// already consumed.
void backward(const Tensor& loss);

// Raw kernels, shared with non-graph numeric code.
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);

}  // namespace avwm::ndgrad
