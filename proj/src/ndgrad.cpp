#include "avwm/ndgrad.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "avwm/errors.hpp"

namespace avwm::ndgrad {

namespace {

constexpr double kLnEps = 1e-5;

std::string shape_str(const detail::Node& n) {
  return std::to_string(n.rows) + "x" + std::to_string(n.cols);
}

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Tensor wrap_(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.n_ = std::move(n);
  return t;
}

namespace {

std::shared_ptr<detail::Node> make_node(int rows, int cols) {
  auto n = std::make_shared<detail::Node>();
  n->rows = rows;
  n->cols = cols;
  n->val.assign(static_cast<size_t>(rows) * cols, 0.0);
  return n;
}

Tensor make_op(int rows, int cols, std::vector<std::shared_ptr<detail::Node>> parents,
               std::function<void(detail::Node&)> backprop) {
  auto n = make_node(rows, cols);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return wrap_(n);
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto n = make_node(rows, cols);
  n->requires_grad = requires_grad;
  n->leaf = true;
  return wrap_(n);
}

Tensor Tensor::full(int rows, int cols, double value, bool requires_grad) {
  Tensor t = zeros(rows, cols, requires_grad);
  std::fill(t.n_->val.begin(), t.n_->val.end(), value);
  return t;
}

Tensor Tensor::from(int rows, int cols, std::vector<double> values, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != static_cast<int64_t>(rows) * cols)
    throw DimensionError("tensor: value count " + std::to_string(values.size()) +
                         " does not match shape " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  auto n = std::make_shared<detail::Node>();
  n->rows = rows;
  n->cols = cols;
  n->val = std::move(values);
  n->requires_grad = requires_grad;
  n->leaf = true;
  return wrap_(n);
}

std::vector<double>& Tensor::mutable_values() {
  if (!n_->leaf) throw UsageError("tensor: mutable access to a non-leaf value");
  return n_->val;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor: gradient not populated");
  return n_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item: tensor is " + shape_str(*this) + ", not 1x1");
  return n_->val[0];
}

// --- matmul kernels ------------------------------------------------------

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  // c[m,n] = a[m,k] * b[n,k]^T
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  // c[m,n] = a[k,m]^T * b[k,n]
  if (!accumulate)
    for (int64_t i = 0; i < static_cast<int64_t>(m) * n; ++i) c[i] = 0.0;
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<size_t>(p) * m;
    const double* bp = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

// --- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape_str(a) + " vs " + shape_str(b));
  auto an = a.node(), bn = b.node();
  Tensor out = make_op(a.rows(), b.cols(), {an, bn}, [an, bn](detail::Node& self) {
    const int m = an->rows, k = an->cols, n = bn->cols;
    if (an->requires_grad) {
      an->ensure_grad();
      mm_nt(self.grad.data(), bn->val.data(), an->grad.data(), m, n, k, true);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      mm_tn(an->val.data(), self.grad.data(), bn->grad.data(), k, m, n, true);
    }
  });
  mm_nn(an->val.data(), bn->val.data(), out.node()->val.data(), a.rows(), a.cols(), b.cols(),
        false);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: " + shape_str(a) + " vs " + shape_str(b));
  auto an = a.node(), bn = b.node();
  Tensor out = make_op(a.rows(), b.rows(), {an, bn}, [an, bn](detail::Node& self) {
    const int m = an->rows, k = an->cols, n = bn->rows;
    if (an->requires_grad) {
      an->ensure_grad();
      // dA = dC[m,n] * B[n,k]
      mm_nn(self.grad.data(), bn->val.data(), an->grad.data(), m, n, k, true);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      // dB = dC^T[n,m] * A[m,k]
      mm_tn(self.grad.data(), an->val.data(), bn->grad.data(), n, m, k, true);
    }
  });
  mm_nt(an->val.data(), bn->val.data(), out.node()->val.data(), a.rows(), a.cols(), b.rows(),
        false);
  return out;
}

namespace {

enum class Broadcast { none, row };

Broadcast check_elementwise(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  throw DimensionError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast bc = check_elementwise("add", a, b);
  auto an = a.node(), bn = b.node();
  Tensor out = make_op(a.rows(), a.cols(), {an, bn}, [an, bn, bc](detail::Node& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      if (bc == Broadcast::none) {
        for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
      } else {
        const int n = self.cols;
        for (int r = 0; r < self.rows; ++r)
          for (int j = 0; j < n; ++j) bn->grad[j] += self.grad[static_cast<size_t>(r) * n + j];
      }
    }
  });
  auto& o = out.node()->val;
  const int n = a.cols();
  if (bc == Broadcast::none) {
    for (size_t i = 0; i < o.size(); ++i) o[i] = an->val[i] + bn->val[i];
  } else {
    for (int r = 0; r < a.rows(); ++r)
      for (int j = 0; j < n; ++j) {
        const size_t i = static_cast<size_t>(r) * n + j;
        o[i] = an->val[i] + bn->val[j];
      }
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scalar_mul(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast bc = check_elementwise("mul", a, b);
  auto an = a.node(), bn = b.node();
  Tensor out = make_op(a.rows(), a.cols(), {an, bn}, [an, bn, bc](detail::Node& self) {
    const int n = self.cols;
    if (an->requires_grad) {
      an->ensure_grad();
      if (bc == Broadcast::none) {
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->val[i];
      } else {
        for (int r = 0; r < self.rows; ++r)
          for (int j = 0; j < n; ++j) {
            const size_t i = static_cast<size_t>(r) * n + j;
            an->grad[i] += self.grad[i] * bn->val[j];
          }
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      if (bc == Broadcast::none) {
        for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->val[i];
      } else {
        for (int r = 0; r < self.rows; ++r)
          for (int j = 0; j < n; ++j) {
            const size_t i = static_cast<size_t>(r) * n + j;
            bn->grad[j] += self.grad[i] * an->val[i];
          }
      }
    }
  });
  auto& o = out.node()->val;
  const int n = a.cols();
  if (bc == Broadcast::none) {
    for (size_t i = 0; i < o.size(); ++i) o[i] = an->val[i] * bn->val[i];
  } else {
    for (int r = 0; r < a.rows(); ++r)
      for (int j = 0; j < n; ++j) {
        const size_t i = static_cast<size_t>(r) * n + j;
        o[i] = an->val[i] * bn->val[j];
      }
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, double c) {
  auto an = a.node();
  Tensor out = make_op(a.rows(), a.cols(), {an}, [an, c](detail::Node& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
  });
  auto& o = out.node()->val;
  for (size_t i = 0; i < o.size(); ++i) o[i] = c * an->val[i];
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  auto an = a.node();
  Tensor out = make_op(a.rows(), a.cols(), {an}, [an](detail::Node& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
  auto& o = out.node()->val;
  for (size_t i = 0; i < o.size(); ++i) o[i] = an->val[i] + c;
  return out;
}

namespace {

Tensor unary(const Tensor& a, const std::function<double(double)>& f,
             const std::function<double(double, double)>& dfdx_from_x_y) {
  auto an = a.node();
  Tensor out = make_op(a.rows(), a.cols(), {an},
                       [an, dfdx_from_x_y](detail::Node& self) {
                         an->ensure_grad();
                         for (size_t i = 0; i < self.grad.size(); ++i)
                           an->grad[i] += self.grad[i] * dfdx_from_x_y(an->val[i], self.val[i]);
                       });
  auto& o = out.node()->val;
  for (size_t i = 0; i < o.size(); ++i) o[i] = f(an->val[i]);
  return out;
}

double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor silu(const Tensor& a) {
  return unary(
      a, [](double x) { return x * sigmoid_s(x); },
      [](double x, double) {
        const double s = sigmoid_s(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, sigmoid_s, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  if (scale.rows() != 1 || scale.cols() != x.cols() || shift.rows() != 1 ||
      shift.cols() != x.cols())
    throw DimensionError("layer_norm: x " + shape_str(x) + ", scale " + shape_str(scale) +
                         ", shift " + shape_str(shift));
  auto xn = x.node(), sn = scale.node(), bn = shift.node();
  const int rows = x.rows(), cols = x.cols();
  // Cache the normalized rows and inverse stddevs for backward.
  auto norm = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * cols);
  auto inv_std = std::make_shared<std::vector<double>>(rows);

  Tensor out = make_op(rows, cols, {xn, sn, bn}, [xn, sn, bn, norm, inv_std](detail::Node& self) {
    const int r = self.rows, c = self.cols;
    if (sn->requires_grad) {
      sn->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          sn->grad[j] += self.grad[static_cast<size_t>(i) * c + j] *
                         (*norm)[static_cast<size_t>(i) * c + j];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) bn->grad[j] += self.grad[static_cast<size_t>(i) * c + j];
    }
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const double* g = self.grad.data() + static_cast<size_t>(i) * c;
        const double* nh = norm->data() + static_cast<size_t>(i) * c;
        double* gx = xn->grad.data() + static_cast<size_t>(i) * c;
        double mean_dn = 0.0, mean_dnn = 0.0;
        for (int j = 0; j < c; ++j) {
          const double dn = g[j] * sn->val[j];
          mean_dn += dn;
          mean_dnn += dn * nh[j];
        }
        mean_dn /= c;
        mean_dnn /= c;
        const double is = (*inv_std)[i];
        for (int j = 0; j < c; ++j) {
          const double dn = g[j] * sn->val[j];
          gx[j] += is * (dn - mean_dn - nh[j] * mean_dnn);
        }
      }
    }
  });

  auto& o = out.node()->val;
  for (int i = 0; i < rows; ++i) {
    const double* xi = xn->val.data() + static_cast<size_t>(i) * cols;
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += xi[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= cols;
    const double is = 1.0 / std::sqrt(var + kLnEps);
    (*inv_std)[i] = is;
    for (int j = 0; j < cols; ++j) {
      const double nh = (xi[j] - mean) * is;
      (*norm)[static_cast<size_t>(i) * cols + j] = nh;
      o[static_cast<size_t>(i) * cols + j] = nh * sn->val[j] + bn->val[j];
    }
  }
  return out;
}

Tensor softmax(const Tensor& a) {
  auto an = a.node();
  const int rows = a.rows(), cols = a.cols();
  Tensor out = make_op(rows, cols, {an}, [an](detail::Node& self) {
    an->ensure_grad();
    const int r = self.rows, c = self.cols;
    for (int i = 0; i < r; ++i) {
      const double* y = self.val.data() + static_cast<size_t>(i) * c;
      const double* g = self.grad.data() + static_cast<size_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += y[j] * g[j];
      double* gx = an->grad.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) gx[j] += y[j] * (g[j] - dot);
    }
  });
  auto& o = out.node()->val;
  for (int i = 0; i < rows; ++i) {
    const double* xi = an->val.data() + static_cast<size_t>(i) * cols;
    double mx = xi[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = std::exp(xi[j] - mx);
      o[static_cast<size_t>(i) * cols + j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) o[static_cast<size_t>(i) * cols + j] *= inv;
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  int rows = parts[0].rows(), cols = parts[0].cols();
  for (size_t i = 1; i < parts.size(); ++i) {
    if (axis == 0) {
      if (parts[i].cols() != cols)
        throw DimensionError("concat: " + shape_str(parts[0]) + " vs " + shape_str(parts[i]));
      rows += parts[i].rows();
    } else {
      if (parts[i].rows() != rows)
        throw DimensionError("concat: " + shape_str(parts[0]) + " vs " + shape_str(parts[i]));
      cols += parts[i].cols();
    }
  }
  std::vector<std::shared_ptr<detail::Node>> ps;
  ps.reserve(parts.size());
  for (const auto& p : parts) ps.push_back(p.node());

  Tensor out = make_op(rows, cols, ps, [ps, axis](detail::Node& self) {
    const int c = self.cols;
    int off = 0;
    for (const auto& p : ps) {
      if (p->requires_grad) p->ensure_grad();
      if (axis == 0) {
        if (p->requires_grad) {
          const size_t base = static_cast<size_t>(off) * c;
          for (size_t i = 0; i < p->val.size(); ++i) p->grad[i] += self.grad[base + i];
        }
        off += p->rows;
      } else {
        if (p->requires_grad) {
          for (int r = 0; r < p->rows; ++r)
            for (int j = 0; j < p->cols; ++j)
              p->grad[static_cast<size_t>(r) * p->cols + j] +=
                  self.grad[static_cast<size_t>(r) * c + off + j];
        }
        off += p->cols;
      }
    }
  });
  auto& o = out.node()->val;
  int off = 0;
  for (const auto& p : ps) {
    if (axis == 0) {
      std::copy(p->val.begin(), p->val.end(), o.begin() + static_cast<size_t>(off) * cols);
      off += p->rows;
    } else {
      for (int r = 0; r < p->rows; ++r)
        std::copy(p->val.begin() + static_cast<size_t>(r) * p->cols,
                  p->val.begin() + static_cast<size_t>(r + 1) * p->cols,
                  o.begin() + static_cast<size_t>(r) * cols + off);
      off += p->cols;
    }
  }
  return out;
}

std::vector<Tensor> split(const Tensor& a, const std::vector<int>& sizes, int axis) {
  if (axis != 0 && axis != 1) throw DimensionError("split: axis must be 0 or 1");
  int total = 0;
  for (int s : sizes) total += s;
  if ((axis == 0 && total != a.rows()) || (axis == 1 && total != a.cols()))
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but input is " +
                         shape_str(a));
  auto an = a.node();
  std::vector<Tensor> out;
  out.reserve(sizes.size());
  int off = 0;
  for (int s : sizes) {
    const int o0 = off;
    const int rows = axis == 0 ? s : a.rows();
    const int cols = axis == 0 ? a.cols() : s;
    Tensor piece = make_op(rows, cols, {an}, [an, o0, axis](detail::Node& self) {
      an->ensure_grad();
      const int ac = an->cols;
      if (axis == 0) {
        const size_t base = static_cast<size_t>(o0) * ac;
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[base + i] += self.grad[i];
      } else {
        for (int r = 0; r < self.rows; ++r)
          for (int j = 0; j < self.cols; ++j)
            an->grad[static_cast<size_t>(r) * ac + o0 + j] +=
                self.grad[static_cast<size_t>(r) * self.cols + j];
      }
    });
    auto& v = piece.node()->val;
    if (axis == 0) {
      std::copy(an->val.begin() + static_cast<size_t>(o0) * a.cols(),
                an->val.begin() + static_cast<size_t>(o0 + s) * a.cols(), v.begin());
    } else {
      for (int r = 0; r < rows; ++r)
        std::copy(an->val.begin() + static_cast<size_t>(r) * a.cols() + o0,
                  an->val.begin() + static_cast<size_t>(r) * a.cols() + o0 + s,
                  v.begin() + static_cast<size_t>(r) * s);
    }
    out.push_back(piece);
    off += s;
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  auto an = a.node();
  Tensor out = make_op(1, 1, {an}, [an](detail::Node& self) {
    an->ensure_grad();
    const double g = self.grad[0];
    for (auto& v : an->grad) v += g;
  });
  double s = 0.0;
  for (double v : an->val) s += v;
  out.node()->val[0] = s;
  return out;
}

Tensor mean_all(const Tensor& a) {
  return scalar_mul(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_axis0(const Tensor& a) {
  auto an = a.node();
  const int rows = a.rows(), cols = a.cols();
  Tensor out = make_op(1, cols, {an}, [an](detail::Node& self) {
    an->ensure_grad();
    const int r = an->rows, c = an->cols;
    const double inv = 1.0 / r;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) an->grad[static_cast<size_t>(i) * c + j] += self.grad[j] * inv;
  });
  auto& o = out.node()->val;
  for (int j = 0; j < cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < rows; ++i) s += an->val[static_cast<size_t>(i) * cols + j];
    o[j] = s / rows;
  }
  return out;
}

Tensor reshape(const Tensor& a, int rows, int cols) {
  if (static_cast<int64_t>(rows) * cols != a.size())
    throw DimensionError("reshape: " + shape_str(a) + " to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  auto an = a.node();
  Tensor out = make_op(rows, cols, {an}, [an](detail::Node& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
  out.node()->val = an->val;
  return out;
}

Tensor detach(const Tensor& a) {
  auto n = make_node(a.rows(), a.cols());
  n->val = a.values();
  n->leaf = true;
  return wrap_(n);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a defined 1x1 scalar");
  auto root = loss.node();
  if (root->consumed) throw UsageError("backward: already called on this graph");
  root->consumed = true;
  if (!root->requires_grad) return;

  // Iterative post-order DFS for a reverse topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      detail::Node* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

}  // namespace avwm::ndgrad
