// Dense double-precision arrays with reverse-mode differentiation.
//
// A Graph records every operation applied to tensors it created; backward()
// replays the record in reverse and accumulates gradients into requires_grad
// leaves. Leaves (parameters, inputs) live outside any graph and may be shared
// by many graphs; internal results belong to exactly one graph. A graph and
// its tensors are confined to one thread for the duration of a pass.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "convasr/common.hpp"

namespace convasr {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value once backward has run
  bool requires_grad = false;

  std::size_t size() const { return value.size(); }
  bool is_vector() const { return shape.size() == 1; }
  bool is_matrix() const { return shape.size() == 2; }
  bool is_scalar() const { return shape.size() == 1 && shape[0] == 1; }
  std::size_t rows() const { return shape[0]; }
  std::size_t cols() const { return shape[1]; }

  double scalar() const {
    if (!is_scalar()) throw NumericError("Tensor::scalar on non-scalar tensor");
    return value[0];
  }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
  void zero_grad() { grad.assign(value.size(), 0.0); }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline TensorPtr make_tensor(std::vector<std::size_t> shape,
                             std::vector<double> value,
                             bool requires_grad = false) {
  if (shape.empty()) throw NumericError("tensor shape must have >= 1 axis");
  for (std::size_t d : shape) {
    if (d == 0) throw NumericError("tensor shape has zero-sized axis " + shape_str(shape));
  }
  if (value.size() != shape_numel(shape)) {
    throw NumericError("tensor value length " + std::to_string(value.size()) +
                       " does not match shape " + shape_str(shape));
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->value = std::move(value);
  t->requires_grad = requires_grad;
  return t;
}

inline TensorPtr make_zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return make_tensor(std::move(shape), std::move(v), requires_grad);
}

inline TensorPtr make_scalar(double v, bool requires_grad = false) {
  return make_tensor({1}, {v}, requires_grad);
}

/// Topologically ordered operation record with reverse-mode backprop.
class Graph {
 public:
  using ForwardFn = std::function<void(const std::vector<TensorPtr>&, Tensor&)>;
  using BackwardFn = std::function<void(const std::vector<TensorPtr>&, Tensor&)>;

  /// Record an operation. `forward` fills out.value from the inputs and must be
  /// pure; `backward` reads out.grad and accumulates into the inputs' grads.
  TensorPtr emit(std::string kind, std::vector<TensorPtr> inputs,
                 std::vector<std::size_t> out_shape, ForwardFn forward,
                 BackwardFn backward) {
    auto out = make_zeros(std::move(out_shape));
    forward(inputs, *out);
    for (double v : out->value) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite output from op '" + kind + "'");
      }
    }
    for (const auto& in : inputs) {
      if (in->requires_grad) {
        out->requires_grad = true;
        break;
      }
    }
    records_.push_back(Record{std::move(kind), std::move(inputs), out,
                              std::move(forward), std::move(backward)});
    return out;
  }

  /// Populate grads of every requires_grad leaf reachable from `loss`.
  /// Internal grads are pass-local; leaf grads accumulate across calls.
  void backward(const TensorPtr& loss) {
    if (!loss->is_scalar()) {
      throw NumericError("backward requires a scalar loss, got shape " +
                         shape_str(loss->shape));
    }
    for (auto& rec : records_) rec.out->zero_grad();
    for (auto& rec : records_) {
      for (auto& in : rec.inputs) in->ensure_grad();
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0;  // record outputs were just zeroed; leaf losses accumulate
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (!it->out->requires_grad) continue;
      it->backward(it->inputs, *it->out);
    }
  }

  /// Re-run every recorded forward and check outputs reproduce bit-exactly.
  bool replay_matches() const {
    for (const auto& rec : records_) {
      Tensor probe;
      probe.shape = rec.out->shape;
      probe.value.assign(rec.out->value.size(), 0.0);
      rec.forward(rec.inputs, probe);
      if (probe.value != rec.out->value) return false;
    }
    return true;
  }

  std::size_t num_ops() const { return records_.size(); }

  // ---- op vocabulary ------------------------------------------------------

  /// matmul over [m,n]x[n,p] -> [m,p]; [m,n]x[n] -> [m]; [m]x[m,n] -> [n].
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    std::vector<std::size_t> out_shape;
    if (a->is_matrix() && b->is_matrix()) {
      if (a->cols() != b->rows()) shape_fail("matmul", a, b);
      out_shape = {a->rows(), b->cols()};
    } else if (a->is_matrix() && b->is_vector()) {
      if (a->cols() != b->shape[0]) shape_fail("matmul", a, b);
      out_shape = {a->rows()};
    } else if (a->is_vector() && b->is_matrix()) {
      if (a->shape[0] != b->rows()) shape_fail("matmul", a, b);
      out_shape = {b->cols()};
    } else {
      shape_fail("matmul", a, b);
    }
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      const Tensor& A = *in[0];
      const Tensor& B = *in[1];
      const std::size_t m = A.is_matrix() ? A.rows() : 1;
      const std::size_t n = A.is_matrix() ? A.cols() : A.shape[0];
      const std::size_t p = B.is_matrix() ? B.cols() : 1;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < p; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            acc += A.value[i * n + j] * B.value[j * p + k];
          }
          out.value[i * p + k] = acc;
        }
      }
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      Tensor& A = *in[0];
      Tensor& B = *in[1];
      const std::size_t m = A.is_matrix() ? A.rows() : 1;
      const std::size_t n = A.is_matrix() ? A.cols() : A.shape[0];
      const std::size_t p = B.is_matrix() ? B.cols() : 1;
      // dA = dOut * B^T ; dB = A^T * dOut
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < p; ++k) {
            acc += out.grad[i * p + k] * B.value[j * p + k];
          }
          A.grad[i * n + j] += acc;
        }
      }
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < p; ++k) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            acc += A.value[i * n + j] * out.grad[i * p + k];
          }
          B.grad[j * p + k] += acc;
        }
      }
    };
    return emit("matmul", {a, b}, std::move(out_shape), fwd, bwd);
  }

  /// Elementwise add; the single permitted broadcast is matrix + row vector.
  TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    const bool same = a->shape == b->shape;
    const bool bias = a->is_matrix() && b->is_vector() && a->cols() == b->shape[0];
    if (!same && !bias) shape_fail("add", a, b);
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      const Tensor& A = *in[0];
      const Tensor& B = *in[1];
      if (A.shape == B.shape) {
        for (std::size_t i = 0; i < A.size(); ++i) out.value[i] = A.value[i] + B.value[i];
      } else {
        const std::size_t c = A.cols();
        for (std::size_t i = 0; i < A.size(); ++i) out.value[i] = A.value[i] + B.value[i % c];
      }
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      Tensor& A = *in[0];
      Tensor& B = *in[1];
      for (std::size_t i = 0; i < A.size(); ++i) A.grad[i] += out.grad[i];
      if (A.shape == B.shape) {
        for (std::size_t i = 0; i < B.size(); ++i) B.grad[i] += out.grad[i];
      } else {
        const std::size_t c = A.cols();
        for (std::size_t i = 0; i < A.size(); ++i) B.grad[i % c] += out.grad[i];
      }
    };
    return emit("add", {a, b}, a->shape, fwd, bwd);
  }

  TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) shape_fail("elementwise-mul", a, b);
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i)
        out.value[i] = in[0]->value[i] * in[1]->value[i];
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        in[0]->grad[i] += out.grad[i] * in[1]->value[i];
        in[1]->grad[i] += out.grad[i] * in[0]->value[i];
      }
    };
    return emit("elementwise-mul", {a, b}, a->shape, fwd, bwd);
  }

  /// Concatenate along the last axis. Vectors chain end to end; matrices must
  /// agree on row count and concatenate columns.
  TensorPtr concat(std::vector<TensorPtr> parts) {
    if (parts.empty()) throw NumericError("concat of zero tensors");
    if (parts.size() == 1) return parts[0];
    std::vector<std::size_t> out_shape;
    if (parts[0]->is_vector()) {
      std::size_t total = 0;
      for (auto& p : parts) {
        if (!p->is_vector()) shape_fail("concat", parts[0], p);
        total += p->shape[0];
      }
      out_shape = {total};
    } else {
      const std::size_t r = parts[0]->rows();
      std::size_t total = 0;
      for (auto& p : parts) {
        if (!p->is_matrix() || p->rows() != r) shape_fail("concat", parts[0], p);
        total += p->cols();
      }
      out_shape = {r, total};
    }
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      if (in[0]->is_vector()) {
        std::size_t o = 0;
        for (auto& p : in) {
          std::copy(p->value.begin(), p->value.end(), out.value.begin() + o);
          o += p->size();
        }
      } else {
        const std::size_t r = in[0]->rows();
        const std::size_t oc = out.cols();
        std::size_t col0 = 0;
        for (auto& p : in) {
          const std::size_t c = p->cols();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              out.value[i * oc + col0 + j] = p->value[i * c + j];
          col0 += c;
        }
      }
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      if (in[0]->is_vector()) {
        std::size_t o = 0;
        for (auto& p : in) {
          for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] += out.grad[o + i];
          o += p->size();
        }
      } else {
        const std::size_t r = in[0]->rows();
        const std::size_t oc = out.cols();
        std::size_t col0 = 0;
        for (auto& p : in) {
          const std::size_t c = p->cols();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              p->grad[i * c + j] += out.grad[i * oc + col0 + j];
          col0 += c;
        }
      }
    };
    return emit("concat", std::move(parts), std::move(out_shape), fwd, bwd);
  }

  TensorPtr concat(const TensorPtr& a, const TensorPtr& b) {
    return concat(std::vector<TensorPtr>{a, b});
  }

  /// Mean along `axis`. Vector axis 0 -> scalar; matrix axis 0 -> column
  /// means (vector of cols), axis 1 -> row means (vector of rows).
  TensorPtr mean(const TensorPtr& a, std::size_t axis) {
    std::vector<std::size_t> out_shape;
    if (a->is_vector()) {
      if (axis != 0) throw NumericError("mean: vector has only axis 0");
      out_shape = {1};
    } else if (a->is_matrix() && axis == 0) {
      out_shape = {a->cols()};
    } else if (a->is_matrix() && axis == 1) {
      out_shape = {a->rows()};
    } else {
      throw NumericError("mean: bad axis " + std::to_string(axis) + " for shape " +
                         shape_str(a->shape));
    }
    auto fwd = [axis](const std::vector<TensorPtr>& in, Tensor& out) {
      const Tensor& A = *in[0];
      if (A.is_vector()) {
        double acc = 0.0;
        for (double v : A.value) acc += v;
        out.value[0] = acc / double(A.size());
      } else if (axis == 0) {
        const std::size_t r = A.rows(), c = A.cols();
        for (std::size_t j = 0; j < c; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < r; ++i) acc += A.value[i * c + j];
          out.value[j] = acc / double(r);
        }
      } else {
        const std::size_t r = A.rows(), c = A.cols();
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += A.value[i * c + j];
          out.value[i] = acc / double(c);
        }
      }
    };
    auto bwd = [axis](const std::vector<TensorPtr>& in, Tensor& out) {
      Tensor& A = *in[0];
      if (A.is_vector()) {
        const double g = out.grad[0] / double(A.size());
        for (std::size_t i = 0; i < A.size(); ++i) A.grad[i] += g;
      } else if (axis == 0) {
        const std::size_t r = A.rows(), c = A.cols();
        for (std::size_t j = 0; j < c; ++j) {
          const double g = out.grad[j] / double(r);
          for (std::size_t i = 0; i < r; ++i) A.grad[i * c + j] += g;
        }
      } else {
        const std::size_t r = A.rows(), c = A.cols();
        for (std::size_t i = 0; i < r; ++i) {
          const double g = out.grad[i] / double(c);
          for (std::size_t j = 0; j < c; ++j) A.grad[i * c + j] += g;
        }
      }
    };
    return emit("mean", {a}, std::move(out_shape), fwd, bwd);
  }

  TensorPtr sigmoid(const TensorPtr& a) {
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double x = in[0]->value[i];
        out.value[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                : std::exp(x) / (1.0 + std::exp(x));
      }
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double s = out.value[i];
        in[0]->grad[i] += out.grad[i] * s * (1.0 - s);
      }
    };
    return emit("sigmoid", {a}, a->shape, fwd, bwd);
  }

  TensorPtr tanh(const TensorPtr& a) {
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i)
        out.value[i] = std::tanh(in[0]->value[i]);
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double t = out.value[i];
        in[0]->grad[i] += out.grad[i] * (1.0 - t * t);
      }
    };
    return emit("tanh", {a}, a->shape, fwd, bwd);
  }

  /// Softmax along the last axis (whole vector, or each matrix row).
  TensorPtr softmax(const TensorPtr& a) {
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      const Tensor& A = *in[0];
      const std::size_t c = A.is_matrix() ? A.cols() : A.shape[0];
      const std::size_t r = A.size() / c;
      for (std::size_t i = 0; i < r; ++i) {
        const double* row = A.value.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j)
          out.value[i * c + j] = std::exp(row[j] - mx) / z;
      }
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      Tensor& A = *in[0];
      const std::size_t c = A.is_matrix() ? A.cols() : A.shape[0];
      const std::size_t r = A.size() / c;
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j)
          dot += out.grad[i * c + j] * out.value[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          A.grad[i * c + j] += out.value[i * c + j] * (out.grad[i * c + j] - dot);
      }
    };
    return emit("softmax", {a}, a->shape, fwd, bwd);
  }

  /// Log-softmax along the last axis.
  TensorPtr log_softmax(const TensorPtr& a) {
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      const Tensor& A = *in[0];
      const std::size_t c = A.is_matrix() ? A.cols() : A.shape[0];
      const std::size_t r = A.size() / c;
      for (std::size_t i = 0; i < r; ++i) {
        const double* row = A.value.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) out.value[i * c + j] = row[j] - lz;
      }
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      Tensor& A = *in[0];
      const std::size_t c = A.is_matrix() ? A.cols() : A.shape[0];
      const std::size_t r = A.size() / c;
      for (std::size_t i = 0; i < r; ++i) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) gsum += out.grad[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          A.grad[i * c + j] +=
              out.grad[i * c + j] - std::exp(out.value[i * c + j]) * gsum;
      }
    };
    return emit("log-softmax", {a}, a->shape, fwd, bwd);
  }

  /// Select one matrix row (embedding lookup). Gradient scatters into the row.
  TensorPtr lookup_row(const TensorPtr& m, std::size_t row) {
    if (!m->is_matrix()) {
      throw NumericError("row-lookup expects a matrix, got " + shape_str(m->shape));
    }
    if (row >= m->rows()) {
      throw NumericError("row-lookup index " + std::to_string(row) +
                         " out of range for " + shape_str(m->shape));
    }
    auto fwd = [row](const std::vector<TensorPtr>& in, Tensor& out) {
      const std::size_t c = in[0]->cols();
      std::copy(in[0]->value.begin() + row * c, in[0]->value.begin() + (row + 1) * c,
                out.value.begin());
    };
    auto bwd = [row](const std::vector<TensorPtr>& in, Tensor& out) {
      const std::size_t c = in[0]->cols();
      for (std::size_t j = 0; j < c; ++j) in[0]->grad[row * c + j] += out.grad[j];
    };
    return emit("row-lookup", {m}, {m->cols()}, fwd, bwd);
  }

  /// Contiguous range along the first axis: vector elements or matrix rows.
  TensorPtr slice(const TensorPtr& a, std::size_t begin, std::size_t end) {
    if (begin >= end || end > a->shape[0]) {
      throw NumericError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_str(a->shape));
    }
    std::vector<std::size_t> out_shape = a->shape;
    out_shape[0] = end - begin;
    const std::size_t stride = a->is_matrix() ? a->cols() : 1;
    auto fwd = [begin, end, stride](const std::vector<TensorPtr>& in, Tensor& out) {
      std::copy(in[0]->value.begin() + begin * stride,
                in[0]->value.begin() + end * stride, out.value.begin());
    };
    auto bwd = [begin, end, stride](const std::vector<TensorPtr>& in, Tensor& out) {
      const std::size_t n = (end - begin) * stride;
      for (std::size_t i = 0; i < n; ++i)
        in[0]->grad[begin * stride + i] += out.grad[i];
    };
    return emit("slice", {a}, std::move(out_shape), fwd, bwd);
  }

  TensorPtr scale(const TensorPtr& a, double c) {
    auto fwd = [c](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i) out.value[i] = c * in[0]->value[i];
    };
    auto bwd = [c](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i) in[0]->grad[i] += c * out.grad[i];
    };
    return emit("scalar-scale", {a}, a->shape, fwd, bwd);
  }

  TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> new_shape) {
    if (shape_numel(new_shape) != a->size()) {
      throw NumericError("reshape " + shape_str(a->shape) + " -> " +
                         shape_str(new_shape) + " changes element count");
    }
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      out.value = in[0]->value;
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i) in[0]->grad[i] += out.grad[i];
    };
    return emit("reshape", {a}, std::move(new_shape), fwd, bwd);
  }

  /// Stack equal-length vectors as matrix rows.
  TensorPtr stack_rows(std::vector<TensorPtr> rows) {
    if (rows.empty()) throw NumericError("stack-rows of zero tensors");
    const std::size_t c = rows[0]->shape[0];
    for (auto& r : rows) {
      if (!r->is_vector() || r->shape[0] != c) shape_fail("stack-rows", rows[0], r);
    }
    const std::size_t n = rows.size();
    auto fwd = [c](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in.size(); ++i)
        std::copy(in[i]->value.begin(), in[i]->value.end(), out.value.begin() + i * c);
    };
    auto bwd = [c](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) in[i]->grad[j] += out.grad[i * c + j];
    };
    return emit("stack-rows", std::move(rows), {n, c}, fwd, bwd);
  }

  TensorPtr sum(const TensorPtr& a) {
    auto fwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      double acc = 0.0;
      for (double v : in[0]->value) acc += v;
      out.value[0] = acc;
    };
    auto bwd = [](const std::vector<TensorPtr>& in, Tensor& out) {
      for (std::size_t i = 0; i < in[0]->size(); ++i) in[0]->grad[i] += out.grad[0];
    };
    return emit("sum", {a}, {1}, fwd, bwd);
  }

  /// Zero-padded 1-D convolution of a signal vector [T] with kernels [C,K]
  /// (K odd) producing features [T,C]; feeds location-aware attention.
  TensorPtr conv1d_same(const TensorPtr& signal, const TensorPtr& kernel) {
    if (!signal->is_vector() || !kernel->is_matrix() || kernel->cols() % 2 == 0) {
      shape_fail("conv1d", signal, kernel);
    }
    const std::size_t T = signal->shape[0];
    const std::size_t C = kernel->rows();
    const std::size_t K = kernel->cols();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
    auto fwd = [T, C, K, pad](const std::vector<TensorPtr>& in, Tensor& out) {
      const auto& sig = in[0]->value;
      const auto& ker = in[1]->value;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < K; ++k) {
            const std::ptrdiff_t src = std::ptrdiff_t(t) + std::ptrdiff_t(k) - pad;
            if (src >= 0 && src < std::ptrdiff_t(T)) acc += ker[c * K + k] * sig[src];
          }
          out.value[t * C + c] = acc;
        }
      }
    };
    auto bwd = [T, C, K, pad](const std::vector<TensorPtr>& in, Tensor& out) {
      const auto& sig = in[0]->value;
      const auto& ker = in[1]->value;
      auto& dsig = in[0]->grad;
      auto& dker = in[1]->grad;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < C; ++c) {
          const double g = out.grad[t * C + c];
          for (std::size_t k = 0; k < K; ++k) {
            const std::ptrdiff_t src = std::ptrdiff_t(t) + std::ptrdiff_t(k) - pad;
            if (src >= 0 && src < std::ptrdiff_t(T)) {
              dsig[src] += g * ker[c * K + k];
              dker[c * K + k] += g * sig[src];
            }
          }
        }
      }
    };
    return emit("conv1d", {signal, kernel}, {T, C}, fwd, bwd);
  }

 private:
  struct Record {
    std::string kind;
    std::vector<TensorPtr> inputs;
    TensorPtr out;
    ForwardFn forward;
    BackwardFn backward;
  };

  [[noreturn]] static void shape_fail(const char* kind, const TensorPtr& a,
                                      const TensorPtr& b) {
    throw NumericError(std::string(kind) + ": incompatible shapes " +
                       shape_str(a->shape) + " and " + shape_str(b->shape));
  }

  std::vector<Record> records_;
};

/// Max relative error between the analytic gradient of f at x and central
/// finite differences with the given step. f builds a scalar loss on the
/// supplied graph from the current values of x (x may be shared into a model;
/// it is perturbed coordinate-wise in place and restored).
inline double finite_difference_check(
    const std::function<TensorPtr(Graph&, const TensorPtr&)>& f,
    const TensorPtr& x, double step) {
  const bool keep_rg = x->requires_grad;
  x->requires_grad = true;
  x->zero_grad();
  {
    Graph g;
    TensorPtr loss = f(g, x);
    g.backward(loss);
  }
  std::vector<double> analytic = x->grad;
  auto eval = [&]() {
    Graph g;
    const double v = f(g, x)->scalar();
    if (!std::isfinite(v)) {
      throw NumericError("finite_difference_check: non-finite function value");
    }
    return v;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < x->size(); ++i) {
    const double keep = x->value[i];
    x->value[i] = keep + step;
    const double up = eval();
    x->value[i] = keep - step;
    const double dn = eval();
    x->value[i] = keep;
    const double central = (up - dn) / (2.0 * step);
    const double rel =
        std::abs(analytic[i] - central) / std::max(1e-12, std::abs(central));
    worst = std::max(worst, rel);
  }
  x->requires_grad = keep_rg;
  x->zero_grad();
  return worst;
}

}  // namespace convasr
