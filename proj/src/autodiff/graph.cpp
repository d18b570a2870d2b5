#include "knreader/autodiff/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace knreader::autodiff {
namespace {

std::string shape_str(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.rows(), a.cols()) + " and " +
                     shape_str(b.rows(), b.cols()) + " differ");
  }
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

// out += a (n x k) * b (k x m)
template <typename T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    T* out_row = out + i * m;
    const T* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a_row[p];
      if (av != T(0)) axpy(av, b + p * m, out_row, m);
    }
  }
}

// out += a (n x k) * b^T, b is (m x k)
template <typename T>
void gemm_nt(const T* a, const T* b, T* out, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += dot(a + i * k, b + j * k, k);
  }
}

// out += a^T * b, a is (n x k), b is (n x m), out is (k x m)
template <typename T>
void gemm_tn(const T* a, const T* b, T* out, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* a_row = a + i * k;
    const T* b_row = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a_row[p];
      if (av != T(0)) axpy(av, b_row, out + p * m, m);
    }
  }
}

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = tracking_ && requires_grad;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Graph<T>::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) n.grad = Tensor<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
bool Graph<T>::needs_any(std::initializer_list<Var> vs) const {
  if (!tracking_) return false;
  for (Var v : vs) {
    if (nodes_[v.id].requires_grad) return true;
  }
  return false;
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Graph<T>::parameter(Parameter<T>& param) {
  Var out = push(param.value, param.trainable);
  if (needs(out)) {
    Parameter<T>* p = &param;
    nodes_[out.id].backward = [this, out, p] {
      const Tensor<T>& g = nodes_[out.id].grad;
      axpy(T(1), g.data(), p->grad.data(), g.size());
    };
  }
  return out;
}

template <typename T>
void Graph<T>::backward(Var output) {
  if (!tracking_) throw DomainError("backward() on a graph built without gradient tracking");
  if (nodes_.at(output.id).value.size() != 1) throw ShapeError("backward() needs a scalar output");
  for (std::size_t i = 0; i <= output.id; ++i) {
    if (nodes_[i].requires_grad) grad_ref(i).fill(T(0));
  }
  if (!nodes_[output.id].requires_grad) return;
  nodes_[output.id].grad[0] = T(1);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && nodes_[i].backward) nodes_[i].backward();
  }
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor<T>& va = value(a);
  require_same_shape(va, value(b), "add");
  Tensor<T> out = va;
  axpy(T(1), value(b).data(), out.data(), out.size());
  Var o = push(std::move(out), needs_any({a, b}));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o] {
      const Tensor<T>& g = nodes_[o.id].grad;
      if (needs(a)) axpy(T(1), g.data(), grad_ref(a.id).data(), g.size());
      if (needs(b)) axpy(T(1), g.data(), grad_ref(b.id).data(), g.size());
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  const Tensor<T>& va = value(a);
  require_same_shape(va, value(b), "sub");
  Tensor<T> out = va;
  axpy(T(-1), value(b).data(), out.data(), out.size());
  Var o = push(std::move(out), needs_any({a, b}));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o] {
      const Tensor<T>& g = nodes_[o.id].grad;
      if (needs(a)) axpy(T(1), g.data(), grad_ref(a.id).data(), g.size());
      if (needs(b)) axpy(T(-1), g.data(), grad_ref(b.id).data(), g.size());
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Tensor<T> out = value(a);
  const Tensor<T>& vb = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  Var o = push(std::move(out), needs_any({a, b}));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o] {
      const Tensor<T>& g = nodes_[o.id].grad;
      if (needs(a)) {
        Tensor<T>& ga = grad_ref(a.id);
        const Tensor<T>& vb = nodes_[b.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (needs(b)) {
        Tensor<T>& gb = grad_ref(b.id);
        const Tensor<T>& va = nodes_[a.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::add_n(std::span<const Var> terms) {
  if (terms.empty()) throw ShapeError("add_n: no terms");
  Tensor<T> out = value(terms[0]);
  bool any = needs(terms[0]);
  for (std::size_t k = 1; k < terms.size(); ++k) {
    require_same_shape(out, value(terms[k]), "add_n");
    axpy(T(1), value(terms[k]).data(), out.data(), out.size());
    any = any || needs(terms[k]);
  }
  Var o = push(std::move(out), any);
  if (needs(o)) {
    std::vector<Var> parents(terms.begin(), terms.end());
    nodes_[o.id].backward = [this, parents, o] {
      const Tensor<T>& g = nodes_[o.id].grad;
      for (Var p : parents) {
        if (needs(p)) axpy(T(1), g.data(), grad_ref(p.id).data(), g.size());
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::add_row(Var a, Var row) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vr = value(row);
  if (vr.rows() != 1 || vr.cols() != va.cols()) {
    throw ShapeError("add_row: row " + shape_str(vr.rows(), vr.cols()) + " vs " + shape_str(va.rows(), va.cols()));
  }
  Tensor<T> out = va;
  for (std::size_t r = 0; r < out.rows(); ++r) axpy(T(1), vr.data(), out.data() + r * out.cols(), out.cols());
  Var o = push(std::move(out), needs_any({a, row}));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, row, o] {
      const Tensor<T>& g = nodes_[o.id].grad;
      if (needs(a)) axpy(T(1), g.data(), grad_ref(a.id).data(), g.size());
      if (needs(row)) {
        Tensor<T>& gr = grad_ref(row.id);
        for (std::size_t r = 0; r < g.rows(); ++r) axpy(T(1), g.data() + r * g.cols(), gr.data(), g.cols());
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::scale(Var a, T factor) {
  Tensor<T> out = value(a);
  for (auto& v : out.values()) v *= factor;
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, factor] {
      const Tensor<T>& g = nodes_[o.id].grad;
      axpy(factor, g.data(), grad_ref(a.id).data(), g.size());
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::scale_by(Var a, Var scalar) {
  if (value(scalar).size() != 1) throw ShapeError("scale_by: scalar must be 1x1");
  const T s = value(scalar)[0];
  Tensor<T> out = value(a);
  for (auto& v : out.values()) v *= s;
  Var o = push(std::move(out), needs_any({a, scalar}));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, scalar, o] {
      const Tensor<T>& g = nodes_[o.id].grad;
      if (needs(a)) axpy(nodes_[scalar.id].value[0], g.data(), grad_ref(a.id).data(), g.size());
      if (needs(scalar)) grad_ref(scalar.id)[0] += dot(g.data(), nodes_[a.id].value.data(), g.size());
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::blend_rows(Var updated, Var previous, std::span<const T> row_mask) {
  const Tensor<T>& u = value(updated);
  const Tensor<T>& p = value(previous);
  require_same_shape(u, p, "blend_rows");
  if (row_mask.size() != u.rows()) throw ShapeError("blend_rows: mask length differs from row count");
  Tensor<T> out(u.rows(), u.cols());
  for (std::size_t r = 0; r < u.rows(); ++r) {
    const T m = row_mask[r];
    for (std::size_t c = 0; c < u.cols(); ++c) out(r, c) = m * u(r, c) + (T(1) - m) * p(r, c);
  }
  Var o = push(std::move(out), needs_any({updated, previous}));
  if (needs(o)) {
    std::vector<T> mask(row_mask.begin(), row_mask.end());
    nodes_[o.id].backward = [this, updated, previous, o, mask = std::move(mask)] {
      const Tensor<T>& g = nodes_[o.id].grad;
      const std::size_t cols = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        if (needs(updated) && mask[r] != T(0)) axpy(mask[r], g.data() + r * cols, grad_ref(updated.id).data() + r * cols, cols);
        if (needs(previous) && mask[r] != T(1)) {
          axpy(T(1) - mask[r], g.data() + r * cols, grad_ref(previous.id).data() + r * cols, cols);
        }
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  if (va.cols() != vb.rows()) {
    throw ShapeError("matmul: " + shape_str(va.rows(), va.cols()) + " * " + shape_str(vb.rows(), vb.cols()));
  }
  const std::size_t n = va.rows(), k = va.cols(), m = vb.cols();
  Tensor<T> out(n, m);
  gemm_nn(va.data(), vb.data(), out.data(), n, k, m);
  Var o = push(std::move(out), needs_any({a, b}));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o, n, k, m] {
      const Tensor<T>& g = nodes_[o.id].grad;
      // dA = G B^T, dB = A^T G
      if (needs(a)) gemm_nt(g.data(), nodes_[b.id].value.data(), grad_ref(a.id).data(), n, m, k);
      if (needs(b)) gemm_tn(nodes_[a.id].value.data(), g.data(), grad_ref(b.id).data(), n, k, m);
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::matmul_nt(Var a, Var b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  if (va.cols() != vb.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(va.rows(), va.cols()) + " * (" + shape_str(vb.rows(), vb.cols()) + ")^T");
  }
  const std::size_t n = va.rows(), k = va.cols(), m = vb.rows();
  Tensor<T> out(n, m);
  gemm_nt(va.data(), vb.data(), out.data(), n, k, m);
  Var o = push(std::move(out), needs_any({a, b}));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o, n, k, m] {
      const Tensor<T>& g = nodes_[o.id].grad;
      // dA = G B, dB = G^T A
      if (needs(a)) gemm_nn(g.data(), nodes_[b.id].value.data(), grad_ref(a.id).data(), n, m, k);
      if (needs(b)) gemm_tn(g.data(), nodes_[a.id].value.data(), grad_ref(b.id).data(), n, m, k);
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::sigmoid(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.values()) v = T(1) / (T(1) + std::exp(-v));
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o] {
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& y = nodes_[o.id].value;
      Tensor<T>& ga = grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::tanh(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.values()) v = std::tanh(v);
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o] {
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& y = nodes_[o.id].value;
      Tensor<T>& ga = grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::concat_cols(Var a, Var b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  if (va.rows() != vb.rows()) throw ShapeError("concat_cols: row counts differ");
  const std::size_t ca = va.cols(), cb = vb.cols();
  Tensor<T> out(va.rows(), ca + cb);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    std::copy(va.row(r).begin(), va.row(r).end(), out.row(r).begin());
    std::copy(vb.row(r).begin(), vb.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
  }
  Var o = push(std::move(out), needs_any({a, b}));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, b, o, ca, cb] {
      const Tensor<T>& g = nodes_[o.id].grad;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        if (needs(a)) axpy(T(1), g.data() + r * (ca + cb), grad_ref(a.id).data() + r * ca, ca);
        if (needs(b)) axpy(T(1), g.data() + r * (ca + cb) + ca, grad_ref(b.id).data() + r * cb, cb);
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor<T>& va = value(a);
  if (begin + count > va.cols()) throw ShapeError("slice_cols: range exceeds " + std::to_string(va.cols()) + " columns");
  Tensor<T> out(va.rows(), count);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    std::copy_n(va.data() + r * va.cols() + begin, count, out.data() + r * count);
  }
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, begin, count] {
      const Tensor<T>& g = nodes_[o.id].grad;
      Tensor<T>& ga = grad_ref(a.id);
      for (std::size_t r = 0; r < g.rows(); ++r) axpy(T(1), g.data() + r * count, ga.data() + r * ga.cols() + begin, count);
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor<T>& va = value(a);
  if (begin + count > va.rows()) {
    throw DomainError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                      ") out of range for " + std::to_string(va.rows()) + " rows");
  }
  const std::size_t cols = va.cols();
  Tensor<T> out(count, cols);
  std::copy_n(va.data() + begin * cols, count * cols, out.data());
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, begin, cols] {
      const Tensor<T>& g = nodes_[o.id].grad;
      axpy(T(1), g.data(), grad_ref(a.id).data() + begin * cols, g.size());
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::gather_rows(std::span<const RowRef> refs) {
  if (refs.empty()) throw ShapeError("gather_rows: no rows");
  const std::size_t cols = value(refs[0].source).cols();
  Tensor<T> out(refs.size(), cols);
  bool any = false;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Tensor<T>& src = value(refs[i].source);
    if (src.cols() != cols) throw ShapeError("gather_rows: sources differ in width");
    if (refs[i].row >= src.rows()) throw DomainError("gather_rows: row index out of range");
    std::copy_n(src.data() + refs[i].row * cols, cols, out.data() + i * cols);
    any = any || needs(refs[i].source);
  }
  Var o = push(std::move(out), any);
  if (needs(o)) {
    std::vector<RowRef> saved(refs.begin(), refs.end());
    nodes_[o.id].backward = [this, saved = std::move(saved), o, cols] {
      const Tensor<T>& g = nodes_[o.id].grad;
      for (std::size_t i = 0; i < saved.size(); ++i) {
        if (needs(saved[i].source)) axpy(T(1), g.data() + i * cols, grad_ref(saved[i].source.id).data() + saved[i].row * cols, cols);
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::embedding(Parameter<T>& table, std::span<const std::int32_t> ids) {
  const std::size_t width = table.value.cols();
  Tensor<T> out(ids.size(), width);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.value.rows()) {
      throw DomainError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                        std::to_string(table.value.rows()) + " rows");
    }
    std::copy_n(table.value.data() + static_cast<std::size_t>(ids[i]) * width, width, out.data() + i * width);
  }
  Var o = push(std::move(out), table.trainable);
  if (needs(o)) {
    Parameter<T>* p = &table;
    std::vector<std::int32_t> saved(ids.begin(), ids.end());
    nodes_[o.id].backward = [this, p, saved = std::move(saved), o, width] {
      const Tensor<T>& g = nodes_[o.id].grad;
      for (std::size_t i = 0; i < saved.size(); ++i) {
        axpy(T(1), g.data() + i * width, p->grad.data() + static_cast<std::size_t>(saved[i]) * width, width);
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::dropout(Var a, T keep_prob, bool training, std::mt19937_64& rng) {
  if (!(keep_prob > T(0) && keep_prob <= T(1))) throw DomainError("dropout: keep probability must be in (0, 1]");
  if (!training || keep_prob == T(1)) return a;
  std::bernoulli_distribution keep(static_cast<double>(keep_prob));
  Tensor<T> mask(value(a).rows(), value(a).cols());
  const T scale_kept = T(1) / keep_prob;
  for (auto& m : mask.values()) m = keep(rng) ? scale_kept : T(0);
  Tensor<T> out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, mask = std::move(mask)] {
      const Tensor<T>& g = nodes_[o.id].grad;
      Tensor<T>& ga = grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::softmax_rows(Var a, std::span<const std::uint8_t> column_mask) {
  const Tensor<T>& va = value(a);
  const std::size_t cols = va.cols();
  if (!column_mask.empty() && column_mask.size() != cols) throw ShapeError("softmax_rows: mask width differs");
  auto kept = [&](std::size_t c) { return column_mask.empty() || column_mask[c] != 0; };
  Tensor<T> out(va.rows(), cols);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (kept(c)) mx = std::max(mx, va(r, c));
    }
    if (mx == -std::numeric_limits<T>::infinity()) throw DomainError("softmax: every entry is masked");
    T total = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = kept(c) ? std::exp(va(r, c) - mx) : T(0);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= total;
  }
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, cols] {
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& y = nodes_[o.id].value;
      Tensor<T>& ga = grad_ref(a.id);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const T inner = dot(g.data() + r * cols, y.data() + r * cols, cols);
        for (std::size_t c = 0; c < cols; ++c) ga(r, c) += y(r, c) * (g(r, c) - inner);
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::log_softmax_rows(Var a) {
  const Tensor<T>& va = value(a);
  const std::size_t cols = va.cols();
  Tensor<T> out(va.rows(), cols);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    T mx = va(r, 0);
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, va(r, c));
    T total = T(0);
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(va(r, c) - mx);
    const T log_z = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = va(r, c) - log_z;
  }
  Var o = push(std::move(out), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, cols] {
      const Tensor<T>& g = nodes_[o.id].grad;
      const Tensor<T>& y = nodes_[o.id].value;
      Tensor<T>& ga = grad_ref(a.id);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        T gsum = T(0);
        for (std::size_t c = 0; c < cols; ++c) gsum += g(r, c);
        for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
      }
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::segment_sum(Var column, std::span<const std::size_t> segment_of_row, std::size_t segments) {
  const Tensor<T>& v = value(column);
  if (v.cols() != 1 || v.rows() != segment_of_row.size()) throw ShapeError("segment_sum: expects a k x 1 column with k segment ids");
  Tensor<T> out(1, segments);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    if (segment_of_row[r] >= segments) throw DomainError("segment_sum: segment id out of range");
    out[segment_of_row[r]] += v[r];
  }
  Var o = push(std::move(out), needs(column));
  if (needs(o)) {
    std::vector<std::size_t> seg(segment_of_row.begin(), segment_of_row.end());
    nodes_[o.id].backward = [this, column, o, seg = std::move(seg)] {
      const Tensor<T>& g = nodes_[o.id].grad;
      Tensor<T>& gc = grad_ref(column.id);
      for (std::size_t r = 0; r < seg.size(); ++r) gc[r] += g[seg[r]];
    };
  }
  return o;
}

template <typename T>
Var Graph<T>::pick(Var a, std::size_t row, std::size_t col) {
  const Tensor<T>& va = value(a);
  if (row >= va.rows() || col >= va.cols()) throw DomainError("pick: index out of range");
  Var o = push(Tensor<T>(1, 1, va(row, col)), needs(a));
  if (needs(o)) {
    nodes_[o.id].backward = [this, a, o, row, col] { grad_ref(a.id)(row, col) += nodes_[o.id].grad[0]; };
  }
  return o;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace knreader::autodiff
