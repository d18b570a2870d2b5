#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "knreader/autodiff/parameters.hpp"
#include "knreader/autodiff/tensor.hpp"

namespace knreader::autodiff {

// Handle to a node on a Graph tape.
struct Var {
  static constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

struct RowRef {
  Var source;
  std::size_t row = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
// is already topologically sorted; backward() walks it in reverse. Parameters
// enter as leaves whose gradient is accumulated into Parameter::grad (when the
// parameter is trainable). With track_gradients == false no backward closures
// are recorded and the graph only evaluates.
template <typename T>
class Graph {
 public:
  explicit Graph(bool track_gradients = true) : tracking_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracking() const { return tracking_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor<T> value);
  Var parameter(Parameter<T>& param);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  // Zero-shaped until backward() reaches the node.
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Seeds d output / d output = 1 for a 1x1 output and propagates.
  void backward(Var output);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_n(std::span<const Var> terms);
  // a (r x c) + row (1 x c), broadcast over rows.
  Var add_row(Var a, Var row);
  Var scale(Var a, T factor);
  // a * s for a learned 1x1 scalar s.
  Var scale_by(Var a, Var scalar);
  // mask[r] * updated + (1 - mask[r]) * previous, row by row.
  Var blend_rows(Var updated, Var previous, std::span<const T> row_mask);

  Var matmul(Var a, Var b);
  // a * b^T
  Var matmul_nt(Var a, Var b);

  Var sigmoid(Var a);
  Var tanh(Var a);

  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  // Element pickup of one row.
  Var pickup_row(Var a, std::size_t row) { return slice_rows(a, row, 1); }
  // Stacks the referenced rows (all sources must share a column count).
  Var gather_rows(std::span<const RowRef> refs);
  // Rows of table for each id; gradients scatter back into table.grad.
  Var embedding(Parameter<T>& table, std::span<const std::int32_t> ids);

  // Inverted dropout: kept entries scaled by 1/keep_prob. Identity when not
  // training or keep_prob == 1.
  Var dropout(Var a, T keep_prob, bool training, std::mt19937_64& rng);

  // Row-wise softmax with max subtraction. With a column mask (1 = keep),
  // masked entries are exactly 0; a fully masked row is a DomainError.
  Var softmax_rows(Var a, std::span<const std::uint8_t> column_mask = {});
  Var log_softmax_rows(Var a);

  // column (k x 1) -> 1 x segments, out[s] = sum of rows r with segment_of_row[r] == s.
  Var segment_sum(Var column, std::span<const std::size_t> segment_of_row, std::size_t segments);
  // 1x1 element of a.
  Var pick(Var a, std::size_t row, std::size_t col);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor<T> value, bool requires_grad);
  Tensor<T>& grad_ref(std::size_t id);
  bool needs(Var v) const { return tracking_ && nodes_[v.id].requires_grad; }
  bool needs_any(std::initializer_list<Var> vs) const;

  bool tracking_;
  std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace knreader::autodiff
