#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "wgen/tensor.hpp"

namespace wgen {

template <class T>
class Graph;

// Handle to a node on a Graph. Cheap to copy; only valid while its graph lives.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor<T>& value() const { return graph->value(id); }
  const Tensor<T>& grad() const { return graph->grad(id); }
  const Shape& shape() const { return value().shape(); }
};

// Append-only tape. Node inputs always precede the node itself, so a single
// reverse sweep over the append order is a valid topological traversal.
//
// A graph built with record=false computes values only; no backward rules are
// kept. That is the mode used for sampling and decoding.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Gradient-tracked leaf that refers to caller-owned storage. The tensor
  // must outlive the graph.
  Var<T> leaf(const Tensor<T>& external);
  // Owned value with no gradient.
  Var<T> constant(Tensor<T> value);

  // Used by op implementations. The backward rule is dropped when no input
  // requires a gradient or recording is off.
  Var<T> record(Tensor<T> value, std::initializer_list<std::uint32_t> inputs, BackwardFn fn);
  Var<T> record(Tensor<T> value, std::span<const std::uint32_t> inputs, BackwardFn fn);

  const Tensor<T>& value(std::uint32_t id) const;
  // Gradient accumulated by the last backward(); zeros if the node was not
  // reached.
  const Tensor<T>& grad(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  Tensor<T>& grad_accumulator(std::uint32_t id);

  void backward(Var<T> root);

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  // Number of backward rules run by the last backward().
  std::size_t visited() const noexcept { return visited_; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    mutable Tensor<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  bool record_;
  std::size_t visited_ = 0;
};

extern template class Graph<float>;
extern template class Graph<double>;

// Column mask over the vocabulary; an empty span means every column allowed.
using ColumnMask = std::span<const std::uint8_t>;

// Elementwise and structural ops. Shapes are checked; a mismatch throws
// ShapeError.
template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> add_row(Var<T> a, Var<T> row);
template <class T> Var<T> scale(Var<T> a, T s);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> sum(Var<T> a);
template <class T> Var<T> weighted_sum(std::span<const Var<T>> scalars, std::span<const T> weights);
template <class T> Var<T> matmul(Var<T> a, Var<T> b);
template <class T> Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> bias);
template <class T> Var<T> gelu(Var<T> a);
template <class T> Var<T> exp(Var<T> a);
template <class T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps);
template <class T> Var<T> log_softmax_rows(Var<T> x);
template <class T> Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids);

// −log softmax(logits)[target] for a single row of logits.
template <class T> Var<T> cross_entropy(Var<T> logits, std::int32_t target);

// Σ_r log softmax_allowed(logits[rows[r]])[targets[r]], where the softmax is
// restricted to the allowed columns, times `coefficient`. Targets outside the
// allowed set are a ContractError.
template <class T>
Var<T> select_log_softmax(Var<T> logits, std::span<const std::size_t> rows,
                          std::span<const std::int32_t> targets, ColumnMask allowed,
                          T coefficient);

// Multi-head scaled dot-product attention over row-major q[n×d], k[m×d],
// v[m×d]. `causal` lets query i see keys j ≤ i + (m − n). `key_valid`, when
// non-empty, removes keys (padding) from every query's support.
template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, bool causal,
                 std::span<const std::uint8_t> key_valid);

}  // namespace wgen
