#include "wgen/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace wgen {

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

template <class T>
Var<T> Graph<T>::leaf(const Tensor<T>& external) {
  Node n;
  n.external = &external;
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::initializer_list<std::uint32_t> inputs,
                        BackwardFn fn) {
  return record(std::move(value), std::span<const std::uint32_t>(inputs.begin(), inputs.size()),
                std::move(fn));
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::span<const std::uint32_t> inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (record_) {
    for (auto id : inputs) {
      if (id >= nodes_.size()) throw ContractError("op input does not belong to this graph");
      if (nodes_[id].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
const Tensor<T>& Graph<T>::value(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

template <class T>
const Tensor<T>& Graph<T>::grad(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
  return n.grad;
}

template <class T>
Tensor<T>& Graph<T>::grad_accumulator(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
  return n.grad;
}

template <class T>
void Graph<T>::backward(Var<T> root) {
  if (root.graph != this) throw ContractError("backward root belongs to another graph");
  if (value(root.id).size() != 1)
    throw ContractError("backward root must be a scalar, got shape " +
                        shape_string(value(root.id).shape()));
  for (auto& n : nodes_) n.grad = Tensor<T>();
  visited_ = 0;
  grad_accumulator(root.id).fill(T(1));
  for (std::uint32_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, id);
    ++visited_;
  }
}

template class Graph<float>;
template class Graph<double>;

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

namespace {

template <class T>
void require_same_graph(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw ContractError("operands live on different graphs");
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

template <class T>
void accumulate(Graph<T>& g, std::uint32_t id, const Tensor<T>& delta, T factor = T(1)) {
  if (!g.requires_grad(id)) return;
  auto dst = g.grad_accumulator(id).data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {ia, ib}, [ia, ib](Graph<T>& g, std::uint32_t self) {
    const auto& dy = g.grad(self);
    accumulate(g, ia, dy);
    accumulate(g, ib, dy);
  });
}

template <class T>
Var<T> add_row(Var<T> a, Var<T> row) {
  require_same_graph(a, row);
  const auto& av = a.value();
  const auto& rv = row.value();
  if (rv.size() != av.cols())
    throw ShapeError("add_row: row of length " + std::to_string(rv.size()) +
                     " does not match " + shape_string(av.shape()));
  Tensor<T> out = av;
  const std::size_t m = av.rows(), n = av.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += rv[j];
  const auto ia = a.id, ir = row.id;
  return a.graph->record(std::move(out), {ia, ir},
                         [ia, ir, m, n](Graph<T>& g, std::uint32_t self) {
                           const auto& dy = g.grad(self);
                           accumulate(g, ia, dy);
                           if (g.requires_grad(ir)) {
                             auto& dr = g.grad_accumulator(ir);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) dr[j] += dy(i, j);
                           }
                         });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& x : out.data()) x *= s;
  const auto ia = a.id;
  return a.graph->record(std::move(out), {ia}, [ia, s](Graph<T>& g, std::uint32_t self) {
    accumulate(g, ia, g.grad(self), s);
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {ia, ib}, [ia, ib](Graph<T>& g, std::uint32_t self) {
    const auto& dy = g.grad(self);
    const auto& av = g.value(ia);
    const auto& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      auto& da = g.grad_accumulator(ia);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      auto& db = g.grad_accumulator(ib);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

template <class T>
Var<T> sum(Var<T> a) {
  T total = 0;
  for (auto x : a.value().data()) total += x;
  const auto ia = a.id;
  return a.graph->record(Tensor<T>::scalar(total), {ia}, [ia](Graph<T>& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const T d = g.grad(self)[0];
    for (auto& x : g.grad_accumulator(ia).data()) x += d;
  });
}

template <class T>
Var<T> weighted_sum(std::span<const Var<T>> scalars, std::span<const T> weights) {
  if (scalars.empty()) throw ContractError("weighted_sum of no terms");
  if (scalars.size() != weights.size())
    throw ShapeError("weighted_sum: " + std::to_string(scalars.size()) + " terms but " +
                     std::to_string(weights.size()) + " weights");
  Graph<T>* graph = scalars[0].graph;
  std::vector<std::uint32_t> ids;
  ids.reserve(scalars.size());
  T total = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].graph != graph) throw ContractError("weighted_sum across graphs");
    total += weights[i] * scalars[i].value().item();
    ids.push_back(scalars[i].id);
  }
  std::vector<T> w(weights.begin(), weights.end());
  auto idc = ids;
  return graph->record(Tensor<T>::scalar(total), ids,
                       [idc = std::move(idc), w = std::move(w)](Graph<T>& g, std::uint32_t self) {
                         const T d = g.grad(self)[0];
                         for (std::size_t i = 0; i < idc.size(); ++i)
                           if (g.requires_grad(idc[i])) g.grad_accumulator(idc[i])[0] += d * w[i];
                       });
}

namespace {

// dA[m×k] += dC[m×p] · Bᵀ
template <class T>
void gemm_grad_a(const T* dc, const T* b, T* da, std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* dci = dc + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T* bk = b + kk * p;
      T acc = 0;
      for (std::size_t j = 0; j < p; ++j) acc += dci[j] * bk[j];
      da[i * k + kk] += acc;
    }
  }
}

// dB[k×p] += Aᵀ · dC
template <class T>
void gemm_grad_b(const T* a, const T* dc, T* db, std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* dci = dc + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = a[i * k + kk];
      if (av == T(0)) continue;
      T* dbk = db + kk * p;
      for (std::size_t j = 0; j < p; ++j) dbk[j] += av * dci[j];
    }
  }
}

}  // namespace

template <class T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> bias) {
  require_same_graph(x, w);
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (wv.rank() != 2 || xv.cols() != wv.rows())
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(xv.shape()) + " x " +
                     shape_string(wv.shape()));
  const std::size_t m = xv.rows(), k = xv.cols(), p = wv.cols();
  Tensor<T> out({m, p});
  if (bias) {
    require_same_graph(x, *bias);
    const auto& bv = bias->value();
    if (bv.size() != p) throw ShapeError("linear: bias length does not match output width");
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.ptr(), bv.ptr() + p, out.ptr() + i * p);
  }
  gemm_accumulate(xv.ptr(), wv.ptr(), out.ptr(), m, k, p);
  const auto ix = x.id, iw = w.id;
  const bool has_bias = bias.has_value();
  const auto ib = has_bias ? bias->id : 0u;
  auto fn = [ix, iw, ib, has_bias, m, k, p](Graph<T>& g, std::uint32_t self) {
    const auto& dy = g.grad(self);
    if (g.requires_grad(ix))
      gemm_grad_a(dy.ptr(), g.value(iw).ptr(), g.grad_accumulator(ix).ptr(), m, k, p);
    if (g.requires_grad(iw))
      gemm_grad_b(g.value(ix).ptr(), dy.ptr(), g.grad_accumulator(iw).ptr(), m, k, p);
    if (has_bias && g.requires_grad(ib)) {
      auto& db = g.grad_accumulator(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) db[j] += dy(i, j);
    }
  };
  if (has_bias) return x.graph->record(std::move(out), {ix, iw, ib}, std::move(fn));
  return x.graph->record(std::move(out), {ix, iw}, std::move(fn));
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  if (a.value().rank() != 2)
    throw ShapeError("matmul: left operand must be a matrix, got " + shape_string(a.shape()));
  return linear<T>(a, b, std::nullopt);
}

template <class T>
Var<T> gelu(Var<T> a) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T x = av[i];
    out[i] = T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x)));
  }
  const auto ia = a.id;
  return a.graph->record(std::move(out), {ia}, [ia](Graph<T>& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const auto& xv = g.value(ia);
    const auto& dy = g.grad(self);
    auto& dx = g.grad_accumulator(ia);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T x = xv[i];
      const T t = std::tanh(c * (x + k * x * x * x));
      const T d = T(0.5) * (T(1) + t) +
                  T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * k * x * x);
      dx[i] += dy[i] * d;
    }
  });
}

template <class T>
Var<T> exp(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& x : out.data()) x = std::exp(x);
  const auto ia = a.id;
  return a.graph->record(std::move(out), {ia}, [ia](Graph<T>& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const auto& y = g.value(self);
    const auto& dy = g.grad(self);
    auto& dx = g.grad_accumulator(ia);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i];
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const auto& xv = x.value();
  const std::size_t m = xv.rows(), d = xv.cols();
  if (gain.value().size() != d || bias.value().size() != d)
    throw ShapeError("layer_norm: gain/bias length must equal row width");
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> rstd(m);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    const T* xi = xv.ptr() + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= T(d);
    const T r = T(1) / std::sqrt(var + eps);
    rstd[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xi[j] - mean) * r;
      xhat(i, j) = h;
      out(i, j) = gv[j] * h + bv[j];
    }
  }
  const auto ix = x.id, ig = gain.id, ib = bias.id;
  return x.graph->record(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, m, d, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g,
                                                                        std::uint32_t self) {
        const auto& dy = g.grad(self);
        const auto& gv = g.value(ig);
        if (g.requires_grad(ig)) {
          auto& dg = g.grad_accumulator(ig);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) dg[j] += dy(i, j) * xhat(i, j);
        }
        if (g.requires_grad(ib)) {
          auto& db = g.grad_accumulator(ib);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) db[j] += dy(i, j);
        }
        if (g.requires_grad(ix)) {
          auto& dx = g.grad_accumulator(ix);
          for (std::size_t i = 0; i < m; ++i) {
            T mean_dh = 0, mean_dh_h = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = dy(i, j) * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat(i, j);
            }
            mean_dh /= T(d);
            mean_dh_h /= T(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = dy(i, j) * gv[j];
              dx(i, j) += rstd[i] * (dh - mean_dh - xhat(i, j) * mean_dh_h);
            }
          }
        }
      });
}

template <class T>
Var<T> log_softmax_rows(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t m = xv.rows(), v = xv.cols();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const T* xi = xv.ptr() + i * v;
    const T mx = *std::max_element(xi, xi + v);
    T s = 0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(xi[j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < v; ++j) out(i, j) = xi[j] - lse;
  }
  const auto ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, m, v](Graph<T>& g, std::uint32_t self) {
    if (!g.requires_grad(ix)) return;
    const auto& y = g.value(self);
    const auto& dy = g.grad(self);
    auto& dx = g.grad_accumulator(ix);
    for (std::size_t i = 0; i < m; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < v; ++j) s += dy(i, j);
      for (std::size_t j = 0; j < v; ++j) dx(i, j) += dy(i, j) - std::exp(y(i, j)) * s;
    }
  });
}

template <class T>
Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids) {
  const auto& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding table must be a matrix");
  if (ids.empty()) throw ShapeError("embedding of an empty id sequence");
  const std::size_t vsz = tv.rows(), d = tv.cols();
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vsz)
      throw IndexError("embedding id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(vsz) + " rows");
    std::copy_n(tv.ptr() + static_cast<std::size_t>(ids[i]) * d, d, out.ptr() + i * d);
  }
  const auto it = table.id;
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return table.graph->record(std::move(out), {it},
                             [it, d, idv = std::move(idv)](Graph<T>& g, std::uint32_t self) {
                               const auto& dy = g.grad(self);
                               auto& dt = g.grad_accumulator(it);
                               for (std::size_t i = 0; i < idv.size(); ++i) {
                                 T* dst = dt.ptr() + static_cast<std::size_t>(idv[i]) * d;
                                 const T* src = dy.ptr() + i * d;
                                 for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                             });
}

template <class T>
Var<T> select_log_softmax(Var<T> logits, std::span<const std::size_t> rows,
                          std::span<const std::int32_t> targets, ColumnMask allowed,
                          T coefficient) {
  const auto& lv = logits.value();
  const std::size_t m = lv.rows(), v = lv.cols();
  if (rows.size() != targets.size())
    throw ShapeError("select_log_softmax: rows and targets differ in length");
  if (!allowed.empty() && allowed.size() != v)
    throw ShapeError("select_log_softmax: mask width does not match vocabulary");
  auto is_allowed = [&](std::size_t j) { return allowed.empty() || allowed[j] != 0; };

  // Per selected row: log-sum-exp over the allowed columns.
  std::vector<T> lse(rows.size());
  T total = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) throw IndexError("select_log_softmax: row out of range");
    const auto t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= v)
      throw IndexError("target id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(v));
    if (!is_allowed(static_cast<std::size_t>(t)))
      throw ContractError("target id " + std::to_string(t) + " is masked out of the support");
    const T* xi = lv.ptr() + rows[r] * v;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < v; ++j)
      if (is_allowed(j)) mx = std::max(mx, xi[j]);
    T s = 0;
    for (std::size_t j = 0; j < v; ++j)
      if (is_allowed(j)) s += std::exp(xi[j] - mx);
    lse[r] = mx + std::log(s);
    total += xi[t] - lse[r];
  }
  const auto il = logits.id;
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  std::vector<std::int32_t> tv(targets.begin(), targets.end());
  std::vector<std::uint8_t> mask(allowed.begin(), allowed.end());
  return logits.graph->record(
      Tensor<T>::scalar(coefficient * total), {il},
      [il, v, coefficient, rv = std::move(rv), tv = std::move(tv), mask = std::move(mask),
       lse = std::move(lse)](Graph<T>& g, std::uint32_t self) {
        const T d = g.grad(self)[0] * coefficient;
        const auto& lv = g.value(il);
        auto& dl = g.grad_accumulator(il);
        for (std::size_t r = 0; r < rv.size(); ++r) {
          const T* xi = lv.ptr() + rv[r] * v;
          T* di = dl.ptr() + rv[r] * v;
          for (std::size_t j = 0; j < v; ++j)
            if (mask.empty() || mask[j]) di[j] -= d * std::exp(xi[j] - lse[r]);
          di[tv[r]] += d;
        }
      });
}

template <class T>
Var<T> cross_entropy(Var<T> logits, std::int32_t target) {
  if (logits.value().rows() != 1)
    throw ShapeError("cross_entropy expects a single row of logits, got " +
                     shape_string(logits.shape()));
  const std::size_t row = 0;
  return select_log_softmax<T>(logits, std::span<const std::size_t>(&row, 1),
                               std::span<const std::int32_t>(&target, 1), {}, T(-1));
}

template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, bool causal,
                 std::span<const std::uint8_t> key_valid) {
  require_same_graph(q, k);
  require_same_graph(q, v);
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t n = qv.rows(), m = kv.rows(), d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != m)
    throw ShapeError("attention: q/k/v widths or key counts disagree");
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: width not divisible by heads");
  if (!key_valid.empty() && key_valid.size() != m)
    throw ShapeError("attention: key mask length differs from key count");
  if (causal && m < n) throw ShapeError("attention: causal mask needs at least as many keys");
  const std::size_t dh = d / heads;
  const T scl = T(1) / std::sqrt(T(dh));
  const std::size_t offset = m - n;

  Tensor<T> out({n, d});
  std::vector<T> probs(heads * n * m, T(0));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      T* p = probs.data() + (h * n + i) * m;
      const std::size_t limit = causal ? std::min(m, i + offset + 1) : m;
      const T* qi = qv.ptr() + i * d + c0;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        if (!key_valid.empty() && !key_valid[j]) continue;
        const T* kj = kv.ptr() + j * d + c0;
        T s = 0;
        for (std::size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
        s *= scl;
        p[j] = s;
        mx = std::max(mx, s);
      }
      if (mx == -std::numeric_limits<T>::infinity()) continue;  // nothing visible
      T z = 0;
      for (std::size_t j = 0; j < limit; ++j) {
        if (!key_valid.empty() && !key_valid[j]) continue;
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      T* oi = out.ptr() + i * d + c0;
      for (std::size_t j = 0; j < limit; ++j) {
        if (!key_valid.empty() && !key_valid[j]) continue;
        p[j] /= z;
        const T* vj = vv.ptr() + j * d + c0;
        const T pj = p[j];
        for (std::size_t e = 0; e < dh; ++e) oi[e] += pj * vj[e];
      }
    }
  }

  const auto iq = q.id, ik = k.id, iv = v.id;
  return q.graph->record(
      std::move(out), {iq, ik, iv},
      [iq, ik, iv, n, m, d, dh, heads, scl, probs = std::move(probs)](Graph<T>& g,
                                                                     std::uint32_t self) {
        const auto& dy = g.grad(self);
        const auto& qv = g.value(iq);
        const auto& kv = g.value(ik);
        const auto& vv = g.value(iv);
        const bool gq = g.requires_grad(iq), gk = g.requires_grad(ik), gv = g.requires_grad(iv);
        T* dq = gq ? g.grad_accumulator(iq).ptr() : nullptr;
        T* dk = gk ? g.grad_accumulator(ik).ptr() : nullptr;
        T* dv = gv ? g.grad_accumulator(iv).ptr() : nullptr;
        std::vector<T> dp(m);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dh;
          for (std::size_t i = 0; i < n; ++i) {
            const T* p = probs.data() + (h * n + i) * m;
            const T* dyi = dy.ptr() + i * d + c0;
            T dot = 0;
            for (std::size_t j = 0; j < m; ++j) {
              if (p[j] == T(0)) {
                dp[j] = 0;
                continue;
              }
              const T* vj = vv.ptr() + j * d + c0;
              T s = 0;
              for (std::size_t e = 0; e < dh; ++e) s += dyi[e] * vj[e];
              dp[j] = s;
              dot += p[j] * s;
              if (dv) {
                T* dvj = dv + j * d + c0;
                for (std::size_t e = 0; e < dh; ++e) dvj[e] += p[j] * dyi[e];
              }
            }
            const T* qi = qv.ptr() + i * d + c0;
            for (std::size_t j = 0; j < m; ++j) {
              if (p[j] == T(0)) continue;
              const T ds = p[j] * (dp[j] - dot) * scl;
              const T* kj = kv.ptr() + j * d + c0;
              if (dq) {
                T* dqi = dq + i * d + c0;
                for (std::size_t e = 0; e < dh; ++e) dqi[e] += ds * kj[e];
              }
              if (dk) {
                T* dkj = dk + j * d + c0;
                for (std::size_t e = 0; e < dh; ++e) dkj[e] += ds * qi[e];
              }
            }
          }
        }
      });
}

#define WGEN_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add<T>(Var<T>, Var<T>);                                                    \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                                \
  template Var<T> scale<T>(Var<T>, T);                                                       \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                    \
  template Var<T> sum<T>(Var<T>);                                                            \
  template Var<T> weighted_sum<T>(std::span<const Var<T>>, std::span<const T>);              \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                 \
  template Var<T> linear<T>(Var<T>, Var<T>, std::optional<Var<T>>);                          \
  template Var<T> gelu<T>(Var<T>);                                                           \
  template Var<T> exp<T>(Var<T>);                                                            \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                  \
  template Var<T> log_softmax_rows<T>(Var<T>);                                               \
  template Var<T> embedding<T>(Var<T>, std::span<const std::int32_t>);                       \
  template Var<T> cross_entropy<T>(Var<T>, std::int32_t);                                    \
  template Var<T> select_log_softmax<T>(Var<T>, std::span<const std::size_t>,                \
                                        std::span<const std::int32_t>, ColumnMask, T);       \
  template Var<T> attention<T>(Var<T>, Var<T>, Var<T>, std::size_t, bool,                    \
                               std::span<const std::uint8_t>);

WGEN_INSTANTIATE_OPS(float)
WGEN_INSTANTIATE_OPS(double)

#undef WGEN_INSTANTIATE_OPS

}  // namespace wgen
