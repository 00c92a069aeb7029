#include "wgen/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wgen {

template <class T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state, const AdamHyper& hyper) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params but " +
                     std::to_string(grads.size()) + " gradients");
  if (state.first_moment.empty() && state.step == 0) {
    for (auto* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ShapeError("adam_step: optimizer state tracks a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() ||
        params[i]->shape() != state.first_moment[i].shape() ||
        params[i]->shape() != state.second_moment[i].shape())
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double mhat = static_cast<double>(m[j]) / c1;
      const double vhat = static_cast<double>(v[j]) / c2;
      p[j] -= static_cast<T>(hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

template <class T>
double clip_global_norm(std::span<Tensor<T>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (auto x : g.data()) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (auto& x : g.data()) x *= f;
  }
  return norm;
}

template void adam_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>>,
                               AdamState<float>&, const AdamHyper&);
template void adam_step<double>(std::span<Tensor<double>* const>,
                                std::span<const Tensor<double>>, AdamState<double>&,
                                const AdamHyper&);
template double clip_global_norm<float>(std::span<Tensor<float>>, double);
template double clip_global_norm<double>(std::span<Tensor<double>>, double);

GradCheckReport grad_check(const GradCheckFn& fn, std::span<Tensor<double>* const> leaves,
                           double step) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (auto* t : leaves) vars.push_back(g.leaf(*t));
    auto root = fn(g, vars);
    if (!std::isfinite(root.value().item()))
      throw NumericError("grad_check: non-finite function value");
    g.backward(root);
    for (auto& v : vars) analytic.push_back(v.grad());
  }

  auto evaluate = [&]() {
    Graph<double> g(false);
    std::vector<Var<double>> vars;
    for (auto* t : leaves) vars.push_back(g.leaf(*t));
    const double y = fn(g, vars).value().item();
    if (!std::isfinite(y)) throw NumericError("grad_check: non-finite function value");
    return y;
  };

  GradCheckReport report;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto data = leaves[l]->data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = evaluate();
      data[i] = saved - step;
      const double down = evaluate();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[l][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      report.analytic.push_back(a);
      report.numeric.push_back(numeric);
      report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
      if (rel > report.max_rel_error || report.coordinates == 0) {
        report.max_rel_error = rel;
        report.worst_leaf = l;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      ++report.coordinates;
    }
  }
  return report;
}

}  // namespace wgen
