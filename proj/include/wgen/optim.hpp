#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wgen/autodiff.hpp"
#include "wgen/tensor.hpp"

namespace wgen {

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update, in place. Moments are zero-initialized on
// the first call; thereafter their shapes must match the parameters.
template <class T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state, const AdamHyper& hyper);

// Rescales grads so their joint L2 norm is at most max_norm. Returns the norm
// before clipping.
template <class T>
double clip_global_norm(std::span<Tensor<T>> grads, double max_norm);

// Builds the scalar under test on the given graph from leaf vars bound to the
// supplied tensors.
using GradCheckFn = std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Where the worst error occurred.
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double max_abs_error = 0.0;
  // Every compared pair, leaves in order.
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Compares reverse-mode gradients with central differences, elementwise.
// Relative error uses max(|a|, |b|, 1e-8) as the denominator. The leaves are
// perturbed in place and restored.
GradCheckReport grad_check(const GradCheckFn& fn, std::span<Tensor<double>* const> leaves,
                           double step = 1e-5);

}  // namespace wgen
