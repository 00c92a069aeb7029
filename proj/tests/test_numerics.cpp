#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "wgen/autodiff.hpp"
#include "wgen/error.hpp"
#include "wgen/optim.hpp"
#include "wgen/rng.hpp"
#include "wgen/tensor.hpp"

using namespace wgen;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data()) v = scale * (2.0 * rng.uniform() - 1.0);
  return t;
}

// Gradient check of a unary op applied to one random leaf, reduced with a
// random weighting so every output coordinate matters.
template <class Op>
double check_unary(Shape shape, Op op, std::uint64_t seed = 3) {
  auto x = random_tensor(shape, seed);
  Tensor<double>* leaves[] = {&x};
  GradCheckFn fn = [&](Graph<double>& g, std::span<const Var<double>> v) {
    auto y = op(v[0]);
    auto w = g.constant(random_tensor(y.shape(), seed + 100));
    return sum(mul(y, w));
  };
  return grad_check(fn, leaves).max_rel_error;
}

}  // namespace

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor<double>(Shape{}), ShapeError);
  EXPECT_THROW(Tensor<double>(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor<double>(Shape{2, 2, 2}), ShapeError);
  EXPECT_THROW(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Matmul, IdentityAndAnnihilator) {
  Graph<double> g;
  auto eye = g.constant(Tensor<double>::matrix(2, 2, {1, 0, 0, 1}));
  auto m = g.constant(Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
  auto z = g.constant(Tensor<double>({2, 2}));
  // Copy out: values live in the tape, which grows with every op.
  const Tensor<double> left = matmul(eye, m).value();
  const Tensor<double> zero = matmul(m, z).value();
  EXPECT_EQ(left, m.value());
  EXPECT_EQ(zero, z.value());
}

TEST(Matmul, MatchesNaiveTripleLoop) {
  Graph<double> g;
  auto a = random_tensor({3, 4}, 1), b = random_tensor({4, 2}, 2);
  auto c = matmul(g.constant(a), g.constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = 0;
      for (std::size_t k = 0; k < 4; ++k) ref += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), ref, 1e-12);
    }
}

TEST(Matmul, DimensionMismatchIsShapeError) {
  Graph<double> g;
  auto a = g.constant(Tensor<double>({2, 3})), b = g.constant(Tensor<double>({2, 2}));
  EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(LogSoftmax, Rows) {
  Graph<double> g;
  auto x = g.constant(Tensor<double>::matrix(3, 3, {0, 0, 0, 1000, 0, -5, 1, 2, 3}));
  auto y = log_softmax_rows(x).value();
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(y(0, j), -std::log(3.0));
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_TRUE(std::isfinite(y(r, j)));
      s += std::exp(y(r, j));
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const double lse = 3 + std::log(std::exp(-2.0) + std::exp(-1.0) + 1.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y(2, j), static_cast<double>(j + 1) - lse, 1e-12);
}

TEST(LogSoftmax, FloatRowsSumToOne) {
  Graph<float> g;
  Tensor<float> t({4, 7});
  Rng rng(5);
  for (auto& v : t.data()) v = static_cast<float>(20.0 * rng.uniform() - 10.0);
  auto y = log_softmax_rows(g.constant(t)).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (auto v : y.row(r)) s += std::exp(static_cast<double>(v));
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(LayerNorm, HandCases) {
  Graph<double> g;
  auto ones = g.constant(Tensor<double>({2}, 1.0));
  auto zeros = g.constant(Tensor<double>({2}, 0.0));
  auto konst = g.constant(Tensor<double>::matrix(1, 2, {5, 5}));
  auto y0 = layer_norm(konst, ones, zeros, 1e-5).value();
  EXPECT_DOUBLE_EQ(y0[0], 0.0);
  EXPECT_DOUBLE_EQ(y0[1], 0.0);

  auto bias = g.constant(Tensor<double>({2}, std::vector<double>{0.25, -3}));
  auto x = g.constant(Tensor<double>::matrix(1, 2, {1, 3}));
  auto y1 = layer_norm(x, zeros, bias, 1e-5).value();
  EXPECT_DOUBLE_EQ(y1[0], 0.25);
  EXPECT_DOUBLE_EQ(y1[1], -3.0);

  auto y2 = layer_norm(x, ones, zeros, 1e-14).value();
  EXPECT_NEAR(y2[0], -1.0, 1e-12);
  EXPECT_NEAR(y2[1], 1.0, 1e-12);
}

TEST(CrossEntropy, Values) {
  Graph<double> g;
  auto confident = g.constant(Tensor<double>({3}, std::vector<double>{0, 800, 0}));
  EXPECT_NEAR(cross_entropy(confident, 1).value().item(), 0.0, 1e-300);
  auto uniform = g.constant(Tensor<double>({5}, 0.7));
  EXPECT_NEAR(cross_entropy(uniform, 3).value().item(), std::log(5.0), 1e-12);
  auto l = g.constant(Tensor<double>({3}, std::vector<double>{1, 2, 3}));
  const double ref = -(1.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  EXPECT_NEAR(cross_entropy(l, 0).value().item(), ref, 1e-12);
  EXPECT_GE(cross_entropy(l, 2).value().item(), 0.0);
  EXPECT_THROW(cross_entropy(l, 3), IndexError);
  EXPECT_THROW(cross_entropy(l, -1), IndexError);
}

TEST(Backward, SumGivesOnes) {
  auto x = random_tensor({2, 3}, 4);
  Graph<double> g;
  auto v = g.leaf(x);
  g.backward(sum(v));
  for (auto d : v.grad().data()) EXPECT_EQ(d, 1.0);
}

TEST(Backward, UnreachableLeafHasZeroGradient) {
  auto x = random_tensor({3}, 4), w = random_tensor({3}, 5);
  Graph<double> g;
  auto vx = g.leaf(x);
  auto vw = g.leaf(w);
  g.backward(sum(mul(vx, vx)));
  for (auto d : vw.grad().data()) EXPECT_EQ(d, 0.0);
}

TEST(Backward, NonScalarRootIsContractError) {
  auto x = random_tensor({3}, 4);
  Graph<double> g;
  auto v = g.leaf(x);
  EXPECT_THROW(g.backward(scale(v, 2.0)), ContractError);
  Graph<double> other;
  auto s = sum(other.leaf(x));
  EXPECT_THROW(g.backward(s), ContractError);
}

TEST(Backward, VisitsEachNodeOnce) {
  auto x = random_tensor({2, 2}, 6);
  Graph<double> g;
  auto v = g.leaf(x);
  auto a = mul(v, v);       // node 1
  auto b = add(a, v);       // node 2
  auto c = add(b, a);       // node 3
  g.backward(sum(c));       // node 4
  EXPECT_EQ(g.visited(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(v.grad()[i], 4.0 * x[i] + 1.0, 1e-15);
}

TEST(Backward, CrossEntropyOfMatmulMatchesFiniteDifferences) {
  auto x = random_tensor({1, 4}, 7), w = random_tensor({4, 5}, 8);
  Tensor<double>* leaves[] = {&x, &w};
  GradCheckFn fn = [](Graph<double>&, std::span<const Var<double>> v) {
    return cross_entropy(matmul(v[0], v[1]), 2);
  };
  EXPECT_LE(grad_check(fn, leaves).max_rel_error, 1e-6);
}

TEST(GradCheck, LinearAndConstantFunctions) {
  auto x = random_tensor({3, 2}, 9);
  Tensor<double>* leaves[] = {&x};
  GradCheckFn linear_fn = [](Graph<double>& g, std::span<const Var<double>> v) {
    return sum(mul(v[0], g.constant(Tensor<double>::matrix(3, 2, {1, -2, 3, 0.5, 4, -1}))));
  };
  EXPECT_LE(grad_check(linear_fn, leaves).max_rel_error, 1e-10);
  GradCheckFn constant_fn = [](Graph<double>& g, std::span<const Var<double>>) {
    return g.constant(Tensor<double>::scalar(3.0));
  };
  const auto r = grad_check(constant_fn, leaves);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.coordinates, 6u);
}

TEST(GradCheck, NonFiniteValueIsNumericError) {
  auto x = Tensor<double>({1}, 1e300);
  Tensor<double>* leaves[] = {&x};
  GradCheckFn fn = [](Graph<double>&, std::span<const Var<double>> v) { return sum(exp(v[0])); };
  EXPECT_THROW(grad_check(fn, leaves), NumericError);
}

TEST(GradCheck, RestoresLeaves) {
  auto x = random_tensor({4}, 10);
  const auto before = x;
  Tensor<double>* leaves[] = {&x};
  GradCheckFn fn = [](Graph<double>&, std::span<const Var<double>> v) { return sum(gelu(v[0])); };
  grad_check(fn, leaves);
  EXPECT_EQ(x, before);
}

TEST(OpGradients, Elementwise) {
  EXPECT_LE(check_unary({3, 4}, [](Var<double> x) { return gelu(x); }), 1e-6);
  EXPECT_LE(check_unary({3, 4}, [](Var<double> x) { return exp(x); }), 1e-6);
  EXPECT_LE(check_unary({3, 4}, [](Var<double> x) { return scale(x, -1.5); }), 1e-6);
  EXPECT_LE(check_unary({3, 4}, [](Var<double> x) { return mul(x, x); }), 1e-6);
  EXPECT_LE(check_unary({3, 4}, [](Var<double> x) { return add(x, x); }), 1e-6);
  EXPECT_LE(check_unary({3, 4}, [](Var<double> x) { return log_softmax_rows(x); }), 1e-6);
}

TEST(OpGradients, AddRowLinearLayerNorm) {
  auto x = random_tensor({3, 4}, 11), w = random_tensor({4, 2}, 12), b = random_tensor({2}, 13);
  auto gain = random_tensor({4}, 14), bias = random_tensor({4}, 15);
  Tensor<double>* leaves[] = {&x, &w, &b, &gain, &bias};
  GradCheckFn fn = [](Graph<double>& g, std::span<const Var<double>> v) {
    auto h = layer_norm(v[0], v[3], v[4], 1e-5);
    auto y = linear(h, v[1], std::optional<Var<double>>(v[2]));
    auto z = add_row(y, v[2]);
    return sum(mul(z, g.constant(random_tensor(z.shape(), 16))));
  };
  EXPECT_LE(grad_check(fn, leaves).max_rel_error, 1e-6);
}

TEST(OpGradients, EmbeddingAndWeightedSum) {
  auto table = random_tensor({5, 3}, 17);
  Tensor<double>* leaves[] = {&table};
  GradCheckFn fn = [](Graph<double>& g, std::span<const Var<double>> v) {
    const std::int32_t ids[] = {4, 0, 4, 2};
    auto e = embedding(v[0], ids);
    auto a = sum(mul(e, g.constant(random_tensor(e.shape(), 18))));
    auto b = sum(v[0]);
    const Var<double> terms[] = {a, b};
    const double w[] = {0.7, -0.2};
    return weighted_sum<double>(terms, w);
  };
  EXPECT_LE(grad_check(fn, leaves).max_rel_error, 1e-6);
  Graph<double> g;
  const std::int32_t bad[] = {5};
  EXPECT_THROW(embedding(g.constant(table), bad), IndexError);
}

TEST(OpGradients, SelectLogSoftmaxMasked) {
  auto x = random_tensor({3, 6}, 19, 2.0);
  Tensor<double>* leaves[] = {&x};
  const std::uint8_t allowed[] = {0, 1, 1, 0, 1, 1};
  GradCheckFn fn = [&](Graph<double>&, std::span<const Var<double>> v) {
    const std::size_t rows[] = {0, 2};
    const std::int32_t targets[] = {1, 5};
    return select_log_softmax<double>(v[0], rows, targets, allowed, -1.0);
  };
  EXPECT_LE(grad_check(fn, leaves).max_rel_error, 1e-6);

  Graph<double> g;
  const std::size_t rows[] = {0};
  const std::int32_t masked[] = {0};
  EXPECT_THROW(select_log_softmax<double>(g.constant(x), rows, masked, allowed, 1.0), ContractError);
  // Masked columns do not take probability mass.
  double total = 0;
  for (std::int32_t t : {1, 2, 4, 5}) {
    const std::int32_t tt[] = {t};
    total += std::exp(select_log_softmax<double>(g.constant(x), rows, tt, allowed, 1.0).value().item());
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(OpGradients, AttentionCausalAndMasked) {
  auto q = random_tensor({3, 4}, 20), k = random_tensor({5, 4}, 21), v = random_tensor({5, 4}, 22);
  Tensor<double>* leaves[] = {&q, &k, &v};
  const std::uint8_t valid[] = {1, 1, 0, 1, 1};
  for (bool causal : {false, true}) {
    GradCheckFn fn = [&](Graph<double>& g, std::span<const Var<double>> x) {
      auto o = attention(x[0], x[1], x[2], 2, causal, valid);
      return sum(mul(o, g.constant(random_tensor(o.shape(), 23))));
    };
    EXPECT_LE(grad_check(fn, leaves).max_rel_error, 1e-6) << "causal=" << causal;
  }
}

TEST(Attention, CausalRowsIgnoreLaterKeys) {
  auto q = random_tensor({4, 4}, 24), k = random_tensor({4, 4}, 25), v = random_tensor({4, 4}, 26);
  Graph<double> g;
  auto o1 = attention(g.constant(q), g.constant(k), g.constant(v), 2, true, {}).value();
  for (std::size_t j = 0; j < 4; ++j) {
    k(3, j) += 1.0;
    v(3, j) -= 2.0;
  }
  auto o2 = attention(g.constant(q), g.constant(k), g.constant(v), 2, true, {}).value();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(o1(r, j), o2(r, j));
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor<double> p({3}, std::vector<double>{1, -2, 3});
  const auto before = p;
  Tensor<double>* params[] = {&p};
  const Tensor<double> grads[] = {Tensor<double>({3})};
  AdamState<double> state;
  adam_step<double>(params, grads, state, {});
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMatchesHandFormula) {
  Tensor<double> p({3}, std::vector<double>{1, -2, 3});
  Tensor<double>* params[] = {&p};
  const Tensor<double> grads[] = {Tensor<double>({3}, std::vector<double>{0.5, -4, 1e-3})};
  AdamState<double> state;
  AdamHyper h;
  h.lr = 0.1;
  adam_step<double>(params, grads, state, h);
  const double g[] = {0.5, -4, 1e-3}, p0[] = {1, -2, 3};
  for (int i = 0; i < 3; ++i) {
    const double mhat = (1 - h.beta1) * g[i] / (1 - h.beta1);
    const double vhat = (1 - h.beta2) * g[i] * g[i] / (1 - h.beta2);
    EXPECT_NEAR(p[i], p0[i] - h.lr * mhat / (std::sqrt(vhat) + h.eps), 1e-12);
  }
}

TEST(Adam, DeterministicAndShapeChecked) {
  auto run = [] {
    Tensor<double> p({2, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor<double>* params[] = {&p};
    const Tensor<double> grads[] = {Tensor<double>({2, 2}, std::vector<double>{0.1, -0.2, 0.3, 0})};
    AdamState<double> state;
    for (int i = 0; i < 3; ++i) adam_step<double>(params, grads, state, {});
    return p;
  };
  EXPECT_EQ(run(), run());
  Tensor<double> p({2});
  Tensor<double>* params[] = {&p};
  const Tensor<double> grads[] = {Tensor<double>({3})};
  AdamState<double> state;
  EXPECT_THROW(adam_step<double>(params, grads, state, {}), ShapeError);
}

TEST(Clip, GlobalNorm) {
  std::vector<Tensor<double>> g = {Tensor<double>({2}, std::vector<double>{3, 0}),
                                   Tensor<double>({1}, std::vector<double>{4})};
  EXPECT_DOUBLE_EQ(clip_global_norm<double>(g, 1.0), 5.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
  EXPECT_NEAR(clip_global_norm<double>(g, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Rng a(Rng::derive(1, {2, 3})), b(Rng::derive(1, {2, 3})), c(Rng::derive(1, {3, 2}));
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_LT(r.below(7), 7u);
    const double u = r.uniform_open();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
