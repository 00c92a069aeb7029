#include "wgen/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wgen/decoding.hpp"
#include "wgen/error.hpp"

namespace wgen {

namespace {

void check_limits(std::size_t vocab_size, std::size_t max_k, const EnumerationLimits& limits) {
  const std::size_t symbols = vocab_size - kNumSpecials;
  if (limits.allow_large) return;
  if (symbols > limits.max_symbols || max_k > limits.max_k)
    throw CostError("enumerating " + std::to_string(symbols) + " symbols up to length " +
                    std::to_string(max_k) + " exceeds the limit of " +
                    std::to_string(limits.max_symbols) + " symbols / length " +
                    std::to_string(limits.max_k) + "; pass allow_large to force it");
}

}  // namespace

std::vector<Tokens> enumerate_warmups(std::size_t vocab_size, std::size_t max_k,
                                      const EnumerationLimits& limits) {
  if (vocab_size <= kNumSpecials) throw ContractError("vocabulary has no symbols");
  check_limits(vocab_size, max_k, limits);
  const auto symbols = static_cast<Token>(vocab_size - kNumSpecials);
  std::vector<Tokens> out{{}};
  std::size_t level_begin = 0;
  for (std::size_t len = 1; len <= max_k; ++len) {
    const std::size_t level_end = out.size();
    for (std::size_t i = level_begin; i < level_end; ++i)
      for (Token s = 0; s < symbols; ++s) {
        Tokens next = out[i];
        next.push_back(kFirstSymbol + s);
        out.push_back(std::move(next));
      }
    level_begin = level_end;
  }
  return out;
}

Tokens ensure_eos(std::span<const Token> target) {
  Tokens y(target.begin(), target.end());
  if (y.empty() || y.back() != kEos) y.push_back(kEos);
  return y;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

template <class T>
double reward(const Parameters<T>& params, const ModelConfig& config,
              std::span<const Token> source, std::span<const Token> warmup,
              std::span<const Token> target) {
  const auto y = ensure_eos(target);
  const double nll = static_cast<double>(
      conditional_target_nll(params, config, source, attach_separator(warmup), y));
  return std::exp(-nll);
}

template double reward<float>(const Parameters<float>&, const ModelConfig&,
                              std::span<const Token>, std::span<const Token>,
                              std::span<const Token>);
template double reward<double>(const Parameters<double>&, const ModelConfig&,
                               std::span<const Token>, std::span<const Token>,
                               std::span<const Token>);

WarmupTable enumerate_table(const Parameters<double>& params, const ModelConfig& config,
                            std::span<const Token> source, std::span<const Token> target,
                            std::size_t max_k, const EnumerationLimits& limits) {
  WarmupTable table;
  table.warmups = enumerate_warmups(config.vocab_size, max_k, limits);
  const auto y = ensure_eos(target);
  Graph<double> graph(false);
  Forward<double> fwd(graph, params, config);
  std::optional<Memory<double>> mem;
  if (config.arch == Arch::EncoderDecoder) mem = fwd.encode(source);
  for (const auto& c : table.warmups) {
    auto terms = fwd.warmup_terms(mem ? &*mem : nullptr, source, c, max_k, y);
    table.log_prob.push_back(terms.warmup_log_prob.value().item());
    table.target_nll.push_back(terms.target_nll.value().item());
  }
  return table;
}

ExpectationReport enumerate_expectation(const Parameters<double>& params,
                                        const ModelConfig& config, std::span<const Token> source,
                                        std::span<const Token> target, std::size_t max_k,
                                        const EnumerationLimits& limits) {
  const auto table = enumerate_table(params, config, source, target, max_k, limits);
  ExpectationReport r;
  r.warmups = table.warmups.size();
  std::vector<double> joint(r.warmups);
  for (std::size_t i = 0; i < r.warmups; ++i) {
    const double p = std::exp(table.log_prob[i]);
    r.mass += p;
    r.exact_expected_nll += p * table.target_nll[i];
    joint[i] = table.log_prob[i] - table.target_nll[i];
  }
  const double log_expected = log_sum_exp(joint);
  r.neg_log_expected_prob = -log_expected;
  r.exact_expected_prob = std::exp(log_expected);
  r.jensen_gap = r.exact_expected_nll - r.neg_log_expected_prob;
  return r;
}

std::vector<Tensor<double>> exact_expected_nll_gradient(const Parameters<double>& params,
                                                        const ModelConfig& config,
                                                        std::span<const Token> source,
                                                        std::span<const Token> target,
                                                        std::size_t max_k,
                                                        const EnumerationLimits& limits) {
  const auto warmups = enumerate_warmups(config.vocab_size, max_k, limits);
  const auto y = ensure_eos(target);
  Graph<double> graph;
  Forward<double> fwd(graph, params, config);
  std::optional<Memory<double>> mem;
  if (config.arch == Arch::EncoderDecoder) mem = fwd.encode(source);
  std::vector<Var<double>> terms;
  for (const auto& c : warmups) {
    auto t = fwd.warmup_terms(mem ? &*mem : nullptr, source, c, max_k, y);
    terms.push_back(mul(exp(t.warmup_log_prob), t.target_nll));
  }
  const std::vector<double> ones(terms.size(), 1.0);
  auto root = weighted_sum<double>(terms, ones);
  graph.backward(root);
  std::vector<Tensor<double>> grads;
  const auto& bound = fwd.bound();
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (i < bound.size() && bound[i]) grads.push_back(bound[i]->grad());
    else grads.emplace_back(params.tensors[i].shape());
  }
  return grads;
}

}  // namespace wgen
