#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wgen/model.hpp"

namespace wgen {

struct ExpectationReport {
  double exact_expected_prob = 0.0;    // E_c[P(y | c, x)]
  double exact_expected_nll = 0.0;     // E_c[−log P(y | c, x)]
  double neg_log_expected_prob = 0.0;  // −log E_c[P(y | c, x)]
  double jensen_gap = 0.0;             // exact_expected_nll − neg_log_expected_prob
  double mass = 0.0;                   // Σ_c P(c | x), should be 1
  std::size_t warmups = 0;             // number of warmups enumerated
};

// Enumeration is exponential in the warmup length. Past these bounds the
// caller has to opt in.
struct EnumerationLimits {
  std::size_t max_symbols = 8;
  std::size_t max_k = 3;
  bool allow_large = false;
};

// Every symbol sequence of length 0..max_k, shorter ones first, each length
// in lexicographic order.
std::vector<Tokens> enumerate_warmups(std::size_t vocab_size, std::size_t max_k,
                                      const EnumerationLimits& limits = {});

// Targets given to the oracle may or may not carry the trailing EOS; it is
// added when missing.
Tokens ensure_eos(std::span<const Token> target);

// R(c) = P(y | x, c, SEP), evaluated as exp of the negated log-space NLL.
template <class T>
double reward(const Parameters<T>& params, const ModelConfig& config,
              std::span<const Token> source, std::span<const Token> warmup,
              std::span<const Token> target);

// Exhaustive expectation over warmups of length ≤ max_k, in 64-bit log space.
ExpectationReport enumerate_expectation(const Parameters<double>& params,
                                        const ModelConfig& config, std::span<const Token> source,
                                        std::span<const Token> target, std::size_t max_k,
                                        const EnumerationLimits& limits = {});

// Per-warmup pieces of the enumeration, in enumerate_warmups order.
struct WarmupTable {
  std::vector<Tokens> warmups;
  std::vector<double> log_prob;    // log P(c | x)
  std::vector<double> target_nll;  // −log P(y | x, c, SEP)
};

WarmupTable enumerate_table(const Parameters<double>& params, const ModelConfig& config,
                            std::span<const Token> source, std::span<const Token> target,
                            std::size_t max_k, const EnumerationLimits& limits = {});

// ∇θ E_c[−log P(y | c, x)], by autodiff through the enumerated sum
// Σ_c exp(log P(c|x))·(−log P(y|c,x)). One tensor per parameter array.
std::vector<Tensor<double>> exact_expected_nll_gradient(const Parameters<double>& params,
                                                        const ModelConfig& config,
                                                        std::span<const Token> source,
                                                        std::span<const Token> target,
                                                        std::size_t max_k,
                                                        const EnumerationLimits& limits = {});

// log Σ exp(v), max-shifted. A single element comes back unchanged.
double log_sum_exp(std::span<const double> values);

}  // namespace wgen
