#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wgen/model.hpp"

namespace wgen {

struct SamplerConfig {
  std::size_t n_samples = 4;
  std::size_t beam_size = 4;
  std::size_t max_warmup_len = 8;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct WarmupSample {
  Tokens tokens;
  double log_prob = 0.0;  // log P(c | x) at temperature 1

  friend bool operator==(const WarmupSample&, const WarmupSample&) = default;
};

struct GenerationOutput {
  Tokens warmup;
  Tokens target;
  Tokens full;  // decoder context + SEP + target as emitted (EOS included if emitted)
};

// Stochastic beam search over warmups. Each live beam draws beam_size distinct
// continuations without replacement from the temperature-scaled distribution
// over EOS and the symbols; the best beam_size partial sequences by cumulative
// score survive; beams retire on EOS or at max_warmup_len. The n returned
// samples are then drawn with replacement from the retired set in proportion
// to exp(score). Duplicates are kept.
//
// `memory`, when given, is the encoder output for `source` and is reused.
template <class T>
std::vector<WarmupSample> sample_warmups(const Parameters<T>& params, const ModelConfig& config,
                                         std::span<const Token> source, const SamplerConfig& cfg,
                                         const Tensor<T>* memory = nullptr);

// c ++ [SEP]. The separator has no sampling probability attached.
Tokens attach_separator(std::span<const Token> warmup);

// Tokens strictly after the first SEP, cut at the first EOS.
Tokens extract_target(std::span<const Token> full);

struct GreedyResult {
  Tokens tokens;  // EOS stripped
  bool stopped_on_eos = false;
};

// Appends the argmax token (over EOS and symbols) until EOS or max_len
// tokens have been emitted, or the context reaches max_seq_len.
template <class T>
GreedyResult greedy_decode(const Parameters<T>& params, const ModelConfig& config,
                           std::span<const Token> source, std::span<const Token> context,
                           std::size_t max_len, const Tensor<T>* memory = nullptr);

struct InferenceOptions {
  std::size_t max_warmup_len = 8;
  bool sample_warmup = false;  // greedy warmup unless set
  SamplerConfig sampler;       // used when sample_warmup is set
  std::size_t max_target_len = 0;  // 0: whatever room max_seq_len leaves
};

// Phase 1 produces a warmup, the separator is attached, phase 2 greedily
// decodes the target conditioned on source, warmup and separator.
template <class T>
GenerationOutput inference_generate(const Parameters<T>& params, const ModelConfig& config,
                                    std::span<const Token> source, const InferenceOptions& opts);

}  // namespace wgen
