#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wgen/autodiff.hpp"
#include "wgen/rng.hpp"
#include "wgen/tensor.hpp"
#include "wgen/vocab.hpp"

namespace wgen {

enum class Arch { EncoderDecoder, DecoderOnly };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);

struct ModelConfig {
  Arch arch = Arch::EncoderDecoder;
  std::size_t vocab_size = 16;
  std::size_t d_model = 32;
  std::size_t n_heads = 2;
  std::size_t n_layers_encoder = 2;
  std::size_t n_layers_decoder = 2;
  std::size_t d_ff = 64;
  std::size_t max_seq_len = 32;
  double dropout_rate = 0.0;

  void validate() const;
  // key=value lines, the block stored in checkpoints.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Indices into Parameters for every named array, derived from a config.
struct ParamLayout {
  struct Norm {
    std::size_t gain, bias;
  };
  struct Attn {
    std::size_t wq, wk, wv, wo;
  };
  struct Ffn {
    std::size_t w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Norm ln_attn;
    Attn attn;
    Norm ln_ffn;
    Ffn ffn;
  };
  struct DecoderLayer {
    Norm ln_self;
    Attn self;
    std::optional<Norm> ln_cross;
    std::optional<Attn> cross;
    Norm ln_ffn;
    Ffn ffn;
  };

  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::size_t tok_emb = 0;
  std::optional<std::size_t> enc_pos;
  std::vector<EncoderLayer> encoder;
  std::optional<Norm> enc_final;
  std::size_t dec_pos = 0;
  std::size_t dec_seg = 0;
  std::vector<DecoderLayer> decoder;
  Norm dec_final{};
  std::size_t out_w = 0, out_b = 0;

  explicit ParamLayout(const ModelConfig& config);
};

// Named trainable arrays, in layout order.
template <class T>
struct Parameters {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  std::size_t index(std::string_view name) const;
  Tensor<T>& at(std::string_view name) { return tensors[index(name)]; }
  const Tensor<T>& at(std::string_view name) const { return tensors[index(name)]; }
  std::size_t scalar_count() const;

  template <class U>
  Parameters<U> cast() const {
    Parameters<U> out;
    out.names = names;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

// Xavier-uniform matrices, zero biases, unit layer-norm gains. Deterministic
// in (config, seed).
template <class T>
Parameters<T> init_model(const ModelConfig& config, std::uint64_t seed);

// Checks names and shapes against the layout for `config`.
template <class T>
void check_parameters(const ModelConfig& config, const Parameters<T>& params);

// Allowed next tokens while generating a warmup or a target: EOS and the
// symbols. PAD, BOS and SEP are never generated.
std::vector<std::uint8_t> generation_support(std::size_t vocab_size);

// Encoder output plus the key mask that hides PAD source positions.
template <class T>
struct Memory {
  Var<T> states;
  std::vector<std::uint8_t> valid;
};

// Both loss terms needed for one sampled warmup, read off a single decoder
// pass over the full context.
template <class T>
struct WarmupTerms {
  Var<T> target_nll;        // −log P(y | x, c, SEP)
  Var<T> warmup_log_prob;   // log P(c | x) under the generation measure
};

// Runs the transformer on a Graph. Parameters are bound to the graph as
// leaves the first time they are used, so arrays that do not influence the
// output keep a zero gradient.
template <class T>
class Forward {
 public:
  Forward(Graph<T>& graph, const Parameters<T>& params, const ModelConfig& config,
          Rng* dropout_rng = nullptr);

  Graph<T>& graph() { return graph_; }
  const ModelConfig& config() const { return config_; }

  Memory<T> encode(std::span<const Token> source);
  // Wraps an already computed encoder output (no gradient flows into it).
  Memory<T> reuse_memory(const Tensor<T>& states, std::span<const Token> source);

  // Logits for every position of the decoder context. For decoder-only models
  // the context starts with the raw source and `source_len` marks where it
  // ends; for encoder-decoder models `memory` must be given and source_len is
  // ignored.
  Var<T> logits(const Memory<T>* memory, std::span<const Token> context,
                std::size_t source_len = 0);

  // Target NLL given the warmup with its separator; loss positions cover only
  // the target tokens (which must end with EOS).
  Var<T> target_nll(const Memory<T>* memory, std::span<const Token> source,
                    std::span<const Token> warmup_with_sep, std::span<const Token> target);

  // Target NLL and warmup log-probability from one decoder pass.
  WarmupTerms<T> warmup_terms(const Memory<T>* memory, std::span<const Token> source,
                              std::span<const Token> warmup, std::size_t max_warmup_len,
                              std::span<const Token> target);

  // log P(c | x) on its own.
  Var<T> warmup_log_prob(const Memory<T>* memory, std::span<const Token> source,
                         std::span<const Token> warmup, std::size_t max_warmup_len);

  // Parameter i as a graph var (bound on first use).
  Var<T> param(std::size_t index);
  // Uses an existing var for parameter i instead of a fresh leaf.
  void bind(std::size_t index, Var<T> var);
  // Leaf vars that were bound, with their parameter indices.
  const std::vector<std::optional<Var<T>>>& bound() const { return bound_; }

 private:
  Var<T> block_norm(Var<T> x, const ParamLayout::Norm& n);
  Var<T> self_attention(Var<T> x, const ParamLayout::Attn& a, bool causal,
                        std::span<const std::uint8_t> valid);
  Var<T> cross_attention(Var<T> x, const Memory<T>& memory, const ParamLayout::Attn& a);
  Var<T> feed_forward(Var<T> x, const ParamLayout::Ffn& f);
  Var<T> dropout(Var<T> x);
  void check_tokens(std::span<const Token> tokens) const;

  Graph<T>& graph_;
  const Parameters<T>& params_;
  const ModelConfig& config_;
  ParamLayout layout_;
  Rng* dropout_rng_;
  std::vector<std::optional<Var<T>>> bound_;
};

extern template class Forward<float>;
extern template class Forward<double>;

// Decoder context for scoring: [BOS, c…, SEP, y<T] (encoder-decoder) or
// [x, c…, SEP, y<T] (decoder-only). `target` ends with EOS.
Tokens scoring_context(Arch arch, std::span<const Token> source,
                       std::span<const Token> warmup_with_sep, std::span<const Token> target);
// Decoder context while generating the warmup: [BOS, c…] or [x, c…].
Tokens warmup_context(Arch arch, std::span<const Token> source, std::span<const Token> warmup);

// Value-level conveniences; each evaluates on a private non-recording graph.
template <class T>
Tensor<T> encode(const Parameters<T>& params, const ModelConfig& config,
                 std::span<const Token> source);

template <class T>
Tensor<T> next_token_logits(const Parameters<T>& params, const ModelConfig& config,
                            const Tensor<T>* memory, std::span<const Token> memory_source,
                            std::span<const Token> context, std::size_t source_len = 0);

template <class T>
T conditional_target_nll(const Parameters<T>& params, const ModelConfig& config,
                         std::span<const Token> source, std::span<const Token> warmup_with_sep,
                         std::span<const Token> target);

template <class T>
T sequence_log_prob(const Parameters<T>& params, const ModelConfig& config,
                    std::span<const Token> source, std::span<const Token> warmup,
                    std::size_t max_warmup_len);

// Appends EOS.
Tokens with_eos(std::span<const Token> target);

}  // namespace wgen
