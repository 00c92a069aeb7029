#include "wgen/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "wgen/error.hpp"

namespace wgen {

std::string_view arch_name(Arch arch) {
  return arch == Arch::EncoderDecoder ? "encoder-decoder" : "decoder-only";
}

Arch parse_arch(std::string_view name) {
  if (name == "encoder-decoder") return Arch::EncoderDecoder;
  if (name == "decoder-only") return Arch::DecoderOnly;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (vocab_size <= kNumSpecials) throw ConfigError("vocab_size must exceed the 4 reserved ids");
  if (d_model == 0 || n_heads == 0) throw ConfigError("d_model and n_heads must be positive");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (arch == Arch::DecoderOnly && n_layers_encoder != 0)
    throw ConfigError("decoder-only models have no encoder layers");
  if (n_layers_decoder == 0) throw ConfigError("n_layers_decoder must be positive");
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout_rate must lie in [0, 1)");
}

namespace {
std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("model config key '" + key + "': expected a non-negative integer, got '" +
                      value + "'");
  return out;
}
}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "arch=" << arch_name(arch) << '\n'
     << "vocab_size=" << vocab_size << '\n'
     << "d_model=" << d_model << '\n'
     << "n_heads=" << n_heads << '\n'
     << "n_layers_encoder=" << n_layers_encoder << '\n'
     << "n_layers_decoder=" << n_layers_decoder << '\n'
     << "d_ff=" << d_ff << '\n'
     << "max_seq_len=" << max_seq_len << '\n'
     << "dropout_rate=" << format_double(dropout_rate) << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream is{std::string(text)};
  std::string line;
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model config line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const auto& [k, v] : kv) {
    if (k == "arch") c.arch = parse_arch(v);
    else if (k == "vocab_size") c.vocab_size = parse_size(k, v);
    else if (k == "d_model") c.d_model = parse_size(k, v);
    else if (k == "n_heads") c.n_heads = parse_size(k, v);
    else if (k == "n_layers_encoder") c.n_layers_encoder = parse_size(k, v);
    else if (k == "n_layers_decoder") c.n_layers_decoder = parse_size(k, v);
    else if (k == "d_ff") c.d_ff = parse_size(k, v);
    else if (k == "max_seq_len") c.max_seq_len = parse_size(k, v);
    else if (k == "dropout_rate") {
      double d = 0;
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
      if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("model config key 'dropout_rate': bad number '" + v + "'");
      c.dropout_rate = d;
    } else {
      throw ConfigError("unknown model config key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Layout and parameters
// ---------------------------------------------------------------------------

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  auto add = [this](std::string name, Shape shape) {
    names.push_back(std::move(name));
    shapes.push_back(std::move(shape));
    return names.size() - 1;
  };
  auto norm = [&](const std::string& prefix) {
    Norm n;
    n.gain = add(prefix + ".g", {d});
    n.bias = add(prefix + ".b", {d});
    return n;
  };
  auto attn = [&](const std::string& prefix) {
    Attn a;
    a.wq = add(prefix + ".wq", {d, d});
    a.wk = add(prefix + ".wk", {d, d});
    a.wv = add(prefix + ".wv", {d, d});
    a.wo = add(prefix + ".wo", {d, d});
    return a;
  };
  auto ffn = [&](const std::string& prefix) {
    Ffn f;
    f.w1 = add(prefix + ".w1", {d, c.d_ff});
    f.b1 = add(prefix + ".b1", {c.d_ff});
    f.w2 = add(prefix + ".w2", {c.d_ff, d});
    f.b2 = add(prefix + ".b2", {d});
    return f;
  };

  tok_emb = add("tok_emb", {c.vocab_size, d});
  const bool encdec = c.arch == Arch::EncoderDecoder;
  if (encdec) {
    enc_pos = add("enc.pos_emb", {c.max_seq_len, d});
    for (std::size_t l = 0; l < c.n_layers_encoder; ++l) {
      const std::string p = "enc." + std::to_string(l);
      EncoderLayer layer;
      layer.ln_attn = norm(p + ".ln_attn");
      layer.attn = attn(p + ".attn");
      layer.ln_ffn = norm(p + ".ln_ffn");
      layer.ffn = ffn(p + ".ffn");
      encoder.push_back(layer);
    }
    enc_final = norm("enc.ln_final");
  }
  dec_pos = add("dec.pos_emb", {c.max_seq_len, d});
  dec_seg = add("dec.seg_emb", {encdec ? std::size_t{2} : std::size_t{3}, d});
  for (std::size_t l = 0; l < c.n_layers_decoder; ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecoderLayer layer;
    layer.ln_self = norm(p + ".ln_self");
    layer.self = attn(p + ".self");
    if (encdec) {
      layer.ln_cross = norm(p + ".ln_cross");
      layer.cross = attn(p + ".cross");
    }
    layer.ln_ffn = norm(p + ".ln_ffn");
    layer.ffn = ffn(p + ".ffn");
    decoder.push_back(layer);
  }
  dec_final = norm("dec.ln_final");
  out_w = add("out.w", {d, c.vocab_size});
  out_b = add("out.b", {c.vocab_size});
}

template <class T>
std::size_t Parameters<T>::index(std::string_view name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw IndexError("no parameter named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names.begin());
}

template <class T>
std::size_t Parameters<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template struct Parameters<float>;
template struct Parameters<double>;

template <class T>
Parameters<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  ParamLayout layout(config);
  Parameters<T> p;
  p.names = layout.names;
  for (std::size_t i = 0; i < layout.names.size(); ++i) {
    const auto& name = layout.names[i];
    const auto& shape = layout.shapes[i];
    Tensor<T> t(shape);
    const bool is_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    if (shape.size() == 2) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      Rng rng(Rng::derive(seed, {Rng::label("init"), Rng::label(name)}));
      for (auto& x : t.data()) x = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
    } else if (is_gain) {
      t.fill(T(1));
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

template Parameters<float> init_model<float>(const ModelConfig&, std::uint64_t);
template Parameters<double> init_model<double>(const ModelConfig&, std::uint64_t);

template <class T>
void check_parameters(const ModelConfig& config, const Parameters<T>& params) {
  ParamLayout layout(config);
  if (params.names != layout.names || params.tensors.size() != layout.shapes.size())
    throw ContractError("parameter names do not match the model configuration");
  for (std::size_t i = 0; i < layout.shapes.size(); ++i)
    if (params.tensors[i].shape() != layout.shapes[i])
      throw ShapeError("parameter '" + layout.names[i] + "' has shape " +
                       shape_string(params.tensors[i].shape()) + ", expected " +
                       shape_string(layout.shapes[i]));
}

template void check_parameters<float>(const ModelConfig&, const Parameters<float>&);
template void check_parameters<double>(const ModelConfig&, const Parameters<double>&);

std::vector<std::uint8_t> generation_support(std::size_t vocab_size) {
  std::vector<std::uint8_t> mask(vocab_size, 1);
  mask[kPad] = 0;
  mask[kBos] = 0;
  mask[kSep] = 0;
  return mask;
}

Tokens with_eos(std::span<const Token> target) {
  Tokens out(target.begin(), target.end());
  out.push_back(kEos);
  return out;
}

Tokens scoring_context(Arch arch, std::span<const Token> source,
                       std::span<const Token> warmup_with_sep, std::span<const Token> target) {
  Tokens ctx;
  if (arch == Arch::EncoderDecoder) ctx.push_back(kBos);
  else ctx.assign(source.begin(), source.end());
  ctx.insert(ctx.end(), warmup_with_sep.begin(), warmup_with_sep.end());
  if (!target.empty()) ctx.insert(ctx.end(), target.begin(), target.end() - 1);
  return ctx;
}

Tokens warmup_context(Arch arch, std::span<const Token> source, std::span<const Token> warmup) {
  Tokens ctx;
  if (arch == Arch::EncoderDecoder) ctx.push_back(kBos);
  else ctx.assign(source.begin(), source.end());
  ctx.insert(ctx.end(), warmup.begin(), warmup.end());
  return ctx;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {
constexpr double kLayerNormEps = 1e-5;

void check_warmup_with_sep(std::span<const Token> c) {
  if (c.empty() || c.back() != kSep)
    throw ContractError("warmup context must end with exactly one separator");
  for (std::size_t i = 0; i + 1 < c.size(); ++i)
    if (c[i] == kSep) throw ContractError("warmup context contains more than one separator");
}

void check_target(std::span<const Token> y) {
  if (y.empty() || y.back() != kEos) throw ContractError("target must end with EOS");
}

void check_warmup(std::span<const Token> c, std::size_t max_warmup_len) {
  if (c.size() > max_warmup_len)
    throw ContractError("warmup of length " + std::to_string(c.size()) +
                        " exceeds the maximum warmup length " + std::to_string(max_warmup_len));
  for (auto t : c)
    if (!is_symbol(t))
      throw ContractError("warmup contains reserved token " + std::to_string(t) +
                          " outside the sampling support");
}
}  // namespace

template <class T>
Forward<T>::Forward(Graph<T>& graph, const Parameters<T>& params, const ModelConfig& config,
                    Rng* dropout_rng)
    : graph_(graph),
      params_(params),
      config_(config),
      layout_(config),
      dropout_rng_(config.dropout_rate > 0.0 ? dropout_rng : nullptr),
      bound_(layout_.names.size()) {
  if (params.tensors.size() != layout_.names.size())
    throw ContractError("parameters were built for a different model configuration");
}

template <class T>
Var<T> Forward<T>::param(std::size_t index) {
  auto& slot = bound_.at(index);
  if (!slot) slot = graph_.leaf(params_.tensors[index]);
  return *slot;
}

template <class T>
void Forward<T>::bind(std::size_t index, Var<T> var) {
  if (var.graph != &graph_) throw ContractError("bound var lives on another graph");
  if (var.shape() != layout_.shapes.at(index))
    throw ShapeError("bind: " + layout_.names[index] + " expects " +
                     shape_string(layout_.shapes[index]) + ", got " + shape_string(var.shape()));
  bound_.at(index) = var;
}

template <class T>
void Forward<T>::check_tokens(std::span<const Token> tokens) const {
  if (tokens.size() > config_.max_seq_len)
    throw LengthError("sequence of length " + std::to_string(tokens.size()) +
                      " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  for (auto t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size)
      throw IndexError("token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(config_.vocab_size));
}

template <class T>
Var<T> Forward<T>::dropout(Var<T> x) {
  if (!dropout_rng_) return x;
  const double keep = 1.0 - config_.dropout_rate;
  Tensor<T> mask(x.shape());
  for (auto& m : mask.data())
    m = dropout_rng_->uniform() < keep ? static_cast<T>(1.0 / keep) : T(0);
  return mul(x, graph_.constant(std::move(mask)));
}

template <class T>
Var<T> Forward<T>::block_norm(Var<T> x, const ParamLayout::Norm& n) {
  return layer_norm(x, param(n.gain), param(n.bias), static_cast<T>(kLayerNormEps));
}

template <class T>
Var<T> Forward<T>::self_attention(Var<T> x, const ParamLayout::Attn& a, bool causal,
                                  std::span<const std::uint8_t> valid) {
  auto q = matmul(x, param(a.wq));
  auto k = matmul(x, param(a.wk));
  auto v = matmul(x, param(a.wv));
  auto h = attention(q, k, v, config_.n_heads, causal, valid);
  return matmul(h, param(a.wo));
}

template <class T>
Var<T> Forward<T>::cross_attention(Var<T> x, const Memory<T>& memory,
                                   const ParamLayout::Attn& a) {
  auto q = matmul(x, param(a.wq));
  auto k = matmul(memory.states, param(a.wk));
  auto v = matmul(memory.states, param(a.wv));
  auto h = attention(q, k, v, config_.n_heads, false, memory.valid);
  return matmul(h, param(a.wo));
}

template <class T>
Var<T> Forward<T>::feed_forward(Var<T> x, const ParamLayout::Ffn& f) {
  auto h = gelu(linear(x, param(f.w1), std::optional<Var<T>>(param(f.b1))));
  return linear(h, param(f.w2), std::optional<Var<T>>(param(f.b2)));
}

template <class T>
Memory<T> Forward<T>::encode(std::span<const Token> source) {
  if (config_.arch != Arch::EncoderDecoder)
    throw ArchError("encode() needs an encoder-decoder model");
  if (source.empty()) throw LengthError("cannot encode an empty source");
  check_tokens(source);
  Memory<T> mem;
  mem.valid.resize(source.size());
  std::vector<Token> pos(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    mem.valid[i] = source[i] != kPad;
    pos[i] = static_cast<Token>(i);
  }
  auto h = add(embedding(param(layout_.tok_emb), source), embedding(param(*layout_.enc_pos), pos));
  h = dropout(h);
  for (const auto& layer : layout_.encoder) {
    h = add(h, dropout(self_attention(block_norm(h, layer.ln_attn), layer.attn, false, mem.valid)));
    h = add(h, dropout(feed_forward(block_norm(h, layer.ln_ffn), layer.ffn)));
  }
  mem.states = block_norm(h, *layout_.enc_final);
  return mem;
}

template <class T>
Memory<T> Forward<T>::reuse_memory(const Tensor<T>& states, std::span<const Token> source) {
  if (states.rows() != source.size() || states.cols() != config_.d_model)
    throw ShapeError("memory shape does not match the source");
  Memory<T> mem;
  mem.states = graph_.constant(states);
  mem.valid.resize(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) mem.valid[i] = source[i] != kPad;
  return mem;
}

template <class T>
Var<T> Forward<T>::logits(const Memory<T>* memory, std::span<const Token> context,
                          std::size_t source_len) {
  const bool encdec = config_.arch == Arch::EncoderDecoder;
  if (encdec && !memory) throw ArchError("encoder-decoder decoding needs encoder memory");
  if (!encdec && memory) throw ArchError("decoder-only models take no encoder memory");
  if (context.empty()) throw LengthError("empty decoder context");
  if (!encdec && (source_len == 0 || source_len > context.size()))
    throw ContractError("decoder-only context must start with the non-empty source");
  check_tokens(context);

  // Positions restart at every segment: (BOS+warmup | SEP+target) for
  // encoder-decoder, (source | warmup | SEP+target) for decoder-only.
  const std::size_t n = context.size();
  std::vector<Token> pos(n), seg(n);
  std::vector<std::uint8_t> valid;
  Token segment = 0;
  std::size_t start = 0;
  bool seen_sep = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!encdec && segment == 0 && i == source_len) {
      segment = 1;
      start = i;
    }
    if (context[i] == kSep && !seen_sep) {
      seen_sep = true;
      segment = encdec ? 1 : 2;
      start = i;
    }
    pos[i] = static_cast<Token>(i - start);
    seg[i] = segment;
  }
  if (!encdec) {
    valid.resize(n);
    for (std::size_t i = 0; i < n; ++i) valid[i] = context[i] != kPad;
  }

  auto h = add(add(embedding(param(layout_.tok_emb), context),
                   embedding(param(layout_.dec_pos), pos)),
               embedding(param(layout_.dec_seg), seg));
  h = dropout(h);
  for (const auto& layer : layout_.decoder) {
    h = add(h, dropout(self_attention(block_norm(h, layer.ln_self), layer.self, true, valid)));
    if (layer.cross)
      h = add(h, dropout(cross_attention(block_norm(h, *layer.ln_cross), *memory, *layer.cross)));
    h = add(h, dropout(feed_forward(block_norm(h, layer.ln_ffn), layer.ffn)));
  }
  h = block_norm(h, layout_.dec_final);
  return linear(h, param(layout_.out_w), std::optional<Var<T>>(param(layout_.out_b)));
}

template <class T>
Var<T> Forward<T>::target_nll(const Memory<T>* memory, std::span<const Token> source,
                              std::span<const Token> warmup_with_sep,
                              std::span<const Token> target) {
  check_warmup_with_sep(warmup_with_sep);
  check_target(target);
  const auto ctx = scoring_context(config_.arch, source, warmup_with_sep, target);
  auto lg = logits(memory, ctx, source.size());
  const std::size_t first = (config_.arch == Arch::EncoderDecoder ? 0 : source.size() - 1) +
                            warmup_with_sep.size();
  std::vector<std::size_t> rows(target.size());
  for (std::size_t t = 0; t < target.size(); ++t) rows[t] = first + t;
  return select_log_softmax<T>(lg, rows, target, {}, T(-1));
}

template <class T>
WarmupTerms<T> Forward<T>::warmup_terms(const Memory<T>* memory, std::span<const Token> source,
                                        std::span<const Token> warmup,
                                        std::size_t max_warmup_len,
                                        std::span<const Token> target) {
  check_warmup(warmup, max_warmup_len);
  check_target(target);
  Tokens with_sep(warmup.begin(), warmup.end());
  with_sep.push_back(kSep);
  const auto ctx = scoring_context(config_.arch, source, with_sep, target);
  auto lg = logits(memory, ctx, source.size());
  const std::size_t offset = config_.arch == Arch::EncoderDecoder ? 0 : source.size() - 1;
  const std::size_t k = warmup.size();

  std::vector<std::size_t> rows(target.size());
  for (std::size_t t = 0; t < target.size(); ++t) rows[t] = offset + k + 1 + t;
  WarmupTerms<T> out;
  out.target_nll = select_log_softmax<T>(lg, rows, target, {}, T(-1));

  std::vector<std::size_t> wrows;
  Tokens wtargets(warmup.begin(), warmup.end());
  for (std::size_t t = 0; t < k; ++t) wrows.push_back(offset + t);
  if (k < max_warmup_len) {
    wrows.push_back(offset + k);
    wtargets.push_back(kEos);
  }
  if (wrows.empty()) {
    out.warmup_log_prob = graph_.constant(Tensor<T>::scalar(T(0)));
  } else {
    const auto support = generation_support(config_.vocab_size);
    out.warmup_log_prob = select_log_softmax<T>(lg, wrows, wtargets, support, T(1));
  }
  return out;
}

template <class T>
Var<T> Forward<T>::warmup_log_prob(const Memory<T>* memory, std::span<const Token> source,
                                   std::span<const Token> warmup, std::size_t max_warmup_len) {
  check_warmup(warmup, max_warmup_len);
  const std::size_t k = warmup.size();
  if (k == max_warmup_len && k == 0) return graph_.constant(Tensor<T>::scalar(T(0)));
  const auto ctx = warmup_context(config_.arch, source, warmup);
  auto lg = logits(memory, ctx, source.size());
  const std::size_t offset = config_.arch == Arch::EncoderDecoder ? 0 : source.size() - 1;
  std::vector<std::size_t> rows;
  Tokens targets(warmup.begin(), warmup.end());
  for (std::size_t t = 0; t < k; ++t) rows.push_back(offset + t);
  if (k < max_warmup_len) {
    rows.push_back(offset + k);
    targets.push_back(kEos);
  }
  const auto support = generation_support(config_.vocab_size);
  return select_log_softmax<T>(lg, rows, targets, support, T(1));
}

template class Forward<float>;
template class Forward<double>;

// ---------------------------------------------------------------------------
// Value-level wrappers
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> encode(const Parameters<T>& params, const ModelConfig& config,
                 std::span<const Token> source) {
  Graph<T> g(false);
  Forward<T> f(g, params, config);
  return f.encode(source).states.value();
}

template <class T>
Tensor<T> next_token_logits(const Parameters<T>& params, const ModelConfig& config,
                            const Tensor<T>* memory, std::span<const Token> memory_source,
                            std::span<const Token> context, std::size_t source_len) {
  Graph<T> g(false);
  Forward<T> f(g, params, config);
  if (memory) {
    auto mem = f.reuse_memory(*memory, memory_source);
    return f.logits(&mem, context, source_len).value();
  }
  return f.logits(nullptr, context, source_len).value();
}

template <class T>
T conditional_target_nll(const Parameters<T>& params, const ModelConfig& config,
                         std::span<const Token> source, std::span<const Token> warmup_with_sep,
                         std::span<const Token> target) {
  Graph<T> g(false);
  Forward<T> f(g, params, config);
  if (config.arch == Arch::EncoderDecoder) {
    auto mem = f.encode(source);
    return f.target_nll(&mem, source, warmup_with_sep, target).value().item();
  }
  return f.target_nll(nullptr, source, warmup_with_sep, target).value().item();
}

template <class T>
T sequence_log_prob(const Parameters<T>& params, const ModelConfig& config,
                    std::span<const Token> source, std::span<const Token> warmup,
                    std::size_t max_warmup_len) {
  Graph<T> g(false);
  Forward<T> f(g, params, config);
  if (config.arch == Arch::EncoderDecoder) {
    auto mem = f.encode(source);
    return f.warmup_log_prob(&mem, source, warmup, max_warmup_len).value().item();
  }
  return f.warmup_log_prob(nullptr, source, warmup, max_warmup_len).value().item();
}

#define WGEN_INSTANTIATE_MODEL(T)                                                            \
  template Tensor<T> encode<T>(const Parameters<T>&, const ModelConfig&,                     \
                               std::span<const Token>);                                      \
  template Tensor<T> next_token_logits<T>(const Parameters<T>&, const ModelConfig&,          \
                                          const Tensor<T>*, std::span<const Token>,          \
                                          std::span<const Token>, std::size_t);              \
  template T conditional_target_nll<T>(const Parameters<T>&, const ModelConfig&,             \
                                       std::span<const Token>, std::span<const Token>,       \
                                       std::span<const Token>);                              \
  template T sequence_log_prob<T>(const Parameters<T>&, const ModelConfig&,                  \
                                  std::span<const Token>, std::span<const Token>,            \
                                  std::size_t);

WGEN_INSTANTIATE_MODEL(float)
WGEN_INSTANTIATE_MODEL(double)

#undef WGEN_INSTANTIATE_MODEL

}  // namespace wgen
