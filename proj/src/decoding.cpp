#include "wgen/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "wgen/error.hpp"
#include "wgen/rng.hpp"

namespace wgen {

void SamplerConfig::validate() const {
  if (n_samples == 0) throw ConfigError("n_samples must be at least 1");
  if (beam_size == 0) throw ConfigError("beam_size must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

namespace {

// Evaluates last-row logits for successive decoder contexts of one source on
// a single non-recording graph, with the encoder run at most once.
template <class T>
class StepScorer {
 public:
  StepScorer(const Parameters<T>& params, const ModelConfig& config,
             std::span<const Token> source, const Tensor<T>* memory)
      : graph_(false), fwd_(graph_, params, config), source_(source) {
    if (config.arch == Arch::EncoderDecoder) {
      memory_ = memory ? fwd_.reuse_memory(*memory, source) : fwd_.encode(source);
    }
  }

  std::span<const T> last_row(std::span<const Token> context) {
    auto lg = fwd_.logits(memory_ ? &*memory_ : nullptr, context, source_.size());
    const auto& v = lg.value();
    return v.row(v.rows() - 1);
  }

 private:
  Graph<T> graph_;
  Forward<T> fwd_;
  std::span<const Token> source_;
  std::optional<Memory<T>> memory_;
};

// log softmax over the allowed columns, computed the same way as the recorded
// select_log_softmax op so both paths agree.
template <class T>
std::vector<T> masked_log_softmax(std::span<const T> logits, std::span<const std::uint8_t> allowed,
                                  double temperature = 1.0) {
  const std::size_t v = logits.size();
  std::vector<T> x(logits.begin(), logits.end());
  if (temperature != 1.0)
    for (auto& e : x) e = static_cast<T>(static_cast<double>(e) / temperature);
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < v; ++j)
    if (allowed[j]) mx = std::max(mx, x[j]);
  T s = 0;
  for (std::size_t j = 0; j < v; ++j)
    if (allowed[j]) s += std::exp(x[j] - mx);
  const T lse = mx + std::log(s);
  std::vector<T> out(v, -std::numeric_limits<T>::infinity());
  for (std::size_t j = 0; j < v; ++j)
    if (allowed[j]) out[j] = x[j] - lse;
  return out;
}

struct Beam {
  Tokens tokens;
  double score = 0.0;  // cumulative tempered log-probability
  double log_prob = 0.0;
};

}  // namespace

template <class T>
std::vector<WarmupSample> sample_warmups(const Parameters<T>& params, const ModelConfig& config,
                                         std::span<const Token> source, const SamplerConfig& cfg,
                                         const Tensor<T>* memory) {
  cfg.validate();
  const std::size_t K = cfg.max_warmup_len;
  std::vector<Beam> retired;
  if (K == 0) {
    retired.push_back({});
  } else {
    StepScorer<T> scorer(params, config, source, memory);
    const auto support = generation_support(config.vocab_size);
    std::vector<Token> support_ids;
    for (std::size_t j = 0; j < support.size(); ++j)
      if (support[j]) support_ids.push_back(static_cast<Token>(j));
    const std::size_t draws = std::min(cfg.beam_size, support_ids.size());
    Rng rng(Rng::derive(cfg.seed, {Rng::label("beam")}));

    struct Candidate {
      std::size_t parent;
      Token token;
      double score;
      double log_prob;
    };
    std::vector<Beam> live(1);
    for (std::size_t step = 0; step < K && !live.empty(); ++step) {
      std::vector<Candidate> candidates;
      for (std::size_t b = 0; b < live.size(); ++b) {
        const auto ctx = warmup_context(config.arch, source, live[b].tokens);
        const auto row = scorer.last_row(ctx);
        const auto lp = masked_log_softmax<T>(row, support);
        const auto lpt = cfg.temperature == 1.0 ? lp
                                                : masked_log_softmax<T>(row, support, cfg.temperature);
        // Gumbel-top-k: the top `draws` perturbed keys are a sample without
        // replacement from the tempered distribution.
        std::vector<std::pair<double, Token>> keys;
        keys.reserve(support_ids.size());
        for (auto tok : support_ids)
          keys.emplace_back(static_cast<double>(lpt[tok]) + rng.gumbel(), tok);
        std::stable_sort(keys.begin(), keys.end(),
                         [](const auto& a, const auto& c) { return a.first > c.first; });
        for (std::size_t i = 0; i < draws; ++i) {
          const Token tok = keys[i].second;
          candidates.push_back({b, tok, live[b].score + static_cast<double>(lpt[tok]),
                                static_cast<double>(static_cast<T>(live[b].log_prob) + lp[tok])});
        }
      }
      std::stable_sort(candidates.begin(), candidates.end(),
                       [](const Candidate& a, const Candidate& c) { return a.score > c.score; });
      if (candidates.size() > cfg.beam_size) candidates.resize(cfg.beam_size);
      std::vector<Beam> next;
      for (const auto& cand : candidates) {
        Beam beam = live[cand.parent];
        beam.score = cand.score;
        beam.log_prob = cand.log_prob;
        if (cand.token == kEos) {
          retired.push_back(std::move(beam));
          continue;
        }
        beam.tokens.push_back(cand.token);
        if (beam.tokens.size() == K) retired.push_back(std::move(beam));
        else next.push_back(std::move(beam));
      }
      live = std::move(next);
    }
  }

  // Proportional draws with replacement from the retired beams.
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& b : retired) top = std::max(top, b.score);
  std::vector<double> cumulative(retired.size());
  double total = 0.0;
  for (std::size_t i = 0; i < retired.size(); ++i) {
    total += std::exp(retired[i].score - top);
    cumulative[i] = total;
  }
  std::vector<WarmupSample> out;
  out.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    Rng draw(Rng::derive(cfg.seed, {Rng::label("draw"), i}));
    const double u = draw.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t pick = std::min<std::size_t>(it - cumulative.begin(), retired.size() - 1);
    out.push_back({retired[pick].tokens, retired[pick].log_prob});
  }
  return out;
}

Tokens attach_separator(std::span<const Token> warmup) {
  if (std::find(warmup.begin(), warmup.end(), kSep) != warmup.end())
    throw ContractError("warmup already contains a separator");
  Tokens out(warmup.begin(), warmup.end());
  out.push_back(kSep);
  return out;
}

Tokens extract_target(std::span<const Token> full) {
  auto sep = std::find(full.begin(), full.end(), kSep);
  if (sep == full.end()) throw ExtractionError("no separator in generated sequence");
  auto end = std::find(sep + 1, full.end(), kEos);
  return Tokens(sep + 1, end);
}

namespace {

template <class T>
GreedyResult greedy_with(StepScorer<T>& scorer, const ModelConfig& config,
                         std::span<const Token> context, std::size_t max_len) {
  GreedyResult out;
  Tokens ctx(context.begin(), context.end());
  const auto support = generation_support(config.vocab_size);
  while (out.tokens.size() < max_len && ctx.size() <= config.max_seq_len) {
    const auto row = scorer.last_row(ctx);
    Token best = -1;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!support[j]) continue;
      if (best < 0 || row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<Token>(j);
    }
    if (best == kEos) {
      out.stopped_on_eos = true;
      break;
    }
    out.tokens.push_back(best);
    ctx.push_back(best);
  }
  return out;
}

}  // namespace

template <class T>
GreedyResult greedy_decode(const Parameters<T>& params, const ModelConfig& config,
                           std::span<const Token> source, std::span<const Token> context,
                           std::size_t max_len, const Tensor<T>* memory) {
  if (max_len == 0) return {};
  StepScorer<T> scorer(params, config, source, memory);
  return greedy_with(scorer, config, context, max_len);
}

template <class T>
GenerationOutput inference_generate(const Parameters<T>& params, const ModelConfig& config,
                                    std::span<const Token> source, const InferenceOptions& opts) {
  StepScorer<T> scorer(params, config, source, nullptr);
  GenerationOutput out;
  if (opts.sample_warmup) {
    SamplerConfig s = opts.sampler;
    s.n_samples = 1;
    s.max_warmup_len = opts.max_warmup_len;
    out.warmup = sample_warmups(params, config, source, s).front().tokens;
  } else if (opts.max_warmup_len > 0) {
    const auto ctx = warmup_context(config.arch, source, {});
    out.warmup = greedy_with(scorer, config, ctx, opts.max_warmup_len).tokens;
  }
  out.full = warmup_context(config.arch, source, attach_separator(out.warmup));
  const std::size_t room = config.max_seq_len > out.full.size() ? config.max_seq_len - out.full.size() : 0;
  const std::size_t max_len = opts.max_target_len ? std::min(opts.max_target_len, room + 1) : room + 1;
  auto result = greedy_with(scorer, config, out.full, max_len);
  out.target = result.tokens;
  out.full.insert(out.full.end(), result.tokens.begin(), result.tokens.end());
  if (result.stopped_on_eos) out.full.push_back(kEos);
  return out;
}

#define WGEN_INSTANTIATE_DECODING(T)                                                         \
  template std::vector<WarmupSample> sample_warmups<T>(const Parameters<T>&,                 \
                                                       const ModelConfig&,                   \
                                                       std::span<const Token>,               \
                                                       const SamplerConfig&, const Tensor<T>*); \
  template GreedyResult greedy_decode<T>(const Parameters<T>&, const ModelConfig&,           \
                                         std::span<const Token>, std::span<const Token>,     \
                                         std::size_t, const Tensor<T>*);                     \
  template GenerationOutput inference_generate<T>(const Parameters<T>&, const ModelConfig&,  \
                                                  std::span<const Token>,                    \
                                                  const InferenceOptions&);

WGEN_INSTANTIATE_DECODING(float)
WGEN_INSTANTIATE_DECODING(double)

#undef WGEN_INSTANTIATE_DECODING

}  // namespace wgen
