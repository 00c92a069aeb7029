#include "wgen/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "wgen/error.hpp"
#include "wgen/rng.hpp"

namespace wgen {

std::string_view train_mode_name(TrainMode m) {
  return m == TrainMode::Warmup ? "warmup" : "baseline-sft";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "warmup") return TrainMode::Warmup;
  if (name == "baseline-sft" || name == "baseline") return TrainMode::BaselineSft;
  throw ConfigError("unknown training mode '" + std::string(name) + "'");
}

std::string_view grad_mode_name(GradMode m) {
  return m == GradMode::Pathwise ? "pathwise" : "score-function";
}

GradMode parse_grad_mode(std::string_view name) {
  if (name == "pathwise") return GradMode::Pathwise;
  if (name == "score-function") return GradMode::ScoreFunction;
  throw ConfigError("unknown gradient mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (threads == 0) throw ConfigError("threads must be at least 1");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip_norm must be positive or none");
  if (mode == TrainMode::Warmup) sampler.validate();
  MetricReport probe;
  probe.macro_f1 = probe.accuracy = 0.0;
  probe.get(selection_metric);  // throws on an unknown name
}

namespace {

template <class T>
std::optional<Memory<T>> encode_if_needed(Forward<T>& fwd, std::span<const Token> source) {
  if (fwd.config().arch == Arch::EncoderDecoder) return fwd.encode(source);
  return std::nullopt;
}

}  // namespace

template <class T>
ExampleLoss<T> warmup_example_loss(Forward<T>& fwd, const Parameters<T>& params,
                                   const Example& example, const SamplerConfig& sampler,
                                   GradMode grad_mode) {
  sampler.validate();
  const Tokens& x = example.source;
  const Tokens y = with_eos(example.target);
  auto mem = encode_if_needed(fwd, x);
  const Memory<T>* mp = mem ? &*mem : nullptr;

  ExampleLoss<T> out;
  out.warmups = sample_warmups(params, fwd.config(), x, sampler, mp ? &mp->states.value() : nullptr);
  const std::size_t n = out.warmups.size();

  // Identical warmups give identical terms, so each distinct one is scored once
  // and weighted by its multiplicity.
  std::vector<Tokens> distinct;
  std::vector<std::size_t> counts;
  for (const auto& s : out.warmups) {
    auto it = std::find(distinct.begin(), distinct.end(), s.tokens);
    if (it == distinct.end()) {
      distinct.push_back(s.tokens);
      counts.push_back(1);
    } else {
      ++counts[static_cast<std::size_t>(it - distinct.begin())];
    }
  }

  std::vector<Var<T>> terms;
  std::vector<T> weights;
  std::vector<Var<T>> log_probs;
  std::vector<double> nll;
  for (std::size_t g = 0; g < distinct.size(); ++g) {
    const double w = static_cast<double>(counts[g]) / static_cast<double>(n);
    if (grad_mode == GradMode::ScoreFunction) {
      auto t = fwd.warmup_terms(mp, x, distinct[g], sampler.max_warmup_len, y);
      terms.push_back(t.target_nll);
      log_probs.push_back(t.warmup_log_prob);
    } else {
      terms.push_back(fwd.target_nll(mp, x, attach_separator(distinct[g]), y));
    }
    weights.push_back(static_cast<T>(w));
    nll.push_back(static_cast<double>(terms.back().value().item()));
    out.loss += w * nll.back();
  }

  if (grad_mode == GradMode::ScoreFunction) {
    // Leave-one-out baseline: ℓ_i − mean of the other n−1 losses equals
    // n/(n−1)·(ℓ_i − mean), so the 1/n-scaled term becomes (ℓ_i − mean)/(n−1).
    // With a single sample there is nothing to leave out and the baseline is 0.
    for (std::size_t g = 0; g < distinct.size(); ++g) {
      const double c = static_cast<double>(counts[g]);
      const double coef = n == 1 ? nll[g] : c * (nll[g] - out.loss) / static_cast<double>(n - 1);
      terms.push_back(log_probs[g]);
      weights.push_back(static_cast<T>(coef));
    }
  }
  out.objective = weighted_sum<T>(terms, weights);
  return out;
}

template <class T>
ExampleLoss<T> baseline_sft_loss(Forward<T>& fwd, const Example& example) {
  const Tokens y = with_eos(example.target);
  auto mem = encode_if_needed(fwd, example.source);
  const Token sep[] = {kSep};
  auto nll = fwd.target_nll(mem ? &*mem : nullptr, example.source, sep, y);
  ExampleLoss<T> out;
  const Var<T> terms[] = {nll};
  const T weights[] = {T(1)};
  out.objective = weighted_sum<T>(terms, weights);
  out.loss = static_cast<double>(nll.value().item());
  return out;
}

template <class T>
double warmup_example_loss(const Parameters<T>& params, const ModelConfig& config,
                           const Example& example, const SamplerConfig& sampler,
                           GradMode grad_mode) {
  Graph<T> g(false);
  Forward<T> f(g, params, config);
  return warmup_example_loss(f, params, example, sampler, grad_mode).loss;
}

template <class T>
double baseline_sft_loss(const Parameters<T>& params, const ModelConfig& config,
                         const Example& example) {
  Graph<T> g(false);
  Forward<T> f(g, params, config);
  return baseline_sft_loss(f, example).loss;
}

template <class T>
double example_gradient(const Parameters<T>& params, const ModelConfig& config,
                        const Example& example, TrainMode mode, const SamplerConfig& sampler,
                        GradMode grad_mode, std::vector<Tensor<T>>& grads, Rng* dropout_rng) {
  Graph<T> g;
  Forward<T> f(g, params, config, dropout_rng);
  auto r = mode == TrainMode::Warmup ? warmup_example_loss(f, params, example, sampler, grad_mode)
                                     : baseline_sft_loss(f, example);
  if (!std::isfinite(r.loss)) return r.loss;
  g.backward(r.objective);
  if (grads.size() != params.tensors.size()) {
    grads.clear();
    for (const auto& t : params.tensors) grads.emplace_back(t.shape());
  }
  const auto& bound = f.bound();
  for (std::size_t i = 0; i < bound.size(); ++i) {
    if (!bound[i]) continue;
    const auto src = bound[i]->grad().data();
    auto dst = grads[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  return r.loss;
}

#define WGEN_INSTANTIATE_TRAINING(T)                                                          \
  template ExampleLoss<T> warmup_example_loss<T>(Forward<T>&, const Parameters<T>&,           \
                                                 const Example&, const SamplerConfig&, GradMode); \
  template ExampleLoss<T> baseline_sft_loss<T>(Forward<T>&, const Example&);                  \
  template double warmup_example_loss<T>(const Parameters<T>&, const ModelConfig&,            \
                                         const Example&, const SamplerConfig&, GradMode);     \
  template double baseline_sft_loss<T>(const Parameters<T>&, const ModelConfig&,              \
                                       const Example&);                                       \
  template double example_gradient<T>(const Parameters<T>&, const ModelConfig&,               \
                                      const Example&, TrainMode, const SamplerConfig&,        \
                                      GradMode, std::vector<Tensor<T>>&, Rng*);

WGEN_INSTANTIATE_TRAINING(float)
WGEN_INSTANTIATE_TRAINING(double)

#undef WGEN_INSTANTIATE_TRAINING

std::size_t select_checkpoint(std::span<const EpochRecord> records) {
  if (records.empty()) throw ContractError("select_checkpoint needs at least one record");
  const EpochRecord* best = &records.front();
  for (const auto& r : records)
    if (r.valid_metric > best->valid_metric ||
        (r.valid_metric == best->valid_metric && r.epoch < best->epoch))
      best = &r;
  return best->epoch;
}

InferenceOptions validation_options(const TrainConfig& config) {
  InferenceOptions opts;
  opts.max_warmup_len = config.mode == TrainMode::Warmup ? config.sampler.max_warmup_len : 0;
  opts.sample_warmup = false;
  return opts;
}

namespace {

struct BatchItem {
  std::size_t index;  // position in the training split
  std::vector<Tensor<float>> grads;
  double loss = 0.0;
};

void run_item(const Parameters<float>& params, const ModelConfig& model, const TrainConfig& cfg,
              const Example& ex, std::size_t epoch, BatchItem& item) {
  SamplerConfig s = cfg.sampler;
  s.seed = Rng::derive(cfg.seed, {Rng::label("warmup"), epoch, item.index});
  std::optional<Rng> drop;
  if (model.dropout_rate > 0.0)
    drop.emplace(Rng::derive(cfg.seed, {Rng::label("dropout"), epoch, item.index}));
  item.loss = example_gradient(params, model, ex, cfg.mode, s, cfg.grad_mode, item.grads,
                               drop ? &*drop : nullptr);
}

}  // namespace

RunResult train_loop(const TrainConfig& config, const ModelConfig& model, const Dataset& data,
                     TaskKind kind, const TrainHooks& hooks) {
  config.validate();
  model.validate();
  if (data.train.empty() && config.epochs > 0) throw ContractError("training split is empty");
  if (data.valid.empty() && config.epochs > 0) throw ContractError("validation split is empty");
  const std::size_t K = config.mode == TrainMode::Warmup ? config.sampler.max_warmup_len : 0;
  for (const auto* split : {&data.train, &data.valid, &data.test})
    for (const auto& ex : *split) {
      check_example_fits(ex, model.max_seq_len, K);
      for (auto t : ex.source)
        if (static_cast<std::size_t>(t) >= model.vocab_size)
          throw ContractError("example token outside the model vocabulary");
      for (auto t : ex.target)
        if (static_cast<std::size_t>(t) >= model.vocab_size)
          throw ContractError("example token outside the model vocabulary");
    }

  RunResult result;
  Parameters<float> params = init_model<float>(model, Rng::derive(config.seed, {Rng::label("init")}));
  result.checkpoints.push_back(params);
  if (hooks.on_checkpoint) hooks.on_checkpoint(0, params);

  AdamState<float> adam;
  AdamHyper hyper;
  hyper.lr = config.learning_rate;
  std::vector<Tensor<float>*> param_ptrs;
  for (auto& t : params.tensors) param_ptrs.push_back(&t);

  std::vector<Example> valid(data.valid.begin(), data.valid.end());
  if (config.valid_limit && valid.size() > config.valid_limit) valid.resize(config.valid_limit);
  const auto vopts = validation_options(config);

  const std::size_t N = data.train.size();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(Rng::derive(config.seed, {Rng::label("shuffle"), epoch}));
    for (std::size_t i = N; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::vector<Tensor<float>> total;
    for (const auto& t : params.tensors) total.emplace_back(t.shape());
    std::vector<BatchItem> items;
    for (std::size_t start = 0, batch = 0; start < N; start += config.batch_size, ++batch) {
      const std::size_t end = std::min(N, start + config.batch_size);
      items.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        auto& it = items[i - start];
        it.index = order[i];
        for (auto& g : it.grads) g.fill(0.0f);
      }
      if (config.threads <= 1 || items.size() == 1) {
        for (auto& it : items) run_item(params, model, config, data.train[it.index], epoch, it);
      } else {
        std::vector<std::thread> pool;
        const std::size_t workers = std::min(config.threads, items.size());
        for (std::size_t w = 0; w < workers; ++w)
          pool.emplace_back([&, w] {
            for (std::size_t i = w; i < items.size(); i += workers)
              run_item(params, model, config, data.train[items[i].index], epoch, items[i]);
          });
        for (auto& th : pool) th.join();
      }
      // Fixed-order reduction keeps results independent of the thread count.
      for (auto& t : total) t.fill(0.0f);
      for (const auto& it : items) {
        if (!std::isfinite(it.loss))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch) + ", example " + std::to_string(it.index));
        loss_sum += it.loss;
        for (std::size_t p = 0; p < total.size(); ++p) {
          auto dst = total[p].data();
          const auto src = it.grads[p].data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      const float inv = 1.0f / static_cast<float>(items.size());
      for (auto& t : total)
        for (auto& v : t.data()) v *= inv;
      if (config.clip_norm) clip_global_norm<float>(total, *config.clip_norm);
      adam_step<float>(param_ptrs, total, adam, hyper);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = N ? loss_sum / static_cast<double>(N) : 0.0;
    rec.valid_metric = evaluate(params, model, valid, kind, vopts).get(config.selection_metric);
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(rec);
    result.checkpoints.push_back(params);
    if (hooks.on_checkpoint) hooks.on_checkpoint(epoch, params);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }

  result.best_epoch = result.epochs.empty() ? 0 : select_checkpoint(result.epochs);
  if (!data.test.empty())
    result.test_metrics = evaluate(result.best(), model, data.test, kind, vopts);
  return result;
}

}  // namespace wgen
