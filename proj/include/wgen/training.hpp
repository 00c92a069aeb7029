#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wgen/decoding.hpp"
#include "wgen/metrics.hpp"
#include "wgen/model.hpp"
#include "wgen/optim.hpp"
#include "wgen/tasks.hpp"

namespace wgen {

enum class TrainMode { Warmup, BaselineSft };
enum class GradMode { Pathwise, ScoreFunction };

std::string_view train_mode_name(TrainMode m);
TrainMode parse_train_mode(std::string_view name);
std::string_view grad_mode_name(GradMode m);
GradMode parse_grad_mode(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::Warmup;
  GradMode grad_mode = GradMode::Pathwise;
  double learning_rate = 3e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  SamplerConfig sampler;  // sampler.seed is ignored; streams derive from `seed`
  std::optional<double> clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::string selection_metric = "exact_match";
  std::size_t threads = 1;
  // Validation examples used per epoch; 0 means the whole split.
  std::size_t valid_limit = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_metric = 0.0;
  double seconds = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 is the initial checkpoint
  std::vector<Parameters<float>> checkpoints;  // index = epoch
  std::optional<MetricReport> test_metrics;

  const Parameters<float>& best() const { return checkpoints.at(best_epoch); }
};

// One example's objective on a recording graph. `objective` is what gets
// differentiated; `loss` is the reported value L = (1/n) Σ ℓ_i.
template <class T>
struct ExampleLoss {
  Var<T> objective;
  double loss = 0.0;
  std::vector<WarmupSample> warmups;
};

// Samples n warmups (no gradient through the sampler) and averages the target
// NLL over them. Score-function mode adds Σ_i (ℓ_i − b_i) log P(c_i | x) / n
// with the leave-one-out mean b_i as a constant baseline.
template <class T>
ExampleLoss<T> warmup_example_loss(Forward<T>& fwd, const Parameters<T>& params,
                                   const Example& example, const SamplerConfig& sampler,
                                   GradMode grad_mode);

// NLL of y with the decoder context of an empty warmup.
template <class T>
ExampleLoss<T> baseline_sft_loss(Forward<T>& fwd, const Example& example);

// Value-only wrappers.
template <class T>
double warmup_example_loss(const Parameters<T>& params, const ModelConfig& config,
                           const Example& example, const SamplerConfig& sampler,
                           GradMode grad_mode);
template <class T>
double baseline_sft_loss(const Parameters<T>& params, const ModelConfig& config,
                         const Example& example);

// Objective value and gradient of one example in the given mode, with the
// sampling stream fixed by `sampler.seed`. Gradients are one tensor per
// parameter array.
template <class T>
double example_gradient(const Parameters<T>& params, const ModelConfig& config,
                        const Example& example, TrainMode mode, const SamplerConfig& sampler,
                        GradMode grad_mode, std::vector<Tensor<T>>& grads,
                        Rng* dropout_rng = nullptr);

// Argmax of valid_metric over the records, earliest epoch on ties. Returns
// the epoch number.
std::size_t select_checkpoint(std::span<const EpochRecord> records);

struct TrainHooks {
  // Called after each epoch, epoch 0 (the initial parameters) included.
  std::function<void(std::size_t epoch, const Parameters<float>&)> on_checkpoint;
  std::function<void(const EpochRecord&)> on_epoch;
};

InferenceOptions validation_options(const TrainConfig& config);

RunResult train_loop(const TrainConfig& config, const ModelConfig& model, const Dataset& data,
                     TaskKind kind, const TrainHooks& hooks = {});

}  // namespace wgen
