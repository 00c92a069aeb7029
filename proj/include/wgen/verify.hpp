#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wgen/model.hpp"
#include "wgen/rng.hpp"

namespace wgen {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Small random model for the verification suites. `symbols` is the number of
// non-reserved tokens.
ModelConfig random_tiny_config(Rng& rng, std::size_t symbols, std::size_t max_d_model = 16);
// Fresh parameters with uniform noise of the given half-width added to every
// entry, so output distributions are far from uniform.
Parameters<double> random_params(const ModelConfig& config, Rng& rng, double noise = 0.5);
Tokens random_symbols(Rng& rng, std::size_t vocab_size, std::size_t min_len, std::size_t max_len);

struct GradSuiteReport {
  std::size_t configs = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::vector<double> per_config;
  std::vector<std::string> descriptions;
  std::vector<std::string> worst;  // parameter coordinate with the largest error, per config
  double max_abs_error = 0.0;
  // Coordinates whose relative error exceeds 1e-6, and the largest gradient
  // magnitude among them.
  std::size_t over_tolerance = 0;
  double largest_gradient_over_tolerance = 0.0;
  // ‖a − n‖ / max(‖a‖, ‖n‖) over all coordinates of a config, worst config.
  double max_norm_rel_error = 0.0;
};

// Finite-difference check of target NLL plus warmup log-probability on
// random tiny models (1-2 layers, d_model ≤ 16, vocab ≤ 10), every parameter
// coordinate, 64-bit.
GradSuiteReport run_gradcheck_suite(std::size_t configs, std::uint64_t seed,
                                    double step = 1e-5);

// Σ_c P(c|x) = 1 within 1e-9 for random models with ≤ 5 symbols and K ≤ 3.
PropertyResult check_warmup_mass(std::size_t models, std::uint64_t seed);

// E[−log P(y|c,x)] ≥ −log E[P(y|c,x)] − 1e-9, and a gap of exactly 0 at K = 0.
PropertyResult check_jensen(std::size_t trials, std::uint64_t seed);

// Sampled single-warmup losses against the enumerated expectation, and
// sampled warmup frequencies against exp(log P(c|x)), 3 standard errors.
PropertyResult check_monte_carlo(std::size_t instances, std::size_t draws, std::uint64_t seed);

// Score-function gradient estimate (n = 4, leave-one-out baseline) averaged
// over `draws` against the exact gradient of the enumerated expectation, on
// a fixed set of coordinates, 3 standard errors each.
PropertyResult check_score_function(std::size_t draws, std::uint64_t seed);

// Warmup loss at K = 0 against the baseline loss, 64-bit, per example.
PropertyResult check_k0_losses(std::size_t examples, std::uint64_t seed);

// Inference outputs carry exactly one separator, extract_target succeeds on
// them, and a sampled warmup's log-probability is the same with or without
// the separator appended.
PropertyResult check_separator_protocol(const Parameters<float>& params, const ModelConfig& config,
                                        std::size_t generations, std::size_t max_warmup_len,
                                        std::uint64_t seed);

}  // namespace wgen
