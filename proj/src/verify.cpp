#include "wgen/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "wgen/decoding.hpp"
#include "wgen/error.hpp"
#include "wgen/optim.hpp"
#include "wgen/oracle.hpp"
#include "wgen/training.hpp"

namespace wgen {

ModelConfig random_tiny_config(Rng& rng, std::size_t symbols, std::size_t max_d_model) {
  ModelConfig c;
  c.arch = rng.below(2) ? Arch::EncoderDecoder : Arch::DecoderOnly;
  c.vocab_size = kNumSpecials + symbols;
  c.n_heads = 1 + rng.below(2);
  std::vector<std::size_t> dims;
  for (std::size_t d = 4; d <= max_d_model; d += 4)
    if (d % c.n_heads == 0) dims.push_back(d);
  if (dims.empty()) throw ConfigError("max_d_model too small for a random config");
  c.d_model = dims[rng.below(dims.size())];
  c.n_layers_decoder = 1 + rng.below(2);
  c.n_layers_encoder = c.arch == Arch::EncoderDecoder ? 1 + rng.below(2) : 0;
  c.d_ff = 8 * (1 + rng.below(3));
  c.max_seq_len = 24;
  c.validate();
  return c;
}

Parameters<double> random_params(const ModelConfig& config, Rng& rng, double noise) {
  auto p = init_model<double>(config, rng.next());
  for (auto& t : p.tensors)
    for (auto& v : t.data()) v += noise * (2.0 * rng.uniform() - 1.0);
  return p;
}

Tokens random_symbols(Rng& rng, std::size_t vocab_size, std::size_t min_len, std::size_t max_len) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  Tokens out(len);
  for (auto& t : out) t = kFirstSymbol + static_cast<Token>(rng.below(vocab_size - kNumSpecials));
  return out;
}

namespace {

std::string describe(const ModelConfig& c) {
  std::ostringstream os;
  os << arch_name(c.arch) << " V=" << c.vocab_size << " d=" << c.d_model << " h=" << c.n_heads
     << " enc=" << c.n_layers_encoder << " dec=" << c.n_layers_decoder << " ff=" << c.d_ff;
  return os.str();
}

std::optional<Memory<double>> maybe_encode(Forward<double>& f, std::span<const Token> x) {
  if (f.config().arch == Arch::EncoderDecoder) return f.encode(x);
  return std::nullopt;
}

}  // namespace

GradSuiteReport run_gradcheck_suite(std::size_t configs, std::uint64_t seed, double step) {
  GradSuiteReport report;
  for (std::size_t i = 0; i < configs; ++i) {
    Rng rng(Rng::derive(seed, {Rng::label("gradcheck"), i}));
    const std::size_t symbols = 2 + rng.below(5);  // vocab 6..10
    const auto cfg = random_tiny_config(rng, symbols, 16);
    auto params = random_params(cfg, rng);
    const std::size_t K = 3;
    const Tokens x = random_symbols(rng, cfg.vocab_size, 1, 4);
    const Tokens c = random_symbols(rng, cfg.vocab_size, 0, K);
    const Tokens y = with_eos(random_symbols(rng, cfg.vocab_size, 1, 3));

    GradCheckFn fn = [&](Graph<double>& g, std::span<const Var<double>> leaves) {
      Forward<double> f(g, params, cfg);
      for (std::size_t p = 0; p < leaves.size(); ++p) f.bind(p, leaves[p]);
      auto mem = maybe_encode(f, x);
      auto t = f.warmup_terms(mem ? &*mem : nullptr, x, c, K, y);
      const Var<double> terms[] = {t.target_nll, t.warmup_log_prob};
      const double w[] = {1.0, 1.0};
      return weighted_sum<double>(terms, w);
    };
    std::vector<Tensor<double>*> leaves;
    for (auto& t : params.tensors) leaves.push_back(&t);
    const auto r = grad_check(fn, leaves, step);
    report.per_config.push_back(r.max_rel_error);
    report.descriptions.push_back(describe(cfg));
    {
      std::ostringstream os;
      os << params.names[r.worst_leaf] << "[" << r.worst_index << "] analytic "
         << r.worst_analytic << " numeric " << r.worst_numeric;
      report.worst.push_back(os.str());
    }
    report.coordinates += r.coordinates;
    report.max_abs_error = std::max(report.max_abs_error, r.max_abs_error);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < r.analytic.size(); ++k) {
      const double a = r.analytic[k], n = r.numeric[k];
      diff2 += (a - n) * (a - n);
      a2 += a * a;
      n2 += n * n;
      const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
      if (rel > 1e-6) {
        ++report.over_tolerance;
        report.largest_gradient_over_tolerance =
            std::max(report.largest_gradient_over_tolerance, std::abs(a));
      }
    }
    if (a2 > 0 || n2 > 0)
      report.max_norm_rel_error =
          std::max(report.max_norm_rel_error, std::sqrt(diff2 / std::max(a2, n2)));
    report.max_rel_error = std::max(report.max_rel_error, r.max_rel_error);
    ++report.configs;
  }
  return report;
}

PropertyResult check_warmup_mass(std::size_t models, std::uint64_t seed) {
  PropertyResult r{"warmup distribution mass", true, {}};
  double worst = 0.0;
  std::size_t enumerated = 0;
  for (std::size_t i = 0; i < models; ++i) {
    Rng rng(Rng::derive(seed, {Rng::label("mass"), i}));
    const std::size_t symbols = 1 + rng.below(5);
    const std::size_t K = rng.below(4);
    const auto cfg = random_tiny_config(rng, symbols, 8);
    const auto params = random_params(cfg, rng);
    const Tokens x = random_symbols(rng, cfg.vocab_size, 1, 4);
    const Tokens y = random_symbols(rng, cfg.vocab_size, 1, 3);
    const auto table = enumerate_table(params, cfg, x, y, K);
    double mass = 0.0;
    for (double lp : table.log_prob) {
      if (lp > 0.0) r.passed = false;
      mass += std::exp(lp);
    }
    worst = std::max(worst, std::abs(mass - 1.0));
    enumerated += table.warmups.size();
  }
  if (worst > 1e-9) r.passed = false;
  std::ostringstream os;
  os << models << " models, " << enumerated << " warmups, max |mass - 1| = " << worst;
  r.detail = os.str();
  return r;
}

PropertyResult check_jensen(std::size_t trials, std::uint64_t seed) {
  PropertyResult r{"jensen inequality", true, {}};
  double min_gap = std::numeric_limits<double>::infinity();
  double max_k0_gap = 0.0;
  std::size_t k0 = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng(Rng::derive(seed, {Rng::label("jensen"), i}));
    const std::size_t symbols = 1 + rng.below(5);
    const std::size_t K = i % 3;  // every third trial is the K = 0 case
    const auto cfg = random_tiny_config(rng, symbols, 8);
    const auto params = random_params(cfg, rng);
    const Tokens x = random_symbols(rng, cfg.vocab_size, 1, 4);
    const Tokens y = random_symbols(rng, cfg.vocab_size, 1, 3);
    const auto rep = enumerate_expectation(params, cfg, x, y, K);
    if (K == 0) {
      ++k0;
      max_k0_gap = std::max(max_k0_gap, std::abs(rep.jensen_gap));
      if (rep.jensen_gap != 0.0) r.passed = false;
    } else {
      min_gap = std::min(min_gap, rep.jensen_gap);
      if (rep.jensen_gap < -1e-9) r.passed = false;
    }
    if (!(rep.exact_expected_prob > 0.0 && rep.exact_expected_prob <= 1.0)) r.passed = false;
  }
  std::ostringstream os;
  os << trials << " trials, min gap (K>0) = " << min_gap << ", " << k0
     << " K=0 trials with max |gap| = " << max_k0_gap;
  r.detail = os.str();
  return r;
}

PropertyResult check_monte_carlo(std::size_t instances, std::size_t draws, std::uint64_t seed) {
  PropertyResult r{"monte carlo consistency", true, {}};
  double worst_loss_z = 0.0, worst_freq_z = 0.0;
  std::size_t freq_tests = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(Rng::derive(seed, {Rng::label("monte-carlo"), i}));
    const std::size_t symbols = 2 + rng.below(2);
    const std::size_t K = 1 + rng.below(2);
    const auto cfg = random_tiny_config(rng, symbols, 8);
    const auto params = random_params(cfg, rng);
    const Example ex{random_symbols(rng, cfg.vocab_size, 1, 3),
                     random_symbols(rng, cfg.vocab_size, 1, 3)};
    const auto table = enumerate_table(params, cfg, ex.source, ex.target, K);
    double exact = 0.0;
    std::map<Tokens, std::size_t> index;
    for (std::size_t j = 0; j < table.warmups.size(); ++j) {
      exact += std::exp(table.log_prob[j]) * table.target_nll[j];
      index[table.warmups[j]] = j;
    }

    SamplerConfig s;
    s.n_samples = 1;
    s.max_warmup_len = K;
    s.beam_size = table.warmups.size() + 1;  // wide enough that nothing is pruned
    std::vector<std::size_t> counts(table.warmups.size());
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
      s.seed = Rng::derive(seed, {Rng::label("monte-carlo-draw"), i, d});
      Graph<double> g(false);
      Forward<double> f(g, params, cfg);
      const auto loss = warmup_example_loss(f, params, ex, s, GradMode::Pathwise);
      sum += loss.loss;
      sum_sq += loss.loss * loss.loss;
      ++counts.at(index.at(loss.warmups.front().tokens));
    }
    const double nd = static_cast<double>(draws);
    const double mean = sum / nd;
    const double var = std::max(0.0, (sum_sq - nd * mean * mean) / (nd - 1.0));
    const double se = std::sqrt(var / nd);
    const double z = se > 0 ? std::abs(mean - exact) / se : (mean == exact ? 0.0 : INFINITY);
    worst_loss_z = std::max(worst_loss_z, z);
    if (z > 3.0) r.passed = false;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      const double p = std::exp(table.log_prob[j]);
      const double freq = static_cast<double>(counts[j]) / nd;
      const double fse = std::sqrt(p * (1.0 - p) / nd);
      const double fz = fse > 0 ? std::abs(freq - p) / fse : (freq == p ? 0.0 : INFINITY);
      worst_freq_z = std::max(worst_freq_z, fz);
      if (fz > 3.0) r.passed = false;
      ++freq_tests;
    }
  }
  std::ostringstream os;
  os << instances << " instances x " << draws << " draws, max loss z = " << worst_loss_z
     << ", max frequency z = " << worst_freq_z << " over " << freq_tests << " warmups";
  r.detail = os.str();
  return r;
}

PropertyResult check_score_function(std::size_t draws, std::uint64_t seed) {
  PropertyResult r{"score-function gradient", true, {}};
  ModelConfig cfg;
  cfg.arch = Arch::EncoderDecoder;
  cfg.vocab_size = kNumSpecials + 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers_encoder = 1;
  cfg.n_layers_decoder = 1;
  cfg.d_ff = 16;
  cfg.max_seq_len = 16;
  Rng rng(Rng::derive(seed, {Rng::label("score-function")}));
  const auto params = random_params(cfg, rng, 1.0);
  const std::size_t K = 2;
  const Example ex{{4, 5, 4}, {5, 4}};
  const auto exact = exact_expected_nll_gradient(params, cfg, ex.source, ex.target, K);

  // Fixed coordinates: the whole output bias and the first entries of the
  // final decoder norm gain.
  struct Coord {
    std::size_t array, index;
    std::string name;
  };
  std::vector<Coord> coords;
  const auto out_b = params.index("out.b");
  for (std::size_t j = 0; j < cfg.vocab_size; ++j)
    coords.push_back({out_b, j, "out.b[" + std::to_string(j) + "]"});
  const auto gain = params.index("dec.ln_final.g");
  for (std::size_t j = 0; j < 4; ++j)
    coords.push_back({gain, j, "dec.ln_final.g[" + std::to_string(j) + "]"});

  SamplerConfig s;
  s.n_samples = 4;
  s.max_warmup_len = K;
  s.beam_size = 16;

  auto estimate = [&](GradMode mode, std::size_t count, std::vector<double>& z) {
    std::vector<double> sum(coords.size()), sum_sq(coords.size());
    std::vector<Tensor<double>> grads;
    for (std::size_t d = 0; d < count; ++d) {
      for (auto& t : grads) t.fill(0.0);
      s.seed = Rng::derive(seed, {Rng::label("score-function-draw"), d});
      example_gradient(params, cfg, ex, TrainMode::Warmup, s, mode, grads);
      for (std::size_t k = 0; k < coords.size(); ++k) {
        const double v = grads[coords[k].array][coords[k].index];
        sum[k] += v;
        sum_sq[k] += v * v;
      }
    }
    const double nd = static_cast<double>(count);
    z.assign(coords.size(), 0.0);
    for (std::size_t k = 0; k < coords.size(); ++k) {
      const double mean = sum[k] / nd;
      const double var = std::max(0.0, (sum_sq[k] - nd * mean * mean) / (nd - 1.0));
      const double se = std::sqrt(var / nd);
      const double target = exact[coords[k].array][coords[k].index];
      z[k] = se > 0 ? std::abs(mean - target) / se
                    : (std::abs(mean - target) <= 1e-12 ? 0.0 : INFINITY);
    }
  };

  std::vector<double> z;
  estimate(GradMode::ScoreFunction, draws, z);
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (z[k] > worst) {
      worst = z[k];
      worst_name = coords[k].name;
    }
    if (z[k] > 3.0) r.passed = false;
  }
  // Same test on the pathwise estimate shows the check can tell the two apart.
  std::vector<double> zp;
  estimate(GradMode::Pathwise, std::max<std::size_t>(draws / 10, 100), zp);
  const double pathwise_worst = *std::max_element(zp.begin(), zp.end());
  std::ostringstream os;
  os << draws << " draws, " << coords.size() << " coordinates, max z = " << worst << " ("
     << worst_name << "); pathwise-only estimate max z = " << pathwise_worst;
  r.detail = os.str();
  return r;
}

PropertyResult check_k0_losses(std::size_t examples, std::uint64_t seed) {
  PropertyResult r{"k=0 reduction (64-bit losses)", true, {}};
  double worst = 0.0;
  for (std::size_t i = 0; i < examples; ++i) {
    Rng rng(Rng::derive(seed, {Rng::label("k0"), i}));
    // A new random model every 50 examples.
    Rng model_rng(Rng::derive(seed, {Rng::label("k0-model"), i / 50}));
    const auto cfg = random_tiny_config(model_rng, 2 + model_rng.below(10), 16);
    const auto params = random_params(cfg, model_rng);
    const Example ex{random_symbols(rng, cfg.vocab_size, 1, 6),
                     random_symbols(rng, cfg.vocab_size, 1, 6)};
    SamplerConfig s;
    s.n_samples = 1 + rng.below(8);
    s.max_warmup_len = 0;
    s.seed = rng.next();
    const double base = baseline_sft_loss(params, cfg, ex);
    for (auto mode : {GradMode::Pathwise, GradMode::ScoreFunction}) {
      const double warm = warmup_example_loss(params, cfg, ex, s, mode);
      worst = std::max(worst, std::abs(warm - base));
    }
  }
  if (worst > 1e-12) r.passed = false;
  std::ostringstream os;
  os << examples << " examples, max |warmup - baseline| = " << worst;
  r.detail = os.str();
  return r;
}

PropertyResult check_separator_protocol(const Parameters<float>& params, const ModelConfig& config,
                                        std::size_t generations, std::size_t max_warmup_len,
                                        std::uint64_t seed) {
  PropertyResult r{"separator protocol", true, {}};
  std::size_t failures = 0, sampled = 0;
  double worst_lp = 0.0;
  std::string first_failure;
  auto fail = [&](const std::string& why) {
    r.passed = false;
    if (failures++ == 0) first_failure = why;
  };
  const std::size_t room = config.max_seq_len - max_warmup_len - 3;
  for (std::size_t i = 0; i < generations; ++i) {
    Rng rng(Rng::derive(seed, {Rng::label("separator"), i}));
    const Tokens x = random_symbols(rng, config.vocab_size, 1, std::min<std::size_t>(room, 10));
    InferenceOptions opts;
    opts.max_warmup_len = max_warmup_len;
    opts.sample_warmup = i % 2 == 1;
    opts.sampler.seed = rng.next();
    opts.sampler.beam_size = 4;
    const auto out = inference_generate(params, config, x, opts);
    if (std::count(out.full.begin(), out.full.end(), kSep) != 1) {
      fail("generation " + std::to_string(i) + " has " +
           std::to_string(std::count(out.full.begin(), out.full.end(), kSep)) + " separators");
      continue;
    }
    try {
      if (extract_target(out.full) != out.target)
        fail("generation " + std::to_string(i) + ": extracted target differs");
    } catch (const ExtractionError& e) {
      fail("generation " + std::to_string(i) + ": " + e.what());
    }
    if (!opts.sample_warmup) continue;
    SamplerConfig s = opts.sampler;
    s.n_samples = 2;
    s.max_warmup_len = max_warmup_len;
    for (const auto& w : sample_warmups(params, config, x, s)) {
      ++sampled;
      const double without = sequence_log_prob(params, config, x, w.tokens, max_warmup_len);
      Graph<float> g(false);
      Forward<float> f(g, params, config);
      std::optional<Memory<float>> mem;
      if (config.arch == Arch::EncoderDecoder) mem = f.encode(x);
      const Token eos[] = {kEos};
      const double with =
          f.warmup_terms(mem ? &*mem : nullptr, x, w.tokens, max_warmup_len, eos)
              .warmup_log_prob.value()
              .item();
      const auto attached = attach_separator(w.tokens);
      if (attached.size() != w.tokens.size() + 1 || attached.back() != kSep ||
          !std::equal(w.tokens.begin(), w.tokens.end(), attached.begin()))
        fail("attach_separator altered the warmup");
      worst_lp = std::max({worst_lp, std::abs(with - without), std::abs(w.log_prob - without)});
      if (std::abs(with - without) > 1e-6 || std::abs(w.log_prob - without) > 1e-4)
        fail("generation " + std::to_string(i) + ": log-prob changed by the separator");
    }
  }
  std::ostringstream os;
  os << generations << " generations, " << sampled << " sampled warmups, max log-prob diff "
     << worst_lp << ", " << failures << " failures";
  if (failures) os << " (first: " << first_failure << ")";
  r.detail = os.str();
  return r;
}

}  // namespace wgen
