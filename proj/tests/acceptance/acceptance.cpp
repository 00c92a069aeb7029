// Acceptance runner. `wgen_acceptance <n>...` runs the listed criteria (all of
// them when none are given) and prints one PASS/FAIL line per criterion.
// Exit status is 0 only if every requested criterion passed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wgen/config.hpp"
#include "wgen/experiment.hpp"
#include "wgen/training.hpp"
#include "wgen/verify.hpp"

using namespace wgen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

fs::path runs_root() {
  if (const char* env = std::getenv("WGEN_ACCEPTANCE_DIR")) return env;
  return fs::path(WGEN_BINARY_DIR) / "acceptance_runs";
}

ExperimentConfig source_config(const std::string& name) {
  return load_config(fs::path(WGEN_SOURCE_DIR) / "configs" / name);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome gradients() {
  const auto r = run_gradcheck_suite(20, 1);
  Outcome o;
  o.passed = r.configs >= 20 && r.max_rel_error <= 1e-6;
  o.detail = std::to_string(r.configs) + " configs, " + std::to_string(r.coordinates) +
             " coordinates, max rel error " + fmt(r.max_rel_error) + " (" +
             std::to_string(r.over_tolerance) + " coordinates above 1e-6, largest |grad| among them " +
             fmt(r.largest_gradient_over_tolerance) + ", max abs error " + fmt(r.max_abs_error) +
             ", worst norm-wise rel error " + fmt(r.max_norm_rel_error) + ")";
  return o;
}

Outcome from(const PropertyResult& r) { return {r.passed, r.detail}; }

Outcome k0_reduction() {
  const auto losses = check_k0_losses(1000, 5);
  if (!losses.passed) return from(losses);

  // 32-bit training trajectories, warmup mode with K = 0 against baseline SFT.
  TaskSpec spec;
  spec.kind = TaskKind::Reverse;
  spec.vocab_size = 10;
  spec.min_len = 2;
  spec.max_len = 6;
  spec.train_size = 300;
  spec.valid_size = 20;
  spec.test_size = 20;
  spec.seed = 3;
  const auto data = generate_dataset(spec);
  ModelConfig model;
  model.vocab_size = 10;
  model.d_model = 16;
  model.n_heads = 2;
  model.n_layers_encoder = 1;
  model.n_layers_decoder = 1;
  model.d_ff = 32;
  model.max_seq_len = 16;
  TrainConfig base;
  base.mode = TrainMode::BaselineSft;
  base.learning_rate = 3e-3;
  base.epochs = 3;
  base.batch_size = 8;
  base.seed = 21;
  auto warm = base;
  warm.mode = TrainMode::Warmup;
  warm.sampler.max_warmup_len = 0;
  warm.sampler.n_samples = 4;
  const auto a = train_loop(base, model, data, spec.kind);
  const auto b = train_loop(warm, model, data, spec.kind);
  double loss_diff = 0, param_diff = 0;
  for (std::size_t e = 0; e < a.epochs.size(); ++e)
    loss_diff = std::max(loss_diff, std::abs(a.epochs[e].train_loss - b.epochs[e].train_loss));
  for (std::size_t e = 0; e < a.checkpoints.size(); ++e)
    for (std::size_t i = 0; i < a.checkpoints[e].tensors.size(); ++i)
      for (std::size_t j = 0; j < a.checkpoints[e].tensors[i].size(); ++j)
        param_diff = std::max(param_diff, std::abs(static_cast<double>(a.checkpoints[e].tensors[i][j]) -
                                                   b.checkpoints[e].tensors[i][j]));
  Outcome o;
  o.passed = a.epochs.size() == b.epochs.size() && loss_diff <= 1e-6 && param_diff <= 1e-6;
  o.detail = losses.detail + "; 32-bit trajectories over " + std::to_string(a.epochs.size()) +
             " epochs: max loss diff " + fmt(loss_diff) + ", max parameter diff " + fmt(param_diff);
  return o;
}

Outcome separator_protocol() {
  // 600 generations from random checkpoints, 400 from a briefly trained one.
  std::string detail;
  bool ok = true;
  Rng rng(77);
  for (std::uint64_t i = 0; i < 3; ++i) {
    auto cfg = random_tiny_config(rng, 6);
    cfg.max_seq_len = 24;
    const auto params = random_params(cfg, rng, 1.0).cast<float>();
    const auto r = check_separator_protocol(params, cfg, 200, 3, 100 + i);
    ok &= r.passed;
    detail += "random " + std::to_string(i) + ": " + r.detail + "; ";
  }
  auto exp = source_config("copy.conf");
  exp.task.train_size = 400;
  exp.task.valid_size = 20;
  exp.task.test_size = 20;
  exp.train.epochs = 2;
  exp.finalize();
  const auto data = load_or_generate(exp);
  const auto trained = train_loop(exp.train, exp.model, data, exp.task.kind);
  const auto r = check_separator_protocol(trained.best(), exp.model, 400,
                                          exp.train.sampler.max_warmup_len, 200);
  ok &= r.passed;
  detail += "trained: " + r.detail;
  return {ok, detail};
}

std::vector<ComparisonRow> run_comparison(const fs::path& out) {
  fs::remove_all(out);
  auto base = source_config("copy.conf");
  return compare_modes(base, {TaskKind::Copy, TaskKind::Reverse}, out);
}

Outcome trainability() {
  const auto out = runs_root() / "compare_a";
  const auto rows = run_comparison(out);
  Outcome o;
  o.passed = fs::exists(out / "comparison.csv") && rows.size() == 4;
  for (const auto& r : rows) {
    o.passed &= r.test.exact_match >= 0.95;
    o.detail += r.task + "/" + r.mode + " test exact match " + fmt(r.test.exact_match) + "; ";
  }
  o.detail += "csv at " + (out / "comparison.csv").string();
  return o;
}

Outcome ablation() {
  const auto out = runs_root() / "ablate_sort";
  fs::remove_all(out);
  const auto rows = ablate_n(source_config("sort.conf"), {2, 4, 6, 8}, out);
  Outcome o;
  const auto csv = slurp(out / "ablation.csv");
  const auto curves = slurp(out / "curves.csv");
  const auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  o.passed = rows.size() == 4 && lines(csv) == 5 && lines(curves) == 1 + 4 * 10;
  for (const auto& r : rows)
    o.detail += "n=" + std::to_string(r.n_samples) + " valid " + fmt(r.final_valid_metric) +
                " loss " + fmt(r.final_train_loss) + "; ";
  o.detail += std::to_string(lines(curves) - 1) + " curve rows";
  return o;
}

Outcome reproducibility() {
  const auto first = runs_root() / "compare_a";
  if (!fs::exists(first / "comparison.csv")) run_comparison(first);
  const auto second = runs_root() / "compare_b";
  run_comparison(second);
  Outcome o{true, ""};
  std::size_t files = 0;
  for (const char* task : {"copy", "reverse"})
    for (const char* mode : {"baseline-sft", "warmup"}) {
      const auto rel = fs::path(task) / mode / "results.jsonl";
      const auto a = slurp(first / rel), b = slurp(second / rel);
      ++files;
      if (a.empty() || a != b) {
        o.passed = false;
        o.detail += rel.string() + " differs; ";
      }
    }
  o.detail += std::to_string(files) + " results.jsonl pairs compared byte for byte";
  return o;
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
      {"gradient correctness", gradients},
      {"warmup distribution mass", [] { return from(check_warmup_mass(20, 2)); }},
      {"Jensen inequality", [] { return from(check_jensen(100, 3)); }},
      {"Monte Carlo consistency", [] { return from(check_monte_carlo(10, 10000, 4)); }},
      {"k=0 reduction", k0_reduction},
      {"score-function gradient", [] { return from(check_score_function(100000, 6)); }},
      {"separator protocol", separator_protocol},
      {"end-to-end trainability", trainability},
      {"ablation harness", ablation},
      {"reproducibility", reproducibility},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::stoul(argv[i]));
  if (which.empty())
    for (std::size_t i = 1; i <= criteria().size(); ++i) which.push_back(i);
  fs::create_directories(runs_root());

  bool all = true;
  for (auto n : which) {
    if (n == 0 || n > criteria().size()) {
      std::cerr << "no criterion " << n << "\n";
      return 2;
    }
    const auto& [name, fn] = criteria()[n - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << n << " (" << name << "): " << (o.passed ? "PASS" : "FAIL") << " ["
              << fmt(secs) << " s] " << o.detail << std::endl;
    all &= o.passed;
  }
  return all ? 0 : 1;
}
