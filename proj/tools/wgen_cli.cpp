// Command-line front end: data generation, training, evaluation and the
// verification suites.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wgen/checkpoint.hpp"
#include "wgen/config.hpp"
#include "wgen/decoding.hpp"
#include "wgen/error.hpp"
#include "wgen/experiment.hpp"
#include "wgen/metrics.hpp"
#include "wgen/verify.hpp"

namespace fs = std::filesystem;
using namespace wgen;

namespace {

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0) throw ConfigError("bad list entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

ExperimentConfig experiment_from(const std::string& path, const std::vector<std::string>& sets,
                                 const std::string& out) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!out.empty()) cfg.out_dir = out;
  apply_env_overrides(cfg);
  return cfg;
}

void print_property(const PropertyResult& r) {
  std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wgen: warmup-generation seq2seq experiments"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_task = "copy", gen_out;
  TaskSpec spec;
  gen->add_option("--task", gen_task, "copy|reverse|sort|toy-translation|answer-choice");
  gen->add_option("--vocab-size", spec.vocab_size, "total vocabulary size, specials included");
  gen->add_option("--min-len", spec.min_len);
  gen->add_option("--max-len", spec.max_len);
  gen->add_option("--train-size", spec.train_size);
  gen->add_option("--valid-size", spec.valid_size);
  gen->add_option("--test-size", spec.test_size);
  gen->add_option("--seed", spec.seed);
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train one configuration");
  std::string train_config, train_out;
  std::vector<std::string> train_sets;
  train->add_option("--config", train_config, "key = value config file")->required();
  train->add_option("--set", train_sets, "override a config key (key=value)");
  train->add_option("--out", train_out, "run directory (overrides out_dir)");

  // eval
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  std::string eval_ckpt, eval_data, eval_task = "copy";
  std::size_t eval_k = 8;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--data", eval_data, "split file (.tsv)")->required();
  eval->add_option("--task", eval_task);
  eval->add_option("--max-warmup-len", eval_k, "0 for baseline checkpoints");

  // infer
  auto* infer = app.add_subcommand("infer", "generate warmup and target for one source");
  std::string infer_ckpt, infer_source;
  std::size_t infer_k = 8;
  bool infer_sample = false;
  std::uint64_t infer_seed = 0;
  infer->add_option("--checkpoint", infer_ckpt)->required();
  infer->add_option("--source", infer_source, "space-separated symbol names")->required();
  infer->add_option("--max-warmup-len", infer_k);
  infer->add_flag("--sample", infer_sample, "sample the warmup instead of greedy decoding");
  infer->add_option("--seed", infer_seed);

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite (64-bit)");
  std::size_t grad_configs = 20;
  std::uint64_t grad_seed = 1;
  double grad_tol = 1e-6, grad_step = 1e-5;
  grad->add_option("--configs", grad_configs);
  grad->add_option("--step", grad_step, "central-difference step");
  grad->add_option("--seed", grad_seed);
  grad->add_option("--tolerance", grad_tol);

  // oracle-check
  auto* oracle = app.add_subcommand("oracle-check", "enumeration oracle against sampling");
  std::uint64_t oracle_seed = 1;
  std::size_t oracle_models = 20, oracle_trials = 100, oracle_instances = 10,
              oracle_draws = 10000, oracle_sf_draws = 100000;
  oracle->add_option("--seed", oracle_seed);
  oracle->add_option("--models", oracle_models, "models for the mass check");
  oracle->add_option("--trials", oracle_trials, "trials for the Jensen check");
  oracle->add_option("--instances", oracle_instances, "instances for the Monte Carlo check");
  oracle->add_option("--draws", oracle_draws, "draws per Monte Carlo instance");
  oracle->add_option("--sf-draws", oracle_sf_draws, "draws for the score-function check");

  // ablate-n
  auto* ablate = app.add_subcommand("ablate-n", "one warmup run per sample count n");
  std::string ablate_config, ablate_values = "2,4,6,8", ablate_out = "runs/ablate-n";
  std::vector<std::string> ablate_sets;
  ablate->add_option("values,--values", ablate_values, "comma-separated n values");
  ablate->add_option("--config", ablate_config, "key = value config file")->required();
  ablate->add_option("--set", ablate_sets);
  ablate->add_option("--out", ablate_out);

  // compare-modes
  auto* compare = app.add_subcommand("compare-modes", "baseline and warmup runs per task");
  std::string compare_config, compare_tasks = "copy,reverse", compare_out = "runs/compare";
  std::vector<std::string> compare_sets;
  compare->add_option("--config", compare_config)->required();
  compare->add_option("--tasks", compare_tasks, "comma-separated task names");
  compare->add_option("--set", compare_sets);
  compare->add_option("--out", compare_out);

  // analyze-overlap
  auto* overlap = app.add_subcommand("analyze-overlap", "warmup/reference overlap rate");
  std::string overlap_ckpt, overlap_data;
  std::size_t overlap_k = 8;
  bool overlap_sample = false;
  std::uint64_t overlap_seed = 0;
  overlap->add_option("--checkpoint", overlap_ckpt)->required();
  overlap->add_option("--data", overlap_data)->required();
  overlap->add_option("--max-warmup-len", overlap_k);
  overlap->add_flag("--sample", overlap_sample);
  overlap->add_option("--seed", overlap_seed);

  // export
  auto* exp = app.add_subcommand("export", "JSONL result streams to one CSV");
  std::vector<std::string> export_inputs;
  std::string export_out;
  exp->add_option("inputs", export_inputs, "results.jsonl files or run directories")->required();
  exp->add_option("--out", export_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      spec.kind = parse_task_kind(gen_task);
      const auto data = generate_dataset(spec);
      fs::create_directories(gen_out);
      write_dataset(fs::path(gen_out) / "train.tsv", data.train);
      write_dataset(fs::path(gen_out) / "valid.tsv", data.valid);
      write_dataset(fs::path(gen_out) / "test.tsv", data.test);
      Vocab(spec.vocab_size).write_manifest(fs::path(gen_out) / "vocab.tsv");
      std::cout << "wrote " << data.train.size() << "/" << data.valid.size() << "/"
                << data.test.size() << " examples to " << gen_out << " (hash "
                << dataset_hash(data) << ")\n";
    } else if (*train) {
      const auto cfg = experiment_from(train_config, train_sets, train_out);
      const auto run = run_experiment(cfg);
      nlohmann::ordered_json j;
      j["run_dir"] = run.dir.string();
      j["best_epoch"] = run.result.best_epoch;
      if (run.result.test_metrics)
        j["test"] = nlohmann::ordered_json::parse(metric_report_json(*run.result.test_metrics));
      std::cout << j.dump(2) << "\n";
    } else if (*eval) {
      const auto ck = load_checkpoint(eval_ckpt);
      const auto examples = read_dataset(eval_data);
      InferenceOptions opts;
      opts.max_warmup_len = eval_k;
      const auto report = evaluate(ck.params, ck.config, examples, parse_task_kind(eval_task), opts);
      std::cout << metric_report_json(report) << "\n";
    } else if (*infer) {
      const auto ck = load_checkpoint(infer_ckpt);
      const Vocab vocab(ck.config.vocab_size);
      const auto source = vocab.parse(infer_source);
      InferenceOptions opts;
      opts.max_warmup_len = infer_k;
      opts.sample_warmup = infer_sample;
      opts.sampler.seed = infer_seed;
      const auto out = inference_generate(ck.params, ck.config, source, opts);
      std::cout << "warmup: " << vocab.render(out.warmup) << "\n"
                << "full:   " << vocab.render(out.full) << "\n"
                << "target: " << vocab.render(out.target) << "\n";
    } else if (*grad) {
      const auto report = run_gradcheck_suite(grad_configs, grad_seed, grad_step);
      for (std::size_t i = 0; i < report.configs; ++i)
        std::printf("config %2zu  %-48s max rel error %.3e  (%s)\n", i,
                    report.descriptions[i].c_str(), report.per_config[i],
                    report.worst[i].c_str());
      std::printf("max relative error: %.3e over %zu coordinates\n", report.max_rel_error,
                  report.coordinates);
      std::printf("max absolute error: %.3e; %zu coordinates above 1e-6 relative, largest |grad| "
                  "among them %.3e; worst norm-wise relative error %.3e\n",
                  report.max_abs_error, report.over_tolerance,
                  report.largest_gradient_over_tolerance, report.max_norm_rel_error);
      return report.max_rel_error <= grad_tol ? 0 : 1;
    } else if (*oracle) {
      bool ok = true;
      for (const auto& r :
           {check_warmup_mass(oracle_models, oracle_seed), check_jensen(oracle_trials, oracle_seed),
            check_monte_carlo(oracle_instances, oracle_draws, oracle_seed),
            check_score_function(oracle_sf_draws, oracle_seed)}) {
        print_property(r);
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    } else if (*ablate) {
      const auto cfg = experiment_from(ablate_config, ablate_sets, "");
      const auto rows = ablate_n(cfg, parse_list(ablate_values), ablate_out);
      std::cout << "wrote " << rows.size() << " rows to "
                << (fs::path(ablate_out) / "ablation.csv").string() << "\n";
    } else if (*compare) {
      const auto cfg = experiment_from(compare_config, compare_sets, "");
      std::vector<TaskKind> tasks;
      std::stringstream ss(compare_tasks);
      for (std::string t; std::getline(ss, t, ',');)
        if (!t.empty()) tasks.push_back(parse_task_kind(t));
      const auto rows = compare_modes(cfg, tasks, compare_out);
      for (const auto& r : rows)
        std::printf("%-16s %-13s test exact match %.4f\n", r.task.c_str(), r.mode.c_str(),
                    r.test.exact_match);
      std::cout << "wrote " << (fs::path(compare_out) / "comparison.csv").string() << "\n";
    } else if (*overlap) {
      const auto ck = load_checkpoint(overlap_ckpt);
      const auto examples = read_dataset(overlap_data);
      InferenceOptions opts;
      opts.max_warmup_len = overlap_k;
      opts.sample_warmup = overlap_sample;
      std::vector<std::pair<Tokens, Tokens>> pairs;
      std::size_t nonempty = 0;
      for (std::size_t i = 0; i < examples.size(); ++i) {
        opts.sampler.seed = Rng::derive(overlap_seed, {i});
        auto out = inference_generate(ck.params, ck.config, examples[i].source, opts);
        nonempty += !out.warmup.empty();
        pairs.emplace_back(std::move(out.warmup), examples[i].target);
      }
      nlohmann::ordered_json j;
      j["examples"] = examples.size();
      j["nonempty_warmups"] = nonempty;
      j["overlap_rate"] = overlap_rate(pairs);
      std::cout << j.dump() << "\n";
    } else if (*exp) {
      std::vector<fs::path> inputs(export_inputs.begin(), export_inputs.end());
      export_csv(inputs, export_out);
      std::cout << "wrote " << export_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
