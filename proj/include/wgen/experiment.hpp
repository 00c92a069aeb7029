#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wgen/config.hpp"
#include "wgen/training.hpp"

namespace wgen {

// One JSON object per line with keys epoch, train_loss, valid_metric, seconds.
// Flushed after every line.
void append_epoch_record(std::ostream& os, const EpochRecord& record);
std::string epoch_record_json(const EpochRecord& record);
std::vector<EpochRecord> read_epoch_records(const std::filesystem::path& path);

std::string metric_report_json(const MetricReport& report);

// Git blob id ("blob <size>\0<bytes>", SHA-1) of a byte string, lowercase hex.
std::string git_blob_hash(std::string_view bytes);
// Hash over the serialized splits, so identical data gives an identical id
// wherever it came from.
std::string dataset_hash(const Dataset& data);

struct RunManifest {
  std::vector<std::pair<std::string, std::string>> config;
  std::string dataset_hash;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> artifacts;  // relative to the run directory

  std::string to_json() const;
};

// Generated from the task spec unless data_dir holds train/valid/test.tsv.
Dataset load_or_generate(const ExperimentConfig& config);

struct RunOutcome {
  RunResult result;
  std::filesystem::path dir;
  RunManifest manifest;
};

// Trains one configuration into config.out_dir:
//   manifest.json, results.jsonl, timing.jsonl, test_metrics.json,
//   data/{train,valid,test}.tsv, checkpoints/epoch_NNN.wgen, best.wgen
RunOutcome run_experiment(const ExperimentConfig& config);

struct ComparisonRow {
  std::string task;
  std::string mode;
  std::size_t best_epoch = 0;
  double final_train_loss = 0.0;
  double best_valid_metric = 0.0;
  MetricReport test;
};

// Trains both modes on each task (same seed and data) and writes
// out_dir/comparison.csv.
std::vector<ComparisonRow> compare_modes(const ExperimentConfig& base,
                                         const std::vector<TaskKind>& tasks,
                                         const std::filesystem::path& out_dir);

struct AblationRow {
  std::size_t n_samples = 0;
  double final_valid_metric = 0.0;
  double best_valid_metric = 0.0;
  double final_train_loss = 0.0;
  std::optional<double> test_exact_match;
};

// One warmup-mode run per n, in out_dir/n_<n>; writes ablation.csv (one row
// per n) and curves.csv (per-epoch losses for every n).
std::vector<AblationRow> ablate_n(const ExperimentConfig& base, const std::vector<std::size_t>& ns,
                                  const std::filesystem::path& out_dir);

// Concatenates JSONL result streams into one CSV: run,epoch,train_loss,valid_metric,seconds.
void export_csv(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out);

}  // namespace wgen
