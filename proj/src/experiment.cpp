#include "wgen/experiment.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "wgen/checkpoint.hpp"
#include "wgen/error.hpp"

namespace wgen {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

std::string split_text(const std::vector<Example>& split) {
  std::string out;
  for (const auto& ex : split) out += format_example(ex) + "\n";
  return out;
}

ojson report_object(const MetricReport& r) {
  ojson j;
  j["exact_match"] = r.exact_match;
  j["token_accuracy"] = r.token_accuracy;
  j["bleu"] = r.bleu;
  j["chrf"] = r.chrf;
  if (r.macro_f1) j["macro_f1"] = *r.macro_f1;
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  return j;
}

}  // namespace

std::string epoch_record_json(const EpochRecord& record) {
  ojson j;
  j["epoch"] = record.epoch;
  j["train_loss"] = record.train_loss;
  j["valid_metric"] = record.valid_metric;
  j["seconds"] = record.seconds;
  return j.dump();
}

void append_epoch_record(std::ostream& os, const EpochRecord& record) {
  os << epoch_record_json(record) << '\n';
  os.flush();
  if (!os) throw IoError("failed to append epoch record " + std::to_string(record.epoch));
}

std::vector<EpochRecord> read_epoch_records(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::vector<EpochRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EpochRecord r;
      r.epoch = j.at("epoch").get<std::size_t>();
      r.train_loss = j.at("train_loss").get<double>();
      r.valid_metric = j.at("valid_metric").get<double>();
      r.seconds = j.at("seconds").get<double>();
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string metric_report_json(const MetricReport& report) { return report_object(report).dump(); }

std::string git_blob_hash(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("cannot allocate a digest context");
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string dataset_hash(const Dataset& data) {
  const std::string tree = "train " + git_blob_hash(split_text(data.train)) + "\nvalid " +
                           git_blob_hash(split_text(data.valid)) + "\ntest " +
                           git_blob_hash(split_text(data.test)) + "\n";
  return git_blob_hash(tree);
}

std::string RunManifest::to_json() const {
  ojson j;
  ojson cfg = ojson::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  j["dataset_hash"] = dataset_hash;
  j["seed"] = seed;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["artifacts"] = artifacts;
  return j.dump(2);
}

Dataset load_or_generate(const ExperimentConfig& config) {
  if (config.data_dir.empty()) return generate_dataset(config.task);
  Dataset d;
  d.train = read_dataset(config.data_dir / "train.tsv");
  d.valid = read_dataset(config.data_dir / "valid.tsv");
  d.test = read_dataset(config.data_dir / "test.tsv");
  return d;
}

RunOutcome run_experiment(const ExperimentConfig& input) {
  ExperimentConfig config = input;
  config.finalize();
  RunOutcome out;
  out.dir = config.out_dir;
  if (fs::exists(out.dir / "manifest.json"))
    throw IoError(out.dir.string() + " already holds a finished run; pick a new out_dir");
  fs::create_directories(out.dir / "checkpoints");
  fs::create_directories(out.dir / "data");

  RunManifest& m = out.manifest;
  m.config = config.entries();
  m.seed = config.train.seed;
  m.started_at = utc_now();

  const Dataset data = load_or_generate(config);
  m.dataset_hash = dataset_hash(data);
  write_text(out.dir / "data/train.tsv", split_text(data.train));
  write_text(out.dir / "data/valid.tsv", split_text(data.valid));
  write_text(out.dir / "data/test.tsv", split_text(data.test));
  Vocab(config.model.vocab_size).write_manifest(out.dir / "data/vocab.tsv");
  for (const char* f : {"data/train.tsv", "data/valid.tsv", "data/test.tsv", "data/vocab.tsv"})
    m.artifacts.emplace_back(f);

  write_text(out.dir / "config.txt", config.to_text());
  m.artifacts.emplace_back("config.txt");

  std::ofstream results(out.dir / "results.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream timing(out.dir / "timing.jsonl", std::ios::binary | std::ios::trunc);
  if (!results || !timing) throw IoError("cannot open result streams in " + out.dir.string());
  m.artifacts.emplace_back("results.jsonl");
  m.artifacts.emplace_back("timing.jsonl");

  TrainHooks hooks;
  hooks.on_checkpoint = [&](std::size_t epoch, const Parameters<float>& params) {
    char name[32];
    std::snprintf(name, sizeof name, "checkpoints/epoch_%03zu.wgen", epoch);
    save_checkpoint(out.dir / name, config.model, params);
    m.artifacts.emplace_back(name);
  };
  hooks.on_epoch = [&](const EpochRecord& rec) {
    append_epoch_record(timing, rec);
    EpochRecord stable = rec;
    // Wall-clock time would make the record stream differ between otherwise
    // identical runs; it lives in timing.jsonl instead.
    if (config.deterministic) stable.seconds = 0.0;
    append_epoch_record(results, stable);
  };

  out.result = train_loop(config.train, config.model, data, config.task.kind, hooks);

  save_checkpoint(out.dir / "best.wgen", config.model, out.result.best());
  m.artifacts.emplace_back("best.wgen");
  ojson summary;
  summary["best_epoch"] = out.result.best_epoch;
  summary["selection_metric"] = config.train.selection_metric;
  if (out.result.test_metrics) summary["test"] = report_object(*out.result.test_metrics);
  write_text(out.dir / "test_metrics.json", summary.dump(2) + "\n");
  m.artifacts.emplace_back("test_metrics.json");

  m.finished_at = utc_now();
  write_text(out.dir / "manifest.json", m.to_json() + "\n");
  return out;
}

std::vector<ComparisonRow> compare_modes(const ExperimentConfig& base,
                                         const std::vector<TaskKind>& tasks,
                                         const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<ComparisonRow> rows;
  for (auto task : tasks) {
    for (auto mode : {TrainMode::BaselineSft, TrainMode::Warmup}) {
      ExperimentConfig cfg = base;
      cfg.task.kind = task;
      cfg.train.mode = mode;
      cfg.out_dir = out_dir / std::string(task_name(task)) / std::string(train_mode_name(mode));
      const auto run = run_experiment(cfg);
      ComparisonRow row;
      row.task = task_name(task);
      row.mode = train_mode_name(mode);
      row.best_epoch = run.result.best_epoch;
      if (!run.result.epochs.empty()) {
        row.final_train_loss = run.result.epochs.back().train_loss;
        row.best_valid_metric = run.result.epochs[run.result.best_epoch - 1].valid_metric;
      }
      if (run.result.test_metrics) row.test = *run.result.test_metrics;
      rows.push_back(row);
    }
  }
  std::string csv =
      "task,mode,best_epoch,final_train_loss,best_valid_metric,test_exact_match,"
      "test_token_accuracy,test_bleu,test_chrf\n";
  for (const auto& r : rows)
    csv += r.task + "," + r.mode + "," + std::to_string(r.best_epoch) + "," +
           num(r.final_train_loss) + "," + num(r.best_valid_metric) + "," +
           num(r.test.exact_match) + "," + num(r.test.token_accuracy) + "," + num(r.test.bleu) +
           "," + num(r.test.chrf) + "\n";
  write_text(out_dir / "comparison.csv", csv);
  return rows;
}

std::vector<AblationRow> ablate_n(const ExperimentConfig& base, const std::vector<std::size_t>& ns,
                                  const fs::path& out_dir) {
  if (ns.empty()) throw ConfigError("ablate-n needs at least one value of n");
  fs::create_directories(out_dir);
  std::vector<AblationRow> rows;
  std::string curves = "n,epoch,train_loss,valid_metric\n";
  for (auto n : ns) {
    ExperimentConfig cfg = base;
    cfg.train.mode = TrainMode::Warmup;
    cfg.train.sampler.n_samples = n;
    cfg.out_dir = out_dir / ("n_" + std::to_string(n));
    const auto run = run_experiment(cfg);
    AblationRow row;
    row.n_samples = n;
    for (const auto& e : run.result.epochs) {
      curves += std::to_string(n) + "," + std::to_string(e.epoch) + "," + num(e.train_loss) +
                "," + num(e.valid_metric) + "\n";
      row.best_valid_metric = std::max(row.best_valid_metric, e.valid_metric);
    }
    if (!run.result.epochs.empty()) {
      row.final_valid_metric = run.result.epochs.back().valid_metric;
      row.final_train_loss = run.result.epochs.back().train_loss;
    }
    if (run.result.test_metrics) row.test_exact_match = run.result.test_metrics->exact_match;
    rows.push_back(row);
  }
  std::string csv = "n,final_valid_metric,best_valid_metric,final_train_loss,test_exact_match\n";
  for (const auto& r : rows)
    csv += std::to_string(r.n_samples) + "," + num(r.final_valid_metric) + "," +
           num(r.best_valid_metric) + "," + num(r.final_train_loss) + "," +
           (r.test_exact_match ? num(*r.test_exact_match) : std::string()) + "\n";
  write_text(out_dir / "ablation.csv", csv);
  write_text(out_dir / "curves.csv", curves);
  return rows;
}

void export_csv(const std::vector<fs::path>& inputs, const fs::path& out) {
  if (inputs.empty()) throw ConfigError("export needs at least one input");
  std::string csv = "run,epoch,train_loss,valid_metric,seconds\n";
  for (const auto& in : inputs) {
    const fs::path file = fs::is_directory(in) ? in / "results.jsonl" : in;
    std::string run = file.parent_path().string();
    if (run.empty()) run = ".";
    for (const auto& r : read_epoch_records(file))
      csv += run + "," + std::to_string(r.epoch) + "," + num(r.train_loss) + "," +
             num(r.valid_metric) + "," + num(r.seconds) + "\n";
  }
  write_text(out, csv);
}

}  // namespace wgen
