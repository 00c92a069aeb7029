#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wgen/vocab.hpp"

namespace wgen {

struct Example {
  Tokens source;
  Tokens target;  // no EOS; it is appended when the example is batched

  friend bool operator==(const Example&, const Example&) = default;
};

enum class TaskKind { Copy, Reverse, Sort, ToyTranslation, AnswerChoice };

std::string_view task_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::Copy;
  std::size_t vocab_size = 16;
  std::size_t min_len = 3;
  std::size_t max_len = 10;
  std::size_t train_size = 1000;
  std::size_t valid_size = 100;
  std::size_t test_size = 100;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

// Target for a source under the given task. Toy translation needs the symbol
// map, which is derived from the spec seed.
Tokens apply_task(const TaskSpec& spec, std::span<const Token> source);

// Seed-derived permutation over symbol ids used by toy translation; entry i
// is the image of symbol kFirstSymbol + i.
Tokens toy_translation_map(std::size_t vocab_size, std::uint64_t seed);

// Deterministic in the spec; the three splits are disjoint as sets of
// (source, target) pairs.
Dataset generate_dataset(const TaskSpec& spec);

// Examples must be non-empty and leave room for a warmup of up to K tokens
// plus BOS/SEP/EOS inside max_seq_len.
void check_example_fits(const Example& ex, std::size_t max_seq_len, std::size_t max_warmup_len);

// Line format: "src ids<TAB>tgt ids", ids as space-separated decimals. Lines
// starting with '#' are comments.
void write_dataset(const std::filesystem::path& path, const std::vector<Example>& examples);
std::vector<Example> read_dataset(const std::filesystem::path& path);
std::string format_example(const Example& ex);

}  // namespace wgen
