#include "wgen/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <unordered_set>

#include "wgen/error.hpp"
#include "wgen/rng.hpp"

namespace wgen {

std::string_view task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::Sort: return "sort";
    case TaskKind::ToyTranslation: return "toy-translation";
    case TaskKind::AnswerChoice: return "answer-choice";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  for (auto k : {TaskKind::Copy, TaskKind::Reverse, TaskKind::Sort, TaskKind::ToyTranslation,
                 TaskKind::AnswerChoice})
    if (task_name(k) == name) return k;
  throw ConfigError("unknown task kind '" + std::string(name) + "'");
}

Tokens toy_translation_map(std::size_t vocab_size, std::uint64_t seed) {
  const std::size_t n = vocab_size - kNumSpecials;
  Tokens map(n);
  for (std::size_t i = 0; i < n; ++i) map[i] = kFirstSymbol + static_cast<Token>(i);
  Rng rng(Rng::derive(seed, {Rng::label("toy-translation-map")}));
  for (std::size_t i = n; i > 1; --i) std::swap(map[i - 1], map[rng.below(i)]);
  return map;
}

namespace {

// Most frequent symbol, or nullopt when the maximum count is shared.
std::optional<Token> unique_majority(std::span<const Token> source) {
  std::map<Token, std::size_t> counts;
  for (auto t : source) ++counts[t];
  std::size_t best = 0, ties = 0;
  Token arg = 0;
  for (auto [tok, c] : counts) {
    if (c > best) {
      best = c;
      arg = tok;
      ties = 1;
    } else if (c == best) {
      ++ties;
    }
  }
  if (ties != 1) return std::nullopt;
  return arg;
}

Tokens apply_with_map(TaskKind kind, std::span<const Token> source, const Tokens& map) {
  Tokens out(source.begin(), source.end());
  switch (kind) {
    case TaskKind::Copy:
      break;
    case TaskKind::Reverse:
      std::reverse(out.begin(), out.end());
      break;
    case TaskKind::Sort:
      std::sort(out.begin(), out.end());
      break;
    case TaskKind::ToyTranslation:
      for (auto& t : out) t = map.at(static_cast<std::size_t>(t - kFirstSymbol));
      for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
      break;
    case TaskKind::AnswerChoice: {
      auto m = unique_majority(source);
      if (!m) throw GenerationError("answer-choice source has no unique majority symbol");
      out = {*m};
      break;
    }
  }
  return out;
}

void validate_spec(const TaskSpec& spec) {
  if (spec.vocab_size <= kNumSpecials) throw GenerationError("vocab has no symbols");
  if (spec.min_len == 0 || spec.min_len > spec.max_len)
    throw GenerationError("length range must satisfy 1 <= min_len <= max_len");
  if (spec.kind == TaskKind::AnswerChoice && spec.vocab_size - kNumSpecials < 2)
    throw GenerationError("answer-choice needs at least two symbols");
}

// Number of distinct sources in the length range, saturating at `cap`.
std::size_t distinct_sources(std::size_t symbols, std::size_t min_len, std::size_t max_len,
                             std::size_t cap) {
  std::size_t total = 0;
  for (std::size_t len = min_len; len <= max_len; ++len) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < len && n < cap; ++i) n *= symbols;
    total += std::min(n, cap);
    if (total >= cap) return cap;
  }
  return total;
}

std::string pair_key(const Tokens& src, const Tokens& tgt) {
  std::string key;
  key.reserve(src.size() + tgt.size() + 1);
  for (auto t : src) key.push_back(static_cast<char>(t));
  key.push_back('\x7f');
  for (auto t : tgt) key.push_back(static_cast<char>(t));
  return key;
}

}  // namespace

Tokens apply_task(const TaskSpec& spec, std::span<const Token> source) {
  Tokens map;
  if (spec.kind == TaskKind::ToyTranslation) map = toy_translation_map(spec.vocab_size, spec.seed);
  return apply_with_map(spec.kind, source, map);
}

Dataset generate_dataset(const TaskSpec& spec) {
  validate_spec(spec);
  const std::size_t symbols = spec.vocab_size - kNumSpecials;
  const std::size_t wanted = spec.train_size + spec.valid_size + spec.test_size;
  const std::size_t available = distinct_sources(symbols, spec.min_len, spec.max_len, wanted + 1);
  if (available < wanted)
    throw GenerationError("requested " + std::to_string(wanted) +
                          " examples but only " + std::to_string(available) +
                          " distinct instances exist");

  Tokens map;
  if (spec.kind == TaskKind::ToyTranslation) map = toy_translation_map(spec.vocab_size, spec.seed);
  Rng rng(Rng::derive(spec.seed, {Rng::label("dataset"), Rng::label(task_name(spec.kind))}));
  std::unordered_set<std::string> seen;
  Dataset ds;
  const std::size_t max_attempts = 1000 * (wanted + 10);
  std::size_t attempts = 0;
  auto fill = [&](std::vector<Example>& split, std::size_t count) {
    while (split.size() < count) {
      if (++attempts > max_attempts)
        throw GenerationError("could not find enough distinct instances for task " +
                              std::string(task_name(spec.kind)));
      const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
      Tokens src(len);
      for (auto& t : src) t = kFirstSymbol + static_cast<Token>(rng.below(symbols));
      if (spec.kind == TaskKind::AnswerChoice && !unique_majority(src)) continue;
      Tokens tgt = apply_with_map(spec.kind, src, map);
      if (!seen.insert(pair_key(src, tgt)).second) continue;
      split.push_back({std::move(src), std::move(tgt)});
    }
  };
  fill(ds.train, spec.train_size);
  fill(ds.valid, spec.valid_size);
  fill(ds.test, spec.test_size);
  return ds;
}

void check_example_fits(const Example& ex, std::size_t max_seq_len, std::size_t max_warmup_len) {
  if (ex.source.empty() || ex.target.empty())
    throw ContractError("examples need non-empty source and target");
  const std::size_t room = max_seq_len >= max_warmup_len + 3 ? max_seq_len - max_warmup_len - 3 : 0;
  if (ex.source.size() > room || ex.target.size() > room)
    throw LengthError("example of lengths " + std::to_string(ex.source.size()) + "/" +
                      std::to_string(ex.target.size()) + " exceeds the " + std::to_string(room) +
                      " tokens left by max_seq_len " + std::to_string(max_seq_len) +
                      " and warmup length " + std::to_string(max_warmup_len));
  for (auto t : ex.source)
    if (!is_symbol(t)) throw ContractError("example source contains a reserved token");
  for (auto t : ex.target)
    if (!is_symbol(t)) throw ContractError("example target contains a reserved token");
}

std::string format_example(const Example& ex) {
  std::string line;
  for (std::size_t i = 0; i < ex.source.size(); ++i) {
    if (i) line += ' ';
    line += std::to_string(ex.source[i]);
  }
  line += '\t';
  for (std::size_t i = 0; i < ex.target.size(); ++i) {
    if (i) line += ' ';
    line += std::to_string(ex.target[i]);
  }
  return line;
}

void write_dataset(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write dataset " + path.string());
  for (const auto& ex : examples) os << format_example(ex) << '\n';
  if (!os) throw IoError("failed writing dataset " + path.string());
}

namespace {

Tokens parse_ids(std::string_view field, const std::string& where) {
  Tokens out;
  std::size_t i = 0;
  while (i < field.size()) {
    while (i < field.size() && field[i] == ' ') ++i;
    if (i >= field.size()) break;
    std::size_t j = i;
    while (j < field.size() && field[j] != ' ') ++j;
    Token value = 0;
    auto [ptr, ec] = std::from_chars(field.data() + i, field.data() + j, value);
    if (ec != std::errc() || ptr != field.data() + j || value < 0)
      throw ParseError(where + ": bad token id '" + std::string(field.substr(i, j - i)) + "'");
    out.push_back(value);
    i = j;
  }
  return out;
}

}  // namespace

std::vector<Example> read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read dataset " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(where + ": expected exactly one tab between source and target");
    Example ex;
    ex.source = parse_ids(std::string_view(line).substr(0, tab), where);
    ex.target = parse_ids(std::string_view(line).substr(tab + 1), where);
    if (ex.source.empty() || ex.target.empty()) throw ParseError(where + ": empty sequence");
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace wgen
