#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "wgen/error.hpp"
#include "wgen/tasks.hpp"
#include "wgen/vocab.hpp"

using namespace wgen;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("wgen_tasks_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TaskSpec spec_for(TaskKind kind, std::uint64_t seed = 1) {
  TaskSpec s;
  s.kind = kind;
  s.vocab_size = 10;
  s.min_len = 2;
  s.max_len = 6;
  s.train_size = 200;
  s.valid_size = 30;
  s.test_size = 30;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Vocab, Inventory) {
  Vocab v(8);
  EXPECT_EQ(v.size(), 8u);
  EXPECT_EQ(v.symbol_count(), 4u);
  EXPECT_EQ(v.name(kSep), "||");
  EXPECT_EQ(v.name(4), "a");
  EXPECT_EQ(v.id("d"), 7);
  EXPECT_THROW(v.name(8), IndexError);
  EXPECT_THROW(v.id("zz"), IndexError);
  EXPECT_THROW(Vocab(4), ConfigError);
  EXPECT_EQ(symbol_name(25), "z");
  EXPECT_EQ(symbol_name(26), "aa");
  EXPECT_EQ(symbol_name(27), "ab");
}

TEST(Vocab, RenderParseAndManifest) {
  Vocab v(40);
  const Tokens t = {4, 5, kSep, 30, 31, kEos};
  EXPECT_EQ(v.parse(v.render(t)), t);
  EXPECT_EQ(v.render(std::vector<Token>{4, kSep, 5}), "a || b");
  auto dir = scratch("vocab");
  v.write_manifest(dir / "vocab.tsv");
  auto back = Vocab::read_manifest(dir / "vocab.tsv");
  EXPECT_EQ(back.size(), v.size());
  EXPECT_EQ(back.render(t), v.render(t));
  std::filesystem::remove_all(dir);
}

TEST(Tasks, HandExamples) {
  TaskSpec s;
  s.vocab_size = 10;
  const Tokens src = {6, 4, 9, 4};
  s.kind = TaskKind::Copy;
  EXPECT_EQ(apply_task(s, src), src);
  s.kind = TaskKind::Reverse;
  EXPECT_EQ(apply_task(s, src), (Tokens{4, 9, 4, 6}));
  s.kind = TaskKind::Sort;
  EXPECT_EQ(apply_task(s, src), (Tokens{4, 4, 6, 9}));
  s.kind = TaskKind::AnswerChoice;
  EXPECT_EQ(apply_task(s, src), (Tokens{4}));
  EXPECT_THROW(apply_task(s, Tokens{4, 5}), GenerationError);
}

TEST(Tasks, ToyTranslationIsPermutationThenPairSwap) {
  TaskSpec s;
  s.kind = TaskKind::ToyTranslation;
  s.vocab_size = 12;
  s.seed = 5;
  const auto map = toy_translation_map(12, 5);
  ASSERT_EQ(map.size(), 8u);
  EXPECT_EQ(std::set<Token>(map.begin(), map.end()).size(), 8u);
  EXPECT_EQ(map, toy_translation_map(12, 5));
  const Tokens src = {4, 5, 6};
  const auto out = apply_task(s, src);
  EXPECT_EQ(out, (Tokens{map[1], map[0], map[2]}));
}

TEST(Tasks, NamesRoundTrip) {
  for (auto k : {TaskKind::Copy, TaskKind::Reverse, TaskKind::Sort, TaskKind::ToyTranslation,
                 TaskKind::AnswerChoice})
    EXPECT_EQ(parse_task_kind(task_name(k)), k);
  EXPECT_THROW(parse_task_kind("shuffle"), ConfigError);
}

TEST(Dataset, DeterministicDisjointAndCorrect) {
  for (auto k : {TaskKind::Copy, TaskKind::Reverse, TaskKind::Sort, TaskKind::ToyTranslation,
                 TaskKind::AnswerChoice}) {
    const auto s = spec_for(k);
    const auto a = generate_dataset(s);
    const auto b = generate_dataset(s);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_EQ(a.train.size(), 200u);
    EXPECT_EQ(a.valid.size(), 30u);
    EXPECT_EQ(a.test.size(), 30u);
    std::set<std::pair<Tokens, Tokens>> seen;
    for (const auto* split : {&a.train, &a.valid, &a.test})
      for (const auto& ex : *split) {
        EXPECT_TRUE(seen.insert({ex.source, ex.target}).second);
        EXPECT_GE(ex.source.size(), 2u);
        EXPECT_LE(ex.source.size(), 6u);
        EXPECT_EQ(apply_task(s, ex.source), ex.target);
        for (auto t : ex.source) EXPECT_TRUE(t >= kFirstSymbol && t < 10);
      }
    EXPECT_NE(generate_dataset(spec_for(k, 2)).train, a.train);
  }
}

TEST(Dataset, TooFewDistinctInstances) {
  TaskSpec s;
  s.vocab_size = 6;  // two symbols
  s.min_len = 1;
  s.max_len = 2;      // 2 + 4 = 6 distinct sources
  s.train_size = 5;
  s.valid_size = 1;
  s.test_size = 0;
  EXPECT_NO_THROW(generate_dataset(s));
  s.test_size = 1;
  EXPECT_THROW(generate_dataset(s), GenerationError);
  s.min_len = 3;
  EXPECT_THROW(generate_dataset(s), GenerationError);
}

TEST(Dataset, FitCheck) {
  const Example ex{{4, 5, 6}, {6, 5, 4}};
  EXPECT_NO_THROW(check_example_fits(ex, 10, 4));
  EXPECT_THROW(check_example_fits(ex, 9, 4), LengthError);
  EXPECT_THROW(check_example_fits(Example{{}, {4}}, 10, 0), ContractError);
  EXPECT_THROW(check_example_fits(Example{{4, kSep}, {4}}, 10, 0), ContractError);
}

TEST(Dataset, FileRoundTripAndParseErrors) {
  auto dir = scratch("io");
  const auto ds = generate_dataset(spec_for(TaskKind::Reverse));
  write_dataset(dir / "train.tsv", ds.train);
  EXPECT_EQ(read_dataset(dir / "train.tsv"), ds.train);
  EXPECT_EQ(format_example(Example{{4, 15}, {15, 4}}), "4 15\t15 4");

  {
    std::ofstream os(dir / "bad.tsv");
    os << "# comment\n4 5\t5 4\n4 x\t5\n";
  }
  try {
    read_dataset(dir / "bad.tsv");
    ADD_FAILURE() << "bad id accepted";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  {
    std::ofstream os(dir / "notab.tsv");
    os << "4 5 5 4\n";
  }
  EXPECT_THROW(read_dataset(dir / "notab.tsv"), ParseError);
  EXPECT_THROW(read_dataset(dir / "absent.tsv"), IoError);
  std::filesystem::remove_all(dir);
}
