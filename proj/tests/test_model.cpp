#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "wgen/checkpoint.hpp"
#include "wgen/error.hpp"
#include "wgen/model.hpp"

using namespace wgen;

namespace {

ModelConfig tiny(Arch arch, std::size_t vocab = 8) {
  ModelConfig c;
  c.arch = arch;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers_encoder = arch == Arch::EncoderDecoder ? 1 : 0;
  c.n_layers_decoder = 2;
  c.d_ff = 16;
  c.max_seq_len = 16;
  return c;
}

// Initial params are nearly symmetric; perturb them so tests see real structure.
template <class T>
Parameters<T> noisy(const ModelConfig& c, std::uint64_t seed) {
  auto p = init_model<T>(c, seed);
  Rng rng(seed + 1);
  for (auto& t : p.tensors)
    for (auto& v : t.data()) v += static_cast<T>(0.5 * (2 * rng.uniform() - 1));
  return p;
}

double log_softmax_at(const Tensor<double>& logits, std::size_t row,
                      std::initializer_list<Token> support, Token target) {
  double m = -1e300;
  for (auto t : support) m = std::max(m, logits(row, static_cast<std::size_t>(t)));
  double s = 0;
  for (auto t : support) s += std::exp(logits(row, static_cast<std::size_t>(t)) - m);
  return logits(row, static_cast<std::size_t>(target)) - m - std::log(s);
}

Tensor<double> memory_for(const Parameters<double>& p, const ModelConfig& c, const Tokens& src) {
  return c.arch == Arch::EncoderDecoder ? encode(p, c, src) : Tensor<double>();
}

class BothArchs : public ::testing::TestWithParam<Arch> {};

}  // namespace

TEST(Config, ValidationAndText) {
  auto c = tiny(Arch::DecoderOnly);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  auto bad = c;
  bad.n_heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.vocab_size = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(parse_arch("rnn"), ConfigError);
}

TEST(Init, DeterministicAndLaidOut) {
  const auto c = tiny(Arch::EncoderDecoder);
  const auto a = init_model<float>(c, 3), b = init_model<float>(c, 3), d = init_model<float>(c, 4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, d);
  EXPECT_NO_THROW(check_parameters(c, a));
  EXPECT_THROW(check_parameters(tiny(Arch::DecoderOnly), a), ContractError);
  const ParamLayout layout(c);
  EXPECT_EQ(a.names, layout.names);
  for (std::size_t i = 0; i < a.tensors.size(); ++i) EXPECT_EQ(a.tensors[i].shape(), layout.shapes[i]);
}

TEST(Support, ExcludesPadBosSep) {
  const auto s = generation_support(7);
  ASSERT_EQ(s.size(), 7u);
  EXPECT_EQ(s[kPad], 0);
  EXPECT_EQ(s[kBos], 0);
  EXPECT_EQ(s[kSep], 0);
  EXPECT_EQ(s[kEos], 1);
  for (Token t = kFirstSymbol; t < 7; ++t) EXPECT_EQ(s[t], 1);
}

TEST_P(BothArchs, LogitShapes) {
  const auto c = tiny(GetParam());
  const auto p = noisy<double>(c, 1);
  const Tokens src = {4, 5, 6}, ctx = {1, 4, 5};
  const auto mem = memory_for(p, c, src);
  const auto* m = c.arch == Arch::EncoderDecoder ? &mem : nullptr;
  const Tokens dctx = c.arch == Arch::EncoderDecoder ? ctx : Tokens{4, 5, 6, 7};
  const auto lg = next_token_logits(p, c, m, src, dctx, src.size());
  EXPECT_EQ(lg.shape(), (Shape{dctx.size(), c.vocab_size}));
  EXPECT_TRUE(lg.all_finite());
  if (c.arch == Arch::EncoderDecoder) EXPECT_EQ(mem.shape(), (Shape{3, c.d_model}));
}

TEST_P(BothArchs, Causality) {
  const auto c = tiny(GetParam());
  const auto p = noisy<double>(c, 2);
  const Tokens src = {4, 6};
  const auto mem = memory_for(p, c, src);
  const auto* m = c.arch == Arch::EncoderDecoder ? &mem : nullptr;
  Tokens ctx = c.arch == Arch::EncoderDecoder ? Tokens{1, 5, 7, 3, 4} : Tokens{4, 6, 5, 7, 3, 4};
  const auto a = next_token_logits(p, c, m, src, ctx, src.size());
  ctx.back() = 7;
  ctx[ctx.size() - 2] = 6;
  const auto b = next_token_logits(p, c, m, src, ctx, src.size());
  for (std::size_t r = 0; r + 2 < ctx.size(); ++r)
    for (std::size_t j = 0; j < c.vocab_size; ++j) EXPECT_EQ(a(r, j), b(r, j)) << r;
  bool changed = false;
  for (std::size_t j = 0; j < c.vocab_size; ++j) changed |= a(ctx.size() - 1, j) != b(ctx.size() - 1, j);
  EXPECT_TRUE(changed);
}

TEST_P(BothArchs, TokenChecks) {
  const auto c = tiny(GetParam());
  const auto p = init_model<double>(c, 2);
  const Tokens src = {4, 5};
  const auto mem = memory_for(p, c, src);
  const auto* m = c.arch == Arch::EncoderDecoder ? &mem : nullptr;
  const Tokens bad = {1, 99};
  EXPECT_THROW(next_token_logits(p, c, m, src, bad, 2), IndexError);
  const Tokens too_long(20, 4);
  EXPECT_THROW(next_token_logits(p, c, m, src, too_long, 2), LengthError);
  const Tokens y = {4, kEos};
  const Tokens two_seps = {4, kSep, kSep};
  EXPECT_THROW(conditional_target_nll(p, c, src, two_seps, y), ContractError);
  const Tokens no_eos = {4};
  const Tokens sep = {kSep};
  EXPECT_THROW(conditional_target_nll(p, c, src, sep, no_eos), ContractError);
  const Tokens long_warm = {4, 4, 4};
  EXPECT_THROW(sequence_log_prob(p, c, src, long_warm, 2), ContractError);
  const Tokens reserved = {kBos};
  EXPECT_THROW(sequence_log_prob(p, c, src, reserved, 2), ContractError);
}

TEST(EncoderDecoder, PaddedSourcePositionsAreIgnored) {
  const auto c = tiny(Arch::EncoderDecoder);
  const auto p = noisy<double>(c, 5);
  const Tokens src = {4, 5, 6}, padded = {4, 5, 6, kPad, kPad};
  const Tokens ctx = {1, 7, 3, 4};
  const auto m1 = encode(p, c, src);
  const auto m2 = encode(p, c, padded);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < c.d_model; ++j) EXPECT_NEAR(m1(r, j), m2(r, j), 1e-12);
  const auto a = next_token_logits(p, c, &m1, src, ctx);
  const auto b = next_token_logits(p, c, &m2, padded, ctx);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST_P(BothArchs, EmptyWarmupMatchesPlainConditioning) {
  const auto c = tiny(GetParam());
  const auto p = noisy<double>(c, 6);
  const Tokens src = {5, 4, 7}, y = {7, 4, 5, kEos}, sep = {kSep};
  Graph<double> g(false);
  Forward<double> f(g, p, c);
  Memory<double> mem;
  const Memory<double>* mp = nullptr;
  if (c.arch == Arch::EncoderDecoder) {
    mem = f.encode(src);
    mp = &mem;
  }
  const auto terms = f.warmup_terms(mp, src, {}, 0, y);
  EXPECT_EQ(terms.warmup_log_prob.value().item(), 0.0);
  EXPECT_EQ(terms.target_nll.value().item(), conditional_target_nll(p, c, src, sep, y));
  EXPECT_EQ(sequence_log_prob(p, c, src, {}, 0), 0.0);
}

TEST_P(BothArchs, WarmupLogProbClosedFormTwoSymbols) {
  // Two symbols {4, 5}, K = 1: the warmup is [], [4] or [5]. The empty one
  // pays for EOS at the first step; a length-K warmup stops without EOS.
  const auto c = tiny(GetParam(), 6);
  const auto p = noisy<double>(c, 7);
  const Tokens src = {4, 5, 5};
  const auto mem = memory_for(p, c, src);
  const auto* m = c.arch == Arch::EncoderDecoder ? &mem : nullptr;
  const auto ctx = warmup_context(c.arch, src, {});
  const auto lg = next_token_logits(p, c, m, src, ctx, src.size());
  const std::size_t row = ctx.size() - 1;
  const double lp_empty = log_softmax_at(lg, row, {kEos, 4, 5}, kEos);
  const double lp_a = log_softmax_at(lg, row, {kEos, 4, 5}, 4);
  const double lp_b = log_softmax_at(lg, row, {kEos, 4, 5}, 5);
  EXPECT_NEAR(sequence_log_prob(p, c, src, {}, 1), lp_empty, 1e-12);
  const Tokens a = {4}, b = {5};
  EXPECT_NEAR(sequence_log_prob(p, c, src, a, 1), lp_a, 1e-12);
  EXPECT_NEAR(sequence_log_prob(p, c, src, b, 1), lp_b, 1e-12);
  EXPECT_NEAR(std::exp(lp_empty) + std::exp(lp_a) + std::exp(lp_b), 1.0, 1e-12);
}

TEST_P(BothArchs, WarmupTermsAgreeWithSeparateCalls) {
  const auto c = tiny(GetParam());
  const auto p = noisy<double>(c, 8);
  const Tokens src = {6, 4}, warm = {5, 7}, y = {4, 6, kEos};
  Graph<double> g(false);
  Forward<double> f(g, p, c);
  Memory<double> mem;
  const Memory<double>* mp = nullptr;
  if (c.arch == Arch::EncoderDecoder) {
    mem = f.encode(src);
    mp = &mem;
  }
  const auto terms = f.warmup_terms(mp, src, warm, 3, y);
  Tokens ws = warm;
  ws.push_back(kSep);
  EXPECT_NEAR(terms.target_nll.value().item(), conditional_target_nll(p, c, src, ws, y), 1e-12);
  EXPECT_NEAR(terms.warmup_log_prob.value().item(), sequence_log_prob(p, c, src, warm, 3), 1e-12);
}

TEST_P(BothArchs, FloatAndDoubleAgree) {
  const auto c = tiny(GetParam());
  const auto pd = noisy<double>(c, 9);
  const auto pf = pd.cast<float>();
  const Tokens src = {4, 7, 6}, ws = {5, kSep}, y = {6, 7, 4, kEos};
  EXPECT_NEAR(conditional_target_nll(pf, c, src, ws, y), conditional_target_nll(pd, c, src, ws, y), 1e-4);
}

TEST_P(BothArchs, ParametersOutsideThePathKeepZeroGradient) {
  const auto c = tiny(GetParam());
  const auto p = noisy<double>(c, 10);
  const Tokens src = {4, 5}, ws = {kSep}, y = {5, kEos};
  Graph<double> g;
  Forward<double> f(g, p, c);
  Memory<double> mem;
  const Memory<double>* mp = nullptr;
  if (c.arch == Arch::EncoderDecoder) {
    mem = f.encode(src);
    mp = &mem;
  }
  auto loss = f.target_nll(mp, src, ws, y);
  g.backward(loss);
  // Rows of unused symbols in the token embedding get nothing.
  const auto& bound = f.bound();
  const ParamLayout layout(c);
  ASSERT_TRUE(bound[layout.tok_emb]);
  const auto& ge = bound[layout.tok_emb]->grad();
  for (std::size_t j = 0; j < c.d_model; ++j) EXPECT_EQ(ge(7, j), 0.0);
}

INSTANTIATE_TEST_SUITE_P(Arch, BothArchs,
                         ::testing::Values(Arch::EncoderDecoder, Arch::DecoderOnly),
                         [](const auto& info) {
                           return info.param == Arch::EncoderDecoder ? std::string("EncDec")
                                                                     : std::string("DecOnly");
                         });

class CheckpointFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = std::filesystem::temp_directory_path() /
          ("wgen_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir);
  }
  void TearDown() override { std::filesystem::remove_all(dir); }
  std::filesystem::path dir;
};

TEST_F(CheckpointFiles, RoundTripIsBitExact) {
  for (auto arch : {Arch::EncoderDecoder, Arch::DecoderOnly}) {
    const auto c = tiny(arch);
    const auto p = noisy<float>(c, 11);
    save_checkpoint(dir / "a.wgen", c, p);
    const auto back = load_checkpoint(dir / "a.wgen");
    EXPECT_EQ(back.config, c);
    EXPECT_EQ(back.params, p);
    const Tokens src = {4, 5}, ws = {kSep}, y = {6, kEos};
    EXPECT_EQ(conditional_target_nll(back.params, back.config, src, ws, y),
              conditional_target_nll(p, c, src, ws, y));
  }
}

TEST_F(CheckpointFiles, TruncationAndCorruption) {
  const auto c = tiny(Arch::EncoderDecoder);
  const auto bytes = serialize_checkpoint(c, init_model<float>(c, 1));
  EXPECT_EQ(bytes.substr(0, 5), "WGEN1");
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{12}, bytes.size() / 2,
                          bytes.size() - 1}) {
    try {
      parse_checkpoint(std::string_view(bytes).substr(0, cut));
      ADD_FAILURE() << "cut at " << cut << " accepted";
    } catch (const LoadError& e) {
      if (cut > 5) EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
  }
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), LoadError);
  EXPECT_THROW(load_checkpoint(dir / "missing.wgen"), Error);
}
