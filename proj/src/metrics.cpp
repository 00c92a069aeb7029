#include "wgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "wgen/error.hpp"

namespace wgen {

double MetricReport::get(std::string_view name) const {
  if (name == "exact_match") return exact_match;
  if (name == "token_accuracy") return token_accuracy;
  if (name == "bleu") return bleu;
  if (name == "chrf") return chrf;
  if (name == "macro_f1" || name == "accuracy") {
    const auto& v = name == "macro_f1" ? macro_f1 : accuracy;
    if (!v) throw ConfigError("metric '" + std::string(name) + "' exists only for choice tasks");
    return *v;
  }
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

bool is_choice_task(TaskKind kind) { return kind == TaskKind::AnswerChoice; }

namespace {

void check_corpus(std::size_t a, std::size_t b) {
  if (a != b) throw ContractError("candidate and reference counts differ");
  if (a == 0) throw ContractError("metrics need at least one example");
}

template <class Seq>
std::map<Seq, std::size_t> ngram_counts(const std::vector<typename Seq::value_type>& seq,
                                        std::size_t n) {
  std::map<Seq, std::size_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    ++counts[Seq(seq.begin() + static_cast<std::ptrdiff_t>(i),
                 seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

template <class Seq>
std::size_t clipped_matches(const std::map<Seq, std::size_t>& cand,
                            const std::map<Seq, std::size_t>& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

std::size_t total_count(std::size_t len, std::size_t n) { return len >= n ? len - n + 1 : 0; }

}  // namespace

double corpus_bleu(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  check_corpus(candidates.size(), references.size());
  constexpr std::size_t kMaxOrder = 4;
  std::size_t matches[kMaxOrder + 1] = {}, totals[kMaxOrder + 1] = {};
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += candidates[i].size();
    ref_len += references[i].size();
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      auto c = ngram_counts<Tokens>(candidates[i], n);
      auto r = ngram_counts<Tokens>(references[i], n);
      matches[n] += clipped_matches(c, r);
      totals[n] += total_count(candidates[i].size(), n);
    }
  }
  if (cand_len == 0 || matches[1] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    const double p = n == 1 ? static_cast<double>(matches[n]) / static_cast<double>(totals[n])
                            : (static_cast<double>(matches[n]) + 1.0) /
                                  (static_cast<double>(totals[n]) + 1.0);
    log_sum += std::log(p);
  }
  const double bp = cand_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                        : 1.0;
  return 100.0 * bp * std::exp(log_sum / kMaxOrder);
}

double corpus_chrf(std::span<const Tokens> candidates, std::span<const Tokens> references,
                   const Vocab& vocab) {
  check_corpus(candidates.size(), references.size());
  constexpr std::size_t kCharOrder = 6;
  constexpr double kBeta = 2.0;
  // Orders 0..5: character n-grams of length 1..6; order 6: token unigrams.
  std::size_t match[kCharOrder + 1] = {}, hyp[kCharOrder + 1] = {}, ref[kCharOrder + 1] = {};
  auto chars = [&](const Tokens& seq) {
    std::string s;
    for (auto t : seq) s += vocab.name(t);
    return std::vector<char>(s.begin(), s.end());
  };
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto hc = chars(candidates[i]);
    const auto rc = chars(references[i]);
    for (std::size_t n = 1; n <= kCharOrder; ++n) {
      auto h = ngram_counts<std::vector<char>>(hc, n);
      auto r = ngram_counts<std::vector<char>>(rc, n);
      match[n - 1] += clipped_matches(h, r);
      hyp[n - 1] += total_count(hc.size(), n);
      ref[n - 1] += total_count(rc.size(), n);
    }
    auto h = ngram_counts<Tokens>(candidates[i], 1);
    auto r = ngram_counts<Tokens>(references[i], 1);
    match[kCharOrder] += clipped_matches(h, r);
    hyp[kCharOrder] += candidates[i].size();
    ref[kCharOrder] += references[i].size();
  }
  double prec = 0.0, rec = 0.0;
  std::size_t orders = 0;
  for (std::size_t o = 0; o <= kCharOrder; ++o) {
    if (hyp[o] == 0 && ref[o] == 0) continue;
    prec += hyp[o] ? static_cast<double>(match[o]) / static_cast<double>(hyp[o]) : 0.0;
    rec += ref[o] ? static_cast<double>(match[o]) / static_cast<double>(ref[o]) : 0.0;
    ++orders;
  }
  if (orders == 0) return 100.0;  // both sides empty everywhere
  prec /= static_cast<double>(orders);
  rec /= static_cast<double>(orders);
  const double b2 = kBeta * kBeta;
  const double denom = b2 * prec + rec;
  return denom > 0.0 ? 100.0 * (1.0 + b2) * prec * rec / denom : 0.0;
}

double token_accuracy(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  check_corpus(candidates.size(), references.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& r = references[i];
    const std::size_t longest = std::max(c.size(), r.size());
    if (longest == 0) {
      total += 1.0;
      continue;
    }
    std::size_t hits = 0;
    for (std::size_t j = 0; j < std::min(c.size(), r.size()); ++j) hits += c[j] == r[j];
    total += static_cast<double>(hits) / static_cast<double>(longest);
  }
  return total / static_cast<double>(candidates.size());
}

double overlap_rate(std::span<const std::pair<Tokens, Tokens>> pairs) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& [warmup, reference] : pairs) {
    if (warmup.empty()) continue;
    const std::set<Token> distinct(warmup.begin(), warmup.end());
    const std::set<Token> in_ref(reference.begin(), reference.end());
    std::size_t hits = 0;
    for (auto t : distinct) hits += in_ref.count(t);
    total += static_cast<double>(hits) / static_cast<double>(distinct.size());
    ++counted;
  }
  if (counted == 0) throw ContractError("overlap_rate needs at least one non-empty warmup");
  return 100.0 * total / static_cast<double>(counted);
}

MetricReport score_outputs(std::span<const Tokens> outputs, std::span<const Tokens> references,
                           TaskKind kind, const Vocab& vocab) {
  check_corpus(outputs.size(), references.size());
  MetricReport r;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) exact += outputs[i] == references[i];
  r.exact_match = static_cast<double>(exact) / static_cast<double>(outputs.size());
  r.token_accuracy = token_accuracy(outputs, references);
  r.bleu = corpus_bleu(outputs, references);
  r.chrf = corpus_chrf(outputs, references, vocab);
  if (is_choice_task(kind)) {
    // A prediction is the label token when the output is exactly one token;
    // anything else is a miss that belongs to no class.
    std::set<Token> classes;
    for (const auto& ref : references) classes.insert(ref.front());
    double f1_sum = 0.0;
    for (auto cls : classes) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        const bool pred = outputs[i].size() == 1 && outputs[i][0] == cls;
        const bool gold = references[i].front() == cls;
        tp += pred && gold;
        fp += pred && !gold;
        fn += !pred && gold;
      }
      const double denom = static_cast<double>(2 * tp + fp + fn);
      f1_sum += denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    r.macro_f1 = f1_sum / static_cast<double>(classes.size());
    r.accuracy = r.exact_match;
  }
  return r;
}

template <class T>
MetricReport evaluate(const Parameters<T>& params, const ModelConfig& config,
                      std::span<const Example> examples, TaskKind kind,
                      const InferenceOptions& opts) {
  if (examples.empty()) throw ContractError("evaluate needs at least one example");
  std::vector<Tokens> outputs, references;
  outputs.reserve(examples.size());
  for (const auto& ex : examples) {
    outputs.push_back(inference_generate(params, config, ex.source, opts).target);
    references.push_back(ex.target);
  }
  return score_outputs(outputs, references, kind, Vocab(config.vocab_size));
}

template MetricReport evaluate<float>(const Parameters<float>&, const ModelConfig&,
                                      std::span<const Example>, TaskKind, const InferenceOptions&);
template MetricReport evaluate<double>(const Parameters<double>&, const ModelConfig&,
                                       std::span<const Example>, TaskKind,
                                       const InferenceOptions&);

}  // namespace wgen
