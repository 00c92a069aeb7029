#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wgen/decoding.hpp"
#include "wgen/tasks.hpp"
#include "wgen/vocab.hpp"

namespace wgen {

struct MetricReport {
  double exact_match = 0.0;
  double token_accuracy = 0.0;
  double bleu = 0.0;
  double chrf = 0.0;
  std::optional<double> macro_f1;  // choice tasks only
  std::optional<double> accuracy;  // choice tasks only

  // Looks a metric up by name (exact_match, token_accuracy, bleu, chrf,
  // macro_f1, accuracy).
  double get(std::string_view name) const;
};

bool is_choice_task(TaskKind kind);

// Corpus BLEU over token ids, n-grams up to 4. Unigram precision is unsmoothed;
// orders 2..4 use add-one smoothing. Brevity penalty exp(1 − r/c) when c < r.
// Result in [0, 100].
double corpus_bleu(std::span<const Tokens> candidates, std::span<const Tokens> references);

// ChrF++-style score in [0, 100]: character n-grams (n = 1..6) over the
// concatenated symbol names plus token unigrams, statistics summed over the
// corpus, precision and recall averaged over orders, F-beta with beta = 2.
double corpus_chrf(std::span<const Tokens> candidates, std::span<const Tokens> references,
                   const Vocab& vocab);

// Positional matches over the shorter length divided by the longer length,
// averaged over examples. Two empty sequences count as a full match.
double token_accuracy(std::span<const Tokens> candidates, std::span<const Tokens> references);

// Percentage of distinct warmup tokens that occur anywhere in the reference,
// averaged over pairs with a non-empty warmup.
double overlap_rate(std::span<const std::pair<Tokens, Tokens>> pairs);

// Scores already generated outputs against references.
MetricReport score_outputs(std::span<const Tokens> outputs, std::span<const Tokens> references,
                           TaskKind kind, const Vocab& vocab);

// Runs inference on every example and scores the targets.
template <class T>
MetricReport evaluate(const Parameters<T>& params, const ModelConfig& config,
                      std::span<const Example> examples, TaskKind kind,
                      const InferenceOptions& opts);

}  // namespace wgen
