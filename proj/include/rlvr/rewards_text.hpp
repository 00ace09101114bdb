#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rlvr/boxformat.hpp"

namespace rlvr {

/// Lowercased whitespace tokens; never contains an empty token.
struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

TokenSequence tokenize(std::string_view text);

/// Joins tokens with single spaces.
std::string detokenize(const TokenSequence& seq);

enum class TextRewardKind {
  gleu,
  rouge_l,
  /// Fraction of hypothesis tokens found anywhere in the reference, without
  /// count clipping. Deliberately gameable; used to probe length hacking.
  unigram_precision,
};

struct TextRewardSpec {
  TextRewardKind kind = TextRewardKind::gleu;
  int max_ngram = 4;
  double missing_answer_penalty = -3.0;
};

/// Throws std::invalid_argument unless max_ngram is in [1, 8].
void validate(const TextRewardSpec& spec);

/// Sentence GLEU: clipped n-gram matches pooled over n = 1..max_ngram,
/// min(matches / hyp n-grams, matches / ref n-grams).
double gleu(const TokenSequence& hyp, const TokenSequence& ref, int max_ngram = 4);

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

/// ROUGE-L F1 from the longest common subsequence.
double rouge_l(const TokenSequence& hyp, const TokenSequence& ref);

double unigram_precision(const TokenSequence& hyp, const TokenSequence& ref);

double text_metric(const TokenSequence& hyp, const TokenSequence& ref,
                   const TextRewardSpec& spec);

/// Missing final answer scores spec.missing_answer_penalty; otherwise the
/// selected metric on the tokenized final answer.
double text_response_reward(const ModelResponse& resp, const TokenSequence& ref,
                            const TextRewardSpec& spec);

}  // namespace rlvr
