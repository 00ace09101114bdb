#include "rlvr/rewards_text.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>
#include <unordered_set>

namespace rlvr {
namespace {

using NgramCounts = std::map<std::vector<std::string_view>, int>;

NgramCounts count_ngrams(const TokenSequence& seq, std::size_t n) {
  NgramCounts counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    std::vector<std::string_view> gram(seq.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                       seq.tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[gram];
  }
  return counts;
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) seq.tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) seq.tokens.push_back(std::move(cur));
  return seq;
}

std::string detokenize(const TokenSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += seq.tokens[i];
  }
  return out;
}

void validate(const TextRewardSpec& spec) {
  if (spec.max_ngram < 1 || spec.max_ngram > 8) {
    throw std::invalid_argument("max_ngram must be in [1, 8]");
  }
}

double gleu(const TokenSequence& hyp, const TokenSequence& ref, int max_ngram) {
  if (max_ngram < 1) throw std::invalid_argument("gleu: max_ngram must be >= 1");
  if (hyp.empty() && ref.empty()) return 1.0;
  if (hyp.empty() || ref.empty()) return 0.0;

  std::size_t matches = 0, hyp_total = 0, ref_total = 0;
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_ngram); ++n) {
    if (hyp.size() >= n) hyp_total += hyp.size() - n + 1;
    if (ref.size() >= n) ref_total += ref.size() - n + 1;
    if (hyp.size() < n || ref.size() < n) continue;
    const NgramCounts h = count_ngrams(hyp, n);
    const NgramCounts r = count_ngrams(ref, n);
    for (const auto& [gram, count] : h) {
      auto it = r.find(gram);
      if (it != r.end()) matches += static_cast<std::size_t>(std::min(count, it->second));
    }
  }
  const double precision = static_cast<double>(matches) / static_cast<double>(hyp_total);
  const double recall = static_cast<double>(matches) / static_cast<double>(ref_total);
  return std::min(precision, recall);
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  // Rolling single-row DP.
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a.tokens[i - 1] == b.tokens[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

double rouge_l(const TokenSequence& hyp, const TokenSequence& ref) {
  if (hyp.empty() && ref.empty()) return 1.0;
  if (hyp.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(hyp, ref));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hyp.size());
  const double r = lcs / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double unigram_precision(const TokenSequence& hyp, const TokenSequence& ref) {
  if (hyp.empty()) return ref.empty() ? 1.0 : 0.0;
  const std::unordered_set<std::string> vocab(ref.tokens.begin(), ref.tokens.end());
  const auto hits = std::count_if(hyp.tokens.begin(), hyp.tokens.end(),
                                  [&](const std::string& t) { return vocab.contains(t); });
  return static_cast<double>(hits) / static_cast<double>(hyp.size());
}

double text_metric(const TokenSequence& hyp, const TokenSequence& ref,
                   const TextRewardSpec& spec) {
  switch (spec.kind) {
    case TextRewardKind::gleu:
      return gleu(hyp, ref, spec.max_ngram);
    case TextRewardKind::rouge_l:
      return rouge_l(hyp, ref);
    case TextRewardKind::unigram_precision:
      return unigram_precision(hyp, ref);
  }
  return 0.0;
}

double text_response_reward(const ModelResponse& resp, const TokenSequence& ref,
                            const TextRewardSpec& spec) {
  if (!resp.final_answer) return spec.missing_answer_penalty;
  return text_metric(tokenize(*resp.final_answer), ref, spec);
}

}  // namespace rlvr
