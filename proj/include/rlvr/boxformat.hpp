#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlvr/geometry.hpp"

namespace rlvr {

/// Delimiter closing the reasoning block of a thinking model.
inline constexpr std::string_view kThinkClose = "</think>";

/// Joiner between serialized boxes.
inline constexpr std::string_view kBoxJoiner = " and ";

struct ModelResponse {
  std::string raw_text;
  std::optional<std::string> thinking;
  std::optional<std::string> final_answer;
  std::size_t token_count = 0;
  bool is_thinking = false;
};

struct BoxAnswer {
  std::vector<BoundingBox> boxes;
  std::vector<std::string> parse_warnings;
};

/// Renders boxes as "[0.00, 0.00, 0.50, 0.50] and [...]".
std::string serialize_boxes(std::span<const BoundingBox> boxes);

/// Extracts every bracketed 4-tuple of reals from free text.
///
/// Tuples that violate the box invariants are dropped and reported in
/// parse_warnings. Never throws; text without tuples yields no boxes.
BoxAnswer parse_boxes(std::string_view text);

/// Splits a raw generation into reasoning and final answer.
///
/// Thinking responses split on the last kThinkClose; without one the final
/// answer is absent. Non-thinking responses use the whole text as the
/// answer. token_count is the whitespace-token count of raw.
ModelResponse extract_final_answer(std::string_view raw, bool is_thinking);

/// Strips leading and trailing ASCII whitespace.
std::string_view trim(std::string_view s);

}  // namespace rlvr
