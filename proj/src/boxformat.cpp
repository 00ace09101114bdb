#include "rlvr/boxformat.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>

namespace rlvr {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)); }

void skip_spaces(std::string_view text, std::size_t& pos) {
  while (pos < text.size() && is_space(text[pos])) ++pos;
}

bool read_number(std::string_view text, std::size_t& pos, double& out) {
  skip_spaces(text, pos);
  const char* first = text.data() + pos;
  const char* last = text.data() + text.size();
  // from_chars rejects a leading '+'.
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{}) return false;
  pos = static_cast<std::size_t>(ptr - text.data());
  return true;
}

// Parses "[v, v, ...]" starting at text[pos] == '['. On success pos points
// past the closing bracket.
std::optional<std::vector<double>> read_tuple(std::string_view text,
                                              std::size_t& pos) {
  std::size_t cur = pos + 1;
  std::vector<double> values;
  while (true) {
    double v = 0.0;
    if (!read_number(text, cur, v)) return std::nullopt;
    values.push_back(v);
    skip_spaces(text, cur);
    if (cur >= text.size()) return std::nullopt;
    if (text[cur] == ',') {
      ++cur;
      continue;
    }
    if (text[cur] == ']') {
      pos = cur + 1;
      return values;
    }
    return std::nullopt;
  }
}

}  // namespace

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

std::string serialize_boxes(std::span<const BoundingBox> boxes) {
  std::string out;
  std::array<char, 96> buf{};
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (i > 0) out += kBoxJoiner;
    const auto& b = boxes[i];
    const int n = std::snprintf(buf.data(), buf.size(), "[%.2f, %.2f, %.2f, %.2f]",
                                b.x_min, b.y_min, b.x_max, b.y_max);
    out.append(buf.data(), static_cast<std::size_t>(n));
  }
  return out;
}

BoxAnswer parse_boxes(std::string_view text) {
  BoxAnswer answer;
  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string_view::npos) {
    const std::size_t start = pos;
    auto values = read_tuple(text, pos);
    if (!values) {
      pos = start + 1;
      continue;
    }
    if (values->size() != 4) {
      answer.parse_warnings.push_back("tuple at offset " + std::to_string(start) +
                                      " has " + std::to_string(values->size()) +
                                      " values, expected 4");
      continue;
    }
    const BoundingBox box{(*values)[0], (*values)[1], (*values)[2], (*values)[3]};
    if (!is_valid(box)) {
      answer.parse_warnings.push_back("invalid box at offset " +
                                      std::to_string(start) + " dropped");
      continue;
    }
    answer.boxes.push_back(box);
  }
  return answer;
}

ModelResponse extract_final_answer(std::string_view raw, bool is_thinking) {
  ModelResponse resp;
  resp.raw_text = std::string(raw);
  resp.is_thinking = is_thinking;

  std::size_t tokens = 0;
  bool in_token = false;
  for (char c : raw) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++tokens;
    }
  }
  resp.token_count = tokens;

  if (!is_thinking) {
    resp.final_answer = std::string(raw);
    return resp;
  }
  const std::size_t at = raw.rfind(kThinkClose);
  if (at == std::string_view::npos) {
    resp.thinking = std::string(raw);
    return resp;
  }
  resp.thinking = std::string(raw.substr(0, at));
  resp.final_answer = std::string(trim(raw.substr(at + kThinkClose.size())));
  return resp;
}

}  // namespace rlvr
