#pragma once

// Pulls a JSON value out of raw model text: direct parse, then code-fence
// stripping, then the first balanced {...} or [...] span that parses.

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace mark {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::optional<Json> try_parse(std::string_view text) {
  Json out = Json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
  if (out.is_discarded()) return std::nullopt;
  return out;
}

/// Returns the end (one past) of the balanced span opening at `open`, or npos.
inline std::size_t balanced_end(std::string_view text, std::size_t open) {
  const char opener = text[open];
  const char closer = opener == '{' ? '}' : ']';
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      --depth;
      if (depth == 0) return c == closer ? i + 1 : std::string_view::npos;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Strips the first ``` fenced block (optionally tagged, e.g. ```json).
inline std::optional<std::string_view> fenced_block(std::string_view text) {
  const auto start = text.find("```");
  if (start == std::string_view::npos) return std::nullopt;
  auto body_start = text.find('\n', start + 3);
  if (body_start == std::string_view::npos) return std::nullopt;
  ++body_start;
  const auto end = text.find("```", body_start);
  if (end == std::string_view::npos) return text.substr(body_start);
  return text.substr(body_start, end - body_start);
}

inline std::optional<Json> extract_json(std::string_view raw) {
  const std::string_view text = detail::trim(raw);
  if (text.empty()) return std::nullopt;

  if (auto v = detail::try_parse(text)) return v;

  if (auto fenced = fenced_block(text)) {
    if (auto v = detail::try_parse(detail::trim(*fenced))) return v;
  }

  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' && text[i] != '[') continue;
    const auto end = detail::balanced_end(text, i);
    if (end == std::string_view::npos) continue;
    if (auto v = detail::try_parse(text.substr(i, end - i))) return v;
  }
  return std::nullopt;
}

}  // namespace mark
