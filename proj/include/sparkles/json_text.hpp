#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace sparkles {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

namespace json_text {

/// Parses strict JSON, falling back to the Python-literal dialect that
/// LLMs (and published samples) often emit: single-quoted strings, `\'`
/// escapes, True/False/None, trailing commas, and arrays or objects left
/// unclosed at the end of input. Inside a single-quoted
/// string an unescaped `'` only terminates the string when the next
/// non-blank character is one of `, : ] }` or the end of input, so
/// apostrophes such as "Boomer's" survive.
///
/// Throws SyntaxError when neither dialect parses.
Json parse_lenient(std::string_view text);

/// Strict-dialect parse with the toolkit's error type.
Json parse_strict(std::string_view text);

/// JSON string literal for `s` (quotes included).
std::string quote(std::string_view s);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::uint64_t fnv1a(std::string_view bytes);

/// Number of Unicode code points in a UTF-8 string.
std::size_t utf8_length(std::string_view s);

}  // namespace json_text
}  // namespace sparkles
