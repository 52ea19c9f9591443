#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gec {

using Tokens = std::vector<std::string>;

// Decodes UTF-8 into code points. Throws std::invalid_argument on malformed
// input (overlong forms, surrogates and truncated sequences included).
std::vector<char32_t> decode_utf8(std::string_view text);
std::string encode_utf8(char32_t cp);
bool is_valid_utf8(std::string_view text);

struct SegmentOptions {
  // Keep runs of ASCII letters/digits as one token instead of one per code point.
  bool keep_ascii_words = false;
};

// Splits text into character tokens. Whitespace acts as a delimiter and is
// dropped, so concatenating the result reproduces the input minus delimiters.
Tokens segment_characters(std::string_view text, const SegmentOptions& opts = {});

std::string join(const Tokens& tokens, std::string_view sep = "");
Tokens split_whitespace(std::string_view line);
std::string_view trim(std::string_view s);

}  // namespace gec
