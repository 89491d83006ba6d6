#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace scd::text {

/// Decodes UTF-8 into Unicode scalar values. Invalid bytes decode to U+FFFD,
/// one replacement per offending byte.
std::u32string decode_utf8(std::string_view s);

void append_utf8(std::u32string_view cps, std::string& out);

/// Word tokenization shared by Jaccard, TF-IDF, BM25 and featurization:
/// ASCII letters are lowercased; any run of characters that are neither
/// ASCII alphanumerics nor non-ASCII code points separates tokens.
std::vector<std::string> tokenize(std::string_view s);

/// Lowercases ASCII letters, leaves other bytes untouched.
std::string ascii_lower(std::string_view s);

bool is_space(char32_t c);

}  // namespace scd::text
