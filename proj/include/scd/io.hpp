#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace scd {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Hashing

std::uint64_t fnv1a64(std::string_view bytes);

/// 128-bit FNV-1a (offset 0x6c62272e07bb014262b821756295c58d, prime 2^88 + 0x13b)
/// rendered as 32 lowercase hex digits.
std::string fnv1a128_hex(std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Seeded randomness. std::mt19937_64 has a fully specified output sequence;
// the helpers below avoid the implementation-defined std distributions so
// that draws reproduce across standard libraries and languages.

using Rng = std::mt19937_64;

/// Uniform integer in [0, bound) by rejection sampling on the raw 64-bit output.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

/// Uniform double in [0, 1) from the top 53 bits.
double uniform01(Rng& rng);

// ---------------------------------------------------------------------------
// JSON-lines

struct JsonlIssue {
  std::size_t line = 0;
  std::string message;
};

/// Calls `fn(line_number, value)` for every non-blank line. Parse failures
/// and exceptions thrown by `fn` are collected in the returned list when
/// `strict` is false; with `strict` the first one is rethrown as a
/// ValidationError naming the file and line.
std::vector<JsonlIssue> for_each_jsonl(const std::filesystem::path& path, bool strict,
                                       const std::function<void(std::size_t, const json&)>& fn);

std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Opens for writing, creating parent directories. Throws RuntimeFailure.
std::ofstream open_output(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Fixed-point with `decimals` places, "-0.000" normalized to "0.000".
std::string format_fixed(double v, int decimals);

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw std::out_of_range(std::string("missing field \"") + key + "\"");
  return j.at(key).get<T>();
}

}  // namespace scd
