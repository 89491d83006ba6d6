#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scd/io.hpp"

namespace scd::similarity {

struct EmbeddingVector {
  std::string id;
  std::vector<double> values;
  bool zero = false;  // set by providers that cannot embed the input (e.g. empty text)

  [[nodiscard]] std::size_t dim() const { return values.size(); }
};

/// S_C(a, b) = a.b / (|a| |b|). Throws std::invalid_argument on dimension
/// mismatch or a zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// |X n Y| / |X u Y| over lowercased word sets; 1 when both sets are empty.
double jaccard_index(std::string_view s1, std::string_view s2);

enum class EditUnit { character, token };

std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::span<const std::string> a, std::span<const std::string> b);

/// levenshtein / max(|s1|, |s2|) over code points (default) or word tokens.
/// Both empty gives 0.
double normalized_edit_distance(std::string_view s1, std::string_view s2,
                                EditUnit unit = EditUnit::character);

struct MatchCandidate {
  std::string s1;
  std::string s2;
  std::optional<double> score;
  std::optional<std::string> label;
};

struct MatchRule {
  enum class Kind { score_above, label_equals };
  Kind kind = Kind::score_above;
  double threshold = 3.0;
  std::string label;

  static MatchRule score_above(double t) { return {Kind::score_above, t, {}}; }
  static MatchRule label_equals(std::string l) { return {Kind::label_equals, 0.0, std::move(l)}; }

  [[nodiscard]] bool matches(const MatchCandidate& c) const;
};

/// Mean normalized edit distance over the candidates accepted by `rule`.
/// Throws std::invalid_argument when nothing survives the filter.
double avg_matching_edit_distance(std::span<const MatchCandidate> pairs, const MatchRule& rule,
                                  EditUnit unit = EditUnit::character);

// ---------------------------------------------------------------------------
// Embedding providers

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Providers keyed by id use `id`; text-based providers use `text`.
  [[nodiscard]] virtual EmbeddingVector embed(std::string_view id, std::string_view text) const = 0;
  [[nodiscard]] virtual std::size_t dim() const = 0;
};

struct TfidfModel {
  std::map<std::string, double> idf;  // ordered for deterministic serialization
  std::size_t n_docs = 0;
  std::size_t hash_dim = 1u << 14;

  /// idf of a token never seen while fitting (df = 0).
  [[nodiscard]] double unseen_idf() const;
  [[nodiscard]] double idf_of(const std::string& token) const;

  [[nodiscard]] json to_json() const;
  static TfidfModel from_json(const json& j);
};

/// Smoothed idf ln((1+N)/(1+df)) + 1 over whitespace-insensitive word tokens.
/// `hash_dim` must be a power of two. Throws std::invalid_argument on an
/// empty corpus.
TfidfModel fit_tfidf(std::span<const std::string> corpus, std::size_t hash_dim = 1u << 14);

/// Sublinear tf (1 + ln tf) times idf, signed-hashed into hash_dim buckets,
/// L2-normalized. Inputs without tokens yield a zero vector with `zero` set.
EmbeddingVector embed_tfidf(const TfidfModel& model, std::string_view text, std::string id = {});

class TfidfProvider final : public EmbeddingProvider {
 public:
  explicit TfidfProvider(TfidfModel model) : model_(std::move(model)) {}
  [[nodiscard]] EmbeddingVector embed(std::string_view id, std::string_view text) const override {
    return embed_tfidf(model_, text, std::string(id));
  }
  [[nodiscard]] std::size_t dim() const override { return model_.hash_dim; }
  [[nodiscard]] const TfidfModel& model() const { return model_; }

 private:
  TfidfModel model_;
};

// ---------------------------------------------------------------------------
// SPCV vector interchange file:
//   "SPCV" | u8 version (1) | u32 dim | u64 count |
//   count x ( u16 id_len | id bytes | dim x f32 )      all little-endian

inline constexpr std::uint8_t kVectorFileVersion = 1;

/// Values are narrowed to 32-bit floats on write.
void write_vectors(const std::filesystem::path& path, std::span<const EmbeddingVector> vectors);
std::string encode_vectors(std::span<const EmbeddingVector> vectors);

class VectorFileProvider final : public EmbeddingProvider {
 public:
  /// Throws ValidationError on bad magic/version, truncation or duplicate ids.
  static VectorFileProvider load(const std::filesystem::path& path);
  static VectorFileProvider decode(std::string_view bytes, const std::string& origin = "<memory>");

  /// Throws std::out_of_range naming the id when absent.
  [[nodiscard]] const EmbeddingVector& lookup(std::string_view id) const;
  [[nodiscard]] bool contains(std::string_view id) const;
  [[nodiscard]] EmbeddingVector embed(std::string_view id, std::string_view) const override {
    return lookup(id);
  }
  [[nodiscard]] std::size_t dim() const override { return dim_; }
  [[nodiscard]] std::size_t size() const { return vectors_.size(); }
  [[nodiscard]] const std::vector<EmbeddingVector>& vectors() const { return vectors_; }

 private:
  std::size_t dim_ = 0;
  std::vector<EmbeddingVector> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace scd::similarity
