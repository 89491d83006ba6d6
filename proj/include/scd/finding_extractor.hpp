#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scd/corpus_store.hpp"
#include "scd/io.hpp"

namespace scd::extract {

enum class RhetoricalLabel : int { background = 0, objective, methods, results, conclusions };
inline constexpr std::size_t kNumLabels = 5;
inline constexpr std::array<RhetoricalLabel, kNumLabels> kAllLabels = {
    RhetoricalLabel::background, RhetoricalLabel::objective, RhetoricalLabel::methods,
    RhetoricalLabel::results, RhetoricalLabel::conclusions};

std::string_view to_string(RhetoricalLabel l);
RhetoricalLabel parse_label(std::string_view s);  // upper-case names; throws ValidationError
inline bool is_finding_label(RhetoricalLabel l) {
  return l == RhetoricalLabel::results || l == RhetoricalLabel::conclusions;
}

struct SentenceRecord {
  std::string doc_id;
  std::size_t sent_idx = 0;
  std::string text;
  std::size_t start = 0;  // byte offsets into the document text, [start, end)
  std::size_t end = 0;
};

struct Finding {
  std::string doc_id;
  std::size_t sent_idx = 0;
  std::string text;
  RhetoricalLabel label = RhetoricalLabel::results;
  double confidence = 0.0;
};

ordered_json finding_to_json(const Finding& f);
Finding finding_from_json(const json& j);

// ---------------------------------------------------------------------------
// Sentence splitting

/// Lowercase tokens (with trailing period) that never end a sentence.
const std::vector<std::string>& abbreviations();

/// Splits on [.?!] followed by whitespace and an upper-case letter or digit,
/// unless the period closes a known abbreviation. With `whole`, the entire
/// text is a single record.
std::vector<SentenceRecord> split_sentences(std::string_view doc_id, std::string_view text, bool whole = false);

/// Tweets are taken whole; other documents are split.
std::vector<SentenceRecord> split_sentences(const corpus::Document& doc);

// ---------------------------------------------------------------------------
// Features

inline constexpr std::uint32_t kDefaultHashDim = 1u << 18;
inline constexpr int kPositionBuckets = 5;

/// Sorted by index, no zero entries.
struct SparseFeatures {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  [[nodiscard]] std::size_t nnz() const { return index.size(); }
  bool operator==(const SparseFeatures&) const = default;
};

/// Signed-hashed counts of lowercase word unigrams and bigrams, lowercase
/// character trigrams and one bucketed relative-position indicator
/// (`position` in [0, 1], bucket = floor(position * 5) capped at 4).
SparseFeatures featurize(std::string_view sentence, double position = 0.0,
                         std::uint32_t hash_dim = kDefaultHashDim);

/// Relative position of sentence `idx` among `count` sentences.
double relative_position(std::size_t idx, std::size_t count);

// ---------------------------------------------------------------------------
// Classifier

struct TrainingHyper {
  double l2_penalty = 1e-4;
  int max_epochs = 300;
  double tol = 1e-4;  // stop when max |gradient| falls below
  std::uint64_t seed = 0;
  std::uint32_t hash_dim = kDefaultHashDim;
};

struct ConvergenceRecord {
  int epochs = 0;
  bool converged = false;
  double final_grad_max = 0.0;
  std::vector<double> loss_history;  // objective after each accepted step, starting with the initial value
};

struct LabeledSentence {
  std::string text;
  RhetoricalLabel label = RhetoricalLabel::background;
  double position = 0.0;
};

std::vector<LabeledSentence> read_training_corpus(const std::filesystem::path& path);

/// Regularized multinomial logistic objective over pre-featurized examples.
/// Parameter layout: hash_dim x 5 weights (feature-major) followed by 5 biases.
struct LogisticProblem {
  std::vector<SparseFeatures> features;
  std::vector<int> labels;
  std::size_t dim = 0;
  double l2 = 0.0;

  [[nodiscard]] std::size_t num_params() const { return dim * kNumLabels + kNumLabels; }
  /// Mean negative log-likelihood + (l2/2)|W|^2; writes the gradient when `grad` is non-empty.
  double evaluate(std::span<const double> params, std::span<double> grad) const;
};

class SentenceClassifier {
 public:
  SentenceClassifier() = default;
  SentenceClassifier(std::uint32_t hash_dim, std::vector<double> params);

  [[nodiscard]] std::uint32_t hash_dim() const { return hash_dim_; }
  [[nodiscard]] std::span<const double> params() const { return params_; }

  [[nodiscard]] std::array<double, kNumLabels> predict_proba(const SparseFeatures& x) const;
  [[nodiscard]] std::array<double, kNumLabels> predict_proba(std::string_view sentence, double position = 0.0) const;
  [[nodiscard]] RhetoricalLabel predict(std::string_view sentence, double position = 0.0) const;

  TrainingHyper hyper;
  ConvergenceRecord convergence;
  json metrics = json::object();

  /// Single-line JSON header, newline, then little-endian f32 weights and biases.
  void save(const std::filesystem::path& path) const;
  static SentenceClassifier load(const std::filesystem::path& path);

 private:
  std::uint32_t hash_dim_ = 0;
  std::vector<double> params_;
};

/// Deterministic full-batch gradient descent with Armijo backtracking.
/// Throws ValidationError when fewer than two classes are present.
SentenceClassifier train_classifier(std::span<const LabeledSentence> labeled, const TrainingHyper& hyper);

std::vector<Finding> extract_findings(const SentenceClassifier& model, const corpus::Document& doc);

struct ClassMetrics {
  std::optional<double> precision;  // empty when the class is absent from the gold labels
  std::optional<double> recall;
  std::optional<double> f1;
  std::size_t support = 0;
};

struct ClassificationReport {
  std::array<ClassMetrics, kNumLabels> per_class;
  double macro_f1 = 0.0;  // over classes present in the gold labels
  double accuracy = 0.0;
  std::size_t n = 0;
};

ClassificationReport evaluate_predictions(std::span<const RhetoricalLabel> gold,
                                          std::span<const RhetoricalLabel> predicted);
ClassificationReport evaluate_classifier(const SentenceClassifier& model, std::span<const LabeledSentence> heldout);

}  // namespace scd::extract
