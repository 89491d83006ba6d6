#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "scd/annotation.hpp"
#include "scd/corpus_store.hpp"
#include "scd/pair_sampler.hpp"
#include "scd/similarity.hpp"

namespace scd::ims {

inline constexpr double kMinIms = 1.0;
inline constexpr double kMaxIms = 5.0;

struct ScoringInput {
  std::string pair_id;
  std::string text_a;
  std::string text_b;
  std::string key_a;  // embedding keys for id-based providers
  std::string key_b;
};

ScoringInput scoring_input(const pairs::CandidatePair& p);

/// Maps a finding pair to an IMS estimate; outputs are clamped to [1, 5].
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  [[nodiscard]] double score(const ScoringInput& in) const;
  [[nodiscard]] virtual std::string name() const = 0;

 protected:
  [[nodiscard]] virtual double raw_score(const ScoringInput& in) const = 0;
};

/// 1 + 4 max(0, cos(e_a, e_b)).
class CosineScorer final : public PairScorer {
 public:
  explicit CosineScorer(const similarity::EmbeddingProvider& provider) : provider_(provider) {}
  [[nodiscard]] std::string name() const override { return "cosine"; }

 protected:
  [[nodiscard]] double raw_score(const ScoringInput& in) const override;

 private:
  const similarity::EmbeddingProvider& provider_;
};

double cosine_to_ims(double cos_sim);
double probability_to_ims(double p);

/// 1 + 4p for a per-pair probability (paraphrase or entailment).
class ProbabilityScorer final : public PairScorer {
 public:
  /// Throws ValidationError for values outside [0, 1].
  explicit ProbabilityScorer(std::unordered_map<std::string, double> table, std::string label = "probability");
  [[nodiscard]] std::string name() const override { return label_; }

 protected:
  [[nodiscard]] double raw_score(const ScoringInput& in) const override;

 private:
  std::unordered_map<std::string, double> table_;
  std::string label_;
};

/// Pre-computed IMS predictions. Values within 1e-6 outside [1, 5] are
/// clamped; larger violations throw ValidationError.
class ExternalScoreTable final : public PairScorer {
 public:
  explicit ExternalScoreTable(std::unordered_map<std::string, double> table, std::string label = "external");
  [[nodiscard]] std::string name() const override { return label_; }

 protected:
  [[nodiscard]] double raw_score(const ScoringInput& in) const override;

 private:
  std::unordered_map<std::string, double> table_;
  std::string label_;
};

/// 1 + 4 jaccard.
class LexicalBaseline final : public PairScorer {
 public:
  [[nodiscard]] std::string name() const override { return "lexical"; }

 protected:
  [[nodiscard]] double raw_score(const ScoringInput& in) const override;
};

/// JSON-lines {"pair_id","value"}; '#' lines are header comments.
std::unordered_map<std::string, double> read_value_table(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// (1/n) sum (y - yhat)^2. Throws std::invalid_argument on empty or unequal input.
double mse(std::span<const double> y, std::span<const double> yhat);

/// Sample correlation. Throws std::invalid_argument for n < 2, unequal
/// lengths or zero variance.
double pearson_r(std::span<const double> y, std::span<const double> yhat);

struct SubsetMetrics {
  std::size_t n = 0;
  std::optional<double> mse;
  std::optional<double> pearson_r;  // empty when undefined (n < 2 or constant input)
};

struct EvalReport {
  std::string scorer;
  SubsetMetrics overall;
  SubsetMetrics news;
  SubsetMetrics tweets;
};

struct EvalPair {
  ScoringInput input;
  corpus::SourceKind source_kind = corpus::SourceKind::news;
  double ims = 0.0;
  annotation::Provenance provenance = annotation::Provenance::annotated;
};

SubsetMetrics subset_metrics(std::span<const double> y, std::span<const double> yhat);

/// Metrics on manually annotated pairs only (automatic provenance skipped),
/// overall and per mention source.
EvalReport evaluate_scorer(const PairScorer& scorer, std::span<const EvalPair> pairs);

// ---------------------------------------------------------------------------

struct CorpusScoreStats {
  std::size_t read = 0;
  std::size_t kept = 0;
};

struct CorpusScoreOptions {
  double threshold = 3.0;         // keep strictly greater
  std::size_t threads = 1;
  std::size_t chunk_size = 4096;  // pairs held in memory at once
  std::function<void(const CorpusScoreStats&)> progress;
};

/// Streams pair JSON-lines from `in`, writes every pair whose score exceeds
/// the threshold with an added "ims_pred" field, in input order.
CorpusScoreStats score_corpus(const PairScorer& scorer, std::istream& in, std::ostream& out,
                              const CorpusScoreOptions& options = {});

}  // namespace scd::ims
