#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "scd/corpus_store.hpp"
#include "scd/io.hpp"
#include "scd/pair_sampler.hpp"

namespace scd::annotation {

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 5;
inline constexpr std::size_t kNumRatings = 5;

struct AnnotationRecord {
  std::string pair_id;
  std::string annotator_id;
  int rating = 3;

  bool operator==(const AnnotationRecord&) const = default;
};

/// Validates range and (pair_id, annotator_id) uniqueness.
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);
void validate_records(std::span<const AnnotationRecord> records);

// ---------------------------------------------------------------------------
// Annotator competence (MACE model, EM with additive smoothing)
//
// Each item has a latent true rating T (uniform prior). Annotator j reports T
// with probability theta_j, otherwise draws from its own distribution xi_j.

struct MaceConfig {
  int max_iter = 500;
  double tol = 1e-8;  // relative change of the objective
  int n_restarts = 10;
  double smoothing_alpha = 0.1;
  std::uint64_t seed = 0;
};

struct AnnotatorProfile {
  std::string annotator_id;
  double competence = 0.0;  // theta
  std::array<double, kNumRatings> spam_dist{};
  std::size_t n_ratings = 0;
};

struct MaceResult {
  std::vector<AnnotatorProfile> profiles;                        // sorted by annotator_id
  std::map<std::string, std::array<double, kNumRatings>> posteriors;  // per pair_id
  std::map<std::string, int> posterior_labels;                   // argmax, 1..5
  double log_likelihood = 0.0;  // marginal log-likelihood of the ratings
  /// log-likelihood plus the log of the smoothing prior; EM never decreases it.
  double objective = 0.0;
  std::vector<double> objective_trace;  // winning restart, one value per E-step
  std::vector<double> restart_objectives;
  int iterations = 0;
  bool converged = false;
  bool monotone = true;  // objective_trace never dropped by more than 1e-9 (relative)
};

MaceResult fit_mace(std::span<const AnnotationRecord> records, const MaceConfig& config = {});

struct FilterResult {
  std::vector<AnnotationRecord> records;
  std::vector<std::string> removed_annotators;
  std::vector<std::string> emptied_items;  // pairs left without ratings
};

/// Drops every rating of the ceil(drop_fraction * A) least competent
/// annotators (ties broken by id). drop_fraction must lie in [0, 1).
FilterResult filter_low_competence(std::span<const AnnotationRecord> records,
                                   std::span<const AnnotatorProfile> profiles, double drop_fraction = 0.05);

struct RatingStats {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) standard deviation, 0 when n < 2
};

std::map<std::string, RatingStats> rating_stats(std::span<const AnnotationRecord> records);
RatingStats stats_of(std::span<const double> values);

/// Pairs whose sample standard deviation exceeds the threshold.
std::set<std::string> flag_outliers(std::span<const AnnotationRecord> records, double std_threshold = 1.2);

struct ExpertOverride {
  std::string pair_id;
  std::string annotator_id;
  int new_rating = 3;
};

struct OverrideResult {
  std::vector<AnnotationRecord> records;
  std::set<std::string> overridden_pairs;
  std::vector<std::string> warnings;
};

std::vector<ExpertOverride> read_overrides(const std::filesystem::path& path);

/// Replaces targeted ratings. Unknown targets throw ValidationError; a target
/// on a pair outside `flagged` is applied with a warning.
OverrideResult apply_expert_overrides(std::span<const AnnotationRecord> records,
                                      std::span<const ExpertOverride> overrides,
                                      const std::set<std::string>& flagged);

enum class Provenance { annotated, automatic, expert_override };
std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

enum class Split { train, dev, test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct AggregatedPair {
  std::string pair_id;
  double ims = 0.0;
  std::size_t n_ratings = 0;
  double rating_std = 0.0;
  bool flagged_outlier = false;
  Provenance provenance = Provenance::annotated;
  std::optional<Split> split;
};

ordered_json aggregated_to_json(const AggregatedPair& a);
AggregatedPair aggregated_from_json(const json& j);

struct AutoPair {
  std::string pair_id;
  pairs::AutoLabel label = pairs::AutoLabel::auto_unmatched;
};

/// Annotated pairs (sorted by pair_id) followed by automatic ones in input
/// order. Annotated IMS is the mean rating; auto-unmatched gets 1 and
/// auto-matched gets 5.
std::vector<AggregatedPair> aggregate_ims(std::span<const AnnotationRecord> records, std::span<const AutoPair> auto_pairs,
                                          const std::set<std::string>& flagged = {},
                                          const std::set<std::string>& overridden = {});

// ---------------------------------------------------------------------------
// Krippendorff's alpha

enum class AlphaMetric { interval, ordinal, nominal };
AlphaMetric parse_alpha_metric(std::string_view s);

/// Each unit lists the values it received (missing values simply absent).
/// Units with fewer than two values are not pairable and are ignored.
/// Throws std::invalid_argument when no pairable values exist or when the
/// expected disagreement is zero with non-zero observed disagreement.
double krippendorff_alpha(const std::vector<std::vector<double>>& units, AlphaMetric metric);
double krippendorff_alpha(std::span<const AnnotationRecord> records, AlphaMetric metric);

// ---------------------------------------------------------------------------
// DOI-grouped splits

struct SplitItem {
  std::string pair_id;
  std::string doi;
  corpus::Field field = corpus::Field::other;
};

struct SplitAssignment {
  std::string pair_id;
  Split split = Split::train;
};

/// Per field, DOIs are shuffled with `seed`, stably ordered by descending
/// pair count and each given to the split furthest below its target pair
/// count. All pairs of one DOI share a split. Output in input order.
std::vector<SplitAssignment> make_splits(std::span<const SplitItem> items, std::array<double, 3> ratios = {0.8, 0.1, 0.1},
                                         std::uint64_t seed = 0);

}  // namespace scd::annotation
