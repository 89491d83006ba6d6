#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "scd/corpus_store.hpp"
#include "scd/finding_extractor.hpp"
#include "scd/io.hpp"
#include "scd/similarity.hpp"

namespace scd::pairs {

struct CandidatePair {
  std::string pair_id;
  std::string paper_doi;
  corpus::Field field = corpus::Field::other;
  corpus::SourceKind source_kind = corpus::SourceKind::news;  // of the mention
  std::string finding_paper;
  std::string finding_mention;
  double cos_sim = 0.0;
  double jaccard = 0.0;
  std::string mention_doc_id;
  std::string paper_doc_id;
  std::size_t paper_sent_idx = 0;
  std::size_t mention_sent_idx = 0;
  std::optional<double> model_score;  // external score used for binning, when attached
};

ordered_json pair_to_json(const CandidatePair& p);
CandidatePair pair_from_json(const json& j);

/// Stable 128-bit id of (paper doc_id, sent_idx, mention doc_id, sent_idx).
std::string make_pair_id(std::string_view paper_doc_id, std::size_t paper_sent, std::string_view mention_doc_id,
                         std::size_t mention_sent);

/// Embedding lookup key for a finding: "<doc_id>#<sent_idx>".
std::string finding_key(std::string_view doc_id, std::size_t sent_idx);

/// Findings per doc_id, each list ordered by sent_idx.
using FindingIndex = std::map<std::string, std::vector<extract::Finding>, std::less<>>;

struct PairStats {
  std::size_t links = 0;
  std::size_t pairs = 0;
  std::size_t peak_cached_vectors = 0;  // embeddings held at once
};

/// Streams the cross product of paper and mention findings for every link, in
/// (paper_doi, mention doc_id, paper sent_idx, mention sent_idx) order. Holds
/// only the embeddings of the current link. Throws RuntimeFailure naming the
/// finding when the provider cannot embed it.
PairStats generate_pairs(const corpus::CorpusStore& store, const FindingIndex& findings,
                         const corpus::LinkTable& links, const similarity::EmbeddingProvider& provider,
                         const std::function<void(CandidatePair&&)>& sink);

enum class AutoLabel { auto_unmatched, auto_matched, needs_annotation };
std::string_view to_string(AutoLabel l);
AutoLabel parse_auto_label(std::string_view s);

struct AutoLabelThresholds {
  double unmatched_below = 0.4;
  double matched_above = 0.9;
  double jaccard_above = 0.5;
};

AutoLabel auto_label(double cos_sim, double jaccard, const AutoLabelThresholds& t = {});
inline AutoLabel auto_label(const CandidatePair& p, const AutoLabelThresholds& t = {}) {
  return auto_label(p.cos_sim, p.jaccard, t);
}

enum class ScoreSource { cosine, external_model };

struct SampleSpec {
  double bin_width = 0.05;
  double lo = 0.4;
  double hi = 0.9;
  std::size_t per_bin = 60;
  std::uint64_t seed = 0;
  ScoreSource score_source = ScoreSource::cosine;

  /// Throws ValidationError when the width does not tile [lo, hi] or per_bin is 0.
  void validate() const;
  [[nodiscard]] std::size_t num_bins() const;
  /// Half-open [lo + k w, lo + (k+1) w), last bin closed at hi. Keys within
  /// 1e-9 of an edge are treated as lying on it.
  [[nodiscard]] std::optional<std::size_t> bin_of(double key) const;
  [[nodiscard]] double bin_lo(std::size_t k) const;
  [[nodiscard]] double bin_hi(std::size_t k) const;
};

struct BinReport {
  std::size_t index = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t available = 0;
  std::size_t drawn = 0;
  std::size_t shortfall = 0;
};

struct SampleResult {
  std::vector<CandidatePair> pairs;  // bin-major, draw order within a bin
  std::vector<BinReport> bins;
};

double bin_key(const CandidatePair& p, ScoreSource source);

/// Draws min(per_bin, available) pairs per bin uniformly without replacement
/// from one std::mt19937_64 seeded with spec.seed (partial Fisher-Yates,
/// bins visited in order).
SampleResult stratified_sample(std::span<const CandidatePair> pairs, const SampleSpec& spec);

/// 20 pairs from each 0.05 bin over [0, 1].
SampleResult pilot_sample(std::span<const CandidatePair> pairs, std::uint64_t seed, std::size_t per_bin = 20);

/// pair_id -> score in [0, 1]; from JSON-lines {"pair_id","score"}.
std::unordered_map<std::string, double> read_score_file(const std::filesystem::path& path);

/// Attaches model scores for binning. Throws ValidationError for a missing
/// pair_id or a score outside [0, 1].
void score_with_model(std::span<CandidatePair> pairs, const std::unordered_map<std::string, double>& scores);

}  // namespace scd::pairs
