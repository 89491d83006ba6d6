#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "scd/ims_scoring.hpp"

namespace scd::retrieval {

struct Claim {
  std::string claim_id;
  std::string text;
  std::set<std::string> gold_evidence_ids;
};

struct Evidence {
  std::string evidence_id;
  std::string text;
};

/// Evidence sentences with unique ids, kept in input order.
class EvidencePool {
 public:
  EvidencePool() = default;
  /// Throws ValidationError on a duplicate or empty id.
  explicit EvidencePool(std::vector<Evidence> items);

  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] bool empty() const { return items_.empty(); }
  [[nodiscard]] const Evidence& operator[](std::size_t i) const { return items_[i]; }
  [[nodiscard]] const std::vector<Evidence>& items() const { return items_; }
  [[nodiscard]] bool contains(const std::string& id) const { return index_.count(id) != 0; }

 private:
  std::vector<Evidence> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<Claim> read_claims(const std::filesystem::path& path);
EvidencePool read_pool(const std::filesystem::path& path);

/// Throws ValidationError when a claim has no gold ids or names one absent
/// from the pool.
void validate_dataset(std::span<const Claim> claims, const EvidencePool& pool);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Okapi BM25 over the pool, tokenized with text::tokenize.
class Bm25Index {
 public:
  /// Throws ValidationError for an empty pool or k1 < 0, b outside [0, 1].
  Bm25Index(const EvidencePool& pool, Bm25Params params = {});

  /// max(0, ln((N - df + 0.5) / (df + 0.5))).
  [[nodiscard]] double idf(const std::string& term) const;
  [[nodiscard]] std::size_t df(const std::string& term) const;
  [[nodiscard]] std::size_t num_docs() const { return doc_len_.size(); }
  [[nodiscard]] double avgdl() const { return avgdl_; }
  [[nodiscard]] std::size_t doc_length(std::size_t doc) const { return doc_len_[doc]; }
  [[nodiscard]] const Bm25Params& params() const { return params_; }

  /// Sum over query tokens (repeats included) of idf * tf (k1 + 1) / (tf + k1 (1 - b + b dl / avgdl)).
  [[nodiscard]] double score(std::span<const std::string> query_tokens, std::size_t doc) const;

 private:
  Bm25Params params_;
  std::unordered_map<std::string, std::size_t> df_;
  std::vector<std::unordered_map<std::string, std::size_t>> tf_;
  std::vector<std::size_t> doc_len_;
  double avgdl_ = 0.0;
};

/// Key under which external score tables store (claim, evidence) scores.
std::string retrieval_pair_id(const std::string& claim_id, const std::string& evidence_id);

class Ranker {
 public:
  virtual ~Ranker() = default;
  /// One score per pool entry, in pool order.
  [[nodiscard]] virtual std::vector<double> score_pool(const Claim& claim, const EvidencePool& pool) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

class Bm25Ranker final : public Ranker {
 public:
  explicit Bm25Ranker(const Bm25Index& index) : index_(index) {}
  [[nodiscard]] std::vector<double> score_pool(const Claim& claim, const EvidencePool& pool) const override;
  [[nodiscard]] std::string name() const override { return "bm25"; }

 private:
  const Bm25Index& index_;
};

/// Ranks with a pair scorer; the pair id is retrieval_pair_id(claim, evidence),
/// embedding keys are the claim and evidence ids.
class ScorerRanker final : public Ranker {
 public:
  explicit ScorerRanker(const ims::PairScorer& scorer) : scorer_(scorer) {}
  [[nodiscard]] std::vector<double> score_pool(const Claim& claim, const EvidencePool& pool) const override;
  [[nodiscard]] std::string name() const override { return scorer_.name(); }

 private:
  const ims::PairScorer& scorer_;
};

struct RankedItem {
  std::string evidence_id;
  double score = 0.0;
};

/// Every pool member, by descending score, ties by ascending evidence_id.
std::vector<RankedItem> rank_evidence(const Ranker& ranker, const Claim& claim, const EvidencePool& pool);

/// Mean of P@k over the ranks k of the gold items. Throws std::invalid_argument
/// when gold is empty or not contained in `ranked`.
double average_precision(std::span<const std::string> ranked, const std::set<std::string>& gold);

enum class MrrMode {
  all_gold,        // mean of 1/rank over every gold item of the claim
  first_relevant,  // 1/rank of the best-ranked gold item
};

double reciprocal_rank(std::span<const std::string> ranked, const std::set<std::string>& gold,
                       MrrMode mode = MrrMode::all_gold);

struct RankedList {
  std::vector<std::string> ranked;
  std::set<std::string> gold;
};

double mean_average_precision(std::span<const RankedList> lists);
double mean_reciprocal_rank(std::span<const RankedList> lists, MrrMode mode = MrrMode::all_gold);

struct ClaimResult {
  std::string claim_id;
  double ap = 0.0;
  double rr = 0.0;
};

struct RetrievalResult {
  double map = 0.0;
  double mrr = 0.0;
  std::vector<ClaimResult> per_claim;  // in claim order
};

/// Claims are ranked on up to `threads` workers; results do not depend on it.
RetrievalResult evaluate_retrieval(const Ranker& ranker, std::span<const Claim> claims, const EvidencePool& pool,
                                   MrrMode mode = MrrMode::all_gold, std::size_t threads = 1);

struct ReportRow {
  std::string method;
  std::string dataset;
  double map = 0.0;  // fractions; written x100
  double mrr = 0.0;
};

/// CSV "method,dataset,map,mrr" with percentages to two decimals.
void write_report_csv(std::ostream& out, std::span<const ReportRow> rows);

/// JSON-lines {"claim_id","ap","rr"}.
void write_per_claim(std::ostream& out, std::span<const ClaimResult> rows);

}  // namespace scd::retrieval
