#include "scd/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "scd/error.hpp"
#include "scd/text.hpp"

namespace scd::retrieval {

EvidencePool::EvidencePool(std::vector<Evidence> items) : items_(std::move(items)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].evidence_id.empty()) throw ValidationError("evidence with empty id");
    if (!index_.emplace(items_[i].evidence_id, i).second) {
      throw ValidationError("duplicate evidence_id " + items_[i].evidence_id);
    }
  }
}

std::vector<Claim> read_claims(const std::filesystem::path& path) {
  std::vector<Claim> out;
  for_each_jsonl(path, true, [&](std::size_t, const json& j) {
    Claim c;
    c.claim_id = required<std::string>(j, "claim_id");
    c.text = required<std::string>(j, "text");
    for (const auto& g : required<std::vector<std::string>>(j, "gold_evidence_ids")) c.gold_evidence_ids.insert(g);
    out.push_back(std::move(c));
  });
  return out;
}

EvidencePool read_pool(const std::filesystem::path& path) {
  std::vector<Evidence> items;
  for_each_jsonl(path, true, [&](std::size_t, const json& j) {
    items.push_back({required<std::string>(j, "evidence_id"), required<std::string>(j, "text")});
  });
  return EvidencePool(std::move(items));
}

void validate_dataset(std::span<const Claim> claims, const EvidencePool& pool) {
  if (pool.empty()) throw ValidationError("evidence pool is empty");
  for (const auto& c : claims) {
    if (c.gold_evidence_ids.empty()) throw ValidationError("claim " + c.claim_id + " has no gold evidence");
    for (const auto& g : c.gold_evidence_ids) {
      if (!pool.contains(g)) throw ValidationError("claim " + c.claim_id + " cites unknown evidence " + g);
    }
  }
}

// ---------------------------------------------------------------------------

Bm25Index::Bm25Index(const EvidencePool& pool, Bm25Params params) : params_(params) {
  if (pool.empty()) throw ValidationError("cannot index an empty pool");
  if (!(params.k1 >= 0.0) || !(params.b >= 0.0 && params.b <= 1.0)) {
    throw ValidationError("bm25: need k1 >= 0 and b in [0, 1]");
  }
  tf_.resize(pool.size());
  doc_len_.resize(pool.size());
  std::size_t total = 0;
  for (std::size_t d = 0; d < pool.size(); ++d) {
    const auto toks = text::tokenize(pool[d].text);
    for (const auto& t : toks) ++tf_[d][t];
    for (const auto& [t, _] : tf_[d]) ++df_[t];
    doc_len_[d] = toks.size();
    total += toks.size();
  }
  avgdl_ = static_cast<double>(total) / static_cast<double>(pool.size());
}

std::size_t Bm25Index::df(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const {
  const double n = static_cast<double>(num_docs());
  const double d = static_cast<double>(df(term));
  return std::max(0.0, std::log((n - d + 0.5) / (d + 0.5)));
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::size_t doc) const {
  const auto& tf = tf_.at(doc);
  // An all-empty pool has avgdl 0; every tf is then 0 and the norm is unused.
  const double norm = avgdl_ > 0.0 ? static_cast<double>(doc_len_[doc]) / avgdl_ : 1.0;
  const double k = params_.k1 * (1.0 - params_.b + params_.b * norm);
  double s = 0.0;
  for (const auto& q : query_tokens) {
    auto it = tf.find(q);
    if (it == tf.end()) continue;
    const double f = static_cast<double>(it->second);
    s += idf(q) * f * (params_.k1 + 1.0) / (f + k);
  }
  return s;
}

std::string retrieval_pair_id(const std::string& claim_id, const std::string& evidence_id) {
  return claim_id + "|" + evidence_id;
}

std::vector<double> Bm25Ranker::score_pool(const Claim& claim, const EvidencePool& pool) const {
  if (pool.size() != index_.num_docs()) throw std::invalid_argument("bm25 ranker: pool differs from index");
  const auto q = text::tokenize(claim.text);
  std::vector<double> out(pool.size());
  for (std::size_t d = 0; d < pool.size(); ++d) out[d] = index_.score(q, d);
  return out;
}

std::vector<double> ScorerRanker::score_pool(const Claim& claim, const EvidencePool& pool) const {
  std::vector<double> out(pool.size());
  for (std::size_t d = 0; d < pool.size(); ++d) {
    const auto& ev = pool[d];
    out[d] = scorer_.score({retrieval_pair_id(claim.claim_id, ev.evidence_id), claim.text, ev.text, claim.claim_id,
                            ev.evidence_id});
  }
  return out;
}

std::vector<RankedItem> rank_evidence(const Ranker& ranker, const Claim& claim, const EvidencePool& pool) {
  if (pool.empty()) throw ValidationError("evidence pool is empty");
  const auto scores = ranker.score_pool(claim, pool);
  std::vector<RankedItem> out;
  out.reserve(pool.size());
  for (std::size_t d = 0; d < pool.size(); ++d) out.push_back({pool[d].evidence_id, scores[d]});
  std::sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.evidence_id < b.evidence_id;
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// 1-based ranks of the gold items, ascending.
std::vector<std::size_t> gold_ranks(std::span<const std::string> ranked, const std::set<std::string>& gold) {
  if (gold.empty()) throw std::invalid_argument("gold set is empty");
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (gold.count(ranked[i])) ranks.push_back(i + 1);
  }
  if (ranks.size() != gold.size()) throw std::invalid_argument("gold item missing from ranking");
  return ranks;
}

}  // namespace

double average_precision(std::span<const std::string> ranked, const std::set<std::string>& gold) {
  const auto ranks = gold_ranks(ranked, gold);
  double s = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    s += static_cast<double>(i + 1) / static_cast<double>(ranks[i]);
  }
  return s / static_cast<double>(ranks.size());
}

double reciprocal_rank(std::span<const std::string> ranked, const std::set<std::string>& gold, MrrMode mode) {
  const auto ranks = gold_ranks(ranked, gold);
  if (mode == MrrMode::first_relevant) return 1.0 / static_cast<double>(ranks.front());
  double s = 0.0;
  for (auto r : ranks) s += 1.0 / static_cast<double>(r);
  return s / static_cast<double>(ranks.size());
}

double mean_average_precision(std::span<const RankedList> lists) {
  if (lists.empty()) throw std::invalid_argument("no ranked lists");
  double s = 0.0;
  for (const auto& l : lists) s += average_precision(l.ranked, l.gold);
  return s / static_cast<double>(lists.size());
}

double mean_reciprocal_rank(std::span<const RankedList> lists, MrrMode mode) {
  if (lists.empty()) throw std::invalid_argument("no ranked lists");
  double s = 0.0;
  for (const auto& l : lists) s += reciprocal_rank(l.ranked, l.gold, mode);
  return s / static_cast<double>(lists.size());
}

RetrievalResult evaluate_retrieval(const Ranker& ranker, std::span<const Claim> claims, const EvidencePool& pool,
                                   MrrMode mode, std::size_t threads) {
  validate_dataset(claims, pool);
  if (claims.empty()) throw ValidationError("no claims to evaluate");
  RetrievalResult r;
  r.per_claim.resize(claims.size());

  auto work = [&](std::size_t i) {
    const auto ranked = rank_evidence(ranker, claims[i], pool);
    std::vector<std::string> ids;
    ids.reserve(ranked.size());
    for (const auto& it : ranked) ids.push_back(it.evidence_id);
    r.per_claim[i] = {claims[i].claim_id, average_precision(ids, claims[i].gold_evidence_ids),
                      reciprocal_rank(ids, claims[i].gold_evidence_ids, mode)};
  };

  threads = std::clamp<std::size_t>(threads, 1, claims.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < claims.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool_threads;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool_threads.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < claims.size(); i += threads) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool_threads) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  double ap = 0.0, rr = 0.0;
  for (const auto& c : r.per_claim) {
    ap += c.ap;
    rr += c.rr;
  }
  r.map = ap / static_cast<double>(claims.size());
  r.mrr = rr / static_cast<double>(claims.size());
  return r;
}

void write_report_csv(std::ostream& out, std::span<const ReportRow> rows) {
  out << "method,dataset,map,mrr\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.dataset << ',' << format_fixed(100.0 * r.map, 2) << ','
        << format_fixed(100.0 * r.mrr, 2) << '\n';
  }
}

void write_per_claim(std::ostream& out, std::span<const ClaimResult> rows) {
  for (const auto& r : rows) {
    ordered_json j;
    j["claim_id"] = r.claim_id;
    j["ap"] = r.ap;
    j["rr"] = r.rr;
    out << j.dump() << '\n';
  }
}

}  // namespace scd::retrieval
