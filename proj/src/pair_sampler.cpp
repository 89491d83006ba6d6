#include "scd/pair_sampler.hpp"

#include <algorithm>
#include <cmath>

#include "scd/error.hpp"

namespace scd::pairs {

ordered_json pair_to_json(const CandidatePair& p) {
  ordered_json j;
  j["pair_id"] = p.pair_id;
  j["paper_doi"] = p.paper_doi;
  j["field"] = corpus::to_string(p.field);
  j["source_kind"] = corpus::to_string(p.source_kind);
  j["finding_paper"] = p.finding_paper;
  j["finding_mention"] = p.finding_mention;
  j["cos_sim"] = p.cos_sim;
  j["jaccard"] = p.jaccard;
  j["mention_doc_id"] = p.mention_doc_id;
  j["paper_doc_id"] = p.paper_doc_id;
  j["paper_sent_idx"] = p.paper_sent_idx;
  j["mention_sent_idx"] = p.mention_sent_idx;
  if (p.model_score) j["model_score"] = *p.model_score;
  return j;
}

CandidatePair pair_from_json(const json& j) {
  CandidatePair p;
  p.pair_id = required<std::string>(j, "pair_id");
  p.paper_doi = required<std::string>(j, "paper_doi");
  p.field = corpus::parse_field(required<std::string>(j, "field"));
  p.source_kind = corpus::parse_source_kind(required<std::string>(j, "source_kind"));
  p.finding_paper = required<std::string>(j, "finding_paper");
  p.finding_mention = required<std::string>(j, "finding_mention");
  p.cos_sim = required<double>(j, "cos_sim");
  p.jaccard = required<double>(j, "jaccard");
  p.mention_doc_id = j.value("mention_doc_id", "");
  p.paper_doc_id = j.value("paper_doc_id", "");
  p.paper_sent_idx = j.value("paper_sent_idx", std::size_t{0});
  p.mention_sent_idx = j.value("mention_sent_idx", std::size_t{0});
  if (j.contains("model_score") && !j["model_score"].is_null()) p.model_score = j["model_score"].get<double>();
  return p;
}

std::string make_pair_id(std::string_view paper_doc_id, std::size_t paper_sent, std::string_view mention_doc_id,
                         std::size_t mention_sent) {
  std::string key;
  key.append(paper_doc_id).push_back('\x1f');
  key.append(std::to_string(paper_sent)).push_back('\x1f');
  key.append(mention_doc_id).push_back('\x1f');
  key.append(std::to_string(mention_sent));
  return fnv1a128_hex(key);
}

std::string finding_key(std::string_view doc_id, std::size_t sent_idx) {
  return std::string(doc_id) + "#" + std::to_string(sent_idx);
}

namespace {

std::vector<similarity::EmbeddingVector> embed_all(const std::vector<extract::Finding>& fs,
                                                   const similarity::EmbeddingProvider& provider) {
  std::vector<similarity::EmbeddingVector> out;
  out.reserve(fs.size());
  for (const auto& f : fs) {
    const std::string key = finding_key(f.doc_id, f.sent_idx);
    try {
      out.push_back(provider.embed(key, f.text));
    } catch (const std::exception& e) {
      throw RuntimeFailure("missing embedding for finding " + key + ": " + e.what());
    }
  }
  return out;
}

double safe_cosine(const similarity::EmbeddingVector& a, const similarity::EmbeddingVector& b) {
  if (a.zero || b.zero) return 0.0;
  return similarity::cosine_similarity(a, b);
}

const std::vector<extract::Finding>& findings_of(const FindingIndex& idx, const std::string& doc_id) {
  static const std::vector<extract::Finding> empty;
  auto it = idx.find(doc_id);
  return it == idx.end() ? empty : it->second;
}

}  // namespace

PairStats generate_pairs(const corpus::CorpusStore& store, const FindingIndex& findings,
                         const corpus::LinkTable& links, const similarity::EmbeddingProvider& provider,
                         const std::function<void(CandidatePair&&)>& sink) {
  PairStats stats;
  for (const auto& link : links.entries) {
    ++stats.links;
    const corpus::Document* paper = store.find_paper_by_doi(link.paper_doi);
    const corpus::Document* mention = store.find(link.mention_doc_id);
    if (!paper || !mention) throw RuntimeFailure("link references unknown document: " + link.mention_doc_id);
    const auto& pf = findings_of(findings, paper->doc_id);
    const auto& mf = findings_of(findings, mention->doc_id);
    if (pf.empty() || mf.empty()) continue;

    const auto pv = embed_all(pf, provider);
    const auto mv = embed_all(mf, provider);
    stats.peak_cached_vectors = std::max(stats.peak_cached_vectors, pv.size() + mv.size());
    for (std::size_t a = 0; a < pf.size(); ++a) {
      for (std::size_t b = 0; b < mf.size(); ++b) {
        CandidatePair p;
        p.pair_id = make_pair_id(paper->doc_id, pf[a].sent_idx, mention->doc_id, mf[b].sent_idx);
        p.paper_doi = link.paper_doi;
        p.field = paper->field;
        p.source_kind = mention->source_kind;
        p.finding_paper = pf[a].text;
        p.finding_mention = mf[b].text;
        p.cos_sim = safe_cosine(pv[a], mv[b]);
        p.jaccard = similarity::jaccard_index(pf[a].text, mf[b].text);
        p.mention_doc_id = mention->doc_id;
        p.paper_doc_id = paper->doc_id;
        p.paper_sent_idx = pf[a].sent_idx;
        p.mention_sent_idx = mf[b].sent_idx;
        ++stats.pairs;
        sink(std::move(p));
      }
    }
  }
  return stats;
}

std::string_view to_string(AutoLabel l) {
  switch (l) {
    case AutoLabel::auto_unmatched: return "auto_unmatched";
    case AutoLabel::auto_matched: return "auto_matched";
    case AutoLabel::needs_annotation: return "needs_annotation";
  }
  return "?";
}

AutoLabel parse_auto_label(std::string_view s) {
  if (s == "auto_unmatched") return AutoLabel::auto_unmatched;
  if (s == "auto_matched") return AutoLabel::auto_matched;
  if (s == "needs_annotation") return AutoLabel::needs_annotation;
  throw ValidationError("unknown auto label \"" + std::string(s) + "\"");
}

AutoLabel auto_label(double cos_sim, double jaccard, const AutoLabelThresholds& t) {
  if (cos_sim < t.unmatched_below) return AutoLabel::auto_unmatched;
  if (cos_sim > t.matched_above && jaccard > t.jaccard_above) return AutoLabel::auto_matched;
  return AutoLabel::needs_annotation;
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kEdgeTol = 1e-9;
}

void SampleSpec::validate() const {
  if (!(bin_width > 0.0) || !(hi > lo)) throw ValidationError("sample spec: need bin_width > 0 and hi > lo");
  const double ratio = (hi - lo) / bin_width;
  if (std::fabs(ratio - std::round(ratio)) * bin_width > kEdgeTol) {
    throw ValidationError("sample spec: bin_width does not divide [lo, hi]");
  }
  if (per_bin < 1) throw ValidationError("sample spec: per_bin must be at least 1");
}

std::size_t SampleSpec::num_bins() const { return static_cast<std::size_t>(std::llround((hi - lo) / bin_width)); }

double SampleSpec::bin_lo(std::size_t k) const { return lo + static_cast<double>(k) * bin_width; }

double SampleSpec::bin_hi(std::size_t k) const {
  return k + 1 == num_bins() ? hi : lo + static_cast<double>(k + 1) * bin_width;
}

std::optional<std::size_t> SampleSpec::bin_of(double key) const {
  if (!std::isfinite(key) || key < lo - kEdgeTol || key > hi + kEdgeTol) return std::nullopt;
  const std::size_t n = num_bins();
  const double pos = (key - lo) / bin_width;
  auto k = static_cast<std::int64_t>(std::floor(pos + kEdgeTol / bin_width));
  k = std::clamp<std::int64_t>(k, 0, static_cast<std::int64_t>(n) - 1);
  return static_cast<std::size_t>(k);
}

double bin_key(const CandidatePair& p, ScoreSource source) {
  if (source == ScoreSource::cosine) return p.cos_sim;
  if (!p.model_score) throw ValidationError("pair " + p.pair_id + " has no model score attached");
  return *p.model_score;
}

SampleResult stratified_sample(std::span<const CandidatePair> pairs, const SampleSpec& spec) {
  spec.validate();
  const std::size_t n_bins = spec.num_bins();
  std::vector<std::vector<std::size_t>> members(n_bins);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (auto k = spec.bin_of(bin_key(pairs[i], spec.score_source))) members[*k].push_back(i);
  }

  SampleResult result;
  Rng rng(spec.seed);
  for (std::size_t k = 0; k < n_bins; ++k) {
    auto& pool = members[k];
    const std::size_t take = std::min(spec.per_bin, pool.size());
    for (std::size_t t = 0; t < take; ++t) {
      const std::size_t j = t + static_cast<std::size_t>(uniform_below(rng, pool.size() - t));
      std::swap(pool[t], pool[j]);
      result.pairs.push_back(pairs[pool[t]]);
    }
    result.bins.push_back({k, spec.bin_lo(k), spec.bin_hi(k), pool.size(), take, spec.per_bin - take});
  }
  return result;
}

SampleResult pilot_sample(std::span<const CandidatePair> pairs, std::uint64_t seed, std::size_t per_bin) {
  SampleSpec spec;
  spec.lo = 0.0;
  spec.hi = 1.0;
  spec.bin_width = 0.05;
  spec.per_bin = per_bin;
  spec.seed = seed;
  return stratified_sample(pairs, spec);
}

std::unordered_map<std::string, double> read_score_file(const std::filesystem::path& path) {
  std::unordered_map<std::string, double> out;
  for_each_jsonl(path, true, [&](std::size_t, const json& j) {
    const auto id = required<std::string>(j, "pair_id");
    const double s = j.contains("score") ? j.at("score").get<double>() : required<double>(j, "value");
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValidationError("score for pair " + id + " outside [0, 1]: " + format_double(s));
    }
    out[id] = s;
  });
  return out;
}

void score_with_model(std::span<CandidatePair> pairs, const std::unordered_map<std::string, double>& scores) {
  for (auto& p : pairs) {
    auto it = scores.find(p.pair_id);
    if (it == scores.end()) throw ValidationError("score file has no entry for pair " + p.pair_id);
    if (!(it->second >= 0.0 && it->second <= 1.0)) {
      throw ValidationError("score for pair " + p.pair_id + " outside [0, 1]");
    }
    p.model_score = it->second;
  }
}

}  // namespace scd::pairs
