#include "scd/ims_scoring.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "scd/error.hpp"

namespace scd::ims {

ScoringInput scoring_input(const pairs::CandidatePair& p) {
  return {p.pair_id, p.finding_paper, p.finding_mention, pairs::finding_key(p.paper_doc_id, p.paper_sent_idx),
          pairs::finding_key(p.mention_doc_id, p.mention_sent_idx)};
}

double PairScorer::score(const ScoringInput& in) const {
  const double s = raw_score(in);
  if (std::isnan(s)) throw RuntimeFailure(name() + " produced NaN for pair " + in.pair_id);
  return std::clamp(s, kMinIms, kMaxIms);
}

double cosine_to_ims(double cos_sim) { return 1.0 + 4.0 * std::max(0.0, cos_sim); }

double probability_to_ims(double p) { return 1.0 + 4.0 * p; }

double CosineScorer::raw_score(const ScoringInput& in) const {
  const auto a = provider_.embed(in.key_a, in.text_a);
  const auto b = provider_.embed(in.key_b, in.text_b);
  if (a.zero || b.zero) return kMinIms;
  return cosine_to_ims(similarity::cosine_similarity(a, b));
}

ProbabilityScorer::ProbabilityScorer(std::unordered_map<std::string, double> table, std::string label)
    : table_(std::move(table)), label_(std::move(label)) {
  for (const auto& [id, p] : table_) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability outside [0, 1] for pair " + id);
  }
}

double ProbabilityScorer::raw_score(const ScoringInput& in) const {
  auto it = table_.find(in.pair_id);
  if (it == table_.end()) throw ValidationError(label_ + ": no probability for pair " + in.pair_id);
  return probability_to_ims(it->second);
}

ExternalScoreTable::ExternalScoreTable(std::unordered_map<std::string, double> table, std::string label)
    : table_(std::move(table)), label_(std::move(label)) {
  constexpr double slack = 1e-6;
  for (auto& [id, v] : table_) {
    if (!(v >= kMinIms - slack && v <= kMaxIms + slack)) {
      throw ValidationError("external score outside [1, 5] for pair " + id + ": " + format_double(v));
    }
    v = std::clamp(v, kMinIms, kMaxIms);
  }
}

double ExternalScoreTable::raw_score(const ScoringInput& in) const {
  auto it = table_.find(in.pair_id);
  if (it == table_.end()) throw ValidationError(label_ + ": no score for pair " + in.pair_id);
  return it->second;
}

double LexicalBaseline::raw_score(const ScoringInput& in) const {
  return 1.0 + 4.0 * similarity::jaccard_index(in.text_a, in.text_b);
}

std::unordered_map<std::string, double> read_value_table(const std::filesystem::path& path) {
  std::unordered_map<std::string, double> out;
  for_each_jsonl(path, true, [&](std::size_t, const json& j) {
    const auto id = required<std::string>(j, "pair_id");
    const double v = j.contains("value") ? j.at("value").get<double>() : required<double>(j, "score");
    if (!std::isfinite(v)) throw ValidationError("non-finite value for pair " + id);
    if (!out.emplace(id, v).second) throw ValidationError("duplicate pair_id " + id);
  });
  return out;
}

// ---------------------------------------------------------------------------

double mse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty()) throw std::invalid_argument("mse: need equal non-zero lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    s += d * d;
  }
  return s / static_cast<double>(y.size());
}

double pearson_r(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.size() < 2) throw std::invalid_argument("pearson_r: need equal lengths >= 2");
  const double n = static_cast<double>(y.size());
  double my = 0.0, mh = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my += y[i];
    mh += yhat[i];
  }
  my /= n;
  mh /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y[i] - my;
    const double b = yhat[i] - mh;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

SubsetMetrics subset_metrics(std::span<const double> y, std::span<const double> yhat) {
  SubsetMetrics m;
  m.n = y.size();
  if (m.n == 0) return m;
  m.mse = mse(y, yhat);
  try {
    m.pearson_r = pearson_r(y, yhat);
  } catch (const std::invalid_argument&) {
  }
  return m;
}

EvalReport evaluate_scorer(const PairScorer& scorer, std::span<const EvalPair> pairs) {
  std::vector<double> y_all, p_all, y_news, p_news, y_tw, p_tw;
  for (const auto& p : pairs) {
    if (p.provenance == annotation::Provenance::automatic) continue;
    const double s = scorer.score(p.input);
    y_all.push_back(p.ims);
    p_all.push_back(s);
    if (p.source_kind == corpus::SourceKind::tweet) {
      y_tw.push_back(p.ims);
      p_tw.push_back(s);
    } else {
      y_news.push_back(p.ims);
      p_news.push_back(s);
    }
  }
  EvalReport r;
  r.scorer = scorer.name();
  r.overall = subset_metrics(y_all, p_all);
  r.news = subset_metrics(y_news, p_news);
  r.tweets = subset_metrics(y_tw, p_tw);
  return r;
}

// ---------------------------------------------------------------------------

CorpusScoreStats score_corpus(const PairScorer& scorer, std::istream& in, std::ostream& out,
                              const CorpusScoreOptions& options) {
  CorpusScoreStats stats;
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk_size);
  std::vector<ordered_json> rows;
  std::vector<ScoringInput> inputs;
  std::vector<double> scores;
  std::string line;
  std::size_t line_no = 0;
  bool eof = false;

  while (!eof) {
    rows.clear();
    inputs.clear();
    while (rows.size() < chunk) {
      if (!std::getline(in, line)) {
        eof = true;
        break;
      }
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        ordered_json j = ordered_json::parse(line);
        inputs.push_back(scoring_input(pairs::pair_from_json(json::parse(line))));
        rows.push_back(std::move(j));
      } catch (const std::exception& e) {
        throw ValidationError("pair stream line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    scores.assign(rows.size(), 0.0);
    if (threads == 1 || rows.size() < 2) {
      for (std::size_t i = 0; i < rows.size(); ++i) scores[i] = scorer.score(inputs[i]);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(threads);
      const std::size_t per = (rows.size() + threads - 1) / threads;
      for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t b = t * per;
        const std::size_t e = std::min(rows.size(), b + per);
        if (b >= e) break;
        pool.emplace_back([&, b, e, t] {
          try {
            for (std::size_t i = b; i < e; ++i) scores[i] = scorer.score(inputs[i]);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
      }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ++stats.read;
      if (scores[i] > options.threshold) {
        rows[i]["ims_pred"] = scores[i];
        out << rows[i].dump() << '\n';
        ++stats.kept;
      }
    }
    if (options.progress) options.progress(stats);
  }
  return stats;
}

}  // namespace scd::ims
