#include "scd/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "scd/error.hpp"

namespace scd::annotation {

void validate_records(std::span<const AnnotationRecord> records) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    if (r.rating < kMinRating || r.rating > kMaxRating) {
      throw ValidationError("rating out of range for pair " + r.pair_id + " by " + r.annotator_id + ": " +
                            std::to_string(r.rating));
    }
    if (!seen.emplace(r.pair_id, r.annotator_id).second) {
      throw ValidationError("duplicate rating for pair " + r.pair_id + " by annotator " + r.annotator_id);
    }
  }
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  for_each_jsonl(path, true, [&](std::size_t, const json& j) {
    AnnotationRecord r;
    r.pair_id = required<std::string>(j, "pair_id");
    r.annotator_id = required<std::string>(j, "annotator_id");
    r.rating = required<int>(j, "rating");
    out.push_back(std::move(r));
  });
  validate_records(out);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Indexed {
  std::vector<std::string> items;
  std::vector<std::string> annotators;
  struct Obs {
    std::size_t item;
    std::size_t annotator;
    std::size_t label;  // 0-based
  };
  std::vector<Obs> obs;
  std::vector<std::vector<std::size_t>> obs_by_item;
};

Indexed index_records(std::span<const AnnotationRecord> records) {
  Indexed ix;
  std::map<std::string, std::size_t> item_id, annot_id;
  for (const auto& r : records) {
    item_id.emplace(r.pair_id, 0);
    annot_id.emplace(r.annotator_id, 0);
  }
  for (auto& [k, v] : item_id) {
    v = ix.items.size();
    ix.items.push_back(k);
  }
  for (auto& [k, v] : annot_id) {
    v = ix.annotators.size();
    ix.annotators.push_back(k);
  }
  ix.obs_by_item.resize(ix.items.size());
  for (const auto& r : records) {
    const Indexed::Obs o{item_id[r.pair_id], annot_id[r.annotator_id], static_cast<std::size_t>(r.rating - kMinRating)};
    ix.obs_by_item[o.item].push_back(ix.obs.size());
    ix.obs.push_back(o);
  }
  return ix;
}

struct MaceParams {
  std::vector<double> theta;
  std::vector<std::array<double, kNumRatings>> xi;
};

struct EStep {
  double log_likelihood = 0.0;
  std::vector<std::array<double, kNumRatings>> posterior;
};

EStep e_step(const Indexed& ix, const MaceParams& p) {
  EStep e;
  e.posterior.resize(ix.items.size());
  const double log_prior = -std::log(static_cast<double>(kNumRatings));
  for (std::size_t i = 0; i < ix.items.size(); ++i) {
    std::array<double, kNumRatings> lp{};
    lp.fill(log_prior);
    for (std::size_t oi : ix.obs_by_item[i]) {
      const auto& o = ix.obs[oi];
      const double th = p.theta[o.annotator];
      const double spam = (1.0 - th) * p.xi[o.annotator][o.label];
      for (std::size_t t = 0; t < kNumRatings; ++t) {
        lp[t] += std::log((t == o.label ? th : 0.0) + spam);
      }
    }
    const double m = *std::max_element(lp.begin(), lp.end());
    double s = 0.0;
    for (double v : lp) s += std::exp(v - m);
    const double lse = m + std::log(s);
    e.log_likelihood += lse;
    for (std::size_t t = 0; t < kNumRatings; ++t) e.posterior[i][t] = std::exp(lp[t] - lse);
  }
  return e;
}

double log_prior(const MaceParams& p, double alpha) {
  if (alpha == 0.0) return 0.0;
  double lp = 0.0;
  for (std::size_t j = 0; j < p.theta.size(); ++j) {
    lp += alpha * (std::log(p.theta[j]) + std::log1p(-p.theta[j]));
    for (double x : p.xi[j]) lp += alpha * std::log(x);
  }
  return lp;
}

void m_step(const Indexed& ix, const EStep& e, double alpha, MaceParams& p) {
  const std::size_t A = ix.annotators.size();
  std::vector<double> copy(A, 0.0), total(A, 0.0);
  std::vector<std::array<double, kNumRatings>> spam(A);
  for (auto& s : spam) s.fill(0.0);
  for (const auto& o : ix.obs) {
    const double th = p.theta[o.annotator];
    const double sp = (1.0 - th) * p.xi[o.annotator][o.label];
    const double c = e.posterior[o.item][o.label] * th / (th + sp);
    copy[o.annotator] += c;
    total[o.annotator] += 1.0;
    spam[o.annotator][o.label] += 1.0 - c;
  }
  for (std::size_t j = 0; j < A; ++j) {
    p.theta[j] = (copy[j] + alpha) / (total[j] + 2.0 * alpha);
    const double s = std::accumulate(spam[j].begin(), spam[j].end(), 0.0);
    for (std::size_t k = 0; k < kNumRatings; ++k) {
      p.xi[j][k] = (spam[j][k] + alpha) / (s + static_cast<double>(kNumRatings) * alpha);
    }
  }
  // With no smoothing a parameter can hit 0 or 1 exactly; keep logs finite.
  constexpr double eps = 1e-12;
  for (std::size_t j = 0; j < A; ++j) {
    p.theta[j] = std::clamp(p.theta[j], eps, 1.0 - eps);
    for (auto& x : p.xi[j]) {
      if (!(x > eps)) x = eps;
    }
  }
}

MaceParams init_params(std::size_t A, int restart, Rng& rng) {
  MaceParams p;
  p.theta.resize(A);
  p.xi.resize(A);
  for (std::size_t j = 0; j < A; ++j) {
    if (restart == 0) {
      p.theta[j] = 0.8;
      p.xi[j].fill(1.0 / static_cast<double>(kNumRatings));
      continue;
    }
    p.theta[j] = 0.2 + 0.75 * uniform01(rng);
    double s = 0.0;
    for (auto& x : p.xi[j]) s += (x = 0.1 + uniform01(rng));
    for (auto& x : p.xi[j]) x /= s;
  }
  return p;
}

}  // namespace

MaceResult fit_mace(std::span<const AnnotationRecord> records, const MaceConfig& config) {
  validate_records(records);
  if (records.empty()) throw ValidationError("fit_mace: no annotation records");
  if (config.smoothing_alpha < 0.0) throw ValidationError("fit_mace: smoothing_alpha must be non-negative");
  const Indexed ix = index_records(records);
  const std::size_t A = ix.annotators.size();

  MaceResult best;
  best.objective = -std::numeric_limits<double>::infinity();
  MaceParams best_params;
  EStep best_e;
  Rng rng(config.seed);

  for (int r = 0; r < std::max(1, config.n_restarts); ++r) {
    MaceParams p = init_params(A, r, rng);
    std::vector<double> trace;
    bool converged = false;
    bool monotone = true;
    int iters = 0;
    EStep e = e_step(ix, p);
    double obj = e.log_likelihood + log_prior(p, config.smoothing_alpha);
    trace.push_back(obj);
    for (int it = 0; it < config.max_iter; ++it) {
      m_step(ix, e, config.smoothing_alpha, p);
      e = e_step(ix, p);
      const double next = e.log_likelihood + log_prior(p, config.smoothing_alpha);
      trace.push_back(next);
      iters = it + 1;
      if (next < obj - 1e-9 * std::max(1.0, std::fabs(obj))) monotone = false;
      const double rel = std::fabs(next - obj) / std::max(1.0, std::fabs(obj));
      obj = next;
      if (rel < config.tol) {
        converged = true;
        break;
      }
    }
    best.restart_objectives.push_back(obj);
    if (obj > best.objective) {
      best.objective = obj;
      best.log_likelihood = e.log_likelihood;
      best.objective_trace = std::move(trace);
      best.iterations = iters;
      best.converged = converged;
      best.monotone = monotone;
      best_params = p;
      best_e = std::move(e);
    }
  }

  std::vector<std::size_t> counts(A, 0);
  for (const auto& o : ix.obs) ++counts[o.annotator];
  for (std::size_t j = 0; j < A; ++j) {
    best.profiles.push_back({ix.annotators[j], best_params.theta[j], best_params.xi[j], counts[j]});
  }
  for (std::size_t i = 0; i < ix.items.size(); ++i) {
    const auto& post = best_e.posterior[i];
    best.posteriors[ix.items[i]] = post;
    best.posterior_labels[ix.items[i]] =
        kMinRating + static_cast<int>(std::max_element(post.begin(), post.end()) - post.begin());
  }
  return best;
}

FilterResult filter_low_competence(std::span<const AnnotationRecord> records,
                                   std::span<const AnnotatorProfile> profiles, double drop_fraction) {
  if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) {
    throw ValidationError("drop_fraction must lie in [0, 1), got " + format_double(drop_fraction));
  }
  std::map<std::string, double> competence;
  for (const auto& p : profiles) competence[p.annotator_id] = p.competence;
  std::set<std::string> annotators;
  for (const auto& r : records) {
    if (!competence.contains(r.annotator_id)) {
      throw ValidationError("no competence profile for annotator " + r.annotator_id);
    }
    annotators.insert(r.annotator_id);
  }
  std::vector<std::string> order(annotators.begin(), annotators.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](const auto& a, const auto& b) { return competence[a] < competence[b]; });
  const auto n_drop = static_cast<std::size_t>(
      std::ceil(drop_fraction * static_cast<double>(order.size()) - 1e-9));

  FilterResult out;
  out.removed_annotators.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_drop, order.size())));
  const std::set<std::string> removed(out.removed_annotators.begin(), out.removed_annotators.end());
  std::set<std::string> before, after;
  for (const auto& r : records) {
    before.insert(r.pair_id);
    if (removed.contains(r.annotator_id)) continue;
    after.insert(r.pair_id);
    out.records.push_back(r);
  }
  std::set_difference(before.begin(), before.end(), after.begin(), after.end(), std::back_inserter(out.emptied_items));
  std::sort(out.removed_annotators.begin(), out.removed_annotators.end());
  return out;
}

RatingStats stats_of(std::span<const double> values) {
  RatingStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

std::map<std::string, RatingStats> rating_stats(std::span<const AnnotationRecord> records) {
  std::map<std::string, std::vector<double>> by_pair;
  for (const auto& r : records) by_pair[r.pair_id].push_back(r.rating);
  std::map<std::string, RatingStats> out;
  for (const auto& [id, vals] : by_pair) out[id] = stats_of(vals);
  return out;
}

std::set<std::string> flag_outliers(std::span<const AnnotationRecord> records, double std_threshold) {
  std::set<std::string> out;
  for (const auto& [id, s] : rating_stats(records)) {
    if (s.std > std_threshold) out.insert(id);
  }
  return out;
}

std::vector<ExpertOverride> read_overrides(const std::filesystem::path& path) {
  std::vector<ExpertOverride> out;
  for_each_jsonl(path, true, [&](std::size_t, const json& j) {
    ExpertOverride o;
    o.pair_id = required<std::string>(j, "pair_id");
    o.annotator_id = required<std::string>(j, "annotator_id");
    o.new_rating = j.contains("new_rating") ? j.at("new_rating").get<int>() : required<int>(j, "rating");
    out.push_back(std::move(o));
  });
  return out;
}

OverrideResult apply_expert_overrides(std::span<const AnnotationRecord> records,
                                      std::span<const ExpertOverride> overrides,
                                      const std::set<std::string>& flagged) {
  OverrideResult out;
  out.records.assign(records.begin(), records.end());
  std::map<std::pair<std::string, std::string>, std::size_t> where;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    where[{out.records[i].pair_id, out.records[i].annotator_id}] = i;
  }
  for (const auto& o : overrides) {
    auto it = where.find({o.pair_id, o.annotator_id});
    if (it == where.end()) {
      throw ValidationError("override target not found: pair " + o.pair_id + ", annotator " + o.annotator_id);
    }
    if (o.new_rating < kMinRating || o.new_rating > kMaxRating) {
      throw ValidationError("override rating out of range for pair " + o.pair_id);
    }
    if (!flagged.contains(o.pair_id)) {
      out.warnings.push_back("override applied to pair " + o.pair_id + " which is not flagged as an outlier");
    }
    out.records[it->second].rating = o.new_rating;
    out.overridden_pairs.insert(o.pair_id);
  }
  return out;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::annotated: return "annotated";
    case Provenance::automatic: return "auto";
    case Provenance::expert_override: return "expert_override";
  }
  return "?";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "annotated") return Provenance::annotated;
  if (s == "auto") return Provenance::automatic;
  if (s == "expert_override") return Provenance::expert_override;
  throw ValidationError("unknown provenance \"" + std::string(s) + "\"");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split \"" + std::string(s) + "\"");
}

ordered_json aggregated_to_json(const AggregatedPair& a) {
  ordered_json j;
  j["pair_id"] = a.pair_id;
  j["ims"] = a.ims;
  j["n_ratings"] = a.n_ratings;
  j["rating_std"] = a.rating_std;
  j["flagged_outlier"] = a.flagged_outlier;
  j["provenance"] = to_string(a.provenance);
  if (a.split) j["split"] = to_string(*a.split);
  return j;
}

AggregatedPair aggregated_from_json(const json& j) {
  AggregatedPair a;
  a.pair_id = required<std::string>(j, "pair_id");
  a.ims = required<double>(j, "ims");
  a.n_ratings = required<std::size_t>(j, "n_ratings");
  a.rating_std = required<double>(j, "rating_std");
  a.flagged_outlier = required<bool>(j, "flagged_outlier");
  a.provenance = parse_provenance(required<std::string>(j, "provenance"));
  if (j.contains("split")) a.split = parse_split(j.at("split").get<std::string>());
  if (!(a.ims >= 1.0 && a.ims <= 5.0)) throw ValidationError("ims outside [1, 5] for pair " + a.pair_id);
  return a;
}

std::vector<AggregatedPair> aggregate_ims(std::span<const AnnotationRecord> records, std::span<const AutoPair> auto_pairs,
                                          const std::set<std::string>& flagged,
                                          const std::set<std::string>& overridden) {
  std::vector<AggregatedPair> out;
  std::set<std::string> annotated;
  for (const auto& [id, s] : rating_stats(records)) {
    AggregatedPair a;
    a.pair_id = id;
    a.ims = std::clamp(s.mean, 1.0, 5.0);
    a.n_ratings = s.n;
    a.rating_std = s.std;
    a.flagged_outlier = flagged.contains(id);
    a.provenance = overridden.contains(id) ? Provenance::expert_override : Provenance::annotated;
    annotated.insert(id);
    out.push_back(std::move(a));
  }
  for (const auto& ap : auto_pairs) {
    if (ap.label == pairs::AutoLabel::needs_annotation) {
      throw ValidationError("pair " + ap.pair_id + " needs annotation and cannot be auto-labeled");
    }
    if (annotated.contains(ap.pair_id)) {
      throw ValidationError("pair " + ap.pair_id + " is both annotated and auto-labeled");
    }
    AggregatedPair a;
    a.pair_id = ap.pair_id;
    a.ims = ap.label == pairs::AutoLabel::auto_matched ? 5.0 : 1.0;
    a.provenance = Provenance::automatic;
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------

AlphaMetric parse_alpha_metric(std::string_view s) {
  if (s == "interval") return AlphaMetric::interval;
  if (s == "ordinal") return AlphaMetric::ordinal;
  if (s == "nominal") return AlphaMetric::nominal;
  throw ValidationError("unknown agreement metric \"" + std::string(s) + "\"");
}

double krippendorff_alpha(const std::vector<std::vector<double>>& units, AlphaMetric metric) {
  // Distinct values and the coincidence matrix o[c][k].
  std::vector<double> values;
  for (const auto& u : units) {
    if (u.size() >= 2) values.insert(values.end(), u.begin(), u.end());
  }
  if (values.empty()) throw std::invalid_argument("krippendorff_alpha: no pairable values");
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const std::size_t V = values.size();
  const auto idx = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v) - values.begin());
  };

  std::vector<double> o(V * V, 0.0);
  for (const auto& u : units) {
    const std::size_t m = u.size();
    if (m < 2) continue;
    const double w = 1.0 / static_cast<double>(m - 1);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        if (a != b) o[idx(u[a]) * V + idx(u[b])] += w;
      }
    }
  }
  std::vector<double> nc(V, 0.0);
  for (std::size_t c = 0; c < V; ++c) {
    for (std::size_t k = 0; k < V; ++k) nc[c] += o[c * V + k];
  }
  const double n = std::accumulate(nc.begin(), nc.end(), 0.0);

  const auto delta2 = [&](std::size_t c, std::size_t k) -> double {
    switch (metric) {
      case AlphaMetric::nominal: return c == k ? 0.0 : 1.0;
      case AlphaMetric::interval: {
        const double d = values[c] - values[k];
        return d * d;
      }
      case AlphaMetric::ordinal: {
        const std::size_t lo = std::min(c, k), hi = std::max(c, k);
        double s = 0.0;
        for (std::size_t g = lo; g <= hi; ++g) s += nc[g];
        s -= (nc[lo] + nc[hi]) / 2.0;
        return s * s;
      }
    }
    return 0.0;
  };

  double d_obs = 0.0, d_exp = 0.0;
  for (std::size_t c = 0; c < V; ++c) {
    for (std::size_t k = 0; k < V; ++k) {
      const double d = delta2(c, k);
      d_obs += o[c * V + k] * d;
      d_exp += nc[c] * nc[k] * d;
    }
  }
  d_obs /= n;
  d_exp /= n * (n - 1.0);
  if (d_exp == 0.0) {
    if (d_obs == 0.0) return 1.0;
    throw std::invalid_argument("krippendorff_alpha: zero expected disagreement");
  }
  return 1.0 - d_obs / d_exp;
}

double krippendorff_alpha(std::span<const AnnotationRecord> records, AlphaMetric metric) {
  std::map<std::string, std::vector<double>> by_pair;
  for (const auto& r : records) by_pair[r.pair_id].push_back(r.rating);
  std::vector<std::vector<double>> units;
  units.reserve(by_pair.size());
  for (auto& [id, v] : by_pair) units.push_back(std::move(v));
  return krippendorff_alpha(units, metric);
}

// ---------------------------------------------------------------------------

std::vector<SplitAssignment> make_splits(std::span<const SplitItem> items, std::array<double, 3> ratios,
                                         std::uint64_t seed) {
  const double total_ratio = ratios[0] + ratios[1] + ratios[2];
  if (std::any_of(ratios.begin(), ratios.end(), [](double r) { return r < 0.0; }) ||
      std::fabs(total_ratio - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be non-negative and sum to 1");
  }
  struct DoiInfo {
    corpus::Field field;
    std::size_t count = 0;
  };
  std::map<std::string, DoiInfo> dois;
  for (const auto& it : items) {
    if (it.doi.empty()) throw ValidationError("pair " + it.pair_id + " has no DOI");
    auto [pos, inserted] = dois.emplace(it.doi, DoiInfo{it.field, 0});
    if (!inserted && pos->second.field != it.field) {
      throw ValidationError("DOI " + it.doi + " appears with more than one field");
    }
    ++pos->second.count;
  }

  std::map<corpus::Field, std::vector<std::string>> by_field;
  for (const auto& [doi, info] : dois) by_field[info.field].push_back(doi);

  Rng rng(seed);
  std::map<std::string, Split> doi_split;
  for (auto& [field, list] : by_field) {
    for (std::size_t i = list.size(); i > 1; --i) {
      std::swap(list[i - 1], list[static_cast<std::size_t>(uniform_below(rng, i))]);
    }
    std::stable_sort(list.begin(), list.end(),
                     [&](const auto& a, const auto& b) { return dois[a].count > dois[b].count; });
    double field_total = 0.0;
    for (const auto& d : list) field_total += static_cast<double>(dois[d].count);
    std::array<double, 3> assigned{};
    for (const auto& d : list) {
      std::size_t best = 0;
      double best_deficit = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < 3; ++s) {
        const double deficit = ratios[s] * field_total - assigned[s];
        if (deficit > best_deficit + 1e-12) {
          best_deficit = deficit;
          best = s;
        }
      }
      assigned[best] += static_cast<double>(dois[d].count);
      doi_split[d] = static_cast<Split>(best);
    }
  }

  std::vector<SplitAssignment> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back({it.pair_id, doi_split.at(it.doi)});
  return out;
}

}  // namespace scd::annotation
