// Acceptance gate: one PASS/FAIL line per primary criterion.
//
// Exit status is non-zero when a criterion fails for any reason other than
// the ones listed as known below, which are still printed as FAIL.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "scd/annotation.hpp"
#include "scd/ims_scoring.hpp"
#include "scd/mixed_effects.hpp"
#include "scd/pair_sampler.hpp"
#include "scd/retrieval.hpp"
#include "scd/similarity.hpp"
#include "scd/text.hpp"

namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, known_fail };

struct Outcome {
  Status status = Status::fail;
  std::string detail;
};

struct Criterion {
  std::string id;
  double limit_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream o;
  o << std::setprecision(prec) << v;
  return o.str();
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  scd::Rng rng(1001);
  std::map<std::string, std::size_t> bad;
  std::map<std::string, double> worst;
  auto note = [&](const std::string& name, double got, double want, double tol = 1e-12) {
    const double err = std::fabs(got - want);
    worst[name] = std::max(worst[name], err);
    if (!(err <= tol)) ++bad[name];
  };

  for (int t = 0; t < 1000; ++t) {
    // ranked lists
    std::vector<scd::retrieval::RankedList> lists;
    double ap_sum = 0.0, rr_sum = 0.0;
    const std::size_t nl = 1 + scd::uniform_below(rng, 5);
    for (std::size_t l = 0; l < nl; ++l) {
      scd::retrieval::RankedList rl;
      const std::size_t n = 1 + scd::uniform_below(rng, 15);
      for (std::size_t i = 0; i < n; ++i) rl.ranked.push_back("d" + std::to_string(i));
      for (std::size_t i = n; i > 1; --i) std::swap(rl.ranked[i - 1], rl.ranked[scd::uniform_below(rng, i)]);
      const std::size_t g = 1 + scd::uniform_below(rng, std::min<std::size_t>(n, 4));
      while (rl.gold.size() < g) rl.gold.insert(rl.ranked[scd::uniform_below(rng, n)]);
      const double ap = oracle::average_precision(rl.ranked, rl.gold);
      note("AP", scd::retrieval::average_precision(rl.ranked, rl.gold), ap);
      ap_sum += ap;
      rr_sum += oracle::rr_all_gold(rl.ranked, rl.gold);
      lists.push_back(rl);
    }
    note("MAP", scd::retrieval::mean_average_precision(lists), ap_sum / static_cast<double>(nl));
    note("MRR", scd::retrieval::mean_reciprocal_rank(lists), rr_sum / static_cast<double>(nl));

    // regression metrics
    const std::size_t n = 2 + scd::uniform_below(rng, 15);
    std::vector<double> y(n), f(n);
    for (auto& v : y) v = 1.0 + 4.0 * scd::uniform01(rng);
    for (auto& v : f) v = 1.0 + 4.0 * scd::uniform01(rng);
    note("MSE", scd::ims::mse(y, f), oracle::mse(y, f));
    note("Pearson", scd::ims::pearson_r(y, f), oracle::pearson(y, f));

    // similarity
    const auto s1 = fixture::random_text(rng, 14, true), s2 = fixture::random_text(rng, 14, true);
    note("Jaccard", scd::similarity::jaccard_index(s1, s2), oracle::jaccard(s1, s2));
    std::vector<double> a(1 + scd::uniform_below(rng, 12)), b(a.size());
    for (auto& v : a) v = fixture::normal(rng);
    for (auto& v : b) v = fixture::normal(rng);
    note("cosine", scd::similarity::cosine_similarity(a, b), oracle::cosine(a, b));
    const auto e1 = fixture::random_text(rng, 12), e2 = fixture::random_text(rng, 12);
    const auto c1 = scd::text::decode_utf8(e1), c2 = scd::text::decode_utf8(e2);
    const auto o1 = oracle::code_points(e1), o2 = oracle::code_points(e2);
    if (scd::similarity::levenshtein(c1, c2) != oracle::edit_distance(o1, o2)) ++bad["edit distance"];
    note("edit distance", scd::similarity::normalized_edit_distance(e1, e2), oracle::normalized_edit(e1, e2), 0.0);
  }
  std::ostringstream d;
  std::size_t total_bad = 0;
  for (const auto& [name, err] : worst) d << name << " " << fmt(err, 2) << "; ";
  for (const auto& [name, c] : bad) total_bad += c;
  d << "max abs error over 1000 instances, " << total_bad << " mismatches";
  return {total_bad == 0 ? Status::pass : Status::fail, d.str()};
}

Outcome auto_label_partition() {
  scd::Rng rng(1002);
  std::size_t violations = 0;
  std::map<scd::pairs::AutoLabel, std::size_t> counts;
  for (int i = 0; i < 10000; ++i) {
    // mix uniform draws with draws on and around the thresholds
    double c = scd::uniform01(rng), j = scd::uniform01(rng);
    if (i % 4 == 0) c = (scd::uniform_below(rng, 2) ? 0.4 : 0.9) + (scd::uniform01(rng) - 0.5) * 1e-9;
    if (i % 8 == 0) j = 0.5 + (scd::uniform01(rng) - 0.5) * 1e-9;
    const auto l = scd::pairs::auto_label(c, j);
    ++counts[l];
    const auto want = c < 0.4 ? scd::pairs::AutoLabel::auto_unmatched
                      : (c > 0.9 && j > 0.5) ? scd::pairs::AutoLabel::auto_matched
                                             : scd::pairs::AutoLabel::needs_annotation;
    violations += l != want;
  }
  std::size_t sum = 0;
  for (const auto& [l, c] : counts) sum += c;
  violations += sum != 10000;
  return {violations == 0 ? Status::pass : Status::fail,
          "10000 pairs, " + std::to_string(violations) + " violations (unmatched " +
              std::to_string(counts[scd::pairs::AutoLabel::auto_unmatched]) + ", matched " +
              std::to_string(counts[scd::pairs::AutoLabel::auto_matched]) + ", needs_annotation " +
              std::to_string(counts[scd::pairs::AutoLabel::needs_annotation]) + ")"};
}

Outcome stratified_sampling() {
  const auto pool = fixture::uniform_pool(6000, 0.4, 0.9, 1003);
  scd::pairs::SampleSpec spec;
  spec.per_bin = 60;
  spec.seed = 77;
  auto serialize = [](const scd::pairs::SampleResult& r) {
    std::string s;
    for (const auto& p : r.pairs) s += scd::pairs::pair_to_json(p).dump() + "\n";
    return s;
  };
  const auto a = stratified_sample(pool, spec);
  const auto b = stratified_sample(pool, spec);
  bool per_bin = a.bins.size() == 10;
  for (const auto& bin : a.bins) per_bin = per_bin && bin.drawn == 60;
  const bool same = serialize(a) == serialize(b);
  const bool ok = a.pairs.size() == 600 && per_bin && same;
  return {ok ? Status::pass : Status::fail, std::to_string(a.pairs.size()) + " pairs over " +
                                                std::to_string(a.bins.size()) + " bins, 60 per bin: " +
                                                (per_bin ? "yes" : "no") + ", bitwise rerun: " +
                                                (same ? "identical" : "different")};
}

Outcome mace_em() {
  const auto sim = fixture::simulate_mace(50, 500, 10, 1004);
  const auto res = scd::annotation::fit_mace(sim.records);
  std::vector<double> est;
  for (const auto& p : res.profiles) est.push_back(p.competence);
  const double rho = oracle::spearman(est, sim.theta);
  std::size_t drops = 0;
  for (std::size_t i = 1; i < res.objective_trace.size(); ++i) {
    if (res.objective_trace[i] < res.objective_trace[i - 1] - 1e-9 * std::fabs(res.objective_trace[i - 1])) ++drops;
  }
  const bool ok = rho >= 0.9 && drops == 0 && res.monotone;
  return {ok ? Status::pass : Status::fail, "Spearman " + fmt(rho, 4) + " (>= 0.9), " +
                                                std::to_string(res.objective_trace.size()) + " EM iterations, " +
                                                std::to_string(drops) + " decreases"};
}

Outcome krippendorff() {
  using scd::annotation::AlphaMetric;
  const double perfect = scd::annotation::krippendorff_alpha({{1, 1}, {4, 4}, {2, 2}, {5, 5}}, AlphaMetric::interval);
  const double adversarial = scd::annotation::krippendorff_alpha({{1, 5}, {5, 1}}, AlphaMetric::interval);

  const auto j = scd::json::parse(scd::read_file(fs::path(SCD_SOURCE_DIR) / "tests/fixtures/alpha_worked_example.json"));
  std::vector<std::vector<double>> units(j["observers"][0].size());
  for (const auto& o : j["observers"]) {
    for (std::size_t u = 0; u < o.size(); ++u) if (!o[u].is_null()) units[u].push_back(o[u].get<double>());
  }
  double worked_err = 0.0;
  worked_err = std::max(worked_err, std::fabs(scd::annotation::krippendorff_alpha(units, AlphaMetric::nominal) -
                                              oracle::alpha(units, oracle::Delta::nominal)));
  worked_err = std::max(worked_err, std::fabs(scd::annotation::krippendorff_alpha(units, AlphaMetric::ordinal) -
                                              oracle::alpha(units, oracle::Delta::ordinal)));
  worked_err = std::max(worked_err, std::fabs(scd::annotation::krippendorff_alpha(units, AlphaMetric::interval) -
                                              oracle::alpha(units, oracle::Delta::interval)));
  const double adversarial_oracle = oracle::alpha({{1, 5}, {5, 1}}, oracle::Delta::interval);

  const bool perfect_ok = perfect == 1.0;
  const bool worked_ok = worked_err <= 1e-9;
  const bool adversarial_ok = adversarial == -1.0;
  std::string d = "perfect " + fmt(perfect) + ", worked example max |diff| " + fmt(worked_err, 2) +
                  ", 2x2 interval " + fmt(adversarial) + " (target -1.0, pairwise oracle " + fmt(adversarial_oracle) + ")";
  if (perfect_ok && worked_ok && adversarial_ok) return {Status::pass, d};
  // -1 requires the expected disagreement without the n-1 correction; the
  // coefficient as defined gives -0.5 for this fixture.
  if (perfect_ok && worked_ok && std::fabs(adversarial - adversarial_oracle) <= 1e-12) {
    return {Status::known_fail, d + "; target unreachable under the standard coefficient"};
  }
  return {Status::fail, d};
}

Outcome reml() {
  scd::Rng rng(1006);
  double anova_err = 0.0;
  for (std::size_t g : {5u, 20u}) {
    for (std::size_t m : {4u, 30u}) {
      auto y = fixture::one_way_data(g, m, 2.5, 1.0, 0.7, rng);
      auto ref = oracle::anova_reml(y);
      while (ref.sigma2_group == 0.0) {
        y = fixture::one_way_data(g, m, 2.5, 1.0, 0.7, rng);
        ref = oracle::anova_reml(y);
      }
      const auto fit = scd::lmm::fit_reml(fixture::one_way_design(y));
      anova_err = std::max({anova_err, std::fabs(fit.sigma2_resid - ref.sigma2),
                            std::fabs(fit.sigma2_group - ref.sigma2_group)});
    }
  }
  const auto d0 = fixture::no_group_effect_design(15, 8, rng);
  const auto f0 = scd::lmm::fit_reml(d0);
  const Eigen::VectorXd b_ols = d0.X.colPivHouseholderQr().solve(d0.y);
  double ols_err = 0.0;
  for (std::size_t k = 0; k < f0.beta.size(); ++k) ols_err = std::max(ols_err, std::fabs(f0.beta[k] - b_ols(static_cast<Eigen::Index>(k))));

  int covered = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto d = fixture::covariate_design(20, 10, 1.0, 0.5, 1.0, 0.5, rng);
    const auto fit = scd::lmm::fit_reml(d);
    covered += fit.ci95[1].first <= 0.5 && 0.5 <= fit.ci95[1].second;
  }
  const double coverage = covered / 1000.0;
  const bool ok = anova_err <= 1e-6 && f0.lambda <= 1e-6 && ols_err <= 1e-8 && std::fabs(coverage - 0.95) <= 0.03;
  return {ok ? Status::pass : Status::fail, "ANOVA max |diff| " + fmt(anova_err, 2) + ", null-effect lambda " +
                                                fmt(f0.lambda, 2) + " with |beta - OLS| " + fmt(ols_err, 2) +
                                                ", CI coverage " + fmt(coverage * 100.0, 4) + "%"};
}

Outcome end_to_end() {
  const fs::path mini = fs::path(SCD_SOURCE_DIR) / "data" / "mini";
  const fs::path out = fs::temp_directory_path() / "scd_acceptance_e2e";
  const std::string cmd = "\"" + std::string(SCD_CLI_PATH) + "\" all --config \"" + (mini / "config.json").string() +
                          "\" --output-dir \"" + out.string() + "\" >/dev/null 2>&1";
  auto digests = [&]() {
    std::map<std::string, std::string> d;
    for (const auto& stage : {"ingest", "extract", "pair", "sample", "aggregate", "score", "analyze", "report"}) {
      const auto m = scd::json::parse(scd::read_file(out / "manifests" / (std::string(stage) + ".json")));
      for (const auto& [k, v] : m["outputs"].items()) d[k] = v.get<std::string>();
    }
    return d;
  };
  double first_s = 0.0;
  std::map<std::string, std::string> runs[2];
  for (int r = 0; r < 2; ++r) {
    fs::remove_all(out);
    const auto t0 = std::chrono::steady_clock::now();
    const int raw = std::system(cmd.c_str());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r == 0) first_s = secs;
    const int code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    if (code != 0) return {Status::fail, "run " + std::to_string(r + 1) + " exited with " + std::to_string(code)};
    runs[r] = digests();
  }
  const auto pairs = scd::read_jsonl(out / "pairs.jsonl").size();
  fs::remove_all(out);
  const bool same = runs[0] == runs[1] && !runs[0].empty();
  const bool ok = same && first_s < 60.0;
  return {ok ? Status::pass : Status::fail, "exit 0 in " + fmt(first_s, 3) + " s, " + std::to_string(pairs) +
                                                " pairs, " + std::to_string(runs[0].size()) + " output digests " +
                                                (same ? "identical" : "differ") + " on rerun"};
}

// Released-data checks run only when the files are supplied.
Outcome external_data() {
  const char* pairs_env = std::getenv("SCD_EXT_PAIRS");
  const char* test_env = std::getenv("SCD_EXT_TEST_SPLIT");
  const char* scores_env = std::getenv("SCD_EXT_SCORES");
  const char* retrieval_env = std::getenv("SCD_EXT_RETRIEVAL_DIR");
  if (!pairs_env || !test_env || !scores_env || !retrieval_env) {
    return {Status::known_fail,
            "released datasets not present (set SCD_EXT_PAIRS, SCD_EXT_TEST_SPLIT, SCD_EXT_SCORES, SCD_EXT_RETRIEVAL_DIR); "
            "not desk-reproducible"};
  }
  std::ostringstream d;
  bool ok = true;

  // Matching-pair edit distances, either unit.
  std::vector<scd::similarity::MatchCandidate> all, news, tweets;
  for (const auto& r : scd::read_jsonl(pairs_env)) {
    scd::similarity::MatchCandidate c{r.at("s1").get<std::string>(), r.at("s2").get<std::string>(),
                                      r.at("score").get<double>(), {}};
    all.push_back(c);
    (r.at("source").get<std::string>() == "tweet" ? tweets : news).push_back(c);
  }
  const auto rule = scd::similarity::MatchRule::score_above(3.0);
  bool any_unit = false;
  for (auto unit : {scd::similarity::EditUnit::character, scd::similarity::EditUnit::token}) {
    const double a = avg_matching_edit_distance(all, rule, unit);
    const double n = avg_matching_edit_distance(news, rule, unit);
    const double t = avg_matching_edit_distance(tweets, rule, unit);
    d << (unit == scd::similarity::EditUnit::character ? "char" : "token") << " " << fmt(a, 3) << "/" << fmt(n, 3)
      << "/" << fmt(t, 3) << "; ";
    any_unit = any_unit || (std::fabs(a - 0.726) <= 0.005 && std::fabs(n - 0.712) <= 0.005 &&
                            std::fabs(t - 0.749) <= 0.005);
  }
  ok = ok && any_unit;

  // Zero-shot scorer on the test split.
  const scd::ims::ExternalScoreTable table(scd::ims::read_value_table(scores_env), "zero-shot");
  std::vector<double> y, f;
  for (const auto& r : scd::read_jsonl(test_env)) {
    y.push_back(r.at("ims").get<double>());
    f.push_back(table.score({r.at("pair_id").get<std::string>(), "", "", "", ""}));
  }
  const double m = scd::ims::mse(y, f), r = scd::ims::pearson_r(y, f);
  d << "MSE " << fmt(m, 4) << " r " << fmt(r * 100.0, 4) << "; ";
  ok = ok && std::fabs(m - 0.628) <= 0.005 && std::fabs(r * 100.0 - 73.98) <= 0.5;

  // BM25 on the claim/evidence set.
  const fs::path ret = retrieval_env;
  const auto claims = scd::retrieval::read_claims(ret / "claims.jsonl");
  const auto pool = scd::retrieval::read_pool(ret / "pool.jsonl");
  const scd::retrieval::Bm25Index index(pool);
  const auto res = evaluate_retrieval(scd::retrieval::Bm25Ranker(index), claims, pool);
  d << "BM25 MAP " << fmt(res.map * 100.0, 4) << " MRR " << fmt(res.mrr * 100.0, 4);
  ok = ok && std::fabs(res.map * 100.0 - 12.45) <= 1.5 && std::fabs(res.mrr * 100.0 - 20.78) <= 1.5;
  return {ok ? Status::pass : Status::fail, d.str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"metric_oracles", 10.0, metric_oracles},
      {"auto_label_thresholds", 0.0, auto_label_partition},
      {"stratified_sampling", 0.0, stratified_sampling},
      {"mace_em", 30.0, mace_em},
      {"krippendorff_alpha", 0.0, krippendorff},
      {"reml", 60.0, reml},
      {"end_to_end_smoke", 60.0, end_to_end},
      {"external_data", 0.0, external_data},
  };
  int unexpected = 0, known = 0, passed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0.0 && secs >= c.limit_s && o.status == Status::pass) {
      o = {Status::fail, o.detail + "; exceeded " + fmt(c.limit_s) + " s"};
    }
    const bool pass = o.status == Status::pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(22) << c.id << " " << o.detail << " ["
              << std::fixed << std::setprecision(2) << secs << " s" << (c.limit_s > 0 ? " / " + fmt(c.limit_s) + " s" : "")
              << "]" << std::defaultfloat << (o.status == Status::known_fail ? "  (known)" : "") << '\n';
    passed += pass;
    known += o.status == Status::known_fail;
    unexpected += o.status == Status::fail;
  }
  std::cout << passed << "/" << criteria.size() << " passed, " << known << " known failure(s), " << unexpected
            << " unexpected failure(s)\n";
  return unexpected == 0 ? 0 : 1;
}
