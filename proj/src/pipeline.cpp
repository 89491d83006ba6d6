#include "scd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "scd/annotation.hpp"
#include "scd/corpus_store.hpp"
#include "scd/error.hpp"
#include "scd/finding_extractor.hpp"
#include "scd/ims_scoring.hpp"
#include "scd/mixed_effects.hpp"
#include "scd/pair_sampler.hpp"
#include "scd/retrieval.hpp"
#include "scd/similarity.hpp"

namespace fs = std::filesystem;

namespace scd::pipeline {

ordered_json default_config() {
  return ordered_json::parse(R"json({
  "threads": 1,
  "strict": false,
  "paths": {
    "documents": null,
    "training": null,
    "annotations": null,
    "overrides": null,
    "vectors": null,
    "output_dir": "out"
  },
  "extract": {"l2_penalty": 1e-4, "max_epochs": 300, "tol": 1e-4, "hash_dim": 262144, "seed": 0, "heldout_every": 5},
  "tfidf": {"hash_dim": 16384},
  "thresholds": {
    "auto_unmatched_below": 0.4,
    "auto_matched_above": 0.9,
    "auto_jaccard_above": 0.5,
    "match": 3.0,
    "outlier_std": 1.2
  },
  "sampling": {
    "bin_width": 0.05, "lo": 0.4, "hi": 0.9, "per_bin": 60, "seed": 0,
    "score_source": "cosine", "score_file": null, "pilot_per_bin": 0
  },
  "annotation": {
    "drop_fraction": 0.05,
    "alpha_metric": "interval",
    "mace": {"max_iter": 500, "tol": 1e-8, "n_restarts": 10, "smoothing_alpha": 0.1, "seed": 0}
  },
  "splits": {"ratios": [0.8, 0.1, 0.1], "seed": 0},
  "scoring": {"scorer": "cosine", "table": null, "chunk_size": 4096},
  "eval": {
    "split": "test",
    "scorers": [{"name": "cosine", "kind": "cosine"}, {"name": "lexical", "kind": "lexical"}]
  },
  "retrieval": {"k1": 1.2, "b": 0.75, "mrr_mode": "all_gold", "datasets": [], "methods": [{"name": "bm25", "kind": "bm25"}]},
  "regressions": [
    {
      "name": "rq1",
      "response": "ims_pred",
      "grouping": "paper_doi",
      "min_group_size": 31,
      "filter": {"source_kind": "news"},
      "fixed": [
        {"name": "outlet_type", "kind": "categorical", "reference_level": "general_news"},
        {"name": "field", "kind": "categorical", "reference_level": "other"}
      ],
      "labels": {
        "outlet_type[press_release]": "Outlet Type: Press Release",
        "outlet_type[sci_tech]": "Outlet Type: Science & Technology",
        "field[biology]": "Field: Biology",
        "field[psychology]": "Field: Psychology",
        "field[medicine]": "Field: Medicine",
        "field[computer_science]": "Field: Computer_science"
      }
    },
    {
      "name": "rq2",
      "response": "ims_pred",
      "grouping": "paper_doi",
      "min_group_size": 31,
      "filter": {"source_kind": "tweet"},
      "fixed": [
        {"name": "is_verified", "kind": "numeric"},
        {"name": "is_organization", "kind": "numeric"},
        {"name": "followers", "kind": "numeric", "transform": "log1p"},
        {"name": "following", "kind": "numeric", "transform": "log1p"},
        {"name": "account_age_years", "kind": "numeric"},
        {"name": "field", "kind": "categorical", "reference_level": "other"}
      ],
      "labels": {
        "is_verified": "Is Verified User?",
        "is_organization": "Is Organizational Account?",
        "followers": "User Metric: log(Followers)",
        "following": "User Metric: log(Following)",
        "account_age_years": "User Metric: Account Age (in years)",
        "field[biology]": "Field: Biology",
        "field[psychology]": "Field: Psychology",
        "field[medicine]": "Field: Medicine",
        "field[computer_science]": "Field: Computer_science"
      }
    }
  ]
})json");
}

namespace {

const json* find_dotted(const json& tree, const std::string& dotted) {
  const json* cur = &tree;
  std::size_t pos = 0;
  while (pos <= dotted.size()) {
    const std::size_t dot = dotted.find('.', pos);
    const std::string key = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!cur->is_object()) return nullptr;
    auto it = cur->find(key);
    if (it == cur->end()) return nullptr;
    cur = &*it;
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return cur;
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ValidationError(what + " path is not configured");
  if (!fs::is_regular_file(p)) throw ValidationError(what + " file not found: " + p.string());
}

double num(const json& tree, const std::string& key) {
  const json* v = find_dotted(tree, key);
  if (!v || !v->is_number()) throw ValidationError("config: " + key + " must be a number");
  return v->get<double>();
}

void check_range(const json& tree, const std::string& key, double lo, double hi) {
  const double v = num(tree, key);
  if (!(v >= lo && v <= hi)) {
    throw ValidationError("config: " + key + " = " + format_double(v) + " outside [" + format_double(lo) + ", " +
                          format_double(hi) + "]");
  }
}

}  // namespace

const json& PipelineConfig::at(const std::string& dotted) const {
  const json* v = find_dotted(tree, dotted);
  if (!v) throw ValidationError("config: missing key " + dotted);
  return *v;
}

fs::path PipelineConfig::input_path(const std::string& dotted) const {
  const json* v = find_dotted(tree, dotted);
  if (!v || v->is_null()) return {};
  if (!v->is_string()) throw ValidationError("config: " + dotted + " must be a path string");
  fs::path p = v->get<std::string>();
  return p.is_absolute() ? p : base_dir / p;
}

std::string PipelineConfig::sha256() const { return scd::sha256_hex(tree.dump()); }

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* cur = &tree;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ValidationError("override has an empty key segment: " + key);
    if (!cur->is_object()) *cur = json::object();
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    cur = &(*cur)[part];
    pos = dot + 1;
  }
}

void validate_config(const json& t) {
  check_range(t, "thresholds.auto_unmatched_below", 0.0, 1.0);
  check_range(t, "thresholds.auto_matched_above", 0.0, 1.0);
  check_range(t, "thresholds.auto_jaccard_above", 0.0, 1.0);
  check_range(t, "thresholds.match", 1.0, 5.0);
  check_range(t, "thresholds.outlier_std", 0.0, 4.0);
  if (num(t, "thresholds.auto_unmatched_below") > num(t, "thresholds.auto_matched_above")) {
    throw ValidationError("config: thresholds.auto_unmatched_below exceeds thresholds.auto_matched_above");
  }
  check_range(t, "sampling.lo", 0.0, 1.0);
  check_range(t, "sampling.hi", 0.0, 1.0);
  check_range(t, "sampling.bin_width", 1e-6, 1.0);
  check_range(t, "sampling.per_bin", 1.0, 1e9);
  check_range(t, "annotation.drop_fraction", 0.0, 0.999999);
  check_range(t, "annotation.mace.smoothing_alpha", 0.0, 1e6);
  check_range(t, "annotation.mace.n_restarts", 1.0, 1e6);
  check_range(t, "retrieval.k1", 0.0, 100.0);
  check_range(t, "retrieval.b", 0.0, 1.0);
  check_range(t, "threads", 1.0, 1024.0);
  const json* r = find_dotted(t, "splits.ratios");
  if (!r || !r->is_array() || r->size() != 3) throw ValidationError("config: splits.ratios must hold three numbers");
  double sum = 0.0;
  for (const auto& x : *r) {
    if (!x.is_number() || x.get<double>() < 0.0) throw ValidationError("config: splits.ratios must be non-negative");
    sum += x.get<double>();
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw ValidationError("config: splits.ratios must sum to 1");
  const std::string src = t.at("sampling").value("score_source", "cosine");
  if (src != "cosine" && src != "external_model") {
    throw ValidationError("config: sampling.score_source must be cosine or external_model");
  }
  const std::string mode = t.at("retrieval").value("mrr_mode", "all_gold");
  if (mode != "all_gold" && mode != "first_relevant") {
    throw ValidationError("config: retrieval.mrr_mode must be all_gold or first_relevant");
  }
  pairs::SampleSpec spec;
  spec.bin_width = num(t, "sampling.bin_width");
  spec.lo = num(t, "sampling.lo");
  spec.hi = num(t, "sampling.hi");
  spec.per_bin = static_cast<std::size_t>(num(t, "sampling.per_bin"));
  spec.validate();
}

PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  if (path.empty()) {
    throw ValidationError(std::string("no config given; pass --config or set ") + kConfigEnv);
  }
  if (!fs::is_regular_file(path)) throw ValidationError("config file not found: " + path.string());
  json user;
  try {
    user = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  if (!user.is_object()) throw ValidationError("config " + path.string() + ": top level must be an object");
  json tree = default_config();
  // Regression entries naming a built-in spec patch it instead of replacing it.
  if (user.contains("regressions") && user["regressions"].is_array()) {
    for (auto& r : user["regressions"]) {
      if (!r.is_object() || !r.contains("name")) continue;
      for (const auto& d : tree["regressions"]) {
        if (d.value("name", "") == r["name"]) {
          json merged = d;
          merged.merge_patch(r);
          r = std::move(merged);
          break;
        }
      }
    }
  }
  tree.merge_patch(user);
  for (const auto& o : overrides) apply_override(tree, o);
  validate_config(tree);

  PipelineConfig cfg;
  cfg.tree = std::move(tree);
  cfg.base_dir = fs::absolute(path).parent_path();
  cfg.threads = cfg.tree.at("threads").get<std::size_t>();
  cfg.strict = cfg.tree.at("strict").get<bool>();
  fs::path out = cfg.tree.at("paths").value("output_dir", "out");
  cfg.output_dir = out.is_absolute() ? out : cfg.base_dir / out;
  return cfg;
}

// ---------------------------------------------------------------------------

namespace {

std::string display_path(const PipelineConfig& cfg, const fs::path& p, bool output) {
  const fs::path base = output ? cfg.output_dir : cfg.base_dir;
  const fs::path rel = fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(base).lexically_normal());
  return rel.empty() || rel.native().starts_with("..") ? p.string() : rel.generic_string();
}

}  // namespace

void RunManifest::add_input(const PipelineConfig& cfg, const fs::path& p) {
  if (fs::is_regular_file(p)) inputs[display_path(cfg, p, false)] = sha256_file(p);
}

void RunManifest::add_output(const PipelineConfig& cfg, const fs::path& p) {
  if (fs::is_regular_file(p)) outputs[display_path(cfg, p, true)] = sha256_file(p);
}

ordered_json RunManifest::to_json() const {
  ordered_json j;
  j["command"] = command;
  j["tool_version"] = tool_version;
  j["config_sha256"] = config_sha256;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["wall_time_s"] = wall_time_s;
  return j;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"ingest", "extract", "pair",      "sample",  "aggregate",
                                                 "score",  "eval",    "retrieval", "analyze", "report"};
  return names;
}

// ---------------------------------------------------------------------------

namespace {

using corpus::CorpusStore;

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) (s += l) += '\n';
  write_file(p, s);
}

void write_json(const fs::path& p, const ordered_json& j) { write_file(p, j.dump(2) + "\n"); }

CorpusStore load_corpus(const PipelineConfig& cfg) {
  const fs::path dir = cfg.out("corpus");
  if (!fs::is_directory(dir)) throw ValidationError("corpus store not found at " + dir.string() + "; run ingest first");
  return CorpusStore::load(dir);
}

fs::path stage_input(const PipelineConfig& cfg, const std::string& name, const std::string& producer) {
  const fs::path p = cfg.out(name);
  if (!fs::is_regular_file(p)) throw ValidationError(name + " not found in " + cfg.output_dir.string() + "; run " + producer + " first");
  return p;
}

std::vector<pairs::CandidatePair> read_pairs(const fs::path& p) {
  std::vector<pairs::CandidatePair> out;
  for_each_jsonl(p, true, [&](std::size_t, const json& j) { out.push_back(pairs::pair_from_json(j)); });
  return out;
}

pairs::AutoLabelThresholds thresholds_of(const PipelineConfig& cfg) {
  return {cfg.at("thresholds.auto_unmatched_below").get<double>(), cfg.at("thresholds.auto_matched_above").get<double>(),
          cfg.at("thresholds.auto_jaccard_above").get<double>()};
}

std::unique_ptr<similarity::EmbeddingProvider> finding_provider(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path vec = cfg.input_path("paths.vectors");
  if (!vec.empty()) {
    require_file(vec, "vector");
    m.add_input(cfg, vec);
    return std::make_unique<similarity::VectorFileProvider>(similarity::VectorFileProvider::load(vec));
  }
  const fs::path model = stage_input(cfg, "tfidf.json", "pair");
  m.add_input(cfg, model);
  return std::make_unique<similarity::TfidfProvider>(similarity::TfidfModel::from_json(json::parse(read_file(model))));
}

struct ScorerBundle {
  std::unique_ptr<similarity::EmbeddingProvider> provider;
  std::unique_ptr<ims::PairScorer> scorer;
};

/// kind: cosine | lexical | probability | external.
ScorerBundle make_scorer(const PipelineConfig& cfg, const json& desc, RunManifest& m,
                         std::unique_ptr<similarity::EmbeddingProvider> provider = nullptr) {
  const std::string kind = desc.value("kind", "cosine");
  const std::string name = desc.value("name", kind);
  ScorerBundle b;
  auto table_of = [&]() {
    if (!desc.contains("table") || desc.at("table").is_null()) throw ValidationError("scorer " + name + " needs a table");
    fs::path p = desc.at("table").get<std::string>();
    if (!p.is_absolute()) p = cfg.base_dir / p;
    require_file(p, "score table");
    m.add_input(cfg, p);
    return ims::read_value_table(p);
  };
  if (kind == "cosine") {
    b.provider = provider ? std::move(provider) : finding_provider(cfg, m);
    b.scorer = std::make_unique<ims::CosineScorer>(*b.provider);
  } else if (kind == "lexical") {
    b.scorer = std::make_unique<ims::LexicalBaseline>();
  } else if (kind == "probability") {
    b.scorer = std::make_unique<ims::ProbabilityScorer>(table_of(), name);
  } else if (kind == "external") {
    b.scorer = std::make_unique<ims::ExternalScoreTable>(table_of(), name);
  } else {
    throw ValidationError("unknown scorer kind \"" + kind + "\"");
  }
  return b;
}

std::string opt_num(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

// ---------------------------------------------------------------------------

void cmd_ingest(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path docs = cfg.input_path("paths.documents");
  require_file(docs, "documents");
  m.add_input(cfg, docs);
  CorpusStore store;
  const auto res = corpus::ingest_documents(docs, store, {cfg.strict, std::nullopt});
  const fs::path dir = cfg.out("corpus");
  fs::remove_all(dir);
  store.persist(dir);
  const auto links = corpus::link_mentions(store);

  std::vector<std::string> lines;
  for (const auto& e : links.entries) {
    ordered_json j;
    j["paper_doi"] = e.paper_doi;
    j["mention_doc_id"] = e.mention_doc_id;
    lines.push_back(j.dump());
  }
  write_lines(cfg.out("links.jsonl"), lines);

  ordered_json rep;
  rep["accepted"] = res.count;
  rep["rejected"] = ordered_json::array();
  for (const auto& r : res.rejected) rep["rejected"].push_back({{"line", r.line}, {"message", r.message}});
  rep["links"] = links.entries.size();
  rep["unresolved"] = links.unresolved;
  write_json(cfg.out("ingest_report.json"), rep);

  for (const char* f : {"papers.jsonl", "news.jsonl", "tweets.jsonl"}) m.add_output(cfg, dir / f);
  m.add_output(cfg, cfg.out("links.jsonl"));
  m.add_output(cfg, cfg.out("ingest_report.json"));
  std::cout << "ingest: " << res.count << " documents, " << res.rejected.size() << " rejected, "
            << links.entries.size() << " links, " << links.unresolved.size() << " unresolved\n";
}

void cmd_extract(const PipelineConfig& cfg, RunManifest& m) {
  const CorpusStore store = load_corpus(cfg);
  const fs::path training = cfg.input_path("paths.training");
  require_file(training, "training corpus");
  m.add_input(cfg, training);
  const auto labeled = extract::read_training_corpus(training);

  extract::TrainingHyper hyper;
  hyper.l2_penalty = cfg.at("extract.l2_penalty").get<double>();
  hyper.max_epochs = cfg.at("extract.max_epochs").get<int>();
  hyper.tol = cfg.at("extract.tol").get<double>();
  hyper.seed = cfg.at("extract.seed").get<std::uint64_t>();
  hyper.hash_dim = cfg.at("extract.hash_dim").get<std::uint32_t>();
  const auto every = cfg.at("extract.heldout_every").get<std::size_t>();

  std::vector<extract::LabeledSentence> train, heldout;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    (every > 0 && fnv1a64(labeled[i].text) % every == 0 ? heldout : train).push_back(labeled[i]);
  }
  auto model = extract::train_classifier(train, hyper);

  ordered_json rep;
  rep["training_sentences"] = train.size();
  rep["heldout_sentences"] = heldout.size();
  rep["epochs"] = model.convergence.epochs;
  rep["converged"] = model.convergence.converged;
  rep["final_grad_max"] = model.convergence.final_grad_max;
  if (!heldout.empty()) {
    const auto ev = extract::evaluate_classifier(model, heldout);
    rep["heldout_accuracy"] = ev.accuracy;
    rep["heldout_macro_f1"] = ev.macro_f1;
    ordered_json pc = ordered_json::object();
    for (auto l : extract::kAllLabels) {
      const auto& c = ev.per_class[static_cast<std::size_t>(l)];
      ordered_json cj;
      cj["support"] = c.support;
      cj["precision"] = c.precision ? ordered_json(*c.precision) : ordered_json(nullptr);
      cj["recall"] = c.recall ? ordered_json(*c.recall) : ordered_json(nullptr);
      cj["f1"] = c.f1 ? ordered_json(*c.f1) : ordered_json(nullptr);
      pc[std::string(extract::to_string(l))] = cj;
    }
    rep["heldout_per_class"] = pc;
    model.metrics = json::parse(ordered_json(rep).dump());
  }
  model.save(cfg.out("model/classifier.bin"));

  std::vector<const corpus::Document*> docs;
  for (const auto& d : store.documents()) docs.push_back(&d);
  std::sort(docs.begin(), docs.end(), [](auto* a, auto* b) { return a->doc_id < b->doc_id; });
  std::vector<std::string> lines;
  std::map<std::string, std::size_t> per_kind;
  for (const auto* d : docs) {
    for (const auto& f : extract::extract_findings(model, *d)) {
      lines.push_back(extract::finding_to_json(f).dump());
      ++per_kind[std::string(corpus::to_string(d->source_kind))];
    }
  }
  write_lines(cfg.out("findings.jsonl"), lines);
  rep["findings"] = lines.size();
  rep["findings_by_source"] = per_kind;
  write_json(cfg.out("extract_report.json"), rep);

  m.add_output(cfg, cfg.out("model/classifier.bin"));
  m.add_output(cfg, cfg.out("findings.jsonl"));
  m.add_output(cfg, cfg.out("extract_report.json"));
  std::cout << "extract: " << lines.size() << " findings from " << docs.size() << " documents\n";
}

void cmd_pair(const PipelineConfig& cfg, RunManifest& m) {
  const CorpusStore store = load_corpus(cfg);
  const auto links = corpus::link_mentions(store);
  const fs::path ffile = stage_input(cfg, "findings.jsonl", "extract");
  m.add_input(cfg, ffile);
  pairs::FindingIndex index;
  std::vector<std::pair<std::string, std::string>> keyed_texts;
  for_each_jsonl(ffile, true, [&](std::size_t, const json& j) {
    auto f = extract::finding_from_json(j);
    keyed_texts.emplace_back(pairs::finding_key(f.doc_id, f.sent_idx), f.text);
    index[f.doc_id].push_back(std::move(f));
  });
  for (auto& [_, v] : index) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.sent_idx < b.sent_idx; });
  }

  if (cfg.input_path("paths.vectors").empty()) {
    std::sort(keyed_texts.begin(), keyed_texts.end());
    std::vector<std::string> texts;
    for (auto& [_, t] : keyed_texts) texts.push_back(t);
    if (texts.empty()) throw ValidationError("no findings to pair");
    const auto model = similarity::fit_tfidf(texts, cfg.at("tfidf.hash_dim").get<std::size_t>());
    write_file(cfg.out("tfidf.json"), model.to_json().dump() + "\n");
    m.add_output(cfg, cfg.out("tfidf.json"));
  }
  const auto provider = finding_provider(cfg, m);
  const auto th = thresholds_of(cfg);

  auto out = open_output(cfg.out("pairs.jsonl"));
  std::map<std::string, std::size_t> label_counts;
  const auto stats = pairs::generate_pairs(store, index, links, *provider, [&](pairs::CandidatePair&& p) {
    auto j = pairs::pair_to_json(p);
    const auto l = pairs::auto_label(p, th);
    j["auto_label"] = pairs::to_string(l);
    ++label_counts[std::string(pairs::to_string(l))];
    out << j.dump() << '\n';
  });
  out.close();
  if (!out) throw RuntimeFailure("failed writing pairs.jsonl");

  ordered_json rep;
  rep["links"] = stats.links;
  rep["pairs"] = stats.pairs;
  rep["peak_cached_vectors"] = stats.peak_cached_vectors;
  rep["auto_labels"] = label_counts;
  write_json(cfg.out("pair_report.json"), rep);
  m.add_output(cfg, cfg.out("pairs.jsonl"));
  m.add_output(cfg, cfg.out("pair_report.json"));
  std::cout << "pair: " << stats.pairs << " pairs over " << stats.links << " links\n";
}

void write_sample(const fs::path& path, const pairs::SampleResult& r) {
  std::vector<std::string> lines;
  for (const auto& p : r.pairs) lines.push_back(pairs::pair_to_json(p).dump());
  write_lines(path, lines);
}

void cmd_sample(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path pfile = stage_input(cfg, "pairs.jsonl", "pair");
  m.add_input(cfg, pfile);
  auto all = read_pairs(pfile);
  pairs::SampleSpec spec;
  spec.bin_width = cfg.at("sampling.bin_width").get<double>();
  spec.lo = cfg.at("sampling.lo").get<double>();
  spec.hi = cfg.at("sampling.hi").get<double>();
  spec.per_bin = cfg.at("sampling.per_bin").get<std::size_t>();
  spec.seed = cfg.at("sampling.seed").get<std::uint64_t>();
  if (cfg.at("sampling.score_source").get<std::string>() == "external_model") {
    const fs::path sf = cfg.input_path("sampling.score_file");
    require_file(sf, "sampling score");
    m.add_input(cfg, sf);
    pairs::score_with_model(all, pairs::read_score_file(sf));
    spec.score_source = pairs::ScoreSource::external_model;
  }
  const auto res = pairs::stratified_sample(all, spec);
  write_sample(cfg.out("sample.jsonl"), res);
  std::ostringstream csv;
  csv << "bin,lo,hi,available,drawn,shortfall\n";
  for (const auto& b : res.bins) {
    csv << b.index << ',' << format_fixed(b.lo, 4) << ',' << format_fixed(b.hi, 4) << ',' << b.available << ','
        << b.drawn << ',' << b.shortfall << '\n';
  }
  write_file(cfg.out("sample_bins.csv"), csv.str());
  m.add_output(cfg, cfg.out("sample.jsonl"));
  m.add_output(cfg, cfg.out("sample_bins.csv"));

  const auto pilot_n = cfg.at("sampling.pilot_per_bin").get<std::size_t>();
  if (pilot_n > 0) {
    write_sample(cfg.out("pilot.jsonl"), pairs::pilot_sample(all, spec.seed, pilot_n));
    m.add_output(cfg, cfg.out("pilot.jsonl"));
  }
  std::size_t short_total = 0;
  for (const auto& b : res.bins) short_total += b.shortfall;
  std::cout << "sample: " << res.pairs.size() << " pairs in " << res.bins.size() << " bins, shortfall "
            << short_total << "\n";
}

void cmd_aggregate(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path afile = cfg.input_path("paths.annotations");
  require_file(afile, "annotations");
  m.add_input(cfg, afile);
  const fs::path pfile = stage_input(cfg, "pairs.jsonl", "pair");
  m.add_input(cfg, pfile);

  struct Meta {
    pairs::AutoLabel label;
    std::string doi;
    corpus::Field field;
  };
  std::map<std::string, Meta> meta;
  std::vector<std::string> order;
  const auto th = thresholds_of(cfg);
  for_each_jsonl(pfile, true, [&](std::size_t, const json& j) {
    const auto p = pairs::pair_from_json(j);
    meta[p.pair_id] = {pairs::auto_label(p, th), p.paper_doi, p.field};
    order.push_back(p.pair_id);
  });

  const auto records = annotation::read_annotations(afile);
  for (const auto& r : records) {
    if (!meta.count(r.pair_id)) throw ValidationError("annotation for unknown pair " + r.pair_id);
  }

  annotation::MaceConfig mc;
  const json& mj = cfg.at("annotation.mace");
  mc.max_iter = mj.at("max_iter").get<int>();
  mc.tol = mj.at("tol").get<double>();
  mc.n_restarts = mj.at("n_restarts").get<int>();
  mc.smoothing_alpha = mj.at("smoothing_alpha").get<double>();
  mc.seed = mj.at("seed").get<std::uint64_t>();
  const auto mace = annotation::fit_mace(records, mc);
  const auto filtered =
      annotation::filter_low_competence(records, mace.profiles, cfg.at("annotation.drop_fraction").get<double>());

  const auto flagged = annotation::flag_outliers(filtered.records, cfg.at("thresholds.outlier_std").get<double>());
  std::vector<annotation::AnnotationRecord> final_records = filtered.records;
  std::set<std::string> overridden;
  std::vector<std::string> warnings;
  const fs::path ofile = cfg.input_path("paths.overrides");
  if (!ofile.empty()) {
    require_file(ofile, "overrides");
    m.add_input(cfg, ofile);
    auto res = annotation::apply_expert_overrides(final_records, annotation::read_overrides(ofile), flagged);
    final_records = std::move(res.records);
    overridden = std::move(res.overridden_pairs);
    warnings = std::move(res.warnings);
  }

  std::set<std::string> annotated;
  for (const auto& r : final_records) annotated.insert(r.pair_id);
  std::vector<annotation::AutoPair> autos;
  for (const auto& id : order) {
    const auto& mt = meta.at(id);
    if (mt.label != pairs::AutoLabel::needs_annotation && !annotated.count(id)) autos.push_back({id, mt.label});
  }
  auto agg = annotation::aggregate_ims(final_records, autos, flagged, overridden);

  std::vector<annotation::SplitItem> items;
  for (const auto& a : agg) items.push_back({a.pair_id, meta.at(a.pair_id).doi, meta.at(a.pair_id).field});
  const auto& rj = cfg.at("splits.ratios");
  const auto splits = annotation::make_splits(items, {rj[0].get<double>(), rj[1].get<double>(), rj[2].get<double>()},
                                              cfg.at("splits.seed").get<std::uint64_t>());
  for (std::size_t i = 0; i < agg.size(); ++i) agg[i].split = splits[i].split;

  std::vector<std::string> lines;
  for (const auto& a : agg) lines.push_back(annotation::aggregated_to_json(a).dump());
  write_lines(cfg.out("aggregated.jsonl"), lines);

  std::set<std::string> removed(filtered.removed_annotators.begin(), filtered.removed_annotators.end());
  std::ostringstream csv;
  csv << "annotator_id,competence,n_ratings,removed\n";
  for (const auto& p : mace.profiles) {
    csv << p.annotator_id << ',' << format_double(p.competence) << ',' << p.n_ratings << ','
        << (removed.count(p.annotator_id) ? "true" : "false") << '\n';
  }
  write_file(cfg.out("annotators.csv"), csv.str());

  ordered_json rep;
  rep["ratings"] = records.size();
  rep["ratings_after_filter"] = filtered.records.size();
  rep["removed_annotators"] = filtered.removed_annotators;
  rep["emptied_items"] = filtered.emptied_items;
  rep["flagged_outliers"] = flagged;
  rep["overridden_pairs"] = overridden;
  rep["override_warnings"] = warnings;
  for (const char* metric : {"interval", "ordinal", "nominal"}) {
    try {
      rep[std::string("alpha_") + metric] =
          annotation::krippendorff_alpha(final_records, annotation::parse_alpha_metric(metric));
    } catch (const std::invalid_argument&) {
      rep[std::string("alpha_") + metric] = nullptr;
    }
  }
  rep["mace"] = {{"log_likelihood", mace.log_likelihood}, {"objective", mace.objective},
                 {"iterations", mace.iterations},        {"converged", mace.converged},
                 {"monotone", mace.monotone}};
  std::map<std::string, std::size_t> counts;
  for (const auto& a : agg) {
    ++counts[std::string(annotation::to_string(a.provenance))];
    ++counts["split_" + std::string(annotation::to_string(*a.split))];
  }
  rep["counts"] = counts;
  write_json(cfg.out("agreement.json"), rep);

  m.add_output(cfg, cfg.out("aggregated.jsonl"));
  m.add_output(cfg, cfg.out("annotators.csv"));
  m.add_output(cfg, cfg.out("agreement.json"));
  std::cout << "aggregate: " << agg.size() << " pairs (" << autos.size() << " automatic), "
            << filtered.removed_annotators.size() << " annotators removed\n";
}

void cmd_score(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path pfile = stage_input(cfg, "pairs.jsonl", "pair");
  m.add_input(cfg, pfile);
  json desc = {{"kind", cfg.at("scoring.scorer").get<std::string>()}, {"table", cfg.at("scoring.table")}};
  const auto bundle = make_scorer(cfg, desc, m);
  ims::CorpusScoreOptions opt;
  opt.threshold = cfg.at("thresholds.match").get<double>();
  opt.threads = cfg.threads;
  opt.chunk_size = cfg.at("scoring.chunk_size").get<std::size_t>();
  std::ifstream in(pfile, std::ios::binary);
  auto out = open_output(cfg.out("matched.jsonl"));
  const auto stats = ims::score_corpus(*bundle.scorer, in, out, opt);
  out.close();
  if (!out) throw RuntimeFailure("failed writing matched.jsonl");

  ordered_json rep;
  rep["scorer"] = bundle.scorer->name();
  rep["threshold"] = opt.threshold;
  rep["read"] = stats.read;
  rep["kept"] = stats.kept;
  write_json(cfg.out("score_report.json"), rep);
  m.add_output(cfg, cfg.out("matched.jsonl"));
  m.add_output(cfg, cfg.out("score_report.json"));
  std::cout << "score: kept " << stats.kept << " of " << stats.read << " pairs with IMS > "
            << format_double(opt.threshold) << "\n";
}

void cmd_eval(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path pfile = stage_input(cfg, "pairs.jsonl", "pair");
  const fs::path afile = stage_input(cfg, "aggregated.jsonl", "aggregate");
  m.add_input(cfg, pfile);
  m.add_input(cfg, afile);
  const std::string split = cfg.at("eval.split").get<std::string>();
  std::map<std::string, annotation::AggregatedPair> agg;
  for_each_jsonl(afile, true, [&](std::size_t, const json& j) {
    auto a = annotation::aggregated_from_json(j);
    if (split == "all" || (a.split && annotation::to_string(*a.split) == split)) agg.emplace(a.pair_id, a);
  });
  std::vector<ims::EvalPair> eval_pairs;
  for_each_jsonl(pfile, true, [&](std::size_t, const json& j) {
    const auto p = pairs::pair_from_json(j);
    auto it = agg.find(p.pair_id);
    if (it == agg.end()) return;
    eval_pairs.push_back({ims::scoring_input(p), p.source_kind, it->second.ims, it->second.provenance});
  });
  const auto manual = std::count_if(eval_pairs.begin(), eval_pairs.end(), [](const auto& e) {
    return e.provenance != annotation::Provenance::automatic;
  });
  if (manual == 0) throw ValidationError("no annotated pairs in evaluation split \"" + split + "\"");

  std::ostringstream csv;
  csv << "scorer,subset,n,mse,pearson_r\n";
  for (const auto& desc : cfg.at("eval.scorers")) {
    const auto bundle = make_scorer(cfg, desc, m);
    const auto rep = ims::evaluate_scorer(*bundle.scorer, eval_pairs);
    const std::string name = desc.value("name", bundle.scorer->name());
    for (const auto& [subset, sm] : {std::pair{"overall", rep.overall}, {"news", rep.news}, {"tweets", rep.tweets}}) {
      csv << name << ',' << subset << ',' << sm.n << ',' << opt_num(sm.mse) << ',' << opt_num(sm.pearson_r) << '\n';
    }
  }
  write_file(cfg.out("eval.csv"), csv.str());
  m.add_output(cfg, cfg.out("eval.csv"));
  std::cout << "eval: " << manual << " annotated pairs in split " << split << "\n";
}

void cmd_retrieval(const PipelineConfig& cfg, RunManifest& m) {
  const auto mode = cfg.at("retrieval.mrr_mode").get<std::string>() == "first_relevant"
                        ? retrieval::MrrMode::first_relevant
                        : retrieval::MrrMode::all_gold;
  const retrieval::Bm25Params params{cfg.at("retrieval.k1").get<double>(), cfg.at("retrieval.b").get<double>()};
  std::vector<retrieval::ReportRow> rows;
  for (const auto& ds : cfg.at("retrieval.datasets")) {
    const std::string dname = required<std::string>(ds, "name");
    auto resolve = [&](const char* key) {
      fs::path p = required<std::string>(ds, key);
      if (!p.is_absolute()) p = cfg.base_dir / p;
      require_file(p, std::string("retrieval ") + key);
      m.add_input(cfg, p);
      return p;
    };
    const auto claims = retrieval::read_claims(resolve("claims"));
    const auto pool = retrieval::read_pool(resolve("pool"));
    retrieval::validate_dataset(claims, pool);
    const retrieval::Bm25Index index(pool, params);

    for (const auto& method : cfg.at("retrieval.methods")) {
      const std::string kind = method.value("kind", "bm25");
      const std::string mname = method.value("name", kind);
      retrieval::RetrievalResult res;
      if (kind == "bm25") {
        res = retrieval::evaluate_retrieval(retrieval::Bm25Ranker(index), claims, pool, mode, cfg.threads);
      } else {
        std::unique_ptr<similarity::EmbeddingProvider> provider;
        if (kind == "cosine") {
          std::vector<std::string> texts;
          for (const auto& e : pool.items()) texts.push_back(e.text);
          provider = std::make_unique<similarity::TfidfProvider>(
              similarity::fit_tfidf(texts, cfg.at("tfidf.hash_dim").get<std::size_t>()));
        }
        const auto bundle = make_scorer(cfg, method, m, std::move(provider));
        res = retrieval::evaluate_retrieval(retrieval::ScorerRanker(*bundle.scorer), claims, pool, mode, cfg.threads);
      }
      rows.push_back({mname, dname, res.map, res.mrr});
      std::ostringstream pc;
      retrieval::write_per_claim(pc, res.per_claim);
      const fs::path pcp = cfg.out("retrieval/" + dname + "__" + mname + ".jsonl");
      write_file(pcp, pc.str());
      m.add_output(cfg, pcp);
    }
  }
  std::ostringstream csv;
  retrieval::write_report_csv(csv, rows);
  write_file(cfg.out("retrieval.csv"), csv.str());
  m.add_output(cfg, cfg.out("retrieval.csv"));
  std::cout << "retrieval: " << rows.size() << " method/dataset rows\n";
}

std::vector<json> analysis_rows(const CorpusStore& store, const fs::path& matched) {
  std::vector<json> rows;
  for_each_jsonl(matched, true, [&](std::size_t, const json& j) {
    const auto p = pairs::pair_from_json(j);
    json row;
    row["pair_id"] = p.pair_id;
    row["ims_pred"] = required<double>(j, "ims_pred");
    row["paper_doi"] = p.paper_doi;
    row["field"] = corpus::to_string(p.field);
    row["source_kind"] = corpus::to_string(p.source_kind);
    row["mention_doc_id"] = p.mention_doc_id;
    if (const auto* d = store.find(p.mention_doc_id)) {
      if (d->outlet_type) row["outlet_type"] = corpus::to_string(*d->outlet_type);
      if (d->user_meta) {
        row["is_verified"] = d->user_meta->is_verified;
        row["is_organization"] = d->user_meta->is_organization;
        row["followers"] = d->user_meta->followers;
        row["following"] = d->user_meta->following;
        row["account_age_years"] = d->user_meta->account_age_years;
      }
    } else {
      throw ValidationError("matched pair " + p.pair_id + " references unknown document " + p.mention_doc_id);
    }
    rows.push_back(std::move(row));
  });
  return rows;
}

void cmd_analyze(const PipelineConfig& cfg, RunManifest& m) {
  const CorpusStore store = load_corpus(cfg);
  const fs::path matched = stage_input(cfg, "matched.jsonl", "score");
  m.add_input(cfg, matched);
  const auto rows = analysis_rows(store, matched);
  std::size_t fitted = 0;
  for (const auto& rj : cfg.at("regressions")) {
    const auto spec = lmm::RegressionSpec::from_json(rj);
    if (spec.name.empty()) throw ValidationError("every regression needs a name");
    const auto design = lmm::build_design(rows, spec);
    const auto fit = lmm::fit_reml(design);
    std::ostringstream txt, csv;
    lmm::emit_regression_table(txt, fit, spec, lmm::TableFormat::text);
    lmm::emit_regression_table(csv, fit, spec, lmm::TableFormat::csv);
    const std::string stem = "regression_" + spec.name;
    write_file(cfg.out(stem + ".txt"), txt.str());
    write_file(cfg.out(stem + ".csv"), csv.str());
    const auto fd = lmm::forest_data(fit, spec);
    lmm::emit_forest_plot(fd, cfg.out("forest_" + spec.name), spec.name);

    ordered_json fj;
    fj["spec"] = spec.to_json();
    fj["lambda"] = fit.lambda;
    fj["converged"] = fit.converged;
    fj["iterations"] = fit.iterations;
    fj["diagnostics"] = fit.diagnostics;
    fj["group_labels"] = design.group_labels;
    write_json(cfg.out("fit_" + spec.name + ".json"), fj);

    for (const auto& f : {stem + ".txt", stem + ".csv", "forest_" + spec.name + ".svg",
                          "forest_" + spec.name + ".csv", "fit_" + spec.name + ".json"}) {
      m.add_output(cfg, cfg.out(f));
    }
    ++fitted;
    std::cout << "analyze: " << spec.name << " n=" << fit.n_obs << " groups=" << fit.n_groups
              << " converged=" << (fit.converged ? "yes" : "no") << "\n";
  }
  if (fitted == 0) std::cout << "analyze: no regressions configured\n";
}

void cmd_report(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path dir = cfg.out("report");
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(cfg.output_dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    const std::string ext = e.path().extension().string();
    const bool table = ext == ".csv" || ext == ".svg" || (ext == ".txt" && name.starts_with("regression_")) ||
                       name.ends_with("_report.json") || name == "agreement.json";
    if (table) files.push_back(e.path());
  }
  if (files.empty()) throw ValidationError("nothing to report in " + cfg.output_dir.string());
  std::sort(files.begin(), files.end());
  std::ostringstream idx;
  idx << "scicomm-drift report\n";
  idx << "tool_version " << kToolVersion << "\n";
  idx << "config_sha256 " << cfg.sha256() << "\n\n";
  for (const auto& f : files) {
    const fs::path dst = dir / f.filename();
    fs::copy_file(f, dst, fs::copy_options::overwrite_existing);
    m.add_input(cfg, f);
    m.add_output(cfg, dst);
    idx << sha256_file(dst) << "  " << f.filename().string() << '\n';
  }
  write_file(dir / "index.txt", idx.str());
  m.add_output(cfg, dir / "index.txt");
  std::cout << "report: " << files.size() << " artifacts in " << dir.string() << "\n";
}

}  // namespace

RunManifest run_stage(const std::string& stage, const PipelineConfig& cfg) {
  using Fn = void (*)(const PipelineConfig&, RunManifest&);
  static const std::map<std::string, Fn> table = {
      {"ingest", cmd_ingest}, {"extract", cmd_extract},     {"pair", cmd_pair},       {"sample", cmd_sample},
      {"aggregate", cmd_aggregate}, {"score", cmd_score},   {"eval", cmd_eval},       {"retrieval", cmd_retrieval},
      {"analyze", cmd_analyze}, {"report", cmd_report}};
  auto it = table.find(stage);
  if (it == table.end()) throw ValidationError("unknown stage \"" + stage + "\"");

  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cfg.output_dir);
  RunManifest m;
  m.command = stage;
  m.config_sha256 = cfg.sha256();
  it->second(cfg, m);
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(cfg.out("manifests/" + stage + ".json"), m.to_json());
  return m;
}

}  // namespace scd::pipeline
