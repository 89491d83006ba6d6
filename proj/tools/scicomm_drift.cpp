// scicomm-drift: command-line front end for the pipeline stages.
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scd/error.hpp"
#include "scd/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::size_t threads = 0;
  bool strict = false;
  std::string output_dir;
  std::vector<std::string> set;
};

struct StageFlag {
  std::string flag;
  std::string key;
  std::string help;
};

// Stage flags and the config keys they override.
const std::vector<std::pair<std::string, std::vector<StageFlag>>>& stage_flags() {
  static const std::vector<std::pair<std::string, std::vector<StageFlag>>> flags = {
      {"ingest", {{"--documents", "paths.documents", "document JSON-lines file"}}},
      {"extract", {{"--training", "paths.training", "labeled sentence corpus"}}},
      {"pair", {{"--vectors", "paths.vectors", "SPCV vector file keyed by finding"}}},
      {"sample",
       {{"--seed", "sampling.seed", "sampling seed"},
        {"--per-bin", "sampling.per_bin", "pairs drawn per bin"},
        {"--score-file", "sampling.score_file", "external model scores for binning"}}},
      {"aggregate",
       {{"--annotations", "paths.annotations", "annotation JSON-lines file"},
        {"--overrides", "paths.overrides", "expert override file"}}},
      {"score",
       {{"--threshold", "thresholds.match", "keep pairs with IMS above this"},
        {"--scorer", "scoring.scorer", "cosine, lexical, probability or external"},
        {"--table", "scoring.table", "score table for probability/external scorers"}}},
      {"eval", {{"--split", "eval.split", "train, dev, test or all"}}},
      {"retrieval",
       {{"--k1", "retrieval.k1", "BM25 k1"},
        {"--b", "retrieval.b", "BM25 b"},
        {"--mrr-mode", "retrieval.mrr_mode", "all_gold or first_relevant"}}},
      {"analyze", {}},
      {"report", {}},
  };
  return flags;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finding extraction, pairing, IMS aggregation, scoring and analysis pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", scd::pipeline::kToolVersion);

  Common common;
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::vector<std::pair<CLI::App*, std::string>> subs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "config file (default: $SCICOMM_DRIFT_CONFIG)");
    sub->add_option("--threads", common.threads, "worker cap")->check(CLI::Range(1, 1024));
    sub->add_flag("--strict", common.strict, "fail on the first malformed record");
    sub->add_option("--output-dir", common.output_dir, "overrides paths.output_dir");
    sub->add_option("--set", common.set, "override a config key, key.path=value")->take_all();
  };

  for (const auto& [name, flags] : stage_flags()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " stage");
    add_common(sub);
    for (const auto& f : flags) sub->add_option(f.flag, flag_values[name][f.key], f.help);
    subs.emplace_back(sub, name);
  }
  auto* all = app.add_subcommand("all", "run ingest through report");
  add_common(all);
  all->add_flag("--with-eval", "also run eval and retrieval");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  std::vector<std::string> stages;
  std::vector<std::string> overrides;
  for (const auto& [sub, name] : subs) {
    if (!sub->parsed()) continue;
    stages.push_back(name);
    for (const auto& [key, value] : flag_values[name]) {
      if (!value.empty()) overrides.push_back(key + "=" + value);
    }
  }
  if (all->parsed()) {
    const bool with_eval = all->count("--with-eval") > 0;
    for (const auto& s : scd::pipeline::stage_names()) {
      if (!with_eval && (s == "eval" || s == "retrieval")) continue;
      stages.push_back(s);
    }
  }
  if (common.threads > 0) overrides.push_back("threads=" + std::to_string(common.threads));
  if (common.strict) overrides.push_back("strict=true");
  if (!common.output_dir.empty()) overrides.push_back("paths.output_dir=\"" + common.output_dir + "\"");
  overrides.insert(overrides.end(), common.set.begin(), common.set.end());

  std::string config = common.config;
  if (config.empty()) {
    if (const char* env = std::getenv(scd::pipeline::kConfigEnv)) config = env;
  }

  try {
    const auto cfg = scd::pipeline::load_config(config, overrides);
    for (const auto& s : stages) scd::pipeline::run_stage(s, cfg);
  } catch (const scd::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
