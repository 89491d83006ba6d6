#include "scd/finding_extractor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "scd/error.hpp"
#include "scd/simd/kernels.hpp"
#include "scd/text.hpp"

namespace scd::extract {

std::string_view to_string(RhetoricalLabel l) {
  switch (l) {
    case RhetoricalLabel::background: return "BACKGROUND";
    case RhetoricalLabel::objective: return "OBJECTIVE";
    case RhetoricalLabel::methods: return "METHODS";
    case RhetoricalLabel::results: return "RESULTS";
    case RhetoricalLabel::conclusions: return "CONCLUSIONS";
  }
  return "?";
}

RhetoricalLabel parse_label(std::string_view s) {
  for (auto l : kAllLabels) {
    if (to_string(l) == s) return l;
  }
  throw ValidationError("unknown rhetorical label \"" + std::string(s) + "\"");
}

ordered_json finding_to_json(const Finding& f) {
  ordered_json j;
  j["doc_id"] = f.doc_id;
  j["sent_idx"] = f.sent_idx;
  j["text"] = f.text;
  j["label"] = to_string(f.label);
  j["confidence"] = f.confidence;
  return j;
}

Finding finding_from_json(const json& j) {
  Finding f;
  f.doc_id = required<std::string>(j, "doc_id");
  f.sent_idx = required<std::size_t>(j, "sent_idx");
  f.text = required<std::string>(j, "text");
  f.label = parse_label(required<std::string>(j, "label"));
  if (!is_finding_label(f.label)) throw ValidationError("finding " + f.doc_id + " has non-finding label");
  f.confidence = required<double>(j, "confidence");
  return f;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& abbreviations() {
  static const std::vector<std::string> list = {
      "al.",   "approx.", "ca.",  "cf.",   "co.",  "dr.",   "e.g.",  "eq.",  "eqs.", "et.",
      "fig.",  "figs.",   "i.e.", "inc.",  "jr.",  "ltd.",  "mr.",   "mrs.", "ms.",  "no.",
      "nos.",  "ph.d.",   "prof.", "ref.", "refs.", "sr.",  "st.",   "tab.", "u.k.", "u.s.",
      "viz.",  "vol.",    "vs.",  "resp.", "dept.", "univ.", "est.", "min.", "max."};
  return list;
}

namespace {

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_terminal(char c) { return c == '.' || c == '?' || c == '!'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_opener(char c) { return c == '"' || c == '\'' || c == '(' || c == '['; }

bool ends_with_abbreviation(std::string_view text, std::size_t period_pos) {
  std::size_t b = period_pos;
  while (b > 0 && !is_ascii_space(text[b - 1])) --b;
  std::string word = text::ascii_lower(text.substr(b, period_pos - b + 1));
  while (!word.empty() && is_opener(word.front())) word.erase(0, 1);
  static const std::unordered_set<std::string> set(abbreviations().begin(), abbreviations().end());
  return set.contains(word);
}

}  // namespace

std::vector<SentenceRecord> split_sentences(std::string_view doc_id, std::string_view text, bool whole) {
  std::vector<SentenceRecord> out;
  const auto emit = [&](std::size_t b, std::size_t e) {
    while (e > b && is_ascii_space(text[e - 1])) --e;
    if (e <= b) return;
    out.push_back({std::string(doc_id), out.size(), std::string(text.substr(b, e - b)), b, e});
  };
  if (whole) {
    if (!text.empty()) out.push_back({std::string(doc_id), 0, std::string(text), 0, text.size()});
    return out;
  }

  std::size_t start = 0;
  while (start < text.size() && is_ascii_space(text[start])) ++start;
  std::size_t i = start;
  while (i < text.size()) {
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && (is_terminal(text[j]) || is_closer(text[j]))) ++j;
    std::size_t k = j;
    while (k < text.size() && is_ascii_space(text[k])) ++k;
    if (k == j || k >= text.size()) {
      i = j;
      continue;
    }
    std::size_t next = k;
    while (next < text.size() && is_opener(text[next])) ++next;
    const bool starts_sentence =
        next < text.size() && ((text[next] >= 'A' && text[next] <= 'Z') || (text[next] >= '0' && text[next] <= '9'));
    const bool abbreviation = text[i] == '.' && ends_with_abbreviation(text, i);
    if (starts_sentence && !abbreviation) {
      emit(start, j);
      start = k;
    }
    i = j;
  }
  if (start < text.size()) emit(start, text.size());
  return out;
}

std::vector<SentenceRecord> split_sentences(const corpus::Document& doc) {
  return split_sentences(doc.doc_id, doc.text, doc.source_kind == corpus::SourceKind::tweet);
}

// ---------------------------------------------------------------------------

double relative_position(std::size_t idx, std::size_t count) {
  if (count <= 1) return 0.0;
  return static_cast<double>(idx) / static_cast<double>(count - 1);
}

SparseFeatures featurize(std::string_view sentence, double position, std::uint32_t hash_dim) {
  if (!std::has_single_bit(hash_dim)) throw std::invalid_argument("featurize: hash_dim must be a power of two");
  const std::uint64_t mask = hash_dim - 1;
  std::vector<std::pair<std::uint32_t, double>> raw;
  const auto add = [&](const std::string& name) {
    const std::uint64_t h = fnv1a64(name);
    raw.emplace_back(static_cast<std::uint32_t>(h & mask), (h >> 63) ? -1.0 : 1.0);
  };

  const auto tokens = text::tokenize(sentence);
  for (const auto& t : tokens) add("u:" + t);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) add("b:" + tokens[i] + " " + tokens[i + 1]);

  const std::u32string cps = text::decode_utf8(text::ascii_lower(sentence));
  for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
    std::string name = "c:";
    text::append_utf8(std::u32string_view(cps).substr(i, 3), name);
    add(name);
  }

  const double p = std::clamp(position, 0.0, 1.0);
  const int bucket = std::min(kPositionBuckets - 1, static_cast<int>(p * kPositionBuckets));
  add("p:" + std::to_string(bucket));

  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseFeatures f;
  for (std::size_t i = 0; i < raw.size();) {
    double v = 0.0;
    const std::uint32_t idx = raw[i].first;
    for (; i < raw.size() && raw[i].first == idx; ++i) v += raw[i].second;
    if (v != 0.0) {
      f.index.push_back(idx);
      f.value.push_back(v);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------

namespace {

void logits_for(const SparseFeatures& x, std::span<const double> params, std::size_t dim,
                std::array<double, kNumLabels>& z) {
  const double* bias = params.data() + dim * kNumLabels;
  for (std::size_t c = 0; c < kNumLabels; ++c) z[c] = bias[c];
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    const double* w = params.data() + static_cast<std::size_t>(x.index[k]) * kNumLabels;
    const double v = x.value[k];
    for (std::size_t c = 0; c < kNumLabels; ++c) z[c] += v * w[c];
  }
}

// Replaces logits with probabilities, returns log-sum-exp.
double softmax_inplace(std::array<double, kNumLabels>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : z) v /= s;
  return m + std::log(s);
}

}  // namespace

double LogisticProblem::evaluate(std::span<const double> params, std::span<double> grad) const {
  if (params.size() != num_params()) throw std::invalid_argument("LogisticProblem: parameter size mismatch");
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(features.size());
  double loss = 0.0;
  std::array<double, kNumLabels> z{};
  for (std::size_t i = 0; i < features.size(); ++i) {
    logits_for(features[i], params, dim, z);
    const double zy = z[static_cast<std::size_t>(labels[i])];
    const double lse = softmax_inplace(z);
    loss += lse - zy;
    if (!want_grad) continue;
    z[static_cast<std::size_t>(labels[i])] -= 1.0;  // residual p - onehot
    const auto& x = features[i];
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      double* g = grad.data() + static_cast<std::size_t>(x.index[k]) * kNumLabels;
      const double v = x.value[k] * inv_n;
      for (std::size_t c = 0; c < kNumLabels; ++c) g[c] += v * z[c];
    }
    double* gb = grad.data() + dim * kNumLabels;
    for (std::size_t c = 0; c < kNumLabels; ++c) gb[c] += z[c] * inv_n;
  }
  loss *= inv_n;
  const std::span<const double> w = params.first(dim * kNumLabels);
  loss += 0.5 * l2 * simd::sum_squares(w);
  if (want_grad && l2 != 0.0) simd::axpy(l2, w, grad.first(dim * kNumLabels));
  return loss;
}

SentenceClassifier::SentenceClassifier(std::uint32_t hash_dim, std::vector<double> params)
    : hash_dim_(hash_dim), params_(std::move(params)) {
  if (params_.size() != static_cast<std::size_t>(hash_dim_) * kNumLabels + kNumLabels) {
    throw std::invalid_argument("SentenceClassifier: parameter size mismatch");
  }
}

std::array<double, kNumLabels> SentenceClassifier::predict_proba(const SparseFeatures& x) const {
  std::array<double, kNumLabels> z{};
  logits_for(x, params_, hash_dim_, z);
  softmax_inplace(z);
  return z;
}

std::array<double, kNumLabels> SentenceClassifier::predict_proba(std::string_view sentence, double position) const {
  return predict_proba(featurize(sentence, position, hash_dim_));
}

RhetoricalLabel SentenceClassifier::predict(std::string_view sentence, double position) const {
  const auto p = predict_proba(sentence, position);
  return kAllLabels[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
}

void SentenceClassifier::save(const std::filesystem::path& path) const {
  ordered_json header;
  header["format"] = "scd-sentence-classifier";
  header["version"] = 1;
  header["hash_dim"] = hash_dim_;
  header["n_labels"] = kNumLabels;
  header["labels"] = json::array();
  for (auto l : kAllLabels) header["labels"].push_back(to_string(l));
  header["layout"] = "weights[hash_dim][n_labels] then biases[n_labels], little-endian f32";
  header["hyperparameters"] = {{"l2_penalty", hyper.l2_penalty},
                               {"max_epochs", hyper.max_epochs},
                               {"tol", hyper.tol},
                               {"seed", hyper.seed}};
  header["training"] = {{"epochs", convergence.epochs},
                        {"converged", convergence.converged},
                        {"final_grad_max", convergence.final_grad_max},
                        {"loss_history", convergence.loss_history}};
  header["metrics"] = metrics;
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + params_.size() * 4);
  for (double v : params_) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  write_file(path, out);
}

SentenceClassifier SentenceClassifier::load(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw ValidationError(path.string() + ": missing model header");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const std::exception& e) {
    throw ValidationError(path.string() + ": bad model header: " + e.what());
  }
  if (header.value("format", "") != "scd-sentence-classifier" || header.value("version", 0) != 1) {
    throw ValidationError(path.string() + ": not a sentence classifier model (format/version)");
  }
  const auto dim = header.at("hash_dim").get<std::uint32_t>();
  const std::size_t count = static_cast<std::size_t>(dim) * kNumLabels + kNumLabels;
  if (bytes.size() - nl - 1 != count * 4) throw ValidationError(path.string() + ": weight block size mismatch");
  std::vector<double> params(count);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    params[i] = std::bit_cast<float>(bits);
    if (!std::isfinite(params[i])) throw ValidationError(path.string() + ": non-finite weight");
  }
  SentenceClassifier model(dim, std::move(params));
  const auto& hp = header.at("hyperparameters");
  model.hyper = {hp.at("l2_penalty").get<double>(), hp.at("max_epochs").get<int>(), hp.at("tol").get<double>(),
                 hp.at("seed").get<std::uint64_t>(), dim};
  const auto& tr = header.at("training");
  model.convergence.epochs = tr.at("epochs").get<int>();
  model.convergence.converged = tr.at("converged").get<bool>();
  model.convergence.final_grad_max = tr.at("final_grad_max").get<double>();
  model.convergence.loss_history = tr.at("loss_history").get<std::vector<double>>();
  model.metrics = header.value("metrics", json::object());
  return model;
}

std::vector<LabeledSentence> read_training_corpus(const std::filesystem::path& path) {
  std::vector<LabeledSentence> out;
  for_each_jsonl(path, true, [&](std::size_t, const json& j) {
    LabeledSentence s;
    s.text = required<std::string>(j, "text");
    s.label = parse_label(required<std::string>(j, "label"));
    s.position = j.value("position", 0.0);
    out.push_back(std::move(s));
  });
  return out;
}

SentenceClassifier train_classifier(std::span<const LabeledSentence> labeled, const TrainingHyper& hyper) {
  if (labeled.empty()) throw ValidationError("train_classifier: empty training set");
  std::array<std::size_t, kNumLabels> counts{};
  LogisticProblem problem;
  problem.dim = hyper.hash_dim;
  problem.l2 = hyper.l2_penalty;
  problem.features.reserve(labeled.size());
  for (const auto& s : labeled) {
    problem.features.push_back(featurize(s.text, s.position, hyper.hash_dim));
    problem.labels.push_back(static_cast<int>(s.label));
    ++counts[static_cast<std::size_t>(s.label)];
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw ValidationError("train_classifier: degenerate input, fewer than two classes present");
  }

  std::vector<double> params(problem.num_params(), 0.0);
  std::vector<double> grad(params.size());
  std::vector<double> trial(params.size());
  ConvergenceRecord rec;
  double loss = problem.evaluate(params, grad);
  rec.loss_history.push_back(loss);
  double step = 1.0;
  constexpr double kArmijo = 1e-4;

  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    rec.final_grad_max = simd::max_abs(grad);
    if (rec.final_grad_max < hyper.tol) {
      rec.converged = true;
      break;
    }
    const double g2 = simd::sum_squares(grad);
    bool accepted = false;
    while (step > 1e-16) {
      trial = params;
      simd::axpy(-step, grad, trial);
      const double f = problem.evaluate(trial, {});
      if (f <= loss - kArmijo * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent possible at machine precision
    params.swap(trial);
    loss = problem.evaluate(params, grad);
    rec.loss_history.push_back(loss);
    rec.epochs = epoch + 1;
    step *= 2.0;
  }
  rec.final_grad_max = simd::max_abs(grad);
  if (rec.final_grad_max < hyper.tol) rec.converged = true;

  SentenceClassifier model(hyper.hash_dim, std::move(params));
  model.hyper = hyper;
  model.convergence = std::move(rec);
  return model;
}

std::vector<Finding> extract_findings(const SentenceClassifier& model, const corpus::Document& doc) {
  std::vector<Finding> out;
  const auto sentences = split_sentences(doc);
  for (const auto& s : sentences) {
    const auto p = model.predict_proba(s.text, relative_position(s.sent_idx, sentences.size()));
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    if (!is_finding_label(kAllLabels[best])) continue;
    out.push_back({s.doc_id, s.sent_idx, s.text, kAllLabels[best], p[best]});
  }
  return out;
}

ClassificationReport evaluate_predictions(std::span<const RhetoricalLabel> gold,
                                          std::span<const RhetoricalLabel> predicted) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("evaluate_predictions: length mismatch");
  if (gold.empty()) throw std::invalid_argument("evaluate_predictions: empty heldout set");
  std::array<std::size_t, kNumLabels> tp{}, fp{}, fn{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = static_cast<std::size_t>(gold[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (g == p) {
      ++tp[g];
      ++correct;
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  ClassificationReport r;
  r.n = gold.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  double f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    auto& m = r.per_class[c];
    m.support = tp[c] + fn[c];
    if (m.support == 0) continue;
    const double pred_pos = static_cast<double>(tp[c] + fp[c]);
    const double prec = pred_pos > 0 ? static_cast<double>(tp[c]) / pred_pos : 0.0;
    const double rec = static_cast<double>(tp[c]) / static_cast<double>(m.support);
    m.precision = prec;
    m.recall = rec;
    m.f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    f1_sum += *m.f1;
    ++present;
  }
  r.macro_f1 = f1_sum / static_cast<double>(present);
  return r;
}

ClassificationReport evaluate_classifier(const SentenceClassifier& model, std::span<const LabeledSentence> heldout) {
  std::vector<RhetoricalLabel> gold, pred;
  for (const auto& s : heldout) {
    gold.push_back(s.label);
    pred.push_back(model.predict(s.text, s.position));
  }
  return evaluate_predictions(gold, pred);
}

}  // namespace scd::extract
