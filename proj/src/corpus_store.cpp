#include "scd/corpus_store.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "scd/error.hpp"
#include "scd/text.hpp"

namespace scd::corpus {

std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::paper: return "paper";
    case SourceKind::news: return "news";
    case SourceKind::tweet: return "tweet";
  }
  return "?";
}

std::string_view to_string(Field f) {
  switch (f) {
    case Field::medicine: return "medicine";
    case Field::biology: return "biology";
    case Field::computer_science: return "computer_science";
    case Field::psychology: return "psychology";
    case Field::other: return "other";
  }
  return "?";
}

std::string_view to_string(OutletType o) {
  switch (o) {
    case OutletType::general_news: return "general_news";
    case OutletType::press_release: return "press_release";
    case OutletType::sci_tech: return "sci_tech";
  }
  return "?";
}

SourceKind parse_source_kind(std::string_view s) {
  if (s == "paper") return SourceKind::paper;
  if (s == "news") return SourceKind::news;
  if (s == "tweet") return SourceKind::tweet;
  throw ValidationError("unknown source_kind \"" + std::string(s) + "\"");
}

Field parse_field(std::string_view s) {
  if (s == "medicine") return Field::medicine;
  if (s == "biology") return Field::biology;
  if (s == "computer_science") return Field::computer_science;
  if (s == "psychology") return Field::psychology;
  if (s == "other") return Field::other;
  throw ValidationError("unknown field \"" + std::string(s) + "\"");
}

OutletType parse_outlet_type(std::string_view s) {
  if (s == "general_news") return OutletType::general_news;
  if (s == "press_release") return OutletType::press_release;
  if (s == "sci_tech") return OutletType::sci_tech;
  throw ValidationError("unknown outlet_type \"" + std::string(s) + "\"");
}

std::string normalize_doi(std::string_view doi) {
  auto begin = doi.find_first_not_of(" \t\r\n");
  auto end = doi.find_last_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  std::string s = text::ascii_lower(doi.substr(begin, end - begin + 1));
  for (std::string_view prefix : {"https://doi.org/", "http://doi.org/", "https://dx.doi.org/",
                                  "http://dx.doi.org/", "doi.org/", "doi:"}) {
    if (s.starts_with(prefix)) {
      s.erase(0, prefix.size());
      break;
    }
  }
  auto b2 = s.find_first_not_of(" \t");
  return b2 == std::string::npos ? std::string{} : s.substr(b2);
}

namespace {

bool looks_like_iso_date(std::string_view s) {
  if (s.size() < 10) return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return s[4] == '-' && s[7] == '-';
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) throw ValidationError(std::string("field \"") + key + "\" must be a string");
  return j.at(key).get<std::string>();
}

std::uint64_t count_field(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ValidationError(std::string("user_meta.") + key + " must be a non-negative integer");
}

}  // namespace

Document document_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  Document d;
  d.doc_id = required<std::string>(j, "doc_id");
  if (d.doc_id.empty()) throw ValidationError("empty doc_id");
  d.source_kind = parse_source_kind(required<std::string>(j, "source_kind"));
  d.doi = optional_string(j, "doi");
  d.linked_doi = optional_string(j, "linked_doi");
  d.field = parse_field(required<std::string>(j, "field"));
  if (auto o = optional_string(j, "outlet_type")) d.outlet_type = parse_outlet_type(*o);
  d.text = required<std::string>(j, "text");
  d.published_at = optional_string(j, "published_at");
  if (j.contains("user_meta") && !j.at("user_meta").is_null()) {
    const json& u = j.at("user_meta");
    UserMeta m;
    m.is_verified = required<bool>(u, "is_verified");
    m.is_organization = required<bool>(u, "is_organization");
    m.followers = count_field(u, "followers");
    m.following = count_field(u, "following");
    m.account_age_years = required<double>(u, "account_age_years");
    if (!std::isfinite(m.account_age_years) || m.account_age_years < 0) {
      throw ValidationError("user_meta.account_age_years must be finite and non-negative");
    }
    d.user_meta = m;
  }

  if (d.text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ValidationError("document " + d.doc_id + ": empty text");
  }
  if (d.source_kind == SourceKind::paper) {
    if (!d.doi || normalize_doi(*d.doi).empty()) throw ValidationError("paper " + d.doc_id + ": missing doi");
  } else if (!d.linked_doi || normalize_doi(*d.linked_doi).empty()) {
    throw ValidationError(std::string(to_string(d.source_kind)) + " " + d.doc_id + ": missing linked_doi");
  }
  if (d.published_at && !looks_like_iso_date(*d.published_at)) {
    throw ValidationError("document " + d.doc_id + ": published_at is not an ISO-8601 date");
  }
  return d;
}

ordered_json document_to_json(const Document& d) {
  ordered_json j;
  j["doc_id"] = d.doc_id;
  j["source_kind"] = to_string(d.source_kind);
  if (d.doi) j["doi"] = *d.doi;
  if (d.linked_doi) j["linked_doi"] = *d.linked_doi;
  j["field"] = to_string(d.field);
  if (d.outlet_type) j["outlet_type"] = to_string(*d.outlet_type);
  j["text"] = d.text;
  if (d.user_meta) {
    ordered_json u;
    u["is_verified"] = d.user_meta->is_verified;
    u["is_organization"] = d.user_meta->is_organization;
    u["followers"] = d.user_meta->followers;
    u["following"] = d.user_meta->following;
    u["account_age_years"] = d.user_meta->account_age_years;
    j["user_meta"] = std::move(u);
  }
  if (d.published_at) j["published_at"] = *d.published_at;
  return j;
}

std::string document_to_line(const Document& d) { return document_to_json(d).dump(); }

void CorpusStore::add(Document doc) {
  if (by_id_.contains(doc.doc_id)) throw ValidationError("duplicate doc_id \"" + doc.doc_id + "\"");
  if (doc.source_kind == SourceKind::paper) {
    const std::string key = normalize_doi(doc.doi.value_or(""));
    if (paper_by_doi_.contains(key)) {
      throw ValidationError("doi \"" + key + "\" belongs to more than one paper (" + doc.doc_id + ")");
    }
    paper_by_doi_.emplace(key, docs_.size());
  }
  by_id_.emplace(doc.doc_id, docs_.size());
  docs_.push_back(std::move(doc));
}

const Document* CorpusStore::find(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  return it == by_id_.end() ? nullptr : &docs_[it->second];
}

const Document* CorpusStore::find_paper_by_doi(std::string_view doi) const {
  auto it = paper_by_doi_.find(normalize_doi(doi));
  return it == paper_by_doi_.end() ? nullptr : &docs_[it->second];
}

namespace {
constexpr std::string_view kind_file(SourceKind k) {
  switch (k) {
    case SourceKind::paper: return "papers.jsonl";
    case SourceKind::news: return "news.jsonl";
    case SourceKind::tweet: return "tweets.jsonl";
  }
  return "";
}
}  // namespace

void CorpusStore::persist(const std::filesystem::path& dir) const {
  for (SourceKind k : {SourceKind::paper, SourceKind::news, SourceKind::tweet}) {
    auto out = open_output(dir / kind_file(k));
    for (const auto& d : docs_) {
      if (d.source_kind == k) out << document_to_line(d) << '\n';
    }
  }
}

CorpusStore CorpusStore::load(const std::filesystem::path& dir) {
  CorpusStore store;
  for (SourceKind k : {SourceKind::paper, SourceKind::news, SourceKind::tweet}) {
    const auto path = dir / kind_file(k);
    if (!std::filesystem::exists(path)) continue;
    ingest_documents(path, store, {.strict = true, .kind_hint = std::nullopt});
  }
  return store;
}

IngestResult ingest_documents(const std::filesystem::path& path, CorpusStore& store,
                              const IngestOptions& options) {
  IngestResult result;
  std::ifstream probe(path);
  if (!probe) throw ValidationError("cannot open input file: " + path.string());
  probe.close();

  // Duplicate ids are fatal in both modes, so they bypass the lenient collector.
  std::optional<std::string> duplicate;
  auto issues = for_each_jsonl(path, options.strict, [&](std::size_t, const json& j) {
    json record = j;
    if (options.kind_hint && record.is_object() && !record.contains("source_kind")) {
      record["source_kind"] = to_string(*options.kind_hint);
    }
    Document doc = document_from_json(record);
    if (store.find(doc.doc_id)) {
      if (!duplicate) duplicate = doc.doc_id;
      return;
    }
    store.add(std::move(doc));
    ++result.count;
  });
  if (duplicate) throw ValidationError("duplicate doc_id \"" + *duplicate + "\" in " + path.string());
  for (auto& issue : issues) result.rejected.push_back({issue.line, std::move(issue.message)});
  return result;
}

LinkTable link_mentions(const CorpusStore& store) {
  LinkTable table;
  for (const auto& d : store.documents()) {
    if (d.source_kind == SourceKind::paper) continue;
    const Document* paper = store.find_paper_by_doi(d.linked_doi.value_or(""));
    if (paper) {
      table.entries.push_back({normalize_doi(*paper->doi), d.doc_id});
    } else {
      table.unresolved.push_back(d.doc_id);
    }
  }
  std::sort(table.entries.begin(), table.entries.end());
  std::sort(table.unresolved.begin(), table.unresolved.end());
  return table;
}

}  // namespace scd::corpus
