#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scd/io.hpp"

namespace scd::corpus {

enum class SourceKind { paper, news, tweet };
enum class Field { medicine, biology, computer_science, psychology, other };
enum class OutletType { general_news, press_release, sci_tech };

std::string_view to_string(SourceKind k);
std::string_view to_string(Field f);
std::string_view to_string(OutletType o);
SourceKind parse_source_kind(std::string_view s);
Field parse_field(std::string_view s);
OutletType parse_outlet_type(std::string_view s);

struct UserMeta {
  bool is_verified = false;
  bool is_organization = false;
  std::uint64_t followers = 0;
  std::uint64_t following = 0;
  double account_age_years = 0.0;

  bool operator==(const UserMeta&) const = default;
};

struct Document {
  std::string doc_id;
  SourceKind source_kind = SourceKind::paper;
  std::optional<std::string> doi;
  std::optional<std::string> linked_doi;
  Field field = Field::other;
  std::optional<OutletType> outlet_type;
  std::string text;
  std::optional<UserMeta> user_meta;
  std::optional<std::string> published_at;

  bool operator==(const Document&) const = default;
};

/// Lowercase, strip a leading "https://doi.org/" (or "http://", "doi.org/",
/// "doi:") and surrounding whitespace.
std::string normalize_doi(std::string_view doi);

/// Parses one JSON-lines record and checks the per-document invariants.
/// Throws ValidationError describing the first violation.
Document document_from_json(const json& j);

/// Canonical field order; absent optionals omitted.
ordered_json document_to_json(const Document& d);
std::string document_to_line(const Document& d);

struct IngestIssue {
  std::size_t line = 0;
  std::string message;
};

struct IngestOptions {
  bool strict = false;
  std::optional<SourceKind> kind_hint;  // fills records lacking source_kind
};

/// Immutable after ingest; concurrent readers are safe.
class CorpusStore {
 public:
  CorpusStore() = default;

  /// Duplicate doc_id always throws ValidationError naming the id.
  void add(Document doc);

  [[nodiscard]] std::size_t size() const { return docs_.size(); }
  [[nodiscard]] const std::vector<Document>& documents() const { return docs_; }
  [[nodiscard]] const Document* find(std::string_view doc_id) const;
  /// Paper whose normalized DOI equals `doi` (normalized on lookup).
  [[nodiscard]] const Document* find_paper_by_doi(std::string_view doi) const;

  /// Writes papers.jsonl, news.jsonl, tweets.jsonl into `dir`.
  void persist(const std::filesystem::path& dir) const;
  static CorpusStore load(const std::filesystem::path& dir);

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> paper_by_doi_;
};

struct IngestResult {
  std::size_t count = 0;
  std::vector<IngestIssue> rejected;
};

/// Appends every valid record of `path` to `store`. Malformed lines are
/// skipped and reported in lenient mode, fatal in strict mode.
IngestResult ingest_documents(const std::filesystem::path& path, CorpusStore& store,
                              const IngestOptions& options = {});

struct LinkEntry {
  std::string paper_doi;       // normalized
  std::string mention_doc_id;

  auto operator<=>(const LinkEntry&) const = default;
};

struct LinkTable {
  std::vector<LinkEntry> entries;          // sorted by (paper_doi, mention_doc_id)
  std::vector<std::string> unresolved;     // mention doc_ids, sorted
};

LinkTable link_mentions(const CorpusStore& store);

}  // namespace scd::corpus
