#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "scd/corpus_store.hpp"
#include "scd/error.hpp"

namespace fs = std::filesystem;
using namespace scd::corpus;

namespace {
const fs::path kMini = fs::path(SCD_SOURCE_DIR) / "data" / "mini";
}

TEST_CASE("normalize_doi strips resolver prefixes and case") {
  CHECK(normalize_doi(" https://doi.org/10.1000/ABC ") == "10.1000/abc");
  CHECK(normalize_doi("doi:10.1000/x") == "10.1000/x");
  CHECK(normalize_doi("http://doi.org/10.1/Y") == "10.1/y");
  CHECK(normalize_doi("doi.org/10.1/z") == "10.1/z");
}

TEST_CASE("document validation names the problem") {
  CHECK_THROWS_WITH_AS(document_from_json(scd::json::parse(R"({"doc_id":"p","source_kind":"paper","field":"other","text":"x"})")),
                       doctest::Contains("missing doi"), scd::ValidationError);
  CHECK_THROWS_WITH_AS(document_from_json(scd::json::parse(R"({"doc_id":"n","source_kind":"news","field":"other","text":"x"})")),
                       doctest::Contains("linked_doi"), scd::ValidationError);
  CHECK_THROWS_AS(document_from_json(scd::json::parse(R"({"doc_id":"n","source_kind":"blog","field":"other","text":"x"})")),
                  scd::ValidationError);
  CHECK_THROWS_AS(document_from_json(scd::json::parse(R"({"doc_id":"p","source_kind":"paper","doi":"10.1/a","field":"other","text":""})")),
                  scd::ValidationError);
}

TEST_CASE("duplicate doc ids are rejected") {
  CorpusStore s;
  s.add(document_from_json(scd::json::parse(R"({"doc_id":"p","source_kind":"paper","doi":"10.1/a","field":"other","text":"x"})")));
  CHECK_THROWS_WITH_AS(
      s.add(document_from_json(scd::json::parse(R"({"doc_id":"p","source_kind":"paper","doi":"10.1/b","field":"other","text":"y"})"))),
      doctest::Contains("\"p\""), scd::ValidationError);
}

TEST_CASE("mini corpus ingests, links and round-trips") {
  CorpusStore store;
  const auto res = ingest_documents(kMini / "documents.jsonl", store, {.strict = true});
  CHECK(res.count == 82);
  CHECK(res.rejected.empty());

  const auto links = link_mentions(store);
  CHECK(links.entries.size() == 70);
  CHECK(links.unresolved.empty());
  CHECK(std::is_sorted(links.entries.begin(), links.entries.end()));
  std::size_t mentions = 0;
  for (const auto& d : store.documents()) mentions += d.source_kind != SourceKind::paper;
  CHECK(links.entries.size() + links.unresolved.size() == mentions);

  const fs::path dir = fs::temp_directory_path() / "scd_corpus_rt";
  fs::remove_all(dir);
  store.persist(dir);
  const auto back = CorpusStore::load(dir);
  REQUIRE(back.size() == store.size());
  for (const auto& d : store.documents()) {
    const Document* e = back.find(d.doc_id);
    REQUIRE(e != nullptr);
    CHECK(*e == d);
    CHECK(document_to_line(*e) == document_to_line(d));
  }
  const auto again = link_mentions(back);
  CHECK(again.entries == links.entries);
  fs::remove_all(dir);
}

TEST_CASE("export re-ingests byte-identically") {
  const auto line = std::string(
      R"({"doc_id":"t1","source_kind":"tweet","linked_doi":"10.1/a","field":"biology","text":"Mice sleep more.",)"
      R"("user_meta":{"is_verified":true,"is_organization":false,"followers":10,"following":3,"account_age_years":1.5}})");
  const auto d = document_from_json(scd::json::parse(line));
  const auto out = document_to_line(d);
  CHECK(document_to_line(document_from_json(scd::json::parse(out))) == out);
}

TEST_CASE("lenient ingest skips bad lines, strict stops") {
  const fs::path p = fs::temp_directory_path() / "scd_bad_docs.jsonl";
  {
    std::ofstream f(p);
    f << R"({"doc_id":"p1","source_kind":"paper","doi":"10.1/a","field":"other","text":"x"})" << '\n'
      << R"({"doc_id":"n1","source_kind":"news","field":"other","text":"no link"})" << '\n'
      << R"({"doc_id":"n2","source_kind":"news","linked_doi":"10.1/missing","field":"other","text":"y"})" << '\n';
  }
  CorpusStore s;
  const auto res = ingest_documents(p, s);
  CHECK(res.count == 2);
  REQUIRE(res.rejected.size() == 1);
  CHECK(res.rejected[0].line == 2);
  const auto links = link_mentions(s);
  CHECK(links.entries.empty());
  CHECK(links.unresolved == std::vector<std::string>{"n2"});

  CorpusStore strict;
  CHECK_THROWS_AS(ingest_documents(p, strict, {.strict = true}), scd::ValidationError);
  fs::remove(p);
}
