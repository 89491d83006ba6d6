#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "scd/error.hpp"
#include "scd/ims_scoring.hpp"
#include "scd/similarity.hpp"
#include "scd/simd/kernels.hpp"

namespace fs = std::filesystem;
using namespace scd::similarity;

namespace {
const fs::path kInterchange = fs::path(SCD_SOURCE_DIR) / "tests" / "fixtures" / "interchange";
}

TEST_CASE("cosine of two small vectors") {
  const std::vector<double> a = {1, 2, 3}, b = {4, 5, 6};
  CHECK(cosine_similarity(a, b) == doctest::Approx(32.0 / (std::sqrt(14.0) * std::sqrt(77.0))).epsilon(1e-15));
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.974632).epsilon(1e-6));
  const std::vector<double> z = {0, 0, 0}, c = {1, 2};
  CHECK_THROWS_AS(cosine_similarity(a, z), std::invalid_argument);
  CHECK_THROWS_AS(cosine_similarity(a, c), std::invalid_argument);
}

TEST_CASE("cosine is symmetric and scale invariant") {
  scd::Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(1 + scd::uniform_below(rng, 40)), b(a.size());
    for (auto& v : a) v = fixture::normal(rng);
    for (auto& v : b) v = fixture::normal(rng);
    const double alpha = 1e-3 + 100.0 * scd::uniform01(rng);
    std::vector<double> sa = a;
    for (auto& v : sa) v *= alpha;
    CHECK(std::fabs(cosine_similarity(a, b) - cosine_similarity(b, a)) <= 1e-12);
    CHECK(std::fabs(cosine_similarity(sa, b) - cosine_similarity(a, b)) <= 1e-12);
  }
}

TEST_CASE("jaccard over word sets") {
  CHECK(jaccard_index("a b c", "a b d") == 0.5);
  CHECK(jaccard_index("", "") == 1.0);
  CHECK(jaccard_index("The cat", "cat the THE") == 1.0);
  CHECK(jaccard_index("x", "") == 0.0);
  scd::Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    const auto s1 = fixture::random_text(rng, 12, true), s2 = fixture::random_text(rng, 12, true);
    const double j = jaccard_index(s1, s2);
    CHECK(j == jaccard_index(s2, s1));
    CHECK(j == oracle::jaccard(s1, s2));
    auto w1 = oracle::words(s1), w2 = oracle::words(s2);
    std::sort(w1.begin(), w1.end());
    std::sort(w2.begin(), w2.end());
    w1.erase(std::unique(w1.begin(), w1.end()), w1.end());
    w2.erase(std::unique(w2.begin(), w2.end()), w2.end());
    CHECK((j == 1.0) == (w1 == w2));
  }
}

TEST_CASE("normalized edit distance") {
  CHECK(normalized_edit_distance("abc", "abd") == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(normalized_edit_distance("", "") == 0.0);
  CHECK(normalized_edit_distance("abc", "") == 1.0);
  CHECK(normalized_edit_distance("caf\xc3\xa9", "cafe") == 0.25);
  CHECK(normalized_edit_distance("the cat sat", "the dog sat", EditUnit::token) == doctest::Approx(1.0 / 3.0));
  scd::Rng rng(5);
  for (int t = 0; t < 2000; ++t) {
    const auto a = fixture::random_text(rng, 12), b = fixture::random_text(rng, 12);
    const double d = normalized_edit_distance(a, b);
    CHECK(d == oracle::normalized_edit(a, b));
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    CHECK((d == 0.0) == (a == b));
  }
}

TEST_CASE("average edit distance over matching pairs") {
  // distances 1/3, 0 and 1/2 among the three pairs scored above 3
  const std::vector<MatchCandidate> pairs = {
      {"abc", "abd", 4.0, {}}, {"same", "same", 3.5, {}}, {"ab", "ax", 5.0, {}}, {"zzz", "q", 2.0, {}}};
  CHECK(avg_matching_edit_distance(pairs, MatchRule::score_above(3.0)) == doctest::Approx(5.0 / 18.0).epsilon(1e-15));
  const std::vector<MatchCandidate> labeled = {{"abc", "abd", {}, "match"}, {"a", "b", {}, "no"}};
  CHECK(avg_matching_edit_distance(labeled, MatchRule::label_equals("match")) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(avg_matching_edit_distance(labeled, MatchRule::score_above(3.0)), std::invalid_argument);
}

TEST_CASE("tfidf idf and unit norm vectors") {
  const std::vector<std::string> corpus = {"shared alpha", "shared beta unique"};
  const auto m = fit_tfidf(corpus);
  CHECK(m.idf_of("shared") < m.idf_of("unique"));
  CHECK(m.idf_of("shared") == doctest::Approx(1.0));
  CHECK(m.idf_of("unique") == doctest::Approx(std::log(3.0 / 2.0) + 1.0));
  CHECK(m.unseen_idf() == doctest::Approx(std::log(3.0) + 1.0));
  scd::Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const auto s = fixture::random_text(rng, 30, true);
    const auto v = embed_tfidf(m, s);
    if (oracle::words(s).empty()) {
      CHECK(v.zero);
    } else {
      double n2 = 0.0;
      for (double x : v.values) n2 += x * x;
      CHECK(std::fabs(std::sqrt(n2) - 1.0) <= 1e-9);
    }
  }
  const auto back = TfidfModel::from_json(m.to_json());
  CHECK(back.idf == m.idf);
  CHECK(back.n_docs == m.n_docs);
  CHECK_THROWS_AS(fit_tfidf(std::vector<std::string>{}), std::invalid_argument);
}

TEST_CASE("vector file round trip through the C++ writer") {
  std::vector<EmbeddingVector> vs = {{"a", {0.5, -1.25, 3.0}, false}, {"b", {0.1, 0.2, 0.3}, false}};
  const auto bytes = encode_vectors(vs);
  const auto p = VectorFileProvider::decode(bytes);
  CHECK(p.dim() == 3);
  CHECK(p.lookup("a").values == vs[0].values);
  CHECK(p.lookup("b").values[0] == static_cast<double>(0.1f));
  CHECK_THROWS_AS((void)p.lookup("zz"), std::out_of_range);
  CHECK_THROWS_WITH_AS(VectorFileProvider::decode(bytes.substr(0, bytes.size() - 3)), doctest::Contains("truncated"),
                       scd::ValidationError);
  CHECK_THROWS_WITH_AS(VectorFileProvider::decode("SPCX" + bytes.substr(4)), doctest::Contains("magic"),
                       scd::ValidationError);
  std::vector<EmbeddingVector> dup = {vs[0], vs[0]};
  CHECK_THROWS_WITH_AS(VectorFileProvider::decode(encode_vectors(dup)), doctest::Contains("duplicate"),
                       scd::ValidationError);
}

TEST_CASE("committed exporter fixtures load exactly") {
  const auto p = VectorFileProvider::load(kInterchange / "vectors.spcv");
  const auto expected = scd::json::parse(scd::read_file(kInterchange / "vectors_expected.json"));
  CHECK(p.dim() == expected["dim"].get<std::size_t>());
  CHECK(p.size() == expected["vectors"].size());
  for (const auto& [id, values] : expected["vectors"].items()) {
    const auto& v = p.lookup(id);
    const auto want = values.get<std::vector<double>>();
    CHECK(v.values == want);
    double n2 = 0.0;
    for (double x : v.values) n2 += x * x;
    CHECK(std::fabs(std::sqrt(n2) - 1.0) <= 1e-6);
  }
  const auto& a = p.lookup("P01#4");
  const auto& b = p.lookup("T01#0");
  CHECK(encode_vectors(std::vector<EmbeddingVector>{{"x", a.values, false}}) ==
        encode_vectors(std::vector<EmbeddingVector>{{"x", b.values, false}}));

  const auto table = scd::ims::read_value_table(kInterchange / "scores.jsonl");
  const auto pairs = scd::read_jsonl(kInterchange / "pairs.jsonl");
  CHECK(table.size() == pairs.size());
  for (const auto& row : pairs) {
    const auto id = row["pair_id"].get<std::string>();
    CHECK(id == scd::pairs::make_pair_id(row["paper_doc_id"].get<std::string>(), row["paper_sent_idx"].get<std::size_t>(),
                                         row["mention_doc_id"].get<std::string>(),
                                         row["mention_sent_idx"].get<std::size_t>()));
    REQUIRE(table.count(id) == 1);
    CHECK(table.at(id) >= 1.0);
    CHECK(table.at(id) <= 5.0);
  }
  const auto copy = fs::temp_directory_path() / "scd_vectors_rewrite.spcv";
  write_vectors(copy, p.vectors());
  CHECK(scd::read_file(copy) == scd::read_file(kInterchange / "vectors.spcv"));
  fs::remove(copy);
}

TEST_CASE("simd kernels agree with the scalar reference") {
  const auto& ref = scd::simd::kernels_for(scd::simd::Isa::scalar);
  for (auto isa : {scd::simd::Isa::scalar, scd::simd::Isa::avx2}) {
    if (!scd::simd::isa_available(isa)) continue;
    CAPTURE(scd::simd::isa_name(isa));
    const auto& k = scd::simd::kernels_for(isa);
    scd::Rng rng(8);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 33u, 257u, 1000u}) {
      std::vector<double> a(n), b(n);
      for (auto& v : a) v = fixture::normal(rng);
      for (auto& v : b) v = fixture::normal(rng);
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::fabs(a[i] * b[i]) + a[i] * a[i];
      const double tol = 1e-14 * (1.0 + mag);
      CHECK(std::fabs(k.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= tol);
      CHECK(std::fabs(k.sum_squares(a.data(), n) - ref.sum_squares(a.data(), n)) <= tol);
      CHECK(k.max_abs(a.data(), n) == ref.max_abs(a.data(), n));
      auto y1 = b, y2 = b;
      k.axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(y1[i] - y2[i]) <= 1e-15 * (1.0 + std::fabs(y2[i])));
      auto s1 = a, s2 = a;
      k.scale(-2.5, s1.data(), n);
      ref.scale(-2.5, s2.data(), n);
      CHECK(s1 == s2);
    }
  }
}

TEST_CASE("forcing the scalar path leaves results unchanged") {
  const auto before = scd::simd::active_isa();
  const std::vector<double> a = {1, 2, 3, 4, 5, 6, 7}, b = {7, 6, 5, 4, 3, 2, 1};
  const double fast = cosine_similarity(a, b);
  scd::simd::force_isa(scd::simd::Isa::scalar);
  CHECK(scd::simd::active_isa() == scd::simd::Isa::scalar);
  CHECK(std::fabs(cosine_similarity(a, b) - fast) <= 1e-15);
  scd::simd::force_isa(before);
}
