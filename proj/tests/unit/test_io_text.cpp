#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "scd/error.hpp"
#include "scd/io.hpp"
#include "scd/text.hpp"

namespace fs = std::filesystem;

TEST_CASE("fnv hashes match published vectors") {
  CHECK(scd::fnv1a64("foobar") == 9625390261332436968ull);
  CHECK(scd::fnv1a128_hex("") == "6c62272e07bb014262b821756295c58d");
  CHECK(scd::fnv1a128_hex("a") == "d228cb696f1a8caf78912b704e4a8964");
}

TEST_CASE("sha256 of abc") {
  CHECK(scd::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("uniform draws stay in range and reproduce") {
  scd::Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const auto x = scd::uniform_below(a, 13);
    CHECK(x < 13);
    CHECK(x == scd::uniform_below(b, 13));
    const double u = scd::uniform01(a);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    (void)scd::uniform01(b);
  }
}

TEST_CASE("format_double round-trips and format_fixed drops negative zero") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.7398}) {
    CHECK(std::stod(scd::format_double(v)) == v);
  }
  CHECK(scd::format_fixed(-0.0001, 3) == "0.000");
  CHECK(scd::format_fixed(2.0 / 3.0, 2) == "0.67");
}

TEST_CASE("tokenize lowercases ASCII and keeps non-ASCII letters") {
  const auto t = scd::text::tokenize("Caf\xc3\xa9 au-lait, 42 Cups!");
  REQUIRE(t.size() == 5);
  CHECK(t[0] == "caf\xc3\xa9");
  CHECK(t[1] == "au");
  CHECK(t[2] == "lait");
  CHECK(t[3] == "42");
  CHECK(t[4] == "cups");
  CHECK(scd::text::tokenize("  ,;  ").empty());
}

TEST_CASE("utf8 decoding replaces invalid bytes one by one") {
  const auto cps = scd::text::decode_utf8("a\xff\xc3\xa9");
  REQUIRE(cps.size() == 3);
  CHECK(cps[1] == U'�');
  CHECK(cps[2] == U'é');
  std::string back;
  scd::text::append_utf8(U"éx", back);
  CHECK(back == "\xc3\xa9x");
}

TEST_CASE("jsonl reader is lenient or strict on malformed lines") {
  const fs::path p = fs::temp_directory_path() / "scd_io_test.jsonl";
  {
    std::ofstream f(p);
    f << "{\"a\":1}\n\nnot json\n{\"a\":2}\n";
  }
  int seen = 0;
  const auto issues = scd::for_each_jsonl(p, false, [&](std::size_t, const scd::json& j) { seen += j["a"].get<int>(); });
  CHECK(seen == 3);
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].line == 3);
  CHECK_THROWS_AS(scd::for_each_jsonl(p, true, [](std::size_t, const scd::json&) {}), scd::ValidationError);
  fs::remove(p);
}
