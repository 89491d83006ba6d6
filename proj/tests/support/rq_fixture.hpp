#pragma once

// Synthetic tweet-level rows shaped like the account-metadata regression.

#include <cmath>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "scd/io.hpp"

namespace rq_fixture {

inline std::vector<scd::json> tweet_rows(std::size_t papers, std::size_t per_paper, std::uint64_t seed) {
  static const char* fields[] = {"other", "medicine", "biology", "psychology", "computer_science"};
  scd::Rng rng(seed);
  std::vector<scd::json> rows;
  for (std::size_t g = 0; g < papers; ++g) {
    const double u = 0.35 * fixture::normal(rng);
    const std::string field = fields[g % 5];
    for (std::size_t k = 0; k < per_paper; ++k) {
      const bool verified = scd::uniform01(rng) < 0.3;
      const bool org = scd::uniform01(rng) < 0.25;
      const auto followers = static_cast<std::uint64_t>(std::exp(5.0 + 2.0 * fixture::normal(rng)));
      const auto following = static_cast<std::uint64_t>(std::exp(5.5 + 1.0 * fixture::normal(rng)));
      const double age = 10.0 * scd::uniform01(rng);
      const double y = 3.4 - 0.25 * verified + 0.3 * org - 0.06 * std::log1p(static_cast<double>(followers)) +
                       0.01 * std::log1p(static_cast<double>(following)) + 0.005 * age + u +
                       0.6 * fixture::normal(rng);
      rows.push_back({{"ims_pred", std::clamp(y, 1.0, 5.0)},
                      {"paper_doi", "10.9/rq" + std::to_string(g)},
                      {"source_kind", "tweet"},
                      {"is_verified", verified},
                      {"is_organization", org},
                      {"followers", followers},
                      {"following", following},
                      {"account_age_years", age},
                      {"field", field}});
    }
  }
  return rows;
}

}  // namespace rq_fixture
