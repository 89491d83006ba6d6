#pragma once

// Seeded synthetic data shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scd/annotation.hpp"
#include "scd/finding_extractor.hpp"
#include "scd/io.hpp"
#include "scd/mixed_effects.hpp"
#include "scd/pair_sampler.hpp"

namespace fixture {

inline double normal(scd::Rng& rng) {
  // Box-Muller on the portable uniform.
  double u1 = scd::uniform01(rng);
  while (u1 <= 0.0) u1 = scd::uniform01(rng);
  const double u2 = scd::uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Short strings over a small alphabet with an occasional two-byte letter.
inline std::string random_text(scd::Rng& rng, std::size_t max_len, bool spaces = false) {
  static const std::vector<std::string> alphabet = {"a", "b", "c", "A", "\xc3\xa9", "1"};
  std::string s;
  const std::size_t len = scd::uniform_below(rng, max_len + 1);
  for (std::size_t i = 0; i < len; ++i) {
    if (spaces && scd::uniform_below(rng, 4) == 0) {
      s += ' ';
    } else {
      s += alphabet[scd::uniform_below(rng, alphabet.size())];
    }
  }
  return s;
}

struct MaceSimulation {
  std::vector<double> theta;  // per annotator, index = id number
  std::vector<scd::annotation::AnnotationRecord> records;
  std::vector<int> truth;
};

/// Annotators "a00".."aNN" with theta = U^(1/3) (Beta(3,1)); each item gets
/// `per_item` distinct raters; wrong ratings follow a per-annotator random
/// distribution over the 5 labels.
inline MaceSimulation simulate_mace(std::size_t annotators, std::size_t items, std::size_t per_item,
                                    std::uint64_t seed) {
  scd::Rng rng(seed);
  MaceSimulation sim;
  std::vector<std::vector<double>> spam(annotators, std::vector<double>(5));
  for (std::size_t a = 0; a < annotators; ++a) {
    sim.theta.push_back(std::cbrt(scd::uniform01(rng)));
    double total = 0.0;
    for (auto& p : spam[a]) total += (p = 0.05 + scd::uniform01(rng));
    for (auto& p : spam[a]) p /= total;
  }
  auto name = [](std::size_t a) {
    return std::string("a") + (a < 10 ? "0" : "") + std::to_string(a);
  };
  for (std::size_t i = 0; i < items; ++i) {
    const int truth = 1 + static_cast<int>(scd::uniform_below(rng, 5));
    sim.truth.push_back(truth);
    std::vector<std::size_t> pool(annotators);
    for (std::size_t a = 0; a < annotators; ++a) pool[a] = a;
    for (std::size_t k = 0; k < per_item; ++k) {
      std::swap(pool[k], pool[k + scd::uniform_below(rng, annotators - k)]);
      const std::size_t a = pool[k];
      int rating = truth;
      if (scd::uniform01(rng) >= sim.theta[a]) {
        double u = scd::uniform01(rng);
        rating = 5;
        for (int c = 0; c < 5; ++c) {
          if (u < spam[a][c]) {
            rating = c + 1;
            break;
          }
          u -= spam[a][c];
        }
      }
      sim.records.push_back({"item" + std::to_string(i), name(a), rating});
    }
  }
  return sim;
}

/// Sentences built from class-specific keywords mixed with shared filler.
inline std::vector<scd::extract::LabeledSentence> keyword_corpus(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::vector<std::string>> keywords = {
      {"historically", "prevalence", "burden", "widely", "known", "remains", "unclear", "previous", "literature",
       "context"},
      {"aim", "aimed", "objective", "investigate", "sought", "purpose", "goal", "examine", "hypothesis",
       "intended"},
      {"recruited", "randomized", "cohort", "measured", "protocol", "questionnaire", "enrolled", "assessed",
       "regression", "sampled"},
      {"increased", "decreased", "significantly", "percent", "higher", "lower", "observed", "odds", "ratio",
       "associated"},
      {"suggest", "conclude", "implications", "therefore", "should", "support", "recommend", "indicate",
       "warrant", "overall"}};
  static const std::vector<std::string> filler = {
      "the", "of", "patients", "study", "in", "and", "with", "for", "adults", "children", "data", "risk",
      "group", "treatment", "outcome", "model", "among", "across", "during", "after", "women", "men",
      "sleep", "diet", "exercise", "cells", "mice", "trial", "survey", "network"};
  scd::Rng rng(seed);
  std::vector<scd::extract::LabeledSentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 5;
    std::string s;
    const std::size_t len = 8 + scd::uniform_below(rng, 6);
    for (std::size_t w = 0; w < len; ++w) {
      const bool key = scd::uniform_below(rng, 3) == 0;
      const auto& list = key ? keywords[c] : filler;
      if (!s.empty()) s += ' ';
      s += list[scd::uniform_below(rng, list.size())];
    }
    s += " " + keywords[c][scd::uniform_below(rng, keywords[c].size())] + ".";
    out.push_back({s, scd::extract::kAllLabels[c], scd::uniform01(rng)});
  }
  return out;
}

/// Pairs whose cosine is uniform over [lo, hi).
inline std::vector<scd::pairs::CandidatePair> uniform_pool(std::size_t n, double lo, double hi, std::uint64_t seed) {
  scd::Rng rng(seed);
  std::vector<scd::pairs::CandidatePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    scd::pairs::CandidatePair p;
    p.pair_id = scd::pairs::make_pair_id("P", i, "M", i);
    p.paper_doi = "10.1/p" + std::to_string(i % 17);
    p.cos_sim = lo + (hi - lo) * scd::uniform01(rng);
    p.jaccard = scd::uniform01(rng);
    out.push_back(p);
  }
  return out;
}

/// Intercept-only design from y[g][k].
inline scd::lmm::DesignMatrix one_way_design(const std::vector<std::vector<double>>& y) {
  scd::lmm::DesignMatrix d;
  std::size_t n = 0;
  for (const auto& g : y) n += g.size();
  d.X = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1);
  d.y.resize(static_cast<Eigen::Index>(n));
  d.column_names = {"Intercept"};
  Eigen::Index r = 0;
  for (std::size_t g = 0; g < y.size(); ++g) {
    d.group_labels.push_back("g" + std::to_string(g));
    for (double v : y[g]) {
      d.y(r++) = v;
      d.group_index.push_back(static_cast<int>(g));
    }
  }
  return d;
}

inline std::vector<std::vector<double>> one_way_data(std::size_t groups, std::size_t m, double mu, double sigma2,
                                                     double sigma2_group, scd::Rng& rng) {
  std::vector<std::vector<double>> y(groups);
  for (auto& row : y) {
    const double u = std::sqrt(sigma2_group) * normal(rng);
    for (std::size_t k = 0; k < m; ++k) row.push_back(mu + u + std::sqrt(sigma2) * normal(rng));
  }
  return y;
}

/// Intercept + one covariate, random intercepts.
inline scd::lmm::DesignMatrix covariate_design(std::size_t groups, std::size_t m, double b0, double b1,
                                               double sigma2, double sigma2_group, scd::Rng& rng) {
  scd::lmm::DesignMatrix d;
  const auto n = static_cast<Eigen::Index>(groups * m);
  d.X.resize(n, 2);
  d.y.resize(n);
  d.column_names = {"Intercept", "x"};
  Eigen::Index r = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    d.group_labels.push_back("g" + std::to_string(g));
    const double u = std::sqrt(sigma2_group) * normal(rng);
    for (std::size_t k = 0; k < m; ++k) {
      const double x = normal(rng);
      d.X(r, 0) = 1.0;
      d.X(r, 1) = x;
      d.y(r) = b0 + b1 * x + u + std::sqrt(sigma2) * normal(rng);
      d.group_index.push_back(static_cast<int>(g));
      ++r;
    }
  }
  return d;
}

/// Covariate and noise centered within every group, so group sums of the
/// OLS residuals vanish and the REML optimum sits at lambda = 0.
inline scd::lmm::DesignMatrix no_group_effect_design(std::size_t groups, std::size_t m, scd::Rng& rng) {
  auto d = covariate_design(groups, m, 0.0, 0.0, 1.0, 0.0, rng);
  const auto mm = static_cast<Eigen::Index>(m);
  for (std::size_t g = 0; g < groups; ++g) {
    const Eigen::Index start = static_cast<Eigen::Index>(g) * mm;
    const double xm = d.X.col(1).segment(start, mm).mean();
    const double em = d.y.segment(start, mm).mean();
    d.X.col(1).segment(start, mm).array() -= xm;
    d.y.segment(start, mm).array() -= em;
  }
  d.y += 2.0 * Eigen::VectorXd::Ones(d.y.size()) - 0.7 * d.X.col(1);
  return d;
}

}  // namespace fixture
