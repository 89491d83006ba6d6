#pragma once

// Naive reference implementations used to cross-check the library.
// Deliberately written without sharing code with src/.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

inline bool token_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

inline std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : s) {
    if (token_byte(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double jaccard(const std::string& a, const std::string& b) {
  std::vector<std::string> x, y;
  for (const auto& w : words(a)) if (std::find(x.begin(), x.end(), w) == x.end()) x.push_back(w);
  for (const auto& w : words(b)) if (std::find(y.begin(), y.end(), w) == y.end()) y.push_back(w);
  if (x.empty() && y.empty()) return 1.0;
  std::size_t both = 0;
  for (const auto& w : x) if (std::find(y.begin(), y.end(), w) != y.end()) ++both;
  std::vector<std::string> uni = x;
  for (const auto& w : y) if (std::find(uni.begin(), uni.end(), w) == uni.end()) uni.push_back(w);
  return static_cast<double>(both) / static_cast<double>(uni.size());
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(ab / (std::sqrt(aa) * std::sqrt(bb)));
}

/// Full (n+1) x (m+1) table.
template <typename Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
    }
  }
  return d[a.size()][b.size()];
}

// ASCII-and-two-byte decoder is enough for the generated strings.
inline std::vector<unsigned> code_points(const std::string& s) {
  std::vector<unsigned> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
      out.push_back(c);
      ++i;
    } else {
      out.push_back(((c & 0x1Fu) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu));
      i += 2;
    }
  }
  return out;
}

inline double normalized_edit(const std::string& a, const std::string& b) {
  const auto x = code_points(a);
  const auto y = code_points(b);
  const std::size_t len = std::max(x.size(), y.size());
  return len == 0 ? 0.0 : static_cast<double>(edit_distance(x, y)) / static_cast<double>(len);
}

inline std::size_t rank_of(const std::vector<std::string>& ranked, const std::string& id) {
  for (std::size_t i = 0; i < ranked.size(); ++i) if (ranked[i] == id) return i + 1;
  return 0;
}

/// Mean over gold items of (relevant items at or above it) / rank.
inline double average_precision(const std::vector<std::string>& ranked, const std::set<std::string>& gold) {
  double total = 0.0;
  for (const auto& g : gold) {
    const std::size_t r = rank_of(ranked, g);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < r; ++k) hits += gold.count(ranked[k]);
    total += static_cast<double>(hits) / static_cast<double>(r);
  }
  return total / static_cast<double>(gold.size());
}

inline double rr_all_gold(const std::vector<std::string>& ranked, const std::set<std::string>& gold) {
  double total = 0.0;
  for (const auto& g : gold) total += 1.0 / static_cast<double>(rank_of(ranked, g));
  return total / static_cast<double>(gold.size());
}

inline double rr_first(const std::vector<std::string>& ranked, const std::set<std::string>& gold) {
  std::size_t best = ranked.size() + 1;
  for (const auto& g : gold) best = std::min(best, rank_of(ranked, g));
  return 1.0 / static_cast<double>(best);
}

inline double mse(const std::vector<double>& y, const std::vector<double>& f) {
  long double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (static_cast<long double>(y[i]) - f[i]) * (y[i] - f[i]);
  return static_cast<double>(s / y.size());
}

/// One-pass sums in extended precision.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = x.size();
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

enum class Delta { nominal, ordinal, interval };

/// Pairwise definition: D_o averages within-unit disagreement over pairable
/// values, D_e averages over all ordered pairs of pairable values.
inline double alpha(const std::vector<std::vector<double>>& units, Delta metric) {
  std::vector<double> all;
  for (const auto& u : units) if (u.size() >= 2) all.insert(all.end(), u.begin(), u.end());
  std::map<double, double> freq;
  for (double v : all) freq[v] += 1.0;
  auto delta = [&](double a, double b) -> double {
    if (metric == Delta::nominal) return a == b ? 0.0 : 1.0;
    if (metric == Delta::interval) return (a - b) * (a - b);
    const double lo = std::min(a, b), hi = std::max(a, b);
    double s = 0.0;
    for (const auto& [v, c] : freq) if (v >= lo && v <= hi) s += c;
    s -= (freq[lo] + freq[hi]) / 2.0;
    return s * s;
  };
  const double n = static_cast<double>(all.size());
  double d_o = 0.0;
  for (const auto& u : units) {
    if (u.size() < 2) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j) s += delta(u[i], u[j]);
    d_o += s / static_cast<double>(u.size() - 1);
  }
  d_o /= n;
  double d_e = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = 0; j < all.size(); ++j)
      if (i != j) d_e += delta(all[i], all[j]);
  d_e /= n * (n - 1.0);
  return 1.0 - d_o / d_e;
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j) / 2.0) + 1.0;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

/// Balanced one-way ANOVA REML estimates for y[g][k].
struct AnovaReml {
  double mean = 0.0;
  double sigma2 = 0.0;
  double sigma2_group = 0.0;
};

inline AnovaReml anova_reml(const std::vector<std::vector<double>>& y) {
  const double g = static_cast<double>(y.size());
  const double m = static_cast<double>(y[0].size());
  double grand = 0.0;
  std::vector<double> means;
  for (const auto& row : y) {
    double s = 0.0;
    for (double v : row) s += v;
    means.push_back(s / m);
    grand += s;
  }
  grand /= g * m;
  double ssb = 0.0, ssw = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ssb += m * (means[i] - grand) * (means[i] - grand);
    for (double v : y[i]) ssw += (v - means[i]) * (v - means[i]);
  }
  const double msb = ssb / (g - 1.0);
  const double msw = ssw / (g * (m - 1.0));
  AnovaReml r;
  r.mean = grand;
  if (msb > msw) {
    r.sigma2 = msw;
    r.sigma2_group = (msb - msw) / m;
  } else {
    r.sigma2 = (ssb + ssw) / (g * m - 1.0);
  }
  return r;
}

}  // namespace oracle
