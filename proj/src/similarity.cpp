#include "scd/similarity.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>
#include <stdexcept>

#include "scd/error.hpp"
#include "scd/simd/kernels.hpp"
#include "scd/text.hpp"

namespace scd::similarity {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  const double na = simd::sum_squares(a);
  const double nb = simd::sum_squares(b);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm vector");
  const double c = simd::dot(a, b) / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  try {
    return cosine_similarity(std::span<const double>(a.values), std::span<const double>(b.values));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()) + " [" + a.id + ", " + b.id + "]");
  }
}

double jaccard_index(std::string_view s1, std::string_view s2) {
  const auto t1 = text::tokenize(s1);
  const auto t2 = text::tokenize(s2);
  const std::set<std::string> x(t1.begin(), t1.end());
  const std::set<std::string> y(t2.begin(), t2.end());
  if (x.empty() && y.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : x) inter += y.count(w);
  const std::size_t uni = x.size() + y.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {
template <typename Seq>
std::size_t levenshtein_impl(const Seq& a, const Seq& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}
}  // namespace

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) { return levenshtein_impl(a, b); }

std::size_t levenshtein(std::span<const std::string> a, std::span<const std::string> b) {
  return levenshtein_impl(a, b);
}

double normalized_edit_distance(std::string_view s1, std::string_view s2, EditUnit unit) {
  if (unit == EditUnit::token) {
    const auto a = text::tokenize(s1);
    const auto b = text::tokenize(s2);
    const std::size_t len = std::max(a.size(), b.size());
    if (len == 0) return 0.0;
    return static_cast<double>(levenshtein(std::span<const std::string>(a), std::span<const std::string>(b))) /
           static_cast<double>(len);
  }
  const auto a = text::decode_utf8(s1);
  const auto b = text::decode_utf8(s2);
  const std::size_t len = std::max(a.size(), b.size());
  if (len == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(len);
}

bool MatchRule::matches(const MatchCandidate& c) const {
  switch (kind) {
    case Kind::score_above: return c.score && *c.score > threshold;
    case Kind::label_equals: return c.label && *c.label == label;
  }
  return false;
}

double avg_matching_edit_distance(std::span<const MatchCandidate> pairs, const MatchRule& rule, EditUnit unit) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    if (!rule.matches(p)) continue;
    sum += normalized_edit_distance(p.s1, p.s2, unit);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("avg_matching_edit_distance: no pair satisfies the match rule");
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

double TfidfModel::unseen_idf() const {
  return std::log((1.0 + static_cast<double>(n_docs)) / 1.0) + 1.0;
}

double TfidfModel::idf_of(const std::string& token) const {
  auto it = idf.find(token);
  return it == idf.end() ? unseen_idf() : it->second;
}

json TfidfModel::to_json() const {
  json j;
  j["n_docs"] = n_docs;
  j["hash_dim"] = hash_dim;
  j["idf"] = idf;
  return j;
}

TfidfModel TfidfModel::from_json(const json& j) {
  TfidfModel m;
  m.n_docs = j.at("n_docs").get<std::size_t>();
  m.hash_dim = j.at("hash_dim").get<std::size_t>();
  m.idf = j.at("idf").get<std::map<std::string, double>>();
  if (!std::has_single_bit(m.hash_dim)) throw ValidationError("tfidf hash_dim must be a power of two");
  return m;
}

TfidfModel fit_tfidf(std::span<const std::string> corpus, std::size_t hash_dim) {
  if (corpus.empty()) throw std::invalid_argument("fit_tfidf: empty corpus");
  if (!std::has_single_bit(hash_dim)) throw std::invalid_argument("fit_tfidf: hash_dim must be a power of two");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    const auto toks = text::tokenize(doc);
    const std::set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& t : uniq) ++df[t];
  }
  TfidfModel m;
  m.n_docs = corpus.size();
  m.hash_dim = hash_dim;
  const double n = static_cast<double>(m.n_docs);
  for (const auto& [tok, count] : df) {
    m.idf.emplace(tok, std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return m;
}

EmbeddingVector embed_tfidf(const TfidfModel& model, std::string_view text_in, std::string id) {
  EmbeddingVector v;
  v.id = std::move(id);
  v.values.assign(model.hash_dim, 0.0);
  std::map<std::string, std::size_t> tf;
  for (auto& t : text::tokenize(text_in)) ++tf[std::move(t)];
  const std::uint64_t mask = model.hash_dim - 1;
  for (const auto& [tok, count] : tf) {
    const std::uint64_t h = fnv1a64("t:" + tok);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    const double w = (1.0 + std::log(static_cast<double>(count))) * model.idf_of(tok);
    v.values[h & mask] += sign * w;
  }
  const double norm2 = simd::sum_squares(v.values);
  if (norm2 == 0.0) {
    v.zero = true;
    return v;
  }
  simd::scale(1.0 / std::sqrt(norm2), v.values);
  return v;
}

// ---------------------------------------------------------------------------

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::uint64_t uint(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ValidationError(origin_ + ": truncated vector file while reading " + what);
    }
  }
  std::string_view bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_vectors(std::span<const EmbeddingVector> vectors) {
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().dim();
  std::string out = "SPCV";
  out.push_back(static_cast<char>(kVectorFileVersion));
  put_u32(out, static_cast<std::uint32_t>(dim));
  put_u64(out, vectors.size());
  for (const auto& v : vectors) {
    if (v.dim() != dim) throw std::invalid_argument("write_vectors: mixed dimensions (" + v.id + ")");
    if (v.id.size() > 0xFFFF) throw std::invalid_argument("write_vectors: id too long");
    put_u16(out, static_cast<std::uint16_t>(v.id.size()));
    out += v.id;
    for (double x : v.values) {
      const auto f = static_cast<float>(x);
      if (!std::isfinite(f)) throw std::invalid_argument("write_vectors: non-finite value in " + v.id);
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

void write_vectors(const std::filesystem::path& path, std::span<const EmbeddingVector> vectors) {
  write_file(path, encode_vectors(vectors));
}

VectorFileProvider VectorFileProvider::decode(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (r.take(4, "magic") != "SPCV") throw ValidationError(origin + ": bad magic (expected SPCV)");
  const auto version = r.uint(1, "version");
  if (version != kVectorFileVersion) {
    throw ValidationError(origin + ": unsupported vector file version " + std::to_string(version));
  }
  VectorFileProvider p;
  p.dim_ = static_cast<std::size_t>(r.uint(4, "dim"));
  const std::uint64_t count = r.uint(8, "count");
  for (std::uint64_t k = 0; k < count; ++k) {
    if (r.remaining() == 0) {
      throw ValidationError(origin + ": truncated vector file: header declares " + std::to_string(count) +
                            " records, found " + std::to_string(k));
    }
    const auto len = static_cast<std::size_t>(r.uint(2, "id length"));
    EmbeddingVector v;
    v.id = std::string(r.take(len, "id"));
    v.values.resize(p.dim_);
    for (std::size_t i = 0; i < p.dim_; ++i) {
      const float f = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4, "vector values")));
      if (!std::isfinite(f)) throw ValidationError(origin + ": non-finite value in vector " + v.id);
      v.values[i] = f;
    }
    if (!p.index_.emplace(v.id, p.vectors_.size()).second) {
      throw ValidationError(origin + ": duplicate vector id " + v.id);
    }
    p.vectors_.push_back(std::move(v));
  }
  if (r.remaining() != 0) throw ValidationError(origin + ": trailing bytes after declared records");
  return p;
}

VectorFileProvider VectorFileProvider::load(const std::filesystem::path& path) {
  return decode(read_file(path), path.string());
}

const EmbeddingVector& VectorFileProvider::lookup(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw std::out_of_range("unknown vector id \"" + std::string(id) + "\"");
  return vectors_[it->second];
}

bool VectorFileProvider::contains(std::string_view id) const { return index_.contains(std::string(id)); }

}  // namespace scd::similarity
