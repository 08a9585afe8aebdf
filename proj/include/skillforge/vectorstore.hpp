#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "skillforge/error.hpp"
#include "skillforge/io.hpp"
#include "skillforge/lexicon.hpp"
#include "skillforge/text.hpp"
#include "skillforge/trainer.hpp"

namespace skillforge {

enum class Metric { cosine, dot, euclidean };

inline Metric parse_metric(const std::string& s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "dot") return Metric::dot;
  if (s == "euclidean") return Metric::euclidean;
  throw ValidationError("unknown metric '" + s + "' (expected cosine, dot or euclidean)");
}

struct Neighbor {
  std::uint32_t index = 0;
  double score = 0.0;

  bool operator==(const Neighbor&) const = default;
};

class UnknownSkillError : public ValidationError {
 public:
  UnknownSkillError(const std::string& query, std::vector<std::string> hints)
      : ValidationError(message(query, hints)), hints_(std::move(hints)) {}
  const std::vector<std::string>& hints() const { return hints_; }

 private:
  static std::string message(const std::string& query, const std::vector<std::string>& hints) {
    std::string m = "unknown skill '" + query + "'";
    if (!hints.empty()) {
      m += "; did you mean: ";
      for (std::size_t i = 0; i < hints.size(); ++i) m += (i ? ", " : "") + hints[i];
    }
    return m;
  }
  std::vector<std::string> hints_;
};

// Query-side skill vectors. Immutable after construction.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  EmbeddingStore(std::vector<std::string> words, std::size_t dim, std::vector<float> values,
                 std::string config_digest = {})
      : words_(std::move(words)), dim_(dim), values_(std::move(values)), config_digest_(std::move(config_digest)) {
    if (dim_ == 0 && !words_.empty()) throw ValidationError("store dimension must be positive");
    if (values_.size() != words_.size() * dim_)
      throw ValidationError("store has " + std::to_string(values_.size()) + " values, expected " +
                            std::to_string(words_.size()) + " x " + std::to_string(dim_));
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (words_[i].empty()) throw ValidationError("empty skill name at row " + std::to_string(i));
      if (!index_.emplace(words_[i], static_cast<std::uint32_t>(i)).second)
        throw ValidationError("duplicate skill '" + words_[i] + "' at row " + std::to_string(i));
    }
    norms_.resize(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      double s = 0.0;
      for (float x : row(i)) s += static_cast<double>(x) * static_cast<double>(x);
      norms_[i] = std::sqrt(s);
      if (norms_[i] == 0.0) ++zero_rows_;
    }
  }

  // Input vectors by default; `output_vectors` stores the output layer instead.
  static EmbeddingStore from_model(const EmbeddingModel& model, bool output_vectors = false) {
    const Matrix& m = output_vectors ? model.output : model.input;
    std::vector<float> values(m.data().size());
    std::transform(m.data().begin(), m.data().end(), values.begin(), [](double x) { return static_cast<float>(x); });
    return EmbeddingStore(model.vocab.words(), m.cols(), std::move(values), model.config.digest());
  }

  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& word(std::size_t i) const { return words_.at(i); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<float>& values() const { return values_; }
  std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  double norm(std::size_t i) const { return norms_.at(i); }
  bool is_zero(std::size_t i) const { return norms_.at(i) == 0.0; }
  std::size_t zero_rows() const { return zero_rows_; }
  const std::string& config_digest() const { return config_digest_; }

  std::optional<std::uint32_t> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Exact name, then its normalized form, then with '_' read as ' '.
  std::uint32_t resolve(std::string_view query) const {
    if (auto i = find(query)) return *i;
    std::string spaced(query);
    std::replace(spaced.begin(), spaced.end(), '_', ' ');
    for (const auto& candidate : {std::string(query), spaced}) {
      if (auto i = find(candidate)) return *i;
      if (auto n = normalize_skill(candidate))
        if (auto i = find(*n)) return *i;
    }
    throw UnknownSkillError(std::string(query), suggestions(query));
  }

  std::vector<std::string> suggestions(std::string_view query, std::size_t n = 3) const {
    const std::string q = text::lower_ascii(query);
    std::vector<std::pair<std::size_t, std::string>> scored;
    scored.reserve(words_.size());
    for (const auto& w : words_) scored.emplace_back(text::edit_distance(q, w), w);
    const std::size_t take = std::min(n, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
    return out;
  }

  std::vector<double> vector_of(std::size_t i) const {
    const auto r = row(i);
    return {r.begin(), r.end()};
  }

  std::string digest() const;

  bool operator==(const EmbeddingStore& o) const {
    return words_ == o.words_ && dim_ == o.dim_ && values_ == o.values_;
  }

 private:
  std::vector<std::string> words_;
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::string config_digest_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<double> norms_;
  std::size_t zero_rows_ = 0;
};

// Cosine similarity clamped to [-1, 1].
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ValidationError("cosine of vectors with different dimensions (" + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()) + ")");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw ValidationError("cosine of a zero-norm vector");
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

namespace detail {

inline double score_row(const EmbeddingStore& store, std::span<const double> target, double target_norm,
                        std::size_t i, Metric metric) {
  const auto r = store.row(i);
  if (metric == Metric::euclidean) {
    double s = 0.0;
    for (std::size_t c = 0; c < r.size(); ++c) {
      const double diff = target[c] - static_cast<double>(r[c]);
      s += diff * diff;
    }
    return -std::sqrt(s);
  }
  double d = 0.0;
  for (std::size_t c = 0; c < r.size(); ++c) d += target[c] * static_cast<double>(r[c]);
  if (metric == Metric::dot) return d;
  return std::clamp(d / (target_norm * store.norm(i)), -1.0, 1.0);
}

}  // namespace detail

// Exact scan. Zero-norm rows and `exclude` never appear. Ordered by score
// descending, then skill name ascending.
inline std::vector<Neighbor> nearest(const EmbeddingStore& store, std::span<const double> target, std::size_t k,
                                     std::span<const std::uint32_t> exclude, Metric metric = Metric::cosine) {
  if (target.size() != store.dim()) throw ValidationError("query vector has the wrong dimension");
  double tn = 0.0;
  for (double x : target) tn += x * x;
  tn = std::sqrt(tn);
  if (metric == Metric::cosine && tn == 0.0) throw ValidationError("query vector has zero norm");

  std::vector<Neighbor> all;
  all.reserve(store.size());
  for (std::uint32_t i = 0; i < store.size(); ++i) {
    if (store.is_zero(i) || std::find(exclude.begin(), exclude.end(), i) != exclude.end()) continue;
    all.push_back({i, detail::score_row(store, target, tn, i, metric)});
  }
  const std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    [&](const Neighbor& a, const Neighbor& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return store.word(a.index) < store.word(b.index);
                    });
  all.resize(take);
  return all;
}

inline std::vector<Neighbor> top_k_index(const EmbeddingStore& store, std::uint32_t query, std::size_t k,
                                         Metric metric = Metric::cosine) {
  if (query >= store.size()) throw ValidationError("query index out of range");
  if (store.is_zero(query)) throw ValidationError("skill '" + store.word(query) + "' has a zero-norm vector");
  const auto v = store.vector_of(query);
  const std::uint32_t self[] = {query};
  return nearest(store, v, k, self, metric);
}

inline std::vector<Neighbor> top_k(const EmbeddingStore& store, std::string_view query, std::size_t k,
                                   Metric metric = Metric::cosine) {
  if (k == 0) throw ValidationError("k must be positive");
  return top_k_index(store, store.resolve(query), k, metric);
}

// Nearest skills to b - a + c, excluding a, b and c.
inline std::vector<Neighbor> analogy(const EmbeddingStore& store, std::string_view a, std::string_view b,
                                     std::string_view c, std::size_t k, Metric metric = Metric::cosine) {
  if (k == 0) throw ValidationError("k must be positive");
  const std::uint32_t ia = store.resolve(a), ib = store.resolve(b), ic = store.resolve(c);
  const auto va = store.row(ia), vb = store.row(ib), vc = store.row(ic);
  std::vector<double> target(store.dim());
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = static_cast<double>(vb[i]) - static_cast<double>(va[i]) + static_cast<double>(vc[i]);
  const std::uint32_t exclude[] = {ia, ib, ic};
  return nearest(store, target, k, exclude, metric);
}

// ---------------------------------------------------------------------------
// Persistence
//
// Binary: "SK2V", u32 version, u32 V, u32 d, V x (u32 length, UTF-8 bytes),
// then V*d little-endian IEEE-754 float32 values, row-major.
// Text:   "V d" header, then "skill v1 ... vd" per line; spaces inside skill
// names are written as underscores.

inline constexpr std::array<char, 4> kBinaryMagic = {'S', 'K', '2', 'V'};
inline constexpr std::uint32_t kBinaryVersion = 1;

enum class StoreFormat { binary, text };

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& what, std::size_t offset) const {
    throw ValidationError(source_ + ": offset " + std::to_string(offset) + ": " + what);
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::string_view take(std::size_t n, const char* what) {
    if (remaining() < n)
      fail(std::string("truncated ") + what + " (need " + std::to_string(n) + " bytes, " +
               std::to_string(remaining()) + " left)",
           pos_);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    const auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

 private:
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string to_binary(const EmbeddingStore& store) {
  std::string out(kBinaryMagic.begin(), kBinaryMagic.end());
  detail::put_u32(out, kBinaryVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(store.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(store.dim()));
  for (const auto& w : store.words()) {
    detail::put_u32(out, static_cast<std::uint32_t>(w.size()));
    out += w;
  }
  out.reserve(out.size() + store.values().size() * 4);
  for (float x : store.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

inline EmbeddingStore from_binary(std::string_view bytes, const std::string& source = "<binary>") {
  detail::ByteReader in(bytes, source);
  const auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kBinaryMagic.begin())) in.fail("bad magic bytes (expected SK2V)", 0);
  const auto version = in.u32("version");
  if (version != kBinaryVersion) in.fail("unsupported version " + std::to_string(version), 4);
  const auto v = in.u32("vocabulary size");
  const std::size_t dim_offset = in.offset();
  const auto d = in.u32("dimension");
  if (v > 0 && d == 0) in.fail("dimension must be positive", dim_offset);
  std::vector<std::string> words;
  words.reserve(std::min<std::size_t>(v, in.remaining() / 4));
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < v; ++i) {
    const std::size_t at = in.offset();
    const auto len = in.u32("skill name length");
    if (len == 0) in.fail("empty skill name for row " + std::to_string(i), at);
    std::string w(in.take(len, "skill name"));
    if (!seen.insert(w).second) in.fail("duplicate skill '" + w + "' at row " + std::to_string(i), at);
    words.push_back(std::move(w));
  }
  const std::size_t need = static_cast<std::size_t>(v) * d * 4;
  if (in.remaining() < need)
    in.fail("header claims " + std::to_string(v) + " x " + std::to_string(d) + " values but only " +
                std::to_string(in.remaining() / 4) + " are present",
            in.offset());
  std::vector<float> values(static_cast<std::size_t>(v) * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t at = in.offset();
    values[i] = std::bit_cast<float>(in.u32("matrix"));
    if (!std::isfinite(values[i])) in.fail("non-finite value", at);
  }
  if (in.remaining() != 0) in.fail(std::to_string(in.remaining()) + " trailing bytes after matrix", in.offset());
  return EmbeddingStore(std::move(words), d, std::move(values));
}

inline std::string format_float(float x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline std::string to_text(const EmbeddingStore& store) {
  std::string out = std::to_string(store.size()) + " " + std::to_string(store.dim()) + "\n";
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& w = store.word(i);
    if (w.find_first_of("_\t\n\r") != std::string::npos)
      throw ValidationError("skill '" + w + "' cannot be stored in text format (contains '_' or control whitespace)");
    std::string name = w;
    std::replace(name.begin(), name.end(), ' ', '_');
    out += name;
    for (float x : store.row(i)) {
      out += ' ';
      out += format_float(x);
    }
    out += '\n';
  }
  return out;
}

inline EmbeddingStore from_text(std::string_view content, const std::string& source = "<text>") {
  std::vector<std::string_view> lines = split(content, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  auto where = [&](std::size_t line) { return at_line(source, line); };
  auto fields_of = [](std::string_view line) {
    std::vector<std::string_view> f;
    for (auto part : split(line, ' '))
      if (!part.empty()) f.push_back(part);
    return f;
  };
  auto parse_count = [&](std::string_view s, std::size_t line, const char* what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v > UINT32_MAX)
      throw ValidationError(where(line) + "invalid " + what + " '" + std::string(s) + "'");
    return static_cast<std::size_t>(v);
  };

  if (lines.empty()) throw ValidationError(where(1) + "missing 'V d' header");
  auto strip_cr = [](std::string_view s) { return (!s.empty() && s.back() == '\r') ? s.substr(0, s.size() - 1) : s; };
  const auto header = fields_of(strip_cr(lines[0]));
  if (header.size() != 2) throw ValidationError(where(1) + "header must be 'V d'");
  const std::size_t v = parse_count(header[0], 1, "vocabulary size");
  const std::size_t d = parse_count(header[1], 1, "dimension");
  if (v > 0 && d == 0) throw ValidationError(where(1) + "dimension must be positive");

  std::vector<std::string> words;
  std::vector<float> values;
  words.reserve(v);
  values.reserve(v * d);
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < v; ++r) {
    const std::size_t line = r + 2;
    if (r + 1 >= lines.size())
      throw ValidationError(where(line) + "row " + std::to_string(r + 1) + " missing: header claims V=" +
                            std::to_string(v) + " but file has " + std::to_string(lines.size() - 1) + " rows");
    const auto f = fields_of(strip_cr(lines[r + 1]));
    if (f.size() != d + 1)
      throw ValidationError(where(line) + "expected skill and " + std::to_string(d) + " values, got " +
                            std::to_string(f.empty() ? 0 : f.size() - 1) + " values");
    std::string name(f[0]);
    std::replace(name.begin(), name.end(), '_', ' ');
    if (!seen.insert(name).second) throw ValidationError(where(line) + "duplicate skill '" + name + "'");
    words.push_back(std::move(name));
    for (std::size_t c = 1; c <= d; ++c) {
      float x = 0;
      auto [p, ec] = std::from_chars(f[c].data(), f[c].data() + f[c].size(), x);
      if (ec != std::errc() || p != f[c].data() + f[c].size() || !std::isfinite(x))
        throw ValidationError(where(line) + "unparseable number '" + std::string(f[c]) + "' in column " +
                              std::to_string(c));
      values.push_back(x);
    }
  }
  for (std::size_t extra = v + 1; extra < lines.size(); ++extra)
    if (!trim(lines[extra]).empty())
      throw ValidationError(where(extra + 1) + "unexpected row beyond the V=" + std::to_string(v) +
                            " declared in the header");
  return EmbeddingStore(std::move(words), d, std::move(values));
}

inline std::string EmbeddingStore::digest() const { return digest_of(to_binary(*this)); }

inline StoreFormat format_for_path(const fs::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".txt" || ext == ".vec" || ext == ".text") ? StoreFormat::text : StoreFormat::binary;
}

inline void save_store(const EmbeddingStore& store, const fs::path& path, StoreFormat format) {
  write_text_atomically(path, format == StoreFormat::binary ? to_binary(store) : to_text(store));
}

inline void save_store(const EmbeddingStore& store, const fs::path& path) {
  save_store(store, path, format_for_path(path));
}

// Detects the format from the leading magic bytes.
inline EmbeddingStore load_store(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && std::equal(kBinaryMagic.begin(), kBinaryMagic.end(), bytes.begin()))
    return from_binary(bytes, path.string());
  return from_text(bytes, path.string());
}

}  // namespace skillforge
