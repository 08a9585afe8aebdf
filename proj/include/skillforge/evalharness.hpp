#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "skillforge/error.hpp"
#include "skillforge/extractor.hpp"
#include "skillforge/io.hpp"
#include "skillforge/lexicon.hpp"
#include "skillforge/random.hpp"
#include "skillforge/vectorstore.hpp"

namespace skillforge {

// ---------------------------------------------------------------------------
// Query sampling

// n distinct store indices, uniformly without replacement, in sampled order.
inline std::vector<std::uint32_t> sample_queries(const EmbeddingStore& store, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("query sample size must be positive");
  if (n > store.size())
    throw ValidationError("cannot sample " + std::to_string(n) + " queries from a vocabulary of " +
                          std::to_string(store.size()));
  std::vector<std::uint32_t> ids(store.size());
  for (std::uint32_t i = 0; i < ids.size(); ++i) ids[i] = i;
  Rng rng(seed, {0x53414D50ULL});
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(n);
  return ids;
}

// ---------------------------------------------------------------------------
// Human relevance labeling

// Binary relevance labels keyed by (query, neighbor) skill names. When a
// journal is attached every new label is appended to it immediately, which
// is what makes an interrupted session resumable.
class LabelBook {
 public:
  static LabelBook parse(std::istream& in, const std::string& source) {
    LabelBook book;
    for_each_line(in, [&](std::size_t number, std::string_view line) {
      if (trim(line).empty()) return;
      const auto where = at_line(source, number);
      const auto f = parse_csv_line(line, where);
      if (number == 1 && f.size() == 3 && f[0] == "query" && f[1] == "neighbor" && f[2] == "relevant") return;
      if (f.size() != 3) throw ValidationError(where + "expected query,neighbor,relevant");
      if (f[2] != "0" && f[2] != "1") throw ValidationError(where + "relevant must be 0 or 1, got '" + f[2] + "'");
      book.labels_[{f[0], f[1]}] = f[2] == "1";
    });
    return book;
  }

  static LabelBook load(const fs::path& path) {
    auto in = open_input(path);
    return parse(in, path.string());
  }

  // Loads `path` if it exists and journals new labels to it.
  static LabelBook open_journal(const fs::path& path) {
    LabelBook book = fs::exists(path) ? load(path) : LabelBook();
    book.journal_ = path;
    return book;
  }

  std::optional<bool> get(const std::string& query, const std::string& neighbor) const {
    auto it = labels_.find({query, neighbor});
    if (it == labels_.end()) return std::nullopt;
    return it->second;
  }

  void record(const std::string& query, const std::string& neighbor, bool relevant) {
    labels_[{query, neighbor}] = relevant;
    if (!journal_) return;
    const bool fresh = !fs::exists(*journal_) || fs::file_size(*journal_) == 0;
    std::ofstream out(*journal_, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to label file '" + journal_->string() + "'");
    if (fresh) out << "query,neighbor,relevant\n";
    out << csv_field(query) << ',' << csv_field(neighbor) << ',' << (relevant ? 1 : 0) << '\n';
    out.flush();
    if (!out) throw IoError("write failure on label file '" + journal_->string() + "'");
  }

  std::size_t size() const { return labels_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, bool> labels_;
  std::optional<fs::path> journal_;
};

// Asks for one label. Returning nullopt ends the session early.
using Prompter = std::function<std::optional<bool>(const std::string& query, const std::string& neighbor,
                                                   std::size_t rank, double score)>;

inline Prompter terminal_prompter(std::istream& in, std::ostream& out) {
  return [&in, &out](const std::string& query, const std::string& neighbor, std::size_t rank,
                     double score) -> std::optional<bool> {
    while (true) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", score);
      out << "[" << query << "] #" << rank << " " << neighbor << " (" << buf << ")  relevant? [y/n/q] " << std::flush;
      std::string answer;
      if (!std::getline(in, answer)) return std::nullopt;
      const auto a = text::lower_ascii(trim(answer));
      if (a == "y" || a == "yes" || a == "1") return true;
      if (a == "n" || a == "no" || a == "0") return false;
      if (a == "q" || a == "quit") return std::nullopt;
    }
  };
}

struct EvalQuery {
  std::uint32_t query = 0;
  std::vector<Neighbor> neighbors;
  std::vector<bool> labels;  // empty, or aligned with neighbors

  bool operator==(const EvalQuery&) const = default;
};

struct EvalReport {
  std::vector<EvalQuery> queries;  // in presentation order
  double relevance_rate = 0.0;
  std::uint64_t seed = 0;
  std::string store_digest;
  std::size_t k = 5;

  bool operator==(const EvalReport&) const = default;
};

// Labeled-relevant neighbors over all labeled neighbors; 0 when nothing is labeled.
inline double relevance_rate(std::span<const EvalQuery> queries) {
  std::size_t labeled = 0, relevant = 0;
  for (const auto& q : queries) {
    labeled += q.labels.size();
    relevant += static_cast<std::size_t>(std::count(q.labels.begin(), q.labels.end(), true));
  }
  return labeled == 0 ? 0.0 : static_cast<double>(relevant) / static_cast<double>(labeled);
}

class IncompleteLabelsError : public ValidationError {
 public:
  explicit IncompleteLabelsError(std::vector<std::pair<std::string, std::string>> missing)
      : ValidationError(message(missing)), missing_(std::move(missing)) {}
  const std::vector<std::pair<std::string, std::string>>& missing() const { return missing_; }

 private:
  static std::string message(const std::vector<std::pair<std::string, std::string>>& missing) {
    std::string m = std::to_string(missing.size()) + " unlabeled (query, neighbor) pairs:";
    for (const auto& [q, n] : missing) m += "\n  " + q + "," + n;
    return m;
  }
  std::vector<std::pair<std::string, std::string>> missing_;
};

struct SessionOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  Metric metric = Metric::cosine;
};

// Presents each query's top-k neighbors in a seeded random query order.
// Known labels come from `book`; unknown ones are asked through `prompter`
// (if any) and recorded in `book` straight away.
inline EvalReport run_labeling_session(std::span<const std::uint32_t> queries, const EmbeddingStore& store,
                                       LabelBook& book, const Prompter& prompter, const SessionOptions& options) {
  std::vector<std::uint32_t> order(queries.begin(), queries.end());
  Rng rng(options.seed, {0x4C41424CULL});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  EvalReport report;
  report.seed = options.seed;
  report.k = options.k;
  report.store_digest = store.digest();
  std::vector<std::pair<std::string, std::string>> missing;
  bool stopped = false;
  for (std::uint32_t q : order) {
    EvalQuery eq{q, top_k_index(store, q, options.k, options.metric), {}};
    std::vector<bool> labels;
    for (std::size_t r = 0; r < eq.neighbors.size(); ++r) {
      const auto& qn = store.word(q);
      const auto& nn = store.word(eq.neighbors[r].index);
      auto label = book.get(qn, nn);
      if (!label && prompter && !stopped) {
        label = prompter(qn, nn, r + 1, eq.neighbors[r].score);
        if (label)
          book.record(qn, nn, *label);
        else
          stopped = true;
      }
      if (!label) {
        missing.emplace_back(qn, nn);
        continue;
      }
      labels.push_back(*label);
    }
    if (labels.size() == eq.neighbors.size()) eq.labels = std::move(labels);
    report.queries.push_back(std::move(eq));
  }
  if (!missing.empty()) throw IncompleteLabelsError(std::move(missing));
  report.relevance_rate = relevance_rate(report.queries);
  return report;
}

inline nlohmann::json report_to_json(const EvalReport& report, const EmbeddingStore& store) {
  nlohmann::json queries = nlohmann::json::array();
  std::size_t labeled = 0, relevant = 0;
  for (std::size_t i = 0; i < report.queries.size(); ++i) {
    const auto& q = report.queries[i];
    nlohmann::json neighbors = nlohmann::json::array();
    for (std::size_t r = 0; r < q.neighbors.size(); ++r) {
      nlohmann::json n{{"rank", r + 1}, {"skill", store.word(q.neighbors[r].index)}, {"score", q.neighbors[r].score}};
      if (!q.labels.empty()) {
        n["relevant"] = static_cast<bool>(q.labels[r]);
        ++labeled;
        relevant += q.labels[r] ? 1 : 0;
      }
      neighbors.push_back(std::move(n));
    }
    queries.push_back({{"presentation_rank", i + 1}, {"query", store.word(q.query)}, {"neighbors", std::move(neighbors)}});
  }
  return {{"seed", report.seed},          {"store_digest", report.store_digest},
          {"k", report.k},                {"labeled", labeled},
          {"relevant", relevant},         {"relevance_rate", report.relevance_rate},
          {"queries", std::move(queries)}};
}

// ---------------------------------------------------------------------------
// Planted-cluster synthetic corpora

struct SyntheticSpec {
  std::size_t clusters = 6;
  std::size_t skills_per_cluster = 10;
  std::size_t docs = 5000;
  std::size_t min_skills_per_doc = 4;
  std::size_t max_skills_per_doc = 8;
  double intra_cluster_prob = 0.9;
  std::uint64_t seed = 42;

  std::size_t total_skills() const { return clusters * skills_per_cluster; }

  void validate() const {
    if (clusters < 1 || skills_per_cluster < 1 || docs < 1)
      throw ValidationError("clusters, skills_per_cluster and docs must be positive");
    if (min_skills_per_doc < 1 || min_skills_per_doc > max_skills_per_doc)
      throw ValidationError("skills_per_doc range must satisfy 1 <= min <= max");
    if (!(intra_cluster_prob > 0.0 && intra_cluster_prob <= 1.0))
      throw ValidationError("intra_cluster_prob must be in (0, 1]");
    if (max_skills_per_doc > total_skills())
      throw ValidationError("skills_per_doc upper bound " + std::to_string(max_skills_per_doc) + " exceeds the " +
                            std::to_string(total_skills()) + " total skills");
    if (intra_cluster_prob == 1.0 && max_skills_per_doc > skills_per_cluster)
      throw ValidationError("with intra_cluster_prob=1 a document cannot hold more than skills_per_cluster skills");
  }

  KeyValues to_key_values() const {
    char buf[64];
    const std::string p(buf, std::to_chars(buf, buf + sizeof buf, intra_cluster_prob).ptr);
    return {{"clusters", std::to_string(clusters)},
            {"skills_per_cluster", std::to_string(skills_per_cluster)},
            {"docs", std::to_string(docs)},
            {"min_skills_per_doc", std::to_string(min_skills_per_doc)},
            {"max_skills_per_doc", std::to_string(max_skills_per_doc)},
            {"intra_cluster_prob", p},
            {"seed", std::to_string(seed)}};
  }

  std::string digest() const {
    std::string flat;
    for (const auto& [k, v] : to_key_values()) flat += k + "=" + v + "\n";
    return digest_of(flat);
  }

  static SyntheticSpec from_key_values(const KeyValues& kv) {
    SyntheticSpec s;
    for (const auto& [key, value] : kv) {
      try {
        if (key == "clusters") s.clusters = std::stoull(value);
        else if (key == "skills_per_cluster") s.skills_per_cluster = std::stoull(value);
        else if (key == "docs") s.docs = std::stoull(value);
        else if (key == "min_skills_per_doc") s.min_skills_per_doc = std::stoull(value);
        else if (key == "max_skills_per_doc") s.max_skills_per_doc = std::stoull(value);
        else if (key == "intra_cluster_prob") s.intra_cluster_prob = std::stod(value);
        else if (key == "seed") s.seed = std::stoull(value);
        else throw ValidationError("unknown synthetic spec key '" + key + "'");
      } catch (const std::logic_error&) {
        throw ValidationError("invalid value '" + value + "' for synthetic spec key '" + key + "'");
      }
    }
    s.validate();
    return s;
  }
};

using ClusterMap = std::unordered_map<std::string, std::uint32_t>;

struct SyntheticCorpus {
  Lexicon lexicon;
  std::vector<SkillContext> contexts;
  std::vector<std::uint32_t> cluster_of;  // by SkillId
  std::vector<std::uint32_t> home_of;     // by document

  ClusterMap cluster_map() const {
    ClusterMap m;
    for (SkillId id = 0; id < cluster_of.size(); ++id) m.emplace(lexicon.canonical(id), cluster_of[id]);
    return m;
  }
};

inline std::string synthetic_skill_name(std::size_t cluster, std::size_t member, const SyntheticSpec& spec) {
  auto width = [](std::size_t n) { return std::to_string(n > 0 ? n - 1 : 0).size(); };
  auto pad = [](std::size_t v, std::size_t w) {
    std::string s = std::to_string(v);
    return std::string(w > s.size() ? w - s.size() : 0, '0') + s;
  };
  return "c" + pad(cluster, width(spec.clusters)) + "s" + pad(member, width(spec.skills_per_cluster));
}

// Skill id = cluster * skills_per_cluster + member. Each document picks a home
// cluster; each slot comes from the home cluster with probability
// intra_cluster_prob and from the whole vocabulary otherwise, always among
// skills the document does not hold yet.
inline SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t total = spec.total_skills();
  std::vector<std::string> names;
  std::vector<std::uint32_t> cluster_of;
  for (std::size_t c = 0; c < spec.clusters; ++c)
    for (std::size_t m = 0; m < spec.skills_per_cluster; ++m) {
      names.push_back(synthetic_skill_name(c, m, spec));
      cluster_of.push_back(static_cast<std::uint32_t>(c));
    }

  SyntheticCorpus corpus{Lexicon::from_canonicals(names), {}, std::move(cluster_of), {}};
  corpus.contexts.reserve(spec.docs);
  Rng rng(spec.seed, {0x53594E54ULL});
  std::vector<bool> used(total, false);
  const std::size_t width = std::to_string(spec.docs > 0 ? spec.docs - 1 : 0).size();
  for (std::size_t d = 0; d < spec.docs; ++d) {
    const std::size_t home = rng.below(spec.clusters);
    const std::size_t size = rng.between(spec.min_skills_per_doc, spec.max_skills_per_doc);
    std::size_t home_used = 0;
    std::string id = std::to_string(d);
    SkillContext ctx{"doc" + std::string(width - id.size(), '0') + id, {}};
    for (std::size_t slot = 0; slot < size; ++slot) {
      const bool from_home = rng.bernoulli(spec.intra_cluster_prob) && home_used < spec.skills_per_cluster;
      std::size_t pick = 0;
      do {
        pick = from_home ? home * spec.skills_per_cluster + rng.below(spec.skills_per_cluster) : rng.below(total);
      } while (used[pick]);
      used[pick] = true;
      if (pick / spec.skills_per_cluster == home) ++home_used;
      ctx.skills.push_back(static_cast<SkillId>(pick));
    }
    for (SkillId s : ctx.skills) used[s] = false;
    corpus.contexts.push_back(std::move(ctx));
    corpus.home_of.push_back(static_cast<std::uint32_t>(home));
  }
  return corpus;
}

// Mean over store skills of the share of their top-k neighbors that sit in
// the same planted cluster.
inline double cluster_precision_at_k(const EmbeddingStore& store, const ClusterMap& clusters, std::size_t k,
                                     Metric metric = Metric::cosine) {
  if (k == 0) throw ValidationError("k must be positive");
  std::vector<std::uint32_t> cluster(store.size());
  std::map<std::uint32_t, std::size_t> sizes;
  for (std::uint32_t i = 0; i < store.size(); ++i) {
    auto it = clusters.find(store.word(i));
    if (it == clusters.end()) throw ValidationError("skill '" + store.word(i) + "' has no cluster assignment");
    cluster[i] = it->second;
    ++sizes[it->second];
  }
  if (sizes.empty()) throw ValidationError("empty store");
  std::size_t smallest = SIZE_MAX;
  for (const auto& [c, n] : sizes) smallest = std::min(smallest, n);
  if (k >= smallest)
    throw ValidationError("k=" + std::to_string(k) + " must be smaller than the smallest cluster (" +
                          std::to_string(smallest) + " skills)");

  double sum = 0.0;
  std::size_t scored = 0;
  for (std::uint32_t i = 0; i < store.size(); ++i) {
    if (store.is_zero(i)) continue;
    const auto neighbors = top_k_index(store, i, k, metric);
    if (neighbors.empty()) continue;
    std::size_t hits = 0;
    for (const auto& n : neighbors) hits += cluster[n.index] == cluster[i] ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(neighbors.size());
    ++scored;
  }
  return scored == 0 ? 0.0 : sum / static_cast<double>(scored);
}

}  // namespace skillforge
