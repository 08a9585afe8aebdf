#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "skillforge/error.hpp"
#include "skillforge/extractor.hpp"
#include "skillforge/random.hpp"

namespace skillforge {

// Skill vocabulary with document frequencies. Dense indices are assigned by
// descending count, ties by canonical string.
class Vocab {
 public:
  Vocab() = default;

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::string& word(std::uint32_t index) const { return words_.at(index); }
  std::uint64_t count(std::uint32_t index) const { return counts_.at(index); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t min_count() const { return min_count_; }

  std::optional<std::uint32_t> index_of(SkillId skill) const {
    auto it = by_skill_.find(skill);
    if (it == by_skill_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::uint32_t> find(const std::string& word) const {
    auto it = by_word_.find(word);
    if (it == by_word_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const Vocab& o) const {
    return words_ == o.words_ && counts_ == o.counts_ && min_count_ == o.min_count_;
  }

  friend Vocab build_vocab(std::span<const SkillContext>, const std::vector<std::string>&, std::uint64_t);

 private:
  std::vector<std::string> words_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<SkillId, std::uint32_t> by_skill_;
  std::unordered_map<std::string, std::uint32_t> by_word_;
  std::uint64_t min_count_ = 1;
};

// `names` maps every SkillId used by the contexts to its canonical string.
inline Vocab build_vocab(std::span<const SkillContext> contexts, const std::vector<std::string>& names,
                         std::uint64_t min_count) {
  if (min_count < 1) throw ValidationError("min_count must be at least 1");
  std::unordered_map<SkillId, std::uint64_t> df;
  for (const auto& ctx : contexts) {
    for (SkillId id : ctx.skills) {
      if (id >= names.size()) throw ValidationError("skill id " + std::to_string(id) + " has no name");
      ++df[id];
    }
  }
  std::vector<SkillId> kept;
  for (const auto& [id, n] : df)
    if (n >= min_count) kept.push_back(id);
  if (kept.empty())
    throw ValidationError("no skill reaches min_count=" + std::to_string(min_count) + " (" +
                          std::to_string(df.size()) + " distinct skills seen)");
  std::sort(kept.begin(), kept.end(), [&](SkillId a, SkillId b) {
    if (df[a] != df[b]) return df[a] > df[b];
    return names[a] < names[b];
  });

  Vocab v;
  v.min_count_ = min_count;
  for (SkillId id : kept) {
    const auto index = static_cast<std::uint32_t>(v.words_.size());
    if (!v.by_word_.emplace(names[id], index).second)
      throw ValidationError("two skill ids share the name '" + names[id] + "'");
    v.words_.push_back(names[id]);
    v.counts_.push_back(df[id]);
    v.by_skill_.emplace(id, index);
  }
  return v;
}

// Audit export: `canonical<TAB>doc_count<TAB>dense_index`, by index.
inline void write_vocab_tsv(std::ostream& out, const Vocab& vocab) {
  for (std::uint32_t i = 0; i < vocab.size(); ++i) out << vocab.word(i) << '\t' << vocab.count(i) << '\t' << i << '\n';
}

struct TrainingPair {
  std::uint32_t center = 0;
  std::uint32_t context = 0;

  bool operator==(const TrainingPair&) const = default;
  auto operator<=>(const TrainingPair&) const = default;
};

// Whole-document window: every in-vocabulary skill of the context predicts
// every other one. n skills yield n*(n-1) ordered pairs.
inline std::vector<TrainingPair> generate_pairs(const SkillContext& context, const Vocab& vocab) {
  std::vector<std::uint32_t> members;
  members.reserve(context.skills.size());
  for (SkillId id : context.skills)
    if (auto idx = vocab.index_of(id)) members.push_back(*idx);

  std::vector<TrainingPair> pairs;
  if (members.size() < 2) return pairs;
  pairs.reserve(members.size() * (members.size() - 1));
  for (std::size_t i = 0; i < members.size(); ++i)
    for (std::size_t j = 0; j < members.size(); ++j)
      if (i != j) pairs.push_back({members[i], members[j]});
  return pairs;
}

inline std::vector<TrainingPair> generate_all_pairs(std::span<const SkillContext> contexts, const Vocab& vocab) {
  std::vector<TrainingPair> all;
  for (const auto& ctx : contexts) {
    auto pairs = generate_pairs(ctx, vocab);
    all.insert(all.end(), pairs.begin(), pairs.end());
  }
  return all;
}

// Fisher-Yates permutation keyed by (seed, epoch).
inline std::vector<TrainingPair> shuffle_epoch(std::vector<TrainingPair> pairs, std::uint64_t seed,
                                               std::uint64_t epoch) {
  Rng rng(seed, {0x5348554646ULL, epoch});
  for (std::size_t i = pairs.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(pairs[i - 1], pairs[j]);
  }
  return pairs;
}

}  // namespace skillforge
