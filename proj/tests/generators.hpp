#pragma once

// Hand-rolled generators for property tests. Each takes a test-local Rng so
// failures reproduce from the printed seed.

#include <cstdint>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "skillforge/skillforge.hpp"

namespace gen {

using skillforge::Rng;

// Mixed ASCII, punctuation, Latin-1, CJK, emoji and the odd invalid byte.
inline std::string unicode_string(Rng& rng, std::size_t max_len = 24) {
  static const char32_t kPool[] = {
      U'a', U'b', U'c', U'x', U'y', U'z', U'A', U'Q', U'Z', U'0', U'1', U'5', U'9', U' ', U' ', U'\t', U'\n',
      U'.', U',', U'-', U'_', U'+', U'#', U'/', U'(', U')', U'!', U'"', U'\'', U'&', U'*', U'@', U':', U';',
      U'é', U'ß', U'Ü', U'ñ', U'İ', U'ﬁ', U'中', U'文', U'日', U'—', U'–', U'‘', U'’', U'“', U'”', U'…', U'•', U'€',
      U'😀', U' ', U'​', U'　', U'é'};
  static const char* kWords[] = {"c++", "c#", ".net", "node.js", "object", "oriented", "programming", "java",
                                 "script", "services", "testing", "v2", "3.6", "html", "5", "es"};
  const std::size_t len = rng.below(max_len + 1);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) {
    const auto roll = rng.below(10);
    if (roll == 0) {
      out += kWords[rng.below(std::size(kWords))];
    } else if (roll == 1 && rng.bernoulli(0.2)) {
      out += static_cast<char>(0x80 + rng.below(0x40));  // stray continuation byte
    } else {
      skillforge::text::append_utf8(out, kPool[rng.below(std::size(kPool))]);
    }
  }
  return out;
}

inline std::string word(Rng& rng, std::size_t min_len = 1, std::size_t max_len = 6) {
  std::string s;
  const auto n = rng.between(min_len, max_len);
  for (std::size_t i = 0; i < n; ++i) s += static_cast<char>('a' + rng.below(26));
  return s;
}

// Distinct lowercase names.
inline std::vector<std::string> names(Rng& rng, std::size_t n) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  while (out.size() < n) {
    auto w = word(rng, 2, 7);
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

// Small integer coordinates force exact score ties; duplicated rows force
// more of them.
inline skillforge::EmbeddingStore store(Rng& rng, std::size_t v, std::size_t d, bool ties = true) {
  std::vector<float> values(v * d);
  for (std::size_t i = 0; i < v; ++i) {
    if (ties && i > 0 && rng.bernoulli(0.15)) {
      const auto src = rng.below(i);
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                  values.begin() + static_cast<std::ptrdiff_t>(i * d));
      continue;
    }
    bool nonzero = false;
    while (!nonzero) {
      for (std::size_t c = 0; c < d; ++c) {
        values[i * d + c] = ties ? static_cast<float>(static_cast<int>(rng.below(5)) - 2)
                                 : static_cast<float>(rng.uniform(-1.0, 1.0));
        nonzero |= values[i * d + c] != 0.0f;
      }
    }
  }
  return skillforge::EmbeddingStore(names(rng, v), d, std::move(values));
}

inline skillforge::Vocab vocab(std::size_t v) {
  std::vector<std::string> ns;
  skillforge::SkillContext all{"all", {}};
  for (std::size_t i = 0; i < v; ++i) {
    ns.push_back("s" + std::to_string(1000 + i));
    all.skills.push_back(static_cast<skillforge::SkillId>(i));
  }
  std::vector<skillforge::SkillContext> ctx{all};
  return skillforge::build_vocab(ctx, ns, 1);
}

// Model with both matrices filled uniformly in [-scale, scale].
inline skillforge::EmbeddingModel random_model(Rng& rng, std::size_t v, std::size_t d, double scale = 1.0) {
  skillforge::TrainingConfig cfg;
  cfg.dim = d;
  auto m = skillforge::init_model(vocab(v), cfg);
  for (double& x : m.input.data()) x = rng.uniform(-scale, scale);
  for (double& x : m.output.data()) x = rng.uniform(-scale, scale);
  return m;
}

inline skillforge::TrainingPair pair(Rng& rng, std::size_t v) {
  const auto c = static_cast<std::uint32_t>(rng.below(v));
  auto o = static_cast<std::uint32_t>(rng.below(v - 1));
  if (o >= c) ++o;
  return {c, o};
}

}  // namespace gen
