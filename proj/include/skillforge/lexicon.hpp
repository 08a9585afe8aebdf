#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "skillforge/error.hpp"
#include "skillforge/io.hpp"
#include "skillforge/phrase_trie.hpp"
#include "skillforge/text.hpp"

namespace skillforge {

using SkillId = std::uint32_t;

inline std::set<std::string> default_protected_tokens() {
  return {"c++", "c#", "f#", ".net", "asp.net", "node.js", "vue.js", "react.js", "objective-c"};
}

// Long-form to short-form phrase pairs applied in the second cleaning step.
struct ReplacementTable {
  struct Entry {
    std::string long_form;
    std::string short_form;
    std::size_t line = 0;
  };
  std::vector<Entry> entries;
  std::string source = "<builtin>";
};

inline ReplacementTable default_replacements() {
  static const std::pair<const char*, const char*> kPairs[] = {
      {"object oriented programming", "oop"},
      {"object oriented design", "ood"},
      {"object oriented analysis and design", "ooad"},
      {"test driven development", "tdd"},
      {"behavior driven development", "bdd"},
      {"continuous integration", "ci"},
      {"continuous delivery", "cd"},
      {"structured query language", "sql"},
      {"hypertext markup language", "html"},
      {"cascading style sheets", "css"},
      {"amazon web services", "aws"},
      {"google cloud platform", "gcp"},
      {"natural language processing", "nlp"},
      {"representational state transfer", "rest"},
      {"extract transform load", "etl"},
      {"search engine optimization", "seo"},
      {"user interface", "ui"},
      {"user experience", "ux"},
  };
  ReplacementTable table;
  std::size_t line = 0;
  for (const auto& [from, to] : kPairs) table.entries.push_back({from, to, ++line});
  return table;
}

inline ReplacementTable parse_replacements(std::istream& in, const std::string& source) {
  ReplacementTable table;
  table.source = source;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    if (trim(line).empty() || line.front() == '#') return;
    const auto fields = split(line, '\t');
    if (fields.size() != 2)
      throw ValidationError(at_line(source, number) + "expected long_form<TAB>short_form");
    table.entries.push_back({std::string(trim(fields[0])), std::string(trim(fields[1])), number});
  });
  return table;
}

inline ReplacementTable load_replacements(const fs::path& path) {
  auto in = open_input(path);
  return parse_replacements(in, path.string());
}

// Rewrite rules of the third cleaning step, applied to the space-joined
// token string until none of them fires.
struct RewriteRule {
  std::string name;
  std::regex pattern;
  std::string replacement;
};

inline std::shared_ptr<const std::vector<RewriteRule>> default_rewrite_rules() {
  static const auto rules = std::make_shared<const std::vector<RewriteRule>>(std::vector<RewriteRule>{
      // "python 3.6", "angular v1.5"
      {"dotted-version-suffix", std::regex(R"(^(.+) v?[0-9]+(\.[0-9]+)+$)"), "$1"},
      // "angular v2"
      {"v-version-suffix", std::regex(R"(^(.+) v[0-9]+$)"), "$1"},
      // "html 5" -> "html5", "css 3" -> "css3"
      {"generation-suffix-join", std::regex(R"(^([a-z]+) ([0-9])$)"), "$1$2"},
  });
  return rules;
}

// Suffix stripping for plural and -ing forms. Only all-lowercase-ASCII tokens
// of four or more characters are touched; repeated until stable.
inline std::string stem_token(std::string token) {
  auto ends = [&](std::string_view suf) {
    return token.size() >= suf.size() && token.compare(token.size() - suf.size(), suf.size(), suf) == 0;
  };
  auto is_vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; };
  while (true) {
    if (token.size() < 4) return token;
    if (!std::all_of(token.begin(), token.end(), [](char c) { return c >= 'a' && c <= 'z'; })) return token;
    const std::size_t n = token.size();
    std::string next = token;
    if (ends("ies") && n >= 5) {
      next = token.substr(0, n - 3) + "y";
    } else if (ends("sses")) {
      next = token.substr(0, n - 2);
    } else if (n >= 5 && (ends("xes") || ((ends("ches") || ends("shes")) && !is_vowel(token[n - 5])))) {
      next = token.substr(0, n - 2);
    } else if (ends("s") && !ends("ss") && !ends("us") && !ends("is") && !ends("os") && !ends("as") &&
               !ends("ys")) {
      next = token.substr(0, n - 1);
    } else if (ends("ing") && n - 3 >= 4) {
      std::string stem = token.substr(0, n - 3);
      if (std::any_of(stem.begin(), stem.end(), is_vowel)) {
        const char last = stem.back();
        if (stem[stem.size() - 2] == last && !is_vowel(last) && last != 'l' && last != 's' && last != 'z' &&
            last != 'f')
          stem.pop_back();
        next = std::move(stem);
      }
    }
    if (next == token) return token;
    token = std::move(next);
  }
}

// The four-step skill cleaning pipeline:
//   1. case-fold, strip punctuation (except inside protected tokens), collapse whitespace
//   2. phrase replacement of long forms by short forms
//   3. regular-expression rewrites (version stripping, separator unification)
//   4. suffix stemming of tokens that are not protected
// normalize() iterates the four steps until the output is a fixed point, which
// makes it idempotent by construction.
class Normalizer {
 public:
  Normalizer() : Normalizer(default_protected_tokens(), default_replacements()) {}

  Normalizer(const std::set<std::string>& protected_tokens, ReplacementTable replacements,
             std::shared_ptr<const std::vector<RewriteRule>> rules = default_rewrite_rules())
      : rules_(std::move(rules)), replacement_source_(std::move(replacements)) {
    for (const auto& token : protected_tokens) add_protected(token);
    compile_replacements();
  }

  // Copy with additional protected tokens; replacements are recompiled.
  Normalizer with_protected(const std::set<std::string>& extra) const {
    std::set<std::string> all = protected_;
    all.insert(extra.begin(), extra.end());
    return Normalizer(all, replacement_source_, rules_);
  }

  // Empty result means "no skill".
  std::optional<std::string> normalize(std::string_view raw) const {
    std::string current = clean_joined(raw);
    for (int guard = 0; guard < 256; ++guard) {
      std::string next = pass(current);
      if (next == current) break;
      current = std::move(next);
    }
    if (current.empty()) return std::nullopt;
    return current;
  }

  // Text preparation for extraction: step 1 splits at phrase breaks, then
  // replacement and per-token stemming run inside each segment. The regex
  // step is anchored to whole skill strings and is not applied to free text.
  std::vector<std::vector<std::string>> segments(std::string_view text) const {
    auto segs = clean(text, true);
    for (auto& seg : segs) {
      while (true) {
        auto next = stem_all(replace(seg));
        if (next == seg) break;
        seg = std::move(next);
      }
    }
    return segs;
  }

  const std::set<std::string>& protected_tokens() const { return protected_; }
  bool is_protected(const std::string& token) const { return protected_.count(token) != 0; }

  // Step 1 only, joined with single spaces.
  std::string clean_joined(std::string_view raw) const {
    std::vector<std::string> all;
    for (auto& seg : clean(raw, false))
      for (auto& t : seg) all.push_back(std::move(t));
    return text::join(all);
  }

  std::vector<std::string> replace(const std::vector<std::string>& tokens) const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    std::size_t i = 0;
    while (i < tokens.size()) {
      const auto m = replacements_.longest_match(tokens, i);
      if (m.length == 0) {
        out.push_back(tokens[i++]);
      } else {
        out.insert(out.end(), m.value->begin(), m.value->end());
        i += m.length;
      }
    }
    return out;
  }

  std::string rewrite(std::string s) const {
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& rule : *rules_) {
        std::string next = std::regex_replace(s, rule.pattern, rule.replacement);
        if (next != s) {
          s = std::move(next);
          changed = true;
        }
      }
    }
    return s;
  }

  std::vector<std::string> stem_all(std::vector<std::string> tokens) const {
    for (auto& t : tokens)
      if (!is_protected(t)) t = stem_token(std::move(t));
    return tokens;
  }

 private:
  void add_protected(const std::string& raw) {
    const std::string token = text::lower_ascii(trim(raw));
    if (token.empty() || token.find(' ') != std::string::npos) return;
    if (!protected_.insert(token).second) return;
    auto cps = text::decode_utf8(token);
    if (std::all_of(cps.begin(), cps.end(), text::is_word)) return;
    auto& list = punct_protected_[cps.front()];
    list.push_back(std::move(cps));
    // Longest candidate first.
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      return a.size() != b.size() ? a.size() > b.size() : a < b;
    });
  }

  void compile_replacements() {
    const auto& src = replacement_source_;
    for (const auto& e : src.entries) {
      const auto where = at_line(src.source, e.line);
      auto key = text::split_tokens(clean_joined(e.long_form));
      auto value = text::split_tokens(clean_joined(e.short_form));
      if (key.empty() || value.empty()) throw ValidationError(where + "empty replacement entry");
      if (text::join(value).size() >= text::join(key).size())
        throw ValidationError(where + "short form '" + text::join(value) + "' is not shorter than '" +
                              text::join(key) + "'");
      if (!replacements_.insert(key, std::move(value)))
        throw ValidationError(where + "duplicate long form '" + text::join(key) + "'");
    }
  }

  std::string pass(const std::string& s) const {
    auto tokens = text::split_tokens(clean_joined(s));
    tokens = replace(tokens);
    tokens = text::split_tokens(rewrite(text::join(tokens)));
    return text::join(stem_all(std::move(tokens)));
  }

  // Step 1. With split_phrases, phrase-break characters start a new segment.
  std::vector<std::vector<std::string>> clean(std::string_view raw, bool split_phrases) const {
    std::vector<char32_t> cps = text::decode_utf8(raw);
    for (auto& c : cps) c = text::ascii_lower(c);

    std::vector<std::vector<std::string>> segs(1);
    std::string token;
    auto flush = [&] {
      if (!token.empty()) segs.back().push_back(std::move(token));
      token.clear();
    };
    auto brk = [&] {
      flush();
      if (!segs.back().empty()) segs.emplace_back();
    };

    const std::size_t n = cps.size();
    std::size_t i = 0;
    while (i < n) {
      if (i == 0 || !text::is_word(cps[i - 1])) {
        if (auto len = match_protected(cps, i)) {
          flush();
          for (std::size_t k = 0; k < len; ++k) text::append_utf8(token, cps[i + k]);
          flush();
          i += len;
          continue;
        }
      }
      const char32_t c = cps[i];
      const auto cls = text::classify(c);
      if (cls == text::CharClass::word) {
        text::append_utf8(token, c);
      } else if (c == '.' && !token.empty() && i > 0 && i + 1 < n && text::is_ascii_digit(cps[i - 1]) &&
                 text::is_ascii_digit(cps[i + 1])) {
        token += '.';
      } else if (split_phrases && text::is_phrase_break(c)) {
        brk();
      } else {
        flush();
      }
      ++i;
    }
    flush();
    if (segs.back().empty()) segs.pop_back();
    return segs;
  }

  std::size_t match_protected(const std::vector<char32_t>& cps, std::size_t pos) const {
    auto it = punct_protected_.find(cps[pos]);
    if (it == punct_protected_.end()) return 0;
    for (const auto& cand : it->second) {
      if (pos + cand.size() > cps.size()) continue;
      if (!std::equal(cand.begin(), cand.end(), cps.begin() + static_cast<std::ptrdiff_t>(pos))) continue;
      const std::size_t end = pos + cand.size();
      if (end < cps.size() && text::is_word(cps[end])) continue;
      return cand.size();
    }
    return 0;
  }

  std::set<std::string> protected_;
  std::unordered_map<char32_t, std::vector<std::vector<char32_t>>> punct_protected_;
  std::shared_ptr<const std::vector<RewriteRule>> rules_;
  ReplacementTable replacement_source_;
  PhraseTrie<std::vector<std::string>> replacements_;
};

// Normalizes with the built-in replacement table and rewrite rules.
inline std::optional<std::string> normalize_skill(std::string_view raw,
                                                  const std::set<std::string>& protected_tokens) {
  return Normalizer(protected_tokens, default_replacements()).normalize(raw);
}

inline std::optional<std::string> normalize_skill(std::string_view raw) {
  static const Normalizer normalizer;
  return normalizer.normalize(raw);
}

struct CanonicalSkill {
  SkillId id = 0;
  std::string canonical;
  std::vector<std::string> aliases;
};

// One lexicon source line before validation.
struct LexiconRow {
  std::string canonical;
  std::vector<std::string> aliases;
  std::size_t line = 0;
};

// Canonical skill dictionary with alias resolution. Immutable once built.
//
// Every whitespace token of every canonical is added to the normalizer's
// protected set, so product names such as "jenkins" or "asp.net" survive
// stemming and punctuation stripping both in the lexicon and in text.
class Lexicon {
 public:
  Lexicon() : normalizer_() {}

  Lexicon(const std::vector<LexiconRow>& rows, const Normalizer& base, const std::string& source = "<memory>") {
    std::set<std::string> extra;
    for (const auto& row : rows)
      for (auto& t : text::split_tokens(text::lower_ascii(trim(row.canonical)))) extra.insert(std::move(t));
    normalizer_ = base.with_protected(extra);

    std::unordered_map<std::string, std::size_t> key_line;
    for (const auto& row : rows) {
      const auto where = at_line(source, row.line);
      const std::string canonical(trim(row.canonical));
      if (canonical.empty()) throw ValidationError(where + "malformed line: empty canonical skill");
      const auto normalized = normalizer_.normalize(canonical);
      if (!normalized || *normalized != canonical)
        throw ValidationError(where + "canonical '" + canonical + "' is not in normalized form (normalizes to '" +
                              normalized.value_or("") + "')");
      if (auto it = alias_index_.find(canonical); it != alias_index_.end()) {
        const auto& owner = skills_[it->second];
        if (owner.canonical == canonical)
          throw ValidationError(where + "duplicate canonical '" + canonical + "' (first defined on line " +
                                std::to_string(key_line[canonical]) + ")");
        throw ValidationError(where + "alias collision: canonical '" + canonical + "' is already an alias of '" +
                              owner.canonical + "' (line " + std::to_string(key_line[canonical]) + ")");
      }
      CanonicalSkill skill{static_cast<SkillId>(skills_.size()), canonical, {}};
      alias_index_.emplace(canonical, skill.id);
      key_line.emplace(canonical, row.line);
      for (const auto& raw_alias : row.aliases) {
        if (trim(raw_alias).empty()) continue;
        const auto alias = normalizer_.normalize(raw_alias);
        if (!alias) throw ValidationError(where + "malformed line: alias '" + raw_alias + "' normalizes to nothing");
        auto it = alias_index_.find(*alias);
        if (it != alias_index_.end()) {
          if (it->second == skill.id) continue;
          throw ValidationError(where + "alias collision: '" + *alias + "' already maps to '" +
                                skills_[it->second].canonical + "' (line " + std::to_string(key_line[*alias]) +
                                ")");
        }
        alias_index_.emplace(*alias, skill.id);
        key_line.emplace(*alias, row.line);
        skill.aliases.push_back(*alias);
      }
      skills_.push_back(std::move(skill));
    }
    for (const auto& [key, id] : alias_index_) phrases_.insert(text::split_tokens(key), id);
  }

  // Lexicon of canonical names only, in the given order.
  static Lexicon from_canonicals(const std::vector<std::string>& names, const Normalizer& base = Normalizer()) {
    std::vector<LexiconRow> rows;
    for (std::size_t i = 0; i < names.size(); ++i) rows.push_back({names[i], {}, i + 1});
    return Lexicon(rows, base);
  }

  std::size_t size() const { return skills_.size(); }
  bool empty() const { return skills_.empty(); }
  const std::vector<CanonicalSkill>& skills() const { return skills_; }
  const std::string& canonical(SkillId id) const { return skills_.at(id).canonical; }
  const std::unordered_map<std::string, SkillId>& alias_index() const { return alias_index_; }
  const Normalizer& normalizer() const { return normalizer_; }
  const std::set<std::string>& protected_tokens() const { return normalizer_.protected_tokens(); }
  const PhraseTrie<SkillId>& phrases() const { return phrases_; }

  std::vector<std::string> canonical_names() const {
    std::vector<std::string> names;
    names.reserve(skills_.size());
    for (const auto& s : skills_) names.push_back(s.canonical);
    return names;
  }

  std::optional<SkillId> resolve(std::string_view raw) const {
    const auto key = normalizer_.normalize(raw);
    if (!key) return std::nullopt;
    auto it = alias_index_.find(*key);
    if (it == alias_index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<CanonicalSkill> skills_;
  std::unordered_map<std::string, SkillId> alias_index_;
  Normalizer normalizer_;
  PhraseTrie<SkillId> phrases_;
};

inline std::optional<SkillId> resolve(std::string_view raw, const Lexicon& lexicon) { return lexicon.resolve(raw); }

// Lexicon TSV: `canonical<TAB>alias1<TAB>alias2...`, `#` starts a comment line.
inline Lexicon parse_lexicon(std::istream& in, const std::string& source, const Normalizer& base = Normalizer()) {
  std::vector<LexiconRow> rows;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    if (trim(line).empty() || line.front() == '#') return;
    const auto fields = split(line, '\t');
    LexiconRow row;
    row.line = number;
    row.canonical = std::string(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) row.aliases.emplace_back(fields[i]);
    rows.push_back(std::move(row));
  });
  return Lexicon(rows, base, source);
}

inline Lexicon load_lexicon(const fs::path& path, const Normalizer& base = Normalizer()) {
  auto in = open_input(path);
  return parse_lexicon(in, path.string(), base);
}

}  // namespace skillforge
