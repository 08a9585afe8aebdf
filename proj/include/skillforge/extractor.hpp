#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "skillforge/error.hpp"
#include "skillforge/io.hpp"
#include "skillforge/lexicon.hpp"

namespace skillforge {

struct Document {
  std::string doc_id;
  std::string text;
};

// Deduplicated canonical skills of one document, in first-occurrence order.
struct SkillContext {
  std::string doc_id;
  std::vector<SkillId> skills;

  bool operator==(const SkillContext&) const = default;
};

// Leftmost-longest phrase matching over normalized text segments. Matches
// never cross a phrase break and never overlap.
inline SkillContext extract(const Document& doc, const Lexicon& lexicon) {
  SkillContext ctx{doc.doc_id, {}};
  std::unordered_set<SkillId> seen;
  const auto& trie = lexicon.phrases();
  for (const auto& seg : lexicon.normalizer().segments(doc.text)) {
    std::size_t i = 0;
    while (i < seg.size()) {
      const auto m = trie.longest_match(seg, i);
      if (m.length == 0) {
        ++i;
        continue;
      }
      if (seen.insert(*m.value).second) ctx.skills.push_back(*m.value);
      i += m.length;
    }
  }
  return ctx;
}

struct ExtractionSummary {
  std::size_t documents = 0;
  std::size_t mentions = 0;  // sum of context sizes
  std::size_t empty_contexts = 0;

  std::string describe() const {
    return std::to_string(documents) + " docs, " + std::to_string(mentions) + " mentions, " +
           std::to_string(empty_contexts) + " empty contexts";
  }
};

struct ExtractionResult {
  std::vector<SkillContext> contexts;
  ExtractionSummary summary;
};

// Output order matches input order regardless of `workers`.
inline ExtractionResult extract_corpus(std::span<const Document> docs, const Lexicon& lexicon,
                                       std::size_t workers = 1) {
  std::unordered_set<std::string> ids;
  for (const auto& d : docs)
    if (!ids.insert(d.doc_id).second) throw ValidationError("duplicate doc_id '" + d.doc_id + "'");

  ExtractionResult result;
  result.contexts.resize(docs.size());
  workers = std::max<std::size_t>(1, std::min(workers, docs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < docs.size(); ++i) result.contexts[i] = extract(docs[i], lexicon);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < docs.size(); i += workers) result.contexts[i] = extract(docs[i], lexicon);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  result.summary.documents = docs.size();
  for (const auto& c : result.contexts) {
    result.summary.mentions += c.skills.size();
    if (c.skills.empty()) ++result.summary.empty_contexts;
  }
  return result;
}

// A set of contexts together with the names of the skill ids they use.
struct ContextSet {
  std::vector<std::string> names;  // indexed by SkillId
  std::vector<SkillContext> contexts;
};

// JSON-lines corpus: {"doc_id": "...", "text": "..."} per line.
inline std::vector<Document> read_documents(std::istream& in, const std::string& source) {
  std::vector<Document> docs;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    if (trim(line).empty()) return;
    const auto where = at_line(source, number);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where + "invalid JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("doc_id") || !obj["doc_id"].is_string() || !obj.contains("text") ||
        !obj["text"].is_string())
      throw ValidationError(where + "expected an object with string fields 'doc_id' and 'text'");
    Document d{obj["doc_id"].get<std::string>(), obj["text"].get<std::string>()};
    if (d.doc_id.empty()) throw ValidationError(where + "empty doc_id");
    docs.push_back(std::move(d));
  });
  return docs;
}

inline std::vector<Document> load_documents(const fs::path& path) {
  auto in = open_input(path);
  return read_documents(in, path.string());
}

// JSON-lines contexts: {"doc_id": "...", "skills": ["canonical", ...]}.
inline void write_contexts(std::ostream& out, std::span<const SkillContext> contexts,
                           const std::vector<std::string>& names) {
  for (const auto& c : contexts) {
    nlohmann::json skills = nlohmann::json::array();
    for (SkillId id : c.skills) skills.push_back(names.at(id));
    nlohmann::json obj{{"doc_id", c.doc_id}, {"skills", std::move(skills)}};
    out << obj.dump() << '\n';
  }
}

// Skill strings are interned in first-appearance order.
inline ContextSet read_contexts(std::istream& in, const std::string& source) {
  ContextSet set;
  std::unordered_map<std::string, SkillId> interned;
  std::unordered_set<std::string> doc_ids;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    if (trim(line).empty()) return;
    const auto where = at_line(source, number);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where + "invalid JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("doc_id") || !obj["doc_id"].is_string() || !obj.contains("skills") ||
        !obj["skills"].is_array())
      throw ValidationError(where + "expected an object with 'doc_id' string and 'skills' array");
    SkillContext ctx{obj["doc_id"].get<std::string>(), {}};
    if (!doc_ids.insert(ctx.doc_id).second) throw ValidationError(where + "duplicate doc_id '" + ctx.doc_id + "'");
    for (const auto& s : obj["skills"]) {
      if (!s.is_string() || s.get<std::string>().empty())
        throw ValidationError(where + "skills must be non-empty strings");
      const auto name = s.get<std::string>();
      auto [it, inserted] = interned.emplace(name, static_cast<SkillId>(set.names.size()));
      if (inserted) set.names.push_back(name);
      if (std::find(ctx.skills.begin(), ctx.skills.end(), it->second) != ctx.skills.end())
        throw ValidationError(where + "skill '" + name + "' repeated within one context");
      ctx.skills.push_back(it->second);
    }
    set.contexts.push_back(std::move(ctx));
  });
  return set;
}

inline ContextSet load_contexts(const fs::path& path) {
  auto in = open_input(path);
  return read_contexts(in, path.string());
}

}  // namespace skillforge
