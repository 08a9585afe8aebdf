#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace skillforge {

// Trie over token sequences, supporting leftmost-longest phrase lookup.
template <typename Value>
class PhraseTrie {
 public:
  struct Match {
    std::size_t length = 0;  // tokens consumed; 0 means no match
    const Value* value = nullptr;
  };

  // Returns false (and leaves the trie unchanged) if the phrase is present.
  bool insert(std::span<const std::string> phrase, Value value) {
    std::uint32_t node = 0;
    for (const auto& token : phrase) {
      auto it = nodes_[node].next.find(token);
      if (it == nodes_[node].next.end()) {
        const auto child = static_cast<std::uint32_t>(nodes_.size());
        nodes_[node].next.emplace(token, child);
        nodes_.emplace_back();
        node = child;
      } else {
        node = it->second;
      }
    }
    if (nodes_[node].value) return false;
    nodes_[node].value = std::move(value);
    ++size_;
    depth_ = std::max(depth_, phrase.size());
    return true;
  }

  Match longest_match(std::span<const std::string> tokens, std::size_t pos) const {
    Match best;
    std::uint32_t node = 0;
    for (std::size_t i = pos; i < tokens.size(); ++i) {
      auto it = nodes_[node].next.find(tokens[i]);
      if (it == nodes_[node].next.end()) break;
      node = it->second;
      if (nodes_[node].value) best = {i - pos + 1, &*nodes_[node].value};
    }
    return best;
  }

  std::size_t size() const { return size_; }
  std::size_t max_depth() const { return depth_; }

 private:
  struct Node {
    std::unordered_map<std::string, std::uint32_t> next;
    std::optional<Value> value;
  };
  std::vector<Node> nodes_{1};
  std::size_t size_ = 0;
  std::size_t depth_ = 0;
};

}  // namespace skillforge
