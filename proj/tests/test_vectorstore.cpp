#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "generators.hpp"
#include "oracles.hpp"
#include "skillforge/vectorstore.hpp"

using namespace skillforge;

namespace {

EmbeddingStore abc_store() { return EmbeddingStore({"a", "b", "c"}, 2, {1, 0, 0, 1, 0.6f, 0.8f}); }

std::vector<std::pair<std::string, double>> named(const EmbeddingStore& s, const std::vector<Neighbor>& ns) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& n : ns) out.emplace_back(s.word(n.index), n.score);
  return out;
}

std::string positioned_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace

TEST(Cosine, HandValues) {
  const std::vector<double> x{1, 0}, y{0, 1}, z{0.6, 0.8}, v{3, -4, 12};
  EXPECT_DOUBLE_EQ(cosine(v, v), 1.0);
  EXPECT_DOUBLE_EQ(cosine(x, y), 0.0);
  EXPECT_NEAR(cosine(x, z), 0.6, 1e-15);
}

TEST(Cosine, ZeroNormAndDimensionMismatchRejected) {
  const std::vector<double> zero{0, 0}, x{1, 0}, three{1, 2, 3};
  EXPECT_THROW(cosine(zero, x), ValidationError);
  EXPECT_THROW(cosine(x, three), ValidationError);
}

TEST(Cosine, AlwaysWithinUnitInterval) {
  Rng rng(4);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> u(3), v(3);
    for (auto& x : u) x = rng.uniform(-1e3, 1e3);
    v = u;
    if (rng.bernoulli(0.5))
      for (auto& x : v) x *= rng.uniform(1e-3, 1e3);
    const double c = cosine(u, v);
    EXPECT_LE(c, 1.0);
    EXPECT_GE(c, -1.0);
  }
}

TEST(TopK, FixtureQueryA) {
  const auto s = abc_store();
  const auto r = named(s, top_k(s, "a", 1));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].first, "c");
  EXPECT_NEAR(r[0].second, 0.6, 1e-7);
}

TEST(TopK, TruncatesToAvailableCandidates) {
  const auto s = abc_store();
  const auto r = named(s, top_k(s, "a", 10));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].first, "c");
  EXPECT_EQ(r[1].first, "b");
}

TEST(TopK, UnknownSkillListsHints) {
  const EmbeddingStore s({"python", "java", "javascript", "scala", "hive"}, 1, {1, 2, 3, 4, 5});
  try {
    top_k(s, "jav", 5);
    FAIL() << "expected an unknown-skill error";
  } catch (const UnknownSkillError& e) {
    ASSERT_EQ(e.hints().size(), 3u);
    EXPECT_EQ(e.hints()[0], "java");
    EXPECT_NE(std::string(e.what()).find("did you mean"), std::string::npos);
  }
}

TEST(TopK, QueryIsNormalizedAndUnderscoresAccepted) {
  const EmbeddingStore s({"front end", "oop", "css3"}, 2, {1, 0, 0, 1, 1, 1});
  EXPECT_NO_THROW(top_k(s, "Front_End", 2));
  EXPECT_NO_THROW(top_k(s, "Object-Oriented Programming", 2));
  EXPECT_THROW(top_k(s, "zzz", 2), UnknownSkillError);
}

TEST(TopK, MatchesBruteForceOracleIncludingTies) {
  Rng rng(42);
  for (int t = 0; t < 100; ++t) {
    const std::size_t v = 2 + rng.below(120), d = 1 + rng.below(4);
    const auto s = gen::store(rng, v, d, rng.bernoulli(0.7));
    const std::size_t k = 1 + rng.below(12);
    for (std::size_t q = 0; q < v; ++q) {
      const auto got = named(s, top_k(s, s.word(q), k));
      ASSERT_EQ(got, oracle::top_k(s, q, k)) << "trial " << t << " query " << s.word(q);
      for (const auto& [name, score] : got) {
        EXPECT_NE(name, s.word(q));
        EXPECT_LE(score, 1.0);
        EXPECT_GE(score, -1.0);
      }
    }
  }
}

TEST(TopK, ScaleInvariance) {
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    const auto s = gen::store(rng, 40, 3, false);
    const float scale = static_cast<float>(rng.uniform(0.01, 100.0));
    std::vector<float> scaled = s.values();
    for (auto& x : scaled) x *= scale;
    const EmbeddingStore s2(s.words(), s.dim(), scaled);
    for (std::size_t q = 0; q < s.size(); ++q) {
      const auto a = top_k(s, s.word(q), 5), b = top_k(s2, s.word(q), 5);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].index, b[i].index);
        EXPECT_NEAR(a[i].score, b[i].score, 1e-6);
      }
    }
  }
}

TEST(TopK, ZeroRowsExcluded) {
  const EmbeddingStore s({"a", "b", "z"}, 2, {1, 0, 1, 1, 0, 0});
  EXPECT_EQ(s.zero_rows(), 1u);
  const auto r = named(s, top_k(s, "a", 5));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].first, "b");
  EXPECT_THROW(top_k(s, "z", 5), ValidationError);
}

TEST(TopK, AlternativeMetrics) {
  const EmbeddingStore s({"a", "b", "c"}, 2, {1, 0, 10, 0, 0.9f, 0.1f});
  EXPECT_EQ(named(s, top_k(s, "a", 1, Metric::dot))[0].first, "b");
  EXPECT_EQ(named(s, top_k(s, "a", 1, Metric::euclidean))[0].first, "c");
  EXPECT_THROW(parse_metric("manhattan"), ValidationError);
}

TEST(Analogy, OrthonormalFixture) {
  const EmbeddingStore s({"a", "b", "c", "d", "e"}, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0.7071f, 0.7071f, 1, 0, 0.1f});
  const auto r = named(s, analogy(s, "a", "b", "c", 5));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].first, "d");
  for (const auto& [name, score] : r) EXPECT_TRUE(name != "a" && name != "b" && name != "c");
}

TEST(Analogy, EqualAandBReducesToTopKOfC) {
  Rng rng(21);
  const auto s = gen::store(rng, 30, 4, false);
  const auto r = analogy(s, s.word(0), s.word(0), s.word(5), 6);
  auto expected = top_k(s, s.word(5), 7);
  expected.erase(std::remove_if(expected.begin(), expected.end(), [](const Neighbor& n) { return n.index == 0; }),
                 expected.end());
  expected.resize(std::min<std::size_t>(expected.size(), 6));
  ASSERT_EQ(r.size(), expected.size());
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i].index, expected[i].index);
}

TEST(Analogy, UnknownInputRejected) { EXPECT_THROW(analogy(abc_store(), "a", "zzz", "c", 3), UnknownSkillError); }

TEST(Binary, RoundTripBitExact) {
  Rng rng(5);
  const auto s = gen::store(rng, 20, 8, false);
  const auto bytes = to_binary(s);
  EXPECT_EQ(bytes.substr(0, 4), "SK2V");
  const auto back = from_binary(bytes);
  EXPECT_EQ(back, s);
  EXPECT_EQ(std::memcmp(back.values().data(), s.values().data(), s.values().size() * sizeof(float)), 0);
  EXPECT_EQ(to_binary(back), bytes);
}

TEST(Binary, CorruptHeadersRejectedWithOffsets) {
  const auto good = to_binary(abc_store());
  auto patched = [&](std::size_t at, std::string bytes) {
    auto b = good;
    b.replace(at, bytes.size(), bytes);
    return b;
  };
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"bad magic", patched(0, "XK2V")},
      {"bad version", patched(4, std::string("\x09\0\0\0", 4))},
      {"truncated header", good.substr(0, 10)},
      {"count too large", patched(8, std::string("\x04\0\0\0", 4))},
      {"dimension too large", patched(12, std::string("\x03\0\0\0", 4))},
      {"truncated values", good.substr(0, good.size() - 2)},
      {"trailing bytes", good + "xx"},
      {"duplicate names", patched(25, "a")},
      {"empty", ""},
  };
  for (const auto& [label, bytes] : cases) {
    const auto msg = positioned_error([&] { from_binary(bytes, "model.sk2v"); });
    EXPECT_NE(msg.find("model.sk2v: offset"), std::string::npos) << label << ": " << msg;
  }
}

TEST(Text, RoundTripWithinTolerance) {
  Rng rng(6);
  const auto s = gen::store(rng, 20, 8, false);
  const auto back = from_text(to_text(s));
  ASSERT_EQ(back.words(), s.words());
  float max_entry = 0;
  for (float x : s.values()) max_entry = std::max(max_entry, std::abs(x));
  for (std::size_t i = 0; i < s.values().size(); ++i)
    EXPECT_LE(std::abs(back.values()[i] - s.values()[i]), 1e-6 * max_entry);
}

TEST(Text, SpacesBecomeUnderscores) {
  const EmbeddingStore s({"front end", "css3"}, 1, {0.5f, -2});
  const auto txt = to_text(s);
  EXPECT_EQ(txt, "2 1\nfront_end 0.5\ncss3 -2\n");
  EXPECT_EQ(from_text(txt).word(0), "front end");
}

TEST(Text, MalformedFilesRejectedWithLineNumbers) {
  const std::string short_file = "5 2\na 1 0\nb 0 1\nc 1 1\nd 2 2\n";
  const auto msg = positioned_error([&] { from_text(short_file, "m.txt"); });
  EXPECT_NE(msg.find("row 5"), std::string::npos) << msg;
  EXPECT_NE(msg.find("m.txt:6"), std::string::npos) << msg;

  const std::vector<std::pair<std::string, std::string>> cases = {
      {"m.txt:1", "two 2\na 1 0\n"},
      {"m.txt:1", "1\na 1\n"},
      {"m.txt:3", "2 2\na 1 0\nb 1\n"},
      {"m.txt:3", "2 2\na 1 0\nb 1 zero\n"},
      {"m.txt:3", "2 2\na 1 0\na 0 1\n"},
      {"m.txt:3", "1 2\na 1 0\nb 0 1\n"},
      {"m.txt:2", "1 2\na 1 nan\n"},
  };
  for (const auto& [where, content] : cases) {
    const auto m = positioned_error([&] { from_text(content, "m.txt"); });
    EXPECT_NE(m.find(where), std::string::npos) << content << " -> " << m;
  }
}

TEST(Files, SaveLoadDetectsFormat) {
  const auto dir = std::filesystem::temp_directory_path() / "skillforge_vectorstore_test";
  std::filesystem::create_directories(dir);
  Rng rng(7);
  const auto s = gen::store(rng, 10, 3, false);
  save_store(s, dir / "m.sk2v");
  save_store(s, dir / "m.txt");
  EXPECT_EQ(load_store(dir / "m.sk2v"), s);
  EXPECT_EQ(load_store(dir / "m.txt").words(), s.words());
  EXPECT_THROW(load_store(dir / "missing.sk2v"), IoError);
  std::filesystem::remove_all(dir);
}
