#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "generators.hpp"
#include "oracles.hpp"
#include "skillforge/evalharness.hpp"
#include "skillforge/trainer.hpp"

using namespace skillforge;

namespace {

TrainingConfig small_config(std::size_t dim, Objective objective = Objective::full_softmax) {
  TrainingConfig c;
  c.dim = dim;
  c.objective = objective;
  return c;
}

Vocab counts_vocab(const std::vector<std::uint64_t>& counts) {
  std::vector<std::string> names;
  std::vector<SkillContext> ctxs;
  std::size_t doc = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    names.push_back("w" + std::to_string(i));
    for (std::uint64_t n = 0; n < counts[i]; ++n) ctxs.push_back({"d" + std::to_string(doc++), {SkillId(i)}});
  }
  return build_vocab(ctxs, names, 1);
}

}  // namespace

TEST(InitModel, DeterministicAndBounded) {
  const auto vocab = gen::vocab(3);
  const auto cfg = small_config(4);
  const auto a = init_model(vocab, cfg), b = init_model(vocab, cfg);
  EXPECT_EQ(a.input, b.input);
  for (double x : a.input.data()) EXPECT_LE(std::abs(x), 0.5 / 4);
  for (double x : a.output.data()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(a.input.rows(), 3u);
  EXPECT_EQ(a.output.rows(), 3u);
}

TEST(InitModel, MinimalShape) {
  const auto m = init_model(gen::vocab(1), small_config(1));
  EXPECT_EQ(m.input.rows(), 1u);
  EXPECT_EQ(m.input.cols(), 1u);
  EXPECT_EQ(m.output.data(), std::vector<double>{0.0});
}

TEST(SoftmaxForward, UniformOnFreshModel) {
  const auto m = init_model(gen::vocab(4), small_config(8));
  for (std::uint32_t c = 0; c < 4; ++c)
    for (double p : softmax_forward(m, c)) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(SoftmaxForward, TwoLogits) {
  auto m = init_model(gen::vocab(2), small_config(1));
  m.input.row(0)[0] = 1.0;
  m.output.row(0)[0] = 1.0;
  m.output.row(1)[0] = 0.0;
  const auto p = softmax_forward(m, 0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 1), 1e-15);
  EXPECT_NEAR(p[1], 1 / (e + 1), 1e-15);
  EXPECT_NEAR(p[0], 0.7311, 5e-5);
  EXPECT_NEAR(p[1], 0.2689, 5e-5);
}

TEST(SoftmaxForward, SimplexOnRandomModels) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto m = gen::random_model(rng, 1 + rng.below(20), 1 + rng.below(6), 40.0);
    const auto p = softmax_forward(m, static_cast<std::uint32_t>(rng.below(m.vocab.size())));
    double sum = 0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      EXPECT_TRUE(std::isfinite(x));
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(SoftmaxStep, FreshLossIsLogV) {
  auto m = init_model(gen::vocab(4), small_config(8));
  EXPECT_NEAR(softmax_step(m, {0, 1}, 0.025), std::log(4.0), 1e-12);
  EXPECT_NEAR(std::log(4.0), 1.3863, 5e-5);
}

TEST(SoftmaxStep, LossStrictlyDecreasesOnOnePair) {
  auto m = init_model(gen::vocab(2), small_config(4));
  double prev = INFINITY;
  for (int i = 0; i < 10; ++i) {
    const double loss = softmax_step(m, {0, 1}, 0.5);
    EXPECT_LT(loss, prev) << "iteration " << i;
    prev = loss;
  }
}

TEST(SoftmaxStep, GradientMatchesFiniteDifferences) {
  Rng rng(55);
  auto m = gen::random_model(rng, 5, 3);
  const TrainingPair p{1, 3};
  Gradient g;
  softmax_gradient(m, p, g);
  EXPECT_NEAR(g.loss, oracle::softmax_loss(m, p), 1e-12);
  const auto numeric = oracle::finite_difference(m, [&](const EmbeddingModel& x) { return oracle::softmax_loss(x, p); });
  EXPECT_LT(oracle::max_relative_error(oracle::densify(m, p, g), numeric), 1e-4);
}

TEST(SoftmaxStep, NonFiniteAbortsNamingThePair) {
  auto m = init_model(gen::vocab(3), small_config(2));
  m.input.row(0)[0] = 1e300;
  m.output.row(1)[0] = 1e300;
  try {
    softmax_step(m, {0, 2}, 0.1);
    FAIL() << "expected a numeric abort";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(m.vocab.word(0)), std::string::npos) << msg;
    EXPECT_NE(msg.find(m.vocab.word(2)), std::string::npos) << msg;
  }
}

TEST(NoiseTable, SymmetricCounts) {
  const auto t = build_noise_table(counts_vocab({1, 1}), 0.75, 1000);
  EXPECT_DOUBLE_EQ(t.probabilities()[0], 0.5);
  EXPECT_DOUBLE_EQ(t.probabilities()[1], 0.5);
}

TEST(NoiseTable, PowerLawProbabilities) {
  const auto vocab = counts_vocab({8, 1});
  const auto t = build_noise_table(vocab);
  const double a = std::pow(8.0, 0.75);
  EXPECT_NEAR(t.probabilities()[0], a / (a + 1), 1e-15);
  // The four-decimal reference values are truncated, not rounded.
  EXPECT_NEAR(t.probabilities()[0], 0.8262, 1e-4);
  EXPECT_NEAR(t.probabilities()[1], 0.1738, 1e-4);
  EXPECT_NEAR(t.table_share(0), t.probabilities()[0], 1e-6);
}

TEST(NoiseTable, EmpiricalFrequenciesMatch) {
  const auto vocab = counts_vocab({50, 20, 7, 3, 1});
  const auto t = build_noise_table(vocab);
  Rng rng(8);
  std::vector<double> freq(vocab.size(), 0.0);
  const int draws = 1'000'000;
  for (int i = 0; i < draws; ++i) freq[t.sample(rng)] += 1.0 / draws;
  for (std::size_t i = 0; i < vocab.size(); ++i) EXPECT_NEAR(freq[i], t.probabilities()[i], 0.01);
}

TEST(NoiseTable, TooSmallTableRejected) { EXPECT_THROW(build_noise_table(counts_vocab({1, 1, 1}), 0.75, 2), ValidationError); }

TEST(NegativeSampling, FreshLossIsKPlusOneLn2) {
  auto m = init_model(gen::vocab(6), small_config(4, Objective::negative_sampling));
  const auto noise = build_noise_table(m.vocab);
  Rng rng(2);
  for (std::size_t k : {1u, 2u, 5u})
    EXPECT_NEAR(negative_sampling_step(m, {0, 1}, 0.0, k, noise, rng), (k + 1) * std::log(2.0), 1e-12);
}

TEST(NegativeSampling, GradientMatchesFiniteDifferences) {
  Rng rng(77);
  auto m = gen::random_model(rng, 6, 3);
  const TrainingPair p{2, 4};
  const std::vector<std::uint32_t> negs{0, 5};
  Gradient g;
  negative_sampling_gradient(m, p, negs, g);
  EXPECT_NEAR(g.loss, oracle::negative_sampling_loss(m, p, negs), 1e-12);
  const auto numeric = oracle::finite_difference(
      m, [&](const EmbeddingModel& x) { return oracle::negative_sampling_loss(x, p, negs); });
  EXPECT_LT(oracle::max_relative_error(oracle::densify(m, p, g), numeric), 1e-4);
}

TEST(NegativeSampling, RepeatedNegativesAccumulate) {
  Rng rng(78);
  auto m = gen::random_model(rng, 4, 2);
  const TrainingPair p{0, 1};
  const std::vector<std::uint32_t> negs{3, 3, 2};
  Gradient g;
  negative_sampling_gradient(m, p, negs, g);
  const auto numeric = oracle::finite_difference(
      m, [&](const EmbeddingModel& x) { return oracle::negative_sampling_loss(x, p, negs); });
  EXPECT_LT(oracle::max_relative_error(oracle::densify(m, p, g), numeric), 1e-4);
}

TEST(NegativeSampling, PositiveScoreRisesAboveNinetyPercent) {
  auto m = init_model(gen::vocab(6), small_config(8, Objective::negative_sampling));
  const auto noise = build_noise_table(m.vocab);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) negative_sampling_step(m, {0, 1}, 0.1, 1, noise, rng);
  EXPECT_GT(sigmoid(dot(m.input.row(0), m.output.row(1))), 0.9);
}

TEST(NegativeSampling, TouchesAtMostKPlusTwoRows) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    const std::size_t v = 3 + rng.below(30), k = 1 + rng.below(6);
    auto m = gen::random_model(rng, v, 3);
    const auto before = m;
    const auto noise = build_noise_table(m.vocab, 0.75, 1000);
    Rng step_rng(t);
    negative_sampling_step(m, gen::pair(rng, v), 0.05, k, noise, step_rng);
    std::size_t changed = 0;
    for (std::size_t r = 0; r < v; ++r) {
      changed += !std::equal(m.input.row(r).begin(), m.input.row(r).end(), before.input.row(r).begin());
      changed += !std::equal(m.output.row(r).begin(), m.output.row(r).end(), before.output.row(r).begin());
    }
    EXPECT_LE(changed, k + 2);
  }
}

TEST(NegativeSampling, NegativesNeverEqualTheContext) {
  const auto vocab = counts_vocab({100, 1});
  const auto noise = build_noise_table(vocab);
  Rng rng(6);
  std::vector<std::uint32_t> out;
  for (int i = 0; i < 200; ++i) {
    draw_negatives(noise, 0, 5, rng, out);
    for (auto n : out) EXPECT_NE(n, 0u);
  }
}

TEST(Train, EpochsZeroReturnsInitialModel) {
  const std::vector<std::string> names = {"a", "b", "c"};
  const std::vector<SkillContext> ctx = {{"d", {0, 1, 2}}};
  const auto vocab = build_vocab(ctx, names, 1);
  auto cfg = small_config(4);
  cfg.epochs = 0;
  const auto m = train(ctx, vocab, cfg);
  const auto init = init_model(vocab, cfg);
  EXPECT_EQ(m.input, init.input);
  EXPECT_EQ(m.output, init.output);
  EXPECT_TRUE(m.epoch_loss.empty());
}

TEST(Train, NoPairsIsAnError) {
  const std::vector<std::string> names = {"a", "b"};
  const std::vector<SkillContext> ctx = {{"d", {0}}, {"e", {1}}};
  EXPECT_THROW(train(ctx, build_vocab(ctx, names, 1), small_config(4)), ValidationError);
}

class TrainOnPlantedClusters : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticSpec spec;
    spec.docs = 1500;
    corpus_ = new SyntheticCorpus(generate_synthetic_corpus(spec));
    vocab_ = new Vocab(build_vocab(corpus_->contexts, corpus_->lexicon.canonical_names(), 1));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete vocab_;
  }
  static TrainingConfig config(Objective o) {
    TrainingConfig c;
    c.dim = 12;
    c.epochs = 6;
    c.objective = o;
    c.seed = 3;
    return c;
  }
  static SyntheticCorpus* corpus_;
  static Vocab* vocab_;
};
SyntheticCorpus* TrainOnPlantedClusters::corpus_ = nullptr;
Vocab* TrainOnPlantedClusters::vocab_ = nullptr;

TEST_F(TrainOnPlantedClusters, LossNonIncreasingAfterEpochTwo) {
  for (auto o : {Objective::negative_sampling, Objective::full_softmax}) {
    const auto m = train(corpus_->contexts, *vocab_, config(o));
    ASSERT_EQ(m.epoch_loss.size(), 6u);
    for (std::size_t e = 2; e < m.epoch_loss.size(); ++e)
      EXPECT_LE(m.epoch_loss[e], m.epoch_loss[e - 1]) << to_string(o) << " epoch " << e + 1;
  }
}

TEST_F(TrainOnPlantedClusters, SingleWorkerIsBitReproducible) {
  const auto a = train(corpus_->contexts, *vocab_, config(Objective::negative_sampling));
  const auto b = train(corpus_->contexts, *vocab_, config(Objective::negative_sampling));
  EXPECT_EQ(a.input, b.input);
  EXPECT_EQ(a.output, b.output);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST_F(TrainOnPlantedClusters, SeedChangesTheResult) {
  auto c = config(Objective::negative_sampling);
  const auto a = train(corpus_->contexts, *vocab_, c);
  c.seed = 4;
  EXPECT_NE(a.input, train(corpus_->contexts, *vocab_, c).input);
}

TEST_F(TrainOnPlantedClusters, HogwildWorkersStayFiniteAndLearn) {
  auto c = config(Objective::negative_sampling);
  c.workers = 4;
  const auto m = train(corpus_->contexts, *vocab_, c);
  EXPECT_TRUE(all_finite(m.input.data()));
  EXPECT_TRUE(all_finite(m.output.data()));
  EXPECT_LT(m.epoch_loss.back(), m.epoch_loss.front());
}

TEST_F(TrainOnPlantedClusters, EpochCallbackSeesEveryEpoch) {
  std::vector<double> seen;
  const auto m = train(corpus_->contexts, *vocab_, config(Objective::negative_sampling),
                       [&](std::size_t e, double loss) {
                         EXPECT_EQ(e, seen.size());
                         seen.push_back(loss);
                       });
  EXPECT_EQ(seen, m.epoch_loss);
}

TEST(LossCsv, HeaderAndOneBasedRows) {
  std::ostringstream out;
  write_loss_csv(out, {1.5, 0.25});
  EXPECT_EQ(out.str(), "epoch,mean_loss\n1,1.5\n2,0.25\n");
}

TEST(TrainingConfig, ValidationAndKeyValues) {
  TrainingConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr_final = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  TrainingConfig d;
  const auto unknown = d.apply({{"dim", "16"}, {"lr", "0.05"}, {"objective", "softmax"}, {"bogus", "1"}});
  EXPECT_EQ(unknown, std::vector<std::string>{"bogus"});
  EXPECT_EQ(d.dim, 16u);
  EXPECT_EQ(d.lr_initial, 0.05);
  EXPECT_EQ(d.objective, Objective::full_softmax);
  TrainingConfig e;
  e.apply(d.to_key_values());
  EXPECT_EQ(e.digest(), d.digest());
  EXPECT_EQ(e.to_key_values().at("lr_initial"), "0.05");
  EXPECT_THROW(d.apply({{"dim", "many"}}), ValidationError);
  EXPECT_THROW(parse_objective("cbow"), ValidationError);
}
