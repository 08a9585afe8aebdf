#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "skillforge/corpus.hpp"
#include "skillforge/error.hpp"
#include "skillforge/io.hpp"
#include "skillforge/random.hpp"

namespace skillforge {

enum class Objective { full_softmax, negative_sampling };

inline std::string to_string(Objective o) {
  return o == Objective::full_softmax ? "full_softmax" : "negative_sampling";
}

inline Objective parse_objective(const std::string& s) {
  if (s == "full_softmax" || s == "softmax") return Objective::full_softmax;
  if (s == "negative_sampling" || s == "ns") return Objective::negative_sampling;
  throw ValidationError("unknown objective '" + s + "' (expected full_softmax or negative_sampling)");
}

struct TrainingConfig {
  std::size_t dim = 100;
  std::size_t epochs = 5;
  double lr_initial = 0.025;
  double lr_final = 0.0001;
  Objective objective = Objective::negative_sampling;
  std::size_t negatives = 5;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  double noise_power = 0.75;
  std::size_t noise_table_size = 1'000'000;

  void validate() const {
    if (dim < 1) throw ValidationError("dim must be positive");
    if (!(lr_initial > 0) || !std::isfinite(lr_initial)) throw ValidationError("lr_initial must be positive");
    if (!(lr_final >= 0) || lr_final > lr_initial)
      throw ValidationError("lr_final must be in [0, lr_initial]");
    if (negatives < 1) throw ValidationError("negatives must be positive");
    if (workers < 1) throw ValidationError("workers must be positive");
    if (noise_table_size < 1) throw ValidationError("noise_table_size must be positive");
  }

  KeyValues to_key_values() const {
    auto real = [](double v) {
      char buf[64];
      const auto r = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, r.ptr);
    };
    return {{"dim", std::to_string(dim)},
            {"epochs", std::to_string(epochs)},
            {"lr_initial", real(lr_initial)},
            {"lr_final", real(lr_final)},
            {"objective", to_string(objective)},
            {"negatives", std::to_string(negatives)},
            {"seed", std::to_string(seed)},
            {"workers", std::to_string(workers)},
            {"noise_power", real(noise_power)},
            {"noise_table_size", std::to_string(noise_table_size)}};
  }

  std::string digest() const {
    std::string flat;
    for (const auto& [k, v] : to_key_values()) flat += k + "=" + v + "\n";
    return digest_of(flat);
  }

  // Applies recognised keys; returns the keys it did not recognise.
  std::vector<std::string> apply(const KeyValues& kv) {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : kv) {
      try {
        if (key == "dim") dim = std::stoull(value);
        else if (key == "epochs") epochs = std::stoull(value);
        else if (key == "lr_initial" || key == "lr") lr_initial = std::stod(value);
        else if (key == "lr_final") lr_final = std::stod(value);
        else if (key == "objective") objective = parse_objective(value);
        else if (key == "negatives") negatives = std::stoull(value);
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "workers") workers = std::stoull(value);
        else if (key == "noise_power") noise_power = std::stod(value);
        else if (key == "noise_table_size") noise_table_size = std::stoull(value);
        else unknown.push_back(key);
      } catch (const std::logic_error&) {
        throw ValidationError("invalid value '" + value + "' for config key '" + key + "'");
      }
    }
    return unknown;
  }
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Skip-gram parameters: `input` holds the center (query) vectors, `output` the
// context vectors scored by the output layer.
struct EmbeddingModel {
  Vocab vocab;
  Matrix input;
  Matrix output;
  TrainingConfig config;
  std::vector<double> epoch_loss;  // mean loss per completed epoch
};

inline EmbeddingModel init_model(const Vocab& vocab, const TrainingConfig& config) {
  config.validate();
  if (vocab.empty()) throw ValidationError("cannot initialise a model over an empty vocabulary");
  EmbeddingModel model{vocab, Matrix(vocab.size(), config.dim), Matrix(vocab.size(), config.dim), config, {}};
  Rng rng(config.seed, {0x494E4954ULL});
  const double bound = 0.5 / static_cast<double>(config.dim);
  for (double& w : model.input.data()) w = rng.uniform(-bound, bound);
  return model;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Gradient of one example's loss. The output-layer gradient is rank one:
// d loss / d output[rows[i]] = coef[i] * input[center].
struct Gradient {
  double loss = 0.0;
  std::vector<double> center;
  std::vector<std::uint32_t> rows;
  std::vector<double> coef;
};

inline void softmax_probabilities(const EmbeddingModel& model, std::uint32_t center, std::vector<double>& p) {
  const auto w = model.input.row(center);
  const std::size_t v = model.output.rows();
  p.resize(v);
  double mx = -INFINITY;
  for (std::size_t j = 0; j < v; ++j) {
    p[j] = dot(model.output.row(j), w);
    mx = std::max(mx, p[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < v; ++j) {
    p[j] = std::exp(p[j] - mx);
    z += p[j];
  }
  for (double& x : p) x /= z;
}

inline std::vector<double> softmax_forward(const EmbeddingModel& model, std::uint32_t center) {
  std::vector<double> p;
  softmax_probabilities(model, center, p);
  return p;
}

inline void softmax_gradient(const EmbeddingModel& model, TrainingPair pair, Gradient& g) {
  const std::size_t v = model.output.rows();
  const std::size_t d = model.input.cols();
  const auto w = model.input.row(pair.center);
  g.coef.resize(v);
  double mx = -INFINITY;
  for (std::size_t j = 0; j < v; ++j) {
    g.coef[j] = dot(model.output.row(j), w);
    mx = std::max(mx, g.coef[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < v; ++j) z += std::exp(g.coef[j] - mx);
  // -log p[context] = logsumexp(logits) - logit[context]
  g.loss = (mx + std::log(z)) - g.coef[pair.context];
  for (std::size_t j = 0; j < v; ++j) g.coef[j] = std::exp(g.coef[j] - mx) / z;
  g.coef[pair.context] -= 1.0;

  g.rows.resize(v);
  g.center.assign(d, 0.0);
  for (std::size_t j = 0; j < v; ++j) {
    g.rows[j] = static_cast<std::uint32_t>(j);
    const auto u = model.output.row(j);
    for (std::size_t c = 0; c < d; ++c) g.center[c] += g.coef[j] * u[c];
  }
}

inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// loss = -log sigmoid(u_o . v_c) - sum_k log sigmoid(-u_k . v_c)
inline void negative_sampling_gradient(const EmbeddingModel& model, TrainingPair pair,
                                       std::span<const std::uint32_t> negatives, Gradient& g) {
  const std::size_t d = model.input.cols();
  const auto w = model.input.row(pair.center);
  g.rows.clear();
  g.coef.clear();
  g.center.assign(d, 0.0);
  g.loss = 0.0;

  auto add = [&](std::uint32_t row, double coef) {
    const auto u = model.output.row(row);
    for (std::size_t c = 0; c < d; ++c) g.center[c] += coef * u[c];
    g.rows.push_back(row);
    g.coef.push_back(coef);
  };

  const double pos = dot(model.output.row(pair.context), w);
  g.loss -= log_sigmoid(pos);
  add(pair.context, sigmoid(pos) - 1.0);
  for (std::uint32_t n : negatives) {
    const double s = dot(model.output.row(n), w);
    g.loss -= log_sigmoid(-s);
    add(n, sigmoid(s));
  }
}

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

[[noreturn]] inline void abort_non_finite(const EmbeddingModel& model, TrainingPair pair, const char* what) {
  throw NumericError(std::string("non-finite ") + what + " at pair (center '" + model.vocab.word(pair.center) +
                     "', context '" + model.vocab.word(pair.context) + "')");
}

// Plain SGD update. All output-row updates use the pre-update center vector.
inline void apply_gradient(EmbeddingModel& model, TrainingPair pair, const Gradient& g, double lr) {
  const std::size_t d = model.input.cols();
  auto w = model.input.row(pair.center);
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    auto u = model.output.row(g.rows[i]);
    const double step = lr * g.coef[i];
    for (std::size_t c = 0; c < d; ++c) u[c] -= step * w[c];
  }
  for (std::size_t c = 0; c < d; ++c) w[c] -= lr * g.center[c];

  if (!all_finite(w)) abort_non_finite(model, pair, "input vector");
  for (std::uint32_t r : g.rows)
    if (!all_finite(model.output.row(r))) abort_non_finite(model, pair, "output vector");
}

inline double softmax_step(EmbeddingModel& model, TrainingPair pair, double lr, Gradient& scratch) {
  softmax_gradient(model, pair, scratch);
  if (!std::isfinite(scratch.loss)) abort_non_finite(model, pair, "loss");
  apply_gradient(model, pair, scratch, lr);
  return scratch.loss;
}

inline double softmax_step(EmbeddingModel& model, TrainingPair pair, double lr) {
  Gradient scratch;
  return softmax_step(model, pair, lr, scratch);
}

// Unigram^power noise distribution, realised as a lookup table. Every word
// gets at least one slot; the remaining slots are apportioned by largest
// remainder.
class NoiseTable {
 public:
  NoiseTable(const Vocab& vocab, double power = 0.75, std::size_t table_size = 1'000'000) {
    const std::size_t v = vocab.size();
    if (v == 0) throw ValidationError("noise table over an empty vocabulary");
    if (table_size < v) throw ValidationError("noise table size must be at least the vocabulary size");
    probs_.resize(v);
    double total = 0.0;
    for (std::size_t i = 0; i < v; ++i) total += probs_[i] = std::pow(static_cast<double>(vocab.count(i)), power);
    for (double& p : probs_) p /= total;

    std::vector<std::size_t> slots(v, 1);
    const std::size_t spare = table_size - v;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t used = 0;
    for (std::size_t i = 0; i < v; ++i) {
      const double exact = probs_[i] * static_cast<double>(spare);
      const auto whole = static_cast<std::size_t>(exact);
      slots[i] += whole;
      used += whole;
      remainders.emplace_back(exact - static_cast<double>(whole), i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t r = 0; used < spare; ++r, ++used) ++slots[remainders[r % v].second];

    table_.reserve(table_size);
    for (std::size_t i = 0; i < v; ++i) table_.insert(table_.end(), slots[i], static_cast<std::uint32_t>(i));
  }

  std::uint32_t sample(Rng& rng) const { return table_[rng.below(table_.size())]; }
  const std::vector<double>& probabilities() const { return probs_; }
  std::size_t size() const { return table_.size(); }
  // Share of table slots held by `index`.
  double table_share(std::uint32_t index) const {
    return static_cast<double>(std::count(table_.begin(), table_.end(), index)) / static_cast<double>(table_.size());
  }

 private:
  std::vector<double> probs_;
  std::vector<std::uint32_t> table_;
};

inline NoiseTable build_noise_table(const Vocab& vocab, double power = 0.75, std::size_t table_size = 1'000'000) {
  return NoiseTable(vocab, power, table_size);
}

// Draws k negatives, redrawing any that equal the true context.
inline void draw_negatives(const NoiseTable& noise, std::uint32_t context, std::size_t k, Rng& rng,
                           std::vector<std::uint32_t>& out) {
  out.clear();
  while (out.size() < k) {
    const std::uint32_t n = noise.sample(rng);
    if (n != context) out.push_back(n);
  }
}

struct NegativeSamplingScratch {
  Gradient gradient;
  std::vector<std::uint32_t> negatives;
};

inline double negative_sampling_step(EmbeddingModel& model, TrainingPair pair, double lr, std::size_t k,
                                     const NoiseTable& noise, Rng& rng, NegativeSamplingScratch& scratch) {
  if (k < 1) throw ValidationError("negative sampling needs k >= 1");
  if (model.vocab.size() < 2) throw ValidationError("negative sampling needs at least two skills");
  draw_negatives(noise, pair.context, k, rng, scratch.negatives);
  negative_sampling_gradient(model, pair, scratch.negatives, scratch.gradient);
  if (!std::isfinite(scratch.gradient.loss)) abort_non_finite(model, pair, "loss");
  apply_gradient(model, pair, scratch.gradient, lr);
  return scratch.gradient.loss;
}

inline double negative_sampling_step(EmbeddingModel& model, TrainingPair pair, double lr, std::size_t k,
                                     const NoiseTable& noise, Rng& rng) {
  NegativeSamplingScratch scratch;
  return negative_sampling_step(model, pair, lr, k, noise, rng, scratch);
}

// Called after each epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

// Runs `config.epochs` passes of SGD over the shuffled skip-gram pairs with a
// learning rate decaying linearly from lr_initial to lr_final over all steps.
//
// With workers > 1 every worker updates the shared matrices without locks
// (hogwild); results then depend on thread interleaving. workers == 1 is
// bit-reproducible for a fixed seed.
inline EmbeddingModel train(std::span<const SkillContext> contexts, const Vocab& vocab, const TrainingConfig& config,
                            const EpochCallback& on_epoch = {}) {
  EmbeddingModel model = init_model(vocab, config);
  if (config.epochs == 0) return model;

  const auto pairs = generate_all_pairs(contexts, vocab);
  if (pairs.empty()) throw ValidationError("contexts yield no training pairs (every context has < 2 known skills)");

  std::optional<NoiseTable> noise;
  if (config.objective == Objective::negative_sampling) {
    if (vocab.size() < 2) throw ValidationError("negative sampling needs at least two skills");
    noise.emplace(vocab, config.noise_power, std::max(config.noise_table_size, vocab.size()));
  }

  const double total_steps = static_cast<double>(config.epochs) * static_cast<double>(pairs.size());
  auto rate = [&](double step) {
    const double progress = total_steps > 1 ? step / (total_steps - 1) : 0.0;
    return config.lr_initial - (config.lr_initial - config.lr_final) * progress;
  };

  const std::size_t workers = std::min(config.workers, pairs.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffle_epoch(pairs, config.seed, epoch);
    const double base = static_cast<double>(epoch) * static_cast<double>(pairs.size());

    auto run_shard = [&](std::size_t worker, std::size_t begin, std::size_t end, std::atomic<bool>& stop) {
      Rng rng(config.seed, {0x4E454741ULL, epoch, worker});
      NegativeSamplingScratch scratch;
      double sum = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        if (stop.load(std::memory_order_relaxed)) break;
        // Concurrent shards advance together, so a worker's position in the
        // global schedule is interleaved with the others.
        const double local = static_cast<double>(i - begin);
        const double step = workers == 1 ? base + static_cast<double>(i)
                                         : base + local * static_cast<double>(workers) + static_cast<double>(worker);
        const double lr = rate(std::min(step, total_steps - 1));
        if (config.objective == Objective::full_softmax)
          sum += softmax_step(model, order[i], lr, scratch.gradient);
        else
          sum += negative_sampling_step(model, order[i], lr, config.negatives, *noise, rng, scratch);
      }
      return sum;
    };

    double loss_sum = 0.0;
    std::atomic<bool> stop{false};
    if (workers == 1) {
      loss_sum = run_shard(0, 0, order.size(), stop);
    } else {
      std::vector<double> sums(workers, 0.0);
      std::vector<std::exception_ptr> errors(workers);
      std::vector<std::thread> pool;
      const std::size_t chunk = (order.size() + workers - 1) / workers;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = std::min(order.size(), w * chunk);
        const std::size_t end = std::min(order.size(), begin + chunk);
        pool.emplace_back([&, w, begin, end] {
          try {
            sums[w] = run_shard(w, begin, end, stop);
          } catch (...) {
            errors[w] = std::current_exception();
            stop = true;
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
      for (double s : sums) loss_sum += s;
    }
    const double mean = loss_sum / static_cast<double>(order.size());
    model.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return model;
}

// `epoch,mean_loss` with a header line; epochs are 1-based.
inline void write_loss_csv(std::ostream& out, const std::vector<double>& epoch_loss) {
  out << "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", epoch_loss[e]);
    out << (e + 1) << ',' << buf << '\n';
  }
}

}  // namespace skillforge
