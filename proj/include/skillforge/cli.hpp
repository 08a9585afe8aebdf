#pragma once

// Command-line front end: `skillforge <extract|train|query|analogy|eval>`.
// Exit codes: 0 success, 1 validation, 2 I/O, 3 numerical abort.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "skillforge/skillforge.hpp"

namespace skillforge::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kNumeric = 3 };

// Streams used by a run. `prompt_in` is only set when an interactive human
// is available to answer labeling prompts.
struct Console {
  std::ostream& out;
  std::ostream& err;
  std::istream* prompt_in = nullptr;
};

inline std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
  auto logger = std::make_shared<spdlog::logger>("skillforge", sink);
  logger->set_pattern("[%l] %v");
  logger->set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SKILLFORGE_LOG")) logger->set_level(spdlog::level::from_str(env));
  return logger;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One JSON manifest per artifact-producing run, written next to the output.
struct Manifest {
  std::string subcommand;
  KeyValues config;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string started_at = utc_now();

  void add_input(const fs::path& p) { inputs.emplace_back(p.string(), file_digest(p)); }

  void write(const fs::path& primary_output) const {
    nlohmann::json in = nlohmann::json::object();
    for (const auto& [path, digest] : inputs) in[path] = digest;
    nlohmann::json doc{{"tool", "skillforge"},
                       {"version", kVersion},
                       {"subcommand", subcommand},
                       {"config", config},
                       {"inputs", in},
                       {"outputs", outputs},
                       {"seed", seed},
                       {"started_at", started_at},
                       {"finished_at", utc_now()}};
    fs::path path = primary_output;
    path += ".manifest.json";
    write_text_atomically(path, doc.dump(2) + "\n");
  }
};

inline std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

inline void print_neighbors(std::ostream& out, const EmbeddingStore& store, const std::vector<Neighbor>& neighbors) {
  for (std::size_t r = 0; r < neighbors.size(); ++r)
    out << (r + 1) << '\t' << store.word(neighbors[r].index) << '\t' << fixed6(neighbors[r].score) << '\n';
}

// Training flags shared by `train` and synthetic `eval`. Flags given on the
// command line override the config file, which overrides the defaults.
struct TrainingFlags {
  std::string config_file;
  std::size_t dim = 0, epochs = 0, negatives = 0, workers = 0;
  std::uint64_t min_count = 5, seed = 1;
  double lr = 0, lr_final = 0;
  std::string objective;
  CLI::App* app = nullptr;

  void attach(CLI::App& sub) {
    app = &sub;
    sub.add_option("--config", config_file, "flat key=value training config file");
    sub.add_option("--dim", dim, "vector dimensionality (default 100)");
    sub.add_option("--epochs", epochs, "training epochs (default 5)");
    sub.add_option("--objective", objective, "full_softmax | negative_sampling (default)");
    sub.add_option("--negatives", negatives, "negative samples per pair (default 5)");
    sub.add_option("--min-count", min_count, "minimum document frequency (default 5)");
    sub.add_option("--lr", lr, "initial learning rate (default 0.025)");
    sub.add_option("--lr-final", lr_final, "final learning rate (default 0.0001)");
    sub.add_option("--seed", seed, "random seed (default 1)");
    sub.add_option("--workers", workers, "training threads (default 1)");
  }

  bool given(const char* name) const { return app->count(name) > 0; }

  std::pair<TrainingConfig, std::uint64_t> resolve() const {
    TrainingConfig cfg;
    std::uint64_t mc = 5;
    if (!config_file.empty()) {
      auto kv = load_key_values(config_file);
      if (auto it = kv.find("min_count"); it != kv.end()) {
        try {
          mc = std::stoull(it->second);
        } catch (const std::logic_error&) {
          throw ValidationError("invalid value '" + it->second + "' for config key 'min_count'");
        }
        kv.erase(it);
      }
      const auto unknown = cfg.apply(kv);
      if (!unknown.empty()) throw ValidationError("unknown config key '" + unknown.front() + "' in " + config_file);
    }
    if (given("--dim")) cfg.dim = dim;
    if (given("--epochs")) cfg.epochs = epochs;
    if (given("--objective")) cfg.objective = parse_objective(objective);
    if (given("--negatives")) cfg.negatives = negatives;
    if (given("--min-count")) mc = min_count;
    if (given("--lr")) cfg.lr_initial = lr;
    if (given("--lr-final")) cfg.lr_final = lr_final;
    if (given("--seed")) cfg.seed = seed;
    if (given("--workers")) cfg.workers = workers;
    cfg.validate();
    return {cfg, mc};
  }
};

inline KeyValues config_with_min_count(const TrainingConfig& cfg, std::uint64_t min_count) {
  auto kv = cfg.to_key_values();
  kv["min_count"] = std::to_string(min_count);
  return kv;
}

inline EmbeddingModel train_logged(std::span<const SkillContext> contexts, const Vocab& vocab,
                                   const TrainingConfig& cfg, spdlog::logger& log) {
  log.info("training V={} d={} epochs={} objective={} workers={}", vocab.size(), cfg.dim, cfg.epochs,
           to_string(cfg.objective), cfg.workers);
  return train(contexts, vocab, cfg, [&](std::size_t epoch, double loss) {
    log.info("epoch {} mean loss {:.6f}", epoch + 1, loss);
  });
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string lexicon, input, output, replacements;
  std::size_t workers = 1;
};

inline int cmd_extract(const ExtractArgs& a, Console& io, spdlog::logger& log) {
  Manifest manifest{"extract", {{"workers", std::to_string(a.workers)}}, {}, {a.output}, 0};
  const Normalizer base = a.replacements.empty()
                              ? Normalizer()
                              : Normalizer(default_protected_tokens(), load_replacements(a.replacements));
  const Lexicon lexicon = load_lexicon(a.lexicon, base);
  log.info("lexicon: {} skills, {} alias keys", lexicon.size(), lexicon.alias_index().size());
  const auto docs = load_documents(a.input);
  const auto result = extract_corpus(docs, lexicon, a.workers);
  const auto names = lexicon.canonical_names();
  write_atomically(a.output, [&](std::ostream& out) { write_contexts(out, result.contexts, names); });
  manifest.add_input(a.lexicon);
  manifest.add_input(a.input);
  if (!a.replacements.empty()) manifest.add_input(a.replacements);
  manifest.write(a.output);
  io.out << result.summary.describe() << '\n';
  return kOk;
}

struct TrainArgs {
  std::string contexts, output, format;
  bool save_output_vectors = false;
  TrainingFlags flags;
};

inline int cmd_train(const TrainArgs& a, Console& io, spdlog::logger& log) {
  const auto [cfg, min_count] = a.flags.resolve();
  const auto set = load_contexts(a.contexts);
  const Vocab vocab = build_vocab(set.contexts, set.names, min_count);
  const EmbeddingModel model = train_logged(set.contexts, vocab, cfg, log);

  const fs::path out(a.output);
  StoreFormat format = format_for_path(out);
  if (a.format == "binary") format = StoreFormat::binary;
  else if (a.format == "text") format = StoreFormat::text;
  else if (!a.format.empty()) throw ValidationError("unknown format '" + a.format + "' (expected binary or text)");

  Manifest manifest{"train", config_with_min_count(cfg, min_count), {}, {}, cfg.seed};
  auto sibling = [&](const char* suffix) {
    fs::path p = out;
    p += suffix;
    manifest.outputs.push_back(p.string());
    return p;
  };
  manifest.outputs.push_back(out.string());
  save_store(EmbeddingStore::from_model(model), out, format);
  if (a.save_output_vectors) save_store(EmbeddingStore::from_model(model, true), sibling(".output"), format);
  {
    std::ostringstream csv;
    write_loss_csv(csv, model.epoch_loss);
    write_text_atomically(sibling(".loss.csv"), csv.str());
  }
  {
    std::ostringstream tsv;
    write_vocab_tsv(tsv, vocab);
    write_text_atomically(sibling(".vocab.tsv"), tsv.str());
  }
  manifest.add_input(a.contexts);
  manifest.write(out);
  io.out << "trained " << vocab.size() << " skills x " << cfg.dim << " dims over " << cfg.epochs << " epochs";
  if (!model.epoch_loss.empty()) io.out << ", final mean loss " << fixed6(model.epoch_loss.back());
  io.out << '\n';
  return kOk;
}

struct QueryArgs {
  std::string model, skill, metric = "cosine";
  std::vector<std::string> terms;  // analogy a b c
  std::size_t k = 5;
};

inline EmbeddingStore load_query_store(const std::string& path, spdlog::logger& log) {
  auto store = load_store(path);
  if (store.zero_rows() > 0) log.warn("{} zero-norm rows are excluded from queries", store.zero_rows());
  return store;
}

inline int cmd_query(const QueryArgs& a, Console& io, spdlog::logger& log) {
  const auto store = load_query_store(a.model, log);
  print_neighbors(io.out, store, top_k(store, a.skill, a.k, parse_metric(a.metric)));
  return kOk;
}

inline int cmd_analogy(const QueryArgs& a, Console& io, spdlog::logger& log) {
  const auto store = load_query_store(a.model, log);
  print_neighbors(io.out, store, analogy(store, a.terms.at(0), a.terms.at(1), a.terms.at(2), a.k, parse_metric(a.metric)));
  return kOk;
}

struct EvalArgs {
  std::string mode = "synthetic", model, labels, spec, output;
  std::size_t n = 200, k = 5;
  std::optional<double> min_precision;
  TrainingFlags flags;
};

inline int cmd_eval_human(const EvalArgs& a, Console& io, spdlog::logger& log) {
  if (a.model.empty()) throw ValidationError("human mode needs --model");
  if (a.labels.empty()) throw ValidationError("human mode needs --labels (read, and appended to when prompting)");
  const std::uint64_t seed = a.flags.seed;
  const auto store = load_query_store(a.model, log);
  const auto queries = sample_queries(store, a.n, seed);
  LabelBook book = LabelBook::open_journal(a.labels);
  Prompter prompter;
  if (io.prompt_in) prompter = terminal_prompter(*io.prompt_in, io.err);
  EvalReport report;
  try {
    report = run_labeling_session(queries, store, book, prompter, {a.k, seed, Metric::cosine});
  } catch (const IncompleteLabelsError&) {
    if (io.prompt_in) io.err << "session stopped; answers so far are saved in " << a.labels << "\n";
    throw;
  }
  std::size_t labeled = 0, relevant = 0;
  for (const auto& q : report.queries) {
    labeled += q.labels.size();
    relevant += static_cast<std::size_t>(std::count(q.labels.begin(), q.labels.end(), true));
  }
  io.out << "relevance_rate " << fixed6(report.relevance_rate) << " (" << relevant << "/" << labeled
         << " labeled neighbors relevant)\n";
  if (!a.output.empty()) {
    Manifest manifest{"eval", {{"mode", "human"}, {"n", std::to_string(a.n)}, {"k", std::to_string(a.k)}},
                      {}, {a.output}, seed};
    write_text_atomically(a.output, report_to_json(report, store).dump(2) + "\n");
    manifest.add_input(a.model);
    manifest.add_input(a.labels);
    manifest.write(a.output);
  }
  return kOk;
}

inline int cmd_eval_synthetic(const EvalArgs& a, Console& io, spdlog::logger& log) {
  KeyValues spec_kv;
  if (!a.spec.empty()) spec_kv = load_key_values(a.spec);
  if (!spec_kv.count("seed") && a.flags.given("--seed")) spec_kv["seed"] = std::to_string(a.flags.seed);
  const SyntheticSpec spec = SyntheticSpec::from_key_values(spec_kv);
  const auto corpus = generate_synthetic_corpus(spec);
  log.info("synthetic corpus: {} docs over {} skills", corpus.contexts.size(), corpus.lexicon.size());

  KeyValues config{{"mode", "synthetic"}, {"k", std::to_string(a.k)}};
  for (const auto& [key, value] : spec.to_key_values()) config["spec." + key] = value;
  std::uint64_t seed = spec.seed;
  EmbeddingStore store;
  if (!a.model.empty()) {
    store = load_query_store(a.model, log);
  } else {
    const auto [cfg, min_count] = a.flags.resolve();
    const Vocab vocab = build_vocab(corpus.contexts, corpus.lexicon.canonical_names(), min_count);
    store = EmbeddingStore::from_model(train_logged(corpus.contexts, vocab, cfg, log));
    for (const auto& [key, value] : config_with_min_count(cfg, min_count)) config["train." + key] = value;
    seed = cfg.seed;
  }
  const double precision = cluster_precision_at_k(store, corpus.cluster_map(), a.k);
  io.out << "cluster_precision@" << a.k << " " << fixed6(precision) << '\n';
  if (!a.output.empty()) {
    Manifest manifest{"eval", config, {}, {a.output}, seed};
    nlohmann::json report{{"mode", "synthetic"},         {"spec", spec.to_key_values()},
                          {"spec_digest", spec.digest()}, {"seed", seed},
                          {"k", a.k},                     {"store_digest", store.digest()},
                          {"cluster_precision", precision}};
    write_text_atomically(a.output, report.dump(2) + "\n");
    if (!a.model.empty()) manifest.add_input(a.model);
    if (!a.spec.empty()) manifest.add_input(a.spec);
    manifest.write(a.output);
  }
  if (a.min_precision && precision < *a.min_precision) {
    io.err << "cluster precision " << fixed6(precision) << " is below the required " << fixed6(*a.min_precision)
           << '\n';
    return kValidation;
  }
  return kOk;
}

inline int cmd_eval(const EvalArgs& a, Console& io, spdlog::logger& log) {
  if (a.mode == "human") return cmd_eval_human(a, io, log);
  if (a.mode == "synthetic") return cmd_eval_synthetic(a, io, log);
  throw ValidationError("unknown mode '" + a.mode + "' (expected human or synthetic)");
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, Console io) {
  auto log = make_logger(io.err);
  CLI::App app{"skillforge: skill extraction, skip-gram skill embeddings and nearest-skill queries"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "extract skill contexts from a JSON-lines corpus");
  extract->add_option("--lexicon", ex.lexicon, "lexicon TSV")->required();
  extract->add_option("--input", ex.input, "corpus JSON-lines (doc_id, text)")->required();
  extract->add_option("--output", ex.output, "contexts JSON-lines output")->required();
  extract->add_option("--replacements", ex.replacements, "long_form<TAB>short_form TSV (default: built-in table)");
  extract->add_option("--workers", ex.workers, "extraction threads")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "train skill vectors from extracted contexts");
  trainc->add_option("--contexts", tr.contexts, "contexts JSON-lines")->required();
  trainc->add_option("--output", tr.output, "model file (.txt/.vec = text format, otherwise binary)")->required();
  trainc->add_option("--format", tr.format, "force binary or text output");
  trainc->add_flag("--save-output-vectors", tr.save_output_vectors, "also write the output-layer vectors");
  tr.flags.attach(*trainc);

  QueryArgs q;
  auto* query = app.add_subcommand("query", "top-k nearest skills");
  query->add_option("--model", q.model, "model file")->required();
  query->add_option("--skill", q.skill, "query skill")->required();
  query->add_option("-k,--k", q.k, "neighbors to print")->check(CLI::PositiveNumber);
  query->add_option("--metric", q.metric, "cosine | dot | euclidean");

  QueryArgs an;
  auto* analog = app.add_subcommand("analogy", "nearest skills to b - a + c");
  analog->add_option("--model", an.model, "model file")->required();
  analog->add_option("terms", an.terms, "a b c")->required()->expected(3);
  analog->add_option("-k,--k", an.k, "neighbors to print")->check(CLI::PositiveNumber);
  analog->add_option("--metric", an.metric, "cosine | dot | euclidean");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "relevance evaluation (human labels or planted clusters)");
  eval->add_option("--mode", ev.mode, "human | synthetic")->check(CLI::IsMember({"human", "synthetic"}));
  eval->add_option("--model", ev.model, "model file (required for human mode)");
  eval->add_option("--n", ev.n, "queries to sample in human mode")->check(CLI::PositiveNumber);
  eval->add_option("-k,--k", ev.k, "neighbors per query")->check(CLI::PositiveNumber);
  eval->add_option("--labels", ev.labels, "label CSV (query,neighbor,relevant)");
  eval->add_option("--spec", ev.spec, "synthetic spec key=value file");
  eval->add_option("--output", ev.output, "JSON report path");
  eval->add_option("--min-precision", ev.min_precision, "fail (exit 1) below this cluster precision");
  ev.flags.attach(*eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, err;
    const int code = app.exit(e, out, err);
    io.out << out.str();
    io.err << err.str();
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*extract) return cmd_extract(ex, io, *log);
    if (*trainc) return cmd_train(tr, io, *log);
    if (*query) return cmd_query(q, io, *log);
    if (*analog) return cmd_analogy(an, io, *log);
    if (*eval) return cmd_eval(ev, io, *log);
  } catch (const NumericError& e) {
    io.err << "numerical error: " << e.what() << '\n';
    return kNumeric;
  } catch (const IoError& e) {
    io.err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    io.err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const ValidationError& e) {
    io.err << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}

}  // namespace skillforge::cli
