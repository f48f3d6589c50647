#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "augu/bench.hpp"
#include "augu/checkpoint.hpp"
#include "augu/eval.hpp"

namespace augu::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Maps the library's exception types onto process exit codes.
template <class F>
int guarded(F&& body, std::ostream& err = std::cerr) {
  try {
    return body();
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
}

inline std::pair<std::string, std::string> split_assignment(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

/// AUGU_SEED, when set, replaces a config seed.
inline std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("AUGU_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ConfigError(std::string("AUGU_SEED is not an unsigned integer: '") + v + "'");
  }
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
  if (!f) throw DataError("write failed: " + p.string());
}

inline void ensure_out_dir(const fs::path& out) {
  if (out.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());
}

inline void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw DataError("missing file " + p.string());
}

inline void set_model_option(ModelConfig& c, const std::string& key, const std::string& value) {
  int v = 0;
  try {
    std::size_t used = 0;
    v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
  if (key == "num_encoder_layers") c.num_encoder_layers = v;
  else if (key == "num_decoder_layers") c.num_decoder_layers = v;
  else if (key == "hidden_size") c.hidden_size = v;
  else if (key == "dense_size") c.dense_size = v;
  else if (key == "num_heads") c.num_heads = v;
  else if (key == "ffn_size") c.ffn_size = v;
  else if (key == "tie_lm_head") c.tie_lm_head = v != 0;
  else {
    for (std::size_t k = 0; k < kNumSegmentKinds; ++k) {
      if (key == "max_len_" + std::string(to_string(static_cast<SegmentKind>(k)))) {
        c.max_len[k] = v;
        return;
      }
    }
    throw ConfigError("unknown model config key '" + key + "'");
  }
}

// ---- world directory ----

inline constexpr const char* kWorldFile = "world.json";
inline constexpr const char* kCorpusFile = "corpus.txt";
inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kTrainPairsFile = "train_pairs.tsv";
inline constexpr const char* kTestQueriesFile = "test_queries.tsv";

/// World, tokenizer and corpus from a gen-world output directory; the corpus
/// file must agree with the world.
inline std::pair<SyntheticWorld, Tokenizer> load_world_dir(const fs::path& dir) {
  for (const char* f : {kWorldFile, kCorpusFile, kVocabFile}) require_file(dir / f);
  auto world = load_world((dir / kWorldFile).string());
  auto tok = Tokenizer::load((dir / kVocabFile).string());
  if (load_corpus((dir / kCorpusFile).string()) != world.corpus_texts()) {
    throw DataError(std::string(kCorpusFile) + " does not match " + kWorldFile);
  }
  return {std::move(world), std::move(tok)};
}

inline WorldRuntime runtime_for(const fs::path& world_dir) {
  auto [world, tok] = load_world_dir(world_dir);
  const auto seed = world.seed;
  return WorldRuntime::create(std::move(world), std::move(tok), seed);
}

// ---- gen-world ----

struct GenWorldArgs {
  fs::path out;
  std::uint64_t seed = 1;
  std::vector<std::string> set;
  bool force = false;
  int vocab_size = 512;
};

inline int cmd_gen_world(GenWorldArgs a, std::ostream& log = std::cout) {
  if (auto s = env_seed()) a.seed = *s;
  WorldConfig wc;
  for (const auto& kv : a.set) {
    const auto [k, v] = split_assignment(kv);
    set_world_option(wc, k, v);
  }
  wc.validate();
  if (a.vocab_size < token::first_regular) throw ConfigError("--vocab-size too small");
  if (a.out.empty()) throw ConfigError("--out is required");
  if (!a.force) {
    for (const char* f : {kWorldFile, kCorpusFile, kVocabFile, kTrainPairsFile, kTestQueriesFile}) {
      if (fs::exists(a.out / f)) throw ConfigError((a.out / f).string() + " exists; pass --force to overwrite");
    }
  }
  ensure_out_dir(a.out);

  const auto world = generate_world(wc, a.seed);
  const auto tok = Tokenizer::build(world.all_texts(), static_cast<std::size_t>(a.vocab_size));
  save_world(world, (a.out / kWorldFile).string());
  save_corpus((a.out / kCorpusFile).string(), world.corpus_texts());
  tok.save((a.out / kVocabFile).string());

  std::ostringstream pairs;
  pairs << "query\tkeyword_id\tkeyword\tmatch_type\n";
  for (const auto& p : world.train_pairs) {
    const auto& k = world.keyword(p.keyword);
    pairs << world.train_queries.at(static_cast<std::size_t>(p.query)).text << '\t' << k.id << '\t' << k.text << '\t'
          << to_string(k.match_type) << '\n';
  }
  write_text(a.out / kTrainPairsFile, pairs.str());
  std::ostringstream test;
  test << "query\tintent\n";
  for (const auto& q : world.test_queries) test << q.text << '\t' << q.intent << '\n';
  write_text(a.out / kTestQueriesFile, test.str());

  log << "world: " << world.intents.size() << " intents, " << world.keywords.size() << " keywords, "
      << world.train_pairs.size() << " training pairs, " << world.test_queries.size() << " test queries, vocab "
      << tok.size() << " -> " << a.out.string() << '\n';
  return kOk;
}

// ---- train ----

struct TrainArgs {
  fs::path world;
  fs::path out;
  fs::path config;
  std::vector<std::string> set;
  std::vector<std::string> model_set;
  std::string profile = "desk";
  bool no_glancing = false;
  std::string contexts = "all";
  std::optional<std::uint64_t> seed;
};

inline int cmd_train(const TrainArgs& a, std::ostream& log = std::cout) {
  if (a.profile != "desk" && a.profile != "paper") throw ConfigError("unknown profile '" + a.profile + "'");
  TrainConfig tc = a.profile == "paper" ? TrainConfig::paper() : TrainConfig::desk();
  ModelConfig mc = a.profile == "paper" ? ModelConfig::paper() : ModelConfig::desk();
  if (!a.config.empty()) tc = TrainConfig::parse(read_text(a.config), tc);
  for (const auto& kv : a.set) {
    const auto [k, v] = split_assignment(kv);
    tc.set(k, v);
  }
  for (const auto& kv : a.model_set) {
    const auto [k, v] = split_assignment(kv);
    set_model_option(mc, k, v);
  }
  if (auto s = env_seed()) tc.seed = *s;
  if (a.seed) tc.seed = *a.seed;
  if (a.no_glancing) tc.glance.max_rates = {};
  tc.finalize();
  const auto limits = context_subset(a.contexts);
  if (a.world.empty()) throw ConfigError("--world is required");
  ensure_out_dir(a.out);

  auto rt = runtime_for(a.world);
  mc.vocab_size = static_cast<int>(rt.tokenizer.size());
  mc.validate();
  rt.warm(rt.world->train_queries);
  const auto pairs = training_pairs(rt, limits, mc);

  UnityModel<float> model(mc, hash64("model", tc.seed));
  std::ofstream stats(a.out / "train_stats.csv", std::ios::binary | std::ios::trunc);
  if (!stats) throw DataError("cannot write " + (a.out / "train_stats.csv").string());
  stats << EpochStats::csv_header() << '\n';
  write_text(a.out / "train_config.txt", tc.to_text());
  log << "training on " << pairs.size() << " pairs, contexts=" << a.contexts << (a.no_glancing ? ", no glancing" : "")
      << '\n';
  train(model, pairs, tc, [&](const EpochStats& s) {
    stats << s.csv_row() << '\n';
    stats.flush();
    log << "epoch " << s.epoch << " nlg " << s.nlg_loss << " dr " << s.dr_loss << '\n';
  });
  save_checkpoint(model, (a.out / "model.ckpt").string());
  log << "wrote " << (a.out / "model.ckpt").string() << '\n';
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  fs::path world;
  std::vector<fs::path> checkpoints;
  fs::path out;
  std::vector<std::string> contexts = {"all"};
  std::string path = "both";
  std::vector<int> ks = {10, 20};
  int beam = 40;
  std::size_t workers = 1;
};

/// One cell per (checkpoint, context subset). With several checkpoints the
/// cell name is prefixed by the checkpoint's parent directory name.
inline int cmd_eval(const EvalArgs& a, std::ostream& log = std::cout) {
  if (a.checkpoints.empty()) throw ConfigError("--checkpoint is required");
  if (a.world.empty()) throw ConfigError("--world is required");
  if (a.contexts.empty()) throw ConfigError("--contexts needs at least one subset");
  std::vector<ContextLimits> limits;
  for (const auto& c : a.contexts) limits.push_back(context_subset(c));
  if (a.path != "dr" && a.path != "nlg" && a.path != "both") throw ConfigError("--path must be dr, nlg or both");
  if (a.ks.empty()) throw ConfigError("--k needs at least one value");
  for (int k : a.ks) {
    if (k < 1) throw ConfigError("--k values must be >= 1");
  }
  if (a.beam < 1) throw ConfigError("--beam must be >= 1");
  ensure_out_dir(a.out);

  auto rt = runtime_for(a.world);
  rt.warm(rt.world->test_queries);
  EvalOptions opt;
  opt.ks = a.ks;
  opt.beam = a.beam;
  opt.dr = a.path != "nlg";
  opt.nlg = a.path != "dr";
  opt.workers = std::max<std::size_t>(1, a.workers);

  std::vector<ReportRow> rows;
  for (const auto& ck : a.checkpoints) {
    std::vector<AblationCell> grid;
    const std::string prefix = a.checkpoints.size() > 1 ? ck.parent_path().filename().string() + ":" : "";
    for (std::size_t i = 0; i < a.contexts.size(); ++i) {
      grid.push_back({prefix + a.contexts[i], ck.filename().string(), limits[i]});
    }
    auto r = run_ablation(grid, ck.parent_path().empty() ? fs::path(".") : ck.parent_path(), rt, opt);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_text(a.out / "report.csv", report_csv(rows));
  const auto table = report_table(rows);
  write_text(a.out / "report.txt", table);
  log << table;
  return kOk;
}

// ---- serve ----

struct ServeArgs {
  fs::path world;
  fs::path checkpoint;
  fs::path cache;
  fs::path replay;
  int k = 10;
  int beam = 40;
};

/// Line-oriented loop. Each input line is a query, or one of the commands
/// "drain", "stats", "quit". Time is a logical clock advanced by each drain.
inline int cmd_serve(const ServeArgs& a, std::istream& in = std::cin, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  if (a.world.empty() || a.checkpoint.empty()) throw ConfigError("--world and --checkpoint are required");
  if (a.k < 1) throw ConfigError("--k must be >= 1");
  require_file(a.checkpoint);
  auto [world, tok] = load_world_dir(a.world);
  auto shared = std::make_shared<const SyntheticWorld>(std::move(world));
  std::vector<std::shared_ptr<const ContextProvider>> providers;
  if (!a.replay.empty()) {
    providers.push_back(std::make_shared<FileReplayProvider>(FileReplayProvider::from_file(a.replay.string())));
  } else {
    providers.push_back(std::make_shared<WebSimProvider>(shared, shared->seed));
    providers.push_back(std::make_shared<ProfileSimProvider>(shared, shared->seed));
  }
  auto rt = WorldRuntime::create(shared, std::move(tok), std::move(providers));
  if (!a.cache.empty() && fs::exists(a.cache)) rt.cache->load(a.cache.string());
  const auto model = load_checkpoint(a.checkpoint.string());
  if (static_cast<std::size_t>(model.config().vocab_size) != rt.tokenizer.size()) {
    throw DataError("checkpoint vocabulary size does not match the world's tokenizer");
  }
  const auto index = embed_corpus(model, rt.corpus);
  EvalOptions opt;
  opt.ks = {std::min(a.k, static_cast<int>(index.size()))};
  opt.beam = a.beam;
  std::int64_t clock = 1;

  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "quit" || line == "exit") break;
    if (line == "drain") {
      out << "drained " << rt.cache->drain(++clock) << '\n';
      continue;
    }
    if (line == "stats") {
      const auto c = rt.cache->counters();
      out << "hits=" << c.hits << " misses=" << c.misses << " pending=" << c.pending << " refreshes=" << c.refreshes
          << '\n';
      continue;
    }
    std::string canonical;
    try {
      canonical = rt.cache->normalizer().normalize(line);
    } catch (const ContractError&) {
      err << "warning: ignoring line with no query text\n";
      continue;
    }
    const auto hit = rt.cache->lookup(line);
    const auto bundle = assemble_bundle(hit.entry ? &*hit.entry : nullptr, canonical, rt.tokenizer,
                                        context_subset("all"), model.config());
    const auto res = retrieve(model, rt, index, bundle, opt);
    out << "query \"" << canonical << "\" " << (hit.hit() ? "hit" : "miss") << " contexts=" << bundle.contexts.size()
        << '\n';
    auto print = [&](const char* name, const std::vector<RetrievalResult>& rs) {
      for (std::size_t i = 0; i < rs.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", rs[i].score);
        out << "  " << name << ' ' << (i + 1) << ' ' << buf << ' ' << rt.world->keyword(rs[i].keyword_id).text << '\n';
      }
    };
    print("dr", res.dr);
    print("nlg", res.nlg);
    out.flush();
  }
  if (!a.cache.empty()) rt.cache->save(a.cache.string());
  return kOk;
}

// ---- bench-fid ----

struct BenchArgs {
  fs::path out;
  fs::path checkpoint;
  std::vector<int> ns = {1, 2, 4, 8, 13};
  int context_len = 8;
  int repeats = 3;
  std::uint64_t seed = 1;
};

struct FidReport {
  std::vector<FidPoint> points;
  PolyFit fid_linear, fid_quadratic, concat_linear, concat_quadratic;
};

inline FidReport fid_report(const std::vector<FidPoint>& pts) {
  std::vector<double> x, yf, yc;
  for (const auto& p : pts) {
    x.push_back(p.n);
    yf.push_back(static_cast<double>(p.fid_flops));
    yc.push_back(static_cast<double>(p.concat_flops));
  }
  return {pts, fit_poly(x, yf, 1), fit_poly(x, yf, 2), fit_poly(x, yc, 1), fit_poly(x, yc, 2)};
}

inline std::string fid_fit_text(const FidReport& r) {
  std::ostringstream os;
  auto line = [&](const char* name, const PolyFit& f) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-18s rss=%.6g aic=%.4f max_rel_residual=%.6f\n", name, f.rss, f.aic,
                  f.max_rel_residual);
    os << buf;
  };
  line("fid linear", r.fid_linear);
  line("fid quadratic", r.fid_quadratic);
  line("concat linear", r.concat_linear);
  line("concat quadratic", r.concat_quadratic);
  return os.str();
}

inline int cmd_bench_fid(BenchArgs a, std::ostream& log = std::cout) {
  if (auto s = env_seed()) a.seed = *s;
  if (a.repeats < 1) throw ConfigError("--repeats must be >= 1");
  if (a.ns.size() < 3) throw ConfigError("need at least 3 context counts to fit");
  ensure_out_dir(a.out);
  const auto model = a.checkpoint.empty() ? UnityModel<float>(ModelConfig::desk(), a.seed)
                                          : load_checkpoint(a.checkpoint.string());
  const auto rep = fid_report(fid_scaling(model, a.ns, a.context_len, a.repeats, a.seed));
  write_text(a.out / "fid_scaling.csv", fid_csv(rep.points));
  write_text(a.out / "fid_scaling.svg", fid_svg(rep.points));
  write_text(a.out / "fid_fit.txt", fid_fit_text(rep));
  log << fid_csv(rep.points) << fid_fit_text(rep);
  return kOk;
}

}  // namespace augu::cli
