#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "augu/checkpoint.hpp"
#include "augu/context.hpp"
#include "augu/model.hpp"
#include "augu/retrieval.hpp"
#include "augu/tokenizer.hpp"
#include "augu/trainer.hpp"
#include "augu/world.hpp"

namespace augu {

/// Fraction of the first k results judged relevant at `mt`; missing slots
/// count as misses, so the denominator is always k.
inline double precision_at_k(std::span<const RetrievalResult> results, std::span<const JudgeLabel> labels, int k,
                             MatchType mt) {
  if (k < 1) throw ContractError("precision_at_k needs k >= 1");
  if (labels.size() < std::min<std::size_t>(results.size(), static_cast<std::size_t>(k))) {
    throw ContractError("precision_at_k: fewer labels than scored results");
  }
  const std::size_t n = std::min(results.size(), static_cast<std::size_t>(k));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += labels[i].get(mt);
  return static_cast<double>(hits) / static_cast<double>(k);
}

inline constexpr std::int64_t kWarmTime = 1;

// Everything derived from a world that serving and evaluation need: the
// tokenizer, tokenized corpus, trie, and a context cache backed by the
// simulated providers.
struct WorldRuntime {
  std::shared_ptr<const SyntheticWorld> world;
  Tokenizer tokenizer;
  std::vector<std::vector<std::int32_t>> corpus;
  KeywordTrie trie;
  std::shared_ptr<ContextCache> cache;

  static WorldRuntime create(SyntheticWorld w, Tokenizer tok, std::uint64_t provider_seed) {
    auto world = std::make_shared<const SyntheticWorld>(std::move(w));
    std::vector<std::shared_ptr<const ContextProvider>> providers = {
        std::make_shared<WebSimProvider>(world, provider_seed), std::make_shared<ProfileSimProvider>(world, provider_seed)};
    return create(std::move(world), std::move(tok), std::move(providers));
  }
  static WorldRuntime create(std::shared_ptr<const SyntheticWorld> world, Tokenizer tok,
                             std::vector<std::shared_ptr<const ContextProvider>> providers) {
    WorldRuntime rt;
    rt.world = std::move(world);
    rt.tokenizer = std::move(tok);
    rt.corpus = tokenize_corpus(rt.world->corpus_texts(), rt.tokenizer);
    rt.trie = build_trie(rt.corpus);
    auto pipeline = std::make_shared<ContextPipeline>(std::move(providers));
    rt.cache = std::make_shared<ContextCache>(Normalizer(rt.tokenizer.words()), pipeline);
    return rt;
  }

  /// Looks every query up once and drains the pipeline, so each becomes a hit.
  void warm(const std::vector<WorldQuery>& queries, std::int64_t now = kWarmTime) {
    for (const auto& q : queries) cache->lookup(q.text);
    cache->drain(now);
  }

  ContextBundle bundle_for(const std::string& query, const ContextLimits& limits, const ModelConfig& cfg) const {
    const auto canonical = cache->normalizer().normalize(query);
    const auto entry = cache->peek(canonical);
    return assemble_bundle(entry ? &*entry : nullptr, canonical, tokenizer, limits, cfg);
  }
};

/// The world's training pairs with contexts assembled under `limits`.
inline std::vector<TrainingPair> training_pairs(const WorldRuntime& rt, const ContextLimits& limits, const ModelConfig& cfg) {
  std::vector<TrainingPair> out;
  out.reserve(rt.world->train_pairs.size());
  for (const auto& p : rt.world->train_pairs) {
    const auto& q = rt.world->train_queries.at(static_cast<std::size_t>(p.query));
    const auto& k = rt.world->keyword(p.keyword);
    out.push_back({rt.bundle_for(q.text, limits, cfg), {SegmentKind::query, rt.corpus[static_cast<std::size_t>(k.id)], 0},
                   k.match_type});
  }
  return out;
}

struct EvalOptions {
  ContextLimits limits;
  std::vector<int> ks = {10, 20};
  int beam = 40;
  bool dr = true;
  bool nlg = true;
  std::size_t workers = 1;
};

struct ReportRow {
  std::string cell;
  MatchType match_type = MatchType::exact;
  int k = 0;
  double precision = 0;
  std::size_t n_queries = 0;
  bool absent = false;

  bool operator==(const ReportRow&) const = default;
};

inline std::string_view to_string(RetrievalPath p) { return p == RetrievalPath::dr ? "dr" : "nlg"; }

/// Per-query ranked results for one retrieval path.
struct QueryRetrieval {
  std::vector<RetrievalResult> dr;
  std::vector<RetrievalResult> nlg;
};

inline QueryRetrieval retrieve(const UnityModel<float>& model, const WorldRuntime& rt, const DenseIndex& index,
                               const ContextBundle& bundle, const EvalOptions& opt) {
  const int kmax = *std::max_element(opt.ks.begin(), opt.ks.end());
  Graph<float> g(false);
  auto net = model.bind(g);
  auto fw = net.forward(bundle);
  QueryRetrieval r;
  if (opt.dr) {
    r.dr = dense_topk(index, fw.embedding.value().data(), std::min<std::size_t>(static_cast<std::size_t>(kmax), index.size()));
  }
  if (opt.nlg) r.nlg = nar_beam_search(fw.logits.value(), rt.trie, std::max(opt.beam, kmax), kmax);
  return r;
}

/// P@k per (path, match type, k) averaged over the world's test queries.
inline std::vector<ReportRow> evaluate(const UnityModel<float>& model, const WorldRuntime& rt, const DenseIndex& index,
                                       const std::string& cell, const EvalOptions& opt) {
  if (opt.ks.empty()) throw ContractError("evaluate needs at least one k");
  const auto& queries = rt.world->test_queries;
  std::vector<QueryRetrieval> per_query(queries.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < queries.size(); i += stride) {
      per_query[i] = retrieve(model, rt, index, rt.bundle_for(queries[i].text, opt.limits, model.config()), opt);
    }
  };
  const std::size_t nw = std::max<std::size_t>(1, std::min(opt.workers, queries.size()));
  if (nw == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> ts;
    for (std::size_t w = 0; w < nw; ++w) ts.emplace_back(work, w, nw);
  }
  std::vector<ReportRow> rows;
  for (RetrievalPath path : {RetrievalPath::dr, RetrievalPath::nlg}) {
    if ((path == RetrievalPath::dr && !opt.dr) || (path == RetrievalPath::nlg && !opt.nlg)) continue;
    for (std::size_t m = 0; m < kMatchTypeNames.size(); ++m) {
      const auto mt = static_cast<MatchType>(m);
      for (int k : opt.ks) {
        double sum = 0;
        for (std::size_t i = 0; i < queries.size(); ++i) {
          const auto& res = path == RetrievalPath::dr ? per_query[i].dr : per_query[i].nlg;
          std::vector<JudgeLabel> labels;
          for (const auto& r : res) labels.push_back(judge(*rt.world, queries[i].intent, r.keyword_id));
          sum += precision_at_k(res, labels, k, mt);
        }
        rows.push_back({cell + "/" + std::string(to_string(path)), mt, k,
                        queries.empty() ? 0.0 : sum / static_cast<double>(queries.size()), queries.size(), false});
      }
    }
  }
  return rows;
}

inline const ReportRow& find_row(const std::vector<ReportRow>& rows, const std::string& cell, MatchType mt, int k) {
  for (const auto& r : rows) {
    if (r.cell == cell && r.match_type == mt && r.k == k) return r;
  }
  throw ContractError("no report row for " + cell + " " + std::string(to_string(mt)) + " @" + std::to_string(k));
}

// ---- ablation grid ----

struct AblationCell {
  std::string name;
  std::string checkpoint;  // file name inside the model directory
  ContextLimits limits;
};

/// Runs each cell in declaration order. A cell whose checkpoint is missing is
/// reported as absent and the run continues.
inline std::vector<ReportRow> run_ablation(const std::vector<AblationCell>& grid, const std::filesystem::path& model_dir,
                                           const WorldRuntime& rt, EvalOptions opt) {
  std::vector<ReportRow> rows;
  std::map<std::string, std::pair<std::shared_ptr<UnityModel<float>>, std::shared_ptr<DenseIndex>>> loaded;
  for (const auto& cell : grid) {
    const auto path = model_dir / cell.checkpoint;
    if (!std::filesystem::exists(path)) {
      for (std::size_t m = 0; m < kMatchTypeNames.size(); ++m) {
        for (int k : opt.ks) rows.push_back({cell.name, static_cast<MatchType>(m), k, 0.0, 0, true});
      }
      continue;
    }
    auto& slot = loaded[path.string()];
    if (!slot.first) {
      slot.first = std::make_shared<UnityModel<float>>(load_checkpoint(path.string()));
      slot.second = std::make_shared<DenseIndex>(embed_corpus(*slot.first, rt.corpus));
    }
    opt.limits = cell.limits;
    auto r = evaluate(*slot.first, rt, *slot.second, cell.name, opt);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "cell,match_type,k,precision,n_queries\n";
  for (const auto& r : rows) {
    os << r.cell << ',' << to_string(r.match_type) << ',' << r.k << ',';
    if (r.absent) {
      os << "NA";
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", r.precision);
      os << buf;
    }
    os << ',' << r.n_queries << '\n';
  }
  return os.str();
}

/// One line per cell, columns P@k for each match type.
inline std::string report_table(const std::vector<ReportRow>& rows) {
  std::vector<std::string> cells;
  std::vector<std::pair<MatchType, int>> cols;
  for (const auto& r : rows) {
    if (std::find(cells.begin(), cells.end(), r.cell) == cells.end()) cells.push_back(r.cell);
    if (std::find(cols.begin(), cols.end(), std::pair{r.match_type, r.k}) == cols.end()) cols.push_back({r.match_type, r.k});
  }
  std::size_t width = 4;
  for (const auto& c : cells) width = std::max(width, c.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "cell";
  for (const auto& [mt, k] : cols) os << "  " << std::right << std::setw(10) << (std::string(to_string(mt)) + "@" + std::to_string(k));
  os << '\n';
  for (const auto& c : cells) {
    os << std::left << std::setw(static_cast<int>(width)) << c;
    for (const auto& [mt, k] : cols) {
      std::string v = "-";
      for (const auto& r : rows) {
        if (r.cell == c && r.match_type == mt && r.k == k) {
          if (r.absent) {
            v = "absent";
          } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f", r.precision);
            v = buf;
          }
        }
      }
      os << "  " << std::right << std::setw(10) << v;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace augu
