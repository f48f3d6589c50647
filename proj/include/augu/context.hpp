#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "augu/errors.hpp"
#include "augu/model.hpp"
#include "augu/normalize.hpp"
#include "augu/rng.hpp"
#include "augu/segment.hpp"
#include "augu/tokenizer.hpp"

namespace augu {

inline constexpr std::size_t kMaxWebResults = 10;

struct WebResult {
  std::string title;
  std::string snippet;
  std::string country;
  std::int64_t timestamp = 0;

  bool operator==(const WebResult&) const = default;
};

struct QueryProfile {
  std::vector<std::string> rewrites;
  std::string intent;

  bool operator==(const QueryProfile&) const = default;
};

/// What one provider contributes for a canonical query.
struct ContextFragment {
  std::vector<WebResult> web_results;
  std::optional<QueryProfile> query_profile;

  bool empty() const { return web_results.empty() && !query_profile; }
  bool operator==(const ContextFragment&) const = default;
};

struct CacheEntry {
  std::string canonical_query;
  std::vector<WebResult> web_results;
  std::optional<QueryProfile> query_profile;
  std::int64_t created_at = 0;
  std::int64_t refreshed_at = 0;

  void validate() const {
    if (web_results.size() > kMaxWebResults) {
      throw ContractError("cache entry for '" + canonical_query + "' has " + std::to_string(web_results.size()) +
                          " web results");
    }
    if (query_profile && query_profile->rewrites.empty()) {
      throw ContractError("cache entry for '" + canonical_query + "' has a profile without rewrites");
    }
  }
  bool operator==(const CacheEntry&) const = default;
};

enum class ProviderKind { web_sim, profile_sim, file_replay };

class ContextProvider {
 public:
  virtual ~ContextProvider() = default;
  virtual ProviderKind kind() const = 0;
  /// Deterministic in (canonical_query, provider seed).
  virtual ContextFragment generate(const std::string& canonical_query) const = 0;
  /// Simulated service time; only accumulated into pipeline statistics.
  virtual double latency_ms(const std::string& canonical_query) const {
    Rng r(hash64(canonical_query, latency_seed()));
    return 20.0 - 80.0 * std::log(1.0 - r.uniform());
  }

 protected:
  virtual std::uint64_t latency_seed() const { return 0x5eed; }
};

// ---- persistence ----

namespace cachefile {

inline std::string escape(std::string_view s, bool list_item) {
  if (list_item && s.empty()) return "\\e";
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case ',':
        if (list_item) {
          out += "\\,";
          break;
        }
        [[fallthrough]];
      default: out += c;
    }
  }
  return out;
}

inline std::vector<std::string> split_unescaped(std::string_view s, char sep) {
  std::vector<std::string> out(1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      out.back() += s[i];
      out.back() += s[++i];
    } else if (s[i] == sep) {
      out.emplace_back();
    } else {
      out.back() += s[i];
    }
  }
  return out;
}

inline std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) throw DataError("dangling escape");
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case ',': out += ','; break;
      case 'e': break;
      default: throw DataError(std::string("unknown escape \\") + s[i]);
    }
  }
  return out;
}

inline std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + escape(items[i], true);
  return out;
}

inline std::vector<std::string> parse_list(std::string_view field) {
  if (field.empty()) return {};
  std::vector<std::string> out;
  for (auto& item : split_unescaped(field, ',')) out.push_back(unescape(item));
  return out;
}

inline std::int64_t parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError(std::string("bad ") + what + " '" + s + "'");
}

/// Fields: canonical, created_at, refreshed_at, titles, snippets, countries,
/// timestamps, has_profile, rewrites, intent.
inline std::string format_record(const CacheEntry& e) {
  std::vector<std::string> titles, snippets, countries, stamps;
  for (const auto& r : e.web_results) {
    titles.push_back(r.title);
    snippets.push_back(r.snippet);
    countries.push_back(r.country);
    stamps.push_back(std::to_string(r.timestamp));
  }
  std::ostringstream os;
  os << escape(e.canonical_query, false) << '\t' << e.created_at << '\t' << e.refreshed_at << '\t'
     << join_list(titles) << '\t' << join_list(snippets) << '\t' << join_list(countries) << '\t'
     << join_list(stamps) << '\t' << (e.query_profile ? 1 : 0) << '\t'
     << (e.query_profile ? join_list(e.query_profile->rewrites) : "") << '\t'
     << (e.query_profile ? escape(e.query_profile->intent, false) : "");
  return os.str();
}

inline CacheEntry parse_record(std::string_view line) {
  auto f = split_unescaped(line, '\t');
  if (f.size() != 10) throw DataError("cache record has " + std::to_string(f.size()) + " fields, expected 10");
  CacheEntry e;
  e.canonical_query = unescape(f[0]);
  e.created_at = parse_int(f[1], "created_at");
  e.refreshed_at = parse_int(f[2], "refreshed_at");
  auto titles = parse_list(f[3]), snippets = parse_list(f[4]), countries = parse_list(f[5]),
       stamps = parse_list(f[6]);
  if (snippets.size() != titles.size() || countries.size() != titles.size() || stamps.size() != titles.size()) {
    throw DataError("web result columns disagree in length for '" + e.canonical_query + "'");
  }
  for (std::size_t i = 0; i < titles.size(); ++i) {
    e.web_results.push_back({titles[i], snippets[i], countries[i], parse_int(stamps[i], "timestamp")});
  }
  if (f[7] == "1") {
    e.query_profile = QueryProfile{parse_list(f[8]), unescape(f[9])};
  } else if (f[7] != "0") {
    throw DataError("bad has_profile flag '" + f[7] + "'");
  }
  try {
    e.validate();
  } catch (const ContractError& err) {
    throw DataError(err.what());
  }
  return e;
}

inline std::vector<CacheEntry> read_records(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  std::vector<CacheEntry> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(f, line);) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_records(const std::string& path, const std::vector<CacheEntry>& entries) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  for (const auto& e : entries) f << format_record(e) << '\n';
}

}  // namespace cachefile

/// Replays contexts from a file in the cache record format.
class FileReplayProvider final : public ContextProvider {
 public:
  explicit FileReplayProvider(const std::vector<CacheEntry>& entries) {
    for (const auto& e : entries) by_query_[e.canonical_query] = {e.web_results, e.query_profile};
  }
  static FileReplayProvider from_file(const std::string& path) { return FileReplayProvider(cachefile::read_records(path)); }

  ProviderKind kind() const override { return ProviderKind::file_replay; }
  ContextFragment generate(const std::string& q) const override {
    auto it = by_query_.find(q);
    return it == by_query_.end() ? ContextFragment{} : it->second;
  }

 private:
  std::unordered_map<std::string, ContextFragment> by_query_;
};

// ---- miss pipeline ----

struct PipelineTask {
  std::string canonical_query;
  bool refresh = false;
};

struct PipelineResult {
  PipelineTask task;
  ContextFragment fragment;
};

// In-process task queue standing in for the offline context generation
// service. A canonical query is queued at most once until it is run.
class ContextPipeline {
 public:
  explicit ContextPipeline(std::vector<std::shared_ptr<const ContextProvider>> providers, std::size_t workers = 1)
      : providers_(std::move(providers)), workers_(std::max<std::size_t>(1, workers)) {}

  bool enqueue(const std::string& canonical, bool refresh = false) {
    std::lock_guard lock(mu_);
    if (!queued_.insert(canonical).second) return false;
    queue_.push_back({canonical, refresh});
    ++enqueued_total_;
    return true;
  }

  std::size_t pending() const {
    std::lock_guard lock(mu_);
    return queue_.size();
  }

  std::vector<PipelineTask> queued() const {
    std::lock_guard lock(mu_);
    return {queue_.begin(), queue_.end()};
  }

  std::size_t enqueued_total() const {
    std::lock_guard lock(mu_);
    return enqueued_total_;
  }
  double simulated_latency_ms() const {
    std::lock_guard lock(mu_);
    return latency_ms_;
  }

  /// Runs every task queued at call time; results come back in queue order
  /// regardless of how many workers computed them.
  std::vector<PipelineResult> run() {
    std::vector<PipelineTask> tasks;
    {
      std::lock_guard lock(mu_);
      tasks.assign(queue_.begin(), queue_.end());
    }
    std::vector<PipelineResult> out(tasks.size());
    std::vector<double> latency(tasks.size(), 0.0);
    auto work = [&](std::size_t first, std::size_t stride) {
      for (std::size_t i = first; i < tasks.size(); i += stride) {
        out[i].task = tasks[i];
        for (const auto& p : providers_) {
          auto frag = p->generate(tasks[i].canonical_query);
          latency[i] = std::max(latency[i], p->latency_ms(tasks[i].canonical_query));
          for (auto& r : frag.web_results) {
            if (out[i].fragment.web_results.size() < kMaxWebResults) out[i].fragment.web_results.push_back(std::move(r));
          }
          if (frag.query_profile && !out[i].fragment.query_profile) out[i].fragment.query_profile = std::move(frag.query_profile);
        }
      }
    };
    const std::size_t nw = std::min(workers_, std::max<std::size_t>(1, tasks.size()));
    if (nw == 1) {
      work(0, 1);
    } else {
      std::vector<std::jthread> threads;
      for (std::size_t w = 0; w < nw; ++w) threads.emplace_back(work, w, nw);
    }
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      queue_.pop_front();
      queued_.erase(tasks[i].canonical_query);
      latency_ms_ += latency[i];
    }
    return out;
  }

 private:
  std::vector<std::shared_ptr<const ContextProvider>> providers_;
  std::size_t workers_;
  mutable std::mutex mu_;
  std::deque<PipelineTask> queue_;
  std::unordered_set<std::string> queued_;
  std::size_t enqueued_total_ = 0;
  double latency_ms_ = 0;
};

// ---- cache ----

struct CacheCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t pending = 0;
  std::uint64_t refreshes = 0;

  double hit_rate() const { return hits + misses ? static_cast<double>(hits) / static_cast<double>(hits + misses) : 0.0; }
};

struct LookupResult {
  std::string canonical_query;
  std::optional<CacheEntry> entry;
  bool enqueued = false;

  bool hit() const { return entry.has_value(); }
};

struct RefreshStats {
  std::size_t scanned = 0;
  std::size_t stale = 0;
  std::size_t enqueued = 0;
};

struct CacheOptions {
  /// 0 = unbounded; otherwise least-recently-used entries are evicted.
  std::size_t capacity = 0;
};

// Query-context cache keyed by canonical query. Readers share a lock;
// publishing an entry takes it exclusively. Misses are forwarded to the
// attached pipeline.
class ContextCache {
 public:
  explicit ContextCache(Normalizer normalizer, std::shared_ptr<ContextPipeline> pipeline = nullptr,
                        CacheOptions opt = {})
      : normalizer_(std::move(normalizer)), pipeline_(std::move(pipeline)), opt_(opt) {}

  const Normalizer& normalizer() const { return normalizer_; }
  ContextPipeline* pipeline() const { return pipeline_.get(); }

  LookupResult lookup(std::string_view query) {
    LookupResult r;
    r.canonical_query = normalizer_.normalize(query);
    {
      std::shared_lock lock(mu_);
      if (auto it = entries_.find(r.canonical_query); it != entries_.end()) r.entry = it->second;
    }
    if (r.entry) {
      hits_.fetch_add(1, std::memory_order_relaxed);
      touch(r.canonical_query);
      return r;
    }
    misses_.fetch_add(1, std::memory_order_relaxed);
    if (pipeline_) r.enqueued = pipeline_->enqueue(r.canonical_query);
    return r;
  }

  /// Read without counting or enqueueing.
  std::optional<CacheEntry> peek(const std::string& canonical) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(canonical);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  /// Publishes an entry; an existing entry is replaced only by one that is
  /// at least as recent.
  void insert(CacheEntry e) {
    e.validate();
    std::unique_lock lock(mu_);
    auto it = entries_.find(e.canonical_query);
    if (it != entries_.end() && it->second.refreshed_at > e.refreshed_at) return;
    const std::string key = e.canonical_query;
    entries_[key] = std::move(e);
    if (opt_.capacity == 0) return;
    std::lock_guard lru_lock(lru_mu_);
    if (auto pos = lru_pos_.find(key); pos != lru_pos_.end()) {
      lru_.splice(lru_.begin(), lru_, pos->second);
    } else {
      lru_.push_front(key);
      lru_pos_[key] = lru_.begin();
    }
    while (lru_.size() > opt_.capacity) {
      entries_.erase(lru_.back());
      lru_pos_.erase(lru_.back());
      lru_.pop_back();
      ++evictions_;
    }
  }

  std::uint64_t evictions() const {
    std::shared_lock lock(mu_);
    return evictions_;
  }

  /// Runs the pipeline to completion and publishes what it produced.
  std::size_t drain(std::int64_t now) {
    if (!pipeline_) return 0;
    std::size_t published = 0;
    while (pipeline_->pending() > 0) {
      for (auto& res : pipeline_->run()) {
        CacheEntry e;
        e.canonical_query = res.task.canonical_query;
        e.web_results = std::move(res.fragment.web_results);
        e.query_profile = std::move(res.fragment.query_profile);
        const auto prev = peek(e.canonical_query);
        e.created_at = prev ? prev->created_at : now;
        e.refreshed_at = now;
        insert(std::move(e));
        ++published;
      }
    }
    return published;
  }

  /// Re-enqueues entries whose last refresh is at least ttl old.
  RefreshStats refresh(std::int64_t now, std::int64_t ttl) {
    if (ttl <= 0) throw ContractError("refresh ttl must be positive");
    RefreshStats st;
    std::vector<std::string> stale;
    {
      std::shared_lock lock(mu_);
      for (const auto& [k, e] : entries_) {
        ++st.scanned;
        if (now - e.refreshed_at >= ttl) stale.push_back(k);
      }
    }
    std::sort(stale.begin(), stale.end());
    st.stale = stale.size();
    for (const auto& k : stale) {
      if (pipeline_ && pipeline_->enqueue(k, true)) {
        ++st.enqueued;
        refreshes_.fetch_add(1, std::memory_order_relaxed);
      }
    }
    return st;
  }

  CacheCounters counters() const {
    return {hits_.load(), misses_.load(), pipeline_ ? pipeline_->pending() : 0, refreshes_.load()};
  }
  void reset_counters() {
    hits_ = 0;
    misses_ = 0;
    refreshes_ = 0;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  /// Entries sorted by canonical query.
  std::vector<CacheEntry> entries() const {
    std::shared_lock lock(mu_);
    std::vector<CacheEntry> out;
    out.reserve(entries_.size());
    for (const auto& [_, e] : entries_) out.push_back(e);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.canonical_query < b.canonical_query; });
    return out;
  }

  void save(const std::string& path) const { cachefile::write_records(path, entries()); }
  void load(const std::string& path) {
    for (auto& e : cachefile::read_records(path)) insert(std::move(e));
  }

 private:
  void touch(const std::string& key) {
    if (opt_.capacity == 0) return;
    std::lock_guard lock(lru_mu_);
    auto it = lru_pos_.find(key);
    if (it != lru_pos_.end()) lru_.splice(lru_.begin(), lru_, it->second);
  }

  Normalizer normalizer_;
  std::shared_ptr<ContextPipeline> pipeline_;
  CacheOptions opt_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, CacheEntry> entries_;
  std::uint64_t evictions_ = 0;
  std::mutex lru_mu_;
  std::list<std::string> lru_;
  std::unordered_map<std::string, std::list<std::string>::iterator> lru_pos_;
  std::atomic<std::uint64_t> hits_{0}, misses_{0}, refreshes_{0};
};

// ---- bundle assembly ----

/// Per-kind context counts: titles, snippets, rewrites, intent.
struct ContextLimits {
  std::size_t titles = 4;
  std::size_t snippets = 4;
  std::size_t rewrites = 4;
  std::size_t intent = 1;

  std::size_t total() const { return titles + snippets + rewrites + intent; }
  bool operator==(const ContextLimits&) const = default;
};

inline constexpr std::array<std::string_view, 8> kContextSubsetNames = {
    "none", "title", "snippet", "rewrites", "intent", "web", "qprofile", "all"};

inline ContextLimits context_subset(std::string_view name) {
  if (name == "none") return {0, 0, 0, 0};
  if (name == "title") return {4, 0, 0, 0};
  if (name == "snippet") return {0, 4, 0, 0};
  if (name == "rewrites") return {0, 0, 4, 0};
  if (name == "intent") return {0, 0, 0, 1};
  if (name == "web") return {4, 4, 0, 0};
  if (name == "qprofile") return {0, 0, 4, 1};
  if (name == "all") return {4, 4, 4, 1};
  std::string valid;
  for (auto n : kContextSubsetNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown context subset '" + std::string(name) + "' (valid: " + valid + ")");
}

/// Tokenizes the query and up to `limits` contexts from the entry, in the
/// order titles, snippets, rewrites, intent (each by rank). Context segments
/// are the kind marker followed by the text tokens, truncated to the kind's
/// max_len. A miss (null entry) yields a context-free bundle.
inline ContextBundle assemble_bundle(const CacheEntry* entry, std::string_view query, const Tokenizer& tok,
                                     const ContextLimits& limits, const ModelConfig& cfg) {
  ContextBundle b;
  auto q = tok.encode(query);
  if (q.empty()) q.push_back(token::unk);
  b.query = as_query_segment(q, cfg);
  if (!entry) return b;
  int rank = 0;
  auto add = [&](SegmentKind kind, std::string_view text) {
    auto ids = tok.encode(text);
    if (ids.empty()) return;
    const std::size_t cap = cfg.max_len[static_cast<std::size_t>(kind)];
    TokenSegment seg{kind, {token::marker(kind)}, rank++};
    for (std::size_t i = 0; i < ids.size() && seg.ids.size() < cap; ++i) seg.ids.push_back(ids[i]);
    b.contexts.push_back(std::move(seg));
  };
  const auto& web = entry->web_results;
  for (std::size_t i = 0; i < std::min(limits.titles, web.size()); ++i) add(SegmentKind::web_title, web[i].title);
  for (std::size_t i = 0; i < std::min(limits.snippets, web.size()); ++i) add(SegmentKind::web_snippet, web[i].snippet);
  if (entry->query_profile) {
    const auto& rw = entry->query_profile->rewrites;
    for (std::size_t i = 0; i < std::min(limits.rewrites, rw.size()); ++i) add(SegmentKind::qp_rewrite, rw[i]);
    if (limits.intent > 0) add(SegmentKind::qp_intent, entry->query_profile->intent);
  }
  return b;
}

// ---- hit-rate scenario ----

// A Zipf-distributed query stream against a cache pre-populated with the
// most popular queries. Tail queries miss and are queued but never drained,
// so the steady hit rate estimates the cached head mass. A fraction of the
// stream arrives as surface variants (case, spacing, compatibility forms)
// that only hit through normalization.
struct ZipfScenario {
  std::size_t num_queries = 5000;
  double exponent = 1.0;
  double cacheable_mass = 0.70;
  std::size_t stream_length = 20000;
  double variant_rate = 0.3;
  std::uint64_t seed = 7;
};

struct ZipfResult {
  std::size_t head_size = 0;
  double configured_mass = 0;
  CacheCounters counters;
  std::size_t enqueued = 0;
};

inline ZipfResult run_zipf_scenario(const ZipfScenario& sc) {
  if (sc.num_queries == 0 || sc.cacheable_mass <= 0 || sc.cacheable_mass > 1) {
    throw ConfigError("zipf scenario needs queries and a cacheable mass in (0, 1]");
  }
  std::vector<double> cdf(sc.num_queries);
  double z = 0;
  for (std::size_t r = 0; r < sc.num_queries; ++r) cdf[r] = (z += std::pow(static_cast<double>(r + 1), -sc.exponent));
  for (auto& c : cdf) c /= z;
  ZipfResult res;
  while (res.head_size < sc.num_queries && cdf[res.head_size] < sc.cacheable_mass) ++res.head_size;
  res.head_size = std::min(res.head_size + 1, sc.num_queries);
  res.configured_mass = cdf[res.head_size - 1];

  auto text = [](std::size_t r) { return "query " + std::to_string(r) + " topic"; };
  auto pipeline = std::make_shared<ContextPipeline>(std::vector<std::shared_ptr<const ContextProvider>>{});
  ContextCache cache(Normalizer{}, pipeline);
  for (std::size_t r = 0; r < res.head_size; ++r) {
    CacheEntry e;
    e.canonical_query = cache.normalizer().normalize(text(r));
    e.web_results.push_back({"title " + std::to_string(r), "snippet", "us", 0});
    cache.insert(std::move(e));
  }
  Rng rng(sc.seed);
  for (std::size_t i = 0; i < sc.stream_length; ++i) {
    const double u = rng.uniform();
    const std::size_t r = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    std::string q = text(std::min(r, sc.num_queries - 1));
    if (rng.uniform() < sc.variant_rate) {
      switch (rng.uniform_int(0, 2)) {
        case 0: std::transform(q.begin(), q.end(), q.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); }); break;
        case 1: q = "  " + q + "\t "; break;
        default: q.replace(0, 5, "\xEF\xBD\x91uery");  // fullwidth 'q'
      }
    }
    cache.lookup(q);
  }
  res.counters = cache.counters();
  res.enqueued = pipeline->enqueued_total();
  return res;
}

}  // namespace augu
