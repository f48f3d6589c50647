#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <json.hpp>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "augu/context.hpp"
#include "augu/errors.hpp"
#include "augu/rng.hpp"
#include "augu/segment.hpp"

namespace augu {

struct WorldConfig {
  int num_intents = 48;
  int num_categories = 6;
  int surfaces_per_intent = 4;
  /// Surfaces shared by two intents of different categories.
  int ambiguous_surfaces = 48;
  int exact_per_intent = 6;
  int phrase_per_intent = 4;
  int smart_per_intent = 4;
  int docs_per_intent = 12;
  int train_queries_per_intent = 12;
  int test_queries_per_intent = 6;
  int keywords_per_train_query = 2;
  /// Fraction of surfaces that never appear in training queries.
  double heldout_surface_rate = 0.2;
  /// Probability that a simulated web result describes a confusable intent.
  double web_noise = 0.3;
  /// Same for each query-profile rewrite and the intent sentence.
  double profile_noise = 0.2;
  int num_modifiers = 12;
  int num_fillers = 24;

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("world config: " + what);
    };
    need(num_intents >= 2, "need at least 2 intents");
    need(num_categories >= 1 && num_categories <= num_intents, "num_categories must be in [1, num_intents]");
    need(surfaces_per_intent >= 1, "surfaces_per_intent must be >= 1");
    need(ambiguous_surfaces >= 0, "ambiguous_surfaces must be >= 0");
    need(2 * ambiguous_surfaces <= num_intents * (surfaces_per_intent - 1),
         "more ambiguity links than surface slots (each intent keeps one unshared surface)");
    need(ambiguous_surfaces == 0 || num_categories >= 2, "ambiguous surfaces need two categories");
    need(exact_per_intent >= 1 && exact_per_intent <= 8, "exact_per_intent must be in [1, 8]");
    need(phrase_per_intent >= 1 && phrase_per_intent <= 8, "phrase_per_intent must be in [1, 8]");
    need(smart_per_intent >= 1 && smart_per_intent <= 8, "smart_per_intent must be in [1, 8]");
    need(docs_per_intent >= 1, "docs_per_intent must be >= 1");
    need(train_queries_per_intent >= 1 && test_queries_per_intent >= 0, "query counts");
    need(keywords_per_train_query >= 1, "keywords_per_train_query must be >= 1");
    need(heldout_surface_rate >= 0 && heldout_surface_rate < 1, "heldout_surface_rate in [0, 1)");
    need(web_noise >= 0 && web_noise <= 1 && profile_noise >= 0 && profile_noise <= 1, "noise rates in [0, 1]");
    need(num_modifiers >= 8 && num_fillers >= 4, "num_modifiers >= 8 and num_fillers >= 4");
  }
};

struct Intent {
  int id = 0;
  int category = 0;
  std::string head;
  std::vector<std::string> disambiguators;
  std::vector<int> surfaces;
};

struct Surface {
  std::string text;
  std::vector<int> intents;
  bool heldout = false;

  bool ambiguous() const { return intents.size() >= 2; }
};

struct Keyword {
  int id = 0;
  std::string text;
  int intent = 0;
  MatchType match_type = MatchType::exact;
};

struct Document {
  int intent = 0;
  std::string title;
  std::string snippet;
  std::string country;
  std::int64_t timestamp = 0;
};

struct WorldQuery {
  std::string text;
  int intent = 0;
  int surface = 0;
};

struct WorldPair {
  int query = 0;  // index into train_queries
  int keyword = 0;
};

struct JudgeLabel {
  bool exact = false;
  bool phrase = false;
  bool smart = false;

  bool get(MatchType m) const { return m == MatchType::exact ? exact : m == MatchType::phrase ? phrase : smart; }
  bool operator==(const JudgeLabel&) const = default;
};

struct SyntheticWorld {
  WorldConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> categories;
  std::vector<std::string> modifiers;
  std::vector<std::string> fillers;
  std::vector<Intent> intents;
  std::vector<Surface> surfaces;
  std::vector<Keyword> keywords;
  std::vector<Document> documents;
  std::vector<WorldQuery> train_queries;
  std::vector<WorldQuery> test_queries;
  std::vector<WorldPair> train_pairs;

  /// Intent behind a query string, or -1 if the world does not know it.
  int intent_of(const std::string& query) const {
    auto it = query_index_.find(query);
    return it == query_index_.end() ? -1 : it->second;
  }

  /// The other intent sharing a surface with this one, else a deterministic
  /// intent from another category; used as the source of context noise.
  int confusable(int intent) const { return confusable_.at(static_cast<std::size_t>(intent)); }

  const Keyword& keyword(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= keywords.size()) {
      throw ContractError("unknown keyword id " + std::to_string(id));
    }
    return keywords[static_cast<std::size_t>(id)];
  }

  std::vector<std::string> corpus_texts() const {
    std::vector<std::string> out;
    for (const auto& k : keywords) out.push_back(k.text);
    return out;
  }

  /// Every text the world can emit; the tokenizer vocabulary is built from it.
  std::vector<std::string> all_texts() const {
    std::vector<std::string> out = corpus_texts();
    for (const auto& d : documents) out.push_back(d.title), out.push_back(d.snippet);
    for (const auto& q : train_queries) out.push_back(q.text);
    for (const auto& q : test_queries) out.push_back(q.text);
    for (const auto& s : surfaces) out.push_back(s.text);
    for (const auto& c : categories) out.push_back(c);
    for (const auto& m : modifiers) out.push_back(m);
    for (const auto& f : fillers) out.push_back(f);
    return out;
  }

  double ambiguous_surface_fraction() const {
    std::size_t a = 0;
    for (const auto& s : surfaces) a += s.ambiguous();
    return surfaces.empty() ? 0.0 : static_cast<double>(a) / static_cast<double>(surfaces.size());
  }

  void reindex() {
    query_index_.clear();
    for (const auto* qs : {&train_queries, &test_queries}) {
      for (const auto& q : *qs) query_index_[q.text] = q.intent;
    }
    confusable_.assign(intents.size(), -1);
    for (const auto& s : surfaces) {
      if (s.intents.size() < 2) continue;
      for (int a : s.intents) {
        for (int b : s.intents) {
          if (a != b && confusable_[static_cast<std::size_t>(a)] < 0) confusable_[static_cast<std::size_t>(a)] = b;
        }
      }
    }
    const int n = static_cast<int>(intents.size());
    for (int i = 0; i < n; ++i) {
      if (confusable_[static_cast<std::size_t>(i)] >= 0) continue;
      for (int step = 1; step < n; ++step) {
        const int j = (i + step) % n;
        if (intents[static_cast<std::size_t>(j)].category != intents[static_cast<std::size_t>(i)].category || step == n - 1) {
          confusable_[static_cast<std::size_t>(i)] = j;
          break;
        }
      }
    }
  }

 private:
  std::unordered_map<std::string, int> query_index_;
  std::vector<int> confusable_;
};

/// Rule judge: exact iff the keyword is in the intent's exact set, phrase iff
/// it belongs to the intent at exact or phrase level, smart iff it belongs
/// to an intent of the same category.
inline JudgeLabel judge(const SyntheticWorld& w, int intent, int keyword_id) {
  const auto& k = w.keyword(keyword_id);
  if (intent < 0 || static_cast<std::size_t>(intent) >= w.intents.size()) {
    throw ContractError("unknown intent " + std::to_string(intent));
  }
  JudgeLabel l;
  const bool same = k.intent == intent;
  l.exact = same && k.match_type == MatchType::exact;
  l.phrase = same && k.match_type != MatchType::smart;
  l.smart = w.intents[static_cast<std::size_t>(k.intent)].category == w.intents[static_cast<std::size_t>(intent)].category;
  return l;
}

inline JudgeLabel judge(const SyntheticWorld& w, const std::string& query, int keyword_id) {
  const int intent = w.intent_of(query);
  if (intent < 0) throw ContractError("query '" + query + "' is not part of the world");
  return judge(w, intent, keyword_id);
}

namespace detail {

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}
  std::string make(int syllables) {
    static constexpr std::string_view kC = "bdfgklmnprstvz";
    static constexpr std::string_view kV = "aeiou";
    for (;;) {
      std::string w;
      for (int i = 0; i < syllables; ++i) {
        w += kC[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(kC.size()) - 1))];
        w += kV[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(kV.size()) - 1))];
      }
      if (rng_.uniform() < 0.5) w += kC[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(kC.size()) - 1))];
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(v.size()) - 1))];
}

inline std::string join(const std::vector<std::string>& ws) {
  std::string out;
  for (const auto& w : ws) out += (out.empty() ? "" : " ") + w;
  return out;
}

}  // namespace detail

inline SyntheticWorld generate_world(const WorldConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SyntheticWorld w;
  w.config = cfg;
  w.seed = seed;
  Rng rng(seed);
  detail::WordMaker words(rng);
  for (int c = 0; c < cfg.num_categories; ++c) w.categories.push_back(words.make(3));
  for (int i = 0; i < cfg.num_modifiers; ++i) w.modifiers.push_back(words.make(2));
  for (int i = 0; i < cfg.num_fillers; ++i) w.fillers.push_back(words.make(2));
  for (int i = 0; i < cfg.num_intents; ++i) {
    Intent in;
    in.id = i;
    in.category = i % cfg.num_categories;
    in.head = words.make(3);
    in.disambiguators = {words.make(3), words.make(3)};
    w.intents.push_back(std::move(in));
  }

  // Ambiguity links: each shared surface joins two intents of different
  // categories, drawing from the intents with the most free slots.
  std::vector<int> free_slots(static_cast<std::size_t>(cfg.num_intents), cfg.surfaces_per_intent - 1);
  for (int a = 0; a < cfg.ambiguous_surfaces; ++a) {
    std::vector<int> order(static_cast<std::size_t>(cfg.num_intents));
    for (int i = 0; i < cfg.num_intents; ++i) order[static_cast<std::size_t>(i)] = i;
    shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return free_slots[static_cast<std::size_t>(x)] > free_slots[static_cast<std::size_t>(y)]; });
    const int first = order[0];
    int second = -1;
    for (std::size_t j = 1; j < order.size(); ++j) {
      const int c = order[j];
      if (free_slots[static_cast<std::size_t>(c)] > 0 &&
          w.intents[static_cast<std::size_t>(c)].category != w.intents[static_cast<std::size_t>(first)].category) {
        second = c;
        break;
      }
    }
    if (free_slots[static_cast<std::size_t>(first)] == 0 || second < 0) {
      throw ConfigError("world config: cannot place ambiguous surface " + std::to_string(a) +
                        " across categories");
    }
    --free_slots[static_cast<std::size_t>(first)];
    --free_slots[static_cast<std::size_t>(second)];
    const int sid = static_cast<int>(w.surfaces.size());
    w.surfaces.push_back({words.make(2), {std::min(first, second), std::max(first, second)}, false});
    w.intents[static_cast<std::size_t>(first)].surfaces.push_back(sid);
    w.intents[static_cast<std::size_t>(second)].surfaces.push_back(sid);
  }
  for (auto& in : w.intents) {
    while (static_cast<int>(in.surfaces.size()) < cfg.surfaces_per_intent) {
      const int sid = static_cast<int>(w.surfaces.size());
      w.surfaces.push_back({words.make(2), {in.id}, false});
      in.surfaces.push_back(sid);
    }
    std::sort(in.surfaces.begin(), in.surfaces.end());
  }
  // Held-out surfaces, keeping at least one trainable surface per intent.
  for (auto& s : w.surfaces) s.heldout = rng.uniform() < cfg.heldout_surface_rate;
  for (const auto& in : w.intents) {
    const bool any_seen = std::any_of(in.surfaces.begin(), in.surfaces.end(),
                                      [&](int s) { return !w.surfaces[static_cast<std::size_t>(s)].heldout; });
    if (!any_seen) w.surfaces[static_cast<std::size_t>(in.surfaces.front())].heldout = false;
  }

  // Keywords. Every form contains an intent-specific token, so texts are
  // unique across the corpus.
  for (const auto& in : w.intents) {
    const auto& h = in.head;
    const auto& d1 = in.disambiguators[0];
    const auto& d2 = in.disambiguators[1];
    const std::vector<std::vector<std::string>> exact = {{h, d1}, {d1, h}, {h, d2}, {d2, h},
                                                         {d1, d2, h}, {h, d1, d2}, {d1, h, d2}, {d2, d1, h}};
    std::vector<std::string> mods = w.modifiers;
    shuffle(mods.begin(), mods.end(), rng);
    const std::vector<std::vector<std::string>> phrase = {
        {mods[0], h, d1}, {h, d2, mods[1]}, {mods[2], h, d2}, {d1, h, mods[3]},
        {mods[4], d1, h}, {d2, h, mods[5]}, {mods[6], d2, h}, {h, d1, mods[7]}};
    const auto& cat = w.categories[static_cast<std::size_t>(in.category)];
    const std::vector<std::vector<std::string>> smart = {
        {cat, h}, {h, cat}, {cat, d1}, {cat, d2}, {cat, mods[0], h}, {mods[1], cat, d1}, {cat, h, mods[2]}, {d2, cat}};
    auto emit = [&](const auto& forms, int count, MatchType t) {
      for (int i = 0; i < count; ++i) {
        w.keywords.push_back({static_cast<int>(w.keywords.size()), detail::join(forms[static_cast<std::size_t>(i)]), in.id, t});
      }
    };
    emit(exact, cfg.exact_per_intent, MatchType::exact);
    emit(phrase, cfg.phrase_per_intent, MatchType::phrase);
    emit(smart, cfg.smart_per_intent, MatchType::smart);
  }

  // Documents: intent-level pages whose titles and snippets carry the head
  // and disambiguator tokens.
  static const std::vector<std::string> kCountries = {"us", "gb", "de", "fr", "in"};
  for (const auto& in : w.intents) {
    const auto& cat = w.categories[static_cast<std::size_t>(in.category)];
    for (int d = 0; d < cfg.docs_per_intent; ++d) {
      const auto& dis = in.disambiguators[static_cast<std::size_t>(d % 2)];
      std::vector<std::string> title = {in.head, dis, detail::pick(w.fillers, rng)};
      if (rng.uniform() < 0.5) std::swap(title[0], title[1]);
      std::vector<std::string> snippet = {detail::pick(w.fillers, rng), in.disambiguators[0], in.head,
                                          detail::pick(w.fillers, rng), cat, in.disambiguators[1],
                                          detail::pick(w.fillers, rng), detail::pick(w.modifiers, rng)};
      shuffle(snippet.begin(), snippet.end(), rng);
      w.documents.push_back({in.id, detail::join(title), detail::join(snippet),
                             detail::pick(kCountries, rng), static_cast<std::int64_t>(w.documents.size())});
    }
  }

  // Queries: a surface alone or with one modifier on either side. Strings
  // are unique world-wide, so each names exactly one intent even when its
  // surface is shared.
  std::set<std::string> taken;
  auto make_query = [&](const Intent& in, bool want_heldout) -> std::optional<WorldQuery> {
    std::vector<int> pool;
    for (int s : in.surfaces) {
      if (w.surfaces[static_cast<std::size_t>(s)].heldout == want_heldout) pool.push_back(s);
    }
    if (pool.empty()) return std::nullopt;
    for (int attempt = 0; attempt < 200; ++attempt) {
      const int s = detail::pick(pool, rng);
      const auto& st = w.surfaces[static_cast<std::size_t>(s)].text;
      const auto& m = detail::pick(w.modifiers, rng);
      const double u = rng.uniform();
      std::string text = u < 0.2 ? st : u < 0.6 ? m + " " + st : st + " " + m;
      if (taken.insert(text).second) return WorldQuery{text, in.id, s};
    }
    return std::nullopt;
  };
  for (const auto& in : w.intents) {
    for (int q = 0; q < cfg.train_queries_per_intent; ++q) {
      if (auto wq = make_query(in, false)) w.train_queries.push_back(*wq);
    }
  }
  const double heldout_share = cfg.heldout_surface_rate;
  for (const auto& in : w.intents) {
    for (int q = 0; q < cfg.test_queries_per_intent; ++q) {
      auto wq = rng.uniform() < heldout_share ? make_query(in, true) : std::nullopt;
      if (!wq) wq = make_query(in, false);
      if (wq) w.test_queries.push_back(*wq);
    }
  }

  // Training pairs: exact keywords half the time, phrase and smart a quarter each.
  std::map<int, std::vector<std::vector<int>>> by_intent_type;
  for (const auto& k : w.keywords) {
    auto& v = by_intent_type[k.intent];
    if (v.empty()) v.resize(3);
    v[static_cast<std::size_t>(k.match_type)].push_back(k.id);
  }
  for (std::size_t qi = 0; qi < w.train_queries.size(); ++qi) {
    std::set<int> chosen;
    const auto& pools = by_intent_type[w.train_queries[qi].intent];
    while (static_cast<int>(chosen.size()) < std::min<int>(cfg.keywords_per_train_query,
                                                          cfg.exact_per_intent + cfg.phrase_per_intent + cfg.smart_per_intent)) {
      const double u = rng.uniform();
      const auto& pool = pools[u < 0.5 ? 0 : u < 0.75 ? 1 : 2];
      const int k = detail::pick(pool, rng);
      if (chosen.insert(k).second) w.train_pairs.push_back({static_cast<int>(qi), k});
    }
  }
  w.reindex();
  return w;
}

// ---- simulated providers ----

/// Simulated web search: up to 10 results drawn from the document table of
/// the query's intent, each replaced with probability web_noise by a
/// document of the confusable intent.
class WebSimProvider final : public ContextProvider {
 public:
  WebSimProvider(std::shared_ptr<const SyntheticWorld> world, std::uint64_t seed) : world_(std::move(world)), seed_(seed) {}
  ProviderKind kind() const override { return ProviderKind::web_sim; }

  ContextFragment generate(const std::string& q) const override {
    ContextFragment f;
    const int intent = world_->intent_of(q);
    if (intent < 0) return f;
    Rng rng(hash64(q, seed_ ^ 0x77656273696dULL));
    auto docs_of = [&](int i) {
      std::vector<const Document*> out;
      for (const auto& d : world_->documents) {
        if (d.intent == i) out.push_back(&d);
      }
      shuffle(out.begin(), out.end(), rng);
      return out;
    };
    auto own = docs_of(intent), other = docs_of(world_->confusable(intent));
    std::size_t oi = 0, xi = 0;
    const std::string surface = world_->surfaces[static_cast<std::size_t>(surface_of(q))].text;
    for (std::size_t r = 0; r < kMaxWebResults; ++r) {
      const bool noisy = rng.uniform() < world_->config.web_noise;
      const Document* d = nullptr;
      if (noisy && xi < other.size()) d = other[xi++];
      else if (oi < own.size()) d = own[oi++];
      if (!d) break;
      f.web_results.push_back({surface + " " + d->title, d->snippet, d->country, d->timestamp});
    }
    return f;
  }

 protected:
  std::uint64_t latency_seed() const override { return seed_ ^ 0x1; }

 private:
  int surface_of(const std::string& q) const {
    for (const auto* qs : {&world_->train_queries, &world_->test_queries}) {
      for (const auto& wq : *qs) {
        if (wq.text == q) return wq.surface;
      }
    }
    return 0;
  }

  std::shared_ptr<const SyntheticWorld> world_;
  std::uint64_t seed_;
};

/// Simulated LLM query profile: four rewrites and one intent sentence built
/// from the intent's head and disambiguators, each independently describing
/// the confusable intent with probability profile_noise.
class ProfileSimProvider final : public ContextProvider {
 public:
  ProfileSimProvider(std::shared_ptr<const SyntheticWorld> world, std::uint64_t seed) : world_(std::move(world)), seed_(seed) {}
  ProviderKind kind() const override { return ProviderKind::profile_sim; }

  ContextFragment generate(const std::string& q) const override {
    ContextFragment f;
    const int intent = world_->intent_of(q);
    if (intent < 0) return f;
    Rng rng(hash64(q, seed_ ^ 0x70726f66696c65ULL));
    const auto& W = *world_;
    auto source = [&] {
      return &W.intents[static_cast<std::size_t>(rng.uniform() < W.config.profile_noise ? W.confusable(intent) : intent)];
    };
    QueryProfile p;
    for (int r = 0; r < 4; ++r) {
      const Intent* in = source();
      const auto& d = in->disambiguators;
      switch (r) {
        case 0: p.rewrites.push_back(q + " " + in->head); break;
        case 1: p.rewrites.push_back(in->head + " " + d[0]); break;
        case 2: p.rewrites.push_back(detail::pick(W.modifiers, rng) + " " + in->head + " " + d[1]); break;
        default: p.rewrites.push_back(d[0] + " " + d[1] + " " + in->head); break;
      }
    }
    const Intent* in = source();
    p.intent = detail::pick(W.fillers, rng) + " " + in->head + " " + in->disambiguators[0] + " " +
               W.categories[static_cast<std::size_t>(in->category)] + " " + in->disambiguators[1] + " " +
               detail::pick(W.fillers, rng);
    f.query_profile = std::move(p);
    return f;
  }

 protected:
  std::uint64_t latency_seed() const override { return seed_ ^ 0x2; }

 private:
  std::shared_ptr<const SyntheticWorld> world_;
  std::uint64_t seed_;
};

// ---- world file ----

inline nlohmann::json to_json(const WorldConfig& c) {
  return {{"num_intents", c.num_intents},
          {"num_categories", c.num_categories},
          {"surfaces_per_intent", c.surfaces_per_intent},
          {"ambiguous_surfaces", c.ambiguous_surfaces},
          {"exact_per_intent", c.exact_per_intent},
          {"phrase_per_intent", c.phrase_per_intent},
          {"smart_per_intent", c.smart_per_intent},
          {"docs_per_intent", c.docs_per_intent},
          {"train_queries_per_intent", c.train_queries_per_intent},
          {"test_queries_per_intent", c.test_queries_per_intent},
          {"keywords_per_train_query", c.keywords_per_train_query},
          {"heldout_surface_rate", c.heldout_surface_rate},
          {"web_noise", c.web_noise},
          {"profile_noise", c.profile_noise},
          {"num_modifiers", c.num_modifiers},
          {"num_fillers", c.num_fillers}};
}

inline WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "num_intents") c.num_intents = v.get<int>();
    else if (k == "num_categories") c.num_categories = v.get<int>();
    else if (k == "surfaces_per_intent") c.surfaces_per_intent = v.get<int>();
    else if (k == "ambiguous_surfaces") c.ambiguous_surfaces = v.get<int>();
    else if (k == "exact_per_intent") c.exact_per_intent = v.get<int>();
    else if (k == "phrase_per_intent") c.phrase_per_intent = v.get<int>();
    else if (k == "smart_per_intent") c.smart_per_intent = v.get<int>();
    else if (k == "docs_per_intent") c.docs_per_intent = v.get<int>();
    else if (k == "train_queries_per_intent") c.train_queries_per_intent = v.get<int>();
    else if (k == "test_queries_per_intent") c.test_queries_per_intent = v.get<int>();
    else if (k == "keywords_per_train_query") c.keywords_per_train_query = v.get<int>();
    else if (k == "heldout_surface_rate") c.heldout_surface_rate = v.get<double>();
    else if (k == "web_noise") c.web_noise = v.get<double>();
    else if (k == "profile_noise") c.profile_noise = v.get<double>();
    else if (k == "num_modifiers") c.num_modifiers = v.get<int>();
    else if (k == "num_fillers") c.num_fillers = v.get<int>();
    else throw ConfigError("unknown world config key '" + k + "'");
  }
  return c;
}

/// Sets one config field from its textual form; used for CLI overrides.
inline void set_world_option(WorldConfig& c, const std::string& key, const std::string& value) {
  nlohmann::json j = to_json(c);
  if (!j.contains(key)) throw ConfigError("unknown world config key '" + key + "'");
  try {
    j[key] = j[key].is_number_float() ? nlohmann::json(std::stod(value)) : nlohmann::json(std::stoi(value));
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + value + "' for world config key '" + key + "'");
  }
  c = world_config_from_json(j);
}

inline nlohmann::json to_json(const SyntheticWorld& w) {
  using nlohmann::json;
  json j;
  j["format"] = "augu-world-1";
  j["seed"] = w.seed;
  j["config"] = to_json(w.config);
  j["categories"] = w.categories;
  j["modifiers"] = w.modifiers;
  j["fillers"] = w.fillers;
  for (const auto& in : w.intents) {
    j["intents"].push_back({{"id", in.id}, {"category", in.category}, {"head", in.head},
                            {"disambiguators", in.disambiguators}, {"surfaces", in.surfaces}});
  }
  for (const auto& s : w.surfaces) j["surfaces"].push_back({{"text", s.text}, {"intents", s.intents}, {"heldout", s.heldout}});
  for (const auto& k : w.keywords) {
    j["keywords"].push_back({{"id", k.id}, {"text", k.text}, {"intent", k.intent}, {"match_type", to_string(k.match_type)}});
  }
  for (const auto& d : w.documents) {
    j["documents"].push_back({{"intent", d.intent}, {"title", d.title}, {"snippet", d.snippet},
                              {"country", d.country}, {"timestamp", d.timestamp}});
  }
  auto queries = [](const std::vector<WorldQuery>& qs) {
    json a = json::array();
    for (const auto& q : qs) a.push_back({{"text", q.text}, {"intent", q.intent}, {"surface", q.surface}});
    return a;
  };
  j["train_queries"] = queries(w.train_queries);
  j["test_queries"] = queries(w.test_queries);
  j["train_pairs"] = json::array();
  for (const auto& p : w.train_pairs) j["train_pairs"].push_back({p.query, p.keyword});
  return j;
}

inline SyntheticWorld world_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "augu-world-1") throw DataError("unsupported world format");
    SyntheticWorld w;
    w.seed = j.at("seed").get<std::uint64_t>();
    w.config = world_config_from_json(j.at("config"));
    w.categories = j.at("categories").get<std::vector<std::string>>();
    w.modifiers = j.at("modifiers").get<std::vector<std::string>>();
    w.fillers = j.at("fillers").get<std::vector<std::string>>();
    for (const auto& e : j.at("intents")) {
      w.intents.push_back({e.at("id").get<int>(), e.at("category").get<int>(), e.at("head").get<std::string>(),
                           e.at("disambiguators").get<std::vector<std::string>>(), e.at("surfaces").get<std::vector<int>>()});
    }
    for (const auto& e : j.at("surfaces")) {
      w.surfaces.push_back({e.at("text").get<std::string>(), e.at("intents").get<std::vector<int>>(), e.at("heldout").get<bool>()});
    }
    for (const auto& e : j.at("keywords")) {
      const auto mt = e.at("match_type").get<std::string>();
      auto it = std::find(kMatchTypeNames.begin(), kMatchTypeNames.end(), mt);
      if (it == kMatchTypeNames.end()) throw DataError("bad match_type '" + mt + "'");
      w.keywords.push_back({e.at("id").get<int>(), e.at("text").get<std::string>(), e.at("intent").get<int>(),
                            static_cast<MatchType>(it - kMatchTypeNames.begin())});
    }
    for (const auto& e : j.at("documents")) {
      w.documents.push_back({e.at("intent").get<int>(), e.at("title").get<std::string>(), e.at("snippet").get<std::string>(),
                             e.at("country").get<std::string>(), e.at("timestamp").get<std::int64_t>()});
    }
    auto queries = [](const nlohmann::json& a) {
      std::vector<WorldQuery> out;
      for (const auto& e : a) out.push_back({e.at("text").get<std::string>(), e.at("intent").get<int>(), e.at("surface").get<int>()});
      return out;
    };
    w.train_queries = queries(j.at("train_queries"));
    w.test_queries = queries(j.at("test_queries"));
    for (const auto& e : j.at("train_pairs")) w.train_pairs.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    for (std::size_t i = 0; i < w.keywords.size(); ++i) {
      if (w.keywords[i].id != static_cast<int>(i)) throw DataError("keyword ids must equal their position");
    }
    w.reindex();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed world file: ") + e.what());
  }
}

inline void save_world(const SyntheticWorld& w, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << to_json(w).dump(1) << '\n';
}

inline SyntheticWorld load_world(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return world_from_json(j);
}

}  // namespace augu
