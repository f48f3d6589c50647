#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "augu/context.hpp"

namespace augu {
namespace {

Tokenizer small_tokenizer() {
  const std::vector<std::string> texts = {"fishing reels cheap", "fishing rods", "reels for sale", "lake fishing"};
  return Tokenizer::build(texts, 128);
}

TEST(Tokenizer, ReservedIdsComeFirst) {
  auto tok = small_tokenizer();
  EXPECT_EQ(tok.piece(token::pad), "[pad]");
  EXPECT_EQ(tok.piece(token::eos), "[eos]");
  EXPECT_EQ(tok.piece(token::marker(SegmentKind::web_snippet)), "[web_snippet]");
  EXPECT_THROW(tok.piece(100000), VocabularyError);
}

TEST(Tokenizer, KnownWordsEncodeToSingleIdsAndRoundTrip) {
  auto tok = small_tokenizer();
  auto ids = tok.encode("  Fishing   REELS ");
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_GE(ids[0], token::first_regular);
  EXPECT_EQ(tok.decode(ids), "fishing reels");
}

TEST(Tokenizer, UnknownWordsFallBackToPieces) {
  auto tok = small_tokenizer();
  auto ids = tok.encode("fishes");
  EXPECT_GT(ids.size(), 1u);
  EXPECT_EQ(tok.decode(ids), "fishes");
  // 'q' never occurs in the corpus
  EXPECT_EQ(tok.encode("quiz"), std::vector<std::int32_t>{token::unk});
}

TEST(Tokenizer, FrequencyOrderAndSizeCap) {
  const std::vector<std::string> texts = {"b a a", "c a b"};
  auto tok = Tokenizer::build(texts, static_cast<std::size_t>(token::first_regular) + 6 + 1);
  // 3 initial + 3 continuation character pieces fill six slots; 'a' is both
  // a character piece and the only word and takes no extra slot.
  EXPECT_LE(tok.size(), static_cast<std::size_t>(token::first_regular) + 7);
  EXPECT_THROW(Tokenizer::build(texts, 9), ConfigError);
}

TEST(Tokenizer, SaveLoadRoundTrip) {
  auto tok = small_tokenizer();
  const auto path = std::filesystem::temp_directory_path() / "augu_vocab_test.txt";
  tok.save(path.string());
  auto back = Tokenizer::load(path.string());
  EXPECT_EQ(back.size(), tok.size());
  EXPECT_EQ(back.encode("lake fishing reels"), tok.encode("lake fishing reels"));
  std::filesystem::remove(path);
}

Normalizer fishing_normalizer() { return Normalizer({"fishing", "reels", "rods", "cheap", "lake"}); }

TEST(Normalize, CaseAndWhitespace) {
  EXPECT_EQ(fishing_normalizer()("  Fishing   REELS "), "fishing reels");
  EXPECT_EQ(Normalizer()("a\t\tb\n c"), "a b c");
}

TEST(Normalize, CompatibilityForms) {
  // fullwidth letters and an ideographic space
  EXPECT_EQ(Normalizer()("\xEF\xBC\xA6ishing\xE3\x80\x80reels"), "fishing reels");
}

TEST(Normalize, SingleEditSpellFold) {
  auto n = fishing_normalizer();
  EXPECT_EQ(n("fishng reels"), "fishing reels");    // deletion
  EXPECT_EQ(n("fishinng reals"), "fishing reels");  // insertion, substitution
  EXPECT_EQ(n("fshng reels"), "fshng reels");       // two edits: left alone
  EXPECT_EQ(n("rod"), "rod");                       // below the fold length
}

TEST(Normalize, OneEditOracle) {
  // Brute-force Levenshtein against the fast check.
  auto lev = [](const std::u32string& a, const std::u32string& b) {
    std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
      for (std::size_t j = 1; j <= b.size(); ++j) {
        d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
      }
    }
    return d[a.size()][b.size()];
  };
  Rng rng(3);
  for (int t = 0; t < 5000; ++t) {
    std::u32string a, b;
    const auto la = rng.uniform_int(0, 5), lb = rng.uniform_int(0, 5);
    for (int i = 0; i < la; ++i) a += static_cast<char32_t>(U'a' + rng.uniform_int(0, 2));
    for (int i = 0; i < lb; ++i) b += static_cast<char32_t>(U'a' + rng.uniform_int(0, 2));
    EXPECT_EQ(detail::one_edit_apart(a, b), lev(a, b) == 1) << std::string(a.begin(), a.end()) << " / "
                                                           << std::string(b.begin(), b.end());
  }
}

TEST(Normalize, IdempotentOnRandomStrings) {
  auto n = fishing_normalizer();
  static const std::vector<std::string> alphabet = {"a", "e", "f", "i", "s", "h", "n", "g", "r", "l", " ", "\t", "A", "Z",
                                                    "\xC3\xA9", "e\xCC\x81", "\xEF\xBC\xA1", "\xE3\x80\x80", "\xEF\xAC\x81",
                                                    "\xC3\x9F", "\xE2\x84\xAA", "\xCC\x81", "\x07"};
  Rng rng(11);
  int checked = 0;
  for (int t = 0; t < 10000; ++t) {
    std::string s;
    const auto len = rng.uniform_int(1, 14);
    for (int i = 0; i < len; ++i) s += alphabet[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
    std::string once;
    try {
      once = n(s);
    } catch (const ContractError&) {
      continue;
    }
    ++checked;
    ASSERT_EQ(n(once), once) << "input bytes: " << s;
  }
  EXPECT_GT(checked, 9000);
}

TEST(Normalize, EmptyIsContractError) {
  EXPECT_THROW(Normalizer()("   \t "), ContractError);
  EXPECT_THROW(Normalizer()(""), ContractError);
}

class CountingProvider final : public ContextProvider {
 public:
  ProviderKind kind() const override { return ProviderKind::web_sim; }
  ContextFragment generate(const std::string& q) const override {
    ++calls;
    ContextFragment f;
    for (int i = 0; i < 12; ++i) f.web_results.push_back({q + " title " + std::to_string(i), q + " snippet", "us", i});
    f.query_profile = QueryProfile{{q + " rewrite a", q + " rewrite b"}, "about " + q};
    return f;
  }
  mutable std::atomic<int> calls{0};
};

struct CacheFixture {
  std::shared_ptr<CountingProvider> provider = std::make_shared<CountingProvider>();
  std::shared_ptr<ContextPipeline> pipeline =
      std::make_shared<ContextPipeline>(std::vector<std::shared_ptr<const ContextProvider>>{provider});
  ContextCache cache{fishing_normalizer(), pipeline};
};

TEST(ContextCache, MissEnqueuesOnceThenHitsAfterDrain) {
  CacheFixture f;
  auto r1 = f.cache.lookup("Fishing Reels");
  EXPECT_FALSE(r1.hit());
  EXPECT_TRUE(r1.enqueued);
  auto r2 = f.cache.lookup("fishing  reels");
  EXPECT_FALSE(r2.hit());
  EXPECT_FALSE(r2.enqueued);
  ASSERT_EQ(f.pipeline->queued().size(), 1u);
  EXPECT_EQ(f.pipeline->queued()[0].canonical_query, "fishing reels");
  EXPECT_EQ(f.cache.counters().pending, 1u);
  EXPECT_EQ(f.cache.drain(5), 1u);
  EXPECT_EQ(f.provider->calls.load(), 1);
  auto r3 = f.cache.lookup("FISHNG reels");
  ASSERT_TRUE(r3.hit());
  EXPECT_EQ(r3.entry->web_results.size(), kMaxWebResults);
  EXPECT_EQ(r3.entry->created_at, 5);
  const auto c = f.cache.counters();
  EXPECT_EQ(c.hits, 1u);
  EXPECT_EQ(c.misses, 2u);
  EXPECT_EQ(c.pending, 0u);
}

TEST(ContextCache, InsertThenVariantLookupHits) {
  ContextCache cache(fishing_normalizer());
  cache.insert({"cheap rods", {{"t", "s", "us", 0}}, std::nullopt, 0, 0});
  EXPECT_TRUE(cache.lookup("  CHEAP rods").hit());
  EXPECT_FALSE(cache.lookup("cheap reels").hit());
}

TEST(ContextCache, EveryMissedQueryHitsAfterDrain) {
  CacheFixture f;
  std::vector<std::string> qs;
  for (int i = 0; i < 50; ++i) qs.push_back("query " + std::to_string(i % 20));
  for (const auto& q : qs) f.cache.lookup(q);
  EXPECT_EQ(f.pipeline->enqueued_total(), 20u);
  f.cache.drain(1);
  for (const auto& q : qs) EXPECT_TRUE(f.cache.lookup(q).hit());
}

TEST(ContextCache, ConcurrentReadersAndWorkers) {
  auto provider = std::make_shared<CountingProvider>();
  auto pipeline = std::make_shared<ContextPipeline>(std::vector<std::shared_ptr<const ContextProvider>>{provider}, 4);
  ContextCache cache(Normalizer{}, pipeline);
  {
    std::vector<std::jthread> ts;
    for (int t = 0; t < 4; ++t) {
      ts.emplace_back([&cache, t] {
        for (int i = 0; i < 200; ++i) cache.lookup("q" + std::to_string((i * 7 + t) % 64));
      });
    }
  }
  EXPECT_EQ(pipeline->enqueued_total(), 64u);
  EXPECT_EQ(cache.drain(2), 64u);
  EXPECT_EQ(provider->calls.load(), 64);
  EXPECT_EQ(cache.size(), 64u);
}

TEST(ContextCache, RefreshReenqueuesStaleEntriesOnly) {
  CacheFixture f;
  f.cache.lookup("fishing reels");
  f.cache.drain(10);
  auto none = f.cache.refresh(15, 10);
  EXPECT_EQ(none.stale, 0u);
  EXPECT_EQ(f.pipeline->pending(), 0u);
  auto one = f.cache.refresh(20, 10);
  EXPECT_EQ(one.enqueued, 1u);
  EXPECT_EQ(f.cache.refresh(21, 10).enqueued, 0u);  // already queued
  f.cache.drain(20);
  auto e = f.cache.peek("fishing reels");
  ASSERT_TRUE(e);
  EXPECT_EQ(e->refreshed_at, 20);
  EXPECT_EQ(e->created_at, 10);
  EXPECT_EQ(f.cache.counters().refreshes, 1u);
  EXPECT_THROW(f.cache.refresh(30, 0), ContractError);
}

TEST(ContextCache, NewestEntryWins) {
  ContextCache cache(Normalizer{});
  cache.insert({"q", {{"new", "", "", 0}}, std::nullopt, 0, 9});
  cache.insert({"q", {{"old", "", "", 0}}, std::nullopt, 0, 3});
  EXPECT_EQ(cache.peek("q")->web_results[0].title, "new");
}

TEST(ContextCache, LruEvictsLeastRecentlyUsed) {
  ContextCache cache(Normalizer{}, nullptr, {.capacity = 2});
  cache.insert({"a", {}, std::nullopt, 0, 0});
  cache.insert({"b", {}, std::nullopt, 0, 0});
  EXPECT_TRUE(cache.lookup("a").hit());
  cache.insert({"c", {}, std::nullopt, 0, 0});
  EXPECT_TRUE(cache.peek("a"));
  EXPECT_FALSE(cache.peek("b"));
  EXPECT_EQ(cache.evictions(), 1u);
}

TEST(ContextCache, EntryValidation) {
  ContextCache cache(Normalizer{});
  CacheEntry e{"q", std::vector<WebResult>(11), std::nullopt, 0, 0};
  EXPECT_THROW(cache.insert(e), ContractError);
  CacheEntry p{"q", {}, QueryProfile{{}, "intent"}, 0, 0};
  EXPECT_THROW(cache.insert(p), ContractError);
}

TEST(CacheFile, RoundTripWithAwkwardCharacters) {
  CacheEntry e{"tab\tcomma,back\\slash", {{"a,b", "line\nbreak", "us", 7}, {"", "x", "", -2}},
               QueryProfile{{"r1", "r,2", ""}, "intent\twith tab"}, 3, 4};
  auto line = cachefile::format_record(e);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(cachefile::parse_record(line), e);
  CacheEntry bare{"plain", {}, std::nullopt, 0, 0};
  EXPECT_EQ(cachefile::parse_record(cachefile::format_record(bare)), bare);
  EXPECT_THROW(cachefile::parse_record("only\tthree\tfields"), DataError);
}

TEST(CacheFile, SaveLoadPreservesEntries) {
  CacheFixture f;
  for (auto q : {"fishing reels", "cheap rods", "lake"}) f.cache.lookup(q);
  f.cache.drain(3);
  const auto path = std::filesystem::temp_directory_path() / "augu_cache_test.tsv";
  f.cache.save(path.string());
  ContextCache back(fishing_normalizer());
  back.load(path.string());
  EXPECT_EQ(back.entries(), f.cache.entries());
  std::filesystem::remove(path);
}

TEST(FileReplay, ThreeLineFixtureVerbatim) {
  const auto path = std::filesystem::temp_directory_path() / "augu_replay_fixture.tsv";
  {
    std::ofstream out(path);
    out << "alpha\t0\t0\tA title\tA snippet\tus\t1\t1\tA rewrite\tA intent\n";
    out << "beta\t0\t0\t\t\t\t\t1\tB one,B two\tB intent\n";
    out << "gamma\t0\t0\tG1,G2\tS1,S2\tus,gb\t1,2\t0\t\t\n";
  }
  auto p = FileReplayProvider::from_file(path.string());
  auto a = p.generate("alpha");
  ASSERT_EQ(a.web_results.size(), 1u);
  EXPECT_EQ(a.web_results[0].title, "A title");
  EXPECT_EQ(a.query_profile->intent, "A intent");
  auto b = p.generate("beta");
  EXPECT_TRUE(b.web_results.empty());
  EXPECT_EQ(b.query_profile->rewrites, (std::vector<std::string>{"B one", "B two"}));
  auto g = p.generate("gamma");
  EXPECT_EQ(g.web_results[1].snippet, "S2");
  EXPECT_FALSE(g.query_profile);
  EXPECT_TRUE(p.generate("delta").empty());
  EXPECT_EQ(p.generate("alpha"), a);
  std::filesystem::remove(path);
}

ModelConfig bundle_config() {
  ModelConfig c;
  c.max_len = {6, 4, 5, 4, 6};
  return c;
}

CacheEntry rich_entry() {
  CacheEntry e;
  e.canonical_query = "fishing reels";
  for (int i = 0; i < 10; ++i) {
    e.web_results.push_back({"reels " + std::string(static_cast<std::size_t>(i + 1), 'a'), "cheap fishing reels for lake rods sale",
                             "us", i});
  }
  e.query_profile = QueryProfile{{"fishing rods", "cheap reels", "lake fishing", "reels sale", "extra"}, "reels for fishing"};
  return e;
}

TEST(AssembleBundle, MissGivesContextFreeBundle) {
  auto tok = small_tokenizer();
  auto b = assemble_bundle(nullptr, "fishing reels", tok, {}, bundle_config());
  EXPECT_EQ(b.n(), 0u);
  EXPECT_EQ(b.query.ids.size(), 6u);
  EXPECT_EQ(b.query.ids[2], token::pad);
}

TEST(AssembleBundle, DefaultCompositionOrderAndTruncation) {
  auto tok = small_tokenizer();
  const auto e = rich_entry();
  auto b = assemble_bundle(&e, "fishing reels", tok, {4, 4, 4, 1}, bundle_config());
  ASSERT_EQ(b.n(), 13u);
  const SegmentKind expect[] = {SegmentKind::web_title,   SegmentKind::web_title,   SegmentKind::web_title,
                                SegmentKind::web_title,   SegmentKind::web_snippet, SegmentKind::web_snippet,
                                SegmentKind::web_snippet, SegmentKind::web_snippet, SegmentKind::qp_rewrite,
                                SegmentKind::qp_rewrite,  SegmentKind::qp_rewrite,  SegmentKind::qp_rewrite,
                                SegmentKind::qp_intent};
  for (std::size_t i = 0; i < 13; ++i) {
    EXPECT_EQ(b.contexts[i].kind, expect[i]);
    EXPECT_EQ(b.contexts[i].ids.front(), token::marker(expect[i]));
    EXPECT_EQ(b.contexts[i].source_rank, static_cast<int>(i));
    EXPECT_LE(b.contexts[i].ids.size(), bundle_config().max_len[static_cast<std::size_t>(expect[i])]);
  }
  // titles are results 1-4 in rank order: their second word grows by one 'a'
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(tok.decode(std::span(b.contexts[i].ids).subspan(1)), tok.decode(tok.encode(e.web_results[i].title)));
  }
  // snippet has 7 words; max_len 5 keeps the marker and 4 tokens
  EXPECT_EQ(b.contexts[4].ids.size(), 5u);
  EXPECT_EQ(tok.decode(std::span(b.contexts[4].ids).subspan(1)), "cheap fishing reels for");
}

TEST(AssembleBundle, LimitsAndSubsets) {
  auto tok = small_tokenizer();
  const auto e = rich_entry();
  EXPECT_EQ(assemble_bundle(&e, "q", tok, context_subset("none"), bundle_config()).n(), 0u);
  EXPECT_EQ(assemble_bundle(&e, "q", tok, context_subset("web"), bundle_config()).n(), 8u);
  EXPECT_EQ(assemble_bundle(&e, "q", tok, context_subset("qprofile"), bundle_config()).n(), 5u);
  EXPECT_EQ(assemble_bundle(&e, "q", tok, {1, 1, 1, 1}, bundle_config()).n(), 4u);
  EXPECT_EQ(assemble_bundle(&e, "q", tok, {10, 10, 10, 1}, bundle_config()).n(), 26u);
  EXPECT_EQ(context_subset("all"), (ContextLimits{4, 4, 4, 1}));
  try {
    context_subset("bogus");
    FAIL();
  } catch (const ConfigError& err) {
    EXPECT_NE(std::string(err.what()).find("qprofile"), std::string::npos);
  }
}

TEST(ZipfScenario, HitRateTracksCachedHeadMass) {
  ZipfScenario sc;
  auto r = run_zipf_scenario(sc);
  EXPECT_NEAR(r.configured_mass, 0.70, 0.01);
  EXPECT_NEAR(r.counters.hit_rate(), r.configured_mass, 0.05);
  EXPECT_EQ(r.counters.hits + r.counters.misses, sc.stream_length);
  EXPECT_LE(r.enqueued, sc.num_queries - r.head_size);
}

}  // namespace
}  // namespace augu
