#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdlib>
#include <map>

#include "augu/cli.hpp"

namespace augu {
namespace {

namespace fs = std::filesystem;
using namespace augu::cli;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("augu_cli_") + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    unsetenv("AUGU_SEED");
  }
  void TearDown() override {
    unsetenv("AUGU_SEED");
    fs::remove_all(dir);
  }

  GenWorldArgs small_world(const std::string& name) const {
    GenWorldArgs a;
    a.out = dir / name;
    a.set = {"num_intents=8", "num_categories=2", "ambiguous_surfaces=6", "train_queries_per_intent=4",
             "test_queries_per_intent=3", "docs_per_intent=6"};
    return a;
  }

  TrainArgs small_train(const fs::path& world, const std::string& name) const {
    TrainArgs t;
    t.world = world;
    t.out = dir / name;
    t.set = {"epochs=2", "batch_size=16", "lr=1e-3", "warmup_steps=2", "warmup_epochs=1"};
    t.model_set = {"num_encoder_layers=1", "num_decoder_layers=1", "hidden_size=16", "ffn_size=32", "dense_size=8"};
    return t;
  }

  fs::path dir;
  std::ostringstream log;
};

const char* kWorldFiles[] = {"world.json", "corpus.txt", "vocab.txt", "train_pairs.tsv", "test_queries.tsv"};

TEST_F(CliTest, GenWorldIsByteIdenticalAcrossRuns) {
  std::map<std::string, std::string> first;
  for (int run = 0; run < 3; ++run) {
    auto a = small_world("w" + std::to_string(run));
    ASSERT_EQ(cmd_gen_world(a, log), kOk);
    for (const char* f : kWorldFiles) {
      const auto text = read_text(a.out / f);
      EXPECT_FALSE(text.empty()) << f;
      if (run == 0) first[f] = text;
      else EXPECT_EQ(text, first[f]) << f;
    }
  }
}

TEST_F(CliTest, GenWorldRefusesToOverwriteWithoutForce) {
  auto a = small_world("w");
  ASSERT_EQ(cmd_gen_world(a, log), kOk);
  const auto before = read_text(a.out / "world.json");
  a.seed = 99;
  std::ostringstream err;
  EXPECT_EQ(guarded([&] { return cmd_gen_world(a, log); }, err), kUsage);
  EXPECT_NE(err.str().find("--force"), std::string::npos);
  EXPECT_EQ(read_text(a.out / "world.json"), before);
  a.force = true;
  ASSERT_EQ(cmd_gen_world(a, log), kOk);
  EXPECT_NE(read_text(a.out / "world.json"), before);
}

TEST_F(CliTest, GenWorldOverridesReachTheWorldFile) {
  auto a = small_world("w");
  a.set.push_back("num_intents=10");
  ASSERT_EQ(cmd_gen_world(a, log), kOk);
  const auto j = nlohmann::json::parse(read_text(a.out / "world.json"));
  EXPECT_EQ(j.at("config").at("num_intents").get<int>(), 10);
  EXPECT_EQ(j.at("intents").size(), 10u);
  a.set = {"no_such_key=1"};
  a.force = true;
  EXPECT_EQ(guarded([&] { return cmd_gen_world(a, log); }, log), kUsage);
  a.set = {"num_intents"};
  EXPECT_EQ(guarded([&] { return cmd_gen_world(a, log); }, log), kUsage);
}

TEST_F(CliTest, SeedEnvironmentVariableOverridesSeed) {
  auto a = small_world("w");
  a.seed = 1;
  setenv("AUGU_SEED", "17", 1);
  ASSERT_EQ(cmd_gen_world(a, log), kOk);
  EXPECT_EQ(load_world((a.out / "world.json").string()).seed, 17u);
  setenv("AUGU_SEED", "x", 1);
  a.force = true;
  EXPECT_EQ(guarded([&] { return cmd_gen_world(a, log); }, log), kUsage);
}

TEST_F(CliTest, TrainWritesOneStatsRowPerEpochAndNoGlancingZeroesRates) {
  auto w = small_world("w");
  ASSERT_EQ(cmd_gen_world(w, log), kOk);
  auto t = small_train(w.out, "m");
  t.set[0] = "epochs=4";
  ASSERT_EQ(cmd_train(t, log), kOk);
  EXPECT_TRUE(fs::exists(t.out / "model.ckpt"));
  EXPECT_EQ(TrainConfig::parse(read_text(t.out / "train_config.txt")).epochs, 4);
  auto lines = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  };
  auto rows = lines(read_text(t.out / "train_stats.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], EpochStats::csv_header());
  EXPECT_EQ(rows[1].find("1,"), 0u);
  EXPECT_EQ(rows[4].find("4,"), 0u);
  EXPECT_EQ(rows[4].find(",0,0,0,0,"), std::string::npos) << rows[4];

  t.out = dir / "nocg";
  t.no_glancing = true;
  ASSERT_EQ(cmd_train(t, log), kOk);
  rows = lines(read_text(t.out / "train_stats.csv"));
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> cols;
    std::istringstream in(rows[i]);
    for (std::string c; std::getline(in, c, ',');) cols.push_back(c);
    ASSERT_EQ(cols.size(), 8u);
    for (int c = 3; c <= 6; ++c) EXPECT_EQ(cols[c], "0") << rows[i];
  }
}

TEST_F(CliTest, TrainRejectsBadInputs) {
  auto w = small_world("w");
  ASSERT_EQ(cmd_gen_world(w, log), kOk);
  auto t = small_train(w.out, "m");
  t.contexts = "everything";
  EXPECT_EQ(guarded([&] { return cmd_train(t, log); }, log), kUsage);
  t = small_train(dir / "missing", "m");
  EXPECT_EQ(guarded([&] { return cmd_train(t, log); }, log), kData);
  t = small_train(w.out, "m");
  t.model_set.push_back("depth=3");
  EXPECT_EQ(guarded([&] { return cmd_train(t, log); }, log), kUsage);
  t = small_train(w.out, "m");
  t.profile = "huge";
  EXPECT_EQ(guarded([&] { return cmd_train(t, log); }, log), kUsage);
}

TEST_F(CliTest, NumericAbortMapsToExitCodeThree) {
  auto w = small_world("w");
  ASSERT_EQ(cmd_gen_world(w, log), kOk);
  auto t = small_train(w.out, "m");
  t.set = {"epochs=3", "batch_size=8", "lr=1e30", "warmup_steps=0", "warmup_epochs=1"};
  std::ostringstream err;
  EXPECT_EQ(guarded([&] { return cmd_train(t, log); }, err), kNumeric);
  EXPECT_NE(err.str().find("batch pair ids"), std::string::npos) << err.str();
}

TEST_F(CliTest, EvalReportsShareQueriesAcrossPathsAndRejectUnknownSubsets) {
  auto w = small_world("w");
  ASSERT_EQ(cmd_gen_world(w, log), kOk);
  auto t = small_train(w.out, "m");
  ASSERT_EQ(cmd_train(t, log), kOk);
  EvalArgs e;
  e.world = w.out;
  e.checkpoints = {t.out / "model.ckpt"};
  e.out = dir / "eval";
  e.contexts = {"none", "all"};
  e.ks = {10};
  ASSERT_EQ(cmd_eval(e, log), kOk);
  const auto csv = read_text(e.out / "report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "cell,match_type,k,precision,n_queries");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::set<std::string> cells, counts;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    cells.insert(line.substr(0, line.find(',')));
    counts.insert(line.substr(line.rfind(',') + 1));
  }
  EXPECT_EQ(rows, 2 * 2 * 3);
  EXPECT_EQ(cells, (std::set<std::string>{"none/dr", "none/nlg", "all/dr", "all/nlg"}));
  EXPECT_EQ(counts, (std::set<std::string>{"24"}));
  EXPECT_FALSE(read_text(e.out / "report.txt").empty());

  e.path = "dr";
  ASSERT_EQ(cmd_eval(e, log), kOk);
  EXPECT_EQ(read_text(e.out / "report.csv").find("/nlg"), std::string::npos);

  e.contexts = {"none", "bogus"};
  std::ostringstream err;
  EXPECT_EQ(guarded([&] { return cmd_eval(e, log); }, err), kUsage);
  EXPECT_NE(err.str().find("qprofile"), std::string::npos);

  e.contexts = {"all"};
  e.checkpoints = {dir / "nope" / "model.ckpt"};
  ASSERT_EQ(cmd_eval(e, log), kOk);
  EXPECT_NE(read_text(e.out / "report.csv").find("NA"), std::string::npos);
}

TEST_F(CliTest, ServeMissDrainHitAndCachePersistence) {
  auto w = small_world("w");
  ASSERT_EQ(cmd_gen_world(w, log), kOk);
  auto t = small_train(w.out, "m");
  t.set = {"epochs=1", "batch_size=16", "lr=1e-3", "warmup_steps=2", "warmup_epochs=0.5"};
  ASSERT_EQ(cmd_train(t, log), kOk);
  const auto world = load_world((w.out / "world.json").string());
  const auto q = world.test_queries.at(0).text;

  ServeArgs s;
  s.world = w.out;
  s.checkpoint = t.out / "model.ckpt";
  s.cache = dir / "cache.tsv";
  s.k = 3;
  std::istringstream in(q + "\nstats\ndrain\n" + q + "\n \t \nstats\n");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_serve(s, in, out, err), kOk);
  const auto text = out.str();
  const auto miss = text.find("\" miss contexts=0"), hit = text.find("\" hit contexts=13");
  ASSERT_NE(miss, std::string::npos) << text;
  ASSERT_NE(hit, std::string::npos) << text;
  EXPECT_LT(miss, hit);
  EXPECT_NE(text.find("hits=0 misses=1 pending=1 refreshes=0"), std::string::npos) << text;
  EXPECT_NE(text.find("drained 1"), std::string::npos);
  EXPECT_NE(text.find("hits=1 misses=1 pending=0 refreshes=0"), std::string::npos) << text;
  EXPECT_NE(text.find("  dr 3 "), std::string::npos);
  EXPECT_NE(text.find("  nlg 1 "), std::string::npos);
  EXPECT_NE(err.str().find("warning"), std::string::npos);
  ASSERT_TRUE(fs::exists(s.cache));

  std::istringstream again(q + "\n");
  std::ostringstream out2;
  ASSERT_EQ(cmd_serve(s, again, out2, err), kOk);
  EXPECT_NE(out2.str().find("\" hit contexts=13"), std::string::npos) << out2.str();
}

TEST_F(CliTest, ServeReplaysFixtureContexts) {
  auto w = small_world("w");
  ASSERT_EQ(cmd_gen_world(w, log), kOk);
  auto t = small_train(w.out, "m");
  t.set = {"epochs=1", "batch_size=16", "lr=1e-3", "warmup_steps=2", "warmup_epochs=0.5"};
  ASSERT_EQ(cmd_train(t, log), kOk);
  const auto world = load_world((w.out / "world.json").string());
  const auto q = world.test_queries.at(0).text, other = world.test_queries.at(1).text;
  CacheEntry e;
  e.canonical_query = q;
  e.web_results = {{world.documents.at(0).title, world.documents.at(0).snippet, "us", 0}};
  write_text(dir / "fixture.tsv", cachefile::format_record(e) + "\n");

  ServeArgs s;
  s.world = w.out;
  s.checkpoint = t.out / "model.ckpt";
  s.replay = dir / "fixture.tsv";
  std::istringstream in(q + "\ndrain\n" + q + "\n" + other + "\ndrain\n" + other + "\n");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_serve(s, in, out, err), kOk);
  EXPECT_NE(out.str().find("\" hit contexts=2"), std::string::npos) << out.str();
  // a query the fixture lacks gets an empty entry: a hit with no contexts
  EXPECT_NE(out.str().find(other + "\" hit contexts=0"), std::string::npos) << out.str();
}

// Ambiguous queries: the miss response (no contexts) cannot tell the two
// intents apart; once the cache holds the query's contexts the same query
// should retrieve more keywords of its true intent.
TEST_F(CliTest, ServeAmbiguousQueriesResolveAfterCacheHit) {
  auto w = small_world("w");
  ASSERT_EQ(cmd_gen_world(w, log), kOk);
  TrainArgs t;
  t.world = w.out;
  t.out = dir / "m";
  t.set = {"epochs=20", "batch_size=16", "lr=1e-3", "warmup_steps=10"};
  ASSERT_EQ(cmd_train(t, log), kOk);
  const auto world = load_world((w.out / "world.json").string());
  std::map<std::string, int> by_text;
  for (const auto& k : world.keywords) by_text[k.text] = k.id;

  std::vector<WorldQuery> ambiguous;
  for (const auto& q : world.test_queries) {
    if (world.surfaces.at(static_cast<std::size_t>(q.surface)).ambiguous()) ambiguous.push_back(q);
  }
  ASSERT_GE(ambiguous.size(), 4u);
  std::string input;
  for (const auto& q : ambiguous) input += q.text + "\n";
  input += "drain\n";
  for (const auto& q : ambiguous) input += q.text + "\n";

  ServeArgs s;
  s.world = w.out;
  s.checkpoint = t.out / "model.ckpt";
  std::istringstream in(input);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_serve(s, in, out, err), kOk);

  // exact-relevant results per path, split by miss/hit responses
  std::map<std::string, int> miss_hits, hit_hits;
  std::istringstream lines(out.str());
  std::string line;
  std::size_t qi = 0;
  bool hit = false;
  int responses = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("query \"", 0) == 0) {
      hit = line.find("\" hit ") != std::string::npos;
      qi = static_cast<std::size_t>(responses++) % ambiguous.size();
      continue;
    }
    if (line.rfind("  ", 0) != 0) continue;
    std::istringstream f(line);
    std::string path, rank, score;
    f >> path >> rank >> score;
    std::string text;
    std::getline(f, text);
    text.erase(0, 1);
    ASSERT_TRUE(by_text.contains(text)) << line;
    if (judge(world, ambiguous[qi].intent, by_text[text]).exact) ++(hit ? hit_hits : miss_hits)[path];
  }
  ASSERT_EQ(responses, static_cast<int>(2 * ambiguous.size()));
  for (const char* path : {"dr", "nlg"}) {
    EXPECT_GT(hit_hits[path], miss_hits[path]) << path;
  }
}

TEST_F(CliTest, BenchFidWritesCsvPlotAndFits) {
  BenchArgs b;
  b.out = dir / "bench";
  b.ns = {1, 2, 4, 8};
  b.repeats = 1;
  ASSERT_EQ(cmd_bench_fid(b, log), kOk);
  const auto csv = read_text(b.out / "fid_scaling.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,fid_flops,concat_flops,fid_ms,concat_ms");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto svg = read_text(b.out / "fid_scaling.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(read_text(b.out / "fid_fit.txt").find("concat quadratic"), std::string::npos);
  b.ns = {1, 2};
  EXPECT_EQ(guarded([&] { return cmd_bench_fid(b, log); }, log), kUsage);
}

}  // namespace
}  // namespace augu
