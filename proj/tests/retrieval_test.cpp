#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "augu/retrieval.hpp"

namespace augu {
namespace {

using Seq = std::vector<std::int32_t>;
constexpr std::int32_t A = token::first_regular, B = A + 1, C = A + 2, D = A + 3;

TEST(KeywordTrie, SharedPrefixHasOneChild) {
  const std::vector<Seq> corpus = {{A, B}, {A, C}};
  auto t = build_trie(corpus);
  ASSERT_EQ(t.node(0).children.size(), 1u);
  const auto& a = t.node(t.node(0).children.at(A));
  EXPECT_EQ(a.keyword, -1);
  ASSERT_EQ(a.children.size(), 2u);
  EXPECT_EQ(t.node(a.children.at(B)).keyword, 0);
  EXPECT_EQ(t.node(a.children.at(C)).keyword, 1);
}

TEST(KeywordTrie, RejectsBadCorpora) {
  EXPECT_THROW(build_trie(std::vector<Seq>{}), CorpusError);
  EXPECT_THROW(build_trie(std::vector<Seq>{{A}, {}}), CorpusError);
  EXPECT_THROW(build_trie(std::vector<Seq>{{A, B}, {A, B}}), CorpusError);
  EXPECT_THROW(build_trie(std::vector<Seq>{{A, token::eos}}), CorpusError);
}

std::vector<Seq> random_corpus(Rng& rng, std::size_t n, int vocab, int max_len) {
  std::set<Seq> seen;
  std::vector<Seq> out;
  while (out.size() < n) {
    Seq s(static_cast<std::size_t>(rng.uniform_int(1, max_len)));
    for (auto& t : s) t = static_cast<std::int32_t>(token::first_regular + rng.uniform_int(0, vocab - 1));
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

TEST(KeywordTrie, MembershipMatchesSetOracle) {
  Rng rng(1);
  auto corpus = random_corpus(rng, 300, 12, 4);
  auto t = build_trie(corpus);
  std::set<Seq> oracle(corpus.begin(), corpus.end());
  for (std::size_t i = 0; i < corpus.size(); ++i) EXPECT_EQ(t.find(corpus[i]), static_cast<int>(i));
  int non_members = 0;
  while (non_members < 1000) {
    Seq s(static_cast<std::size_t>(rng.uniform_int(1, 5)));
    for (auto& x : s) x = static_cast<std::int32_t>(token::first_regular + rng.uniform_int(0, 11));
    if (oracle.contains(s)) continue;
    ++non_members;
    EXPECT_FALSE(t.contains(s));
  }
}

Tensor random_logits(Rng& rng, std::size_t positions, std::size_t vocab, double sd = 2.0) {
  Tensor t = Tensor::matrix(positions, vocab);
  fill_normal(t, rng, sd);
  return t;
}

TEST(BeamSearch, SingleKeywordScoreIsHandSum) {
  Rng rng(2);
  auto logits = random_logits(rng, 4, 16);
  const std::vector<Seq> corpus = {{B, D}};
  auto res = nar_beam_search(logits, build_trie(corpus), 3, 1);
  ASSERT_EQ(res.size(), 1u);
  auto lsm = [&](std::size_t t, std::int32_t tok) {
    double z = 0;
    for (std::size_t v = 0; v < 16; ++v) z += std::exp(static_cast<double>(logits(t, v)));
    return static_cast<double>(logits(t, static_cast<std::size_t>(tok))) - std::log(z);
  };
  EXPECT_NEAR(res[0].score, lsm(0, B) + lsm(1, D) + lsm(2, token::eos), 1e-9);
  EXPECT_EQ(res[0].path, RetrievalPath::nlg);
}

TEST(BeamSearch, FullLengthKeywordNeedsNoEos) {
  Tensor logits = Tensor::matrix(2, 16);
  const std::vector<Seq> corpus = {{A, B}};
  auto res = nar_beam_search(logits, build_trie(corpus), 1, 1);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_NEAR(res[0].score, 2 * -std::log(16.0), 1e-9);
}

TEST(BeamSearch, UniformLogitsRankShortestFirstThenById) {
  Tensor logits = Tensor::matrix(5, 20);
  const std::vector<Seq> corpus = {{A, B, C}, {D}, {A, B}, {C}, {B, A, D, C}, {A}};
  auto res = nar_beam_search(logits, build_trie(corpus), 10, 6);
  // enumerate-all oracle: length-l keyword scores (l + 1) log(1/V) when l < 5
  std::vector<int> expect = {1, 3, 5, 2, 0, 4};
  ASSERT_EQ(res.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(res[i].keyword_id, expect[i]);
}

TEST(BeamSearch, KeywordsLongerThanPositionsAreUnreachable) {
  Tensor logits = Tensor::matrix(2, 16);
  const std::vector<Seq> corpus = {{A, B, C}};
  EXPECT_TRUE(nar_beam_search(logits, build_trie(corpus), 4, 1).empty());
  EXPECT_THROW(nar_beam_search(logits, build_trie(corpus), 1, 2), ContractError);
  EXPECT_THROW(nar_beam_search(logits, build_trie(corpus), 1, 0), ContractError);
}

TEST(BeamSearch, FullWidthEqualsExhaustiveScoring) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto corpus = random_corpus(rng, 50, 10, 5);
    auto trie = build_trie(corpus);
    auto logits = random_logits(rng, 5, 20);
    auto res = nar_beam_search(logits, trie, 50, 50);
    std::vector<RetrievalResult> oracle;
    for (std::size_t k = 0; k < corpus.size(); ++k) {
      oracle.push_back({static_cast<int>(k), keyword_log_prob(logits, std::span<const std::int32_t>(corpus[k])), RetrievalPath::nlg});
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
      return a.score != b.score ? a.score > b.score : a.keyword_id < b.keyword_id;
    });
    ASSERT_EQ(res.size(), oracle.size());
    for (std::size_t i = 0; i < res.size(); ++i) {
      EXPECT_EQ(res[i].keyword_id, oracle[i].keyword_id);
      EXPECT_NEAR(res[i].score, oracle[i].score, 1e-9);
    }
  }
}

TEST(BeamSearch, OutputsAreAlwaysCorpusMembersAndSorted) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto corpus = random_corpus(rng, static_cast<std::size_t>(rng.uniform_int(1, 80)), 8, 4);
    auto trie = build_trie(corpus);
    const int k = static_cast<int>(rng.uniform_int(1, 10));
    auto res = nar_beam_search(random_logits(rng, 4, 20), trie, k + static_cast<int>(rng.uniform_int(0, 5)), k);
    for (std::size_t i = 0; i < res.size(); ++i) {
      ASSERT_GE(res[i].keyword_id, 0);
      EXPECT_EQ(trie.find(corpus[static_cast<std::size_t>(res[i].keyword_id)]), res[i].keyword_id);
      if (i) {
        EXPECT_GE(res[i - 1].score, res[i].score);
      }
    }
  }
}

DenseIndex random_index(Rng& rng, std::size_t n, std::size_t d) {
  DenseIndex idx;
  idx.embeddings = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(d);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    auto u = normalized<float>(v);
    std::copy(u.begin(), u.end(), idx.embeddings.row(i).begin());
    idx.keyword_ids.push_back(static_cast<int>(i));
  }
  return idx;
}

TEST(DenseTopk, SelfQueryRanksFirstWithScoreOne) {
  Rng rng(6);
  auto idx = random_index(rng, 100, 8);
  auto res = dense_topk(idx, idx.embeddings.row(37), 3);
  EXPECT_EQ(res[0].keyword_id, 37);
  EXPECT_NEAR(res[0].score, 1.0, 1e-6);
  EXPECT_EQ(res[0].path, RetrievalPath::dr);
}

TEST(DenseTopk, MatchesBruteForceSort) {
  Rng rng(7);
  for (std::size_t n : {1u, 10u, 500u, 10000u}) {
    auto idx = random_index(rng, n, 16);
    std::vector<float> q(16);
    for (auto& x : q) x = static_cast<float>(rng.normal());
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n)));
    auto res = dense_topk(idx, q, k);
    auto qn = normalized<float>(q);
    std::vector<std::pair<double, int>> oracle;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 16; ++j) s += static_cast<double>(idx.embeddings(i, j)) * qn[j];
      oracle.push_back({-s, static_cast<int>(i)});
    }
    std::sort(oracle.begin(), oracle.end());
    ASSERT_EQ(res.size(), k);
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_EQ(res[i].keyword_id, oracle[i].second);
      EXPECT_GE(res[i].score, -1.0);
      EXPECT_LE(res[i].score, 1.0);
    }
  }
}

TEST(DenseTopk, NegatedQueryReversesOrder) {
  Rng rng(8);
  auto idx = random_index(rng, 40, 6);
  std::vector<float> q(6), neg(6);
  for (std::size_t j = 0; j < 6; ++j) q[j] = static_cast<float>(rng.normal()), neg[j] = -q[j];
  auto a = dense_topk(idx, q, 40), b = dense_topk(idx, neg, 40);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(a[i].keyword_id, b[39 - i].keyword_id);
}

TEST(DenseTopk, Errors) {
  Rng rng(9);
  auto idx = random_index(rng, 5, 4);
  std::vector<float> q = {1, 0, 0, 0};
  EXPECT_THROW(dense_topk(idx, q, 6), ContractError);
  EXPECT_THROW(dense_topk(idx, std::vector<float>{1, 0}, 1), DimensionError);
  EXPECT_THROW(dense_topk(idx, std::vector<float>(4, 0.0f), 1), NumericError);
  EXPECT_TRUE(dense_topk(DenseIndex{}, std::vector<float>{}, 0).empty());
}

ModelConfig tiny() {
  ModelConfig c;
  c.num_encoder_layers = 1;
  c.num_decoder_layers = 1;
  c.hidden_size = 8;
  c.dense_size = 4;
  c.vocab_size = 24;
  c.num_heads = 2;
  c.ffn_size = 8;
  c.max_len = {4, 4, 4, 4, 4};
  return c;
}

TEST(EmbedCorpus, UnitRowsDeterministicAndEmpty) {
  UnityModel<float> m(tiny(), 3);
  const std::vector<Seq> corpus = {{A}, {A, B}, {C, D, B}};
  auto a = embed_corpus(m, corpus);
  auto b = embed_corpus(m, corpus);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    double n = 0;
    for (auto x : a.embeddings.row(i)) n += static_cast<double>(x) * x;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-5);
  }
  EXPECT_EQ(embed_corpus(m, std::vector<Seq>{}).size(), 0u);
}

TEST(IndexFile, RoundTripAndCorruption) {
  Rng rng(10);
  auto idx = random_index(rng, 20, 5);
  const auto path = std::filesystem::temp_directory_path() / "augu_index_test.bin";
  save_index(path.string(), idx);
  EXPECT_EQ(load_index(path.string()), idx);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    f.put('\x7f');
  }
  EXPECT_THROW(load_index(path.string()), DataError);
  std::filesystem::remove(path);
}

TEST(CorpusFile, LineNumberIsKeywordId) {
  const auto path = std::filesystem::temp_directory_path() / "augu_corpus_test.txt";
  save_corpus(path.string(), {"fishing reels", "cheap rods", "lake"});
  auto back = load_corpus(path.string());
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1], "cheap rods");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace augu
