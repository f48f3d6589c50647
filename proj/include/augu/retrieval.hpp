#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "augu/binary_io.hpp"
#include "augu/errors.hpp"
#include "augu/model.hpp"
#include "augu/segment.hpp"
#include "augu/tokenizer.hpp"

namespace augu {

enum class RetrievalPath : std::uint8_t { nlg, dr };

struct RetrievalResult {
  int keyword_id = 0;
  double score = 0;
  RetrievalPath path = RetrievalPath::nlg;

  bool operator==(const RetrievalResult&) const = default;
};

// Prefix tree over keyword token sequences. Node 0 is the root; a node is
// terminal when some keyword ends there.
class KeywordTrie {
 public:
  struct Node {
    std::map<std::int32_t, int> children;
    int keyword = -1;
    int depth = 0;
  };

  static KeywordTrie build(std::span<const std::vector<std::int32_t>> corpus) {
    if (corpus.empty()) throw CorpusError("keyword corpus is empty");
    KeywordTrie t;
    t.nodes_.emplace_back();
    for (std::size_t k = 0; k < corpus.size(); ++k) {
      const auto& seq = corpus[k];
      if (seq.empty()) throw CorpusError("keyword " + std::to_string(k) + " has no tokens");
      int cur = 0;
      for (auto tok : seq) {
        if (tok < token::first_regular) {
          throw CorpusError("keyword " + std::to_string(k) + " contains reserved token " + std::to_string(tok));
        }
        auto it = t.nodes_[static_cast<std::size_t>(cur)].children.find(tok);
        if (it == t.nodes_[static_cast<std::size_t>(cur)].children.end()) {
          const int next = static_cast<int>(t.nodes_.size());
          const int depth = t.nodes_[static_cast<std::size_t>(cur)].depth + 1;
          t.nodes_[static_cast<std::size_t>(cur)].children.emplace(tok, next);
          t.nodes_.push_back({{}, -1, depth});
          cur = next;
        } else {
          cur = it->second;
        }
      }
      auto& term = t.nodes_[static_cast<std::size_t>(cur)].keyword;
      if (term >= 0) {
        throw CorpusError("keywords " + std::to_string(term) + " and " + std::to_string(k) + " have identical tokens");
      }
      term = static_cast<int>(k);
    }
    t.num_keywords_ = corpus.size();
    return t;
  }

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  std::size_t num_keywords() const { return num_keywords_; }

  /// Keyword id whose tokens are exactly `seq`, or -1.
  int find(std::span<const std::int32_t> seq) const {
    int cur = 0;
    for (auto tok : seq) {
      const auto& ch = nodes_[static_cast<std::size_t>(cur)].children;
      auto it = ch.find(tok);
      if (it == ch.end()) return -1;
      cur = it->second;
    }
    return nodes_[static_cast<std::size_t>(cur)].keyword;
  }
  bool contains(std::span<const std::int32_t> seq) const { return find(seq) >= 0; }

 private:
  std::vector<Node> nodes_;
  std::size_t num_keywords_ = 0;
};

inline KeywordTrie build_trie(std::span<const std::vector<std::int32_t>> corpus) { return KeywordTrie::build(corpus); }

namespace detail {

template <class T>
std::vector<std::vector<double>> log_softmax_rows(const BasicTensor<T>& logits) {
  std::vector<std::vector<double>> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    double mx = -INFINITY;
    for (auto v : row) mx = std::max(mx, static_cast<double>(v));
    double z = 0;
    for (auto v : row) z += std::exp(static_cast<double>(v) - mx);
    const double lz = mx + std::log(z);
    out[r].reserve(row.size());
    for (auto v : row) out[r].push_back(static_cast<double>(v) - lz);
  }
  return out;
}

inline void sort_results(std::vector<RetrievalResult>& rs) {
  std::sort(rs.begin(), rs.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.keyword_id < b.keyword_id;
  });
}

}  // namespace detail

/// Trie-constrained beam search over independent per-position token
/// distributions. Position t scores the t-th keyword token; a keyword shorter
/// than the number of positions completes with log P(EOS) at the position
/// after its last token, one of full length completes with no EOS term.
template <class T>
std::vector<RetrievalResult> nar_beam_search(const BasicTensor<T>& logits, const KeywordTrie& trie, int beam, int top_k) {
  if (top_k < 1 || beam < top_k) throw ContractError("nar_beam_search needs beam >= top_k >= 1");
  if (logits.rows() == 0) throw ContractError("nar_beam_search on empty logits");
  const auto lp = detail::log_softmax_rows(logits);
  const std::size_t positions = lp.size();
  const std::size_t vocab = logits.cols();

  struct Live {
    int node;
    double score;
  };
  std::vector<Live> live{{0, 0.0}};
  std::vector<RetrievalResult> done;
  for (std::size_t t = 0; t <= positions && !live.empty(); ++t) {
    for (const auto& b : live) {
      const int kw = trie.node(b.node).keyword;
      if (kw < 0) continue;
      const double eos = t < positions ? lp[t][static_cast<std::size_t>(token::eos)] : 0.0;
      done.push_back({kw, b.score + eos, RetrievalPath::nlg});
    }
    if (t == positions) break;
    std::vector<Live> next;
    for (const auto& b : live) {
      for (const auto& [tok, child] : trie.node(b.node).children) {
        if (static_cast<std::size_t>(tok) >= vocab) continue;
        next.push_back({child, b.score + lp[t][static_cast<std::size_t>(tok)]});
      }
    }
    std::sort(next.begin(), next.end(), [](const Live& a, const Live& b) {
      return a.score != b.score ? a.score > b.score : a.node < b.node;
    });
    if (next.size() > static_cast<std::size_t>(beam)) next.resize(static_cast<std::size_t>(beam));
    live = std::move(next);
  }
  detail::sort_results(done);
  if (done.size() > static_cast<std::size_t>(top_k)) done.resize(static_cast<std::size_t>(top_k));
  return done;
}

/// Score that nar_beam_search assigns to one complete keyword.
template <class T>
double keyword_log_prob(const BasicTensor<T>& logits, std::span<const std::int32_t> kw) {
  const auto lp = detail::log_softmax_rows(logits);
  if (kw.size() > lp.size()) return -INFINITY;
  double s = 0;
  for (std::size_t t = 0; t < kw.size(); ++t) s += lp[t][static_cast<std::size_t>(kw[t])];
  if (kw.size() < lp.size()) s += lp[kw.size()][static_cast<std::size_t>(token::eos)];
  return s;
}

// Exact cosine index: row i is the unit-normalized embedding of
// keyword_ids[i].
struct DenseIndex {
  std::vector<int> keyword_ids;
  Tensor embeddings;

  std::size_t size() const { return keyword_ids.size(); }
  std::size_t dim() const { return embeddings.empty() ? 0 : embeddings.cols(); }
  bool operator==(const DenseIndex&) const = default;
};

template <class T>
std::vector<T> normalized(std::span<const T> v) {
  double n = 0;
  for (auto x : v) n += static_cast<double>(x) * static_cast<double>(x);
  n = std::sqrt(n);
  if (n == 0 || !std::isfinite(n)) throw NumericError("cannot normalize a zero or non-finite embedding");
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(static_cast<double>(v[i]) / n);
  return out;
}

/// Context-free embedding e(K) of one token sequence.
template <class T>
std::vector<T> embed_keyword(const UnityModel<T>& model, std::span<const std::int32_t> ids) {
  Graph<T> g(false);
  auto net = model.bind(g);
  ContextBundle b{as_query_segment(ids, model.config()), {}};
  const auto& e = net.forward(b).embedding.value();
  return {e.data().begin(), e.data().end()};
}

template <class T>
DenseIndex embed_corpus(const UnityModel<T>& model, std::span<const std::vector<std::int32_t>> corpus) {
  DenseIndex idx;
  const std::size_t d = static_cast<std::size_t>(model.config().dense_size);
  idx.embeddings = Tensor::matrix(corpus.size(), d);
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto e = embed_keyword(model, corpus[k]);
    const auto n = normalized<T>(e);
    for (std::size_t j = 0; j < d; ++j) idx.embeddings(k, j) = static_cast<float>(n[j]);
    idx.keyword_ids.push_back(static_cast<int>(k));
  }
  return idx;
}

/// Exact top-k by cosine; ties by keyword id.
inline std::vector<RetrievalResult> dense_topk(const DenseIndex& index, std::span<const float> query_emb, std::size_t k) {
  if (k > index.size()) {
    throw ContractError("dense_topk: k=" + std::to_string(k) + " exceeds corpus size " + std::to_string(index.size()));
  }
  if (index.size() > 0 && query_emb.size() != index.dim()) {
    throw DimensionError("query embedding has " + std::to_string(query_emb.size()) + " dims, index has " +
                         std::to_string(index.dim()));
  }
  if (k == 0) return {};
  const auto q = normalized<float>(query_emb);
  std::vector<RetrievalResult> all(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    double s = 0;
    auto row = index.embeddings.row(i);
    for (std::size_t j = 0; j < q.size(); ++j) s += static_cast<double>(row[j]) * static_cast<double>(q[j]);
    all[i] = {index.keyword_ids[i], std::clamp(s, -1.0, 1.0), RetrievalPath::dr};
  }
  auto cmp = [](const RetrievalResult& a, const RetrievalResult& b) {
    return a.score != b.score ? a.score > b.score : a.keyword_id < b.keyword_id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), cmp);
  all.resize(k);
  return all;
}

// ---- files ----

/// One keyword per line; the line number (from 0) is the keyword id.
inline std::vector<std::string> load_corpus(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(f, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

inline void save_corpus(const std::string& path, const std::vector<std::string>& keywords) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  for (const auto& k : keywords) {
    if (k.find('\n') != std::string::npos) throw CorpusError("keyword contains a newline");
    f << k << '\n';
  }
}

inline std::vector<std::vector<std::int32_t>> tokenize_corpus(const std::vector<std::string>& keywords, const Tokenizer& tok) {
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(keywords.size());
  for (const auto& k : keywords) out.push_back(tok.encode(k));
  return out;
}

inline constexpr char kIndexMagic[] = "AUGIDX1";

/// Layout: magic, u32 dim, u32 count, count x dim f32 rows, CRC32. Row i
/// belongs to keyword i, so only position-indexed indexes can be saved.
inline void save_index(const std::string& path, const DenseIndex& idx) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx.keyword_ids[i] != static_cast<int>(i)) throw ContractError("index rows must be in keyword id order to save");
  }
  io::Writer w;
  w.magic(kIndexMagic);
  w.pod(static_cast<std::uint32_t>(idx.dim()));
  w.pod(static_cast<std::uint32_t>(idx.size()));
  w.array(std::span<const float>(idx.embeddings.data()));
  w.finish(path);
}

inline DenseIndex load_index(const std::string& path) {
  io::Reader r(path);
  r.expect_magic(kIndexMagic);
  const auto d = r.pod<std::uint32_t>();
  const auto n = r.pod<std::uint32_t>();
  DenseIndex idx;
  for (std::uint32_t i = 0; i < n; ++i) idx.keyword_ids.push_back(static_cast<int>(i));
  idx.embeddings = Tensor::matrix(n, d);
  r.array(idx.embeddings.data());
  r.expect_end();
  return idx;
}

}  // namespace augu
