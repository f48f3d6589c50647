#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "augu/errors.hpp"
#include "augu/graph.hpp"
#include "augu/ops.hpp"
#include "augu/rng.hpp"
#include "augu/segment.hpp"

namespace augu {

struct ModelConfig {
  int num_encoder_layers = 4;
  int num_decoder_layers = 4;
  int hidden_size = 64;
  int dense_size = 32;
  int vocab_size = 512;
  int num_heads = 4;
  int ffn_size = 128;
  /// Per SegmentKind, marker token included for contexts. The query length
  /// is also the number of non-autoregressive output slots.
  std::array<int, kNumSegmentKinds> max_len = {6, 8, 12, 8, 12};
  /// Shares the LM head with the token embedding table.
  bool tie_lm_head = true;

  int max_len_of(SegmentKind k) const { return max_len[static_cast<std::size_t>(k)]; }
  int max_positions() const {
    int m = 0;
    for (int l : max_len) m = std::max(m, l);
    return m;
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (num_encoder_layers < 0 || num_decoder_layers < 1) fail("layer counts");
    if (hidden_size < 1 || dense_size < 1 || ffn_size < 1) fail("sizes must be positive");
    if (num_heads < 1 || hidden_size % num_heads != 0) fail("hidden_size not divisible by num_heads");
    if (vocab_size < token::first_regular) fail("vocab_size below reserved ids");
    for (int l : max_len)
      if (l < 1) fail("segment lengths must be >= 1");
  }

  /// Flattened ints in checkpoint order.
  std::vector<std::int32_t> to_ints() const {
    std::vector<std::int32_t> v = {num_encoder_layers, num_decoder_layers, hidden_size, dense_size,
                                   vocab_size,         num_heads,          ffn_size};
    v.insert(v.end(), max_len.begin(), max_len.end());
    v.push_back(tie_lm_head ? 1 : 0);
    return v;
  }
  static ModelConfig from_ints(std::span<const std::int32_t> v) {
    if (v.size() != 13) throw DataError("config block has " + std::to_string(v.size()) + " ints, expected 13");
    ModelConfig c;
    c.num_encoder_layers = v[0];
    c.num_decoder_layers = v[1];
    c.hidden_size = v[2];
    c.dense_size = v[3];
    c.vocab_size = v[4];
    c.num_heads = v[5];
    c.ffn_size = v[6];
    for (std::size_t i = 0; i < kNumSegmentKinds; ++i) c.max_len[i] = v[7 + i];
    c.tie_lm_head = v[12] != 0;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;

  static ModelConfig desk() { return ModelConfig{}; }
  static ModelConfig paper() {
    ModelConfig c;
    c.hidden_size = 512;
    c.dense_size = 128;
    c.vocab_size = 250002;
    c.num_heads = 8;
    c.ffn_size = 2048;
    c.max_len = {16, 32, 64, 32, 64};
    c.tie_lm_head = false;
    return c;
  }
};

struct DecodeOptions {
  /// Test hook: restricts decoder self-attention to earlier positions.
  bool causal = false;
};

template <class T>
struct EncodedStates {
  std::vector<Var<T>> per_segment;
  Var<T> fused;
  /// One flag per fused row; nonzero rows are padding.
  std::vector<std::uint8_t> fused_pad;
};

template <class T>
struct ForwardResult {
  EncodedStates<T> encoded;
  Var<T> decoded;    // G, l0 x d
  Var<T> embedding;  // e(Q), 1 x d'
  Var<T> logits;     // l0 x V
  std::uint64_t encoder_flops = 0;
};

namespace detail {

// Parameter indices of one transformer block.
struct AttnIdx {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};
struct EncoderLayerIdx {
  std::size_t ln1_g, ln1_b;
  AttnIdx self;
  std::size_t ln2_g, ln2_b, w1, b1, w2, b2;
};
struct DecoderLayerIdx {
  std::size_t ln1_g, ln1_b;
  AttnIdx self;
  std::size_t ln2_g, ln2_b;
  AttnIdx cross;
  std::size_t ln3_g, ln3_b, w1, b1, w2, b2;
};
struct ModelLayout {
  std::size_t tok_emb, pos_emb, kind_emb;
  std::vector<EncoderLayerIdx> enc;
  std::size_t enc_ln_g, enc_ln_b;
  std::vector<DecoderLayerIdx> dec;
  std::size_t dec_ln_g, dec_ln_b;
  std::size_t w_k, w_v, pool_query, w_o;
};

}  // namespace detail

template <class T>
class Binding;

// Shared encoder / non-autoregressive decoder with a dense pooling head and a
// language-model head. Parameters are created in a fixed declaration order,
// which is also the checkpoint order.
template <class T>
class UnityModel {
 public:
  UnityModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    build(&rng);
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  const detail::ModelLayout& layout() const { return layout_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  Parameter<T>& param(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw ContractError("no parameter named " + name);
  }

  template <class U>
  UnityModel<U> cast() const {
    UnityModel<U> out(cfg_, typename UnityModel<U>::Uninitialized{});
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i].value = params_[i].value.template cast<U>();
    }
    return out;
  }

  Binding<T> bind(Graph<T>& g);
  Binding<T> bind(Graph<T>& g) const;

  struct Uninitialized {};
  UnityModel(const ModelConfig& cfg, Uninitialized) : cfg_(cfg) {
    cfg_.validate();
    build(nullptr);
  }

 private:
  template <class>
  friend class UnityModel;

  std::size_t add(std::string name, Shape shape, Rng* rng, double sd, T fill = T{0}) {
    Parameter<T> p{std::move(name), BasicTensor<T>(std::move(shape), fill), {}};
    if (rng && sd > 0) fill_normal(p.value, *rng, sd);
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  detail::AttnIdx add_attention(const std::string& pre, Rng* rng, double out_sd) {
    const std::size_t d = static_cast<std::size_t>(cfg_.hidden_size);
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    detail::AttnIdx a;
    a.wq = add(pre + ".wq", {d, d}, rng, sd);
    a.bq = add(pre + ".bq", {1, d}, rng, 0);
    a.wk = add(pre + ".wk", {d, d}, rng, sd);
    a.bk = add(pre + ".bk", {1, d}, rng, 0);
    a.wv = add(pre + ".wv", {d, d}, rng, sd);
    a.bv = add(pre + ".bv", {1, d}, rng, 0);
    a.wo = add(pre + ".wo", {d, d}, rng, out_sd);
    a.bo = add(pre + ".bo", {1, d}, rng, 0);
    return a;
  }

  void build(Rng* rng) {
    const std::size_t d = static_cast<std::size_t>(cfg_.hidden_size);
    const std::size_t dd = static_cast<std::size_t>(cfg_.dense_size);
    const std::size_t f = static_cast<std::size_t>(cfg_.ffn_size);
    const std::size_t v = static_cast<std::size_t>(cfg_.vocab_size);
    const double in_sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double ffn_sd = 1.0 / std::sqrt(static_cast<double>(f));
    const int depth = std::max(1, cfg_.num_encoder_layers + cfg_.num_decoder_layers);
    const double out_sd = in_sd / std::sqrt(2.0 * depth);
    auto& L = layout_;
    L.tok_emb = add("token_embeddings", {v, d}, rng, 0.1);
    L.pos_emb = add("positional_embeddings", {static_cast<std::size_t>(cfg_.max_positions()), d}, rng, 0.1);
    L.kind_emb = add("kind_embeddings", {kNumSegmentKinds, d}, rng, 0.1);
    for (int l = 0; l < cfg_.num_encoder_layers; ++l) {
      const std::string pre = "encoder." + std::to_string(l);
      detail::EncoderLayerIdx e;
      e.ln1_g = add(pre + ".ln1.gamma", {1, d}, rng, 0, T{1});
      e.ln1_b = add(pre + ".ln1.beta", {1, d}, rng, 0);
      e.self = add_attention(pre + ".self", rng, out_sd);
      e.ln2_g = add(pre + ".ln2.gamma", {1, d}, rng, 0, T{1});
      e.ln2_b = add(pre + ".ln2.beta", {1, d}, rng, 0);
      e.w1 = add(pre + ".ffn.w1", {d, f}, rng, in_sd);
      e.b1 = add(pre + ".ffn.b1", {1, f}, rng, 0);
      e.w2 = add(pre + ".ffn.w2", {f, d}, rng, ffn_sd / std::sqrt(2.0 * depth));
      e.b2 = add(pre + ".ffn.b2", {1, d}, rng, 0);
      L.enc.push_back(e);
    }
    L.enc_ln_g = add("encoder.ln.gamma", {1, d}, rng, 0, T{1});
    L.enc_ln_b = add("encoder.ln.beta", {1, d}, rng, 0);
    for (int l = 0; l < cfg_.num_decoder_layers; ++l) {
      const std::string pre = "decoder." + std::to_string(l);
      detail::DecoderLayerIdx e;
      e.ln1_g = add(pre + ".ln1.gamma", {1, d}, rng, 0, T{1});
      e.ln1_b = add(pre + ".ln1.beta", {1, d}, rng, 0);
      e.self = add_attention(pre + ".self", rng, out_sd);
      e.ln2_g = add(pre + ".ln2.gamma", {1, d}, rng, 0, T{1});
      e.ln2_b = add(pre + ".ln2.beta", {1, d}, rng, 0);
      e.cross = add_attention(pre + ".cross", rng, out_sd);
      e.ln3_g = add(pre + ".ln3.gamma", {1, d}, rng, 0, T{1});
      e.ln3_b = add(pre + ".ln3.beta", {1, d}, rng, 0);
      e.w1 = add(pre + ".ffn.w1", {d, f}, rng, in_sd);
      e.b1 = add(pre + ".ffn.b1", {1, f}, rng, 0);
      e.w2 = add(pre + ".ffn.w2", {f, d}, rng, ffn_sd / std::sqrt(2.0 * depth));
      e.b2 = add(pre + ".ffn.b2", {1, d}, rng, 0);
      L.dec.push_back(e);
    }
    L.dec_ln_g = add("decoder.ln.gamma", {1, d}, rng, 0, T{1});
    L.dec_ln_b = add("decoder.ln.beta", {1, d}, rng, 0);
    L.w_k = add("dense.w_k", {d, dd}, rng, in_sd);
    L.w_v = add("dense.w_v", {d, dd}, rng, in_sd);
    L.pool_query = add("dense.pool_query", {1, dd}, rng, 1.0 / std::sqrt(static_cast<double>(dd)));
    L.w_o = cfg_.tie_lm_head ? L.tok_emb : add("lm_head.w_o", {v, d}, rng, 0.1);
  }

  ModelConfig cfg_;
  std::vector<Parameter<T>> params_;
  detail::ModelLayout layout_;
};

// A model's parameters bound into one graph. All forward computations go
// through a Binding so that a training graph shares one node per parameter.
template <class T>
class Binding {
 public:
  Binding(Graph<T>& g, const ModelConfig& cfg, const detail::ModelLayout& layout, std::vector<Var<T>> params)
      : g_(&g), cfg_(&cfg), L_(&layout), p_(std::move(params)) {}

  Graph<T>& graph() const { return *g_; }
  const ModelConfig& config() const { return *cfg_; }
  Var<T> param(std::size_t idx) const { return p_[idx]; }

  /// Encodes one segment in isolation; the result depends on no other segment.
  Var<T> encode_segment(const TokenSegment& seg) {
    check_segment(seg);
    Var<T> x = embed_segment(seg);
    const auto mask = pad_mask(seg.ids);
    for (const auto& layer : L_->enc) x = encoder_block(layer, x, mask);
    return layernorm(x, p(L_->enc_ln_g), p(L_->enc_ln_b));
  }

  /// Row-wise concatenation, query states first.
  Var<T> fuse(std::span<const Var<T>> states) {
    if (states.empty()) throw ContractError("fuse needs at least the query states");
    return concat_rows(states);
  }

  EncodedStates<T> encode_bundle(const ContextBundle& bundle) {
    EncodedStates<T> es;
    es.per_segment.push_back(encode_segment(bundle.query));
    append_pad(es.fused_pad, bundle.query.ids);
    for (const auto& c : bundle.contexts) {
      es.per_segment.push_back(encode_segment(c));
      append_pad(es.fused_pad, c.ids);
    }
    es.fused = fuse(es.per_segment);
    return es;
  }

  /// Bidirectional NAR decoder: positions are the query tokens, cross
  /// attention reads every non-pad fused row.
  Var<T> decode(const TokenSegment& query, Var<T> fused, const std::vector<std::uint8_t>& fused_pad = {},
                const DecodeOptions& opt = {}) {
    if (query.ids.empty()) throw ContractError("decode: query length 0");
    check_segment(query);
    if (!fused_pad.empty() && fused_pad.size() != fused.rows()) {
      throw DimensionError("fused pad mask has " + std::to_string(fused_pad.size()) + " entries for " +
                           std::to_string(fused.rows()) + " rows");
    }
    Var<T> x = embed_segment(query);
    AttentionOptions self_opt{.heads = heads(), .mask = {}, .causal = opt.causal};
    AttentionOptions cross_opt{.heads = heads(), .mask = fused_pad, .causal = false};
    for (const auto& layer : L_->dec) {
      Var<T> h = layernorm(x, p(layer.ln1_g), p(layer.ln1_b));
      x = add(x, attention_block(layer.self, h, h, self_opt));
      h = layernorm(x, p(layer.ln2_g), p(layer.ln2_b));
      x = add(x, attention_block(layer.cross, h, fused, cross_opt));
      h = layernorm(x, p(layer.ln3_g), p(layer.ln3_b));
      x = add(x, ffn(layer.w1, layer.b1, layer.w2, layer.b2, h));
    }
    return layernorm(x, p(L_->dec_ln_g), p(L_->dec_ln_b));
  }

  /// e(Q): a single learned query attends over G W_K / G W_V.
  Var<T> dense_embed(Var<T> G) {
    if (G.rows() == 0) throw ContractError("dense_embed of empty G");
    Var<T> keys = matmul(G, p(L_->w_k));
    Var<T> values = matmul(G, p(L_->w_v));
    return attention(p(L_->pool_query), keys, values, {.heads = 1});
  }

  /// Per-position vocabulary logits W_O g_t.
  Var<T> token_logits(Var<T> G) {
    if (!lm_head_t_) lm_head_t_ = transpose(p(L_->w_o));
    return matmul(G, *lm_head_t_);
  }

  ForwardResult<T> forward(const ContextBundle& bundle, const DecodeOptions& opt = {}) {
    if (bundle.query.ids.empty()) throw ContractError("forward: empty query");
    ForwardResult<T> r;
    const auto f0 = g_->flops();
    r.encoded = encode_bundle(bundle);
    r.encoder_flops = g_->flops() - f0;
    r.decoded = decode(bundle.query, r.encoded.fused, r.encoded.fused_pad, opt);
    r.embedding = dense_embed(r.decoded);
    r.logits = token_logits(r.decoded);
    return r;
  }

  /// Reference encoder that runs self-attention over the concatenation of all
  /// segments at once; used to compare cost against per-segment encoding.
  Var<T> encode_concatenated(const ContextBundle& bundle) {
    std::vector<Var<T>> embs;
    std::vector<std::uint8_t> mask;
    embs.push_back(embed_segment(bundle.query));
    append_pad(mask, bundle.query.ids);
    for (const auto& c : bundle.contexts) {
      check_segment(c);
      embs.push_back(embed_segment(c));
      append_pad(mask, c.ids);
    }
    Var<T> x = concat_rows(std::span<const Var<T>>(embs));
    for (const auto& layer : L_->enc) x = encoder_block(layer, x, mask);
    return layernorm(x, p(L_->enc_ln_g), p(L_->enc_ln_b));
  }

 private:
  Var<T> p(std::size_t idx) const { return p_[idx]; }
  std::size_t heads() const { return static_cast<std::size_t>(cfg_->num_heads); }

  void check_segment(const TokenSegment& seg) const {
    const int limit = cfg_->max_len_of(seg.kind);
    if (static_cast<int>(seg.ids.size()) > limit) {
      throw ContractError(std::string(to_string(seg.kind)) + " segment of length " +
                          std::to_string(seg.ids.size()) + " exceeds max_len " + std::to_string(limit));
    }
    if (seg.ids.empty()) throw ContractError("empty segment");
    for (auto id : seg.ids) {
      if (id < 0 || id >= cfg_->vocab_size) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(cfg_->vocab_size));
      }
    }
  }

  static std::vector<std::uint8_t> pad_mask(const std::vector<std::int32_t>& ids) {
    std::vector<std::uint8_t> m(ids.size());
    bool any_pad = false, all_pad = true;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      m[i] = ids[i] == token::pad;
      any_pad = any_pad || m[i];
      all_pad = all_pad && m[i];
    }
    if (all_pad) throw ContractError("segment consists only of padding");
    if (!any_pad) m.clear();
    return m;
  }
  static void append_pad(std::vector<std::uint8_t>& m, const std::vector<std::int32_t>& ids) {
    for (auto id : ids) m.push_back(id == token::pad);
  }

  Var<T> embed_segment(const TokenSegment& seg) {
    const std::size_t l = seg.ids.size();
    std::vector<std::int32_t> pos(l);
    for (std::size_t i = 0; i < l; ++i) pos[i] = static_cast<std::int32_t>(i);
    const std::int32_t kind[] = {static_cast<std::int32_t>(seg.kind)};
    Var<T> x = embed(p(L_->tok_emb), std::span<const std::int32_t>(seg.ids));
    x = add(x, embed(p(L_->pos_emb), std::span<const std::int32_t>(pos)));
    return add(x, embed(p(L_->kind_emb), std::span<const std::int32_t>(kind)));
  }

  Var<T> linear(Var<T> x, std::size_t w, std::size_t b) { return add(matmul(x, p(w)), p(b)); }

  Var<T> attention_block(const detail::AttnIdx& a, Var<T> queries, Var<T> memory, const AttentionOptions& opt) {
    Var<T> q = linear(queries, a.wq, a.bq);
    Var<T> k = linear(memory, a.wk, a.bk);
    Var<T> v = linear(memory, a.wv, a.bv);
    return linear(attention(q, k, v, opt), a.wo, a.bo);
  }

  Var<T> ffn(std::size_t w1, std::size_t b1, std::size_t w2, std::size_t b2, Var<T> x) {
    return linear(gelu(linear(x, w1, b1)), w2, b2);
  }

  Var<T> encoder_block(const detail::EncoderLayerIdx& layer, Var<T> x, const std::vector<std::uint8_t>& mask) {
    AttentionOptions opt{.heads = heads(), .mask = mask, .causal = false};
    Var<T> h = layernorm(x, p(layer.ln1_g), p(layer.ln1_b));
    x = add(x, attention_block(layer.self, h, h, opt));
    h = layernorm(x, p(layer.ln2_g), p(layer.ln2_b));
    return add(x, ffn(layer.w1, layer.b1, layer.w2, layer.b2, h));
  }

  Graph<T>* g_;
  const ModelConfig* cfg_;
  const detail::ModelLayout* L_;
  std::vector<Var<T>> p_;
  std::optional<Var<T>> lm_head_t_;
};

template <class T>
Binding<T> UnityModel<T>::bind(Graph<T>& g) {
  std::vector<Var<T>> vars;
  vars.reserve(params_.size());
  for (auto& p : params_) vars.push_back(g.recording() ? g.param(p) : g.param(std::as_const(p)));
  return Binding<T>(g, cfg_, layout_, std::move(vars));
}

template <class T>
Binding<T> UnityModel<T>::bind(Graph<T>& g) const {
  std::vector<Var<T>> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(g.param(p));
  return Binding<T>(g, cfg_, layout_, std::move(vars));
}

}  // namespace augu

namespace augu {

/// Presents a token sequence (e.g. a keyword) as a query segment padded with
/// PAD to the configured number of output slots; longer input is truncated.
inline TokenSegment as_query_segment(std::span<const std::int32_t> ids, const ModelConfig& cfg) {
  TokenSegment s;
  s.kind = SegmentKind::query;
  const std::size_t slots = static_cast<std::size_t>(cfg.max_len_of(SegmentKind::query));
  s.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), slots)));
  s.ids.resize(slots, token::pad);
  return s;
}

}  // namespace augu
