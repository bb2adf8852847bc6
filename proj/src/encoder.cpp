#include "ctrfusion/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "ctrfusion/errors.hpp"

namespace ctrfusion {

std::size_t TokenSeq::unmasked() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

TokenSeq encode_pair_ids(std::vector<int> query, std::vector<int> ad, std::size_t length) {
  if (length < 3) throw ConfigError("encode_pair: sequence length must be at least 3");
  const std::size_t budget = length - 3;
  while (query.size() + ad.size() > budget) {
    if (ad.size() >= query.size()) {
      ad.pop_back();
    } else {
      query.pop_back();
    }
  }
  TokenSeq s;
  s.ids.reserve(length);
  s.ids.push_back(kClsId);
  s.segments.push_back(static_cast<int>(Segment::kQuery));
  for (int id : query) {
    s.ids.push_back(id);
    s.segments.push_back(static_cast<int>(Segment::kQuery));
  }
  s.ids.push_back(kSepId);
  s.segments.push_back(static_cast<int>(Segment::kQuery));
  for (int id : ad) {
    s.ids.push_back(id);
    s.segments.push_back(static_cast<int>(Segment::kAd));
  }
  s.ids.push_back(kSepId);
  s.segments.push_back(static_cast<int>(Segment::kAd));
  s.mask.assign(s.ids.size(), 1);
  s.ids.resize(length, kPadId);
  s.segments.resize(length, static_cast<int>(Segment::kQuery));
  s.mask.resize(length, 0);
  return s;
}

TokenSeq encode_pair(const std::vector<std::string>& query, const std::vector<std::string>& ad, const Vocab& vocab,
                     std::size_t length) {
  return encode_pair_ids(vocab.encode(query), vocab.encode(ad), length);
}

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder: layer count must be positive");
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("encoder: hidden dim " + std::to_string(hidden) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (ffn == 0) throw ConfigError("encoder: ffn dim must be positive");
  if (seq_len < 3) throw ConfigError("encoder: sequence length must be at least 3");
  if (max_positions < seq_len) throw ConfigError("encoder: max_positions smaller than sequence length");
  if (vocab_size <= static_cast<std::size_t>(kFirstContentId)) throw ConfigError("encoder: vocabulary too small");
}

void TextEncoder::register_params(ParamStore& store, const EncoderConfig& c) {
  c.validate();
  const std::size_t d = c.hidden;
  store.add("encoder.embed.token", {c.vocab_size, d}, Init::kUniformFanIn, d, true);
  store.add("encoder.embed.position", {c.max_positions, d}, Init::kUniformFanIn, d, true);
  store.add("encoder.embed.segment", {kSegmentCount, d}, Init::kUniformFanIn, d, true);
  LayerNormParams::add(store, "encoder.embed.ln", d);
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    Dense::add(store, p + ".attn.q", d, d);
    Dense::add(store, p + ".attn.k", d, d);
    Dense::add(store, p + ".attn.v", d, d);
    Dense::add(store, p + ".attn.o", d, d);
    LayerNormParams::add(store, p + ".ln1", d);
    FeedForward::add(store, p + ".ffn", d, c.ffn, true);
    LayerNormParams::add(store, p + ".ln2", d);
  }
  Dense::add(store, "encoder.pooler", d, d);
  store.add("encoder.mlm.bias", {c.vocab_size}, Init::kZeros);
}

TextEncoder::TextEncoder(const EncoderConfig& c, const ParamStore& store) : config_(c) {
  c.validate();
  const std::size_t d = c.hidden;
  auto table = [&](const char* name, std::size_t rows) {
    const std::size_t i = store.index(name);
    if (store.tensor(i).shape() != std::vector<std::size_t>{rows, d}) {
      throw DimensionError(std::string("encoder: ") + name + " has shape " + shape_string(store.tensor(i).shape()) +
                           ", config expects " + shape_string({rows, d}));
    }
    return i;
  };
  token_ = table("encoder.embed.token", c.vocab_size);
  position_ = table("encoder.embed.position", c.max_positions);
  segment_ = table("encoder.embed.segment", kSegmentCount);
  embed_ln_ = LayerNormParams::bind(store, "encoder.embed.ln", d);
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    layers_.push_back({Dense::bind(store, p + ".attn.q", d, d), Dense::bind(store, p + ".attn.k", d, d),
                       Dense::bind(store, p + ".attn.v", d, d), Dense::bind(store, p + ".attn.o", d, d),
                       LayerNormParams::bind(store, p + ".ln1", d), LayerNormParams::bind(store, p + ".ln2", d),
                       FeedForward::bind(store, p + ".ffn", d, c.ffn, true)});
  }
  pooler_ = Dense::bind(store, "encoder.pooler", d, d);
  mlm_bias_ = store.index("encoder.mlm.bias");
  if (store.tensor(mlm_bias_).size() != c.vocab_size) throw DimensionError("encoder: mlm bias/vocab size mismatch");
}

Var TextEncoder::embed(Graph& g, const TokenSeq& seq) const {
  const std::size_t l = seq.length();
  if (l == 0 || l > config_.max_positions) {
    throw DimensionError("encoder: sequence length " + std::to_string(l) + " outside [1, " +
                         std::to_string(config_.max_positions) + "]");
  }
  if (seq.mask.size() != l || seq.segments.size() != l) throw DimensionError("encoder: ragged token sequence");
  std::vector<int> positions(l);
  for (std::size_t j = 0; j < l; ++j) positions[j] = static_cast<int>(j);
  Var e = g.add(g.embedding(token_, seq.ids), g.embedding(position_, positions));
  e = g.add(e, g.embedding(segment_, seq.segments));
  return embed_ln_.apply(g, e);
}

Var TextEncoder::layer(Graph& g, std::size_t index, Var y, const Mask& mask, std::vector<Var>* attention) const {
  const LayerParams& p = layers_.at(index);
  const std::size_t d = config_.hidden;
  const std::size_t dh = d / config_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = p.q.apply(g, y);
  Var k = p.k.apply(g, y);
  Var v = p.v.apply(g, y);
  std::vector<Var> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    Var qh = g.slice_rows(q, h * dh, dh);
    Var kh = g.slice_rows(k, h * dh, dh);
    Var vh = g.slice_rows(v, h * dh, dh);
    // scores[i][j]: query position i against key position j
    Var scores = g.scale(g.matmul(qh, kh, true, false), scale);
    Var weights = g.masked_softmax(scores, mask);
    if (attention) attention->push_back(weights);
    heads.push_back(g.matmul(vh, weights, false, true));
  }
  Var ctx = config_.heads == 1 ? heads[0] : g.concat_rows(heads);
  Var y1 = p.ln1.apply(g, g.add(y, p.o.apply(g, ctx)));
  return p.ln2.apply(g, g.add(y1, p.ffn.apply(g, y1)));
}

Var TextEncoder::pool(Graph& g, Var top) const {
  Var cls = g.select_col(top, 0);
  return config_.tanh_pooler ? g.tanh(pooler_.apply(g, cls)) : cls;
}

EncoderOutput TextEncoder::forward(Graph& g, const TokenSeq& seq, std::vector<Var>* attention) const {
  EncoderOutput out;
  out.hidden.push_back(embed(g, seq));
  for (std::size_t i = 0; i < config_.layers; ++i) {
    out.hidden.push_back(layer(g, i, out.hidden.back(), seq.mask, attention));
  }
  out.pooled = pool(g, out.hidden.back());
  return out;
}

Var TextEncoder::mlm_logits(Graph& g, Var column) const {
  return g.add_bias(g.matmul(g.param(token_), column), g.param(mlm_bias_));
}

void TextOnlyHead::register_params(ParamStore& store, const EncoderConfig& c) {
  MlpHead::add(store, "text_head", c.hidden, {c.hidden});
}

TextOnlyHead::TextOnlyHead(const EncoderConfig& c, const ParamStore& store)
    : head_(MlpHead::bind(store, "text_head", c.hidden, {c.hidden})) {}

}  // namespace ctrfusion
