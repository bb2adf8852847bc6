#include "ctrfusion/models.hpp"

#include "ctrfusion/errors.hpp"

namespace ctrfusion {
namespace {

struct NameEntry {
  FrameworkKind kind;
  const char* name;
};

constexpr NameEntry kNames[] = {
    {FrameworkKind::kTextOnly, "textonly"},
    {FrameworkKind::kNumBert, "numbert"},
    {FrameworkKind::kNumBertUniAttention, "numbert-uniattention"},
    {FrameworkKind::kNumBertUniAttentionReduced, "numbert-uniattention-reduced"},
    {FrameworkKind::kShallow1, "shallow1"},
    {FrameworkKind::kShallowN, "shallown"},
    {FrameworkKind::kCascading, "cascading"},
    {FrameworkKind::kBert4Ctr, "bert4ctr"},
};

std::size_t joint_width(const ModelConfig& c) { return c.reduction.reduced_dim + c.encoder.hidden; }

void add_head(ParamStore& store, std::size_t in) { MlpHead::add(store, "head", in, {in}); }
MlpHead bind_head(const ParamStore& store, std::size_t in) { return MlpHead::bind(store, "head", in, {in}); }

std::size_t cascade_width(const ModelConfig& c) { return c.reduction.reduced_dim + 1; }

}  // namespace

std::string framework_name(FrameworkKind kind) {
  for (const NameEntry& e : kNames) {
    if (e.kind == kind) return e.name;
  }
  throw Error("unknown framework kind");
}

FrameworkKind parse_framework(const std::string& name) {
  for (const NameEntry& e : kNames) {
    if (name == e.name) return e.kind;
  }
  std::string known;
  for (const NameEntry& e : kNames) known += std::string(known.empty() ? "" : ", ") + e.name;
  throw ConfigError("unknown framework '" + name + "' (expected one of: " + known + ")");
}

FusionConfig ModelConfig::fusion() const {
  FusionConfig f;
  f.x_dim = reduction.reduced_dim;
  f.y_dim = encoder.hidden;
  f.y_len = encoder.seq_len;
  f.score_dim = score_dim;
  f.layers = encoder.layers;
  f.ffn = fusion_ffn;
  return f;
}

void ModelConfig::validate() const {
  encoder.validate();
  fusion().validate();
  if (reduction.sub_dim == 0 || reduction.reduced_dim == 0) throw ConfigError("reduction dims must be positive");
  if (numbert_length != 0 && numbert_length > encoder.max_positions) {
    throw ConfigError("numbert_length exceeds encoder max_positions");
  }
}

std::vector<Example> prepare_examples(FrameworkKind kind, const std::vector<FeaturizedRecord>& records,
                                      const Vocab& vocab, const ModelConfig& config,
                                      const std::vector<double>* text_scores, std::size_t* truncated) {
  if (kind == FrameworkKind::kCascading && (!text_scores || text_scores->size() != records.size())) {
    throw Error("cascading: stage-1 scores missing or not aligned with the records");
  }
  std::vector<Example> out(records.size());
  std::size_t cut = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Example& ex = out[i];
    ex.record = &records[i];
    if (kind == FrameworkKind::kNumBert) {
      std::size_t dropped = 0;
      ex.numbert = numbert_assemble(records[i].tokens, numbert_values(records[i]), vocab, config.numbert_length,
                                    &dropped);
      if (dropped) ++cut;
    } else if (kind == FrameworkKind::kNumBertUniAttention) {
      const std::vector<double> values = numbert_values(records[i]);
      for (std::size_t f = 0; f < values.size(); ++f) {
        for (const std::string& t : numbert_transform(values[f])) {
          ex.number_ids.push_back(vocab.id(t));
          ex.number_slots.push_back(static_cast<int>(f));
        }
      }
    } else if (kind == FrameworkKind::kCascading) {
      ex.text_score = (*text_scores)[i];
    }
  }
  if (truncated) *truncated = cut;
  return out;
}

void register_framework(ParamStore& store, FrameworkKind kind, const ModelConfig& c, const FeatureSchema& schema) {
  c.validate();
  switch (kind) {
    case FrameworkKind::kTextOnly:
      TextEncoder::register_params(store, c.encoder);
      TextOnlyHead::register_params(store, c.encoder);
      return;
    case FrameworkKind::kNumBert:
      TextEncoder::register_params(store, c.encoder);
      add_head(store, c.encoder.hidden);
      return;
    case FrameworkKind::kNumBertUniAttention: {
      if (c.numeric_slots == 0) throw ConfigError("numbert-uniattention: numeric_slots must be positive");
      TextEncoder::register_params(store, c.encoder);
      FusionStack::register_params(store, c.fusion());
      const std::size_t dx = c.reduction.reduced_dim;
      store.add("numtok.embed", {c.encoder.vocab_size, dx}, Init::kUniformFanIn, dx, true);
      store.add("numtok.slot", {c.numeric_slots, dx}, Init::kUniformFanIn, dx, true);
      add_head(store, joint_width(c));
      return;
    }
    case FrameworkKind::kNumBertUniAttentionReduced:
    case FrameworkKind::kBert4Ctr:
      TextEncoder::register_params(store, c.encoder);
      FeatureReducer::register_params(store, schema, c.reduction);
      FusionStack::register_params(store, c.fusion());
      add_head(store, joint_width(c));
      return;
    case FrameworkKind::kShallow1:
    case FrameworkKind::kShallowN: {
      TextEncoder::register_params(store, c.encoder);
      FeatureReducer::register_params(store, schema, c.reduction);
      const std::size_t blocks = kind == FrameworkKind::kShallow1 ? 0 : c.encoder.layers;
      for (std::size_t i = 0; i < blocks; ++i) {
        const std::string p = "shallow.block" + std::to_string(i);
        FeedForward::add(store, p + ".ffn", c.reduction.reduced_dim, c.fusion_ffn, false);
        LayerNormParams::add(store, p + ".ln", c.reduction.reduced_dim);
      }
      add_head(store, joint_width(c));
      return;
    }
    case FrameworkKind::kCascading:
      FeatureReducer::register_params(store, schema, c.reduction);
      MlpHead::add(store, "cascade", cascade_width(c), {cascade_width(c), cascade_width(c)});
      return;
  }
}

std::unique_ptr<ClickModel> make_model(FrameworkKind kind, const ModelConfig& c, const FeatureSchema& schema,
                                       const ParamStore& store) {
  switch (kind) {
    case FrameworkKind::kTextOnly:
      return std::make_unique<TextOnlyModel>(c, store);
    case FrameworkKind::kNumBert:
      return std::make_unique<NumBertModel>(c, store);
    case FrameworkKind::kNumBertUniAttention:
      return std::make_unique<NumBertUniAttentionModel>(c, store);
    case FrameworkKind::kNumBertUniAttentionReduced:
    case FrameworkKind::kBert4Ctr:
      return std::make_unique<Bert4CtrModel>(c, schema, store, kind);
    case FrameworkKind::kShallow1:
      return std::make_unique<ShallowModel>(c, schema, store, 0);
    case FrameworkKind::kShallowN:
      return std::make_unique<ShallowModel>(c, schema, store, c.encoder.layers);
    case FrameworkKind::kCascading:
      return std::make_unique<CascadingModel>(c, schema, store);
  }
  throw Error("unknown framework kind");
}

TextOnlyModel::TextOnlyModel(const ModelConfig& c, const ParamStore& store)
    : encoder_(c.encoder, store), head_(MlpHead::bind(store, "text_head", c.encoder.hidden, {c.encoder.hidden})) {}

Var TextOnlyModel::probability(Graph& g, const Example& ex, std::span<const int>, bool training) const {
  EncoderOutput enc = encoder_.forward(g, ex.record->tokens);
  return head_.probability(g, enc.pooled, ex.record->position, training);
}

Var TextOnlyModel::score(Graph& g, const Example& ex) const {
  return head_.logit(g, encoder_.forward(g, ex.record->tokens).pooled);
}

NumBertModel::NumBertModel(const ModelConfig& c, const ParamStore& store)
    : encoder_(c.encoder, store), head_(bind_head(store, c.encoder.hidden)) {}

Var NumBertModel::probability(Graph& g, const Example& ex, std::span<const int>, bool training) const {
  if (ex.numbert.length() == 0) throw Error("numbert: example was not prepared for NumBERT");
  EncoderOutput enc = encoder_.forward(g, ex.numbert);
  return head_.probability(g, enc.pooled, ex.record->position, training);
}

NumBertUniAttentionModel::NumBertUniAttentionModel(const ModelConfig& c, const ParamStore& store)
    : encoder_(c.encoder, store),
      fusion_(c.fusion(), store),
      token_table_(store.index("numtok.embed")),
      slot_table_(store.index("numtok.slot")),
      head_(bind_head(store, joint_width(c))) {}

Var NumBertUniAttentionModel::probability(Graph& g, const Example& ex, std::span<const int>, bool training) const {
  if (ex.number_ids.empty()) throw Error("numbert-uniattention: example has no number tokens");
  const TokenSeq& seq = ex.record->tokens;
  std::vector<Var> xs;
  xs.reserve(ex.number_ids.size());
  for (std::size_t j = 0; j < ex.number_ids.size(); ++j) {
    xs.push_back(g.add(g.embedding_lookup(token_table_, ex.number_ids[j]),
                       g.embedding_lookup(slot_table_, ex.number_slots[j])));
  }
  Var y = encoder_.embed(g, seq);
  for (std::size_t i = 0; i < encoder_.config().layers; ++i) {
    for (Var& x : xs) x = fusion_.fuse(g, i, x, y, seq.mask);
    y = encoder_.layer(g, i, y, seq.mask);
  }
  Var gathered = g.mean_cols(g.concat_cols(xs));
  Var joint = g.concat_rows(gathered, encoder_.pool(g, y));
  return head_.probability(g, joint, ex.record->position, training);
}

Bert4CtrModel::Bert4CtrModel(const ModelConfig& c, const FeatureSchema& schema, const ParamStore& store,
                             FrameworkKind kind)
    : kind_(kind),
      encoder_(c.encoder, store),
      reducer_(schema, c.reduction, store),
      fusion_(c.fusion(), store),
      head_(bind_head(store, joint_width(c))) {}

Bert4CtrModel::Trace Bert4CtrModel::trace(Graph& g, const Example& ex, std::span<const int> sparse_ids,
                                          bool training) const {
  const FeaturizedRecord& r = *ex.record;
  Trace t;
  t.x.push_back(reducer_.embed_and_reduce(g, sparse_ids, r.dense_values));
  t.y.push_back(encoder_.embed(g, r.tokens));
  for (std::size_t i = 0; i < encoder_.config().layers; ++i) {
    auto [x, y] = fusion_.layer_forward(g, encoder_, i, t.x.back(), t.y.back(), r.tokens.mask);
    t.x.push_back(x);
    t.y.push_back(y);
  }
  t.pooled = encoder_.pool(g, t.y.back());
  t.prob = head_.probability(g, g.concat_rows(t.x.back(), t.pooled), r.position, training);
  return t;
}

Var Bert4CtrModel::probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const {
  return trace(g, ex, sparse_ids, training).prob;
}

ShallowModel::ShallowModel(const ModelConfig& c, const FeatureSchema& schema, const ParamStore& store,
                           std::size_t blocks)
    : blocks_(blocks),
      encoder_(c.encoder, store),
      reducer_(schema, c.reduction, store),
      head_(bind_head(store, joint_width(c))) {
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::string p = "shallow.block" + std::to_string(i);
    blocks_params_.emplace_back(FeedForward::bind(store, p + ".ffn", c.reduction.reduced_dim, c.fusion_ffn, false),
                                LayerNormParams::bind(store, p + ".ln", c.reduction.reduced_dim));
  }
}

Var ShallowModel::nontextual(Graph& g, std::span<const int> sparse_ids, std::span<const double> dense) const {
  Var x = reducer_.embed_and_reduce(g, sparse_ids, dense);
  for (const auto& [ffn, ln] : blocks_params_) x = ln.apply(g, g.add(x, ffn.apply(g, x)));
  return x;
}

Var ShallowModel::probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const {
  const FeaturizedRecord& r = *ex.record;
  Var x = nontextual(g, sparse_ids, r.dense_values);
  Var pooled = encoder_.forward(g, r.tokens).pooled;
  return head_.probability(g, g.concat_rows(x, pooled), r.position, training);
}

CascadingModel::CascadingModel(const ModelConfig& c, const FeatureSchema& schema, const ParamStore& store)
    : reducer_(schema, c.reduction, store),
      head_(MlpHead::bind(store, "cascade", cascade_width(c), {cascade_width(c), cascade_width(c)})) {}

Var CascadingModel::probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const {
  const FeaturizedRecord& r = *ex.record;
  Var x = reducer_.embed_and_reduce(g, sparse_ids, r.dense_values);
  Var joint = g.concat_rows(x, g.constant(1, 1, {ex.text_score}));
  return head_.probability(g, joint, r.position, training);
}

}  // namespace ctrfusion
