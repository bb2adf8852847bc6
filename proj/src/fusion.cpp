#include "ctrfusion/fusion.hpp"

#include "ctrfusion/errors.hpp"

namespace ctrfusion {

void FusionConfig::validate() const {
  if (x_dim == 0 || y_dim == 0 || y_len == 0 || ffn == 0) throw ConfigError("fusion: dimensions must be positive");
  if (score_dim == 0) throw ConfigError("fusion: d_a must be positive");
  if (layers == 0) throw ConfigError("fusion: layer count must be positive");
}

Var uni_attention(Graph& g, Var x, Var y, const Mask& mask, const UniAttentionParams& p, Var* weights) {
  const std::size_t len = g.cols(y);
  if (g.cols(x) != 1) throw DimensionError("uni_attention: x must be a single column");
  if (mask.size() != len) throw DimensionError("uni_attention: mask length does not match y");
  Var q = g.add_bias(g.matmul(g.param(p.wq), x), g.param(p.bq));
  Var k = g.add_bias(g.matmul(g.param(p.wk), y), g.param(p.bk));
  Var v = g.add_bias(g.matmul(g.param(p.wv), y), g.param(p.bv));
  Var q_rep = g.repeat_cols(q, len);
  Var m = g.concat_rows(q_rep, k);
  Var h = g.tanh(g.add_bias(g.matmul(g.param(p.wa), m), g.param(p.ba)));
  Var s = g.add_bias(g.matmul(g.param(p.wi), h), g.param(p.bi));
  Var a = g.masked_softmax(s, mask);
  if (weights) *weights = a;
  return g.matmul(v, a, false, true);
}

void FusionStack::register_params(ParamStore& store, const FusionConfig& c) {
  c.validate();
  const std::size_t dx = c.x_dim;
  const std::size_t dy = c.y_dim;
  const std::size_t da = c.score_dim;
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = "fusion.layer" + std::to_string(i) + ".";
    store.add(p + "wq", {dx, dx}, Init::kUniformFanIn, dx);
    store.add(p + "bq", {dx}, Init::kUniformFanIn, dx);
    store.add(p + "wk", {dy, dy}, Init::kUniformFanIn, dy);
    store.add(p + "bk", {dy}, Init::kUniformFanIn, dy);
    store.add(p + "wv", {dx, dy}, Init::kUniformFanIn, dy);
    store.add(p + "bv", {dx}, Init::kUniformFanIn, dy);
    store.add(p + "wa", {da, dx + dy}, Init::kUniformFanIn, dx + dy);
    store.add(p + "ba", {da}, Init::kUniformFanIn, dx + dy);
    store.add(p + "wi", {1, da}, Init::kUniformFanIn, da);
    store.add(p + "bi", {1}, Init::kUniformFanIn, da);
    LayerNormParams::add(store, p + "ln1", dx);
    FeedForward::add(store, p + "ffn", dx, c.ffn, false);
    LayerNormParams::add(store, p + "ln2", dx);
  }
}

FusionStack::FusionStack(const FusionConfig& c, const ParamStore& store) : config_(c) {
  c.validate();
  auto get = [&](const std::string& name, std::vector<std::size_t> shape) {
    const std::size_t i = store.index(name);
    if (store.tensor(i).shape() != shape) {
      throw DimensionError("fusion: " + name + " has shape " + shape_string(store.tensor(i).shape()) + ", expected " +
                           shape_string(shape));
    }
    return i;
  };
  const std::size_t dx = c.x_dim;
  const std::size_t dy = c.y_dim;
  const std::size_t da = c.score_dim;
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = "fusion.layer" + std::to_string(i) + ".";
    layers_.push_back({get(p + "wq", {dx, dx}), get(p + "bq", {dx}), get(p + "wk", {dy, dy}), get(p + "bk", {dy}),
                       get(p + "wv", {dx, dy}), get(p + "bv", {dx}), get(p + "wa", {da, dx + dy}), get(p + "ba", {da}),
                       get(p + "wi", {1, da}), get(p + "bi", {1}), LayerNormParams::bind(store, p + "ln1", dx),
                       FeedForward::bind(store, p + "ffn", dx, c.ffn, false),
                       LayerNormParams::bind(store, p + "ln2", dx)});
  }
}

Var FusionStack::fuse(Graph& g, std::size_t i, Var x, Var y, const Mask& mask, Var* weights) const {
  const UniAttentionParams& p = layers_.at(i);
  Var u = uni_attention(g, x, y, mask, p, weights);
  Var x1 = p.ln1.apply(g, g.add(x, u));
  return p.ln2.apply(g, g.add(x1, p.ffn.apply(g, x1)));
}

std::pair<Var, Var> FusionStack::layer_forward(Graph& g, const TextEncoder& encoder, std::size_t i, Var x, Var y,
                                               const Mask& mask) const {
  Var x_out = fuse(g, i, x, y, mask);
  Var y_out = encoder.layer(g, i, y, mask);
  return {x_out, y_out};
}

}  // namespace ctrfusion
