#include "ctrfusion/layers.hpp"

#include <algorithm>

#include "ctrfusion/errors.hpp"

namespace ctrfusion {
namespace {

std::size_t bind_checked(const ParamStore& store, const std::string& name, const std::vector<std::size_t>& shape) {
  const std::size_t i = store.index(name);
  if (store.tensor(i).shape() != shape) {
    throw DimensionError("parameter " + name + " has shape " + shape_string(store.tensor(i).shape()) + ", expected " +
                         shape_string(shape));
  }
  return i;
}

}  // namespace

Dense Dense::add(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Init init) {
  Dense d;
  d.in = in;
  d.out = out;
  d.weight = store.add(prefix + ".w", {out, in}, init, in);
  d.bias = store.add(prefix + ".b", {out}, init, in);
  return d;
}

Dense Dense::bind(const ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out) {
  Dense d;
  d.in = in;
  d.out = out;
  d.weight = bind_checked(store, prefix + ".w", {out, in});
  d.bias = bind_checked(store, prefix + ".b", {out});
  return d;
}

LayerNormParams LayerNormParams::add(ParamStore& store, const std::string& prefix, std::size_t dim) {
  return {store.add(prefix + ".gamma", {dim}, Init::kOnes), store.add(prefix + ".beta", {dim}, Init::kZeros)};
}

LayerNormParams LayerNormParams::bind(const ParamStore& store, const std::string& prefix, std::size_t dim) {
  return {bind_checked(store, prefix + ".gamma", {dim}), bind_checked(store, prefix + ".beta", {dim})};
}

FeedForward FeedForward::add(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden,
                             bool gelu) {
  return {Dense::add(store, prefix + ".inner", dim, hidden), Dense::add(store, prefix + ".outer", hidden, dim), gelu};
}

FeedForward FeedForward::bind(const ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden,
                              bool gelu) {
  return {Dense::bind(store, prefix + ".inner", dim, hidden), Dense::bind(store, prefix + ".outer", hidden, dim), gelu};
}

Var FeedForward::apply(Graph& g, Var x) const {
  Var h = inner.apply(g, x);
  h = gelu ? g.gelu(h) : g.relu(h);
  return outer.apply(g, h);
}

MlpHead MlpHead::add(ParamStore& store, const std::string& prefix, std::size_t in, std::vector<std::size_t> hidden) {
  MlpHead head;
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    head.layers_.push_back(Dense::add(store, prefix + ".hidden" + std::to_string(i), width, hidden[i]));
    width = hidden[i];
  }
  head.layers_.push_back(Dense::add(store, prefix + ".out", width, 1, Init::kZeros));
  head.position_ = store.add(prefix + ".position", {kPositions, 1}, Init::kZeros, 1, true);
  return head;
}

MlpHead MlpHead::bind(const ParamStore& store, const std::string& prefix, std::size_t in,
                      std::vector<std::size_t> hidden) {
  MlpHead head;
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    head.layers_.push_back(Dense::bind(store, prefix + ".hidden" + std::to_string(i), width, hidden[i]));
    width = hidden[i];
  }
  head.layers_.push_back(Dense::bind(store, prefix + ".out", width, 1));
  head.position_ = bind_checked(store, prefix + ".position", {kPositions, 1});
  return head;
}

Var MlpHead::logit(Graph& g, Var x) const {
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = g.relu(layers_[i].apply(g, h));
  return layers_.back().apply(g, h);
}

Var MlpHead::probability(Graph& g, Var x, int position, bool training) const {
  const int slot = training ? std::clamp(position, 1, static_cast<int>(kPositions)) - 1 : 0;
  Var z = g.add(logit(g, x), g.embedding_lookup(position_, slot));
  return g.sigmoid(z);
}

}  // namespace ctrfusion
