#pragma once

#include <string>
#include <vector>

#include "ctrfusion/graph.hpp"
#include "ctrfusion/params.hpp"

namespace ctrfusion {

// Handles for one W x + b layer registered in a ParamStore.
struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  static Dense add(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   Init init = Init::kUniformFanIn);
  static Dense bind(const ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out);
  Var apply(Graph& g, Var x) const { return g.affine(x, weight, bias); }
};

struct LayerNormParams {
  std::size_t gamma = 0;
  std::size_t beta = 0;

  static LayerNormParams add(ParamStore& store, const std::string& prefix, std::size_t dim);
  static LayerNormParams bind(const ParamStore& store, const std::string& prefix, std::size_t dim);
  Var apply(Graph& g, Var x) const { return g.layer_norm(x, g.param(gamma), g.param(beta)); }
};

// Two-layer position-wise feed-forward block: W2 act(W1 x + b1) + b2.
struct FeedForward {
  Dense inner;
  Dense outer;
  bool gelu = true;

  static FeedForward add(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden, bool gelu);
  static FeedForward bind(const ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden,
                          bool gelu);
  Var apply(Graph& g, Var x) const;
};

// ReLU MLP ending in one logit, plus a learned per-position additive logit.
// The output layer and the position logits start at zero, so a fresh head
// predicts exactly 0.5.
//
// Position handling: during training the logit of the record's displayed
// position is added; at evaluation position 1 is always used, treating
// position as independent of the record's quality.
class MlpHead {
 public:
  static constexpr std::size_t kPositions = 16;

  static MlpHead add(ParamStore& store, const std::string& prefix, std::size_t in, std::vector<std::size_t> hidden);
  static MlpHead bind(const ParamStore& store, const std::string& prefix, std::size_t in,
                      std::vector<std::size_t> hidden);

  Var logit(Graph& g, Var x) const;
  Var probability(Graph& g, Var x, int position, bool training) const;
  std::size_t position_table() const { return position_; }

 private:
  std::vector<Dense> layers_;
  std::size_t position_ = 0;
};

}  // namespace ctrfusion
