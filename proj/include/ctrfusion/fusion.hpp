#pragma once

#include <utility>
#include <vector>

#include "ctrfusion/encoder.hpp"
#include "ctrfusion/graph.hpp"
#include "ctrfusion/layers.hpp"

namespace ctrfusion {

struct FusionConfig {
  std::size_t x_dim = 32;       // d_X, width of a non-textual token
  std::size_t y_dim = 64;       // d_Y, textual hidden width
  std::size_t y_len = 64;       // l_Y
  std::size_t score_dim = 64;   // d_a, hidden width of the additive scorer
  std::size_t layers = 2;       // must equal the encoder layer count
  std::size_t ffn = 64;         // inner width of the non-textual feed-forward block

  void validate() const;
};

// Trainable parameters of one uni-attention layer, registered as
// "fusion.layer{i}.{wq,bq,wk,bk,wv,bv,wa,ba,wi,bi}" plus the non-textual
// feed-forward and normalization blocks.
struct UniAttentionParams {
  std::size_t wq, bq;  // d_X x d_X, d_X
  std::size_t wk, bk;  // d_Y x d_Y, d_Y
  std::size_t wv, bv;  // d_X x d_Y, d_X
  std::size_t wa, ba;  // d_a x (d_X + d_Y), d_a
  std::size_t wi, bi;  // 1 x d_a, 1
  LayerNormParams ln1;
  FeedForward ffn;
  LayerNormParams ln2;
};

// Additive attention from one non-textual token x (d_X x 1) to the textual
// hidden states y (d_Y x l_Y) of the same layer:
//   Q = Wq x + bq;  K = Wk y + bk;  V = Wv y + bv
//   M = [repeat(Q, l_Y); K];  H = tanh(Wa M + ba);  S = Wi H + bi
//   S_j = -inf where mask_j = 0;  U = V softmax(S)^T
// The attention row (1 x l_Y) is written to *weights when non-null.
Var uni_attention(Graph& g, Var x, Var y, const Mask& mask, const UniAttentionParams& p, Var* weights = nullptr);

class FusionStack {
 public:
  static void register_params(ParamStore& store, const FusionConfig& config);
  FusionStack(const FusionConfig& config, const ParamStore& store);

  const FusionConfig& config() const { return config_; }
  const UniAttentionParams& layer(std::size_t i) const { return layers_.at(i); }

  // Non-textual path of layer i:
  //   x_out = LN2(x1 + FFN(x1)),  x1 = LN1(x_in + uni_attention(x_in, y_in))
  Var fuse(Graph& g, std::size_t i, Var x, Var y, const Mask& mask, Var* weights = nullptr) const;

  // Both paths of layer i. The textual path is the ordinary encoder layer and
  // never reads x.
  std::pair<Var, Var> layer_forward(Graph& g, const TextEncoder& encoder, std::size_t i, Var x, Var y,
                                    const Mask& mask) const;

 private:
  FusionConfig config_;
  std::vector<UniAttentionParams> layers_;
};

}  // namespace ctrfusion
