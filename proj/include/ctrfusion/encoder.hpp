#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ctrfusion/graph.hpp"
#include "ctrfusion/layers.hpp"
#include "ctrfusion/vocab.hpp"

namespace ctrfusion {

enum class Segment : int { kQuery = 0, kAd = 1, kNumeric = 2 };
inline constexpr std::size_t kSegmentCount = 3;

// Padded token ids with attention mask. Position 0 is [CLS].
struct TokenSeq {
  std::vector<int> ids;
  Mask mask;
  std::vector<int> segments;

  std::size_t length() const { return ids.size(); }
  std::size_t unmasked() const;
};

// [CLS] query [SEP] ad [SEP] [PAD]... of exactly `length` positions. When the
// text does not fit, tokens are removed from the end of whichever segment is
// currently longer (the ad segment on ties).
TokenSeq encode_pair(const std::vector<std::string>& query, const std::vector<std::string>& ad, const Vocab& vocab,
                     std::size_t length);
TokenSeq encode_pair_ids(std::vector<int> query, std::vector<int> ad, std::size_t length);

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 2;
  std::size_t ffn = 128;
  std::size_t seq_len = 64;        // l_Y for <query, ad> input
  std::size_t max_positions = 64;  // position table rows; >= longest sequence fed
  std::size_t vocab_size = 0;
  bool tanh_pooler = true;

  void validate() const;
};

struct EncoderOutput {
  // hidden[0] is the embedding output, hidden[i] the output of layer i.
  std::vector<Var> hidden;
  Var pooled;
};

// Post-LN bidirectional self-attention stack over columns of a (d x l) matrix.
// Parameters live under "encoder." in the store.
class TextEncoder {
 public:
  static void register_params(ParamStore& store, const EncoderConfig& config);
  TextEncoder(const EncoderConfig& config, const ParamStore& store);

  const EncoderConfig& config() const { return config_; }
  std::size_t token_table() const { return token_; }

  Var embed(Graph& g, const TokenSeq& seq) const;
  // One layer; when `attention` is non-null the per-head weight matrices
  // (query positions x key positions) are appended to it.
  Var layer(Graph& g, std::size_t index, Var y, const Mask& mask, std::vector<Var>* attention = nullptr) const;
  Var pool(Graph& g, Var top) const;
  EncoderOutput forward(Graph& g, const TokenSeq& seq, std::vector<Var>* attention = nullptr) const;
  // Vocabulary logits (V x 1) for one hidden column, tied to the token table.
  Var mlm_logits(Graph& g, Var column) const;

 private:
  struct LayerParams {
    Dense q, k, v, o;
    LayerNormParams ln1, ln2;
    FeedForward ffn;
  };

  EncoderConfig config_;
  std::size_t token_ = 0;
  std::size_t position_ = 0;
  std::size_t segment_ = 0;
  LayerNormParams embed_ln_;
  std::vector<LayerParams> layers_;
  Dense pooler_;
  std::size_t mlm_bias_ = 0;
};

// TextOnly click model: sigmoid(MLP(pooled)) with head parameters under
// "text_head.".
class TextOnlyHead {
 public:
  static void register_params(ParamStore& store, const EncoderConfig& config);
  TextOnlyHead(const EncoderConfig& config, const ParamStore& store);
  Var probability(Graph& g, Var pooled, int position, bool training) const {
    return head_.probability(g, pooled, position, training);
  }

 private:
  MlpHead head_;
};

}  // namespace ctrfusion
