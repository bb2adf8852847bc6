#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctrfusion/encoder.hpp"
#include "ctrfusion/features.hpp"
#include "ctrfusion/fusion.hpp"
#include "ctrfusion/numbert.hpp"
#include "ctrfusion/reduction.hpp"

namespace ctrfusion {

enum class FrameworkKind {
  kTextOnly,
  kNumBert,
  kNumBertUniAttention,         // one x per transformed non-textual token
  kNumBertUniAttentionReduced,  // one reduced x; same network as kBert4Ctr
  kShallow1,
  kShallowN,
  kCascading,
  kBert4Ctr,
};

inline constexpr FrameworkKind kAllFrameworks[] = {
    FrameworkKind::kTextOnly, FrameworkKind::kNumBert,  FrameworkKind::kNumBertUniAttention,
    FrameworkKind::kNumBertUniAttentionReduced,         FrameworkKind::kShallow1,
    FrameworkKind::kShallowN, FrameworkKind::kCascading, FrameworkKind::kBert4Ctr,
};

std::string framework_name(FrameworkKind kind);
FrameworkKind parse_framework(const std::string& name);

// Architecture hyperparameters shared by all frameworks. d_X of the fusion
// stack is the reduced width K; its layer count and d_Y follow the encoder.
struct ModelConfig {
  EncoderConfig encoder;
  ReductionConfig reduction;
  std::size_t score_dim = 64;      // d_a
  std::size_t fusion_ffn = 64;     // non-textual FFN inner width
  std::size_t numbert_length = 0;  // extended sequence length for NumBERT input
  std::size_t numeric_slots = 0;   // number of non-textual values per record

  FusionConfig fusion() const;
  void validate() const;
};

// A record plus the derived inputs some frameworks need.
struct Example {
  const FeaturizedRecord* record = nullptr;
  TokenSeq numbert;               // NumBERT input: text then number groups
  std::vector<int> number_ids;    // transformed number tokens, no separators
  std::vector<int> number_slots;  // value index of each number token
  double text_score = 0.0;        // cascading: frozen stage-1 logit
};

// Builds the derived inputs for `kind`. `text_scores` is required for
// cascading and ignored otherwise.
std::vector<Example> prepare_examples(FrameworkKind kind, const std::vector<FeaturizedRecord>& records,
                                      const Vocab& vocab, const ModelConfig& config,
                                      const std::vector<double>* text_scores = nullptr,
                                      std::size_t* truncated = nullptr);

// A click model over parameters held in a ParamStore. probability() builds
// the forward graph for one example; `sparse_ids` replaces the record's ids
// (robust dropout is applied by the caller).
class ClickModel {
 public:
  virtual ~ClickModel() = default;
  virtual FrameworkKind kind() const = 0;
  virtual Var probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const = 0;
  Var probability(Graph& g, const Example& ex, bool training) const {
    return probability(g, ex, ex.record->sparse_ids, training);
  }
  // Whether robust id dropout applies to this framework's inputs.
  virtual bool uses_sparse_ids() const { return true; }
};

// Registers every parameter `kind` needs.
void register_framework(ParamStore& store, FrameworkKind kind, const ModelConfig& config,
                        const FeatureSchema& schema);
std::unique_ptr<ClickModel> make_model(FrameworkKind kind, const ModelConfig& config, const FeatureSchema& schema,
                                       const ParamStore& store);

class TextOnlyModel final : public ClickModel {
 public:
  TextOnlyModel(const ModelConfig& config, const ParamStore& store);
  FrameworkKind kind() const override { return FrameworkKind::kTextOnly; }
  bool uses_sparse_ids() const override { return false; }
  using ClickModel::probability;
  Var probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const override;
  // Pre-sigmoid score without the position term; the cascading text feature.
  Var score(Graph& g, const Example& ex) const;

 private:
  TextEncoder encoder_;
  MlpHead head_;
};

class NumBertModel final : public ClickModel {
 public:
  NumBertModel(const ModelConfig& config, const ParamStore& store);
  FrameworkKind kind() const override { return FrameworkKind::kNumBert; }
  bool uses_sparse_ids() const override { return false; }
  using ClickModel::probability;
  Var probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const override;

 private:
  TextEncoder encoder_;
  MlpHead head_;
};

// Uni-attention over the text for every transformed number token. Each token
// starts as its embedding plus an embedding of the value it belongs to; the
// final tokens are mean-pooled and concatenated with [CLS].
class NumBertUniAttentionModel final : public ClickModel {
 public:
  NumBertUniAttentionModel(const ModelConfig& config, const ParamStore& store);
  FrameworkKind kind() const override { return FrameworkKind::kNumBertUniAttention; }
  bool uses_sparse_ids() const override { return false; }
  using ClickModel::probability;
  Var probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const override;

 private:
  TextEncoder encoder_;
  FusionStack fusion_;
  std::size_t token_table_;
  std::size_t slot_table_;
  MlpHead head_;
};

class Bert4CtrModel final : public ClickModel {
 public:
  Bert4CtrModel(const ModelConfig& config, const FeatureSchema& schema, const ParamStore& store,
                FrameworkKind kind = FrameworkKind::kBert4Ctr);
  FrameworkKind kind() const override { return kind_; }
  using ClickModel::probability;
  Var probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const override;

  // Forward pieces exposed for tests: the non-textual token after every layer
  // and the textual states of every layer.
  struct Trace {
    std::vector<Var> x;
    std::vector<Var> y;
    Var pooled;
    Var prob;
  };
  Trace trace(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const;

 private:
  FrameworkKind kind_;
  TextEncoder encoder_;
  FeatureReducer reducer_;
  FusionStack fusion_;
  MlpHead head_;
};

// Late fusion: the reduced non-textual token passes through `blocks`
// FFN + residual blocks without seeing the text, then meets [CLS] in the MLP.
class ShallowModel final : public ClickModel {
 public:
  ShallowModel(const ModelConfig& config, const FeatureSchema& schema, const ParamStore& store, std::size_t blocks);
  FrameworkKind kind() const override { return blocks_ == 0 ? FrameworkKind::kShallow1 : FrameworkKind::kShallowN; }
  using ClickModel::probability;
  Var probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const override;
  // Non-textual branch right before the concatenation.
  Var nontextual(Graph& g, std::span<const int> sparse_ids, std::span<const double> dense) const;

 private:
  std::size_t blocks_;
  TextEncoder encoder_;
  FeatureReducer reducer_;
  std::vector<std::pair<FeedForward, LayerNormParams>> blocks_params_;
  MlpHead head_;
};

// Stage 2 of the cascading pipeline: a two-hidden-layer MLP over the reduced
// non-textual token and the frozen text score.
class CascadingModel final : public ClickModel {
 public:
  CascadingModel(const ModelConfig& config, const FeatureSchema& schema, const ParamStore& store);
  FrameworkKind kind() const override { return FrameworkKind::kCascading; }
  using ClickModel::probability;
  Var probability(Graph& g, const Example& ex, std::span<const int> sparse_ids, bool training) const override;

 private:
  FeatureReducer reducer_;
  MlpHead head_;
};

}  // namespace ctrfusion
