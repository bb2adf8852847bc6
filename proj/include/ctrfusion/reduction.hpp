#pragma once

#include <vector>

#include "ctrfusion/features.hpp"
#include "ctrfusion/graph.hpp"
#include "ctrfusion/layers.hpp"

namespace ctrfusion {

struct ReductionConfig {
  std::size_t sub_dim = 8;       // N, per-feature embedding width
  std::size_t reduced_dim = 32;  // K, width of the single non-textual token
};

// Per-feature sub-embeddings concatenated in schema order and projected to K
// dims through one ReLU layer. Sparse ids index a (cardinality x N) table;
// dense values are bucketized and index a (101 x N) table. Parameters live
// under "reduce.".
class FeatureReducer {
 public:
  static void register_params(ParamStore& store, const FeatureSchema& schema, const ReductionConfig& config);
  FeatureReducer(const FeatureSchema& schema, const ReductionConfig& config, const ParamStore& store);

  std::size_t concat_width() const { return tables_.size() * config_.sub_dim; }
  std::size_t output_dim() const { return config_.reduced_dim; }

  // The (M*N x 1) concatenation before the projection.
  Var embed(Graph& g, std::span<const int> sparse_ids, std::span<const double> dense_values) const;
  Var embed_and_reduce(Graph& g, std::span<const int> sparse_ids, std::span<const double> dense_values) const;
  Var embed_and_reduce(Graph& g, const FeaturizedRecord& record) const {
    return embed_and_reduce(g, record.sparse_ids, record.dense_values);
  }

 private:
  ReductionConfig config_;
  std::size_t sparse_count_ = 0;
  std::vector<std::size_t> tables_;  // sparse tables then dense tables
  Dense projection_;
};

// Non-textual warm-up model: sigmoid(MLP(embed_and_reduce(record))) with the
// position logit; head parameters under "feat_head.".
class NonTextualModel {
 public:
  static void register_params(ParamStore& store, const FeatureSchema& schema, const ReductionConfig& config);
  NonTextualModel(const FeatureSchema& schema, const ReductionConfig& config, const ParamStore& store);

  const FeatureReducer& reducer() const { return reducer_; }
  Var probability(Graph& g, const FeaturizedRecord& record, std::span<const int> sparse_ids, bool training) const;

 private:
  FeatureReducer reducer_;
  MlpHead head_;
};

}  // namespace ctrfusion
