#include "ctrfusion/reduction.hpp"

#include "ctrfusion/errors.hpp"

namespace ctrfusion {

void FeatureReducer::register_params(ParamStore& store, const FeatureSchema& schema, const ReductionConfig& c) {
  if (c.sub_dim == 0 || c.reduced_dim == 0) throw ConfigError("reduction: dimensions must be positive");
  std::size_t i = 0;
  for (const FeatureDescriptor* f : schema.sparse()) {
    store.add("reduce.sparse" + std::to_string(i++), {f->cardinality, c.sub_dim}, Init::kUniformFanIn, c.sub_dim, true);
  }
  i = 0;
  for (std::size_t k = 0; k < schema.dense_count(); ++k) {
    store.add("reduce.dense" + std::to_string(i++), {kDenseBuckets, c.sub_dim}, Init::kUniformFanIn, c.sub_dim, true);
  }
  Dense::add(store, "reduce.proj", schema.features.size() * c.sub_dim, c.reduced_dim);
}

FeatureReducer::FeatureReducer(const FeatureSchema& schema, const ReductionConfig& c, const ParamStore& store)
    : config_(c), sparse_count_(schema.sparse_count()) {
  std::size_t i = 0;
  for (const FeatureDescriptor* f : schema.sparse()) {
    const std::size_t t = store.index("reduce.sparse" + std::to_string(i++));
    if (store.tensor(t).shape() != std::vector<std::size_t>{f->cardinality, c.sub_dim}) {
      throw DimensionError("reduction: table for " + f->name + " does not match the schema");
    }
    tables_.push_back(t);
  }
  for (std::size_t k = 0; k < schema.dense_count(); ++k) {
    const std::size_t t = store.index("reduce.dense" + std::to_string(k));
    if (store.tensor(t).shape() != std::vector<std::size_t>{kDenseBuckets, c.sub_dim}) {
      throw DimensionError("reduction: dense table " + std::to_string(k) + " has the wrong shape");
    }
    tables_.push_back(t);
  }
  projection_ = Dense::bind(store, "reduce.proj", tables_.size() * c.sub_dim, c.reduced_dim);
}

Var FeatureReducer::embed(Graph& g, std::span<const int> sparse_ids, std::span<const double> dense_values) const {
  if (sparse_ids.size() != sparse_count_ || sparse_ids.size() + dense_values.size() != tables_.size()) {
    throw DimensionError("embed_and_reduce: record has " + std::to_string(sparse_ids.size()) + " sparse and " +
                         std::to_string(dense_values.size()) + " dense values, schema expects " +
                         std::to_string(sparse_count_) + " and " + std::to_string(tables_.size() - sparse_count_));
  }
  std::vector<Var> parts;
  parts.reserve(tables_.size());
  for (std::size_t i = 0; i < sparse_ids.size(); ++i) parts.push_back(g.embedding_lookup(tables_[i], sparse_ids[i]));
  for (std::size_t i = 0; i < dense_values.size(); ++i) {
    parts.push_back(g.embedding_lookup(tables_[sparse_count_ + i], bucketize(dense_values[i])));
  }
  return g.concat_rows(parts);
}

Var FeatureReducer::embed_and_reduce(Graph& g, std::span<const int> sparse_ids,
                                     std::span<const double> dense_values) const {
  return g.relu(projection_.apply(g, embed(g, sparse_ids, dense_values)));
}

void NonTextualModel::register_params(ParamStore& store, const FeatureSchema& schema, const ReductionConfig& c) {
  FeatureReducer::register_params(store, schema, c);
  MlpHead::add(store, "feat_head", c.reduced_dim, {c.reduced_dim});
}

NonTextualModel::NonTextualModel(const FeatureSchema& schema, const ReductionConfig& c, const ParamStore& store)
    : reducer_(schema, c, store), head_(MlpHead::bind(store, "feat_head", c.reduced_dim, {c.reduced_dim})) {}

Var NonTextualModel::probability(Graph& g, const FeaturizedRecord& record, std::span<const int> sparse_ids,
                                 bool training) const {
  Var x = reducer_.embed_and_reduce(g, sparse_ids, record.dense_values);
  return head_.probability(g, x, record.position, training);
}

}  // namespace ctrfusion
