#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctrfusion/encoder.hpp"
#include "ctrfusion/records.hpp"
#include "ctrfusion/vocab.hpp"

namespace ctrfusion {

enum class FeatureKind { kSparse, kDense };

struct FeatureDescriptor {
  std::string name;
  FeatureKind kind = FeatureKind::kDense;
  std::size_t cardinality = 0;  // sparse: includes the Missing id 0
  double min = 0.0;             // dense: training-set range
  double max = 0.0;
  bool constant = false;        // dense with min == max

  bool operator==(const FeatureDescriptor&) const = default;
};

// Reserved id of unseen or dropped categorical values.
inline constexpr int kMissingId = 0;
inline constexpr std::size_t kDenseBuckets = 101;
inline constexpr int kSchemaVersion = 1;

// Which feature families are generated from a log.
struct FeatureFamilies {
  bool ids = true;         // consecutive id per categorical column
  bool historical = true;  // smoothed CTR and impression count per categorical column
  bool length = true;      // token counts of query, title, url
  bool semantic = true;    // mean TF x IDF of query and title tokens
  bool numeric = true;     // numeric log columns passed through

  bool operator==(const FeatureFamilies&) const = default;
};

// Ordered feature list. Sparse features always precede dense ones; within a
// kind the order is the generation order and is persisted.
struct FeatureSchema {
  LogLayout layout;
  FeatureFamilies families;
  std::vector<FeatureDescriptor> features;

  std::size_t sparse_count() const;
  std::size_t dense_count() const;
  std::vector<const FeatureDescriptor*> sparse() const;
  std::vector<const FeatureDescriptor*> dense() const;
  bool operator==(const FeatureSchema&) const = default;
};

// Feature values of one record before normalization.
struct RawFeatures {
  std::vector<int> sparse_ids;
  std::vector<double> dense;
};

// One training/evaluation example.
struct FeaturizedRecord {
  TokenSeq tokens;
  std::vector<int> sparse_ids;
  std::vector<double> dense_values;  // normalized to [0, 1]
  std::vector<double> dense_raw;     // before normalization
  int position = 1;
  int label = 0;
  std::uint64_t pair_key = 0;
};

// (v - min) / (max - min) clamped to [0, 1]; constant features map to 0.
double normalize_dense(double value, double min, double max);
// min(floor(v * 100), 100) for v in [0, 1].
int bucketize(double normalized);
// Training mode replaces each id by kMissingId with probability `rate`.
std::vector<int> robust_id_dropout(std::vector<int> ids, double rate, std::mt19937_64& rng, bool training);

// Laplace-smoothed historical click rate.
inline double smoothed_ctr(double clicks, double impressions) { return (clicks + 1.0) / (impressions + 1.0); }

// Feature tables fitted on a training log: id maps, historical statistics,
// token TF x IDF and dense ranges. Featurization afterwards is a pure
// function of (space, record).
class FeatureSpace {
 public:
  static FeatureSpace fit(const RawLog& train, FeatureFamilies families = {});

  const FeatureSchema& schema() const { return schema_; }
  RawFeatures raw_features(const RawRecord& record) const;
  FeaturizedRecord featurize(const RawRecord& record, const Vocab& vocab, std::size_t seq_len) const;
  std::vector<FeaturizedRecord> featurize_all(const RawLog& log, const Vocab& vocab, std::size_t seq_len) const;

  // Structured text (JSON) with a format version; load(save(x)) featurizes
  // identically.
  void save(const std::filesystem::path& path) const;
  static FeatureSpace load(const std::filesystem::path& path);

 private:
  struct Stats {
    double clicks = 0.0;
    double impressions = 0.0;
  };

  double token_mean_tfidf(const std::vector<std::string>& tokens) const;

  FeatureSchema schema_;
  std::vector<std::unordered_map<std::string, int>> ids_;      // per sparse column
  std::vector<std::unordered_map<std::string, Stats>> stats_;  // per sparse column
  std::unordered_map<std::string, double> tfidf_;
  double global_ctr_ = 0.0;
};

}  // namespace ctrfusion
