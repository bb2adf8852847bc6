#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ctrfusion {

// Mann-Whitney AUC with midranks for ties. Throws naming `slice` when the
// labels contain a single class.
double auc(std::span<const double> scores, std::span<const int> labels, const std::string& slice = "ALL");

// 1 - CE(model) / CE(base), base predicting the slice's empirical CTR.
double rig(std::span<const double> scores, std::span<const int> labels, const std::string& slice = "ALL");

// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
double mean_logloss(std::span<const double> scores, std::span<const int> labels);

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::uint64_t> pair_keys;
  std::vector<int> partitions;

  std::size_t size() const { return scores.size(); }
  void validate() const;
};

// Partition ids in [0, parts) with sizes differing by at most one, assigned
// through a seeded shuffle.
std::vector<int> assign_partitions(std::size_t n, int parts, std::uint64_t seed);

using PairFrequency = std::unordered_map<std::uint64_t, std::size_t>;

// Records whose pair appears at most `threshold` times in training. Pairs
// never seen in training count as frequency 0.
ScoredSet slice_tail(const ScoredSet& set, const PairFrequency& frequency, std::size_t threshold = 1);

struct TTest {
  double diff = 0.0;
  double t = 0.0;
};

// Paired t over per-partition values: t = mean(d) / (sd(d) / sqrt(P)), sd with
// P - 1 degrees of freedom; t = 0 when every difference is 0. diff is
// mean(a) - mean(b).
TTest t_test(std::span<const double> a, std::span<const double> b);

struct SliceMetrics {
  std::string slice;
  double auc = 0.0;
  double rig = 0.0;
  std::vector<double> partition_auc;
  std::vector<double> partition_rig;

  bool operator==(const SliceMetrics&) const = default;
};

struct MetricsReport {
  std::string framework;
  std::vector<SliceMetrics> slices;  // ALL, then Tail

  const SliceMetrics& slice(const std::string& name) const;
  bool operator==(const MetricsReport&) const = default;
};

struct EvalSettings {
  int partitions = 10;
  std::size_t tail_threshold = 1;
  std::uint64_t seed = 0;
};

MetricsReport evaluate(const std::string& framework, const ScoredSet& set, const PairFrequency& frequency,
                       const EvalSettings& settings);

struct Comparison {
  std::string a;
  std::string b;
  std::string slice;
  std::string metric;  // "auc" or "rig"
  double diff = 0.0;   // full-slice metric of a minus that of b
  double t = 0.0;
  bool significant() const { return t > 3.0; }
  bool operator==(const Comparison&) const = default;
};

// Every ordered pair (a earlier than b in `reports`), per slice and metric.
std::vector<Comparison> compare_reports(const std::vector<MetricsReport>& reports);

// Tab-separated table with a header row: one "metric" row per framework,
// slice and metric carrying the per-partition values, then one "compare" row
// per comparison. Values are printed to round-trip exactly.
void emit_report(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);

struct ParsedReport {
  std::vector<MetricsReport> reports;
  std::vector<Comparison> comparisons;
};
ParsedReport parse_report(const std::filesystem::path& path);

}  // namespace ctrfusion
