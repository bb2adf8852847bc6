#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctrfusion/trainer.hpp"

namespace ctrfusion {

// Milliseconds per sample over repeated measurements.
struct LatencyReport {
  std::string phase;
  std::vector<double> samples;  // one ms/sample value per repeat
  double avg = 0.0;
  double median = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
};

inline constexpr std::size_t kTimingRepeats = 20;

// Linear-interpolation percentiles of the samples. Throws for fewer than two.
LatencyReport summarize_latency(const std::string& phase, std::vector<double> samples);

// Per-repeat sums of several phases, e.g. warm-up + joint training.
LatencyReport sum_latency(const std::string& phase, const std::vector<LatencyReport>& parts);

// Single-prediction time: every example is scored alone on its own graph.
LatencyReport measure_inference(const std::string& phase, const ParamStore& store, const Predictor& model,
                                const std::vector<Example>& examples, std::size_t repeats = kTimingRepeats);

// Training-step time (forward, backward, Adam) over the examples in batches,
// on a private copy of the store.
LatencyReport measure_training(const std::string& phase, const ParamStore& store, const Predictor& model,
                               const std::vector<Example>& examples, std::size_t batch_size,
                               std::size_t repeats = kTimingRepeats);

// MLM step time per sequence.
LatencyReport measure_mlm(const std::string& phase, const ParamStore& store, const EncoderConfig& config,
                          const std::vector<TokenSeq>& seqs, std::size_t batch_size,
                          std::size_t repeats = kTimingRepeats);

// Structured text (JSON): one object per phase with all four statistics.
void write_latency(const std::filesystem::path& path, const std::vector<LatencyReport>& reports);
std::vector<LatencyReport> read_latency(const std::filesystem::path& path);

}  // namespace ctrfusion
