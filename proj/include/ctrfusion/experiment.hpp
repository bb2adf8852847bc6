#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctrfusion/features.hpp"
#include "ctrfusion/metrics.hpp"
#include "ctrfusion/trainer.hpp"

namespace ctrfusion {

inline constexpr int kConfigVersion = 1;

// Everything one run needs. vocab_size, numeric_slots and (when 0)
// numbert_length of the model are derived from the data by prepare_data.
struct ExperimentConfig {
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  TrainPlan plan;
  ModelConfig model;
  FeatureFamilies families;
  std::size_t vocab_max = 2000;
  std::size_t number_tokens = 1000;  // cap on number tokens appended to the vocabulary
  EvalSettings eval;
};

// JSON with a "version" key; unknown keys anywhere are errors, and the data
// files it names must exist.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base = {});
std::string dump_config(const ExperimentConfig& config);

struct PreparedData {
  Vocab vocab;
  FeatureSpace space;
  std::vector<FeaturizedRecord> train;
  std::vector<FeaturizedRecord> valid;
  PairFrequency pairs;  // training frequency of each <query, ad> pair
  ModelConfig model;    // config with data-derived sizes filled in

  TrainData data() const { return {&space.schema(), &vocab, &train, &valid}; }
};

// Vocabulary over training text (plus number tokens), feature tables fitted on
// the training log, and both splits featurized.
PreparedData prepare_data(const RawLog& train, const RawLog& valid, const ExperimentConfig& config);

// Scored validation set with deterministic partitions.
ScoredSet scored_set(const std::vector<FeaturizedRecord>& records, const std::vector<double>& scores,
                     const EvalSettings& settings);

// Validation scores of a trained framework store.
std::vector<double> score_framework(FrameworkKind kind, const ParamStore& store, const PreparedData& data,
                                    const ParamStore* stage1 = nullptr);

// Every phase plan.framework and plan.init_mode need, in order: MLM
// pretraining, text warm-up, non-textual warm-up, joint training.
struct PipelineResult {
  std::optional<PhaseResult> pretrained;
  std::optional<PhaseResult> text;
  std::optional<PhaseResult> nontextual;
  PhaseResult final;
  LossLog log;
  std::vector<double> valid_scores;
  MetricsReport report;
};

PipelineResult run_pipeline(const ExperimentConfig& config, const PreparedData& data);

// Writes a run directory: config.json, vocab.txt, schema.json, one checkpoint
// per phase, loss.csv, scores.txt, report.tsv and summary.json. Nothing
// written depends on wall-clock time.
void write_run(const std::filesystem::path& dir, const ExperimentConfig& config, const PreparedData& data,
               const PipelineResult& result);

// "<UTC timestamp>-<plan hash>" under $CTRFUSION_RUNS (default ./runs).
std::filesystem::path default_run_dir(const ExperimentConfig& config, const ModelConfig& model);

}  // namespace ctrfusion
