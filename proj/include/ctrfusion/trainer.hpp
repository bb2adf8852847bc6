#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctrfusion/adam.hpp"
#include "ctrfusion/models.hpp"
#include "ctrfusion/reduction.hpp"

namespace ctrfusion {

enum class InitMode { kNoFinetunedRandom, kFinetunedRandom, kTwoStepWarm };

std::string init_mode_name(InitMode mode);
InitMode parse_init_mode(const std::string& name);

struct TrainPlan {
  FrameworkKind framework = FrameworkKind::kBert4Ctr;
  InitMode init_mode = InitMode::kTwoStepWarm;
  double lr_pretrain = 1e-4;
  double lr_finetune = 1e-4;
  double lr_joint = 1e-5;
  std::size_t pretrain_epochs = 2;
  std::size_t finetune_epochs = 4;
  std::size_t nontextual_epochs = 4;
  std::size_t joint_epochs = 4;
  std::size_t batch_size = 10;
  std::uint64_t seed = 1;
  std::size_t loss_log_interval = 1000;  // records per aggregated loss row
  double id_dropout = 0.05;

  void validate() const;
};

// FNV-1a over every plan and model field; stored in checkpoints and run names.
std::uint64_t plan_hash(const TrainPlan& plan, const ModelConfig& config);

// Aggregated training loss: one row per loss_log_interval records, plus a
// final partial row per epoch.
struct LossLog {
  struct Row {
    std::size_t records_seen = 0;
    double loss = 0.0;
    std::string phase;
  };
  std::vector<Row> rows;

  void write_csv(const std::filesystem::path& path) const;
};

// Forward function plus whether robust id dropout applies to its input.
struct Predictor {
  std::function<Var(Graph&, const Example&, std::span<const int>, bool)> probability;
  bool uses_sparse_ids = true;
};
Predictor predictor(const ClickModel& model);
Predictor predictor(const NonTextualModel& model);

struct FitOptions {
  std::string phase;
  double learning_rate = 1e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 10;
  std::uint64_t seed = 1;
  std::size_t log_interval = 1000;
  double id_dropout = 0.05;
  bool keep_best = true;  // restore the epoch with the best validation AUC
};

struct FitResult {
  std::vector<double> epoch_auc;
  double best_auc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t records = 0;
  std::uint64_t steps = 0;
  double seconds = 0.0;
};

// Mini-batch Adam on mean binary cross-entropy. The example order of epoch e
// is a shuffle seeded by (seed, e); dropout of example i in epoch e uses its
// own seed, so results do not depend on thread count.
FitResult fit(ParamStore& store, const Predictor& model, const std::vector<Example>& train,
              const std::vector<Example>& valid, const FitOptions& options, LossLog* log = nullptr);

// Evaluation-mode click probabilities.
std::vector<double> predict(const ParamStore& store, const Predictor& model, const std::vector<Example>& examples);

// MLM epochs over token sequences; returns the mean loss of the last epoch.
double pretrain_mlm(ParamStore& store, const TextEncoder& encoder, const std::vector<TokenSeq>& seqs,
                    std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed,
                    LossLog* log = nullptr, std::size_t log_interval = 1000);

struct TrainData {
  const FeatureSchema* schema = nullptr;
  const Vocab* vocab = nullptr;
  const std::vector<FeaturizedRecord>* train = nullptr;
  const std::vector<FeaturizedRecord>* valid = nullptr;
};

struct PhaseResult {
  ParamStore store;
  FitResult fit;
  std::vector<std::string> dropped;  // warm parameters without a counterpart
};

// Encoder + text_head pretrained with MLM (pretrain_epochs at lr_pretrain).
PhaseResult pretrain_text(const TrainPlan& plan, const ModelConfig& config, const TrainData& data,
                          LossLog* log = nullptr);
// Warm-up step for the text side: MLM (or the given pretrained store), then
// click fine-tuning of the TextOnly model at lr_finetune.
PhaseResult warmup_text(const TrainPlan& plan, const ModelConfig& config, const TrainData& data,
                        const ParamStore* pretrained = nullptr, LossLog* log = nullptr);
// Warm-up step for the non-textual side: reduction + MLP at lr_finetune.
PhaseResult warmup_nontextual(const TrainPlan& plan, const ModelConfig& config, const TrainData& data,
                              LossLog* log = nullptr);

struct WarmStores {
  const ParamStore* pretrained = nullptr;  // MLM only
  const ParamStore* text = nullptr;        // warm-text
  const ParamStore* nontextual = nullptr;  // warm-nontextual
};

// Builds plan.framework with fresh parameters, loads warm weights by name
// according to plan.init_mode, and trains every parameter. TwoStepWarm uses
// lr_joint; the other modes lr_finetune. For cascading, `warm.text` is the
// frozen stage-1 model and `text_scores` receive its logits.
PhaseResult joint_train(const TrainPlan& plan, const ModelConfig& config, const TrainData& data,
                        const WarmStores& warm, LossLog* log = nullptr, std::size_t epochs_override = SIZE_MAX);

// Frozen stage-1 logits of a TextOnly store for every record.
std::vector<double> text_scores(const ParamStore& text_store, const ModelConfig& config,
                                const std::vector<FeaturizedRecord>& records);

// Checkpoint contents of a live store.
LoadedCheckpoint snapshot(const ParamStore& store, const CheckpointHeader& header = {});

}  // namespace ctrfusion
