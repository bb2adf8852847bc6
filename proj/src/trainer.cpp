#include "ctrfusion/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>

#include "ctrfusion/batch.hpp"
#include "ctrfusion/errors.hpp"
#include "ctrfusion/hashing.hpp"
#include "ctrfusion/metrics.hpp"
#include "ctrfusion/mlm.hpp"
#include "ctrfusion/records.hpp"

namespace ctrfusion {
namespace {

struct ModeName {
  InitMode mode;
  const char* name;
};
constexpr ModeName kModes[] = {
    {InitMode::kNoFinetunedRandom, "no-finetune-random"},
    {InitMode::kFinetunedRandom, "finetune-random"},
    {InitMode::kTwoStepWarm, "two-step"},
};

// Running mean of per-example losses that flushes a row every `interval`
// records and at the end of each epoch.
class IntervalLogger {
 public:
  IntervalLogger(LossLog* log, std::string phase, std::size_t interval)
      : log_(log), phase_(std::move(phase)), interval_(interval) {}

  void add(double loss) {
    sum_ += loss;
    ++count_;
    ++seen_;
    if (count_ == interval_) flush();
  }
  void flush() {
    if (count_ == 0) return;
    if (log_) log_->rows.push_back({seen_, sum_ / static_cast<double>(count_), phase_});
    sum_ = 0.0;
    count_ = 0;
  }

 private:
  LossLog* log_;
  std::string phase_;
  std::size_t interval_;
  double sum_ = 0.0;
  std::size_t count_ = 0;
  std::size_t seen_ = 0;
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void require_data(const TrainData& d, const char* phase) {
  if (!d.schema || !d.vocab || !d.train || !d.valid) throw Error(std::string(phase) + ": training data not set");
  if (d.train->empty()) throw Error(std::string(phase) + ": empty training data");
}

std::vector<Example> plain_examples(const std::vector<FeaturizedRecord>& records) {
  std::vector<Example> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out[i].record = &records[i];
  return out;
}

std::vector<std::string> load_from(ParamStore& into, const ParamStore* from) {
  if (!from) return {};
  return load_matching(into, snapshot(*from));
}

}  // namespace

std::string init_mode_name(InitMode mode) {
  for (const ModeName& m : kModes) {
    if (m.mode == mode) return m.name;
  }
  throw Error("unknown init mode");
}

InitMode parse_init_mode(const std::string& name) {
  for (const ModeName& m : kModes) {
    if (name == m.name) return m.mode;
  }
  throw ConfigError("unknown init mode '" + name + "' (expected no-finetune-random, finetune-random or two-step)");
}

void TrainPlan::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (loss_log_interval < 1) throw ConfigError("loss_log_interval must be at least 1");
  if (!(lr_pretrain > 0 && lr_finetune > 0 && lr_joint > 0)) throw ConfigError("learning rates must be positive");
  if (init_mode == InitMode::kTwoStepWarm && !(lr_joint < lr_finetune)) {
    throw ConfigError("two-step training needs lr_joint < lr_finetune");
  }
  if (id_dropout < 0 || id_dropout > 1) throw ConfigError("id_dropout must lie in [0, 1]");
}

std::uint64_t plan_hash(const TrainPlan& p, const ModelConfig& c) {
  Fnv1a h;
  h.update(framework_name(p.framework));
  h.update(init_mode_name(p.init_mode));
  for (double v : {p.lr_pretrain, p.lr_finetune, p.lr_joint, p.id_dropout}) h.update_pod(v);
  for (std::size_t v : {p.pretrain_epochs, p.finetune_epochs, p.nontextual_epochs, p.joint_epochs, p.batch_size,
                        p.loss_log_interval}) {
    h.update_pod(static_cast<std::uint64_t>(v));
  }
  h.update_pod(p.seed);
  const EncoderConfig& e = c.encoder;
  for (std::size_t v : {e.layers, e.hidden, e.heads, e.ffn, e.seq_len, e.max_positions, e.vocab_size,
                        c.reduction.sub_dim, c.reduction.reduced_dim, c.score_dim, c.fusion_ffn, c.numbert_length,
                        c.numeric_slots}) {
    h.update_pod(static_cast<std::uint64_t>(v));
  }
  h.update_pod(e.tanh_pooler);
  return h.value();
}

void LossLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss log " + path.string());
  out << "records_seen,aggregated_logloss,phase\n";
  for (const Row& r : rows) out << r.records_seen << "," << format_double(r.loss) << "," << r.phase << "\n";
  if (!out) throw IoError("failed writing loss log " + path.string());
}

Predictor predictor(const ClickModel& model) {
  return {[&model](Graph& g, const Example& ex, std::span<const int> ids, bool training) {
            return model.probability(g, ex, ids, training);
          },
          model.uses_sparse_ids()};
}

Predictor predictor(const NonTextualModel& model) {
  return {[&model](Graph& g, const Example& ex, std::span<const int> ids, bool training) {
            return model.probability(g, *ex.record, ids, training);
          },
          true};
}

std::vector<double> predict(const ParamStore& store, const Predictor& model, const std::vector<Example>& examples) {
  std::vector<double> out(examples.size());
  std::vector<std::exception_ptr> errors(examples.size());
  const auto n = static_cast<long>(examples.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto e = static_cast<std::size_t>(i);
    try {
      Graph g(store);
      out[e] = g.scalar(model.probability(g, examples[e], examples[e].record->sparse_ids, false));
    } catch (...) {
      errors[e] = std::current_exception();
    }
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return out;
}

FitResult fit(ParamStore& store, const Predictor& model, const std::vector<Example>& train,
              const std::vector<Example>& valid, const FitOptions& o, LossLog* log) {
  if (train.empty()) throw Error(o.phase + ": empty training data");
  if (o.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  const auto start = std::chrono::steady_clock::now();
  AdamState adam(store, AdamOptions{o.learning_rate});
  IntervalLogger logger(log, o.phase, o.log_interval);
  FitResult result;
  std::optional<ParamStore> best;
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(train.size(), o.seed, epoch);
    const std::uint64_t epoch_seed = mix_seed(o.seed ^ 0x5bd1e995ULL, epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += o.batch_size) {
      const std::size_t count = std::min(o.batch_size, order.size() - begin);
      const std::vector<double> weights(count, 1.0 / static_cast<double>(count));
      const auto losses = run_batch(
          store, count,
          [&](Graph& g, std::size_t k) {
            const std::size_t idx = order[begin + k];
            const Example& ex = train[idx];
            Var p;
            if (model.uses_sparse_ids && o.id_dropout > 0) {
              std::mt19937_64 rng(mix_seed(epoch_seed, idx));
              const std::vector<int> ids = robust_id_dropout(ex.record->sparse_ids, o.id_dropout, rng, true);
              p = model.probability(g, ex, ids, true);
            } else {
              p = model.probability(g, ex, ex.record->sparse_ids, true);
            }
            return g.bce(p, ex.record->label);
          },
          weights);
      adam_step(store, adam);
      for (double l : losses) logger.add(l);
      result.records += count;
      ++result.steps;
    }
    logger.flush();
    if (!valid.empty()) {
      std::vector<double> scores = predict(store, model, valid);
      std::vector<int> labels(valid.size());
      for (std::size_t i = 0; i < valid.size(); ++i) labels[i] = valid[i].record->label;
      const double a = auc(scores, labels, o.phase + " validation");
      result.epoch_auc.push_back(a);
      if (result.epoch_auc.size() == 1 || a > result.best_auc) {
        result.best_auc = a;
        result.best_epoch = epoch;
        if (o.keep_best && epoch + 1 < o.epochs) best = store;
        if (o.keep_best && epoch + 1 == o.epochs) best.reset();
      }
    }
  }
  if (best) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      std::copy(best->tensor(i).values().begin(), best->tensor(i).values().end(), store.tensor(i).values().begin());
    }
  }
  store.zero_grads();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

double pretrain_mlm(ParamStore& store, const TextEncoder& encoder, const std::vector<TokenSeq>& seqs,
                    std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed, LossLog* log,
                    std::size_t log_interval) {
  if (seqs.empty()) throw Error("mlm: empty corpus");
  AdamState adam(store, AdamOptions{lr});
  IntervalLogger logger(log, "mlm", log_interval);
  double last = 0.0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(seqs.size(), seed ^ 0x6d6c6dULL, epoch);
    std::mt19937_64 rng(mix_seed(seed, 1000 + epoch));
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - begin);
      std::vector<TokenSeq> batch;
      for (std::size_t k = 0; k < count; ++k) batch.push_back(seqs[order[begin + k]]);
      const double loss = mlm_step(batch, store, encoder, adam, rng);
      for (std::size_t k = 0; k < count; ++k) logger.add(loss);
      total += loss;
      ++batches;
    }
    logger.flush();
    last = total / static_cast<double>(batches);
  }
  store.zero_grads();
  return last;
}

PhaseResult pretrain_text(const TrainPlan& plan, const ModelConfig& config, const TrainData& data, LossLog* log) {
  require_data(data, "pretrain");
  plan.validate();
  PhaseResult r{ParamStore(plan.seed), {}, {}};
  register_framework(r.store, FrameworkKind::kTextOnly, config, *data.schema);
  TextEncoder encoder(config.encoder, r.store);
  std::vector<TokenSeq> seqs;
  seqs.reserve(data.train->size());
  for (const FeaturizedRecord& rec : *data.train) seqs.push_back(rec.tokens);
  const auto start = std::chrono::steady_clock::now();
  pretrain_mlm(r.store, encoder, seqs, plan.pretrain_epochs, plan.lr_pretrain, plan.batch_size, plan.seed, log,
               plan.loss_log_interval);
  r.fit.records = seqs.size() * plan.pretrain_epochs;
  r.fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

PhaseResult warmup_text(const TrainPlan& plan, const ModelConfig& config, const TrainData& data,
                        const ParamStore* pretrained, LossLog* log) {
  require_data(data, "warmup_text");
  plan.validate();
  PhaseResult r{ParamStore(plan.seed), {}, {}};
  register_framework(r.store, FrameworkKind::kTextOnly, config, *data.schema);
  double pre_seconds = 0.0;
  if (pretrained) {
    r.dropped = load_from(r.store, pretrained);
  } else {
    PhaseResult pre = pretrain_text(plan, config, data, log);
    pre_seconds = pre.fit.seconds;
    r.store = std::move(pre.store);
  }
  TextOnlyModel model(config, r.store);
  const std::vector<Example> train = plain_examples(*data.train);
  const std::vector<Example> valid = plain_examples(*data.valid);
  r.fit = fit(r.store, predictor(model), train, valid,
              {"warm-text", plan.lr_finetune, plan.finetune_epochs, plan.batch_size, plan.seed,
               plan.loss_log_interval, plan.id_dropout, true},
              log);
  r.fit.seconds += pre_seconds;
  return r;
}

PhaseResult warmup_nontextual(const TrainPlan& plan, const ModelConfig& config, const TrainData& data, LossLog* log) {
  require_data(data, "warmup_nontextual");
  plan.validate();
  PhaseResult r{ParamStore(plan.seed), {}, {}};
  NonTextualModel::register_params(r.store, *data.schema, config.reduction);
  NonTextualModel model(*data.schema, config.reduction, r.store);
  r.fit = fit(r.store, predictor(model), plain_examples(*data.train), plain_examples(*data.valid),
              {"warm-nontextual", plan.lr_finetune, plan.nontextual_epochs, plan.batch_size, plan.seed,
               plan.loss_log_interval, plan.id_dropout, true},
              log);
  return r;
}

std::vector<double> text_scores(const ParamStore& text_store, const ModelConfig& config,
                                const std::vector<FeaturizedRecord>& records) {
  TextOnlyModel model(config, text_store);
  std::vector<double> out(records.size());
  const auto n = static_cast<long>(records.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    Graph g(text_store);
    Example ex;
    ex.record = &records[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = g.scalar(model.score(g, ex));
  }
  return out;
}

PhaseResult joint_train(const TrainPlan& plan, const ModelConfig& config, const TrainData& data,
                        const WarmStores& warm, LossLog* log, std::size_t epochs_override) {
  require_data(data, "joint_train");
  plan.validate();
  const FrameworkKind kind = plan.framework;
  PhaseResult r{ParamStore(mix_seed(plan.seed, static_cast<std::uint64_t>(kind) + 17)), {}, {}};
  register_framework(r.store, kind, config, *data.schema);

  std::vector<double> train_scores;
  std::vector<double> valid_scores;
  if (kind == FrameworkKind::kCascading) {
    if (!warm.text) throw Error("cascading: the stage-1 text model is missing");
    train_scores = text_scores(*warm.text, config, *data.train);
    valid_scores = text_scores(*warm.text, config, *data.valid);
  }

  auto add_dropped = [&](std::vector<std::string> names) {
    r.dropped.insert(r.dropped.end(), names.begin(), names.end());
  };
  switch (plan.init_mode) {
    case InitMode::kNoFinetunedRandom:
      if (kind != FrameworkKind::kCascading) {
        if (!warm.pretrained) throw Error("no-finetune-random: pretrained text model missing");
        add_dropped(load_from(r.store, warm.pretrained));
      }
      break;
    case InitMode::kFinetunedRandom:
      if (kind != FrameworkKind::kCascading) {
        if (!warm.text) throw Error("finetune-random: warm text model missing");
        add_dropped(load_from(r.store, warm.text));
      }
      break;
    case InitMode::kTwoStepWarm:
      if (kind != FrameworkKind::kCascading) {
        if (!warm.text) throw Error("two-step: warm text model missing");
        add_dropped(load_from(r.store, warm.text));
      }
      if (!warm.nontextual) throw Error("two-step: warm non-textual model missing");
      add_dropped(load_from(r.store, warm.nontextual));
      break;
  }

  auto model = make_model(kind, config, *data.schema, r.store);
  std::size_t cut = 0;
  const std::vector<Example> train =
      prepare_examples(kind, *data.train, *data.vocab, config, &train_scores, &cut);
  const std::vector<Example> valid = prepare_examples(kind, *data.valid, *data.vocab, config, &valid_scores);
  if (cut) {
    std::fprintf(stderr, "warning: %zu of %zu records lost trailing NumBERT features to the %zu-token limit\n", cut,
                 train.size(), config.numbert_length);
  }
  const double lr = plan.init_mode == InitMode::kTwoStepWarm ? plan.lr_joint : plan.lr_finetune;
  const std::size_t epochs = epochs_override == SIZE_MAX ? plan.joint_epochs : epochs_override;
  r.fit = fit(r.store, predictor(*model), train, valid,
              {"joint", lr, epochs, plan.batch_size, plan.seed, plan.loss_log_interval, plan.id_dropout, true}, log);
  return r;
}

LoadedCheckpoint snapshot(const ParamStore& store, const CheckpointHeader& header) {
  LoadedCheckpoint c;
  c.header = header;
  c.names = store.names();
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor t = store.tensor(i);
    t.drop_grad();
    c.tensors.push_back(std::move(t));
  }
  return c;
}

}  // namespace ctrfusion
