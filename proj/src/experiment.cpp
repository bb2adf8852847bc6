#include "ctrfusion/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ctrfusion/errors.hpp"
#include "ctrfusion/hashing.hpp"
#include "ctrfusion/records.hpp"

namespace ctrfusion {
namespace {

using nlohmann::json;

// Reads keys out of one JSON object and rejects any it was not asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(j, "config");
  int version = 0;
  top.get("version", version);
  if (version != kConfigVersion) {
    throw ConfigError("config version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  if (top.has("paths")) {
    Section s(top.at("paths"), "paths");
    std::string train, valid;
    s.get("train", train);
    s.get("valid", valid);
    if (!train.empty()) c.train_path = base / train;
    if (!valid.empty()) c.valid_path = base / valid;
    for (const auto& p : {c.train_path, c.valid_path}) {
      if (!p.empty() && !std::filesystem::exists(p)) throw ConfigError("paths: file " + p.string() + " does not exist");
    }
  }
  if (top.has("framework")) {
    std::string name;
    top.get("framework", name);
    c.plan.framework = parse_framework(name);
  }
  if (top.has("plan")) {
    Section s(top.at("plan"), "plan");
    std::string mode = init_mode_name(c.plan.init_mode);
    s.get("init_mode", mode);
    c.plan.init_mode = parse_init_mode(mode);
    s.get("lr_pretrain", c.plan.lr_pretrain);
    s.get("lr_finetune", c.plan.lr_finetune);
    s.get("lr_joint", c.plan.lr_joint);
    s.get("pretrain_epochs", c.plan.pretrain_epochs);
    s.get("finetune_epochs", c.plan.finetune_epochs);
    s.get("nontextual_epochs", c.plan.nontextual_epochs);
    s.get("joint_epochs", c.plan.joint_epochs);
    s.get("batch_size", c.plan.batch_size);
    s.get("seed", c.plan.seed);
    s.get("loss_log_interval", c.plan.loss_log_interval);
    s.get("id_dropout", c.plan.id_dropout);
  }
  if (top.has("encoder")) {
    Section s(top.at("encoder"), "encoder");
    EncoderConfig& e = c.model.encoder;
    s.get("layers", e.layers);
    s.get("hidden", e.hidden);
    s.get("heads", e.heads);
    s.get("ffn", e.ffn);
    s.get("seq_len", e.seq_len);
    s.get("tanh_pooler", e.tanh_pooler);
  }
  if (top.has("reduction")) {
    Section s(top.at("reduction"), "reduction");
    s.get("sub_dim", c.model.reduction.sub_dim);
    s.get("reduced_dim", c.model.reduction.reduced_dim);
  }
  if (top.has("fusion")) {
    Section s(top.at("fusion"), "fusion");
    s.get("score_dim", c.model.score_dim);
    s.get("ffn", c.model.fusion_ffn);
  }
  if (top.has("numbert")) {
    Section s(top.at("numbert"), "numbert");
    s.get("length", c.model.numbert_length);
    s.get("number_tokens", c.number_tokens);
  }
  if (top.has("features")) {
    Section s(top.at("features"), "features");
    s.get("ids", c.families.ids);
    s.get("historical", c.families.historical);
    s.get("length", c.families.length);
    s.get("semantic", c.families.semantic);
    s.get("numeric", c.families.numeric);
    s.get("vocab_max", c.vocab_max);
  }
  if (top.has("eval")) {
    Section s(top.at("eval"), "eval");
    s.get("partitions", c.eval.partitions);
    s.get("tail_threshold", c.eval.tail_threshold);
    s.get("seed", c.eval.seed);
  }
  c.plan.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string dump_config(const ExperimentConfig& c) {
  const EncoderConfig& e = c.model.encoder;
  json j = {
      {"version", kConfigVersion},
      {"framework", framework_name(c.plan.framework)},
      {"plan",
       {{"init_mode", init_mode_name(c.plan.init_mode)},
        {"lr_pretrain", c.plan.lr_pretrain},
        {"lr_finetune", c.plan.lr_finetune},
        {"lr_joint", c.plan.lr_joint},
        {"pretrain_epochs", c.plan.pretrain_epochs},
        {"finetune_epochs", c.plan.finetune_epochs},
        {"nontextual_epochs", c.plan.nontextual_epochs},
        {"joint_epochs", c.plan.joint_epochs},
        {"batch_size", c.plan.batch_size},
        {"seed", c.plan.seed},
        {"loss_log_interval", c.plan.loss_log_interval},
        {"id_dropout", c.plan.id_dropout}}},
      {"encoder",
       {{"layers", e.layers},
        {"hidden", e.hidden},
        {"heads", e.heads},
        {"ffn", e.ffn},
        {"seq_len", e.seq_len},
        {"tanh_pooler", e.tanh_pooler}}},
      {"reduction", {{"sub_dim", c.model.reduction.sub_dim}, {"reduced_dim", c.model.reduction.reduced_dim}}},
      {"fusion", {{"score_dim", c.model.score_dim}, {"ffn", c.model.fusion_ffn}}},
      {"numbert", {{"length", c.model.numbert_length}, {"number_tokens", c.number_tokens}}},
      {"features",
       {{"ids", c.families.ids},
        {"historical", c.families.historical},
        {"length", c.families.length},
        {"semantic", c.families.semantic},
        {"numeric", c.families.numeric},
        {"vocab_max", c.vocab_max}}},
      {"eval",
       {{"partitions", c.eval.partitions}, {"tail_threshold", c.eval.tail_threshold}, {"seed", c.eval.seed}}},
  };
  if (!c.train_path.empty() || !c.valid_path.empty()) {
    j["paths"] = {{"train", c.train_path.string()}, {"valid", c.valid_path.string()}};
  }
  return j.dump(2);
}

PreparedData prepare_data(const RawLog& train, const RawLog& valid, const ExperimentConfig& config) {
  if (train.records.empty()) throw Error("prepare_data: empty training log");
  if (!(train.layout == valid.layout)) throw ConfigError("prepare_data: train and valid logs differ in layout");
  PreparedData d;
  std::vector<Document> corpus;
  corpus.reserve(train.records.size());
  for (const RawRecord& r : train.records) {
    Document doc = r.query;
    const auto ad = r.ad_tokens();
    doc.insert(doc.end(), ad.begin(), ad.end());
    corpus.push_back(std::move(doc));
  }
  d.vocab = Vocab::build(corpus, config.vocab_max);
  d.space = FeatureSpace::fit(train, config.families);
  d.train = d.space.featurize_all(train, d.vocab, config.model.encoder.seq_len);
  d.valid = d.space.featurize_all(valid, d.vocab, config.model.encoder.seq_len);
  // Number tokens are appended, so text ids assigned above stay valid.
  d.vocab.extend(numbert_vocab_tokens(d.train, config.number_tokens));
  for (const RawRecord& r : train.records) ++d.pairs[r.pair_key()];

  d.model = config.model;
  d.model.encoder.vocab_size = d.vocab.size();
  d.model.numeric_slots = std::max<std::size_t>(1, d.space.schema().features.size());
  if (d.model.numbert_length == 0) {
    std::size_t longest = d.model.encoder.seq_len;
    for (const FeaturizedRecord& r : d.train) longest = std::max(longest, numbert_length(r.tokens, numbert_values(r)));
    d.model.numbert_length = longest;
  }
  d.model.encoder.max_positions = std::max(d.model.encoder.seq_len, d.model.numbert_length);
  d.model.validate();
  return d;
}

ScoredSet scored_set(const std::vector<FeaturizedRecord>& records, const std::vector<double>& scores,
                     const EvalSettings& settings) {
  if (records.size() != scores.size()) throw DimensionError("scored_set: one score per record required");
  ScoredSet s;
  s.scores = scores;
  for (const FeaturizedRecord& r : records) {
    s.labels.push_back(r.label);
    s.pair_keys.push_back(r.pair_key);
  }
  s.partitions = assign_partitions(records.size(), settings.partitions, settings.seed);
  return s;
}

std::vector<double> score_framework(FrameworkKind kind, const ParamStore& store, const PreparedData& data,
                                    const ParamStore* stage1) {
  std::vector<double> text;
  if (kind == FrameworkKind::kCascading) {
    if (!stage1) throw Error("cascading: the stage-1 text model is missing");
    text = text_scores(*stage1, data.model, data.valid);
  }
  auto model = make_model(kind, data.model, data.space.schema(), store);
  const auto examples = prepare_examples(kind, data.valid, data.vocab, data.model, &text);
  return predict(store, predictor(*model), examples);
}

PipelineResult run_pipeline(const ExperimentConfig& config, const PreparedData& data) {
  const TrainPlan& plan = config.plan;
  plan.validate();
  const FrameworkKind kind = plan.framework;
  const TrainData td = data.data();
  PipelineResult r{std::nullopt, std::nullopt, std::nullopt, {ParamStore(0), {}, {}}, {}, {}, {}};
  const bool needs_text = kind == FrameworkKind::kCascading || plan.init_mode != InitMode::kNoFinetunedRandom;
  r.pretrained = pretrain_text(plan, data.model, td, &r.log);
  if (needs_text) r.text = warmup_text(plan, data.model, td, &r.pretrained->store, &r.log);
  if (plan.init_mode == InitMode::kTwoStepWarm) r.nontextual = warmup_nontextual(plan, data.model, td, &r.log);
  WarmStores warm{&r.pretrained->store, r.text ? &r.text->store : nullptr,
                  r.nontextual ? &r.nontextual->store : nullptr};
  r.final = joint_train(plan, data.model, td, warm, &r.log);
  r.valid_scores = score_framework(kind, r.final.store, data, warm.text);
  r.report = evaluate(framework_name(kind), scored_set(data.valid, r.valid_scores, config.eval), data.pairs,
                      config.eval);
  return r;
}

void write_run(const std::filesystem::path& dir, const ExperimentConfig& config, const PreparedData& data,
               const PipelineResult& result) {
  std::filesystem::create_directories(dir);
  const std::uint64_t hash = plan_hash(config.plan, data.model);
  {
    std::ofstream out(dir / "config.json");
    out << dump_config(config) << "\n";
  }
  data.vocab.save(dir / "vocab.txt");
  data.space.save(dir / "schema.json");
  auto save = [&](const char* name, const std::optional<PhaseResult>& phase) {
    if (phase) save_checkpoint(dir / name, phase->store, {name, phase->fit.steps, hash, config.plan.seed});
  };
  save("pretrain.ckpt", result.pretrained);
  save("warm-text.ckpt", result.text);
  save("warm-nontextual.ckpt", result.nontextual);
  save_checkpoint(dir / "final.ckpt", result.final.store, {"joint", result.final.fit.steps, hash, config.plan.seed});
  result.log.write_csv(dir / "loss.csv");
  write_values(dir / "scores.txt", result.valid_scores, "validation click probability, source final.ckpt");
  emit_report(dir / "report.tsv", {result.report});
  json summary = {
      {"framework", framework_name(config.plan.framework)},
      {"init_mode", init_mode_name(config.plan.init_mode)},
      {"plan_hash", hex64(hash)},
      {"final_checkpoint", hex64(result.final.store.checksum())},
      {"best_epoch", result.final.fit.best_epoch},
      {"epoch_auc", result.final.fit.epoch_auc},
      {"dropped_warm_parameters", result.final.dropped},
  };
  std::ofstream out(dir / "summary.json");
  out << summary.dump(2) << "\n";
}

std::filesystem::path default_run_dir(const ExperimentConfig& config, const ModelConfig& model) {
  const char* root = std::getenv("CTRFUSION_RUNS");
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", std::gmtime(&now));
  return std::filesystem::path(root ? root : "runs") / (std::string(stamp) + "-" + hex64(plan_hash(config.plan, model)));
}

}  // namespace ctrfusion
