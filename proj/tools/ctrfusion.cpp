// Command-line front end: data generation, featurization, training,
// evaluation, latency benchmarks and multi-run comparison.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ctrfusion/errors.hpp"
#include "ctrfusion/experiment.hpp"
#include "ctrfusion/hashing.hpp"
#include "ctrfusion/kdd.hpp"
#include "ctrfusion/kernels.hpp"
#include "ctrfusion/synthetic.hpp"
#include "ctrfusion/timecost.hpp"

using namespace ctrfusion;
namespace fs = std::filesystem;

namespace {

struct DataArgs {
  std::string config;
  std::string train;
  std::string valid;
};

ExperimentConfig load_experiment(const DataArgs& a) {
  ExperimentConfig c = a.config.empty() ? parse_config(R"({"version": 1})") : load_config(a.config);
  if (!a.train.empty()) c.train_path = a.train;
  if (!a.valid.empty()) c.valid_path = a.valid;
  if (c.train_path.empty() || c.valid_path.empty()) {
    throw ConfigError("training and validation logs are required (config paths or --train/--valid)");
  }
  return c;
}

PreparedData load_data(const ExperimentConfig& c) {
  return prepare_data(read_log(c.train_path), read_log(c.valid_path), c);
}

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--config", a.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--train", a.train, "training log (overrides the config)")->check(CLI::ExistingFile);
  cmd->add_option("--valid", a.valid, "validation log (overrides the config)")->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctrfusion: multi-modal CTR models with uni-attention fusion"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "OpenMP threads")->check(CLI::PositiveNumber);

  // gen
  SyntheticSpec spec;
  std::string gen_out = "data";
  bool no_entity_ids = false;
  auto* gen = app.add_subcommand("gen", "write a synthetic click log with ground-truth probabilities");
  gen->add_option("--records", spec.records, "training records");
  gen->add_option("--valid-records", spec.valid_records, "validation records");
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--vocab-size", spec.vocab_size);
  gen->add_option("--topics", spec.topics);
  gen->add_option("--queries", spec.queries);
  gen->add_option("--ads", spec.ads);
  gen->add_option("--users", spec.users);
  gen->add_option("--noise-sparse", spec.noise_sparse);
  gen->add_option("--noise-numeric", spec.noise_numeric);
  gen->add_option("--w-text", spec.w_text);
  gen->add_option("--w-feat", spec.w_feat);
  gen->add_option("--w-cross", spec.w_cross);
  gen->add_option("--base-ctr", spec.base_ctr);
  gen->add_option("--position-bias", spec.position_bias);
  gen->add_flag("--no-entity-ids", no_entity_ids, "leave out user/ad/query id columns");
  gen->add_option("--out", gen_out, "output directory");

  // ingest
  std::string kdd_in;
  std::string kdd_out = "data";
  std::uint64_t kdd_seed = 1;
  auto* ingest = app.add_subcommand("ingest", "convert a flattened KDD Cup 2012 track 2 file and split 1/11 off");
  ingest->add_option("input", kdd_in, "flattened TSV")->required();
  ingest->add_option("--seed", kdd_seed, "split seed");
  ingest->add_option("--out", kdd_out, "output directory");

  // vocab
  DataArgs vocab_args;
  std::string vocab_out = "vocab.txt";
  auto* vocab = app.add_subcommand("vocab", "build the TF x IDF vocabulary (plus number tokens)");
  add_data_options(vocab, vocab_args);
  vocab->add_option("--out", vocab_out);

  // featurize
  DataArgs feat_args;
  std::string feat_out = "features";
  auto* featurize = app.add_subcommand("featurize", "fit feature tables on the training log and write the schema");
  add_data_options(featurize, feat_args);
  featurize->add_option("--out", feat_out, "output directory");

  // train
  DataArgs train_args;
  std::string framework;
  std::string init_mode;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string run_dir;
  auto* train = app.add_subcommand("train", "run every phase of one framework and write a run directory");
  add_data_options(train, train_args);
  train->add_option("--framework", framework, "textonly, numbert, numbert-uniattention, numbert-uniattention-reduced, "
                                              "shallow1, shallown, cascading or bert4ctr");
  train->add_option("--init-mode", init_mode, "no-finetune-random, finetune-random or two-step");
  train->add_option("--seed", seed)->each([&](const std::string&) { seed_set = true; });
  train->add_option("--run-dir", run_dir, "exact output directory (default: $CTRFUSION_RUNS/<time>-<plan hash>)");

  // eval
  std::string eval_run;
  auto* eval = app.add_subcommand("eval", "re-score a run's final checkpoint and print its metrics report");
  eval->add_option("run", eval_run, "run directory")->required()->check(CLI::ExistingDirectory);

  // bench
  DataArgs bench_args;
  std::string bench_framework = "bert4ctr";
  std::size_t repeats = kTimingRepeats;
  std::size_t samples = 200;
  std::string bench_out = "latency.json";
  auto* bench = app.add_subcommand("bench", "time training and inference (ms/sample); needs exclusive use of the host");
  add_data_options(bench, bench_args);
  bench->add_option("--framework", bench_framework);
  bench->add_option("--repeats", repeats)->check(CLI::Range(2, 1000000));
  bench->add_option("--samples", samples, "records timed per repeat")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out);

  // compare
  std::vector<std::string> compare_runs;
  std::string compare_out = "comparison.tsv";
  auto* compare = app.add_subcommand("compare", "pairwise (diff, t) over the reports of several runs");
  compare->add_option("runs", compare_runs, "run directories")->required()->check(CLI::ExistingDirectory);
  compare->add_option("--out", compare_out);

  CLI11_PARSE(app, argc, argv);
  kernels::set_threads(threads);

  try {
    if (*gen) {
      spec.entity_ids = !no_entity_ids;
      const SyntheticData d = generate_synthetic(spec);
      write_synthetic(gen_out, d);
      std::printf("wrote %zu train and %zu validation records to %s\n", d.train.records.size(),
                  d.valid.records.size(), gen_out.c_str());
    } else if (*ingest) {
      const KddIngest in = ingest_kdd(kdd_in);
      const HoldoutSplit split = split_holdout(in.log, kdd_seed);
      fs::create_directories(kdd_out);
      write_log(fs::path(kdd_out) / "train.tsv", split.train);
      write_log(fs::path(kdd_out) / "valid.tsv", split.valid);
      std::printf("%zu lines, %zu malformed (skipped), %zu records: %zu train, %zu validation\n", in.summary.lines,
                  in.summary.malformed, in.summary.records, split.train.records.size(), split.valid.records.size());
    } else if (*vocab) {
      const PreparedData d = load_data(load_experiment(vocab_args));
      d.vocab.save(vocab_out);
      std::printf("%zu tokens (%zu content) written to %s\n", d.vocab.size(), d.vocab.content_size(),
                  vocab_out.c_str());
    } else if (*featurize) {
      const PreparedData d = load_data(load_experiment(feat_args));
      fs::create_directories(feat_out);
      d.space.save(fs::path(feat_out) / "schema.json");
      d.vocab.save(fs::path(feat_out) / "vocab.txt");
      std::printf("%zu sparse and %zu dense features, %zu train / %zu validation records\n",
                  d.space.schema().sparse_count(), d.space.schema().dense_count(), d.train.size(), d.valid.size());
    } else if (*train) {
      ExperimentConfig c = load_experiment(train_args);
      if (!framework.empty()) c.plan.framework = parse_framework(framework);
      if (!init_mode.empty()) c.plan.init_mode = parse_init_mode(init_mode);
      if (seed_set) c.plan.seed = seed;
      c.plan.validate();
      const PreparedData d = load_data(c);
      const fs::path dir = run_dir.empty() ? default_run_dir(c, d.model) : fs::path(run_dir);
      const PipelineResult r = run_pipeline(c, d);
      write_run(dir, c, d, r);
      const SliceMetrics& all = r.report.slice("ALL");
      std::printf("%s (%s): validation AUC %.4f, RIG %.4f\nrun directory %s\n", framework_name(c.plan.framework).c_str(),
                  init_mode_name(c.plan.init_mode).c_str(), all.auc, all.rig, dir.c_str());
      if (!r.final.dropped.empty()) {
        std::printf("warm parameters without a counterpart (dropped): %zu\n", r.final.dropped.size());
      }
    } else if (*eval) {
      const fs::path dir = eval_run;
      ExperimentConfig c = load_config(dir / "config.json");
      const PreparedData d = load_data(c);
      const LoadedCheckpoint ckpt = read_checkpoint(dir / "final.ckpt");
      ParamStore store(c.plan.seed);
      register_framework(store, c.plan.framework, d.model, d.space.schema());
      const auto dropped = load_matching(store, ckpt);
      if (!dropped.empty()) throw Error("final.ckpt holds parameters the framework does not have");
      std::optional<ParamStore> stage1;
      if (c.plan.framework == FrameworkKind::kCascading) {
        stage1.emplace(c.plan.seed);
        register_framework(*stage1, FrameworkKind::kTextOnly, d.model, d.space.schema());
        load_matching(*stage1, read_checkpoint(dir / "warm-text.ckpt"));
      }
      const auto scores = score_framework(c.plan.framework, store, d, stage1 ? &*stage1 : nullptr);
      const MetricsReport report = evaluate(framework_name(c.plan.framework), scored_set(d.valid, scores, c.eval),
                                            d.pairs, c.eval);
      emit_report(dir / "report.tsv", {report});
      for (const SliceMetrics& s : report.slices) {
        std::printf("%s\t%s\tAUC %.6f\tRIG %.6f\n", report.framework.c_str(), s.slice.c_str(), s.auc, s.rig);
      }
    } else if (*bench) {
      ExperimentConfig c = load_experiment(bench_args);
      c.plan.framework = parse_framework(bench_framework);
      const PreparedData d = load_data(c);
      const std::size_t n = std::min(samples, d.train.size());
      const std::vector<FeaturizedRecord> subset(d.train.begin(), d.train.begin() + static_cast<long>(n));
      const FeatureSchema& schema = d.space.schema();
      const FrameworkKind kind = c.plan.framework;
      std::vector<LatencyReport> reports;

      ParamStore text_store(c.plan.seed);
      register_framework(text_store, FrameworkKind::kTextOnly, d.model, schema);
      TextOnlyModel text_model(d.model, text_store);
      std::vector<TokenSeq> seqs;
      for (const auto& r : subset) seqs.push_back(r.tokens);
      const std::vector<double> scores = text_scores(text_store, d.model, subset);

      ParamStore store(c.plan.seed);
      register_framework(store, kind, d.model, schema);
      auto model = make_model(kind, d.model, schema, store);
      const auto examples = prepare_examples(kind, subset, d.vocab, d.model, &scores);
      std::vector<LatencyReport> train_parts;
      std::vector<LatencyReport> infer_parts;
      if (kind == FrameworkKind::kNumBert) {
        std::vector<TokenSeq> numbert_seqs;
        for (const auto& ex : examples) numbert_seqs.push_back(ex.numbert);
        train_parts.push_back(measure_mlm("train/pretrain", store, d.model.encoder, numbert_seqs, c.plan.batch_size,
                                          repeats));
      } else if (kind != FrameworkKind::kCascading || true) {
        train_parts.push_back(measure_mlm("train/pretrain", text_store, d.model.encoder, seqs, c.plan.batch_size,
                                          repeats));
      }
      std::vector<Example> text_examples(subset.size());
      for (std::size_t i = 0; i < subset.size(); ++i) text_examples[i].record = &subset[i];
      const bool warm_text = kind != FrameworkKind::kTextOnly && kind != FrameworkKind::kNumBert;
      if (warm_text || kind == FrameworkKind::kTextOnly) {
        train_parts.push_back(measure_training("train/warm-text", text_store, predictor(text_model), text_examples,
                                               c.plan.batch_size, repeats));
      }
      if (kind == FrameworkKind::kCascading) {
        infer_parts.push_back(measure_inference("inference/stage1", text_store, predictor(text_model),
                                                text_examples, repeats));
      }
      if (warm_text && kind != FrameworkKind::kCascading && c.plan.init_mode == InitMode::kTwoStepWarm) {
        ParamStore nt(c.plan.seed);
        NonTextualModel::register_params(nt, schema, d.model.reduction);
        NonTextualModel nt_model(schema, d.model.reduction, nt);
        train_parts.push_back(measure_training("train/warm-nontextual", nt, predictor(nt_model), text_examples,
                                               c.plan.batch_size, repeats));
      }
      if (kind != FrameworkKind::kTextOnly) {
        const char* phase = kind == FrameworkKind::kNumBert ? "train/finetune" : "train/joint";
        train_parts.push_back(measure_training(phase, store, predictor(*model), examples, c.plan.batch_size,
                                               repeats));
      }
      infer_parts.push_back(measure_inference(kind == FrameworkKind::kCascading ? "inference/stage2" : "inference/model",
                                              store, predictor(*model), examples, repeats));
      reports.insert(reports.end(), train_parts.begin(), train_parts.end());
      reports.insert(reports.end(), infer_parts.begin(), infer_parts.end());
      reports.push_back(sum_latency("train/total", train_parts));
      reports.push_back(sum_latency("inference/total", infer_parts));
      write_latency(bench_out, reports);
      for (const LatencyReport& r : reports) {
        std::printf("%-24s avg %.4f  median %.4f  p90 %.4f  p95 %.4f ms/sample\n", r.phase.c_str(), r.avg, r.median,
                    r.p90, r.p95);
      }
    } else if (*compare) {
      std::vector<MetricsReport> reports;
      for (const std::string& run : compare_runs) {
        const ParsedReport p = parse_report(fs::path(run) / "report.tsv");
        reports.insert(reports.end(), p.reports.begin(), p.reports.end());
      }
      emit_report(compare_out, reports);
      for (const Comparison& cmp : compare_reports(reports)) {
        std::printf("%s vs %s\t%s\t%s\tdiff %+.6f\tt %.3f%s\n", cmp.a.c_str(), cmp.b.c_str(), cmp.slice.c_str(),
                    cmp.metric.c_str(), cmp.diff, cmp.t, cmp.significant() ? "\tsignificant" : "");
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
