#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "ctrfusion/errors.hpp"
#include "ctrfusion/experiment.hpp"
#include "ctrfusion/hashing.hpp"
#include "ctrfusion/kdd.hpp"
#include "ctrfusion/metrics.hpp"
#include "ctrfusion/synthetic.hpp"
#include "doctest.h"

using namespace ctrfusion;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ctrfusion_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Binomial 99% interval around p for n draws.
bool within_99(double empirical, double p, std::size_t n) {
  return std::abs(empirical - p) <= 2.5758 * std::sqrt(p * (1 - p) / static_cast<double>(n));
}

double empirical_ctr(const RawLog& log) {
  double clicks = 0;
  for (const RawRecord& r : log.records) clicks += r.click;
  return clicks / static_cast<double>(log.records.size());
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CTRFUSION_CLI) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("synthetic: null model CTR is the base rate") {
  SyntheticSpec s;
  s.records = 100000;
  s.valid_records = 10;
  s.w_text = s.w_feat = s.w_cross = 0;
  s.base_ctr = 0.3;
  const SyntheticData d = generate_synthetic(s);
  REQUIRE(d.train.records.size() == 100000);
  for (double p : d.train_truth) CHECK(std::abs(p - 0.3) < 1e-12);
  CHECK(within_99(empirical_ctr(d.train), 0.3, d.train.records.size()));
}

TEST_CASE("synthetic: empirical CTR matches the mean true probability; truth bounds a trained model") {
  SyntheticSpec s;
  s.records = 100000;
  s.valid_records = 2000;
  s.seed = 4;
  const SyntheticData d = generate_synthetic(s);
  double mean = 0;
  for (double p : d.train_truth) mean += p;
  mean /= static_cast<double>(d.train_truth.size());
  CHECK(within_99(empirical_ctr(d.train), mean, d.train.records.size()));

  std::vector<int> labels;
  for (const RawRecord& r : d.valid.records) labels.push_back(r.click);
  const double bayes = auc(d.valid_truth, labels);
  CHECK(bayes > 0.7);
  // any other score (here: the position) ranks no better than the truth
  std::vector<double> position;
  for (const RawRecord& r : d.valid.records) position.push_back(-r.position);
  CHECK(auc(position, labels) < bayes);
}

TEST_CASE("synthetic: fixed seed gives identical files; layout options") {
  SyntheticSpec s;
  s.records = 500;
  s.valid_records = 50;
  s.noise_sparse = 2;
  s.noise_numeric = 3;
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  write_synthetic(a, generate_synthetic(s));
  write_synthetic(b, generate_synthetic(s));
  for (const char* f : {"train.tsv", "valid.tsv", "train_truth.txt", "valid_truth.txt"}) {
    CAPTURE(f);
    CHECK(bytes(a / f) == bytes(b / f));
  }
  const RawLog back = read_log(a / "train.tsv");
  CHECK(back.records.size() == 500);
  CHECK(back.layout.numeric_columns.size() == 2 + 3);
  CHECK(read_values(a / "train_truth.txt") == generate_synthetic(s).train_truth);
  s.seed = 2;
  CHECK(generate_synthetic(s).train_truth != generate_synthetic(SyntheticSpec{}).train_truth);

  s.entity_ids = false;
  const LogLayout l = generate_synthetic(s).train.layout;
  for (const char* id : {"user", "ad", "query"}) {
    CHECK(std::find(l.sparse_columns.begin(), l.sparse_columns.end(), id) == l.sparse_columns.end());
  }
  s.topics = 0;
  CHECK_THROWS_AS(generate_synthetic(s), ConfigError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("raw log: round trip, header errors") {
  const fs::path dir = scratch("log");
  RawLog log;
  log.layout.sparse_columns = {"user"};
  log.layout.numeric_columns = {"depth"};
  RawRecord r;
  r.query = {"cheap", "flights"};
  r.url = {"example.com"};
  r.sparse = {"u1"};
  r.numeric = {0.1};
  r.position = 2;
  r.click = 1;
  log.records = {r, r};
  log.records[1].query.clear();
  write_log(dir / "l.tsv", log);
  const RawLog back = read_log(dir / "l.tsv");
  REQUIRE(back.records.size() == 2);
  CHECK(back.layout == log.layout);
  CHECK(back.records[0].query == r.query);
  CHECK(back.records[0].title.empty());
  CHECK(back.records[1].query.empty());
  CHECK(back.records[0].numeric[0] == 0.1);
  CHECK(back.records[0].ad_tokens() == std::vector<std::string>{"example.com"});
  write_text(dir / "bad.tsv", "click\tposition\tquery\n1\t1\tx\n");
  CHECK_THROWS_AS(read_log(dir / "bad.tsv"), Error);
  CHECK_THROWS_AS(read_log(dir / "missing.tsv"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("kdd ingest") {
  const fs::path dir = scratch("kdd");
  SUBCASE("empty file") {
    write_text(dir / "empty.tsv", "");
    const KddIngest k = ingest_kdd(dir / "empty.tsv");
    CHECK(k.log.records.empty());
    CHECK(k.summary.lines == 0);
    CHECK(k.summary.malformed == 0);
    CHECK(k.log.layout == kdd_layout());
  }
  SUBCASE("three lines, exact fields") {
    write_text(dir / "three.tsv",
               "0\t1\t4298118681424644510\t7686695\t385\t3\t3\t1601\t5521|7|3\t1|2\t9\t490234\t1\t5\n"
               "1\t1\t4860571499428580850\t21560664\t37484\t2\t2\t2255103\t317|64\t4\t\t497\t2\t3\n"
               "0\t1\t9704320783495875564\t21748480\t36759\t3\t1\t4532751\t\t55|6|7|8\t1\t2\t0\t1\n");
    const KddIngest k = ingest_kdd(dir / "three.tsv");
    REQUIRE(k.log.records.size() == 3);
    CHECK(k.summary.malformed == 0);
    const RawRecord& a = k.log.records[0];
    CHECK(a.click == 0);
    CHECK(a.position == 3);
    CHECK(a.query == std::vector<std::string>{"t5521", "t7", "t3"});
    CHECK(a.title == std::vector<std::string>{"t1", "t2"});
    CHECK(a.url == std::vector<std::string>{"url4298118681424644510"});
    CHECK(a.sparse == std::vector<std::string>{"490234", "7686695", "385", "1601", "1", "5"});
    CHECK(a.numeric == std::vector<double>{3});
    const RawRecord& b = k.log.records[1];
    CHECK(b.click == 1);
    CHECK(b.position == 2);
    CHECK(b.title == std::vector<std::string>{"t4"});
    CHECK(b.sparse[0] == "497");
    const RawRecord& c = k.log.records[2];
    CHECK(c.query.empty());
    CHECK(c.title.size() == 4);
    CHECK(c.sparse[4] == "0");
  }
  SUBCASE("aggregated rows expand into clicks then non-clicks") {
    write_text(dir / "agg.tsv", "2\t5\t1\t2\t3\t1\t1\t4\t1\t2\t3\t5\t1\t1\n");
    const KddIngest k = ingest_kdd(dir / "agg.tsv");
    REQUIRE(k.log.records.size() == 5);
    CHECK(k.log.records[0].click == 1);
    CHECK(k.log.records[1].click == 1);
    CHECK(k.log.records[2].click == 0);
  }
  SUBCASE("malformed lines: skipped up to 1%, above that abort") {
    std::string good;
    for (int i = 0; i < 200; ++i) good += "0\t1\t1\t2\t3\t1\t1\t4\t1\t2\t3\t5\t1\t1\n";
    write_text(dir / "two_bad.tsv", good + "x\ty\n" + "0\t1\t1\t2\n");
    const KddIngest ok = ingest_kdd(dir / "two_bad.tsv");
    CHECK(ok.summary.malformed == 2);
    CHECK(ok.log.records.size() == 200);
    write_text(dir / "three_bad.tsv", good + "x\n" + "1\t0\t1\t2\t3\t1\t1\t4\t1\t2\t3\t5\t1\t1\n" +
                                          "0\t1\t1\t2\t3\t1\t2\t4\t1\t2\t3\t5\t1\t1\n");
    CHECK_THROWS_AS(ingest_kdd(dir / "three_bad.tsv"), IoError);
  }
  SUBCASE("unreadable file") { CHECK_THROWS_AS(ingest_kdd(dir / "nope.tsv"), IoError); }
  SUBCASE("1/11 split is deterministic and disjoint") {
    RawLog log;
    log.layout = kdd_layout();
    for (int i = 0; i < 11000; ++i) {
      RawRecord r;
      r.sparse = {std::to_string(i), "a", "b", "c", "d", "e"};
      r.numeric = {1};
      log.records.push_back(r);
    }
    const HoldoutSplit a = split_holdout(log, 3), b = split_holdout(log, 3);
    CHECK(a.train.records.size() + a.valid.records.size() == 11000);
    CHECK(std::abs(static_cast<double>(a.valid.records.size()) - 1000.0) < 4 * std::sqrt(1000.0));
    std::set<std::string> train_ids, valid_ids;
    for (const auto& r : a.train.records) train_ids.insert(r.sparse[0]);
    for (const auto& r : a.valid.records) valid_ids.insert(r.sparse[0]);
    CHECK(train_ids.size() + valid_ids.size() == 11000);
    for (const auto& id : valid_ids) CHECK_FALSE(train_ids.count(id));
    REQUIRE(b.valid.records.size() == a.valid.records.size());
    for (std::size_t i = 0; i < a.valid.records.size(); ++i) CHECK(a.valid.records[i].sparse == b.valid.records[i].sparse);
    CHECK(split_holdout(log, 4).valid.records.size() != 0);
    CHECK_THROWS_AS(split_holdout(log, 3, 1), ConfigError);
  }
  fs::remove_all(dir);
}

TEST_CASE("config: versioned, unknown keys rejected, paths checked, dump round trip") {
  const fs::path dir = scratch("config");
  write_text(dir / "t.tsv", "click\tposition\tquery\ttitle\turl\n");
  CHECK_NOTHROW(parse_config(R"({"version": 1})"));
  CHECK_THROWS_AS(parse_config(R"({})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 2})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 1, "lr": 0.1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 1, "plan": {"learning_rate": 0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 1, "plan": {"batch_size": "four"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 1, "framework": "gbdt"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 1, "paths": {"train": "gone.tsv"}})", dir), ConfigError);
  const ExperimentConfig c = parse_config(R"({"version": 1, "paths": {"train": "t.tsv", "valid": "t.tsv"},
      "framework": "shallown", "plan": {"init_mode": "finetune-random", "seed": 9, "lr_joint": 1e-6},
      "encoder": {"layers": 3}, "reduction": {"reduced_dim": 7}, "eval": {"partitions": 4}})",
                                          dir);
  CHECK(c.train_path == dir / "t.tsv");
  CHECK(c.plan.framework == FrameworkKind::kShallowN);
  CHECK(c.plan.seed == 9);
  CHECK(c.model.encoder.layers == 3);
  CHECK(c.model.reduction.reduced_dim == 7);
  CHECK(c.eval.partitions == 4);
  const std::string dumped = dump_config(c);
  CHECK(dump_config(parse_config(dumped)) == dumped);
  CHECK_THROWS_AS(load_config(dir / "none.json"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("bundled fixture: featurize and train end to end in under a minute") {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig c = load_config(fs::path(CTRFUSION_DATA) / "fixture" / "config.json");
  const RawLog train = read_log(c.train_path);
  REQUIRE(train.records.size() == 1000);
  const PreparedData d = prepare_data(train, read_log(c.valid_path), c);
  const PipelineResult r = run_pipeline(c, d);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 60);
  CHECK(r.valid_scores.size() == 100);
  CHECK(r.report.framework == "bert4ctr");
  MESSAGE("fixture pipeline " << seconds << " s");
}

TEST_CASE("cli") {
  const fs::path dir = scratch("cli");
  const std::string d = dir.string();
  CHECK(run_cli("--bogus") != 0);
  CHECK(run_cli("gen --bogus") != 0);
  CHECK(run_cli("") != 0);
  CHECK(run_cli("train --framework nope --train " + d + "/x") != 0);

  REQUIRE(run_cli("gen --records 1000 --seed 1 --out " + d + "/g1") == 0);
  REQUIRE(run_cli("gen --records 1000 --seed 1 --out " + d + "/g2") == 0);
  for (const char* f : {"train.tsv", "valid.tsv", "train_truth.txt", "valid_truth.txt"}) {
    CHECK(fnv1a(bytes(dir / "g1" / f)) == fnv1a(bytes(dir / "g2" / f)));
  }

  write_text(dir / "kdd.tsv", "1\t3\t5\t6\t7\t2\t1\t8\t1|2\t3\t4\t9\t1\t2\n0\t2\t5\t6\t7\t2\t2\t8\t1\t3\t4\t9\t2\t2\n");
  CHECK(run_cli("ingest " + d + "/kdd.tsv --out " + d + "/kdd") == 0);
  CHECK(read_log(dir / "kdd" / "train.tsv").records.size() + read_log(dir / "kdd" / "valid.tsv").records.size() == 5);

  const std::string cfg = std::string(CTRFUSION_DATA) + "/fixture/config.json";
  CHECK(run_cli("vocab --config " + cfg + " --out " + d + "/vocab.txt") == 0);
  CHECK(fs::exists(dir / "vocab.txt"));
  CHECK(run_cli("featurize --config " + cfg + " --out " + d + "/features") == 0);
  CHECK(fs::exists(dir / "features" / "schema.json"));

  REQUIRE(run_cli("train --config " + cfg + " --framework bert4ctr --init-mode two-step --run-dir " + d + "/run_a") == 0);
  REQUIRE(run_cli("train --config " + cfg + " --framework shallow1 --seed 2 --run-dir " + d + "/run_b") == 0);
  for (const char* f : {"final.ckpt", "loss.csv", "report.tsv", "summary.json"}) CHECK(fs::exists(dir / "run_a" / f));
  CHECK(read_checkpoint(dir / "run_a" / "final.ckpt").header.phase == "joint");

  const std::string report_a = bytes(dir / "run_a" / "report.tsv");
  REQUIRE(run_cli("eval " + d + "/run_a") == 0);
  CHECK(bytes(dir / "run_a" / "report.tsv") == report_a);

  REQUIRE(run_cli("compare " + d + "/run_a " + d + "/run_b --out " + d + "/cmp.tsv") == 0);
  const std::vector<MetricsReport> direct = {parse_report(dir / "run_a" / "report.tsv").reports[0],
                                             parse_report(dir / "run_b" / "report.tsv").reports[0]};
  emit_report(dir / "direct.tsv", direct);
  CHECK(bytes(dir / "cmp.tsv") == bytes(dir / "direct.tsv"));
  const ParsedReport parsed = parse_report(dir / "cmp.tsv");
  CHECK(parsed.comparisons.size() == compare_reports(direct).size());
  CHECK(run_cli("compare " + d + "/missing") != 0);

  CHECK(run_cli("bench --config " + cfg + " --framework numbert --repeats 2 --samples 8 --out " + d + "/lat.json") == 0);
  CHECK(fs::exists(dir / "lat.json"));
  CHECK(run_cli("bench --config " + cfg + " --repeats 1") != 0);
  fs::remove_all(dir);
}
