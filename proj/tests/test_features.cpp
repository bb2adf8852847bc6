#include <cmath>
#include <filesystem>
#include <random>

#include "ctrfusion/errors.hpp"
#include "ctrfusion/features.hpp"
#include "ctrfusion/reduction.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ctrfusion;
namespace fs = std::filesystem;

namespace {

RawRecord rec(std::vector<std::string> query, std::string user, std::string ad, double bid, int click) {
  RawRecord r;
  r.query = std::move(query);
  r.title = {"t1", "t2"};
  r.url = {"u"};
  r.sparse = {std::move(user), std::move(ad)};
  r.numeric = {bid};
  r.click = click;
  return r;
}

RawLog five_records() {
  RawLog log;
  log.layout.sparse_columns = {"user", "ad"};
  log.layout.numeric_columns = {"bid"};
  log.records = {rec({"a", "b", "c"}, "u1", "ad1", 2, 1), rec({"a"}, "u2", "ad1", 4, 0),
                 rec({"b"}, "u2", "ad2", 6, 0), rec({"c", "d"}, "u3", "ad2", 8, 1), rec({"a"}, "u2", "ad1", 10, 0)};
  return log;
}

std::size_t dense_index(const FeatureSchema& s, const std::string& name) {
  const auto dense = s.dense();
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i]->name == name) return i;
  }
  FAIL("no dense feature " << name);
  return 0;
}

}  // namespace

TEST_CASE("generate_features examples") {
  const RawLog log = five_records();
  const FeatureSpace space = FeatureSpace::fit(log);
  const FeatureSchema& s = space.schema();
  CHECK(s.sparse_count() == 2);
  // sparse features precede dense ones
  for (std::size_t i = 0; i < s.features.size(); ++i) {
    CHECK((s.features[i].kind == FeatureKind::kSparse) == (i < 2));
  }
  const RawFeatures r0 = space.raw_features(log.records[0]);
  // u1 seen once, clicked: (1 + 1) / (1 + 1)
  CHECK(r0.dense[dense_index(s, "hist_ctr_user")] == 1.0);
  CHECK(r0.dense[dense_index(s, "hist_imps_user")] == 1.0);
  // ad1: 3 impressions, 1 click -> 2/4
  CHECK(r0.dense[dense_index(s, "hist_ctr_ad")] == 0.5);
  // u2: 3 impressions, no click -> 1/4
  CHECK(space.raw_features(log.records[1]).dense[dense_index(s, "hist_ctr_user")] == 0.25);
  CHECK(r0.dense[dense_index(s, "len_query")] == 3.0);
  CHECK(r0.dense[dense_index(s, "num_bid")] == 2.0);
  CHECK(s.dense()[dense_index(s, "num_bid")]->min == 2.0);
  CHECK(s.dense()[dense_index(s, "num_bid")]->max == 10.0);

  // unseen id -> Missing; unseen entity -> global CTR and zero impressions
  const RawFeatures fresh = space.raw_features(rec({"z"}, "u9", "ad1", 3, 0));
  CHECK(fresh.sparse_ids[0] == kMissingId);
  CHECK(fresh.sparse_ids[1] != kMissingId);
  CHECK(fresh.dense[dense_index(s, "hist_ctr_user")] == doctest::Approx(0.4));
  CHECK(fresh.dense[dense_index(s, "hist_imps_user")] == 0.0);

  Vocab vocab;
  const FeaturizedRecord f = space.featurize(rec({"a"}, "u1", "ad2", 12, 1), vocab, 8);
  for (double v : f.dense_values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(f.dense_values[dense_index(s, "num_bid")] == 1.0);
  CHECK(f.sparse_ids.size() == s.sparse_count());

  RawLog empty;
  empty.layout = log.layout;
  CHECK_THROWS_AS(FeatureSpace::fit(empty), Error);
}

TEST_CASE("feature space save/load featurizes identically") {
  const RawLog log = five_records();
  const FeatureSpace space = FeatureSpace::fit(log);
  const fs::path dir = fs::temp_directory_path() / "ctrfusion_schema_test";
  fs::create_directories(dir);
  space.save(dir / "schema.json");
  const FeatureSpace back = FeatureSpace::load(dir / "schema.json");
  CHECK(back.schema() == space.schema());
  Vocab vocab;
  for (const RawRecord& r : log.records) {
    const FeaturizedRecord a = space.featurize(r, vocab, 8);
    const FeaturizedRecord b = back.featurize(r, vocab, 8);
    CHECK(a.sparse_ids == b.sparse_ids);
    CHECK(a.dense_values == b.dense_values);
  }
  fs::remove_all(dir);
}

TEST_CASE("robust id dropout examples") {
  std::mt19937_64 rng(1);
  const std::vector<int> ids{3, 4, 5, 6};
  CHECK(robust_id_dropout(ids, 0.0, rng, true) == ids);
  CHECK(robust_id_dropout(ids, 1.0, rng, true) == std::vector<int>(4, kMissingId));
  CHECK(robust_id_dropout(ids, 1.0, rng, false) == ids);
  const std::vector<int> many(10000, 7);
  const auto out = robust_id_dropout(many, 0.05, rng, true);
  const double frac = static_cast<double>(std::count(out.begin(), out.end(), kMissingId)) / 10000.0;
  CHECK(frac >= 0.04);
  CHECK(frac <= 0.06);
}

TEST_CASE("normalize and bucketize examples") {
  CHECK(normalize_dense(2, 2, 10) == 0.0);
  CHECK(normalize_dense(10, 2, 10) == 1.0);
  CHECK(normalize_dense(50, 2, 10) == 1.0);
  CHECK(normalize_dense(-5, 2, 10) == 0.0);
  CHECK(normalize_dense(4, 2, 10) == 0.25);
  CHECK(normalize_dense(7, 3, 3) == 0.0);
  CHECK(bucketize(0.0) == 0);
  CHECK(bucketize(1.0) == 100);
  CHECK(bucketize(0.237) == 23);
  CHECK(bucketize(0.999) == 99);
}

namespace {

FeatureSchema toy_schema(std::size_t sparse, std::size_t dense, std::size_t cardinality = 5) {
  FeatureSchema s;
  for (std::size_t i = 0; i < sparse; ++i) {
    s.features.push_back({"s" + std::to_string(i), FeatureKind::kSparse, cardinality});
  }
  for (std::size_t i = 0; i < dense; ++i) s.features.push_back({"d" + std::to_string(i), FeatureKind::kDense});
  return s;
}

}  // namespace

TEST_CASE("embed_and_reduce examples") {
  {
    // 56 features of 32 dims concatenate to 1792
    const FeatureSchema s = toy_schema(20, 36);
    ParamStore store;
    FeatureReducer::register_params(store, s, {32, 8});
    const FeatureReducer r(s, {32, 8}, store);
    CHECK(r.concat_width() == 1792);
    store["reduce.proj.w"].values()[0] = 0;  // touch
    for (double& v : store["reduce.proj.w"].values()) v = 0;
    for (double& v : store["reduce.proj.b"].values()) v = 0;
    Graph g(store);
    const std::vector<int> ids(20, 1);
    const std::vector<double> dense(36, 0.5);
    Var x = r.embed_and_reduce(g, ids, dense);
    for (double v : g.value(x)) CHECK(v == 0.0);
    CHECK(g.rows(r.embed(g, ids, dense)) == 1792);
  }
  {
    // M = 2 (one sparse, one dense), N = 3, K = 2 against a hand multiply
    const FeatureSchema s = toy_schema(1, 1, 4);
    ParamStore store;
    FeatureReducer::register_params(store, s, {3, 2});
    testing::randomize(store, 6);
    const FeatureReducer r(s, {3, 2}, store);
    Graph g(store);
    const std::vector<int> ids{2};
    const std::vector<double> dense{0.237};
    const auto out = g.value(r.embed_and_reduce(g, ids, dense));
    const auto sp = store["reduce.sparse0"].values();
    const auto dn = store["reduce.dense0"].values();
    const double e[6] = {sp[6], sp[7], sp[8], dn[69], dn[70], dn[71]};  // rows 2 and 23
    const auto w = store["reduce.proj.w"].values();
    const auto b = store["reduce.proj.b"].values();
    for (std::size_t k = 0; k < 2; ++k) {
      double z = b[k];
      for (std::size_t c = 0; c < 6; ++c) z += w[k * 6 + c] * e[c];
      CHECK(out[k] == doctest::Approx(std::max(z, 0.0)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(r.embed_and_reduce(g, std::vector<int>{4}, dense), IndexError);
    CHECK_THROWS_AS(r.embed_and_reduce(g, std::vector<int>{1, 1}, dense), DimensionError);
    // deterministic: same inputs, same params, same output
    Graph g2(store);
    const auto again = g2.value(r.embed_and_reduce(g2, ids, dense));
    CHECK(std::vector<double>(out.begin(), out.end()) == std::vector<double>(again.begin(), again.end()));
  }
}

TEST_CASE("non-textual model: zero head 0.5, output in (0, 1), gradient check") {
  auto t = testing::toy_data(40, 1);
  const FeatureSchema& s = t.prepared.space.schema();
  const ReductionConfig rc = t.prepared.model.reduction;
  ParamStore store(2);
  NonTextualModel::register_params(store, s, rc);
  const NonTextualModel m(s, rc, store);
  const auto& recs = t.prepared.train;
  {
    Graph g(store);
    CHECK(g.scalar(m.probability(g, recs[0], recs[0].sparse_ids, true)) == 0.5);
  }
  testing::randomize(store, 3);
  for (std::size_t i = 0; i < 10; ++i) {
    Graph g(store);
    const double p = g.scalar(m.probability(g, recs[i], recs[i].sparse_ids, false));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  const auto r = testing::grad_check(store, [&](Graph& g) {
    return g.add(g.bce(m.probability(g, recs[0], recs[0].sparse_ids, true), 1),
                 g.bce(m.probability(g, recs[1], recs[1].sparse_ids, true), 0));
  });
  CAPTURE(r.worst);
  CHECK(r.max_error < 1e-4);
}
