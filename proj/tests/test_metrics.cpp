#include <cmath>
#include <filesystem>
#include <random>

#include "ctrfusion/errors.hpp"
#include "ctrfusion/metrics.hpp"
#include "doctest.h"

using namespace ctrfusion;
namespace fs = std::filesystem;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

void random_set(std::size_t n, std::uint64_t seed, std::vector<double>* s, std::vector<int>* y, int levels = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  s->resize(n);
  y->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    (*s)[i] = levels ? (1 + rng() % levels) / (levels + 1.0) : u(rng);
    (*y)[i] = u(rng) < (*s)[i] ? 1 : 0;
  }
  (*y)[0] = 1;
  (*y)[1] = 0;
}

double logloss(double p, int y) {
  p = std::clamp(p, 1e-7, 1 - 1e-7);
  return -(y ? std::log(p) : std::log(1 - p));
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(auc(std::vector<double>(6, 0.3), std::vector<int>{1, 0, 1, 0, 0, 1}) == 0.5);
  std::vector<double> s;
  std::vector<int> y;
  random_set(200, 1, &s, &y);
  CHECK(std::abs(auc(s, y) - brute_auc(s, y)) <= 1e-12);
  CHECK_THROWS_WITH_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}, "Tail"), doctest::Contains("Tail"),
                       Error);
}

TEST_CASE("auc agrees with pair counting for n <= 1000 with ties; invariances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<double> s;
    std::vector<int> y;
    random_set(10 + seed * 49, seed, &s, &y, seed % 2 ? 7 : 0);
    const double a = auc(s, y);
    CHECK(std::abs(a - brute_auc(s, y)) <= 1e-12);
    std::vector<double> cubed = s;
    for (double& v : cubed) v = v * v * v;
    CHECK(std::abs(auc(cubed, y) - a) <= 1e-12);
    std::vector<int> flipped = y;
    for (int& v : flipped) v = 1 - v;
    CHECK(std::abs(a + auc(s, flipped) - 1.0) <= 1e-12);
  }
}

TEST_CASE("rig examples") {
  const std::vector<int> y{1, 0, 0, 1, 0, 0, 0, 1};
  const std::vector<double> base(8, 3.0 / 8);
  CHECK(std::abs(rig(base, y)) <= 1e-9);
  std::vector<double> perfect(y.begin(), y.end());
  CHECK(rig(perfect, y) == doctest::Approx(1.0).epsilon(1e-5));

  // 4-record hand case
  const std::vector<int> y4{1, 0, 1, 0};
  const std::vector<double> p4{0.8, 0.3, 0.6, 0.1};
  const double ce = (-std::log(0.8) - std::log(0.7) - std::log(0.6) - std::log(0.9)) / 4;
  const double ce_base = std::log(2.0);
  CHECK(rig(p4, y4) == doctest::Approx(1 - ce / ce_base).epsilon(1e-14));
  CHECK(mean_logloss(p4, y4) == doctest::Approx(ce).epsilon(1e-14));
  // lower CE -> higher RIG
  const std::vector<double> better{0.9, 0.2, 0.7, 0.1};
  CHECK(rig(better, y4) > rig(p4, y4));
  CHECK_THROWS_AS(rig(std::vector<double>{0.1}, std::vector<int>{0}), Error);
  CHECK(logloss(0.5, 1) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("partitions and tail slice") {
  const auto parts = assign_partitions(103, 10, 4);
  std::vector<int> sizes(10);
  for (int p : parts) {
    REQUIRE(p >= 0);
    REQUIRE(p < 10);
    ++sizes[static_cast<std::size_t>(p)];
  }
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
  CHECK(assign_partitions(103, 10, 4) == parts);
  CHECK(assign_partitions(103, 10, 5) != parts);

  ScoredSet set;
  set.scores = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  set.labels = {0, 1, 0, 1, 0, 1};
  set.pair_keys = {1, 1, 2, 2, 1, 3};
  set.partitions = {0, 1, 0, 1, 0, 1};
  const PairFrequency freq{{1, 1}, {2, 5}};
  const ScoredSet tail = slice_tail(set, freq, 1);
  CHECK(tail.pair_keys == std::vector<std::uint64_t>{1, 1, 1, 3});  // key 3 unseen: frequency 0
  CHECK(slice_tail(set, freq, SIZE_MAX).scores == set.scores);
  ScoredSet seen = set;
  seen.pair_keys = {1, 1, 2, 2, 1, 2};
  CHECK_THROWS_WITH_AS(slice_tail(seen, freq, 0), doctest::Contains("threshold"), Error);
}

TEST_CASE("t test examples") {
  const std::vector<double> a{0.70, 0.71, 0.72};
  const std::vector<double> b{0.69, 0.70, 0.71};
  const TTest same = t_test(a, a);
  CHECK(same.diff == 0.0);
  CHECK(same.t == 0.0);

  // closed form, computed independently in long double
  long double d[3];
  long double mean = 0;
  for (int i = 0; i < 3; ++i) mean += (d[i] = static_cast<long double>(a[i] - b[i])) / 3;
  long double ss = 0;
  for (long double v : d) ss += (v - mean) * (v - mean);
  const long double sd = std::sqrt(ss / 2);
  const TTest r = t_test(a, b);
  CHECK(r.diff == doctest::Approx(0.01).epsilon(1e-12));
  if (sd == 0) {
    CHECK(std::isinf(r.t));
    CHECK(r.t > 0);
  } else {
    CHECK(r.t == doctest::Approx(static_cast<double>(mean / (sd / std::sqrt(3.0L)))).epsilon(1e-6));
    CHECK(r.t > 1e6);
  }
  // a noisy constant gap gives a large t
  const std::vector<double> c{0.700, 0.712, 0.719, 0.731};
  const std::vector<double> e{0.690, 0.7021, 0.7089, 0.7212};
  const TTest big = t_test(c, e);
  CHECK(big.t > 20);
  // non-constant differences, exact closed form: d = {1, 2, 3}, mean 2, sd 1
  const TTest k = t_test(std::vector<double>{2, 4, 6}, std::vector<double>{1, 2, 3});
  CHECK(k.t == doctest::Approx(2 * std::sqrt(3.0)).epsilon(1e-14));
  CHECK_THROWS_AS(t_test(a, std::vector<double>{1, 2}), DimensionError);
}

namespace {

MetricsReport report_for(const std::string& name, double shift, std::uint64_t seed) {
  std::vector<double> s;
  std::vector<int> y;
  random_set(400, seed, &s, &y);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> noise(0, shift);
  for (double& v : s) v = std::clamp(v + noise(rng), 0.001, 0.999);
  ScoredSet set;
  set.scores = s;
  set.labels = y;
  for (std::size_t i = 0; i < s.size(); ++i) set.pair_keys.push_back(i % 37);
  EvalSettings e;
  e.partitions = 10;
  e.tail_threshold = 1;
  set.partitions = assign_partitions(s.size(), e.partitions, e.seed);
  PairFrequency freq;
  for (std::uint64_t k = 0; k < 37; k += 2) freq[k] = 1;
  return evaluate(name, set, freq, e);
}

}  // namespace

TEST_CASE("evaluate, compare and emit") {
  const MetricsReport a = report_for("alpha", 0.0, 1);
  const MetricsReport b = report_for("beta", 0.2, 1);
  REQUIRE(a.slices.size() == 2);
  CHECK(a.slices[0].slice == "ALL");
  CHECK(a.slices[1].slice == "Tail");
  CHECK(a.slice("ALL").partition_auc.size() == 10);
  double mean = 0;
  for (double v : a.slice("ALL").partition_auc) mean += v / 10;
  CHECK(std::abs(mean - a.slice("ALL").auc) < 0.05);

  const fs::path dir = fs::temp_directory_path() / "ctrfusion_report_test";
  fs::create_directories(dir);
  emit_report(dir / "one.tsv", {a});
  const ParsedReport one = parse_report(dir / "one.tsv");
  CHECK(one.comparisons.empty());
  REQUIRE(one.reports.size() == 1);
  CHECK(one.reports[0] == a);

  emit_report(dir / "two.tsv", {a, b});
  const ParsedReport two = parse_report(dir / "two.tsv");
  CHECK(two.reports[1] == b);
  CHECK(two.comparisons.size() == 4);  // 2 slices x 2 metrics
  CHECK(two.comparisons == compare_reports({a, b}));
  for (const Comparison& c : two.comparisons) {
    const auto& sa = a.slice(c.slice);
    const auto& sb = b.slice(c.slice);
    const bool is_auc = c.metric == "auc";
    CHECK(c.diff == (is_auc ? sa.auc - sb.auc : sa.rig - sb.rig));
    CHECK(c.t == t_test(is_auc ? sa.partition_auc : sa.partition_rig, is_auc ? sb.partition_auc : sb.partition_rig).t);
    CHECK(c.significant() == (c.t > 3));
  }
  fs::remove_all(dir);
}
