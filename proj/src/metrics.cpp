#include "ctrfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ctrfusion/errors.hpp"
#include "ctrfusion/records.hpp"

namespace ctrfusion {
namespace {

constexpr double kEps = 1e-7;

void check_classes(std::span<const double> scores, std::span<const int> labels, const std::string& slice,
                   const char* metric) {
  if (scores.size() != labels.size()) throw DimensionError(std::string(metric) + ": scores and labels differ in length");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(std::string(metric) + ": labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  if (pos == 0 || pos == labels.size()) {
    throw Error(std::string(metric) + " undefined on slice " + slice + ": it contains a single class (" +
                std::to_string(labels.size()) + " records)");
  }
}

double bce(double p, int y) {
  p = std::clamp(p, kEps, 1.0 - kEps);
  return y ? -std::log(p) : -std::log(1.0 - p);
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels, const std::string& slice) {
  check_classes(scores, labels, slice, "AUC");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share their mean
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const double np = static_cast<double>(pos);
  const double nn = static_cast<double>(n - pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double mean_logloss(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) throw DimensionError("logloss: bad input lengths");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += bce(scores[i], labels[i]);
  return total / static_cast<double>(scores.size());
}

double rig(std::span<const double> scores, std::span<const int> labels, const std::string& slice) {
  check_classes(scores, labels, slice, "RIG");
  double ctr = 0.0;
  for (int y : labels) ctr += y;
  ctr /= static_cast<double>(labels.size());
  double model = 0.0;
  double base = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    model += bce(scores[i], labels[i]);
    base += bce(ctr, labels[i]);
  }
  return 1.0 - model / base;
}

void ScoredSet::validate() const {
  const std::size_t n = scores.size();
  if (labels.size() != n || pair_keys.size() != n || partitions.size() != n) {
    throw DimensionError("scored set: arrays differ in length");
  }
}

std::vector<int> assign_partitions(std::size_t n, int parts, std::uint64_t seed) {
  if (parts < 1) throw ConfigError("partition count must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[order[i]] = static_cast<int>(i % static_cast<std::size_t>(parts));
  return out;
}

ScoredSet slice_tail(const ScoredSet& set, const PairFrequency& frequency, std::size_t threshold) {
  set.validate();
  ScoredSet out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto it = frequency.find(set.pair_keys[i]);
    const std::size_t f = it == frequency.end() ? 0 : it->second;
    if (f > threshold) continue;
    out.scores.push_back(set.scores[i]);
    out.labels.push_back(set.labels[i]);
    out.pair_keys.push_back(set.pair_keys[i]);
    out.partitions.push_back(set.partitions[i]);
  }
  if (out.size() == 0) {
    throw Error("tail slice is empty at threshold " + std::to_string(threshold) + "; raise the tail threshold");
  }
  return out;
}

TTest t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("t_test: partition arrays differ in length");
  if (a.size() < 2) throw DimensionError("t_test: at least two partitions required");
  const double p = static_cast<double>(a.size());
  double mean_d = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_d += a[i] - b[i];
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_d /= p;
  TTest out;
  out.diff = mean_a / p - mean_b / p;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean_d;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (p - 1.0));
  if (sd == 0.0) {
    out.t = 0.0;
    if (mean_d != 0.0) out.t = mean_d > 0 ? INFINITY : -INFINITY;
    return out;
  }
  out.t = mean_d / (sd / std::sqrt(p));
  return out;
}

const SliceMetrics& MetricsReport::slice(const std::string& name) const {
  for (const SliceMetrics& s : slices) {
    if (s.slice == name) return s;
  }
  throw Error("report for " + framework + " has no slice " + name);
}

MetricsReport evaluate(const std::string& framework, const ScoredSet& set, const PairFrequency& frequency,
                       const EvalSettings& settings) {
  set.validate();
  auto metrics = [&](const std::string& name, const ScoredSet& s) {
    SliceMetrics m;
    m.slice = name;
    m.auc = auc(s.scores, s.labels, name);
    m.rig = rig(s.scores, s.labels, name);
    for (int p = 0; p < settings.partitions; ++p) {
      std::vector<double> sc;
      std::vector<int> lb;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.partitions[i] == p) {
          sc.push_back(s.scores[i]);
          lb.push_back(s.labels[i]);
        }
      }
      const std::string part = name + "/partition " + std::to_string(p);
      m.partition_auc.push_back(auc(sc, lb, part));
      m.partition_rig.push_back(rig(sc, lb, part));
    }
    return m;
  };
  MetricsReport r;
  r.framework = framework;
  r.slices.push_back(metrics("ALL", set));
  r.slices.push_back(metrics("Tail", slice_tail(set, frequency, settings.tail_threshold)));
  return r;
}

std::vector<Comparison> compare_reports(const std::vector<MetricsReport>& reports) {
  std::vector<Comparison> out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t j = i + 1; j < reports.size(); ++j) {
      for (const SliceMetrics& sa : reports[i].slices) {
        const SliceMetrics& sb = reports[j].slice(sa.slice);
        for (const char* metric : {"auc", "rig"}) {
          const bool is_auc = std::string(metric) == "auc";
          Comparison c;
          c.a = reports[i].framework;
          c.b = reports[j].framework;
          c.slice = sa.slice;
          c.metric = metric;
          c.diff = is_auc ? sa.auc - sb.auc : sa.rig - sb.rig;
          c.t = is_auc ? t_test(sa.partition_auc, sb.partition_auc).t : t_test(sa.partition_rig, sb.partition_rig).t;
          out.push_back(c);
        }
      }
    }
  }
  return out;
}

void emit_report(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw Error("emit_report: no framework evaluated");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  out << "row\tframework\tother\tslice\tmetric\tvalue\tt\tsignificant\tpartitions\n";
  for (const MetricsReport& r : reports) {
    for (const SliceMetrics& s : r.slices) {
      out << "metric\t" << r.framework << "\t-\t" << s.slice << "\tauc\t" << format_double(s.auc) << "\t-\t-\t"
          << join(s.partition_auc) << "\n";
      out << "metric\t" << r.framework << "\t-\t" << s.slice << "\trig\t" << format_double(s.rig) << "\t-\t-\t"
          << join(s.partition_rig) << "\n";
    }
  }
  for (const Comparison& c : compare_reports(reports)) {
    out << "compare\t" << c.a << "\t" << c.b << "\t" << c.slice << "\t" << c.metric << "\t" << format_double(c.diff)
        << "\t" << format_double(c.t) << "\t" << (c.significant() ? 1 : 0) << "\t-\n";
  }
  if (!out) throw IoError("failed writing report " + path.string());
}

ParsedReport parse_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("row\tframework", 0) != 0) throw IoError(path.string() + ": not a metrics report");
  ParsedReport out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, '\t')) f.push_back(item);
    if (f.size() != 9) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 9 columns");
    if (f[0] == "metric") {
      if (out.reports.empty() || out.reports.back().framework != f[1]) out.reports.push_back({f[1], {}});
      MetricsReport& r = out.reports.back();
      if (r.slices.empty() || r.slices.back().slice != f[3]) r.slices.push_back({f[3], 0, 0, {}, {}});
      SliceMetrics& s = r.slices.back();
      if (f[4] == "auc") {
        s.auc = std::stod(f[5]);
        s.partition_auc = split_doubles(f[8]);
      } else {
        s.rig = std::stod(f[5]);
        s.partition_rig = split_doubles(f[8]);
      }
    } else if (f[0] == "compare") {
      out.comparisons.push_back({f[1], f[2], f[3], f[4], std::stod(f[5]), std::stod(f[6])});
    } else {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": unknown row kind " + f[0]);
    }
  }
  return out;
}

}  // namespace ctrfusion
