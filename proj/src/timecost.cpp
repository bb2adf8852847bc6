#include "ctrfusion/timecost.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>

#include "json.hpp"

#include "ctrfusion/batch.hpp"
#include "ctrfusion/errors.hpp"
#include "ctrfusion/mlm.hpp"

namespace ctrfusion {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) { return std::chrono::duration<double, std::milli>(Clock::now() - t).count(); }

double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

void check_repeats(std::size_t repeats) {
  if (repeats < 2) throw ConfigError("timing needs at least 2 repeats, got " + std::to_string(repeats));
}

}  // namespace

LatencyReport summarize_latency(const std::string& phase, std::vector<double> samples) {
  check_repeats(samples.size());
  LatencyReport r;
  r.phase = phase;
  r.samples = samples;
  std::sort(samples.begin(), samples.end());
  double total = 0.0;
  for (double s : samples) total += s;
  r.avg = total / static_cast<double>(samples.size());
  r.median = percentile(samples, 0.5);
  r.p90 = percentile(samples, 0.9);
  r.p95 = percentile(samples, 0.95);
  return r;
}

LatencyReport sum_latency(const std::string& phase, const std::vector<LatencyReport>& parts) {
  if (parts.empty()) throw Error("sum_latency: nothing to add");
  std::vector<double> total(parts[0].samples.size(), 0.0);
  for (const LatencyReport& p : parts) {
    if (p.samples.size() != total.size()) throw DimensionError("sum_latency: repeat counts differ");
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += p.samples[i];
  }
  return summarize_latency(phase, std::move(total));
}

LatencyReport measure_inference(const std::string& phase, const ParamStore& store, const Predictor& model,
                                const std::vector<Example>& examples, std::size_t repeats) {
  check_repeats(repeats);
  if (examples.empty()) throw Error("measure_inference: no examples");
  std::vector<double> samples;
  double sink = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    for (const Example& ex : examples) {
      Graph g(store);
      sink += g.scalar(model.probability(g, ex, ex.record->sparse_ids, false));
    }
    samples.push_back(ms_since(start) / static_cast<double>(examples.size()));
  }
  if (sink < 0) throw Error("measure_inference: negative probability");
  return summarize_latency(phase, std::move(samples));
}

LatencyReport measure_training(const std::string& phase, const ParamStore& store, const Predictor& model,
                               const std::vector<Example>& examples, std::size_t batch_size, std::size_t repeats) {
  check_repeats(repeats);
  if (examples.empty()) throw Error("measure_training: no examples");
  ParamStore work = store;
  AdamState adam(work, AdamOptions{});
  std::vector<double> samples;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
      const std::size_t count = std::min(batch_size, examples.size() - begin);
      const std::vector<double> weights(count, 1.0 / static_cast<double>(count));
      run_batch(
          work, count,
          [&](Graph& g, std::size_t k) {
            const Example& ex = examples[begin + k];
            return g.bce(model.probability(g, ex, ex.record->sparse_ids, true), ex.record->label);
          },
          weights);
      adam_step(work, adam);
    }
    samples.push_back(ms_since(start) / static_cast<double>(examples.size()));
  }
  return summarize_latency(phase, std::move(samples));
}

LatencyReport measure_mlm(const std::string& phase, const ParamStore& store, const EncoderConfig& config,
                          const std::vector<TokenSeq>& seqs, std::size_t batch_size, std::size_t repeats) {
  check_repeats(repeats);
  if (seqs.empty()) throw Error("measure_mlm: no sequences");
  ParamStore work = store;
  TextEncoder encoder(config, work);
  AdamState adam(work, AdamOptions{});
  std::mt19937_64 rng(7);
  std::vector<double> samples;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    for (std::size_t begin = 0; begin < seqs.size(); begin += batch_size) {
      const std::size_t count = std::min(batch_size, seqs.size() - begin);
      std::vector<TokenSeq> batch(seqs.begin() + static_cast<long>(begin),
                                  seqs.begin() + static_cast<long>(begin + count));
      mlm_step(batch, work, encoder, adam, rng);
    }
    samples.push_back(ms_since(start) / static_cast<double>(seqs.size()));
  }
  return summarize_latency(phase, std::move(samples));
}

void write_latency(const std::filesystem::path& path, const std::vector<LatencyReport>& reports) {
  nlohmann::json doc;
  doc["format"] = "ctrfusion-latency";
  doc["version"] = 1;
  doc["unit"] = "ms/sample";
  nlohmann::json phases = nlohmann::json::array();
  for (const LatencyReport& r : reports) {
    phases.push_back({{"phase", r.phase},
                      {"repeats", r.samples.size()},
                      {"avg", r.avg},
                      {"median", r.median},
                      {"p90", r.p90},
                      {"p95", r.p95},
                      {"samples", r.samples}});
  }
  doc["phases"] = phases;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write latency report " + path.string());
  out << doc.dump(2) << "\n";
}

std::vector<LatencyReport> read_latency(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read latency report " + path.string());
  const nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.value("format", "") != "ctrfusion-latency" || doc.value("version", 0) != 1) {
    throw IoError(path.string() + ": not a version 1 latency report");
  }
  std::vector<LatencyReport> out;
  for (const auto& p : doc.at("phases")) {
    out.push_back(summarize_latency(p.at("phase").get<std::string>(), p.at("samples").get<std::vector<double>>()));
  }
  return out;
}

}  // namespace ctrfusion
