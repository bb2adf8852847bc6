// Shared helpers for the unit and acceptance tests: finite-difference
// gradient checks, small seeded datasets and straight-line oracles that do not
// use the library's kernels or graph.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ctrfusion/experiment.hpp"
#include "ctrfusion/graph.hpp"
#include "ctrfusion/models.hpp"
#include "ctrfusion/params.hpp"
#include "ctrfusion/synthetic.hpp"
#include "ctrfusion/trainer.hpp"

namespace testing {

using namespace ctrfusion;

// Fills every parameter with uniform values in [-scale, scale]; zero-initialized
// heads would otherwise hide most gradients.
inline void randomize(ParamStore& store, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (double& v : store.tensor(i).values()) v = u(rng);
  }
}

struct GradCheckResult {
  double max_error = 0.0;  // worst relative error among entries above the absolute floor
  double max_abs = 0.0;    // worst |analytic - numeric| over every entry
  double max_rel_large = 0.0;  // worst relative error where max(|a|, |n|) >= 1e-3, no floor
  std::string worst;       // "<param>[<entry>]"
  std::size_t entries = 0;
  std::size_t params = 0;
};

// Central differences against backward_into for the scalar loss built by
// `loss`. Tensors with more than `per_tensor` entries are sampled: every entry
// with a non-zero analytic gradient is eligible, plus a few that received none.
// An entry passes when |analytic - numeric| <= abs_floor; otherwise its error
// is |a - n| / max(|a|, |n|).
inline GradCheckResult grad_check(ParamStore& store, const std::function<Var(Graph&)>& loss,
                                  std::size_t per_tensor = 48, double h = 1e-5, double abs_floor = 1e-8,
                                  std::uint64_t seed = 5) {
  {
    Graph g(store);
    backward_into(g, loss(g), store);
  }
  std::vector<std::vector<double>> analytic(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto grad = store.tensor(i).grad();
    analytic[i].assign(grad.begin(), grad.end());
  }
  auto eval = [&] {
    Graph g(store);
    return g.scalar(loss(g));
  };
  std::mt19937_64 rng(seed);
  GradCheckResult r;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor& t = store.tensor(i);
    std::vector<std::size_t> entries;
    if (t.size() <= per_tensor) {
      for (std::size_t j = 0; j < t.size(); ++j) entries.push_back(j);
    } else {
      std::vector<std::size_t> touched;
      std::vector<std::size_t> untouched;
      for (std::size_t j = 0; j < t.size(); ++j) (analytic[i][j] != 0.0 ? touched : untouched).push_back(j);
      std::shuffle(touched.begin(), touched.end(), rng);
      std::shuffle(untouched.begin(), untouched.end(), rng);
      const std::size_t cold = std::min<std::size_t>(untouched.size(), 4);
      touched.resize(std::min(touched.size(), per_tensor - cold));
      entries = touched;
      entries.insert(entries.end(), untouched.begin(), untouched.begin() + static_cast<long>(cold));
    }
    for (std::size_t j : entries) {
      const double saved = t[j];
      t[j] = saved + h;
      const double up = eval();
      t[j] = saved - h;
      const double down = eval();
      t[j] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i][j];
      const double diff = std::abs(a - numeric);
      ++r.entries;
      r.max_abs = std::max(r.max_abs, diff);
      if (std::max(std::abs(a), std::abs(numeric)) >= 1e-3) {
        r.max_rel_large = std::max(r.max_rel_large, diff / std::max(std::abs(a), std::abs(numeric)));
      }
      if (diff <= abs_floor) continue;
      const double err = diff / std::max(std::abs(a), std::abs(numeric));
      if (err > r.max_error) {
        r.max_error = err;
        r.worst = store.name(i) + "[" + std::to_string(j) + "] analytic " + std::to_string(a) + " numeric " +
                  std::to_string(numeric);
      }
    }
    ++r.params;
  }
  return r;
}

// A small seeded synthetic log, prepared the same way a real run is.
struct ToyData {
  SyntheticData raw;
  ExperimentConfig config;
  PreparedData prepared;
};

inline SyntheticSpec toy_spec(std::size_t records, std::uint64_t seed) {
  SyntheticSpec s;
  s.records = records;
  s.valid_records = std::max<std::size_t>(records / 4, 20);
  s.vocab_size = 40;
  s.topics = 3;
  s.queries = 12;
  s.ads = 10;
  s.users = 15;
  s.seed = seed;
  return s;
}

inline ExperimentConfig toy_config(std::size_t layers) {
  ExperimentConfig c;
  c.model.encoder = {layers, 8, 2, 12, 10, 10, 0, true};
  c.model.reduction = {3, 4};
  c.model.score_dim = 5;
  c.model.fusion_ffn = 6;
  c.vocab_max = 60;
  c.number_tokens = 200;
  c.plan.batch_size = 4;
  c.plan.loss_log_interval = 16;
  c.eval.partitions = 3;
  return c;
}

inline ToyData toy_data(std::size_t records = 40, std::size_t layers = 1, std::uint64_t seed = 3,
                        FeatureFamilies families = {}) {
  ToyData t{generate_synthetic(toy_spec(records, seed)), toy_config(layers), {}};
  t.config.families = families;
  t.prepared = prepare_data(t.raw.train, t.raw.valid, t.config);
  return t;
}

// Features without the historical/semantic families keep NumBERT sequences short.
inline FeatureFamilies small_families() {
  FeatureFamilies f;
  f.historical = false;
  f.semantic = false;
  f.length = false;
  return f;
}

// ---- straight-line oracles over row-major std::vector matrices ----

using Mat = std::vector<double>;  // row-major

inline Mat oracle_matmul(const Mat& a, const Mat& b, std::size_t m, std::size_t k, std::size_t n) {
  Mat c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

struct AttentionOracleParams {
  std::size_t dx = 0, dy = 0, da = 0;
  Mat wq, bq, wk, bk, wv, bv, wa, ba, wi, bi;
};

// Uni-attention written directly from its definition, one scalar at a time.
// Returns U (dx values) and the attention weights (l values).
inline std::pair<Mat, Mat> oracle_uni_attention(const AttentionOracleParams& p, const Mat& x, const Mat& y,
                                                std::size_t l, const std::vector<unsigned char>& mask) {
  Mat q(p.dx);
  for (std::size_t r = 0; r < p.dx; ++r) {
    double s = p.bq[r];
    for (std::size_t c = 0; c < p.dx; ++c) s += p.wq[r * p.dx + c] * x[c];
    q[r] = s;
  }
  Mat score(l);
  Mat value(p.dx * l);
  for (std::size_t j = 0; j < l; ++j) {
    Mat key(p.dy);
    for (std::size_t r = 0; r < p.dy; ++r) {
      double s = p.bk[r];
      for (std::size_t c = 0; c < p.dy; ++c) s += p.wk[r * p.dy + c] * y[c * l + j];
      key[r] = s;
    }
    for (std::size_t r = 0; r < p.dx; ++r) {
      double s = p.bv[r];
      for (std::size_t c = 0; c < p.dy; ++c) s += p.wv[r * p.dy + c] * y[c * l + j];
      value[r * l + j] = s;
    }
    double sj = p.bi[0];
    for (std::size_t a = 0; a < p.da; ++a) {
      double z = p.ba[a];
      for (std::size_t c = 0; c < p.dx; ++c) z += p.wa[a * (p.dx + p.dy) + c] * q[c];
      for (std::size_t c = 0; c < p.dy; ++c) z += p.wa[a * (p.dx + p.dy) + p.dx + c] * key[c];
      sj += p.wi[a] * std::tanh(z);
    }
    score[j] = sj;
  }
  double top = -INFINITY;
  for (std::size_t j = 0; j < l; ++j) {
    if (mask[j]) top = std::max(top, score[j]);
  }
  Mat w(l, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < l; ++j) {
    if (mask[j]) total += (w[j] = std::exp(score[j] - top));
  }
  for (double& v : w) v /= total;
  Mat u(p.dx, 0.0);
  for (std::size_t r = 0; r < p.dx; ++r) {
    for (std::size_t j = 0; j < l; ++j) u[r] += value[r * l + j] * w[j];
  }
  return {u, w};
}

inline Mat values_of(const Tensor& t) { return Mat(t.values().begin(), t.values().end()); }

}  // namespace testing
