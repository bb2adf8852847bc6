#pragma once

#include <cstdint>
#include <vector>

#include "ctrfusion/params.hpp"

namespace ctrfusion {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment estimates for every parameter of one store, with bias correction.
class AdamState {
 public:
  AdamState(const ParamStore& store, AdamOptions options);

  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  std::uint64_t step() const { return step_; }

  // theta -= lr * m_hat / (sqrt(v_hat) + eps); grads are zeroed afterwards.
  // Throws if any parameter has no gradient buffer.
  void update(ParamStore& store);

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

inline void adam_step(ParamStore& store, AdamState& state) { state.update(store); }

}  // namespace ctrfusion
