#include "ctrfusion/adam.hpp"

#include <cmath>

#include "ctrfusion/errors.hpp"

namespace ctrfusion {

AdamState::AdamState(const ParamStore& store, AdamOptions options) : options_(options) {
  m_.reserve(store.size());
  v_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    m_.emplace_back(store.tensor(i).size(), 0.0);
    v_.emplace_back(store.tensor(i).size(), 0.0);
  }
}

void AdamState::update(ParamStore& store) {
  if (store.size() != m_.size()) throw Error("adam: state was built for a different parameter store");
  for (std::size_t p = 0; p < store.size(); ++p) {
    if (!store.tensor(p).has_grad()) throw Error("adam: parameter " + store.name(p) + " has no gradient");
    if (store.tensor(p).size() != m_[p].size()) throw Error("adam: parameter " + store.name(p) + " changed shape");
  }
  ++step_;
  const auto& o = options_;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < store.size(); ++p) {
    Tensor& t = store.tensor(p);
    auto theta = t.values();
    auto g = t.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      theta[i] -= o.learning_rate * mh / (std::sqrt(vh) + o.epsilon);
      g[i] = 0.0;
    }
  }
}

}  // namespace ctrfusion
