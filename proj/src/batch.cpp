#include "ctrfusion/batch.hpp"

#include <exception>
#include <optional>

#include "ctrfusion/errors.hpp"

namespace ctrfusion {
namespace {

double one_example(const ParamStore& store, std::size_t i, const ExampleLoss& loss, GradBuffer& buf) {
  Graph g(store);
  Var l = loss(g, i);
  g.backward(l);
  g.accumulate(buf);
  return g.scalar(l);
}

void reduce(ParamStore& store, const std::vector<GradBuffer>& bufs, std::span<const double> weights) {
  store.zero_grads();
  for (std::size_t i = 0; i < bufs.size(); ++i) bufs[i].add_to(store, weights[i]);
}

}  // namespace

std::vector<double> run_batch(ParamStore& store, std::size_t count, const ExampleLoss& loss,
                              std::span<const double> weights) {
  if (weights.size() != count) throw DimensionError("run_batch: one weight per example required");
  std::vector<GradBuffer> bufs(count, GradBuffer(store));
  std::vector<double> losses(count, 0.0);
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto e = static_cast<std::size_t>(i);
    try {
      losses[e] = one_example(store, e, loss, bufs[e]);
    } catch (...) {
      errors[e] = std::current_exception();
    }
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  reduce(store, bufs, weights);
  return losses;
}

std::vector<double> run_batch_serial(ParamStore& store, std::size_t count, const ExampleLoss& loss,
                                     std::span<const double> weights) {
  if (weights.size() != count) throw DimensionError("run_batch: one weight per example required");
  std::vector<GradBuffer> bufs(count, GradBuffer(store));
  std::vector<double> losses(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) losses[i] = one_example(store, i, loss, bufs[i]);
  reduce(store, bufs, weights);
  return losses;
}

}  // namespace ctrfusion
