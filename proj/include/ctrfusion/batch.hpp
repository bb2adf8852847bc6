#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ctrfusion/graph.hpp"
#include "ctrfusion/params.hpp"

namespace ctrfusion {

// Builds the scalar loss of example i on a fresh graph.
using ExampleLoss = std::function<Var(Graph&, std::size_t)>;

// Runs one graph per example and leaves store.grad = sum_i weight[i] * dloss_i.
// Examples may run on several OpenMP threads; the reduction always proceeds in
// example order, so the resulting gradients do not depend on the thread count.
// Returns the per-example loss values.
std::vector<double> run_batch(ParamStore& store, std::size_t count, const ExampleLoss& loss,
                              std::span<const double> weights);

// Single-threaded reference with the same contract.
std::vector<double> run_batch_serial(ParamStore& store, std::size_t count, const ExampleLoss& loss,
                                     std::span<const double> weights);

}  // namespace ctrfusion
