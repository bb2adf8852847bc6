#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "ctrfusion/adam.hpp"
#include "ctrfusion/encoder.hpp"

namespace ctrfusion {

struct MlmTarget {
  std::size_t position = 0;
  int original = 0;
};

struct MaskedSeq {
  TokenSeq seq;
  std::vector<MlmTarget> targets;
};

inline constexpr double kMlmRate = 0.15;

// Selects every unmasked non-special position independently with probability
// `rate`; a selected token becomes [MASK] 80% of the time, a random content
// token 10%, and stays unchanged 10%. If nothing is selected one eligible
// position is forced. Throws if the sequence has no eligible position.
MaskedSeq mlm_mask(const TokenSeq& seq, double rate, std::mt19937_64& rng, std::size_t vocab_size);

// Sum of token cross-entropies over the targets of one masked sequence.
Var mlm_loss(Graph& g, const TextEncoder& encoder, const MaskedSeq& masked);

// Masks the batch, runs one optimizer step on the mean target cross-entropy,
// and returns that mean (computed before the update).
double mlm_step(const std::vector<TokenSeq>& batch, ParamStore& store, const TextEncoder& encoder, AdamState& adam,
                std::mt19937_64& rng, double rate = kMlmRate);

}  // namespace ctrfusion
