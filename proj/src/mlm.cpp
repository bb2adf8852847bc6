#include "ctrfusion/mlm.hpp"

#include "ctrfusion/batch.hpp"
#include "ctrfusion/errors.hpp"

namespace ctrfusion {

MaskedSeq mlm_mask(const TokenSeq& seq, double rate, std::mt19937_64& rng, std::size_t vocab_size) {
  std::vector<std::size_t> eligible;
  for (std::size_t j = 0; j < seq.length(); ++j) {
    if (seq.mask[j] && seq.ids[j] >= kFirstContentId) eligible.push_back(j);
  }
  if (eligible.empty()) throw Error("mlm_mask: sequence has no maskable token");
  if (vocab_size <= static_cast<std::size_t>(kFirstContentId)) throw Error("mlm_mask: vocabulary has no content");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> content(kFirstContentId, static_cast<int>(vocab_size) - 1);
  std::vector<std::size_t> chosen;
  for (std::size_t j : eligible) {
    if (unit(rng) < rate) chosen.push_back(j);
  }
  if (chosen.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    chosen.push_back(eligible[pick(rng)]);
  }
  MaskedSeq out{seq, {}};
  for (std::size_t j : chosen) {
    out.targets.push_back({j, seq.ids[j]});
    const double r = unit(rng);
    if (r < 0.8) {
      out.seq.ids[j] = kMaskId;
    } else if (r < 0.9) {
      out.seq.ids[j] = content(rng);
    }
  }
  return out;
}

Var mlm_loss(Graph& g, const TextEncoder& encoder, const MaskedSeq& masked) {
  if (masked.targets.empty()) throw Error("mlm_loss: no targets");
  EncoderOutput enc = encoder.forward(g, masked.seq);
  Var total{};
  for (const MlmTarget& t : masked.targets) {
    Var logits = encoder.mlm_logits(g, g.select_col(enc.hidden.back(), t.position));
    Var ce = g.softmax_cross_entropy(logits, t.original);
    total = total.valid() ? g.add(total, ce) : ce;
  }
  return total;
}

double mlm_step(const std::vector<TokenSeq>& batch, ParamStore& store, const TextEncoder& encoder, AdamState& adam,
                std::mt19937_64& rng, double rate) {
  if (batch.empty()) throw Error("mlm_step: empty batch");
  std::vector<MaskedSeq> masked;
  masked.reserve(batch.size());
  std::size_t targets = 0;
  for (const TokenSeq& s : batch) {
    masked.push_back(mlm_mask(s, rate, rng, encoder.config().vocab_size));
    targets += masked.back().targets.size();
  }
  const std::vector<double> weights(batch.size(), 1.0 / static_cast<double>(targets));
  const auto losses = run_batch(
      store, batch.size(), [&](Graph& g, std::size_t i) { return mlm_loss(g, encoder, masked[i]); }, weights);
  double total = 0.0;
  for (double l : losses) total += l;
  adam_step(store, adam);
  return total / static_cast<double>(targets);
}

}  // namespace ctrfusion
