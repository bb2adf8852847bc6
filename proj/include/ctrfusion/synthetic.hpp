#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctrfusion/records.hpp"

namespace ctrfusion {

// Generator of click logs with a known click probability per record.
//
// Every query and ad belongs to a latent topic z and draws most tokens from
// that topic's pool. Every user has a click propensity a, an interest topic
// tau and an interest strength u, all visible only through non-textual
// columns (user id, interest id, gender, age band, activity, loyalty).
// Without entity_ids the user, ad and query id columns are left out.
//
//   logit = logit(base_ctr) + w_text * m_text + w_feat * a + w_cross * m_cross * u
//           - position_bias * (position - 1)
//
// with m_text = +1 if the query and ad topics agree (else -1) and
// m_cross = +1 if the ad topic is the user's interest (else -1). The cross
// term can only be read by combining the ad text with the user's features.
struct SyntheticSpec {
  std::size_t records = 1000;        // training records
  std::size_t valid_records = 100;   // validation records
  std::size_t vocab_size = 400;      // distinct content tokens
  std::size_t topics = 8;
  std::size_t queries = 300;         // distinct queries
  std::size_t ads = 200;             // distinct ads
  std::size_t users = 500;
  std::size_t query_min = 2, query_max = 4;
  std::size_t title_min = 3, title_max = 6;
  std::size_t url_min = 1, url_max = 2;
  bool entity_ids = true;             // emit user/ad/query id columns
  std::size_t noise_sparse = 0;       // extra categorical columns without signal
  std::size_t noise_cardinality = 10;
  std::size_t noise_numeric = 0;      // extra numeric columns without signal
  std::size_t positions = 4;
  double topic_purity = 0.8;          // share of tokens drawn from the topic pool
  double w_text = 1.0;
  double w_feat = 1.0;
  double w_cross = 2.0;
  double base_ctr = 0.2;
  double position_bias = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  RawLog train;
  RawLog valid;
  std::vector<double> train_truth;  // exact Bernoulli parameter per record
  std::vector<double> valid_truth;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Writes train.tsv, valid.tsv, train_truth.txt and valid_truth.txt.
void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data);

}  // namespace ctrfusion
