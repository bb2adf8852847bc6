#pragma once

#include <cstdint>
#include <filesystem>

#include "ctrfusion/records.hpp"

namespace ctrfusion {

// Flattened KDD Cup 2012 track 2 layout: one aggregated impression row per
// line, 14 tab-separated fields, no header:
//
//   0 clicks        1 impressions   2 display_url   3 ad_id
//   4 advertiser_id 5 depth         6 position      7 query_id
//   8 query_tokens  9 title_tokens  10 description_tokens
//   11 user_id      12 gender       13 age
//
// Token fields hold '|'-separated token ids as in the contest's token files
// (already joined onto the row). A row expands into `clicks` clicked records
// followed by `impressions - clicks` unclicked ones.
LogLayout kdd_layout();

struct KddSummary {
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::size_t records = 0;
};

struct KddIngest {
  RawLog log;
  KddSummary summary;
};

// Malformed lines are skipped and counted; more than `max_malformed` of all
// lines aborts with an error.
KddIngest ingest_kdd(const std::filesystem::path& path, double max_malformed = 0.01);

struct HoldoutSplit {
  RawLog train;
  RawLog valid;
};

// Every record goes to validation with probability 1/denominator, decided by
// a hash of (seed, record index).
HoldoutSplit split_holdout(const RawLog& log, std::uint64_t seed, std::uint64_t denominator = 11);

}  // namespace ctrfusion
