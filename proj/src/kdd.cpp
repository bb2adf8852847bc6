#include "ctrfusion/kdd.hpp"

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

#include "ctrfusion/errors.hpp"
#include "ctrfusion/hashing.hpp"

namespace ctrfusion {
namespace {

constexpr std::size_t kFields = 14;

std::optional<long> parse_int(const std::string& s) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  for (std::string& t : split(s, '|')) {
    if (!t.empty()) out.push_back("t" + t);
  }
  return out;
}

bool valid_id(const std::string& s) { return !s.empty() && s.find(' ') == std::string::npos; }

}  // namespace

LogLayout kdd_layout() {
  LogLayout l;
  l.sparse_columns = {"user", "ad", "advertiser", "query", "gender", "age"};
  l.numeric_columns = {"depth"};
  return l;
}

KddIngest ingest_kdd(const std::filesystem::path& path, double max_malformed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read KDD file " + path.string());
  KddIngest out;
  out.log.layout = kdd_layout();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++out.summary.lines;
    const std::vector<std::string> f = split(line, '\t');
    const auto clicks = f.size() == kFields ? parse_int(f[0]) : std::nullopt;
    const auto imps = f.size() == kFields ? parse_int(f[1]) : std::nullopt;
    const auto depth = f.size() == kFields ? parse_int(f[5]) : std::nullopt;
    const auto position = f.size() == kFields ? parse_int(f[6]) : std::nullopt;
    bool ok = clicks && imps && depth && position && *clicks >= 0 && *imps >= 1 && *clicks <= *imps &&
              *position >= 1 && *depth >= *position;
    if (ok) {
      for (std::size_t i : {2u, 3u, 4u, 7u, 11u, 12u, 13u}) ok = ok && valid_id(f[i]);
    }
    if (!ok) {
      ++out.summary.malformed;
      continue;
    }
    RawRecord r;
    r.query = tokens(f[8]);
    r.title = tokens(f[9]);
    r.url = {"url" + f[2]};
    r.sparse = {f[11], f[3], f[4], f[7], f[12], f[13]};
    r.numeric = {static_cast<double>(*depth)};
    r.position = static_cast<int>(*position);
    for (long k = 0; k < *imps; ++k) {
      r.click = k < *clicks ? 1 : 0;
      out.log.records.push_back(r);
    }
  }
  out.summary.records = out.log.records.size();
  if (out.summary.lines > 0 &&
      static_cast<double>(out.summary.malformed) > max_malformed * static_cast<double>(out.summary.lines)) {
    throw IoError(path.string() + ": " + std::to_string(out.summary.malformed) + " of " +
                  std::to_string(out.summary.lines) + " lines malformed, above the allowed fraction");
  }
  return out;
}

HoldoutSplit split_holdout(const RawLog& log, std::uint64_t seed, std::uint64_t denominator) {
  if (denominator < 2) throw ConfigError("holdout denominator must be at least 2");
  HoldoutSplit s;
  s.train.layout = log.layout;
  s.valid.layout = log.layout;
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    (mix_seed(seed, i) % denominator == 0 ? s.valid : s.train).records.push_back(log.records[i]);
  }
  return s;
}

}  // namespace ctrfusion
