#include "ctrfusion/numbert.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>

#include "ctrfusion/errors.hpp"

namespace ctrfusion {

std::vector<std::string> numbert_transform(double v) {
  if (!std::isfinite(v)) throw Error("numbert_transform: value is not finite");
  std::vector<std::string> out;
  if (v == 0.0) return {"0", kExpToken, "0"};
  if (v < 0) {
    out.push_back(kNegToken);
    v = -v;
  }
  const bool integral = v == std::floor(v) && v < 1e300;
  const int precision = integral ? 14 : kNumbertDigits - 1;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", precision, v);
  // buf looks like d.dddde+XX
  std::string s(buf);
  const std::size_t epos = s.find('e');
  std::string digits;
  for (std::size_t i = 0; i < epos; ++i) {
    if (s[i] != '.') digits += s[i];
  }
  while (digits.size() > 1 && digits.back() == '0') digits.pop_back();
  const int exponent = std::atoi(s.c_str() + epos + 1);
  out.push_back(digits);
  out.push_back(kExpToken);
  out.push_back(std::to_string(exponent));
  return out;
}

double numbert_parse(const std::vector<std::string>& tokens) {
  std::size_t i = 0;
  bool negative = false;
  if (!tokens.empty() && tokens[0] == kNegToken) {
    negative = true;
    i = 1;
  }
  if (tokens.size() != i + 3 || tokens[i + 1] != kExpToken) throw Error("numbert_parse: malformed token group");
  const std::string& digits = tokens[i];
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error("numbert_parse: bad digit token '" + digits + "'");
  }
  const long shift = std::stol(tokens[i + 2]) - static_cast<long>(digits.size() - 1);
  // strtod rounds correctly, so exactly representable values come back exact.
  const double v = std::strtod((digits + "e" + std::to_string(shift)).c_str(), nullptr);
  return negative ? -v : v;
}

std::vector<double> numbert_values(const FeaturizedRecord& r) {
  std::vector<double> out;
  out.reserve(r.sparse_ids.size() + r.dense_raw.size());
  for (int id : r.sparse_ids) out.push_back(static_cast<double>(id));
  out.insert(out.end(), r.dense_raw.begin(), r.dense_raw.end());
  return out;
}

std::vector<std::string> numbert_vocab_tokens(const std::vector<FeaturizedRecord>& records, std::size_t limit) {
  std::map<std::string, std::size_t> counts;
  for (const FeaturizedRecord& r : records) {
    for (double v : numbert_values(r)) {
      for (const std::string& t : numbert_transform(v)) {
        if (t != kExpToken && t != kNegToken) ++counts[t];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) out.push_back(ranked[i].first);
  return out;
}

std::size_t numbert_length(const TokenSeq& text, const std::vector<double>& values) {
  std::size_t n = text.unmasked();
  for (double v : values) n += numbert_transform(v).size() + 1;
  return n;
}

TokenSeq numbert_assemble(const TokenSeq& text, const std::vector<double>& values, const Vocab& vocab,
                          std::size_t length, std::size_t* dropped) {
  TokenSeq out;
  for (std::size_t i = 0; i < text.length(); ++i) {
    if (!text.mask[i]) continue;
    out.ids.push_back(text.ids[i]);
    out.segments.push_back(text.segments[i]);
  }
  if (out.ids.size() > length) throw DimensionError("numbert_assemble: text alone exceeds the sequence length");
  std::size_t lost = 0;
  for (std::size_t f = 0; f < values.size(); ++f) {
    const std::vector<std::string> group = numbert_transform(values[f]);
    if (out.ids.size() + group.size() + 1 > length) {
      lost = values.size() - f;
      break;
    }
    for (const std::string& t : group) {
      out.ids.push_back(vocab.id(t));
      out.segments.push_back(static_cast<int>(Segment::kNumeric));
    }
    out.ids.push_back(kSepId);
    out.segments.push_back(static_cast<int>(Segment::kNumeric));
  }
  if (dropped) *dropped = lost;
  out.mask.assign(out.ids.size(), 1);
  out.ids.resize(length, kPadId);
  out.segments.resize(length, static_cast<int>(Segment::kQuery));
  out.mask.resize(length, 0);
  return out;
}

}  // namespace ctrfusion
