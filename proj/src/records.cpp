#include "ctrfusion/records.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctrfusion/errors.hpp"
#include "ctrfusion/hashing.hpp"

namespace ctrfusion {
namespace {

constexpr const char* kFixedColumns[] = {"click", "position", "query", "title", "url"};
constexpr std::size_t kFixedCount = 5;

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw IoError(where + ": not a finite number: '" + s + "'");
  }
  return v;
}

int parse_int(const std::string& s, const std::string& where) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError(where + ": not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::string LogLayout::header() const {
  std::string h;
  for (std::size_t i = 0; i < kFixedCount; ++i) {
    if (i) h += '\t';
    h += kFixedColumns[i];
  }
  for (const auto& c : sparse_columns) h += "\ts:" + c;
  for (const auto& c : numeric_columns) h += "\tn:" + c;
  return h;
}

std::vector<std::string> RawRecord::ad_tokens() const {
  std::vector<std::string> out = title;
  out.insert(out.end(), url.begin(), url.end());
  return out;
}

std::uint64_t RawRecord::pair_key() const {
  Fnv1a h;
  h.update(join_tokens(query));
  h.update(join_tokens(title));
  h.update(join_tokens(url));
  return h.value();
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

RawLog read_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open log: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError("log " + path.string() + " has no header line");
  const auto header = split_tabs(line);
  if (header.size() < kFixedCount) throw IoError("log " + path.string() + ": header too short");
  for (std::size_t i = 0; i < kFixedCount; ++i) {
    if (header[i] != kFixedColumns[i]) {
      throw IoError("log " + path.string() + ": column " + std::to_string(i + 1) + " must be " + kFixedColumns[i]);
    }
  }
  RawLog log;
  bool numeric_started = false;
  for (std::size_t i = kFixedCount; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h.starts_with("s:") && !numeric_started) {
      log.layout.sparse_columns.push_back(h.substr(2));
    } else if (h.starts_with("n:")) {
      numeric_started = true;
      log.layout.numeric_columns.push_back(h.substr(2));
    } else {
      throw IoError("log " + path.string() + ": bad column header '" + h + "'");
    }
  }
  const std::size_t width = header.size();
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    auto cols = split_tabs(line);
    if (cols.size() != width) {
      throw IoError(where + ": expected " + std::to_string(width) + " columns, got " + std::to_string(cols.size()));
    }
    RawRecord r;
    r.click = parse_int(cols[0], where);
    r.position = parse_int(cols[1], where);
    if (r.click != 0 && r.click != 1) throw IoError(where + ": click must be 0 or 1");
    if (r.position < 1) throw IoError(where + ": position must be >= 1");
    r.query = split_tokens(cols[2]);
    r.title = split_tokens(cols[3]);
    r.url = split_tokens(cols[4]);
    std::size_t c = kFixedCount;
    for (std::size_t s = 0; s < log.layout.sparse_columns.size(); ++s) r.sparse.push_back(cols[c++]);
    for (std::size_t n = 0; n < log.layout.numeric_columns.size(); ++n) r.numeric.push_back(parse_double(cols[c++], where));
    log.records.push_back(std::move(r));
  }
  return log;
}

void write_log(const std::filesystem::path& path, const RawLog& log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write log: " + path.string());
  os << log.layout.header() << '\n';
  for (const RawRecord& r : log.records) {
    if (r.sparse.size() != log.layout.sparse_columns.size() || r.numeric.size() != log.layout.numeric_columns.size()) {
      throw IoError("write_log: record does not match the layout");
    }
    os << r.click << '\t' << r.position << '\t' << join_tokens(r.query) << '\t' << join_tokens(r.title) << '\t'
       << join_tokens(r.url);
    for (const auto& s : r.sparse) os << '\t' << s;
    for (double v : r.numeric) os << '\t' << format_double(v);
    os << '\n';
  }
  if (!os) throw IoError("failed writing log: " + path.string());
}

void write_values(const std::filesystem::path& path, const std::vector<double>& values, const std::string& header) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  if (!header.empty()) os << "# " << header << '\n';
  for (double v : values) os << format_double(v) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<double> read_values(const std::filesystem::path& path, std::string* header) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 && line.starts_with("# ")) {
      if (header) *header = line.substr(2);
      continue;
    }
    if (line.empty()) continue;
    out.push_back(parse_double(line, path.string() + ":" + std::to_string(lineno)));
  }
  return out;
}

}  // namespace ctrfusion
