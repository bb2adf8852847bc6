#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ctrfusion {

// Column layout of a raw log. The header line is
//   click  position  query  title  url  s:<name>...  n:<name>...
// where s: columns are categorical attributes and n: columns numeric ones.
// Text columns hold space-separated tokens and may be empty.
struct LogLayout {
  std::vector<std::string> sparse_columns;
  std::vector<std::string> numeric_columns;

  bool operator==(const LogLayout&) const = default;
  std::string header() const;
};

struct RawRecord {
  std::vector<std::string> query;
  std::vector<std::string> title;
  std::vector<std::string> url;
  std::vector<std::string> sparse;  // aligned with LogLayout::sparse_columns
  std::vector<double> numeric;      // aligned with LogLayout::numeric_columns
  int position = 1;
  int click = 0;

  // Ad-side tokens: title followed by display URL.
  std::vector<std::string> ad_tokens() const;
  // Identity of the <query, ad> pair, used for frequency slicing.
  std::uint64_t pair_key() const;
};

struct RawLog {
  LogLayout layout;
  std::vector<RawRecord> records;
};

RawLog read_log(const std::filesystem::path& path);
void write_log(const std::filesystem::path& path, const RawLog& log);

std::vector<std::string> split_tokens(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

// One value per line, formatted to round-trip exactly, after an optional
// "# <comment>" header line.
void write_values(const std::filesystem::path& path, const std::vector<double>& values, const std::string& header = "");
std::vector<double> read_values(const std::filesystem::path& path, std::string* header = nullptr);

std::string format_double(double v);

}  // namespace ctrfusion
