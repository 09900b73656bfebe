#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace eob::csv {

// One parsed record with its 1-based line number in the source file.
struct Record {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// Comma-separated table with a header row. Fields may be double-quoted;
// embedded quotes are doubled. Empty fields denote missing values.
class Table {
 public:
  static Table read(const std::filesystem::path& path);
  static Table parse(std::string_view text, std::string source = "<memory>");

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<Record>& records() const { return records_; }
  const std::string& source() const { return source_; }

  // Column position by name; throws a data error naming the source if absent.
  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;
  // Throws a data error listing any of `names` missing from the header.
  void require_columns(const std::vector<std::string>& names) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<Record> records_;
};

// Shortest decimal that round-trips to the same double; NaN prints as "".
std::string format_number(double value);
void write_number(std::ostream& out, double value);
std::string quote_if_needed(std::string_view field);

// Strict numeric parsers; return nullopt on malformed input. Empty text and
// "NA" parse to NaN.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

}  // namespace eob::csv
