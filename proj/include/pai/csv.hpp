#pragma once

// Minimal CSV helpers shared by every exporter. Numbers are written in the
// shortest form that round-trips, so output bytes depend only on the values.

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pai::csv {

std::string num(double v);
std::string num(std::size_t v);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : std::runtime_error("csv row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws ParseError(0) if missing.
  std::size_t column(std::string_view name) const;
};

// Comma-separated, no quoting. Every row must have as many fields as the header.
Table read(std::istream& in);
Table read_file(const std::string& path);

double to_double(const std::string& field, std::size_t row);
long long to_int(const std::string& field, std::size_t row);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace pai::csv
