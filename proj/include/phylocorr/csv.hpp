#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace phylocorr {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using CsvRow = std::vector<std::string>;

/// RFC-4180 reader: comma separated, double-quoted fields with "" escapes,
/// CRLF or LF line endings. A UTF-8 byte-order mark is skipped. Blank lines
/// are dropped.
std::vector<CsvRow> parse_csv(std::string_view text);

std::vector<CsvRow> read_csv_file(const std::string& path);

/// Quotes a field when it contains a comma, quote, or line break.
std::string csv_quote(std::string_view field);

std::string format_csv_row(const CsvRow& row);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace phylocorr
