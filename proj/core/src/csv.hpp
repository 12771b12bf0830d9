#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace alp::csv
{

struct Row
{
  std::size_t line = 0; // 1-based line where the row starts
  std::vector<std::string> fields;
};

// RFC 4180 style reader: quoted fields, doubled quotes, CRLF or LF endings.
class Reader
{
public:
  explicit Reader(std::string text) : text_(std::move(text)) {}

  // False at end of input.
  bool next(Row &row);

private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

// Maps header names to column indices; throws ParseError on missing columns.
class Header
{
public:
  Header(const Row &row, const std::vector<std::string> &required);
  std::size_t operator[](const std::string &name) const { return index_.at(name); }
  std::size_t width() const { return width_; }

private:
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t width_ = 0;
};

std::string quote(std::string_view field);

std::optional<double> parse_optional_double(const std::string &field, std::size_t line, const char *column);
double parse_double(const std::string &field, std::size_t line, const char *column);
std::int64_t parse_int(const std::string &field, std::size_t line, const char *column);

std::string read_file(const std::string &path);

} // namespace alp::csv
