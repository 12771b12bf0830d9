#include "csv.hpp"

#include "alp/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace alp::csv
{

bool Reader::next(Row &row)
{
  row.fields.clear();
  // skip blank lines
  while (pos_ < text_.size() && (text_[pos_] == '\n' || text_[pos_] == '\r'))
  {
    if (text_[pos_] == '\n')
      ++line_;
    ++pos_;
  }
  if (pos_ >= text_.size())
    return false;

  row.line = line_;
  std::string field;
  bool in_quotes = false;
  while (pos_ < text_.size())
  {
    const char ch = text_[pos_++];
    if (in_quotes)
    {
      if (ch == '"')
      {
        if (pos_ < text_.size() && text_[pos_] == '"')
        {
          field.push_back('"');
          ++pos_;
        }
        else
        {
          in_quotes = false;
        }
      }
      else
      {
        if (ch == '\n')
          ++line_;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"')
      in_quotes = true;
    else if (ch == ',')
      row.fields.push_back(std::exchange(field, {}));
    else if (ch == '\r')
      continue;
    else if (ch == '\n')
    {
      ++line_;
      break;
    }
    else
      field.push_back(ch);
  }
  if (in_quotes)
    throw ParseError("unterminated quoted field", row.line);
  row.fields.push_back(std::move(field));
  return true;
}

Header::Header(const Row &row, const std::vector<std::string> &required) : width_(row.fields.size())
{
  for (std::size_t i = 0; i < row.fields.size(); ++i)
  {
    std::string name = row.fields[i];
    // tolerate a UTF-8 byte order mark and surrounding blanks
    if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0)
      name.erase(0, 3);
    while (!name.empty() && name.front() == ' ')
      name.erase(name.begin());
    while (!name.empty() && name.back() == ' ')
      name.pop_back();
    index_.emplace(name, i);
  }
  for (const auto &name : required)
    if (!index_.count(name))
      throw ParseError("missing column '" + name + "'", row.line);
}

std::string quote(std::string_view field)
{
  if (field.find_first_of(",\"\n\r") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char ch : field)
  {
    if (ch == '"')
      out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::optional<double> parse_optional_double(const std::string &field, std::size_t line, const char *column)
{
  if (field.empty())
    return std::nullopt;
  return parse_double(field, line, column);
}

double parse_double(const std::string &field, std::size_t line, const char *column)
{
  double value = 0.0;
  const char *first = field.data();
  const char *last = field.data() + field.size();
  while (first < last && *first == ' ')
    ++first;
  if (first < last && *first == '+')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ParseError(std::string("invalid number '") + field + "' in column " + column, line);
  return value;
}

std::int64_t parse_int(const std::string &field, std::size_t line, const char *column)
{
  std::int64_t value = 0;
  const char *first = field.data();
  const char *last = field.data() + field.size();
  while (first < last && *first == ' ')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError(std::string("invalid integer '") + field + "' in column " + column, line);
  return value;
}

std::string read_file(const std::string &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace alp::csv
