#pragma once

#include <stdexcept>
#include <string>

namespace alp
{

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind
{
  argument,
  invalid_coordinate,
  parse,
  integrity,
  numerical,
};

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

class ArgumentError : public Error
{
public:
  explicit ArgumentError(const std::string &what) : Error(ErrorKind::argument, what) {}
};

class InvalidCoordinateError : public Error
{
public:
  explicit InvalidCoordinateError(const std::string &what) : Error(ErrorKind::invalid_coordinate, what) {}
};

class ParseError : public Error
{
public:
  ParseError(const std::string &what, std::size_t line)
      : Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + what), line_(line)
  {
  }
  explicit ParseError(const std::string &what) : Error(ErrorKind::parse, what) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_ = 0;
};

class IntegrityError : public Error
{
public:
  explicit IntegrityError(const std::string &what) : Error(ErrorKind::integrity, what) {}
};

class NumericalError : public Error
{
public:
  explicit NumericalError(const std::string &what) : Error(ErrorKind::numerical, what) {}
};

// Solver left the vicinity of the Earth or produced non-finite values.
class NoSolutionError : public NumericalError
{
public:
  explicit NoSolutionError(const std::string &what) : NumericalError(what) {}
};

class IllConditionedError : public NumericalError
{
public:
  explicit IllConditionedError(const std::string &what) : NumericalError(what) {}
};

// Iterative fit exhausted its budget; message carries residual statistics.
class NonConvergenceError : public NumericalError
{
public:
  explicit NonConvergenceError(const std::string &what) : NumericalError(what) {}
};

} // namespace alp
