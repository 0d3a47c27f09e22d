#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcontrol {

/// Dense row-major matrix of doubles. Used for transition matrices and
/// small per-state tables; sizes here are K x K with K rarely above 6.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Bad user configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Formats a double with 17 significant digits so that strtod recovers the
/// exact same value.
std::string format_exact(double v);

/// Parses a double written by format_exact (or any strtod-compatible text).
/// Throws DataError on trailing garbage or empty input.
double parse_double(const std::string& text);

long long parse_integer(const std::string& text);

}  // namespace tcontrol
