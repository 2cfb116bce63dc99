#ifndef ODISAR_CORE_HPP
#define ODISAR_CORE_HPP

#include <Eigen/Dense>

#include <charconv>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace odisar {

/// Dense row-major matrix; rows are time steps, columns are features or channels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV, JSON, config).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Matrix dimensions disagree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                          const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()));
  }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  require_shape(b, a.rows(), a.cols(), what);
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace odisar

#endif  // ODISAR_CORE_HPP
