#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace whittle {

using Scalar = double;
using Index = Eigen::Index;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// CSR storage with sorted column indices. Symmetric matrices keep both triangles.
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor, int>;

/// A linear map given only through its action on vectors.
using LinearMap = std::function<Vector(const Vector&)>;

/// Base of every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: grid sizes, exponents, coefficients, file contents, config keys.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Factorization met a non-positive pivot.
class NotSpdError : public Error {
 public:
  NotSpdError(const std::string& what, Index pivot)
      : Error(what + " (pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
  Index pivot() const { return pivot_; }

 private:
  Index pivot_;
};

/// An iterative method stopped before meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double worst_residual)
      : Error(what), worst_residual_(worst_residual) {}
  double worst_residual() const { return worst_residual_; }

 private:
  double worst_residual_;
};

/// Malformed or truncated files.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace whittle
