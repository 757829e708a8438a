#include "cmda/linalg.hpp"

#include <string>

#include "cmda/error.hpp"

namespace cmda {

std::string_view toString(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
  }
  return "unknown";
}

DimensionError::DimensionError(std::string_view what, std::size_t expected,
                               std::size_t actual)
    : Error(ErrorKind::kDimensionMismatch,
            std::string(what) + ": expected dimension " + std::to_string(expected) +
                ", got " + std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

double cosineDistance(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosineDistance", static_cast<std::size_t>(a.size()),
                         static_cast<std::size_t>(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kNormFloor || nb < kNormFloor) {
    throw DegenerateError("cosineDistance: zero-norm input");
  }
  double d = 1.0 - a.dot(b) / (na * nb);
  // Rounding can push the result a hair outside [0, 2].
  if (d < 0.0) d = 0.0;
  if (d > 2.0) d = 2.0;
  return d;
}

Matrix normalizedColumns(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double n = out.col(j).norm();
    if (n >= kNormFloor) out.col(j) /= n;
  }
  return out;
}

Matrix pairwiseCosineDistance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("pairwiseCosineDistance", static_cast<std::size_t>(a.rows()),
                         static_cast<std::size_t>(b.rows()));
  }
  Matrix an = normalizedColumns(a);
  Matrix bn = normalizedColumns(b);
  for (Eigen::Index j = 0; j < an.cols(); ++j) {
    if (an.col(j).norm() < kNormFloor) an.col(j).setZero();
  }
  Matrix d = Matrix::Ones(a.cols(), b.cols());
  d.noalias() -= an.transpose() * bn;
  return d;
}

bool allFinite(const Matrix& m) { return m.allFinite(); }

}  // namespace cmda
