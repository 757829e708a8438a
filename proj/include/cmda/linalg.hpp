#pragma once

#include <Eigen/Dense>

namespace cmda {

// Dense vectors and matrices are 64-bit throughout. Batch matrices store one
// item per column.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kNormFloor = 1e-12;

// 1 - <a,b> / (|a| |b|). Throws DegenerateError when either norm is zero.
double cosineDistance(const Vector& a, const Vector& b);

// Copy of `m` with every column scaled to unit length. Columns whose norm is
// below kNormFloor are left as they are.
Matrix normalizedColumns(const Matrix& m);

// Pairwise cosine distances between the columns of `a` and `b`, i.e. result(i, j)
// = d(a.col(i), b.col(j)). Zero columns are treated as having distance 1 to
// everything.
Matrix pairwiseCosineDistance(const Matrix& a, const Matrix& b);

bool allFinite(const Matrix& m);

}  // namespace cmda
