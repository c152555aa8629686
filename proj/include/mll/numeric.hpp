#pragma once

#include <span>
#include <vector>

#include "mll/matrix.hpp"

namespace mll {

// Squared Euclidean distances between all row pairs of Z (n x d -> n x n).
// Symmetric, zero diagonal, non-negative. Distances are formed by explicit
// subtraction (never the Gram expansion) so round-off cannot drive entries
// negative; the diagonal is forced to exact zero.
Matrix pairwise_sq_euclidean(const Matrix& z);

// Cosine similarity between all row pairs (n x d -> n x n). Entries clamped
// to [-1, 1], diagonal exactly 1. Rows must have norm > 1e-12.
Matrix cosine_similarity(const Matrix& z);

// Row k of the result is the arithmetic mean of the rows of z labeled k.
// Every class in [0, K) must have at least one member.
Matrix class_means(const Matrix& z, const LabelVector& y);

// Probability-weighted means: row k = (1/n) * sum_i p(i,k) * z_i, with
// p (n x K) holding per-sample probability rows.
Matrix soft_means(const Matrix& z, const Matrix& p);

// log(sum_i exp(v_i)) with max-subtraction.
double log_sum_exp(std::span<const double> v);

// Eigenvalues of a symmetric matrix (d <= 256), ascending, computed with
// cyclic Jacobi rotations until the off-diagonal norm drops below 1e-10.
// Throws if the input is asymmetric beyond 1e-9 or if 100 sweeps do not
// converge.
std::vector<double> symmetric_eigenvalues(const Matrix& a);

// Copy of z with every row scaled to unit norm. Rows must have norm > 1e-12.
Matrix normalize_rows(const Matrix& z);

}  // namespace mll
