#include "mll/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mll {

Matrix pairwise_sq_euclidean(const Matrix& z) {
  if (z.rows() < 1) throw std::invalid_argument("pairwise_sq_euclidean: need n >= 1");
  if (!z.all_finite()) throw std::invalid_argument("pairwise_sq_euclidean: non-finite input");
  const std::size_t n = z.rows();
  const std::size_t d = z.cols();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = z.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto zj = z.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = zi[c] - zj[c];
        s += diff * diff;
      }
      out(i, j) = s;
      out(j, i) = s;
    }
    out(i, i) = 0.0;
  }
  return out;
}

Matrix cosine_similarity(const Matrix& z) {
  if (z.rows() < 1) throw std::invalid_argument("cosine_similarity: need n >= 1");
  if (!z.all_finite()) throw std::invalid_argument("cosine_similarity: non-finite input");
  const std::size_t n = z.rows();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = norm(z.row(i));
    if (norms[i] <= 1e-12) {
      throw std::invalid_argument("cosine_similarity: row " + std::to_string(i) +
                                  " has zero norm");
    }
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = dot(z.row(i), z.row(j)) / (norms[i] * norms[j]);
      s = std::clamp(s, -1.0, 1.0);
      out(i, j) = s;
      out(j, i) = s;
    }
    out(i, i) = 1.0;
  }
  return out;
}

Matrix class_means(const Matrix& z, const LabelVector& y) {
  y.validate();
  if (z.rows() != y.size()) throw std::invalid_argument("class_means: row/label count mismatch");
  const std::size_t k = static_cast<std::size_t>(y.num_classes);
  const std::size_t d = z.cols();
  Matrix means(k, d);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto cls = static_cast<std::size_t>(y[i]);
    ++counts[cls];
    auto row = means.row(cls);
    const auto zi = z.row(i);
    for (std::size_t c = 0; c < d; ++c) row[c] += zi[c];
  }
  for (std::size_t cls = 0; cls < k; ++cls) {
    if (counts[cls] == 0) {
      throw std::invalid_argument("class_means: class " + std::to_string(cls) + " is empty");
    }
    auto row = means.row(cls);
    for (std::size_t c = 0; c < d; ++c) row[c] /= static_cast<double>(counts[cls]);
  }
  return means;
}

Matrix soft_means(const Matrix& z, const Matrix& p) {
  if (z.rows() != p.rows()) throw std::invalid_argument("soft_means: row count mismatch");
  const std::size_t n = z.rows();
  const std::size_t k = p.cols();
  const std::size_t d = z.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = p(i, c);
      if (v < 0.0 || !std::isfinite(v)) {
        throw std::invalid_argument("soft_means: row " + std::to_string(i) +
                                    " is not a probability vector");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("soft_means: row " + std::to_string(i) +
                                  " does not sum to 1");
    }
  }
  Matrix means(k, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = z.row(i);
    for (std::size_t cls = 0; cls < k; ++cls) {
      const double w = p(i, cls);
      if (w == 0.0) continue;
      auto row = means.row(cls);
      for (std::size_t c = 0; c < d; ++c) row[c] += w * zi[c];
    }
  }
  for (double& v : means.data()) v /= static_cast<double>(n);
  return means;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_sum_exp: empty vector");
  double m = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("log_sum_exp: non-finite entry");
    m = std::max(m, x);
  }
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> symmetric_eigenvalues(const Matrix& a) {
  const std::size_t d = a.rows();
  if (d == 0 || a.cols() != d) throw std::invalid_argument("symmetric_eigenvalues: not square");
  if (d > 256) throw std::invalid_argument("symmetric_eigenvalues: dimension exceeds 256");
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-9) {
        throw std::invalid_argument("symmetric_eigenvalues: input asymmetric beyond 1e-9");
      }
    }
  }
  Matrix w = a;
  // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double m = 0.5 * (w(i, j) + w(j, i));
      w(i, j) = m;
      w(j, i) = m;
    }
  }

  const int max_sweeps = 100;
  const double off_tol = 1e-10;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) off += 2.0 * w(i, j) * w(i, j);
    }
    if (std::sqrt(off) < off_tol) {
      std::vector<double> eigs(d);
      for (std::size_t i = 0; i < d; ++i) eigs[i] = w(i, i);
      std::sort(eigs.begin(), eigs.end());
      return eigs;
    }
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = w(p, q);
        if (apq == 0.0) continue;
        const double theta = 0.5 * (w(q, q) - w(p, p)) / apq;
        double t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t i = 0; i < d; ++i) {
          const double wip = w(i, p);
          const double wiq = w(i, q);
          w(i, p) = c * wip - s * wiq;
          w(i, q) = s * wip + c * wiq;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double wpi = w(p, i);
          const double wqi = w(q, i);
          w(p, i) = c * wpi - s * wqi;
          w(q, i) = s * wpi + c * wqi;
        }
        w(p, q) = 0.0;
        w(q, p) = 0.0;
      }
    }
  }
  throw std::runtime_error("symmetric_eigenvalues: no convergence after 100 sweeps");
}

Matrix normalize_rows(const Matrix& z) {
  Matrix out = z;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double r = norm(z.row(i));
    if (r <= 1e-12) {
      throw std::invalid_argument("normalize_rows: row " + std::to_string(i) +
                                  " has zero norm");
    }
    auto row = out.row(i);
    for (double& v : row) v /= r;
  }
  return out;
}

}  // namespace mll
