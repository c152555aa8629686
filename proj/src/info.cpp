#include "mll/info.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mll/log.hpp"
#include "mll/numeric.hpp"

namespace mll {

namespace {

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

void DiscreteJoint::validate() const {
  if (p.rows() == 0 || p.cols() == 0) {
    throw std::invalid_argument("DiscreteJoint: empty table");
  }
  double total = 0.0;
  for (double v : p.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("DiscreteJoint: entries must be finite and >= 0");
    }
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("DiscreteJoint: probabilities sum to " + std::to_string(total) +
                                ", expected 1 within 1e-12");
  }
}

void ConditionalModel::validate() const {
  if (q.rows() == 0 || q.cols() == 0) {
    throw std::invalid_argument("ConditionalModel: empty table");
  }
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < q.cols(); ++j) {
      const double v = q(i, j);
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("ConditionalModel: entries must be finite and >= 0");
      }
      total += v;
    }
    if (std::fabs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("ConditionalModel: row " + std::to_string(i) + " sums to " +
                                  std::to_string(total) + ", expected 1 within 1e-12");
    }
  }
}

MiViews mutual_information_both_views(const DiscreteJoint& j) {
  j.validate();
  const std::size_t nz = j.p.rows(), ny = j.p.cols();
  std::vector<double> pz(nz, 0.0), py(ny, 0.0);
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      pz[z] += j.p(z, y);
      py[y] += j.p(z, y);
    }
  }
  MiViews v;
  for (double p : py) v.h_y -= xlogx(p);
  for (double p : pz) v.h_z -= xlogx(p);
  // H(Y|Z) = -sum_{z,y} p(z,y) log(p(z,y)/p(z)); zero-mass states contribute 0
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      const double p = j.p(z, y);
      if (p > 0.0) {
        v.h_y_given_z -= p * std::log(p / pz[z]);
        v.h_z_given_y -= p * std::log(p / py[y]);
      }
    }
  }
  v.discriminative = v.h_y - v.h_y_given_z;
  v.generative = v.h_z - v.h_z_given_y;
  return v;
}

BoundCheck lemma2_identity(const DiscreteJoint& j, const ConditionalModel& m) {
  j.validate();
  m.validate();
  if (!j.p.same_shape(m.q)) {
    throw std::invalid_argument("lemma2_identity: joint and model shapes differ");
  }
  const std::size_t nz = j.p.rows(), ny = j.p.cols();
  std::vector<double> pz(nz, 0.0);
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) pz[z] += j.p(z, y);
  }

  double ce = 0.0, h = 0.0, kl = 0.0, ce_at_true = 0.0;
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      const double p = j.p(z, y);
      if (p == 0.0) continue;
      if (m.q(z, y) <= 0.0) {
        throw std::invalid_argument("lemma2_identity: q is zero at state (" + std::to_string(z) +
                                    "," + std::to_string(y) +
                                    ") where p is positive (infinite cross-entropy)");
      }
      const double cond = p / pz[z];
      ce -= p * std::log(m.q(z, y));
      h -= p * std::log(cond);
      kl += p * std::log(cond / m.q(z, y));
      ce_at_true -= p * std::log(cond);
    }
  }

  std::ostringstream witness;
  witness << "{\"h_y_given_z\":" << h << ",\"kl\":" << kl << ",\"ce\":" << ce
          << ",\"ce_at_true_conditional\":" << ce_at_true << "}";
  return BoundCheck::eq("lemma2_identity", ce, h + kl, 1e-12, witness.str());
}

double entropy_estimator(const Matrix& z) {
  if (z.rows() < 2) {
    throw std::invalid_argument("entropy_estimator: need at least 2 points, got " +
                                std::to_string(z.rows()));
  }
  const Matrix d2 = pairwise_sq_euclidean(z);
  const std::size_t n = z.rows();
  double sum = 0.0;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double v = d2(i, j);
      if (v < 1e-12) {
        v = 1e-12;
        ++clamped;
      }
      sum += std::log(v);
    }
  }
  if (clamped > 0) {
    log::warn("entropy_estimator: clamped %zu near-duplicate pair(s) at 1e-12", clamped);
  }
  return static_cast<double>(z.cols()) * sum /
         (static_cast<double>(n) * static_cast<double>(n - 1));
}

double gaussian_conditional_entropy(std::size_t dim, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_conditional_entropy: sigma must be > 0");
  }
  constexpr double two_pi_e = 2.0 * 3.14159265358979323846 * 2.71828182845904523536;
  return 0.5 * static_cast<double>(dim) * std::log(two_pi_e * sigma * sigma);
}

}  // namespace mll
