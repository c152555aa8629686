#pragma once

#include "mll/bounds.hpp"
#include "mll/matrix.hpp"

namespace mll {

// Joint distribution p(z_hat, y) over |Z| quantized embedding states (rows)
// and K labels (columns). Entries are probabilities summing to 1.
struct DiscreteJoint {
  Matrix p;

  void validate() const;
};

// Row-stochastic q(y_hat | z_hat), same shape as the joint it is paired with.
struct ConditionalModel {
  Matrix q;

  void validate() const;
};

struct MiViews {
  double discriminative = 0.0;  // H(Y) - H(Y|Z)
  double generative = 0.0;      // H(Z) - H(Z|Y)
  double h_y = 0.0;
  double h_z = 0.0;
  double h_y_given_z = 0.0;
  double h_z_given_y = 0.0;
};

// Both decompositions of I(Z;Y), natural log, 0 log 0 = 0. They agree within
// 1e-12 on every valid joint.
MiViews mutual_information_both_views(const DiscreteJoint& j);

// Checks H(Y;Y_hat|Z) = H(Y|Z) + KL(Y||Y_hat|Z) exactly (tolerance 1e-12).
// The returned witness records the three terms and the cross-entropy
// re-evaluated at q = p(y|z), which equals H(Y|Z): minimizing the lhs over q
// drives the KL term to zero. Errors if q is zero where p is positive.
BoundCheck lemma2_identity(const DiscreteJoint& j, const ConditionalModel& m);

// Differential entropy estimate d/(n(n-1)) sum_{i != j} log ||z_i - z_j||^2.
// Squared distances below 1e-12 are clamped with a warning. Adding log-scaled
// copies: estimator(c Z) = estimator(Z) + 2 d log c.
double entropy_estimator(const Matrix& z);

// (d/2) log(2 pi e sigma^2), the entropy of an isotropic d-dimensional
// Gaussian; the analytic reference for the tightness-vs-entropy demo.
double gaussian_conditional_entropy(std::size_t dim, double sigma);

}  // namespace mll
