#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mll/losses.hpp"
#include "mll/matrix.hpp"

namespace mll {

enum class CheckKind { inequality, equality };

// One verified claim over a concrete instance. Inequality checks are oriented
// lhs <= rhs and hold when lhs <= rhs + tolerance; equality checks hold when
// |lhs - rhs| <= tolerance. slack is rhs - lhs for inequalities and
// |lhs - rhs| for equalities. witness is a compact JSON summary of the
// instance; full replay files are written by the verification campaign.
struct BoundCheck {
  std::string name;
  CheckKind kind = CheckKind::inequality;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool holds = false;
  double tolerance = 0.0;
  std::string witness;

  static BoundCheck leq(std::string name, double lhs, double rhs, double tolerance,
                        std::string witness = "");
  static BoundCheck eq(std::string name, double lhs, double rhs, double tolerance,
                       std::string witness = "");
};

// lambda = min over classes k and eigenvalue indices l of eig_l(A_k), where
// A_k = (1/n) sum_i (p_ik - p_ik^2) z_i z_i^T. Tiny negative eigenvalues
// above -1e-10 are clamped to 0; anything lower is an eigensolver failure.
struct PceLambda {
  double lambda = 0.0;
  std::vector<double> per_class_min_eigs;
  std::vector<double> per_class_traces;
};

// Thrown when an instance is too degenerate for the CE >= PCE bound
// (lambda <= 1e-6). Campaigns count these as skips, not failures.
class LambdaDegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

PceLambda compute_pce_lambda(const EmbeddingBatch& b, const SoftmaxClassifier& c);

// Per-class identity sum_{i in k} ||z_i - c_k||^2 = (1/(2|Z_k|)) sum_{i,j in k}
// ||z_i - z_j||^2. Holds unconditionally (no balance or normalization needed);
// classes with fewer than 2 members check 0 = 0.
std::vector<BoundCheck> center_pairwise_identity(const EmbeddingBatch& b);

// Tightness-side chain. Preconditions (never silently fixed): rows unit-length
// within 1e-9 and balanced classes of size >= 2. Emits three checks per class:
//   tight_center_identity_<k>: the pairwise identity above (equality, 1e-9);
//   tight_snca_jensen_<k>:  -sum_i log((1/(|Z_k|-1)) sum_{j != i} e^{S_ij/sigma})
//       <= sum_{i != j} ||z_i - z_j||^2 / (2 sigma (|Z_k|-1)) - |Z_k|/sigma,
//       the exact Jensen form (slack 0 when the class is a single point);
//   tight_ms_jensen_<k>: (1/|Z_k|) sum_{i,j} -(S_ij - 1)
//       <= sum_i (1/alpha) log((1/|Z_k|) sum_j e^{-alpha (S_ij - 1)}).
std::vector<BoundCheck> verify_tightness_chain(const EmbeddingBatch& b, const HyperParams& h);

// Contrastive-side chain over cross-class pairs, margin fixed at 1 as in the
// derivation. Samples without negatives are skipped (logged); requires unit
// rows within 1e-9. Links (S = cosine similarity, m_i = #negatives of i):
//   c_ms_drop_one:   (1/(beta n)) sum_i log sum_neg e^{beta(S-1)}
//                      <= (1/(beta n)) sum_i log(1 + sum_neg e^{beta(S-1)})
//   c_ms_jensen:     (1/n) sum_i (1/m_i) sum_neg (S_ij - 1) <= the lhs above
//   c_ms_sq_euclid:  that linear form = -(1/(2n)) sum_i (1/m_i) sum_neg D_ij^2
//   c_snca_drop_pos: (1/n) sum_i log sum_neg e^{S/sigma}
//                      <= (1/n) sum_i log sum_{j != i} e^{S/sigma}
//   c_snca_jensen:   (1/n) sum_i (1/m_i) sum_neg S_ij/sigma <= the lhs above
//   c_snca_sq_euclid: that linear form = (1/n) sum_i (1/(sigma m_i)) sum_neg (1 - D_ij^2/2)
// Returns an empty list when no sample has a negative.
std::vector<BoundCheck> verify_contrastive_chain(const EmbeddingBatch& b, const HyperParams& h);

// Pairwise upper bound at the supplied classifier (no bias): with
// P = softmax(Z theta^T) and lambda from compute_pce_lambda,
//   ce_pce_upper_bound:        PCE(Z, P, lambda) <= CE(Z, theta, eps=0)   (tol 1e-8)
//   ce_pce_f1_convexity: f1(theta*) <= f1(theta)                    (tol 1e-8)
// Throws LambdaDegenerateError when lambda <= 1e-6.
std::vector<BoundCheck> verify_ce_pce_bound(const EmbeddingBatch& b, const SoftmaxClassifier& c);

// Linear-approximation sandwich for the hinge with x = D_ij/margin over
// cross-class pairs; requires every cross-class D_ij <= margin. Emits
//   hinge_sandwich_lower: 1 - 2x <= (1-x)^2  at the worst pair
//   hinge_sandwich_upper: (1-x)^2 <= 1 - x   at the worst pair
//   hinge_error_cap: |C_hinge - (m^2/n) sum (1-2x)| <= (m^2/n) sum x
std::vector<BoundCheck> verify_hinge_approximation(const EmbeddingBatch& b, double margin);

// Per query: jensen_bound_i <= log(FastAP_i); reports the worst query and
// holds only if every query passes at tolerance 1e-10.
BoundCheck verify_fastap_jensen(const EmbeddingBatch& b, int bins);

}  // namespace mll
