#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mll/matrix.hpp"

namespace mll {

// A batch of embeddings with class labels.
struct EmbeddingBatch {
  Matrix z;        // n x d
  LabelVector y;   // n labels in [0, K)

  std::size_t n() const { return z.rows(); }
  std::size_t dim() const { return z.cols(); }
  int num_classes() const { return y.num_classes; }

  void validate() const;
};

// Linear softmax head: K x d weights plus optional bias.
struct SoftmaxClassifier {
  Matrix theta;                              // K x d
  std::optional<std::vector<double>> bias;   // K entries when present

  std::size_t num_classes() const { return theta.rows(); }
  void validate() const;
};

// Every loss reports the same decomposition: a tightness term pulling
// same-class samples together and a contrastive term pushing classes apart.
// total is always tightness + contrastive; extras carries per-loss
// diagnostics (lambda, margins, FastAP value, ...).
struct LossReport {
  double tightness = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  std::map<std::string, double> extras;
};

struct LossGrad {
  Matrix d_z;                                  // n x d
  std::optional<Matrix> d_theta;               // K x d for classifier losses
  std::optional<std::vector<double>> d_bias;   // K entries
};

struct HyperParams {
  double margin = 0.5;          // contrastive hinge margin
  double snca_sigma = 0.1;      // SNCA temperature
  double ms_alpha = 2.0;        // MS positive-branch scale
  double ms_beta = 50.0;        // MS negative-branch scale
  double ms_margin = 1.0;       // MS similarity margin
  double label_smoothing = 0.1;
  int fastap_bins = 10;

  void validate() const;
};

// Margin-hinge contrastive loss over ordered pairs:
//   tightness   = (1/n) sum_i sum_{j: y_j = y_i} D_ij^2
//   contrastive = (1/n) sum_i sum_{j: y_j != y_i} max(m - D_ij, 0)^2
// The hinge subgradient at D = m is 0.
std::pair<LossReport, LossGrad> contrastive_loss(const EmbeddingBatch& b,
                                                 const HyperParams& h);

// Tightness part of the center loss, 0.5 * sum_i ||z_i - c_{y_i}||^2, with the
// gradient flowing through the class means. Contrastive part is zero; extras
// records the per-class sums.
std::pair<LossReport, LossGrad> center_tightness(const EmbeddingBatch& b);

// Scalable NCA split over cosine similarities:
//   tightness   = -(1/n) sum_i log sum_{j != i, y_j = y_i} exp(S_ij / sigma)
//   contrastive =  (1/n) sum_i log sum_{k != i}            exp(S_ik / sigma)
// Every sample needs at least one positive.
std::pair<LossReport, LossGrad> snca_loss(const EmbeddingBatch& b, const HyperParams& h);

// Multi-Similarity split over cosine similarities:
//   tightness   = (1/n) sum_i (1/alpha) log[1 + sum_{j != i, y_j = y_i} e^{-alpha (S_ij - m)}]
//   contrastive = (1/n) sum_i (1/beta)  log[1 + sum_{y_j != y_i}        e^{ beta  (S_ij - m)}]
std::pair<LossReport, LossGrad> multi_similarity_loss(const EmbeddingBatch& b,
                                                      const HyperParams& h);

// Softmax cross-entropy with label smoothing eps (true class 1 - eps, others
// eps/(K-1)). When lambda > 0 the tightness/contrastive fields carry the
// linear-plus-ridge vs. log-sum-exp-minus-ridge split of the loss at the given
// theta; when lambda = 0 the split is reported as (total, 0). Gradients cover
// embeddings, weights and bias.
std::pair<LossReport, LossGrad> cross_entropy_loss(const EmbeddingBatch& b,
                                                   const SoftmaxClassifier& c,
                                                   double label_smoothing,
                                                   double lambda = 0.0);

// Pairwise cross-entropy evaluated at fixed class probabilities p (n x K):
//   tightness   = -(1/(2 lambda n^2)) sum_i sum_{j: y_j = y_i} z_i . z_j
//   contrastive =  (1/n) sum_i log sum_k exp((1/(lambda n)) sum_j p_jk z_i . z_j)
//                 - (1/(2 lambda)) sum_k ||c_k^s||^2
// with c_k^s the soft means. Evaluation only; PCE is the bound-optimization
// target, not a training loss.
LossReport pce_loss(const EmbeddingBatch& b, const Matrix& p, double lambda);

// Simplified PCE:
//   tightness   = -(1/n^2) sum_i sum_{j: y_j = y_i} z_i . z_j
//   contrastive =  (1/n) sum_i log sum_k exp((1/n) sum_{j: y_j = k} z_i . z_j)
std::pair<LossReport, LossGrad> spce_loss(const EmbeddingBatch& b);

// Per-query FastAP quantities: the histogram AP itself, the T_AP / C_AP
// expectations under the positive-distance weights, the Jensen lower bound on
// log(ap), and log P(R+).
struct FastApQuery {
  double ap = 0.0;
  double t_ap = 0.0;
  double c_ap = 0.0;
  double jensen_bound = 0.0;
  double log_p_positive = 0.0;
};

std::vector<FastApQuery> fastap_per_query(const EmbeddingBatch& b, int bins);

// Histogram-quantized average precision over 1 - cosine distances in [0, 2].
// Cumulative histograms are inclusive (the current bin counts), so the ratio
// is well defined whenever the numerator is. tightness = mean(-T_AP) and
// contrastive = mean(C_AP), the minimization orientation of the Jensen split;
// extras carries mean FastAP, mean log FastAP, the mean Jensen bound and
// mean log P(R+).
LossReport fastap_loss(const EmbeddingBatch& b, int bins);

// Softmax probabilities p_ik = softmax_k(theta_k . z_i + bias_k), n x K.
Matrix softmax_probabilities(const EmbeddingBatch& b, const SoftmaxClassifier& c);

}  // namespace mll
