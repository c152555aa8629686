#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mll/losses.hpp"
#include "mll/matrix.hpp"

namespace mll {

enum class LossKind {
  contrastive,
  center,
  snca,
  multi_similarity,
  cross_entropy,
  spce,
};

std::string to_string(LossKind kind);
LossKind loss_from_string(const std::string& s);

// One hidden layer, rectifier activation, linear output:
//   z = relu(x * w1 + b1) * w2 + b2
struct MlpParams {
  Matrix w1;               // input_dim x hidden
  std::vector<double> b1;  // hidden
  Matrix w2;               // hidden x embedding_dim
  std::vector<double> b2;  // embedding_dim

  std::size_t input_dim() const { return w1.rows(); }
  std::size_t hidden_dim() const { return w1.cols(); }
  std::size_t embedding_dim() const { return w2.cols(); }

  void validate() const;
};

// Embeddings for a block of inputs (n x input_dim -> n x embedding_dim).
Matrix mlp_forward(const MlpParams& p, const Matrix& x);

struct TrainConfig {
  LossKind loss = LossKind::cross_entropy;
  std::size_t epochs = 200;
  std::size_t batch_size = 0;  // 0 = full batch
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;  // weights only, never biases
  double label_smoothing = 0.0;
  std::uint64_t seed = 0;
  bool normalize_embeddings = false;
  std::size_t hidden_width = 64;
  std::size_t embedding_dim = 8;
  HyperParams hyper;

  void validate() const;
};

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t samples_per_class = 128;
  std::size_t input_dim = 16;
  double mean_radius = 5.0;
  double sigma = 0.3;
  std::uint64_t seed = 0;
  double train_fraction = 0.5;

  void validate() const;
};

// One record per epoch. Row 0 is the state before any update; row e the state
// after epoch e. companion carries the paired loss evaluated on the same
// epoch-end embeddings: SPCE during a cross-entropy run, cross-entropy (at a
// head fitted alongside) during an SPCE run, PCE in the bound demo. Missing
// when undefined for the run.
struct TraceRow {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_tight = 0.0;
  double loss_contrast = 0.0;
  std::optional<double> companion;
  double recall_at_1 = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  bool diverged = false;

  void validate() const;  // monotone epochs, finite values
};

struct TrainResult {
  MlpParams params;
  std::optional<SoftmaxClassifier> head;  // cross-entropy runs only
  TrainTrace trace;
};

// K Gaussian clusters in input space: means drawn uniformly on the
// radius-r sphere, re-drawn until every pair is separated by at least
// 2*pi/(4K) radians (error "means-too-crowded" after 1e5 attempts), then
// sigma-spherical samples around each mean. The first
// floor(samples_per_class * train_fraction) samples of every class form the
// train split, the rest the test split. Deterministic under the seed.
std::pair<EmbeddingBatch, EmbeddingBatch> generate_blobs(const SyntheticSpec& s);

// Full-batch (or shuffled mini-batch) SGD with momentum; weight decay on
// weight matrices only. Trainable losses: contrastive, snca,
// multi_similarity, cross_entropy, spce. Cross-entropy uses a bias-free
// zero-initialized head trained jointly. recall@1 is measured on the test
// split with Euclidean distance. A non-finite loss or parameter stops the run
// with diverged = true and the trace truncated to the last good epoch.
TrainResult train_model(const EmbeddingBatch& train, const EmbeddingBatch& test,
                        const TrainConfig& cfg);

// Worst relative mismatch between grad and central finite differences of f
// at x, over at most max_coords coordinates (deterministic stride), skipping
// masked ones. Mismatch is |fd - g| / max(1, |fd|, |g|).
double max_relative_fd_error(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x, std::span<const double> grad,
                             double step, std::size_t max_coords,
                             const std::vector<bool>* exclude = nullptr);

// Finite-difference check of one loss on one batch: pokes every checked
// parameter (embeddings; for cross-entropy also head weights and bias) and
// returns the worst relative error. step must lie in [1e-7, 1e-3].
// Contrastive hinge kinks (cross-class pairs with |margin - D| < 1e-3 or
// D < 1e-3) exclude both samples' coordinates. cross_entropy requires head.
double finite_difference_check(LossKind kind, const EmbeddingBatch& b, const HyperParams& h,
                               double step, const SoftmaxClassifier* head = nullptr);

// Gradient descent on the head alone (embeddings frozen), unsmoothed
// cross-entropy, backtracking step halving; stops when the gradient
// sup-norm drops to tol or after max_iters. ce_per_iter records the loss
// before each accepted step and is monotone non-increasing.
struct InnerCeResult {
  SoftmaxClassifier head;
  std::vector<double> ce_per_iter;
  bool converged = false;
};

InnerCeResult minimize_ce_over_head(const EmbeddingBatch& b, SoftmaxClassifier head,
                                    double tol, std::size_t max_iters);

// Alternating bound optimization: each epoch first fits the head to
// tolerance 1e-6 at frozen encoder (the auxiliary-bound touch point), records
// unsmoothed cross-entropy, its lambda split, and PCE at the fitted head
// (companion; missing when lambda <= 1e-6), then runs one SGD epoch on the
// encoder at frozen head. cfg.loss must be cross_entropy and
// cfg.label_smoothing 0.
TrainTrace alternating_bound_demo(const EmbeddingBatch& train, const EmbeddingBatch& test,
                                  const TrainConfig& cfg);

}  // namespace mll
