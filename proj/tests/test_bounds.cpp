#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "mll/bounds.hpp"
#include "mll/losses.hpp"
#include "mll/matrix.hpp"
#include "mll/numeric.hpp"
#include "mll/rng.hpp"

using namespace mll;

namespace {

Matrix unit_rows(Rng& rng, std::size_t n, std::size_t d) {
  Matrix z(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    do {
      for (std::size_t j = 0; j < d; ++j) z(i, j) = rng.normal();
      r = norm(z.row(i));
    } while (r < 1e-6);
    for (std::size_t j = 0; j < d; ++j) z(i, j) /= r;
  }
  return z;
}

EmbeddingBatch balanced_unit_batch(Rng& rng, std::size_t classes, std::size_t per,
                                   std::size_t d) {
  EmbeddingBatch b;
  std::vector<int> y;
  for (std::size_t k = 0; k < classes; ++k) y.insert(y.end(), per, static_cast<int>(k));
  b.y = LabelVector(std::move(y), static_cast<int>(classes));
  b.z = unit_rows(rng, classes * per, d);
  return b;
}

// Clustered unit batch with a classifier scaled from the class means; the
// regime the CE/PCE bound construction targets.
EmbeddingBatch clustered_batch(Rng& rng, std::size_t classes, std::size_t per, std::size_t d,
                               double kappa) {
  EmbeddingBatch b;
  std::vector<int> y;
  for (std::size_t k = 0; k < classes; ++k) y.insert(y.end(), per, static_cast<int>(k));
  b.y = LabelVector(std::move(y), static_cast<int>(classes));
  const Matrix centers = unit_rows(rng, classes, d);
  b.z = Matrix(classes * per, d);
  for (std::size_t i = 0; i < b.z.rows(); ++i) {
    double r = 0.0;
    do {
      for (std::size_t j = 0; j < d; ++j)
        b.z(i, j) = centers(i / per, j) + kappa * rng.normal();
      r = norm(b.z.row(i));
    } while (r < 1e-6);
    for (std::size_t j = 0; j < d; ++j) b.z(i, j) /= r;
  }
  return b;
}

bool all_hold(const std::vector<BoundCheck>& checks) {
  for (const BoundCheck& c : checks)
    if (!c.holds) return false;
  return !checks.empty();
}

}  // namespace

TEST_CASE("bound check factories encode slack and tolerance") {
  const BoundCheck le = BoundCheck::leq("le", 1.0, 2.0, 1e-9, "{}");
  CHECK(le.holds);
  CHECK(le.slack == doctest::Approx(1.0));
  const BoundCheck tight = BoundCheck::leq("tight", 1.0, 1.0 - 5e-10, 1e-9, "{}");
  CHECK(tight.holds);  // within tolerance
  const BoundCheck broken = BoundCheck::leq("broken", 1.0, 0.5, 1e-9, "{}");
  CHECK_FALSE(broken.holds);

  const BoundCheck eq = BoundCheck::eq("eq", 3.0, 3.0 + 1e-13, 1e-12, "{}");
  CHECK(eq.holds);
  CHECK(eq.slack == doctest::Approx(1e-13).epsilon(0.1));
  CHECK_FALSE(BoundCheck::eq("eq2", 3.0, 3.1, 1e-12, "{}").holds);
}

TEST_CASE("center pairwise identity holds on unbalanced unnormalized batches") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    EmbeddingBatch b;
    const std::size_t d = 2 + static_cast<std::size_t>(rng.uniform_int(6));
    std::vector<int> y;
    int k = 2 + rng.uniform_int(3);
    for (int c = 0; c < k; ++c) {
      const int sz = 1 + rng.uniform_int(6);
      y.insert(y.end(), static_cast<std::size_t>(sz), c);
    }
    b.y = LabelVector(y, k);
    b.z = Matrix(y.size(), d);
    for (double& v : b.z.data()) v = rng.uniform(-5.0, 5.0);
    const auto checks = center_pairwise_identity(b);
    CHECK(checks.size() == static_cast<std::size_t>(k));
    CHECK(all_hold(checks));
    for (const BoundCheck& c : checks) CHECK(std::fabs(c.lhs - c.rhs) <= 1e-9);
  }
}

TEST_CASE("tightness chain holds on balanced unit batches") {
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    EmbeddingBatch b = balanced_unit_batch(rng, 2 + static_cast<std::size_t>(rng.uniform_int(4)),
                                           2 + static_cast<std::size_t>(rng.uniform_int(5)),
                                           2 + static_cast<std::size_t>(rng.uniform_int(8)));
    HyperParams h;
    h.snca_sigma = rng.uniform(0.05, 2.0);
    h.ms_alpha = rng.uniform(0.5, 5.0);
    const auto checks = verify_tightness_chain(b, h);
    CHECK(checks.size() == 3 * static_cast<std::size_t>(b.num_classes()));
    CHECK(all_hold(checks));
  }
}

TEST_CASE("tightness chain rejects unnormalized or unbalanced input") {
  Rng rng(13);
  HyperParams h;
  EmbeddingBatch scaled = balanced_unit_batch(rng, 2, 3, 4);
  for (double& v : scaled.z.data()) v *= 2.0;
  CHECK_THROWS(verify_tightness_chain(scaled, h));

  EmbeddingBatch lopsided;
  lopsided.y = LabelVector({0, 0, 1}, 2);
  lopsided.z = unit_rows(rng, 3, 4);
  CHECK_THROWS(verify_tightness_chain(lopsided, h));
}

TEST_CASE("contrastive chain holds on mixed unit batches") {
  Rng rng(17);
  for (int t = 0; t < 30; ++t) {
    EmbeddingBatch b = balanced_unit_batch(rng, 2 + static_cast<std::size_t>(rng.uniform_int(3)),
                                           2 + static_cast<std::size_t>(rng.uniform_int(5)),
                                           2 + static_cast<std::size_t>(rng.uniform_int(8)));
    HyperParams h;
    h.snca_sigma = rng.uniform(0.1, 2.0);
    h.ms_beta = rng.uniform(2.0, 60.0);
    const auto checks = verify_contrastive_chain(b, h);
    CHECK(checks.size() == 6);
    CHECK(all_hold(checks));
  }
}

TEST_CASE("compute_pce_lambda matches an explicit eigensolve") {
  Rng rng(21);
  EmbeddingBatch b = balanced_unit_batch(rng, 3, 4, 4);
  SoftmaxClassifier c;
  c.theta = Matrix(3, 4);
  for (double& v : c.theta.data()) v = rng.normal(0.0, 0.4);

  const PceLambda pl = compute_pce_lambda(b, c);
  const Matrix p = softmax_probabilities(b, c);
  double min_eig = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < 3; ++k) {
    Matrix a(4, 4);
    for (std::size_t i = 0; i < b.n(); ++i) {
      const double w = p(i, k) - p(i, k) * p(i, k);
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t s = 0; s < 4; ++s) a(r, s) += w * b.z(i, r) * b.z(i, s);
    }
    for (double& v : a.data()) v /= static_cast<double>(b.n());
    const std::vector<double> eigs = symmetric_eigenvalues(a);
    CHECK(pl.per_class_min_eigs[k] == doctest::Approx(eigs.front()).epsilon(1e-10));
    min_eig = std::min(min_eig, eigs.front());
  }
  CHECK(pl.lambda == doctest::Approx(min_eig).epsilon(1e-12));
  CHECK(pl.per_class_min_eigs.size() == 3);
  CHECK(pl.per_class_traces.size() == 3);
  CHECK(pl.lambda > 0.0);
}

TEST_CASE("compute_pce_lambda is permutation invariant and rotation equivariant") {
  Rng rng(25);
  EmbeddingBatch b = balanced_unit_batch(rng, 3, 4, 3);
  SoftmaxClassifier c;
  c.theta = Matrix(3, 3);
  for (double& v : c.theta.data()) v = rng.normal(0.0, 0.3);
  const double lambda = compute_pce_lambda(b, c).lambda;

  // reverse the sample order
  EmbeddingBatch rev;
  rev.z = Matrix(b.n(), 3);
  std::vector<int> y(b.n());
  for (std::size_t i = 0; i < b.n(); ++i) {
    const std::size_t s = b.n() - 1 - i;
    for (std::size_t j = 0; j < 3; ++j) rev.z(i, j) = b.z(s, j);
    y[i] = b.y[s];
  }
  rev.y = LabelVector(std::move(y), 3);
  CHECK(compute_pce_lambda(rev, c).lambda == doctest::Approx(lambda).epsilon(1e-8));

  // rotate embeddings and classifier together (Givens in coordinates 0,2)
  const double phi = 0.7;
  auto rotate = [&](const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      out(i, 0) = std::cos(phi) * m(i, 0) - std::sin(phi) * m(i, 2);
      out(i, 2) = std::sin(phi) * m(i, 0) + std::cos(phi) * m(i, 2);
    }
    return out;
  };
  EmbeddingBatch rot;
  rot.z = rotate(b.z);
  rot.y = b.y;
  SoftmaxClassifier crot;
  crot.theta = rotate(c.theta);
  CHECK(compute_pce_lambda(rot, crot).lambda == doctest::Approx(lambda).epsilon(1e-8));
}

TEST_CASE("ce/pce bound holds in the clustered aligned regime") {
  Rng rng(29);
  for (int t = 0; t < 50; ++t) {
    EmbeddingBatch b = clustered_batch(rng, 2 + static_cast<std::size_t>(rng.uniform_int(4)),
                                       4 + static_cast<std::size_t>(rng.uniform_int(9)),
                                       2 + static_cast<std::size_t>(rng.uniform_int(7)),
                                       rng.uniform(0.3, 1.5));
    SoftmaxClassifier c;
    c.theta = class_means(b.z, b.y);
    const double scale = rng.uniform(0.0, 0.35);
    for (double& v : c.theta.data()) v *= scale;
    const auto checks = verify_ce_pce_bound(b, c);
    REQUIRE(checks.size() == 2);
    CHECK(checks[0].name == "ce_pce_upper_bound");
    CHECK(checks[1].name == "ce_pce_f1_convexity");
    CHECK(all_hold(checks));
  }
}

TEST_CASE("ce/pce bound rejects a collapsed-probability classifier") {
  Rng rng(33);
  EmbeddingBatch b = clustered_batch(rng, 3, 5, 4, 0.2);
  SoftmaxClassifier c;
  c.theta = class_means(b.z, b.y);
  for (double& v : c.theta.data()) v *= 400.0;  // p effectively one-hot
  CHECK_THROWS_AS(verify_ce_pce_bound(b, c), LambdaDegenerateError);
}

TEST_CASE("ce/pce f1 link at theta = 0") {
  Rng rng(37);
  EmbeddingBatch b = clustered_batch(rng, 3, 4, 4, 0.8);
  SoftmaxClassifier c;
  c.theta = Matrix(3, 4);
  const auto checks = verify_ce_pce_bound(b, c);
  // f1(0) = 0, f1(theta*) = tightness <= 0 for aligned clusters
  CHECK(checks[1].lhs <= checks[1].rhs + 1e-8);
  CHECK(all_hold(checks));
}

TEST_CASE("hinge sandwich and error cap on in-zone batches") {
  Rng rng(41);
  for (int t = 0; t < 30; ++t) {
    const double margin = rng.uniform(0.2, 2.0);
    const double u = rng.uniform(0.3, 0.95);
    EmbeddingBatch b = balanced_unit_batch(rng, 2, 3 + static_cast<std::size_t>(rng.uniform_int(5)),
                                           3);
    const double radius = 0.5 * margin * u;
    for (double& v : b.z.data()) v *= radius;
    const auto checks = verify_hinge_approximation(b, margin);
    REQUIRE(checks.size() == 3);
    CHECK(all_hold(checks));
  }
}

TEST_CASE("hinge verifier rejects pairs beyond the margin") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 0}, {-1, 0}});
  b.y = LabelVector({0, 1}, 2);
  CHECK_THROWS(verify_hinge_approximation(b, 0.5));
}

TEST_CASE("fastap jensen bound holds across bin counts") {
  Rng rng(45);
  for (int t = 0; t < 30; ++t) {
    EmbeddingBatch b = balanced_unit_batch(rng, 2 + static_cast<std::size_t>(rng.uniform_int(4)),
                                           2 + static_cast<std::size_t>(rng.uniform_int(5)),
                                           2 + static_cast<std::size_t>(rng.uniform_int(7)));
    const int bins[] = {4, 16, 64};
    const BoundCheck c = verify_fastap_jensen(b, bins[t % 3]);
    CHECK(c.holds);
    CHECK(c.name == "fastap_jensen");
  }
}

TEST_CASE("fastap jensen is an equality for a single occupied bin") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 0}, {1, 0}, {1, 0}, {1, 0}});
  b.y = LabelVector({0, 0, 1, 1}, 2);
  const BoundCheck c = verify_fastap_jensen(b, 8);
  CHECK(c.holds);
  CHECK(std::fabs(c.lhs - c.rhs) <= 1e-12);
}
