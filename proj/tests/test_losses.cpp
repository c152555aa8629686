#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mll/losses.hpp"
#include "mll/matrix.hpp"
#include "mll/numeric.hpp"
#include "mll/rng.hpp"

using namespace mll;

namespace {

EmbeddingBatch random_batch(Rng& rng, std::size_t classes, std::size_t per, std::size_t d,
                            bool unit = true) {
  EmbeddingBatch b;
  std::vector<int> y;
  for (std::size_t k = 0; k < classes; ++k) y.insert(y.end(), per, static_cast<int>(k));
  b.y = LabelVector(std::move(y), static_cast<int>(classes));
  b.z = Matrix(classes * per, d);
  for (std::size_t i = 0; i < b.z.rows(); ++i) {
    double r = 0.0;
    do {
      for (std::size_t j = 0; j < d; ++j) b.z(i, j) = rng.normal();
      r = norm(b.z.row(i));
    } while (r < 1e-6);
    if (unit)
      for (std::size_t j = 0; j < d; ++j) b.z(i, j) /= r;
  }
  return b;
}

// Exact average precision by sorting (ties absent for random real data).
double sort_ap(const EmbeddingBatch& b, std::size_t q) {
  const Matrix s = cosine_similarity(b.z);
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < b.n(); ++j)
    if (j != q) order.push_back(j);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
    return 1.0 - s(q, a) < 1.0 - s(q, c);
  });
  double hits = 0.0, ap = 0.0, positives = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (b.y[order[r]] == b.y[q]) {
      hits += 1.0;
      ap += hits / static_cast<double>(r + 1);
      positives += 1.0;
    }
  }
  return ap / positives;
}

}  // namespace

TEST_CASE("contrastive loss on the three-point instance") {
  // z1=(0,0), z2=(1,0) class 0; z3=(0,2) class 1; margin 2.
  // Same-class ordered pairs (1,2),(2,1) have D^2 = 1 -> tightness 2/3.
  // Cross pairs sit at D = 2 and sqrt(5), both outside the hinge.
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{0, 0}, {1, 0}, {0, 2}});
  b.y = LabelVector({0, 0, 1}, 2);
  HyperParams h;
  h.margin = 2.0;
  const auto [rep, grad] = contrastive_loss(b, h);
  CHECK(rep.tightness == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(rep.contrastive == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(rep.total == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(grad.d_z.rows() == 3);
}

TEST_CASE("contrastive loss degenerate cases") {
  EmbeddingBatch same;
  same.z = Matrix::from_rows({{1, 1}, {1, 1}, {1, 1}});
  same.y = LabelVector({0, 0, 0}, 1);
  HyperParams h;
  h.margin = 2.0;
  CHECK(contrastive_loss(same, h).first.total == doctest::Approx(0.0));

  Rng rng(4);
  EmbeddingBatch b = random_batch(rng, 3, 3, 4);
  h.margin = 0.0;
  CHECK(contrastive_loss(b, h).first.contrastive == doctest::Approx(0.0));
}

TEST_CASE("center tightness on a two-point class") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{0, 0}, {2, 0}});
  b.y = LabelVector({0, 0}, 1);
  const auto [rep, grad] = center_tightness(b);
  CHECK(rep.tightness == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(rep.contrastive == 0.0);
  CHECK(rep.extras.count("class_0") == 1);
}

TEST_CASE("center tightness vanishes at the class means") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 2}, {1, 2}, {-3, 0}});
  b.y = LabelVector({0, 0, 1}, 2);
  CHECK(center_tightness(b).first.total == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("center tightness equals the pairwise form per class") {
  Rng rng(8);
  // unbalanced, unnormalized
  EmbeddingBatch b;
  b.z = Matrix(7, 3);
  for (double& v : b.z.data()) v = rng.uniform(-3.0, 3.0);
  b.y = LabelVector({0, 0, 0, 0, 1, 1, 2}, 3);
  const double direct = center_tightness(b).first.tightness;
  const Matrix d2 = pairwise_sq_euclidean(b.z);
  double pairwise = 0.0;
  for (int k = 0; k < 3; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < b.n(); ++i)
      if (b.y[i] == k) members.push_back(i);
    double s = 0.0;
    for (std::size_t i : members)
      for (std::size_t j : members) s += d2(i, j);
    pairwise += s / (4.0 * static_cast<double>(members.size()));
  }
  CHECK(direct == doctest::Approx(pairwise).epsilon(1e-12));
}

TEST_CASE("center tightness rejects an empty class") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{0, 0}, {1, 1}});
  b.y = LabelVector({0, 0}, 2);
  CHECK_THROWS(center_tightness(b));
}

TEST_CASE("snca on an identical same-class pair") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 0}, {1, 0}});
  b.y = LabelVector({0, 0}, 1);
  HyperParams h;
  h.snca_sigma = 1.0;
  const auto [rep, grad] = snca_loss(b, h);
  CHECK(rep.tightness == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(rep.contrastive == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(rep.total == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("snca total is non-negative") {
  Rng rng(15);
  for (int t = 0; t < 25; ++t) {
    EmbeddingBatch b = random_batch(rng, 2 + static_cast<std::size_t>(rng.uniform_int(3)),
                                    2 + static_cast<std::size_t>(rng.uniform_int(4)),
                                    2 + static_cast<std::size_t>(rng.uniform_int(5)));
    HyperParams h;
    h.snca_sigma = rng.uniform(0.05, 2.0);
    CHECK(snca_loss(b, h).first.total >= -1e-12);
  }
}

TEST_CASE("snca large-sigma limit counts positives") {
  // exp(S/sigma) -> 1, so total -> -(1/n) sum log(|pos_i| / (n-1)).
  // Sizes 3 and 2: pos counts 2,2,2,1,1 -> 0.97040605278392333.
  Rng rng(21);
  EmbeddingBatch b;
  b.z = Matrix(5, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    double r = 0.0;
    do {
      for (std::size_t j = 0; j < 3; ++j) b.z(i, j) = rng.normal();
      r = norm(b.z.row(i));
    } while (r < 1e-6);
    for (std::size_t j = 0; j < 3; ++j) b.z(i, j) /= r;
  }
  b.y = LabelVector({0, 0, 0, 1, 1}, 2);
  HyperParams h;
  h.snca_sigma = 1e6;
  CHECK(snca_loss(b, h).first.total ==
        doctest::Approx(0.97040605278392333).epsilon(1e-4));
}

TEST_CASE("snca names the sample without positives") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 0}, {0, 1}, {-1, 0}});
  b.y = LabelVector({0, 0, 1}, 2);
  HyperParams h;
  CHECK_THROWS_WITH_AS(snca_loss(b, h), doctest::Contains("sample 2"), std::invalid_argument);
}

TEST_CASE("multi-similarity on a positive pair at the margin") {
  // Identical unit vectors: S = 1 = ms_margin, so each sample contributes
  // (1/alpha) log 2 and the mean keeps that value.
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{0, 1}, {0, 1}});
  b.y = LabelVector({0, 0}, 1);
  HyperParams h;
  h.ms_alpha = 2.0;
  h.ms_margin = 1.0;
  const auto rep = multi_similarity_loss(b, h).first;
  CHECK(rep.tightness == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-14));
  CHECK(rep.contrastive == doctest::Approx(0.0));
}

TEST_CASE("multi-similarity matches a naive loop and stays non-negative") {
  Rng rng(33);
  for (int t = 0; t < 10; ++t) {
    EmbeddingBatch b = random_batch(rng, 3, 3, 4);
    HyperParams h;
    h.ms_alpha = rng.uniform(0.5, 4.0);
    h.ms_beta = rng.uniform(5.0, 50.0);
    h.ms_margin = rng.uniform(0.3, 1.0);
    const auto rep = multi_similarity_loss(b, h).first;
    const Matrix s = cosine_similarity(b.z);
    double tight = 0.0, contrast = 0.0;
    const std::size_t n = b.n();
    for (std::size_t i = 0; i < n; ++i) {
      double pos = 0.0, neg = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (b.y[j] == b.y[i])
          pos += std::exp(-h.ms_alpha * (s(i, j) - h.ms_margin));
        else
          neg += std::exp(h.ms_beta * (s(i, j) - h.ms_margin));
      }
      tight += std::log1p(pos) / h.ms_alpha;
      contrast += std::log1p(neg) / h.ms_beta;
    }
    tight /= static_cast<double>(n);
    contrast /= static_cast<double>(n);
    CHECK(rep.tightness == doctest::Approx(tight).epsilon(1e-10));
    CHECK(rep.contrastive == doctest::Approx(contrast).epsilon(1e-10));
    CHECK(rep.tightness >= 0.0);
    CHECK(rep.contrastive >= 0.0);
  }
}

TEST_CASE("cross-entropy with uniform logits is log K") {
  Rng rng(41);
  EmbeddingBatch b = random_batch(rng, 4, 3, 5);
  SoftmaxClassifier c;
  c.theta = Matrix(4, 5);
  const auto rep = cross_entropy_loss(b, c, 0.0).first;
  CHECK(rep.total == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(rep.tightness == doctest::Approx(rep.total));
  CHECK(rep.contrastive == 0.0);
}

TEST_CASE("cross-entropy with label smoothing matches hand arithmetic") {
  // d=1, z=1, theta = (log 9, 0): p = (0.9, 0.1), true class 0, eps=0.1
  // -> -(0.9 log 0.9 + 0.1 log 0.1) = 0.3250829733914482
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1}});
  b.y = LabelVector({0}, 2);
  SoftmaxClassifier c;
  c.theta = Matrix::from_rows({{std::log(9.0)}, {0}});
  const auto rep = cross_entropy_loss(b, c, 0.1).first;
  CHECK(rep.total == doctest::Approx(0.3250829733914482).epsilon(1e-12));
}

TEST_CASE("cross-entropy split carries lambda and always recomposes") {
  Rng rng(47);
  EmbeddingBatch b = random_batch(rng, 3, 4, 4);
  SoftmaxClassifier c;
  c.theta = Matrix(3, 4);
  for (double& v : c.theta.data()) v = rng.normal(0.0, 0.5);

  const auto plain = cross_entropy_loss(b, c, 0.0).first;
  CHECK(plain.contrastive == 0.0);
  CHECK(plain.tightness == doctest::Approx(plain.total));

  const auto split = cross_entropy_loss(b, c, 0.0, 0.37).first;
  CHECK(split.total == doctest::Approx(plain.total).epsilon(1e-12));
  CHECK(split.tightness + split.contrastive == doctest::Approx(split.total).epsilon(1e-10));
  CHECK(split.extras.at("lambda") == doctest::Approx(0.37));
  CHECK(split.contrastive != 0.0);
}

TEST_CASE("cross-entropy bias shifts the logits") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 0}});
  b.y = LabelVector({0}, 2);
  SoftmaxClassifier c;
  c.theta = Matrix(2, 2);
  c.bias = std::vector<double>{std::log(3.0), 0.0};
  // logits (log 3, 0) -> p0 = 3/4
  const auto rep = cross_entropy_loss(b, c, 0.0).first;
  CHECK(rep.total == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("cross-entropy rejects mismatched class counts") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 0}});
  b.y = LabelVector({0}, 2);
  SoftmaxClassifier c;
  c.theta = Matrix(3, 2);
  CHECK_THROWS(cross_entropy_loss(b, c, 0.0));
}

TEST_CASE("spce on the orthogonal two-point instance") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 0}, {0, 1}});
  b.y = LabelVector({0, 1}, 2);
  const auto rep = spce_loss(b).first;
  CHECK(rep.tightness == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(rep.contrastive == doctest::Approx(0.97407698418010669).epsilon(1e-13));
  CHECK(rep.total == doctest::Approx(0.47407698418010669).epsilon(1e-13));
}

TEST_CASE("spce on all-zero embeddings is log K") {
  EmbeddingBatch b;
  b.z = Matrix(4, 3);
  b.y = LabelVector({0, 1, 2, 0}, 3);
  const auto rep = spce_loss(b).first;
  CHECK(rep.tightness == 0.0);
  CHECK(rep.contrastive == doctest::Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("spce equals unsmoothed cross-entropy at the scaled hard means") {
  Rng rng(55);
  EmbeddingBatch b = random_batch(rng, 3, 4, 5, false);
  SoftmaxClassifier c;
  c.theta = Matrix(3, 5);
  for (std::size_t i = 0; i < b.n(); ++i)
    for (std::size_t j = 0; j < 5; ++j)
      c.theta(static_cast<std::size_t>(b.y[i]), j) += b.z(i, j) / static_cast<double>(b.n());
  const double ce = cross_entropy_loss(b, c, 0.0).first.total;
  CHECK(spce_loss(b).first.total == doctest::Approx(ce).epsilon(1e-12));
}

TEST_CASE("pce single point and degenerate lambda") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{3, 4}});
  b.y = LabelVector({0}, 1);
  const Matrix p = Matrix::from_rows({{1.0}});
  const LossReport rep = pce_loss(b, p, 2.0);
  CHECK(rep.tightness == doctest::Approx(-25.0 / 4.0).epsilon(1e-13));
  CHECK(rep.extras.at("lambda") == doctest::Approx(2.0));
  CHECK_THROWS_WITH_AS(pce_loss(b, p, 1e-9), doctest::Contains("lambda-degenerate"),
                       std::invalid_argument);
}

TEST_CASE("pce matches a naive triple-loop oracle") {
  Rng rng(61);
  EmbeddingBatch b = random_batch(rng, 3, 3, 4);
  Matrix p(b.n(), 3);
  for (std::size_t i = 0; i < b.n(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      p(i, k) = rng.uniform(0.1, 1.0);
      s += p(i, k);
    }
    for (std::size_t k = 0; k < 3; ++k) p(i, k) /= s;
  }
  const double lambda = 0.8;
  const LossReport rep = pce_loss(b, p, lambda);

  const double n = static_cast<double>(b.n());
  double tight = 0.0;
  for (std::size_t i = 0; i < b.n(); ++i)
    for (std::size_t j = 0; j < b.n(); ++j)
      if (b.y[i] == b.y[j]) tight += dot(b.z.row(i), b.z.row(j));
  tight *= -1.0 / (2.0 * lambda * n * n);

  double contrast = 0.0;
  for (std::size_t i = 0; i < b.n(); ++i) {
    std::vector<double> logits(3, 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < b.n(); ++j) s += p(j, k) * dot(b.z.row(i), b.z.row(j));
      logits[k] = s / (lambda * n);
    }
    contrast += log_sum_exp(logits);
  }
  contrast /= n;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> ck(4, 0.0);
    for (std::size_t j = 0; j < b.n(); ++j)
      for (std::size_t d = 0; d < 4; ++d) ck[d] += p(j, k) * b.z(j, d);
    for (double& v : ck) v /= n;
    contrast -= squared_norm(ck) / (2.0 * lambda);
  }

  CHECK(rep.tightness == doctest::Approx(tight).epsilon(1e-12));
  CHECK(rep.contrastive == doctest::Approx(contrast).epsilon(1e-12));
  CHECK(rep.total == doctest::Approx(tight + contrast).epsilon(1e-12));
}

TEST_CASE("pce one-hot probabilities reduce soft means to scaled hard means") {
  Rng rng(67);
  EmbeddingBatch b = random_batch(rng, 2, 3, 3);
  Matrix p(b.n(), 2);
  for (std::size_t i = 0; i < b.n(); ++i) p(i, static_cast<std::size_t>(b.y[i])) = 1.0;
  const LossReport rep = pce_loss(b, p, 1.0);
  // With one-hot p the soft mean is |Z_k|/n times the hard mean; rebuild the
  // contrastive term from class_means directly.
  const Matrix cm = class_means(b.z, b.y);
  const double n = static_cast<double>(b.n());
  double contrast = 0.0;
  for (std::size_t i = 0; i < b.n(); ++i) {
    std::vector<double> logits(2, 0.0);
    for (std::size_t k = 0; k < 2; ++k)
      logits[k] = dot(b.z.row(i), cm.row(k)) * 3.0 / n;
    contrast += log_sum_exp(logits);
  }
  contrast /= n;
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> ck(cm.row(k).begin(), cm.row(k).end());
    for (double& v : ck) v *= 3.0 / n;
    contrast -= squared_norm(ck) / 2.0;
  }
  CHECK(rep.contrastive == doctest::Approx(contrast).epsilon(1e-12));
}

TEST_CASE("fastap separable query reaches AP 1 and coincident points P(R+)") {
  EmbeddingBatch sep;
  sep.z = Matrix::from_rows({{1, 0}, {0.99, 0.14106735979665894}, {-1, 0},
                             {-0.99, 0.14106735979665894}});
  sep.y = LabelVector({0, 0, 1, 1}, 2);
  const LossReport rep = fastap_loss(sep, 10000);
  CHECK(rep.extras.at("fastap") == doctest::Approx(1.0).epsilon(1e-9));

  EmbeddingBatch coin;
  coin.z = Matrix::from_rows({{1, 0}, {1, 0}, {1, 0}, {1, 0}});
  coin.y = LabelVector({0, 0, 1, 1}, 2);
  // every query: 1 positive, 2 negatives -> P(R+) = 1/3
  CHECK(fastap_loss(coin, 16).extras.at("fastap") == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("fastap converges to the sort-based AP") {
  Rng rng(71);
  for (int t = 0; t < 10; ++t) {
    EmbeddingBatch b = random_batch(rng, 2 + static_cast<std::size_t>(rng.uniform_int(3)),
                                    2 + static_cast<std::size_t>(rng.uniform_int(4)),
                                    3);
    double mean_ap = 0.0;
    for (std::size_t q = 0; q < b.n(); ++q) mean_ap += sort_ap(b, q);
    mean_ap /= static_cast<double>(b.n());
    CHECK(fastap_loss(b, 10000).extras.at("fastap") ==
          doctest::Approx(mean_ap).epsilon(1e-3));
  }
}

TEST_CASE("fastap names a query without negatives") {
  EmbeddingBatch b;
  b.z = Matrix::from_rows({{1, 0}, {0, 1}, {-1, 0}});
  b.y = LabelVector({0, 0, 0}, 1);
  CHECK_THROWS(fastap_loss(b, 8));
}

TEST_CASE("every loss reports total = tightness + contrastive") {
  Rng rng(77);
  for (int t = 0; t < 10; ++t) {
    EmbeddingBatch b = random_batch(rng, 3, 3, 4);
    HyperParams h;
    SoftmaxClassifier c;
    c.theta = Matrix(3, 4);
    for (double& v : c.theta.data()) v = rng.normal(0.0, 0.4);
    const std::vector<LossReport> reports = {
        contrastive_loss(b, h).first,   center_tightness(b).first,
        snca_loss(b, h).first,          multi_similarity_loss(b, h).first,
        cross_entropy_loss(b, c, 0.1).first, cross_entropy_loss(b, c, 0.0, 0.5).first,
        spce_loss(b).first,             fastap_loss(b, 16)};
    for (const LossReport& r : reports)
      CHECK(r.total == doctest::Approx(r.tightness + r.contrastive).epsilon(1e-10));
  }
}

TEST_CASE("losses are invariant to sample permutation") {
  Rng rng(81);
  EmbeddingBatch b = random_batch(rng, 3, 3, 4);
  EmbeddingBatch p;
  std::vector<std::size_t> perm(b.n());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
  p.z = Matrix(b.n(), b.dim());
  std::vector<int> y(b.n());
  for (std::size_t i = 0; i < b.n(); ++i) {
    for (std::size_t j = 0; j < b.dim(); ++j) p.z(i, j) = b.z(perm[i], j);
    y[i] = b.y[perm[i]];
  }
  p.y = LabelVector(std::move(y), b.num_classes());

  HyperParams h;
  CHECK(contrastive_loss(p, h).first.total ==
        doctest::Approx(contrastive_loss(b, h).first.total).epsilon(1e-10));
  CHECK(snca_loss(p, h).first.total == doctest::Approx(snca_loss(b, h).first.total).epsilon(1e-10));
  CHECK(spce_loss(p).first.total == doctest::Approx(spce_loss(b).first.total).epsilon(1e-10));
  CHECK(fastap_loss(p, 16).total == doctest::Approx(fastap_loss(b, 16).total).epsilon(1e-10));
}
