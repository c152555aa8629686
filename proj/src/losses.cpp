#include "mll/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mll/numeric.hpp"

namespace mll {

void EmbeddingBatch::validate() const {
  y.validate();
  if (z.rows() != y.size()) {
    throw std::invalid_argument("EmbeddingBatch: " + std::to_string(z.rows()) +
                                " embedding rows vs " + std::to_string(y.size()) + " labels");
  }
  if (!z.all_finite()) throw std::invalid_argument("EmbeddingBatch: non-finite embedding entry");
}

void SoftmaxClassifier::validate() const {
  if (theta.rows() == 0 || theta.cols() == 0) {
    throw std::invalid_argument("SoftmaxClassifier: empty weight matrix");
  }
  if (!theta.all_finite()) throw std::invalid_argument("SoftmaxClassifier: non-finite weight");
  if (bias) {
    if (bias->size() != theta.rows()) {
      throw std::invalid_argument("SoftmaxClassifier: bias size " + std::to_string(bias->size()) +
                                  " vs " + std::to_string(theta.rows()) + " classes");
    }
    for (double v : *bias) {
      if (!std::isfinite(v)) throw std::invalid_argument("SoftmaxClassifier: non-finite bias");
    }
  }
}

void HyperParams::validate() const {
  if (!(margin >= 0.0)) throw std::invalid_argument("HyperParams: margin must be >= 0");
  if (!(snca_sigma > 0.0)) throw std::invalid_argument("HyperParams: snca_sigma must be > 0");
  if (!(ms_alpha > 0.0)) throw std::invalid_argument("HyperParams: ms_alpha must be > 0");
  if (!(ms_beta > 0.0)) throw std::invalid_argument("HyperParams: ms_beta must be > 0");
  if (!std::isfinite(ms_margin)) throw std::invalid_argument("HyperParams: ms_margin not finite");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw std::invalid_argument("HyperParams: label_smoothing must lie in [0,1)");
  }
  if (fastap_bins < 2) throw std::invalid_argument("HyperParams: fastap_bins must be >= 2");
}

namespace {

void require_pairwise(const EmbeddingBatch& b, const char* op) {
  if (b.n() < 2) {
    throw std::invalid_argument(std::string(op) + ": need at least 2 samples, got " +
                                std::to_string(b.n()));
  }
}

// Backprop through S = cosine_similarity(Z) for a scalar loss with
// coefficients g(i,j) = dL/dS_ij (diagonal ignored). Uses
// dS_ij/dz_i = z_j/(r_i r_j) - S_ij z_i / r_i^2.
Matrix cosine_backprop(const Matrix& z, const Matrix& s, const Matrix& g) {
  const std::size_t n = z.rows(), d = z.cols();
  std::vector<double> r(n);
  Matrix u(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = norm(z.row(i));
    for (std::size_t c = 0; c < d; ++c) u(i, c) = z(i, c) / r[i];
  }
  Matrix dz(n, d);
  for (std::size_t p = 0; p < n; ++p) {
    double diag = 0.0;
    std::vector<double> acc(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == p) continue;
      const double gpj = g(p, j) + g(j, p);
      if (gpj == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) acc[c] += gpj * u(j, c);
      diag += gpj * s(p, j);
    }
    for (std::size_t c = 0; c < d; ++c) dz(p, c) = (acc[c] - diag * u(p, c)) / r[p];
  }
  return dz;
}

// log(1 + sum_j exp(x_j)) and the weights exp(x_j) / (1 + sum exp(x)).
double log1p_sum_exp(const std::vector<double>& x, std::vector<double>* weights) {
  double m = 0.0;
  for (double v : x) m = std::max(m, v);
  double denom = std::exp(-m);
  for (double v : x) denom += std::exp(v - m);
  if (weights) {
    weights->resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) (*weights)[j] = std::exp(x[j] - m) / denom;
  }
  return std::log(denom) + m;
}

std::vector<double> softmax_in_place(std::vector<double>& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  double denom = 0.0;
  for (double& v : x) {
    v = std::exp(v - m);
    denom += v;
  }
  for (double& v : x) v /= denom;
  return x;
}

}  // namespace

std::pair<LossReport, LossGrad> contrastive_loss(const EmbeddingBatch& b, const HyperParams& h) {
  b.validate();
  h.validate();
  require_pairwise(b, "contrastive_loss");
  const std::size_t n = b.n(), d = b.dim();
  const double m = h.margin;
  const Matrix d2 = pairwise_sq_euclidean(b.z);

  double tight = 0.0, contrast = 0.0;
  Matrix dz(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dist = std::sqrt(d2(i, j));
      if (b.y[i] == b.y[j]) {
        tight += d2(i, j);
        for (std::size_t c = 0; c < d; ++c) {
          dz(i, c) += (4.0 / n) * (b.z(i, c) - b.z(j, c));
        }
      } else {
        const double gap = m - dist;
        if (gap > 0.0) {
          contrast += gap * gap;
          if (dist > 0.0) {
            const double coef = -(4.0 / n) * gap / dist;
            for (std::size_t c = 0; c < d; ++c) {
              dz(i, c) += coef * (b.z(i, c) - b.z(j, c));
            }
          }
        }
      }
    }
  }
  tight /= static_cast<double>(n);
  contrast /= static_cast<double>(n);

  LossReport rep;
  rep.tightness = tight;
  rep.contrastive = contrast;
  rep.total = tight + contrast;
  rep.extras["margin"] = m;
  return {rep, LossGrad{std::move(dz), std::nullopt, std::nullopt}};
}

std::pair<LossReport, LossGrad> center_tightness(const EmbeddingBatch& b) {
  b.validate();
  const std::size_t n = b.n(), d = b.dim();
  const Matrix c = class_means(b.z, b.y);

  LossReport rep;
  std::vector<double> per_class(static_cast<std::size_t>(b.num_classes()), 0.0);
  Matrix dz(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(b.y[i]);
    double s = 0.0;
    for (std::size_t cc = 0; cc < d; ++cc) {
      const double diff = b.z(i, cc) - c(k, cc);
      s += diff * diff;
      dz(i, cc) = diff;
    }
    per_class[k] += 0.5 * s;
  }
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    rep.tightness += per_class[k];
    rep.extras["class_" + std::to_string(k)] = per_class[k];
  }
  rep.contrastive = 0.0;
  rep.total = rep.tightness;
  return {rep, LossGrad{std::move(dz), std::nullopt, std::nullopt}};
}

std::pair<LossReport, LossGrad> snca_loss(const EmbeddingBatch& b, const HyperParams& h) {
  b.validate();
  h.validate();
  require_pairwise(b, "snca_loss");
  const std::size_t n = b.n();
  const double sigma = h.snca_sigma;
  const Matrix s = cosine_similarity(b.z);

  double tight = 0.0, contrast = 0.0;
  Matrix g(n, n);
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i) {
    xs.clear();
    std::vector<std::size_t> pos;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || b.y[j] != b.y[i]) continue;
      pos.push_back(j);
      xs.push_back(s(i, j) / sigma);
    }
    if (pos.empty()) {
      throw std::invalid_argument("snca_loss: sample " + std::to_string(i) +
                                  " has no positive (class " + std::to_string(b.y[i]) + ")");
    }
    tight -= log_sum_exp(xs);
    std::vector<double> wp = xs;
    softmax_in_place(wp);
    for (std::size_t t = 0; t < pos.size(); ++t) g(i, pos[t]) -= wp[t] / (n * sigma);

    xs.clear();
    std::vector<std::size_t> all;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      all.push_back(j);
      xs.push_back(s(i, j) / sigma);
    }
    contrast += log_sum_exp(xs);
    std::vector<double> wa = xs;
    softmax_in_place(wa);
    for (std::size_t t = 0; t < all.size(); ++t) g(i, all[t]) += wa[t] / (n * sigma);
  }
  tight /= static_cast<double>(n);
  contrast /= static_cast<double>(n);

  LossReport rep;
  rep.tightness = tight;
  rep.contrastive = contrast;
  rep.total = tight + contrast;
  rep.extras["sigma"] = sigma;
  return {rep, LossGrad{cosine_backprop(b.z, s, g), std::nullopt, std::nullopt}};
}

std::pair<LossReport, LossGrad> multi_similarity_loss(const EmbeddingBatch& b,
                                                      const HyperParams& h) {
  b.validate();
  h.validate();
  require_pairwise(b, "multi_similarity_loss");
  const std::size_t n = b.n();
  const double alpha = h.ms_alpha, beta = h.ms_beta, m = h.ms_margin;
  const Matrix s = cosine_similarity(b.z);

  double tight = 0.0, contrast = 0.0;
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> xs;
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || b.y[j] != b.y[i]) continue;
      idx.push_back(j);
      xs.push_back(-alpha * (s(i, j) - m));
    }
    std::vector<double> w;
    tight += log1p_sum_exp(xs, &w) / alpha;
    for (std::size_t t = 0; t < idx.size(); ++t) g(i, idx[t]) -= w[t] / n;

    xs.clear();
    idx.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (b.y[j] == b.y[i]) continue;
      idx.push_back(j);
      xs.push_back(beta * (s(i, j) - m));
    }
    contrast += log1p_sum_exp(xs, &w) / beta;
    for (std::size_t t = 0; t < idx.size(); ++t) g(i, idx[t]) += w[t] / n;
  }
  tight /= static_cast<double>(n);
  contrast /= static_cast<double>(n);

  LossReport rep;
  rep.tightness = tight;
  rep.contrastive = contrast;
  rep.total = tight + contrast;
  rep.extras["alpha"] = alpha;
  rep.extras["beta"] = beta;
  rep.extras["ms_margin"] = m;
  return {rep, LossGrad{cosine_backprop(b.z, s, g), std::nullopt, std::nullopt}};
}

Matrix softmax_probabilities(const EmbeddingBatch& b, const SoftmaxClassifier& c) {
  b.validate();
  c.validate();
  Matrix logits = matmul_nt(b.z, c.theta);
  const std::size_t k = c.num_classes();
  if (c.bias) {
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      for (std::size_t j = 0; j < k; ++j) logits(i, j) += (*c.bias)[j];
    }
  }
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double lse = log_sum_exp(logits.row(i));
    for (std::size_t j = 0; j < k; ++j) logits(i, j) = std::exp(logits(i, j) - lse);
  }
  return logits;
}

std::pair<LossReport, LossGrad> cross_entropy_loss(const EmbeddingBatch& b,
                                                   const SoftmaxClassifier& c,
                                                   double label_smoothing, double lambda) {
  b.validate();
  c.validate();
  const std::size_t n = b.n(), k = c.num_classes();
  if (static_cast<int>(k) != b.num_classes()) {
    throw std::invalid_argument("cross_entropy_loss: classifier has " + std::to_string(k) +
                                " classes, batch has " + std::to_string(b.num_classes()));
  }
  if (c.theta.cols() != b.dim()) {
    throw std::invalid_argument("cross_entropy_loss: weight dim " +
                                std::to_string(c.theta.cols()) + " vs embedding dim " +
                                std::to_string(b.dim()));
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw std::invalid_argument("cross_entropy_loss: label_smoothing must lie in [0,1)");
  }
  if (label_smoothing > 0.0 && k < 2) {
    throw std::invalid_argument("cross_entropy_loss: label smoothing needs K >= 2");
  }
  if (lambda < 0.0) throw std::invalid_argument("cross_entropy_loss: lambda must be >= 0");

  Matrix logits = matmul_nt(b.z, c.theta);
  if (c.bias) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) logits(i, j) += (*c.bias)[j];
    }
  }
  const double eps = label_smoothing;
  const double off = k >= 2 ? eps / (k - 1) : 0.0;

  double linear = 0.0, lse_sum = 0.0;
  Matrix dlogits(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto yi = static_cast<std::size_t>(b.y[i]);
    const double lse = log_sum_exp(logits.row(i));
    lse_sum += lse;
    for (std::size_t j = 0; j < k; ++j) {
      const double t = j == yi ? 1.0 - eps : off;
      linear += t * logits(i, j);
      dlogits(i, j) = (std::exp(logits(i, j) - lse) - t) / static_cast<double>(n);
    }
  }

  double ridge = 0.0;
  for (std::size_t j = 0; j < k; ++j) ridge += squared_norm(c.theta.row(j));

  const double f1 = -linear / static_cast<double>(n) + 0.5 * lambda * ridge;
  const double f2 = lse_sum / static_cast<double>(n) - 0.5 * lambda * ridge;

  LossReport rep;
  if (lambda == 0.0) {
    rep.total = f1 + f2;
    rep.tightness = rep.total;
    rep.contrastive = 0.0;
  } else {
    rep.tightness = f1;
    rep.contrastive = f2;
    rep.total = f1 + f2;
  }
  rep.extras["lambda"] = lambda;
  rep.extras["label_smoothing"] = eps;

  LossGrad grad;
  grad.d_z = matmul(dlogits, c.theta);
  grad.d_theta = matmul_tn(dlogits, b.z);
  if (c.bias) {
    std::vector<double> db(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) db[j] += dlogits(i, j);
    }
    grad.d_bias = std::move(db);
  }
  return {rep, std::move(grad)};
}

LossReport pce_loss(const EmbeddingBatch& b, const Matrix& p, double lambda) {
  b.validate();
  if (!(lambda > 1e-8)) {
    throw std::invalid_argument("pce_loss: lambda-degenerate (lambda = " +
                                std::to_string(lambda) + " <= 1e-8)");
  }
  const std::size_t n = b.n(), k = static_cast<std::size_t>(b.num_classes());
  if (p.rows() != n || p.cols() != k) {
    throw std::invalid_argument("pce_loss: P must be n x K");
  }
  const Matrix cs = soft_means(b.z, p);

  // sum over same-class ordered pairs of z_i . z_j via per-class sums
  std::vector<double> class_sum(b.dim(), 0.0);
  double same = 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) {
    std::fill(class_sum.begin(), class_sum.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<std::size_t>(b.y[i]) != kk) continue;
      for (std::size_t c = 0; c < b.dim(); ++c) class_sum[c] += b.z(i, c);
    }
    same += squared_norm(class_sum);
  }
  const double tight = -same / (2.0 * lambda * static_cast<double>(n) * static_cast<double>(n));

  double lse_sum = 0.0;
  std::vector<double> xs(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) xs[kk] = dot(b.z.row(i), cs.row(kk)) / lambda;
    lse_sum += log_sum_exp(xs);
  }
  double cs_norm = 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) cs_norm += squared_norm(cs.row(kk));
  const double contrast = lse_sum / static_cast<double>(n) - cs_norm / (2.0 * lambda);

  LossReport rep;
  rep.tightness = tight;
  rep.contrastive = contrast;
  rep.total = tight + contrast;
  rep.extras["lambda"] = lambda;
  return rep;
}

std::pair<LossReport, LossGrad> spce_loss(const EmbeddingBatch& b) {
  b.validate();
  const std::size_t n = b.n(), d = b.dim(), k = static_cast<std::size_t>(b.num_classes());

  // m_k = (1/n) sum_{j: y_j = k} z_j; empty classes give the zero vector.
  Matrix m(k, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto yi = static_cast<std::size_t>(b.y[i]);
    for (std::size_t c = 0; c < d; ++c) m(yi, c) += b.z(i, c) / static_cast<double>(n);
  }

  Matrix a = matmul_nt(b.z, m);  // a(i,k) = z_i . m_k
  double tight = 0.0, lse_sum = 0.0;
  Matrix q(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    tight -= a(i, static_cast<std::size_t>(b.y[i]));
    const double lse = log_sum_exp(a.row(i));
    lse_sum += lse;
    for (std::size_t kk = 0; kk < k; ++kk) q(i, kk) = std::exp(a(i, kk) - lse);
  }
  tight /= static_cast<double>(n);
  const double contrast = lse_sum / static_cast<double>(n);

  Matrix dz(n, d);
  // dC/dz_p = (1/n) sum_k q_pk m_k + (1/n^2) sum_i q_{i,y_p} z_i; the second
  // term collects the occurrences of z_p inside the class sums.
  Matrix qm = matmul(q, m);  // (1/1) sum_k q_pk m_k, row p
  std::vector<double> col_acc(d);
  for (std::size_t p = 0; p < n; ++p) {
    const auto yp = static_cast<std::size_t>(b.y[p]);
    std::fill(col_acc.begin(), col_acc.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double qi = q(i, yp);
      for (std::size_t c = 0; c < d; ++c) col_acc[c] += qi * b.z(i, c);
    }
    for (std::size_t c = 0; c < d; ++c) {
      dz(p, c) = -2.0 / static_cast<double>(n) * m(yp, c) + qm(p, c) / static_cast<double>(n) +
                 col_acc[c] / (static_cast<double>(n) * static_cast<double>(n));
    }
  }

  LossReport rep;
  rep.tightness = tight;
  rep.contrastive = contrast;
  rep.total = tight + contrast;
  return {rep, LossGrad{std::move(dz), std::nullopt, std::nullopt}};
}

std::vector<FastApQuery> fastap_per_query(const EmbeddingBatch& b, int bins) {
  b.validate();
  if (bins < 2) throw std::invalid_argument("fastap_loss: bins must be >= 2");
  if (b.n() < 3) {
    throw std::invalid_argument("fastap_loss: need at least 3 samples, got " +
                                std::to_string(b.n()));
  }
  const std::size_t n = b.n();
  const auto nb = static_cast<std::size_t>(bins);
  const double width = 2.0 / bins;
  const Matrix s = cosine_similarity(b.z);

  std::vector<FastApQuery> out;
  out.reserve(n);
  std::vector<double> hp(nb), ha(nb);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(hp.begin(), hp.end(), 0.0);
    std::fill(ha.begin(), ha.end(), 0.0);
    std::size_t npos = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dist = 1.0 - s(i, j);
      auto bin = static_cast<std::size_t>(dist / width);
      if (bin >= nb) bin = nb - 1;
      ha[bin] += 1.0;
      if (b.y[j] == b.y[i]) {
        hp[bin] += 1.0;
        ++npos;
      }
    }
    if (npos == 0) {
      throw std::invalid_argument("fastap_loss: query " + std::to_string(i) + " has no positive");
    }
    if (npos == n - 1) {
      throw std::invalid_argument("fastap_loss: query " + std::to_string(i) + " has no negative");
    }

    const double np = static_cast<double>(npos);
    const double na = static_cast<double>(n - 1);
    double cum_p = 0.0, cum_a = 0.0;
    FastApQuery q;
    for (std::size_t bb = 0; bb < nb; ++bb) {
      cum_p += hp[bb];
      cum_a += ha[bb];
      if (hp[bb] == 0.0) continue;
      const double w = hp[bb] / np;
      q.ap += w * (cum_p / cum_a);
      q.t_ap += w * std::log(cum_p / np);
      q.c_ap += w * std::log(cum_a / na);
    }
    q.log_p_positive = std::log(np / na);
    q.jensen_bound = q.t_ap - q.c_ap + q.log_p_positive;
    out.push_back(q);
  }
  return out;
}

LossReport fastap_loss(const EmbeddingBatch& b, int bins) {
  const std::vector<FastApQuery> per_query = fastap_per_query(b, bins);
  const auto n = static_cast<double>(per_query.size());

  double tap_sum = 0.0, cap_sum = 0.0, ap_sum = 0.0, log_ap_sum = 0.0;
  double bound_sum = 0.0, log_pr_sum = 0.0;
  for (const FastApQuery& q : per_query) {
    tap_sum += q.t_ap;
    cap_sum += q.c_ap;
    ap_sum += q.ap;
    log_ap_sum += std::log(q.ap);
    bound_sum += q.jensen_bound;
    log_pr_sum += q.log_p_positive;
  }

  LossReport rep;
  rep.tightness = -tap_sum / n;
  rep.contrastive = cap_sum / n;
  rep.total = rep.tightness + rep.contrastive;
  rep.extras["fastap"] = ap_sum / n;
  rep.extras["log_fastap"] = log_ap_sum / n;
  rep.extras["jensen_bound"] = bound_sum / n;
  rep.extras["log_p_positive"] = log_pr_sum / n;
  rep.extras["bins"] = static_cast<double>(bins);
  return rep;
}

}  // namespace mll
