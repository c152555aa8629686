#include "mll/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "mll/bounds.hpp"
#include "mll/eval.hpp"
#include "mll/log.hpp"
#include "mll/numeric.hpp"
#include "mll/rng.hpp"

namespace mll {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::contrastive: return "contrastive";
    case LossKind::center: return "center";
    case LossKind::snca: return "snca";
    case LossKind::multi_similarity: return "multi_similarity";
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::spce: return "spce";
  }
  throw std::logic_error("to_string(LossKind): unreachable");
}

LossKind loss_from_string(const std::string& s) {
  if (s == "contrastive") return LossKind::contrastive;
  if (s == "center") return LossKind::center;
  if (s == "snca") return LossKind::snca;
  if (s == "multi_similarity") return LossKind::multi_similarity;
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "spce") return LossKind::spce;
  throw std::invalid_argument("unknown loss '" + s +
                              "' (contrastive|center|snca|multi_similarity|cross_entropy|spce)");
}

void MlpParams::validate() const {
  if (w1.empty() || w2.empty()) throw std::invalid_argument("MlpParams: empty weight matrix");
  if (b1.size() != w1.cols()) throw std::invalid_argument("MlpParams: b1/w1 shape mismatch");
  if (w2.rows() != w1.cols()) throw std::invalid_argument("MlpParams: w2/w1 shape mismatch");
  if (b2.size() != w2.cols()) throw std::invalid_argument("MlpParams: b2/w2 shape mismatch");
  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!w1.all_finite() || !w2.all_finite() || !finite(b1) || !finite(b2)) {
    throw std::invalid_argument("MlpParams: non-finite parameter");
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (lr < 0.0 || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: bad learning rate");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
  }
  if (weight_decay < 0.0 || !std::isfinite(weight_decay)) {
    throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("TrainConfig: label smoothing must lie in [0, 1)");
  }
  if (hidden_width < 1 || embedding_dim < 1) {
    throw std::invalid_argument("TrainConfig: layer widths must be >= 1");
  }
  hyper.validate();
}

void SyntheticSpec::validate() const {
  if (classes < 1) throw std::invalid_argument("SyntheticSpec: classes must be >= 1");
  if (samples_per_class < 2) {
    throw std::invalid_argument("SyntheticSpec: need at least 2 samples per class to split");
  }
  if (input_dim < 1) throw std::invalid_argument("SyntheticSpec: input_dim must be >= 1");
  if (mean_radius <= 0.0 || !std::isfinite(mean_radius)) {
    throw std::invalid_argument("SyntheticSpec: mean_radius must be > 0");
  }
  if (sigma < 0.0 || !std::isfinite(sigma)) {
    throw std::invalid_argument("SyntheticSpec: sigma must be >= 0");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("SyntheticSpec: train_fraction must lie in (0, 1)");
  }
  const auto per_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(samples_per_class) * train_fraction));
  if (per_train < 1 || per_train >= samples_per_class) {
    throw std::invalid_argument("SyntheticSpec: split leaves an empty class side");
  }
}

void TrainTrace::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const TraceRow& r = rows[i];
    if (i > 0 && r.epoch <= rows[i - 1].epoch) {
      throw std::invalid_argument("TrainTrace: epochs not strictly increasing");
    }
    if (!std::isfinite(r.loss_total) || !std::isfinite(r.loss_tight) ||
        !std::isfinite(r.loss_contrast) || !std::isfinite(r.recall_at_1) ||
        (r.companion && !std::isfinite(*r.companion))) {
      throw std::invalid_argument("TrainTrace: non-finite value at epoch " +
                                  std::to_string(r.epoch));
    }
    if (r.recall_at_1 < 0.0 || r.recall_at_1 > 1.0) {
      throw std::invalid_argument("TrainTrace: recall outside [0, 1]");
    }
  }
}

namespace {

struct Forward {
  Matrix hpre;  // n x hidden
  Matrix h;     // n x hidden, rectified
  Matrix z;     // n x embedding_dim
};

Forward forward_full(const MlpParams& p, const Matrix& x) {
  Forward f;
  f.hpre = matmul(x, p.w1);
  for (std::size_t i = 0; i < f.hpre.rows(); ++i) {
    for (std::size_t j = 0; j < f.hpre.cols(); ++j) f.hpre(i, j) += p.b1[j];
  }
  f.h = f.hpre;
  for (double& v : f.h.data()) v = std::max(0.0, v);
  f.z = matmul(f.h, p.w2);
  for (std::size_t i = 0; i < f.z.rows(); ++i) {
    for (std::size_t j = 0; j < f.z.cols(); ++j) f.z(i, j) += p.b2[j];
  }
  return f;
}

std::vector<double> colsums(const Matrix& g) {
  std::vector<double> s(g.cols(), 0.0);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) s[j] += g(i, j);
  }
  return s;
}

struct MlpGrads {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;
};

MlpGrads backward(const MlpParams& p, const Matrix& x, const Forward& f, const Matrix& dz) {
  MlpGrads g;
  g.w2 = matmul_tn(f.h, dz);
  g.b2 = colsums(dz);
  Matrix dh = matmul_nt(dz, p.w2);
  for (std::size_t i = 0; i < dh.rows(); ++i) {
    for (std::size_t j = 0; j < dh.cols(); ++j) {
      if (f.hpre(i, j) <= 0.0) dh(i, j) = 0.0;
    }
  }
  g.w1 = matmul_tn(x, dh);
  g.b1 = colsums(dh);
  return g;
}

// d(loss)/d(raw z) given the gradient w.r.t. row-normalized z.
Matrix normalize_backprop(const Matrix& z, const Matrix& g) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double r = norm(z.row(i));
    if (r <= 1e-12) throw std::invalid_argument("normalize_backprop: row norm <= 1e-12");
    const double gu = dot(g.row(i), z.row(i)) / r;
    for (std::size_t j = 0; j < z.cols(); ++j) {
      out(i, j) = (g(i, j) - gu * z(i, j) / r) / r;
    }
  }
  return out;
}

void sgd_step(Matrix& w, Matrix& v, const Matrix& g, double lr, double mu, double wd) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    v.data()[i] = mu * v.data()[i] - lr * (g.data()[i] + wd * w.data()[i]);
    w.data()[i] += v.data()[i];
  }
}

void sgd_step(std::vector<double>& b, std::vector<double>& v, const std::vector<double>& g,
              double lr, double mu) {
  for (std::size_t i = 0; i < b.size(); ++i) {
    v[i] = mu * v[i] - lr * g[i];
    b[i] += v[i];
  }
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sd, Rng rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, sd);
  return m;
}

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = x.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

LabelVector gather_labels(const LabelVector& y, const std::vector<std::size_t>& idx) {
  std::vector<int> l(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) l[r] = y[idx[r]];
  return LabelVector(std::move(l), y.num_classes);
}

struct LossEval {
  LossReport report;
  LossGrad grad;
};

LossEval eval_loss(LossKind kind, const EmbeddingBatch& b, const HyperParams& h,
                   const SoftmaxClassifier* head, double label_smoothing) {
  switch (kind) {
    case LossKind::contrastive: {
      auto [r, g] = contrastive_loss(b, h);
      return {r, std::move(g)};
    }
    case LossKind::center: {
      auto [r, g] = center_tightness(b);
      return {r, std::move(g)};
    }
    case LossKind::snca: {
      auto [r, g] = snca_loss(b, h);
      return {r, std::move(g)};
    }
    case LossKind::multi_similarity: {
      auto [r, g] = multi_similarity_loss(b, h);
      return {r, std::move(g)};
    }
    case LossKind::cross_entropy: {
      if (!head) throw std::invalid_argument("eval_loss: cross_entropy needs a head");
      auto [r, g] = cross_entropy_loss(b, *head, label_smoothing);
      return {r, std::move(g)};
    }
    case LossKind::spce: {
      auto [r, g] = spce_loss(b);
      return {r, std::move(g)};
    }
  }
  throw std::logic_error("eval_loss: unreachable");
}

MlpParams init_mlp(std::size_t input_dim, const TrainConfig& cfg) {
  const Rng root(cfg.seed);
  MlpParams p;
  p.w1 = gaussian_matrix(input_dim, cfg.hidden_width,
                         std::sqrt(2.0 / static_cast<double>(input_dim)), root.derive(1));
  p.b1.assign(cfg.hidden_width, 0.0);
  p.w2 = gaussian_matrix(cfg.hidden_width, cfg.embedding_dim,
                         std::sqrt(2.0 / static_cast<double>(cfg.hidden_width)), root.derive(2));
  p.b2.assign(cfg.embedding_dim, 0.0);
  return p;
}

double recall_1_euclidean(const Matrix& z, const LabelVector& y) {
  EmbeddingBatch eb{z, y};
  const RecallResult r = recall_at_k(eb, {1}, DistanceKind::euclidean);
  return r.recalls.at("euclidean")[0];
}

}  // namespace

Matrix mlp_forward(const MlpParams& p, const Matrix& x) {
  p.validate();
  if (x.cols() != p.input_dim()) {
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(p.input_dim()));
  }
  return forward_full(p, x).z;
}

std::pair<EmbeddingBatch, EmbeddingBatch> generate_blobs(const SyntheticSpec& s) {
  s.validate();
  const std::size_t k = s.classes;
  const std::size_t din = s.input_dim;
  const double min_angle = 2.0 * std::numbers::pi / (4.0 * static_cast<double>(k));

  const Rng root(s.seed);
  Rng mean_rng = root.derive(0);
  std::vector<std::vector<double>> units;
  units.reserve(k);
  std::size_t attempts = 0;
  while (units.size() < k) {
    if (++attempts > 100000) throw std::runtime_error("means-too-crowded");
    std::vector<double> v(din);
    for (double& x : v) x = mean_rng.normal();
    const double r = norm(v);
    if (r < 1e-12) continue;
    for (double& x : v) x /= r;
    bool separated = true;
    for (const auto& u : units) {
      const double c = std::clamp(dot(std::span<const double>(v), std::span<const double>(u)),
                                  -1.0, 1.0);
      if (std::acos(c) < min_angle) {
        separated = false;
        break;
      }
    }
    if (separated) units.push_back(std::move(v));
  }

  const std::size_t per_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(s.samples_per_class) * s.train_fraction));
  const std::size_t per_test = s.samples_per_class - per_train;

  EmbeddingBatch train, test;
  train.z = Matrix(k * per_train, din);
  test.z = Matrix(k * per_test, din);
  std::vector<int> ytr, yte;
  ytr.reserve(k * per_train);
  yte.reserve(k * per_test);
  for (std::size_t c = 0; c < k; ++c) {
    Rng rng = root.derive(c + 1);
    for (std::size_t i = 0; i < s.samples_per_class; ++i) {
      const bool in_train = i < per_train;
      auto dst = in_train ? train.z.row(ytr.size()) : test.z.row(yte.size());
      for (std::size_t j = 0; j < din; ++j) {
        dst[j] = s.mean_radius * units[c][j] + s.sigma * rng.normal();
      }
      if (in_train) {
        ytr.push_back(static_cast<int>(c));
      } else {
        yte.push_back(static_cast<int>(c));
      }
    }
  }
  train.y = LabelVector(std::move(ytr), static_cast<int>(k));
  test.y = LabelVector(std::move(yte), static_cast<int>(k));
  return {std::move(train), std::move(test)};
}

TrainResult train_model(const EmbeddingBatch& train, const EmbeddingBatch& test,
                        const TrainConfig& cfg) {
  cfg.validate();
  train.validate();
  test.validate();
  if (cfg.loss == LossKind::center) {
    throw std::invalid_argument(
        "train_model: center is not trainable on its own "
        "(contrastive|snca|multi_similarity|cross_entropy|spce)");
  }
  if (train.dim() != test.dim()) {
    throw std::invalid_argument("train_model: train/test input dims differ");
  }
  if (train.num_classes() != test.num_classes()) {
    throw std::invalid_argument("train_model: train/test class counts differ");
  }

  const std::size_t n = train.n();
  const std::size_t kk = static_cast<std::size_t>(train.num_classes());
  const bool is_ce = cfg.loss == LossKind::cross_entropy;
  const bool is_spce = cfg.loss == LossKind::spce;

  TrainResult res;
  res.params = init_mlp(train.dim(), cfg);
  MlpParams& p = res.params;

  SoftmaxClassifier head;
  head.theta = Matrix(kk, cfg.embedding_dim);
  SoftmaxClassifier shadow = head;  // companion head for SPCE runs

  Matrix vw1(p.w1.rows(), p.w1.cols()), vw2(p.w2.rows(), p.w2.cols());
  std::vector<double> vb1(p.b1.size(), 0.0), vb2(p.b2.size(), 0.0);
  Matrix vtheta(kk, cfg.embedding_dim), vshadow(kk, cfg.embedding_dim);

  const auto embed = [&](const Matrix& x) {
    Matrix z = mlp_forward(p, x);
    return cfg.normalize_embeddings ? normalize_rows(z) : z;
  };

  const auto record = [&](std::size_t epoch) -> bool {
    const Matrix ztr = embed(train.z);
    if (!ztr.all_finite()) return false;
    const EmbeddingBatch eb{ztr, train.y};
    const LossEval le = eval_loss(cfg.loss, eb, cfg.hyper, is_ce ? &head : nullptr,
                                  cfg.label_smoothing);
    if (!std::isfinite(le.report.total)) return false;
    std::optional<double> companion;
    if (is_ce) {
      companion = spce_loss(eb).first.total;
    } else if (is_spce) {
      companion = cross_entropy_loss(eb, shadow, 0.0).first.total;
    }
    TraceRow row;
    row.epoch = epoch;
    row.loss_total = le.report.total;
    row.loss_tight = le.report.tightness;
    row.loss_contrast = le.report.contrastive;
    row.companion = companion;
    row.recall_at_1 = recall_1_euclidean(embed(test.z), test.y);
    res.trace.rows.push_back(row);
    return true;
  };

  if (!record(0)) {
    res.trace.diverged = true;
    if (is_ce) res.head = head;
    return res;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const Rng root(cfg.seed);
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;

  for (std::size_t epoch = 1; epoch <= cfg.epochs && !res.trace.diverged; ++epoch) {
    if (!full_batch) {
      Rng shuffle = root.derive(1000 + epoch);
      for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[shuffle.uniform_int(i + 1)]);
      }
    }
    const std::size_t bs = full_batch ? n : cfg.batch_size;
    for (std::size_t start = 0; start < n && !res.trace.diverged; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Matrix xb = full_batch ? train.z : gather_rows(train.z, idx);
      const LabelVector yb = full_batch ? train.y : gather_labels(train.y, idx);

      const Forward f = forward_full(p, xb);
      const Matrix zb = cfg.normalize_embeddings ? normalize_rows(f.z) : f.z;
      const EmbeddingBatch eb{zb, yb};
      const LossEval le = eval_loss(cfg.loss, eb, cfg.hyper, is_ce ? &head : nullptr,
                                    cfg.label_smoothing);
      if (!std::isfinite(le.report.total)) {
        res.trace.diverged = true;
        break;
      }
      const Matrix dz =
          cfg.normalize_embeddings ? normalize_backprop(f.z, le.grad.d_z) : le.grad.d_z;
      const MlpGrads g = backward(p, xb, f, dz);
      sgd_step(p.w1, vw1, g.w1, cfg.lr, cfg.momentum, cfg.weight_decay);
      sgd_step(p.w2, vw2, g.w2, cfg.lr, cfg.momentum, cfg.weight_decay);
      sgd_step(p.b1, vb1, g.b1, cfg.lr, cfg.momentum);
      sgd_step(p.b2, vb2, g.b2, cfg.lr, cfg.momentum);
      if (is_ce) {
        sgd_step(head.theta, vtheta, *le.grad.d_theta, cfg.lr, cfg.momentum, cfg.weight_decay);
      }
    }
    if (res.trace.diverged) break;
    if (is_spce) {
      const Matrix ztr = embed(train.z);
      if (ztr.all_finite()) {
        const auto [rep, grad] = cross_entropy_loss({ztr, train.y}, shadow, 0.0);
        sgd_step(shadow.theta, vshadow, *grad.d_theta, cfg.lr, cfg.momentum, cfg.weight_decay);
      }
    }
    if (!record(epoch)) res.trace.diverged = true;
  }

  if (res.trace.diverged) {
    log::warn("train_model: run diverged after epoch %zu, trace truncated",
              res.trace.rows.empty() ? 0 : res.trace.rows.back().epoch);
  }
  if (is_ce) res.head = head;
  res.trace.validate();
  return res;
}

double max_relative_fd_error(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x, std::span<const double> grad,
                             double step, std::size_t max_coords,
                             const std::vector<bool>* exclude) {
  if (x.size() != grad.size()) {
    throw std::invalid_argument("max_relative_fd_error: x/grad size mismatch");
  }
  if (exclude && exclude->size() != x.size()) {
    throw std::invalid_argument("max_relative_fd_error: mask size mismatch");
  }
  if (step <= 0.0) throw std::invalid_argument("max_relative_fd_error: step must be > 0");
  if (max_coords == 0) throw std::invalid_argument("max_relative_fd_error: max_coords must be > 0");

  std::vector<std::size_t> coords;
  coords.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!exclude || !(*exclude)[i]) coords.push_back(i);
  }
  if (coords.empty()) return 0.0;

  const std::size_t take = std::min(max_coords, coords.size());
  const double stride = static_cast<double>(coords.size()) / static_cast<double>(take);
  double worst = 0.0;
  for (std::size_t t = 0; t < take; ++t) {
    const std::size_t i = coords[static_cast<std::size_t>(static_cast<double>(t) * stride)];
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    const double fd = (fp - fm) / (2.0 * step);
    const double err = std::abs(fd - grad[i]) / std::max({1.0, std::abs(fd), std::abs(grad[i])});
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_difference_check(LossKind kind, const EmbeddingBatch& b, const HyperParams& h,
                               double step, const SoftmaxClassifier* head) {
  b.validate();
  h.validate();
  if (step < 1e-7 || step > 1e-3) {
    throw std::invalid_argument("finite_difference_check: step outside [1e-7, 1e-3]");
  }
  const bool is_ce = kind == LossKind::cross_entropy;
  if (is_ce && !head) {
    throw std::invalid_argument("finite_difference_check: cross_entropy needs a head");
  }

  const std::size_t nz = b.z.size();
  std::vector<double> x(b.z.data());
  if (is_ce) {
    head->validate();
    x.insert(x.end(), head->theta.data().begin(), head->theta.data().end());
    if (head->bias) x.insert(x.end(), head->bias->begin(), head->bias->end());
  }

  const LossEval le = eval_loss(kind, b, h, head, h.label_smoothing);
  std::vector<double> g(le.grad.d_z.data());
  if (is_ce) {
    if (!le.grad.d_theta) throw std::logic_error("finite_difference_check: missing d_theta");
    g.insert(g.end(), le.grad.d_theta->data().begin(), le.grad.d_theta->data().end());
    if (head->bias) {
      if (!le.grad.d_bias) throw std::logic_error("finite_difference_check: missing d_bias");
      g.insert(g.end(), le.grad.d_bias->begin(), le.grad.d_bias->end());
    }
  }

  std::vector<bool> excl;
  const std::vector<bool>* mask = nullptr;
  if (kind == LossKind::contrastive) {
    excl.assign(x.size(), false);
    const Matrix d2 = pairwise_sq_euclidean(b.z);
    for (std::size_t i = 0; i < b.n(); ++i) {
      for (std::size_t j = i + 1; j < b.n(); ++j) {
        if (b.y[i] == b.y[j]) continue;
        const double dist = std::sqrt(d2(i, j));
        if (std::abs(h.margin - dist) < 1e-3 || dist < 1e-3) {
          for (std::size_t c = 0; c < b.dim(); ++c) {
            excl[i * b.dim() + c] = true;
            excl[j * b.dim() + c] = true;
          }
        }
      }
    }
    mask = &excl;
  }

  const auto eval_at = [&](std::span<const double> v) -> double {
    EmbeddingBatch bb = b;
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(nz), bb.z.data().begin());
    if (!is_ce) return eval_loss(kind, bb, h, nullptr, h.label_smoothing).report.total;
    SoftmaxClassifier hh = *head;
    auto it = v.begin() + static_cast<std::ptrdiff_t>(nz);
    std::copy(it, it + static_cast<std::ptrdiff_t>(hh.theta.size()), hh.theta.data().begin());
    if (hh.bias) {
      it += static_cast<std::ptrdiff_t>(hh.theta.size());
      std::copy(it, it + static_cast<std::ptrdiff_t>(hh.bias->size()), hh.bias->begin());
    }
    return cross_entropy_loss(bb, hh, h.label_smoothing).first.total;
  };

  return max_relative_fd_error(eval_at, std::move(x), g, step, 200, mask);
}

InnerCeResult minimize_ce_over_head(const EmbeddingBatch& b, SoftmaxClassifier head,
                                    double tol, std::size_t max_iters) {
  b.validate();
  head.validate();
  if (tol <= 0.0) throw std::invalid_argument("minimize_ce_over_head: tol must be > 0");
  if (head.num_classes() != static_cast<std::size_t>(b.num_classes()) ||
      head.theta.cols() != b.dim()) {
    throw std::invalid_argument("minimize_ce_over_head: head shape mismatch");
  }

  InnerCeResult res;
  auto [rep, grad] = cross_entropy_loss(b, head, 0.0);
  double cur = rep.total;
  double lr = 1.0;
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    res.ce_per_iter.push_back(cur);
    double gmax = 0.0;
    for (double v : grad.d_theta->data()) gmax = std::max(gmax, std::abs(v));
    if (grad.d_bias) {
      for (double v : *grad.d_bias) gmax = std::max(gmax, std::abs(v));
    }
    if (gmax <= tol) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    for (int halving = 0; halving < 60 && !accepted; ++halving) {
      SoftmaxClassifier cand = head;
      for (std::size_t i = 0; i < cand.theta.size(); ++i) {
        cand.theta.data()[i] -= lr * grad.d_theta->data()[i];
      }
      if (cand.bias) {
        for (std::size_t i = 0; i < cand.bias->size(); ++i) {
          (*cand.bias)[i] -= lr * (*grad.d_bias)[i];
        }
      }
      auto [rep2, grad2] = cross_entropy_loss(b, cand, 0.0);
      if (rep2.total < cur) {
        head = std::move(cand);
        cur = rep2.total;
        grad = std::move(grad2);
        accepted = true;
        lr = std::min(lr * 2.0, 1e3);
      } else {
        lr *= 0.5;
      }
    }
    if (!accepted) break;  // round-off floor reached
  }
  res.head = std::move(head);
  return res;
}

TrainTrace alternating_bound_demo(const EmbeddingBatch& train, const EmbeddingBatch& test,
                                  const TrainConfig& cfg) {
  cfg.validate();
  train.validate();
  test.validate();
  if (cfg.loss != LossKind::cross_entropy) {
    throw std::invalid_argument("alternating_bound_demo: loss must be cross_entropy");
  }
  if (cfg.label_smoothing != 0.0) {
    throw std::invalid_argument("alternating_bound_demo: label smoothing must be 0");
  }
  if (train.dim() != test.dim() || train.num_classes() != test.num_classes()) {
    throw std::invalid_argument("alternating_bound_demo: train/test mismatch");
  }

  MlpParams p = init_mlp(train.dim(), cfg);
  SoftmaxClassifier head;
  head.theta = Matrix(static_cast<std::size_t>(train.num_classes()), cfg.embedding_dim);

  Matrix vw1(p.w1.rows(), p.w1.cols()), vw2(p.w2.rows(), p.w2.cols());
  std::vector<double> vb1(p.b1.size(), 0.0), vb2(p.b2.size(), 0.0);

  const auto embed = [&](const Matrix& x) {
    Matrix z = mlp_forward(p, x);
    return cfg.normalize_embeddings ? normalize_rows(z) : z;
  };

  TrainTrace trace;
  for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const EmbeddingBatch eb{embed(train.z), train.y};
    InnerCeResult inner = minimize_ce_over_head(eb, std::move(head), 1e-6, 10000);
    head = std::move(inner.head);

    const double lam = compute_pce_lambda(eb, head).lambda;
    const bool degenerate = lam <= 1e-6;
    const LossReport ce = cross_entropy_loss(eb, head, 0.0, degenerate ? 0.0 : lam).first;
    std::optional<double> pce;
    if (degenerate) {
      log::info("bound demo epoch %zu: lambda-degenerate (lambda = %.3e), PCE skipped",
                epoch, lam);
    } else {
      pce = pce_loss(eb, softmax_probabilities(eb, head), lam).total;
    }

    TraceRow row;
    row.epoch = epoch;
    row.loss_total = ce.total;
    row.loss_tight = ce.tightness;
    row.loss_contrast = ce.contrastive;
    row.companion = pce;
    row.recall_at_1 = recall_1_euclidean(embed(test.z), test.y);
    trace.rows.push_back(row);
    if (epoch == cfg.epochs) break;

    const Forward f = forward_full(p, train.z);
    const Matrix zb = cfg.normalize_embeddings ? normalize_rows(f.z) : f.z;
    const auto [rep, grad] = cross_entropy_loss({zb, train.y}, head, 0.0);
    if (!std::isfinite(rep.total)) {
      trace.diverged = true;
      break;
    }
    const Matrix dz = cfg.normalize_embeddings ? normalize_backprop(f.z, grad.d_z) : grad.d_z;
    const MlpGrads g = backward(p, train.z, f, dz);
    sgd_step(p.w1, vw1, g.w1, cfg.lr, cfg.momentum, cfg.weight_decay);
    sgd_step(p.w2, vw2, g.w2, cfg.lr, cfg.momentum, cfg.weight_decay);
    sgd_step(p.b1, vb1, g.b1, cfg.lr, cfg.momentum);
    sgd_step(p.b2, vb2, g.b2, cfg.lr, cfg.momentum);
  }
  trace.validate();
  return trace;
}

}  // namespace mll
