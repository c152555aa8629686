#include "mll/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mll/log.hpp"
#include "mll/numeric.hpp"

namespace mll {

BoundCheck BoundCheck::leq(std::string name, double lhs, double rhs, double tolerance,
                           std::string witness) {
  BoundCheck c;
  c.name = std::move(name);
  c.kind = CheckKind::inequality;
  c.lhs = lhs;
  c.rhs = rhs;
  c.slack = rhs - lhs;
  c.tolerance = tolerance;
  c.holds = lhs <= rhs + tolerance;
  c.witness = std::move(witness);
  return c;
}

BoundCheck BoundCheck::eq(std::string name, double lhs, double rhs, double tolerance,
                          std::string witness) {
  BoundCheck c;
  c.name = std::move(name);
  c.kind = CheckKind::equality;
  c.lhs = lhs;
  c.rhs = rhs;
  c.slack = std::fabs(lhs - rhs);
  c.tolerance = tolerance;
  c.holds = c.slack <= tolerance;
  c.witness = std::move(witness);
  return c;
}

namespace {

std::string instance_summary(const EmbeddingBatch& b, const char* extra_key = nullptr,
                             double extra_val = 0.0) {
  std::ostringstream os;
  os << "{\"n\":" << b.n() << ",\"d\":" << b.dim() << ",\"K\":" << b.num_classes();
  if (extra_key) os << ",\"" << extra_key << "\":" << extra_val;
  os << "}";
  return os.str();
}

void require_unit_rows(const EmbeddingBatch& b, const char* op) {
  for (std::size_t i = 0; i < b.n(); ++i) {
    const double r = norm(b.z.row(i));
    if (std::fabs(r - 1.0) > 1e-9) {
      throw std::invalid_argument(std::string(op) + ": row " + std::to_string(i) +
                                  " is not unit-normalized (norm = " + std::to_string(r) + ")");
    }
  }
}

}  // namespace

PceLambda compute_pce_lambda(const EmbeddingBatch& b, const SoftmaxClassifier& c) {
  b.validate();
  c.validate();
  if (static_cast<int>(c.num_classes()) != b.num_classes()) {
    throw std::invalid_argument("compute_pce_lambda: classifier/batch class count mismatch");
  }
  if (c.theta.cols() != b.dim()) {
    throw std::invalid_argument("compute_pce_lambda: classifier/batch dimension mismatch");
  }
  const std::size_t n = b.n(), d = b.dim(), k = c.num_classes();
  const Matrix p = softmax_probabilities(b, c);

  PceLambda out;
  out.per_class_min_eigs.reserve(k);
  out.per_class_traces.reserve(k);
  double lambda = 0.0;
  bool first = true;
  for (std::size_t kk = 0; kk < k; ++kk) {
    Matrix a(d, d);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = (p(i, kk) - p(i, kk) * p(i, kk)) / static_cast<double>(n);
      for (std::size_t r = 0; r < d; ++r) {
        const double wz = w * b.z(i, r);
        for (std::size_t cc = 0; cc < d; ++cc) a(r, cc) += wz * b.z(i, cc);
      }
    }
    double trace = 0.0;
    for (std::size_t r = 0; r < d; ++r) trace += a(r, r);
    const std::vector<double> eigs = symmetric_eigenvalues(a);
    double min_eig = eigs.front();
    if (min_eig < -1e-10) {
      throw std::runtime_error("compute_pce_lambda: A_" + std::to_string(kk) +
                               " has eigenvalue " + std::to_string(min_eig) +
                               " below the PSD clamp");
    }
    if (min_eig < 0.0) min_eig = 0.0;
    out.per_class_min_eigs.push_back(min_eig);
    out.per_class_traces.push_back(trace);
    if (first || min_eig < lambda) {
      lambda = min_eig;
      first = false;
    }
  }
  out.lambda = lambda;
  return out;
}

std::vector<BoundCheck> center_pairwise_identity(const EmbeddingBatch& b) {
  b.validate();
  const std::size_t d = b.dim();
  const auto members = b.y.members();
  std::vector<BoundCheck> checks;
  checks.reserve(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    const auto& idx = members[k];
    double lhs = 0.0, rhs = 0.0;
    if (!idx.empty()) {
      std::vector<double> mean(d, 0.0);
      for (std::size_t i : idx) {
        for (std::size_t c = 0; c < d; ++c) mean[c] += b.z(i, c);
      }
      for (double& v : mean) v /= static_cast<double>(idx.size());
      for (std::size_t i : idx) {
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = b.z(i, c) - mean[c];
          lhs += diff * diff;
        }
      }
      double pair_sum = 0.0;
      for (std::size_t i : idx) {
        for (std::size_t j : idx) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double diff = b.z(i, c) - b.z(j, c);
            s += diff * diff;
          }
          pair_sum += s;
        }
      }
      rhs = pair_sum / (2.0 * static_cast<double>(idx.size()));
    }
    checks.push_back(BoundCheck::eq("center_identity_class_" + std::to_string(k), lhs, rhs, 1e-9,
                                    instance_summary(b)));
  }
  return checks;
}

std::vector<BoundCheck> verify_tightness_chain(const EmbeddingBatch& b, const HyperParams& h) {
  b.validate();
  h.validate();
  require_unit_rows(b, "verify_tightness_chain");
  const auto members = b.y.members();
  const std::size_t size0 = members.empty() ? 0 : members[0].size();
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (members[k].size() != size0) {
      throw std::invalid_argument("verify_tightness_chain: classes unbalanced (class 0 has " +
                                  std::to_string(size0) + " samples, class " + std::to_string(k) +
                                  " has " + std::to_string(members[k].size()) + ")");
    }
  }
  if (size0 < 2) {
    throw std::invalid_argument("verify_tightness_chain: classes need >= 2 samples, have " +
                                std::to_string(size0));
  }

  const double sigma = h.snca_sigma, alpha = h.ms_alpha;
  const Matrix s = cosine_similarity(b.z);
  const Matrix d2 = pairwise_sq_euclidean(b.z);
  const std::string witness = instance_summary(b);

  std::vector<BoundCheck> checks = center_pairwise_identity(b);
  for (BoundCheck& c : checks) c.name = "tight_" + c.name;

  for (std::size_t k = 0; k < members.size(); ++k) {
    const auto& idx = members[k];
    const auto nk = static_cast<double>(idx.size());
    const double m = nk - 1.0;

    double snca_lhs = 0.0, snca_rhs = 0.0;
    std::vector<double> xs;
    for (std::size_t i : idx) {
      xs.clear();
      for (std::size_t j : idx) {
        if (j == i) continue;
        xs.push_back(s(i, j) / sigma);
      }
      snca_lhs -= log_sum_exp(xs) - std::log(m);
    }
    for (std::size_t i : idx) {
      for (std::size_t j : idx) {
        if (j != i) snca_rhs += d2(i, j);
      }
    }
    snca_rhs = snca_rhs / (2.0 * sigma * m) - nk / sigma;
    checks.push_back(BoundCheck::leq("tight_snca_jensen_class_" + std::to_string(k), snca_lhs,
                                     snca_rhs, 1e-9, witness));

    double ms_log = 0.0, ms_lin = 0.0;
    for (std::size_t i : idx) {
      xs.clear();
      for (std::size_t j : idx) xs.push_back(-alpha * (s(i, j) - 1.0));
      ms_log += (log_sum_exp(xs) - std::log(nk)) / alpha;
      for (std::size_t j : idx) ms_lin -= s(i, j) - 1.0;
    }
    ms_lin /= nk;
    checks.push_back(BoundCheck::leq("tight_ms_jensen_class_" + std::to_string(k), ms_lin, ms_log,
                                     1e-9, witness));
  }
  return checks;
}

std::vector<BoundCheck> verify_contrastive_chain(const EmbeddingBatch& b, const HyperParams& h) {
  b.validate();
  h.validate();
  if (b.n() < 2) throw std::invalid_argument("verify_contrastive_chain: need >= 2 samples");
  require_unit_rows(b, "verify_contrastive_chain");

  const std::size_t n = b.n();
  const double sigma = h.snca_sigma, beta = h.ms_beta;
  const Matrix s = cosine_similarity(b.z);
  const Matrix d2 = pairwise_sq_euclidean(b.z);

  std::size_t skipped = 0;
  double ms_full = 0.0, ms_drop = 0.0, ms_lin = 0.0, ms_d2 = 0.0;
  double snca_full = 0.0, snca_drop = 0.0, snca_lin = 0.0, snca_d2 = 0.0;
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> neg;
    for (std::size_t j = 0; j < n; ++j) {
      if (b.y[j] != b.y[i]) neg.push_back(j);
    }
    if (neg.empty()) {
      ++skipped;
      continue;
    }
    const auto mi = static_cast<double>(neg.size());

    xs.clear();
    for (std::size_t j : neg) xs.push_back(beta * (s(i, j) - 1.0));
    double mx = 0.0;
    for (double v : xs) mx = std::max(mx, v);
    double denom = std::exp(-mx);
    for (double v : xs) denom += std::exp(v - mx);
    ms_full += std::log(denom) + mx;
    ms_drop += log_sum_exp(xs);
    for (std::size_t j : neg) {
      ms_lin += (s(i, j) - 1.0) / mi * beta;
      ms_d2 += -d2(i, j) / (2.0 * mi) * beta;
    }

    xs.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) xs.push_back(s(i, j) / sigma);
    }
    snca_full += log_sum_exp(xs);
    xs.clear();
    for (std::size_t j : neg) xs.push_back(s(i, j) / sigma);
    snca_drop += log_sum_exp(xs);
    for (std::size_t j : neg) {
      snca_lin += s(i, j) / (sigma * mi);
      snca_d2 += (1.0 - d2(i, j) / 2.0) / (sigma * mi);
    }
  }
  if (skipped > 0) {
    log::info("verify_contrastive_chain: skipped %zu sample(s) without negatives", skipped);
  }
  if (skipped == n) return {};

  const auto dn = static_cast<double>(n);
  ms_full /= beta * dn;
  ms_drop /= beta * dn;
  ms_lin /= beta * dn;
  ms_d2 /= beta * dn;
  snca_full /= dn;
  snca_drop /= dn;
  snca_lin /= dn;
  snca_d2 /= dn;

  const std::string witness = instance_summary(b, "skipped", static_cast<double>(skipped));
  std::vector<BoundCheck> checks;
  checks.push_back(BoundCheck::leq("c_ms_drop_one", ms_drop, ms_full, 1e-10, witness));
  checks.push_back(BoundCheck::leq("c_ms_jensen", ms_lin, ms_drop, 1e-10, witness));
  checks.push_back(BoundCheck::eq("c_ms_sq_euclid", ms_lin, ms_d2, 1e-9, witness));
  checks.push_back(BoundCheck::leq("c_snca_drop_pos", snca_drop, snca_full, 1e-10, witness));
  checks.push_back(BoundCheck::leq("c_snca_jensen", snca_lin, snca_drop, 1e-10, witness));
  checks.push_back(BoundCheck::eq("c_snca_sq_euclid", snca_lin, snca_d2, 1e-9, witness));
  return checks;
}

std::vector<BoundCheck> verify_ce_pce_bound(const EmbeddingBatch& b, const SoftmaxClassifier& c) {
  b.validate();
  c.validate();
  if (c.bias) {
    throw std::invalid_argument("verify_ce_pce_bound: classifier must not carry a bias");
  }
  const PceLambda pl = compute_pce_lambda(b, c);
  if (pl.lambda <= 1e-6) {
    throw LambdaDegenerateError("lambda-degenerate: lambda = " + std::to_string(pl.lambda) +
                                " <= 1e-6");
  }
  const std::size_t n = b.n();
  const Matrix p = softmax_probabilities(b, c);
  const LossReport pce = pce_loss(b, p, pl.lambda);
  const LossReport ce = cross_entropy_loss(b, c, 0.0, 0.0).first;

  double theta_sq = 0.0;
  for (std::size_t k = 0; k < c.num_classes(); ++k) theta_sq += squared_norm(c.theta.row(k));
  double linear = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    linear += dot(c.theta.row(static_cast<std::size_t>(b.y[i])), b.z.row(i));
  }
  const double f1_at_theta = -linear / static_cast<double>(n) + 0.5 * pl.lambda * theta_sq;
  const double f1_at_star = pce.tightness;

  const std::string witness = instance_summary(b, "lambda", pl.lambda);
  std::vector<BoundCheck> checks;
  checks.push_back(BoundCheck::leq("ce_pce_upper_bound", pce.total, ce.total, 1e-8, witness));
  checks.push_back(BoundCheck::leq("ce_pce_f1_convexity", f1_at_star, f1_at_theta, 1e-8, witness));
  return checks;
}

std::vector<BoundCheck> verify_hinge_approximation(const EmbeddingBatch& b, double margin) {
  b.validate();
  if (!(margin > 0.0)) {
    throw std::invalid_argument("verify_hinge_approximation: margin must be > 0");
  }
  if (b.n() < 2) throw std::invalid_argument("verify_hinge_approximation: need >= 2 samples");
  const std::size_t n = b.n();
  const Matrix d2 = pairwise_sq_euclidean(b.z);

  double worst_lower_slack = 0.0, worst_upper_slack = 0.0;
  double worst_lower_x = 0.0, worst_upper_x = 0.0;
  double hinge_sum = 0.0, lin_sum = 0.0, x_sum = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (b.y[i] == b.y[j]) continue;
      const double dist = std::sqrt(d2(i, j));
      if (dist > margin) {
        throw std::invalid_argument("verify_hinge_approximation: cross-class distance " +
                                    std::to_string(dist) + " exceeds margin " +
                                    std::to_string(margin) + " (pair " + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
      }
      const double x = dist / margin;
      const double quad = (1.0 - x) * (1.0 - x);
      const double lower_slack = quad - (1.0 - 2.0 * x);
      const double upper_slack = (1.0 - x) - quad;
      if (!any || lower_slack < worst_lower_slack) {
        worst_lower_slack = lower_slack;
        worst_lower_x = x;
      }
      if (!any || upper_slack < worst_upper_slack) {
        worst_upper_slack = upper_slack;
        worst_upper_x = x;
      }
      any = true;
      const double gap = margin - dist;
      hinge_sum += gap * gap;
      lin_sum += 1.0 - 2.0 * x;
      x_sum += x;
    }
  }

  const std::string witness = instance_summary(b, "margin", margin);
  std::vector<BoundCheck> checks;
  if (!any) {
    checks.push_back(BoundCheck::leq("hinge_sandwich_lower", 0.0, 0.0, 1e-10, witness));
    checks.push_back(BoundCheck::leq("hinge_sandwich_upper", 0.0, 0.0, 1e-10, witness));
    checks.push_back(BoundCheck::leq("hinge_error_cap", 0.0, 0.0, 1e-10, witness));
    return checks;
  }
  checks.push_back(BoundCheck::leq("hinge_sandwich_lower", 1.0 - 2.0 * worst_lower_x,
                                   (1.0 - worst_lower_x) * (1.0 - worst_lower_x), 1e-10, witness));
  checks.push_back(BoundCheck::leq("hinge_sandwich_upper",
                                   (1.0 - worst_upper_x) * (1.0 - worst_upper_x),
                                   1.0 - worst_upper_x, 1e-10, witness));
  const auto dn = static_cast<double>(n);
  const double m2 = margin * margin;
  const double cap_lhs = std::fabs(hinge_sum / dn - m2 * lin_sum / dn);
  const double cap_rhs = m2 * x_sum / dn;
  checks.push_back(BoundCheck::leq("hinge_error_cap", cap_lhs, cap_rhs, 1e-10, witness));
  return checks;
}

BoundCheck verify_fastap_jensen(const EmbeddingBatch& b, int bins) {
  const std::vector<FastApQuery> per_query = fastap_per_query(b, bins);
  std::size_t worst = 0;
  double worst_slack = 0.0;
  bool all_hold = true;
  for (std::size_t i = 0; i < per_query.size(); ++i) {
    const double slack = std::log(per_query[i].ap) - per_query[i].jensen_bound;
    if (i == 0 || slack < worst_slack) {
      worst_slack = slack;
      worst = i;
    }
    if (per_query[i].jensen_bound > std::log(per_query[i].ap) + 1e-10) all_hold = false;
  }
  BoundCheck c = BoundCheck::leq("fastap_jensen", per_query[worst].jensen_bound,
                                 std::log(per_query[worst].ap), 1e-10,
                                 instance_summary(b, "worst_query", static_cast<double>(worst)));
  c.holds = all_hold;
  return c;
}

}  // namespace mll
