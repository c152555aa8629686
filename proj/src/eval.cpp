#include "mll/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mll/log.hpp"
#include "mll/numeric.hpp"

namespace mll {

std::string to_string(DistanceKind kind) {
  return kind == DistanceKind::euclidean ? "euclidean" : "cosine";
}

DistanceKind distance_from_string(const std::string& s) {
  if (s == "euclidean") return DistanceKind::euclidean;
  if (s == "cosine") return DistanceKind::cosine;
  throw std::invalid_argument("unknown distance kind '" + s + "' (euclidean|cosine)");
}

namespace {

int validate_ks(const std::vector<int>& ks) {
  if (ks.empty()) throw std::invalid_argument("recall: ks must be non-empty");
  int mx = 0;
  for (int k : ks) {
    if (k < 1) throw std::invalid_argument("recall: k must be >= 1, got " + std::to_string(k));
    mx = std::max(mx, k);
  }
  return mx;
}

// Distances from each row of a to each row of b under the given kind.
// Cosine distance is 1 - cosine similarity and requires non-zero rows.
Matrix cross_distances(const Matrix& a, const Matrix& b, DistanceKind kind) {
  if (a.cols() != b.cols()) throw std::invalid_argument("recall: dimension mismatch");
  Matrix d(a.rows(), b.rows());
  if (kind == DistanceKind::euclidean) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < b.rows(); ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
          const double diff = a(i, c) - b(j, c);
          s += diff * diff;
        }
        d(i, j) = s;
      }
    }
    return d;
  }
  const Matrix an = normalize_rows(a);
  const Matrix bn = normalize_rows(b);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = dot(an.row(i), bn.row(j));
      s = std::min(1.0, std::max(-1.0, s));
      d(i, j) = 1.0 - s;
    }
  }
  return d;
}

// Rank (1-based) of the nearest same-class candidate among the allowed
// candidates, ties broken by smaller index; 0 when no positive exists.
std::size_t first_hit_rank(const Matrix& dist, std::size_t query, int query_label,
                           const LabelVector& cand_labels, std::size_t skip_index) {
  std::vector<std::size_t> order;
  order.reserve(cand_labels.size());
  for (std::size_t j = 0; j < cand_labels.size(); ++j) {
    if (j != skip_index) order.push_back(j);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const double dx = dist(query, x), dy = dist(query, y);
    if (dx != dy) return dx < dy;
    return x < y;
  });
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (cand_labels[order[r]] == query_label) return r + 1;
  }
  return 0;
}

RecallResult tally(const std::vector<int>& ks, DistanceKind kind,
                   const std::vector<std::size_t>& ranks, std::size_t excluded) {
  RecallResult res;
  res.ks = ks;
  res.queries = ranks.size();
  res.excluded = excluded;
  std::vector<double>& rec = res.recalls[to_string(kind)];
  rec.resize(ks.size(), 0.0);
  if (ranks.empty()) {
    throw std::invalid_argument("recall: no query has a same-class candidate");
  }
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    std::size_t hits = 0;
    for (std::size_t r : ranks) {
      if (r >= 1 && r <= static_cast<std::size_t>(ks[ki])) ++hits;
    }
    rec[ki] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return res;
}

}  // namespace

RecallResult recall_at_k(const EmbeddingBatch& b, const std::vector<int>& ks, DistanceKind kind) {
  b.validate();
  const int max_k = validate_ks(ks);
  if (b.n() <= static_cast<std::size_t>(max_k)) {
    throw std::invalid_argument("recall_at_k: need n > max k (n = " + std::to_string(b.n()) +
                                ", max k = " + std::to_string(max_k) + ")");
  }
  const Matrix dist = cross_distances(b.z, b.z, kind);

  std::vector<std::size_t> ranks;
  ranks.reserve(b.n());
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < b.n(); ++i) {
    bool has_positive = false;
    for (std::size_t j = 0; j < b.n(); ++j) {
      if (j != i && b.y[j] == b.y[i]) {
        has_positive = true;
        break;
      }
    }
    if (!has_positive) {
      ++excluded;
      continue;
    }
    ranks.push_back(first_hit_rank(dist, i, b.y[i], b.y, i));
  }
  if (excluded > 0) {
    log::info("recall_at_k: excluded %zu query(ies) without a same-class partner", excluded);
  }
  return tally(ks, kind, ranks, excluded);
}

RecallResult query_gallery_recall(const EmbeddingBatch& queries, const EmbeddingBatch& gallery,
                                  const std::vector<int>& ks, DistanceKind kind) {
  queries.validate();
  gallery.validate();
  const int max_k = validate_ks(ks);
  if (gallery.n() < static_cast<std::size_t>(max_k)) {
    throw std::invalid_argument("query_gallery_recall: gallery smaller than max k");
  }
  const Matrix dist = cross_distances(queries.z, gallery.z, kind);

  std::vector<std::size_t> ranks;
  ranks.reserve(queries.n());
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < queries.n(); ++i) {
    bool label_present = false;
    for (std::size_t j = 0; j < gallery.n(); ++j) {
      if (gallery.y[j] == queries.y[i]) {
        label_present = true;
        break;
      }
    }
    if (!label_present) {
      ++excluded;
      continue;
    }
    ranks.push_back(first_hit_rank(dist, i, queries.y[i], gallery.y, gallery.n()));
  }
  if (excluded > 0) {
    log::info("query_gallery_recall: excluded %zu query(ies) with labels absent from the gallery",
              excluded);
  }
  return tally(ks, kind, ranks, excluded);
}

}  // namespace mll
