#pragma once

#include <map>
#include <string>
#include <vector>

#include "mll/losses.hpp"
#include "mll/matrix.hpp"

namespace mll {

enum class DistanceKind { euclidean, cosine };

std::string to_string(DistanceKind kind);
DistanceKind distance_from_string(const std::string& s);

struct RecallResult {
  std::vector<int> ks;
  std::map<std::string, std::vector<double>> recalls;  // distance name -> per-k
  std::size_t queries = 0;   // queries scored
  std::size_t excluded = 0;  // queries without a reachable positive
};

// Leave-one-out recall over one batch: for each query the other n-1 samples
// are ranked by distance (ties broken by smaller index); recall@k is the
// fraction of queries whose top k contain a same-class sample. Queries
// without any same-class partner are excluded (counted and logged). Requires
// n > max(ks).
RecallResult recall_at_k(const EmbeddingBatch& b, const std::vector<int>& ks, DistanceKind kind);

// Query/gallery recall without self-exclusion. Queries whose label never
// occurs in the gallery are excluded (counted and logged). Requires gallery
// size >= max(ks).
RecallResult query_gallery_recall(const EmbeddingBatch& queries, const EmbeddingBatch& gallery,
                                  const std::vector<int>& ks, DistanceKind kind);

}  // namespace mll
