#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mll/bounds.hpp"

namespace mll {

// Canonical group names in stream order: tightness_chain, contrastive_chain,
// ce_pce_bound, hinge_approximation, fastap_jensen, lemma2_identity,
// mi_views. A group's position fixes its per-trial random streams, so running
// a subset reproduces exactly the trials a full run would have seen.
const std::vector<std::string>& all_verifier_groups();

struct CampaignConfig {
  std::vector<std::string> verifiers;  // non-empty subset of the groups above
  std::size_t trials = 1000;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  // Replaces every check's tolerance when set (tolerance 0 is the negative
  // control: round-off alone must then produce violations).
  std::optional<double> tolerance_override;
  std::string witness_dir;  // violations write replay files here; empty = off

  void validate() const;
};

struct GroupStats {
  std::string name;
  std::size_t trials = 0;
  std::size_t passes = 0;      // trials with every check holding
  std::size_t skipped = 0;     // degenerate trials, no checks evaluated
  std::size_t checks = 0;
  std::size_t violations = 0;  // failing checks
  double worst_inequality_slack = std::numeric_limits<double>::infinity();
  double worst_equality_error = 0.0;
  std::vector<std::string> failures;
  std::vector<std::string> witness_files;
};

struct CampaignResult {
  std::vector<GroupStats> groups;

  std::size_t total_violations() const;
  std::size_t total_skipped() const;
};

// Seeded verification campaign: per (group, trial) an independent random
// instance is generated and every check of that group's verifier evaluated.
// Deterministic for fixed (verifiers, trials, seed) regardless of jobs.
CampaignResult run_campaign(const CampaignConfig& cfg);

// Re-runs the verifier stored in a campaign witness file on the embedded
// instance and returns its checks at the original tolerances.
std::vector<BoundCheck> replay_witness(const std::string& path);

}  // namespace mll
