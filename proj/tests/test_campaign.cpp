#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mll/campaign.hpp"
#include "mll/rng.hpp"

using namespace mll;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mll_campaign_test_" +
            std::to_string(Rng(std::random_device{}()).next_u64() % 1000000));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

bool stats_equal(const GroupStats& a, const GroupStats& b) {
  return a.name == b.name && a.trials == b.trials && a.passes == b.passes &&
         a.skipped == b.skipped && a.checks == b.checks && a.violations == b.violations &&
         a.worst_inequality_slack == b.worst_inequality_slack &&
         a.worst_equality_error == b.worst_equality_error;
}

}  // namespace

TEST_CASE("the seven verifier groups come in canonical order") {
  const std::vector<std::string>& g = all_verifier_groups();
  REQUIRE(g.size() == 7);
  CHECK(g[0] == "tightness_chain");
  CHECK(g[1] == "contrastive_chain");
  CHECK(g[2] == "ce_pce_bound");
  CHECK(g[3] == "hinge_approximation");
  CHECK(g[4] == "fastap_jensen");
  CHECK(g[5] == "lemma2_identity");
  CHECK(g[6] == "mi_views");
}

TEST_CASE("campaign config validation") {
  CampaignConfig cfg;
  cfg.verifiers = {};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("empty verifier list"),
                       std::invalid_argument);
  cfg.verifiers = {"tightness_chain", "no_such_group"};
  CHECK_THROWS(cfg.validate());
  cfg.verifiers = {"mi_views", "mi_views"};
  CHECK_THROWS(cfg.validate());
  cfg.verifiers = {"mi_views"};
  cfg.trials = 0;
  CHECK_THROWS(cfg.validate());
  cfg = CampaignConfig{};
  cfg.verifiers = all_verifier_groups();
  cfg.jobs = 0;
  CHECK_THROWS(cfg.validate());
  cfg = CampaignConfig{};
  cfg.verifiers = all_verifier_groups();
  cfg.tolerance_override = -1.0;
  CHECK_THROWS(cfg.validate());
  cfg.tolerance_override = 1e-6;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("a short campaign passes every group deterministically") {
  CampaignConfig cfg;
  cfg.verifiers = all_verifier_groups();
  cfg.trials = 40;
  cfg.seed = 42;
  const CampaignResult a = run_campaign(cfg);
  REQUIRE(a.groups.size() == 7);
  CHECK(a.total_violations() == 0);
  for (const GroupStats& g : a.groups) {
    CHECK(g.trials == 40);
    CHECK(g.passes + g.skipped == g.trials);
    CHECK(g.failures.empty());
    if (g.name != "ce_pce_bound")
      CHECK(g.skipped == 0);
    else
      CHECK(g.skipped < 8);  // < 20%
  }

  const CampaignResult b = run_campaign(cfg);
  for (std::size_t i = 0; i < 7; ++i) CHECK(stats_equal(a.groups[i], b.groups[i]));
}

TEST_CASE("parallel campaigns reproduce the serial result") {
  CampaignConfig serial;
  serial.verifiers = all_verifier_groups();
  serial.trials = 30;
  serial.seed = 7;
  CampaignConfig parallel = serial;
  parallel.jobs = 4;
  const CampaignResult a = run_campaign(serial);
  const CampaignResult b = run_campaign(parallel);
  REQUIRE(a.groups.size() == b.groups.size());
  for (std::size_t i = 0; i < a.groups.size(); ++i) CHECK(stats_equal(a.groups[i], b.groups[i]));
}

TEST_CASE("running a subset replays the same trials as the full campaign") {
  CampaignConfig full;
  full.verifiers = all_verifier_groups();
  full.trials = 25;
  full.seed = 123;
  CampaignConfig subset;
  subset.verifiers = {"ce_pce_bound", "mi_views"};
  subset.trials = 25;
  subset.seed = 123;
  const CampaignResult a = run_campaign(full);
  const CampaignResult b = run_campaign(subset);
  REQUIRE(b.groups.size() == 2);
  CHECK(stats_equal(a.groups[2], b.groups[0]));
  CHECK(stats_equal(a.groups[6], b.groups[1]));
}

TEST_CASE("zero tolerance is a working negative control with replayable witnesses") {
  TempDir dir;
  CampaignConfig cfg;
  cfg.verifiers = {"mi_views", "lemma2_identity"};
  cfg.trials = 50;
  cfg.seed = 11;
  cfg.tolerance_override = 0.0;
  cfg.witness_dir = dir.path.string();
  const CampaignResult r = run_campaign(cfg);
  CHECK(r.total_violations() > 0);

  std::vector<std::string> files;
  for (const GroupStats& g : r.groups)
    files.insert(files.end(), g.witness_files.begin(), g.witness_files.end());
  REQUIRE(!files.empty());
  // replay re-runs the stored instance at the original tolerances, where the
  // identities hold again
  const std::vector<BoundCheck> checks = replay_witness(files.front());
  REQUIRE(!checks.empty());
  for (const BoundCheck& c : checks) CHECK(c.holds);
}

TEST_CASE("worst slacks are tracked as finite numbers") {
  CampaignConfig cfg;
  cfg.verifiers = {"tightness_chain", "hinge_approximation"};
  cfg.trials = 20;
  cfg.seed = 5;
  const CampaignResult r = run_campaign(cfg);
  for (const GroupStats& g : r.groups) {
    // slightly negative slack is fine as long as it stays inside the tolerance
    CHECK(g.worst_inequality_slack >= -1e-9);
    CHECK(g.worst_inequality_slack < std::numeric_limits<double>::infinity());
    CHECK(g.checks > 0);
  }
}
