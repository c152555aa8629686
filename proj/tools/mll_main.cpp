#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mll/campaign.hpp"
#include "mll/eval.hpp"
#include "mll/info.hpp"
#include "mll/io.hpp"
#include "mll/losses.hpp"
#include "mll/numeric.hpp"
#include "mll/rng.hpp"
#include "mll/train.hpp"

namespace {

using nlohmann::json;

std::string iso_timestamp() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = json::parse(mll::io::read_text_file(path));
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (allowed.find(it.key()) == allowed.end()) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + ctx);
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config: bad value for '" + key + "'");
  }
}

void write_summary(const std::string& out_dir, const json& summary) {
  std::filesystem::create_directories(out_dir);
  mll::io::write_text_file(std::filesystem::path(out_dir) / "summary.json",
                           summary.dump(2) + "\n");
}

std::vector<int> parse_ks(const std::string& s) {
  std::vector<int> ks;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string tok = s.substr(start, comma == std::string::npos ? comma : comma - start);
    if (tok.empty()) throw std::invalid_argument("--ks: empty entry in '" + s + "'");
    ks.push_back(std::stoi(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return ks;
}

json recall_to_json(const mll::RecallResult& r) {
  json j;
  j["ks"] = r.ks;
  j["queries"] = r.queries;
  j["excluded"] = r.excluded;
  j["recalls"] = json::object();
  for (const auto& [kind, values] : r.recalls) j["recalls"][kind] = values;
  return j;
}

mll::DiscreteJoint demo_joint(mll::Rng rng) {
  const std::size_t rows = 2 + static_cast<std::size_t>(rng.uniform_int(7));
  const std::size_t cols = 2 + static_cast<std::size_t>(rng.uniform_int(7));
  mll::Matrix p(rows, cols);
  double total = 0.0;
  while (total <= 0.0) {
    total = 0.0;
    for (double& v : p.data()) {
      v = rng.uniform() < 0.15 ? 0.0 : rng.uniform(0.05, 1.05);
      total += v;
    }
  }
  for (double& v : p.data()) v /= total;
  return mll::DiscreteJoint{std::move(p)};
}

int cmd_verify(const json& cfg, std::optional<std::uint64_t> seed,
               std::optional<std::size_t> trials, std::optional<std::size_t> jobs,
               const std::string& out_dir) {
  check_keys(cfg, {"verifiers", "trials", "seed", "jobs", "tolerance"}, "verify");
  mll::CampaignConfig cc;
  cc.verifiers = get_or(cfg, "verifiers", mll::all_verifier_groups());
  cc.trials = get_or<std::size_t>(cfg, "trials", 1000);
  cc.seed = get_or<std::uint64_t>(cfg, "seed", 42);
  cc.jobs = get_or<std::size_t>(cfg, "jobs", 1);
  if (cfg.contains("tolerance")) cc.tolerance_override = cfg.at("tolerance").get<double>();
  if (seed) cc.seed = *seed;
  if (trials) cc.trials = *trials;
  if (jobs) cc.jobs = *jobs;
  std::filesystem::create_directories(out_dir);
  cc.witness_dir = (std::filesystem::path(out_dir) / "witnesses").string();

  const mll::CampaignResult result = mll::run_campaign(cc);

  json groups = json::array();
  for (const mll::GroupStats& g : result.groups) {
    std::printf("%-22s trials=%zu passes=%zu skipped=%zu checks=%zu violations=%zu\n",
                g.name.c_str(), g.trials, g.passes, g.skipped, g.checks, g.violations);
    for (const std::string& f : g.failures) std::printf("  FAIL %s\n", f.c_str());
    json gj;
    gj["name"] = g.name;
    gj["trials"] = g.trials;
    gj["passes"] = g.passes;
    gj["skipped"] = g.skipped;
    gj["checks"] = g.checks;
    gj["violations"] = g.violations;
    gj["worst_inequality_slack"] = g.worst_inequality_slack;
    gj["worst_equality_error"] = g.worst_equality_error;
    gj["witness_files"] = g.witness_files;
    groups.push_back(std::move(gj));
  }
  json summary;
  summary["command"] = "verify";
  summary["seed"] = cc.seed;
  summary["trials"] = cc.trials;
  summary["verifiers"] = cc.verifiers;
  if (cc.tolerance_override) summary["tolerance_override"] = *cc.tolerance_override;
  summary["groups"] = groups;
  summary["total_violations"] = result.total_violations();
  summary["total_skipped"] = result.total_skipped();
  summary["timestamp"] = iso_timestamp();
  write_summary(out_dir, summary);

  const std::size_t violations = result.total_violations();
  std::printf("total violations: %zu\n", violations);
  return violations == 0 ? 0 : 1;
}

int cmd_replay(const std::string& path) {
  const std::vector<mll::BoundCheck> checks = mll::replay_witness(path);
  bool all_hold = true;
  for (const mll::BoundCheck& c : checks) {
    std::printf("%-28s %-10s lhs=%.17g rhs=%.17g slack=%.3e tol=%.1e %s\n", c.name.c_str(),
                c.kind == mll::CheckKind::inequality ? "inequality" : "equality", c.lhs, c.rhs,
                c.slack, c.tolerance, c.holds ? "HOLDS" : "VIOLATED");
    all_hold = all_hold && c.holds;
  }
  return all_hold ? 0 : 1;
}

mll::TrainConfig train_config_from(const json& cfg) {
  mll::TrainConfig tc;
  tc.loss = mll::loss_from_string(get_or<std::string>(cfg, "loss", "cross_entropy"));
  tc.epochs = get_or<std::size_t>(cfg, "epochs", tc.epochs);
  tc.batch_size = get_or<std::size_t>(cfg, "batch_size", tc.batch_size);
  tc.lr = get_or<double>(cfg, "lr", tc.lr);
  tc.momentum = get_or<double>(cfg, "momentum", tc.momentum);
  tc.weight_decay = get_or<double>(cfg, "weight_decay", tc.weight_decay);
  tc.label_smoothing = get_or<double>(cfg, "label_smoothing", tc.label_smoothing);
  tc.seed = get_or<std::uint64_t>(cfg, "seed", tc.seed);
  tc.normalize_embeddings = get_or<bool>(cfg, "normalize_embeddings", tc.normalize_embeddings);
  tc.hidden_width = get_or<std::size_t>(cfg, "hidden_width", tc.hidden_width);
  tc.embedding_dim = get_or<std::size_t>(cfg, "embedding_dim", tc.embedding_dim);
  if (cfg.contains("hyper")) {
    const json& h = cfg.at("hyper");
    check_keys(h, {"margin", "snca_sigma", "ms_alpha", "ms_beta", "ms_margin", "fastap_bins"},
               "train.hyper");
    tc.hyper.margin = get_or<double>(h, "margin", tc.hyper.margin);
    tc.hyper.snca_sigma = get_or<double>(h, "snca_sigma", tc.hyper.snca_sigma);
    tc.hyper.ms_alpha = get_or<double>(h, "ms_alpha", tc.hyper.ms_alpha);
    tc.hyper.ms_beta = get_or<double>(h, "ms_beta", tc.hyper.ms_beta);
    tc.hyper.ms_margin = get_or<double>(h, "ms_margin", tc.hyper.ms_margin);
    tc.hyper.fastap_bins = get_or<int>(h, "fastap_bins", tc.hyper.fastap_bins);
  }
  return tc;
}

mll::SyntheticSpec synthetic_spec_from(const json& cfg, std::uint64_t default_seed) {
  mll::SyntheticSpec ss;
  ss.seed = default_seed;
  if (!cfg.contains("data")) return ss;
  const json& d = cfg.at("data");
  check_keys(d,
             {"classes", "samples_per_class", "input_dim", "mean_radius", "sigma", "seed",
              "train_fraction"},
             "train.data");
  ss.classes = get_or<std::size_t>(d, "classes", ss.classes);
  ss.samples_per_class = get_or<std::size_t>(d, "samples_per_class", ss.samples_per_class);
  ss.input_dim = get_or<std::size_t>(d, "input_dim", ss.input_dim);
  ss.mean_radius = get_or<double>(d, "mean_radius", ss.mean_radius);
  ss.sigma = get_or<double>(d, "sigma", ss.sigma);
  ss.seed = get_or<std::uint64_t>(d, "seed", default_seed);
  ss.train_fraction = get_or<double>(d, "train_fraction", ss.train_fraction);
  return ss;
}

int cmd_train(const json& cfg, std::optional<std::uint64_t> seed, const std::string& out_dir) {
  check_keys(cfg,
             {"mode", "loss", "epochs", "batch_size", "lr", "momentum", "weight_decay",
              "label_smoothing", "seed", "normalize_embeddings", "hidden_width", "embedding_dim",
              "hyper", "data"},
             "train");
  const std::string mode = get_or<std::string>(cfg, "mode", "train");
  if (mode != "train" && mode != "bound-demo") {
    throw std::invalid_argument("config: mode must be 'train' or 'bound-demo'");
  }
  mll::TrainConfig tc = train_config_from(cfg);
  if (seed) tc.seed = *seed;
  const mll::SyntheticSpec ss = synthetic_spec_from(cfg, tc.seed);
  const auto [train_set, test_set] = mll::generate_blobs(ss);

  std::filesystem::create_directories(out_dir);
  json summary;
  summary["command"] = "train";
  summary["mode"] = mode;
  summary["loss"] = mll::to_string(tc.loss);
  summary["seed"] = tc.seed;
  summary["epochs"] = tc.epochs;

  if (mode == "bound-demo") {
    const mll::TrainTrace trace = mll::alternating_bound_demo(train_set, test_set, tc);
    mll::io::write_trace_csv(std::filesystem::path(out_dir) / "trace.csv", trace);
    std::size_t degenerate = 0, violations = 0;
    double min_gap = std::numeric_limits<double>::infinity();
    for (const mll::TraceRow& r : trace.rows) {
      if (!r.companion) {
        ++degenerate;
        continue;
      }
      const double gap = r.loss_total - *r.companion;
      min_gap = std::min(min_gap, gap);
      if (gap < -1e-8) ++violations;
    }
    summary["rows"] = trace.rows.size();
    summary["degenerate_epochs"] = degenerate;
    summary["bound_violations"] = violations;
    summary["min_ce_minus_pce"] = min_gap;
    summary["final_recall_at_1"] = trace.rows.empty() ? 0.0 : trace.rows.back().recall_at_1;
    summary["diverged"] = trace.diverged;
    summary["timestamp"] = iso_timestamp();
    write_summary(out_dir, summary);
    std::printf("bound demo: %zu rows, %zu degenerate, %zu violations, min CE-PCE %.3e\n",
                trace.rows.size(), degenerate, violations, min_gap);
    return (trace.diverged || violations > 0) ? 1 : 0;
  }

  const mll::TrainResult res = mll::train_model(train_set, test_set, tc);
  mll::io::write_trace_csv(std::filesystem::path(out_dir) / "trace.csv", res.trace);
  summary["diverged"] = res.trace.diverged;
  if (!res.trace.rows.empty()) {
    const mll::TraceRow& last = res.trace.rows.back();
    summary["final_loss_total"] = last.loss_total;
    summary["final_recall_at_1"] = last.recall_at_1;
    if (last.companion) summary["final_companion_loss"] = *last.companion;
  }
  if (!res.trace.diverged) {
    mll::Matrix z = mll::mlp_forward(res.params, test_set.z);
    if (tc.normalize_embeddings) z = mll::normalize_rows(z);
    const mll::EmbeddingBatch eb{std::move(z), test_set.y};
    const std::vector<int> ks = {1, 2, 4, 8};
    json recall;
    for (const auto kind : {mll::DistanceKind::euclidean, mll::DistanceKind::cosine}) {
      const mll::RecallResult r = mll::recall_at_k(eb, ks, kind);
      recall[mll::to_string(kind)] = r.recalls.at(mll::to_string(kind));
    }
    recall["ks"] = ks;
    summary["test_recall"] = recall;
  }
  summary["timestamp"] = iso_timestamp();
  write_summary(out_dir, summary);
  std::printf("train: %zu epochs recorded, diverged=%s, final recall@1 %.4f\n",
              res.trace.rows.empty() ? 0 : res.trace.rows.size() - 1,
              res.trace.diverged ? "yes" : "no",
              res.trace.rows.empty() ? 0.0 : res.trace.rows.back().recall_at_1);
  return res.trace.diverged ? 1 : 0;
}

int cmd_grad_check(const json& cfg, std::optional<std::uint64_t> seed, const std::string& out_dir) {
  check_keys(cfg, {"batches", "seed", "step", "losses"}, "grad-check");
  const std::size_t batches = get_or<std::size_t>(cfg, "batches", 50);
  const double step = get_or<double>(cfg, "step", 1e-5);
  std::uint64_t master_seed = get_or<std::uint64_t>(cfg, "seed", 7);
  if (seed) master_seed = *seed;
  const std::vector<std::string> default_losses = {"contrastive",   "center",
                                                   "snca",          "multi_similarity",
                                                   "cross_entropy", "spce"};
  const auto losses = get_or(cfg, "losses", default_losses);
  if (losses.empty()) throw std::invalid_argument("grad-check: empty loss list");
  if (batches < 1) throw std::invalid_argument("grad-check: batches must be >= 1");

  const mll::Rng master(master_seed);
  json rows = json::array();
  bool ok = true;
  for (std::size_t li = 0; li < losses.size(); ++li) {
    const mll::LossKind kind = mll::loss_from_string(losses[li]);
    double worst = 0.0;
    for (std::size_t t = 0; t < batches; ++t) {
      mll::Rng rng = master.derive((static_cast<std::uint64_t>(li) << 32) | t);
      const std::size_t k = 2 + static_cast<std::size_t>(rng.uniform_int(4));
      const std::size_t per = 2 + static_cast<std::size_t>(rng.uniform_int(5));
      const std::size_t d = 2 + static_cast<std::size_t>(rng.uniform_int(7));
      mll::EmbeddingBatch b;
      std::vector<int> y;
      for (std::size_t c = 0; c < k; ++c) y.insert(y.end(), per, static_cast<int>(c));
      b.y = mll::LabelVector(std::move(y), static_cast<int>(k));
      b.z = mll::Matrix(k * per, d);
      for (double& v : b.z.data()) v = rng.normal();
      mll::HyperParams h;
      h.margin = rng.uniform(1.0, 6.0);
      h.snca_sigma = rng.uniform(0.1, 1.0);
      h.ms_alpha = rng.uniform(1.0, 4.0);
      h.ms_beta = rng.uniform(10.0, 60.0);
      h.ms_margin = rng.uniform(0.5, 1.0);
      h.label_smoothing = rng.uniform() < 0.5 ? 0.0 : 0.1;
      mll::SoftmaxClassifier head;
      head.theta = mll::Matrix(k, d);
      for (double& v : head.theta.data()) v = rng.normal();
      head.bias = std::vector<double>(k);
      for (double& v : *head.bias) v = rng.normal(0.0, 0.5);
      const double err = mll::finite_difference_check(kind, b, h, step, &head);
      worst = std::max(worst, err);
    }
    std::printf("%-18s worst relative error %.3e over %zu batches\n", losses[li].c_str(), worst,
                batches);
    json row;
    row["loss"] = losses[li];
    row["worst_relative_error"] = worst;
    rows.push_back(std::move(row));
    ok = ok && worst <= 1e-4;
  }
  if (!out_dir.empty()) {
    json summary;
    summary["command"] = "grad-check";
    summary["seed"] = master_seed;
    summary["batches"] = batches;
    summary["step"] = step;
    summary["losses"] = rows;
    summary["all_within_1e-4"] = ok;
    summary["timestamp"] = iso_timestamp();
    write_summary(out_dir, summary);
  }
  return ok ? 0 : 1;
}

int cmd_mi_demo(const json& cfg, std::optional<std::uint64_t> seed, const std::string& out_dir) {
  check_keys(cfg, {"seed", "joints", "samples", "dim", "sigmas"}, "mi-demo");
  std::uint64_t master_seed = get_or<std::uint64_t>(cfg, "seed", 5);
  if (seed) master_seed = *seed;
  const std::size_t joints = get_or<std::size_t>(cfg, "joints", 5);
  const std::size_t samples = get_or<std::size_t>(cfg, "samples", 1000);
  const std::size_t dim = get_or<std::size_t>(cfg, "dim", 2);
  const std::vector<double> sigmas = get_or(cfg, "sigmas", std::vector<double>{0.25, 0.5, 1.0, 2.0, 4.0});
  if (joints < 1 || samples < 2 || dim < 1 || sigmas.empty()) {
    throw std::invalid_argument("mi-demo: joints >= 1, samples >= 2, dim >= 1, sigmas non-empty");
  }

  const mll::Rng master(master_seed);
  bool ok = true;
  json summary;
  summary["command"] = "mi-demo";
  summary["seed"] = master_seed;

  std::printf("mutual information, both views:\n");
  json view_rows = json::array();
  for (std::size_t t = 0; t < joints; ++t) {
    const mll::DiscreteJoint j = demo_joint(master.derive(t));
    const mll::MiViews v = mll::mutual_information_both_views(j);
    const double diff = std::abs(v.discriminative - v.generative);
    std::printf("  joint %zu (%zux%zu): H(Y)-H(Y|Z)=%.12f H(Z)-H(Z|Y)=%.12f |diff|=%.2e\n", t,
                j.p.rows(), j.p.cols(), v.discriminative, v.generative, diff);
    ok = ok && diff <= 1e-12;
    json row;
    row["discriminative"] = v.discriminative;
    row["generative"] = v.generative;
    row["difference"] = diff;
    view_rows.push_back(std::move(row));
  }
  summary["views"] = view_rows;

  {
    mll::Rng rng = master.derive(1u << 20);
    const mll::DiscreteJoint j = demo_joint(rng.derive(0));
    mll::Rng qr = rng.derive(1);
    mll::Matrix q(j.p.rows(), j.p.cols());
    for (std::size_t i = 0; i < q.rows(); ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) {
        q(i, c) = qr.uniform(0.05, 1.05);
        total += q(i, c);
      }
      for (std::size_t c = 0; c < q.cols(); ++c) q(i, c) /= total;
    }
    const mll::BoundCheck c = mll::lemma2_identity(j, mll::ConditionalModel{std::move(q)});
    std::printf("conditional cross-entropy decomposition: lhs=%.12f rhs=%.12f |err|=%.2e %s\n",
                c.lhs, c.rhs, c.slack, c.holds ? "HOLDS" : "VIOLATED");
    std::printf("  witness %s\n", c.witness.c_str());
    ok = ok && c.holds;
    summary["decomposition_error"] = c.slack;
  }

  std::printf("feature-entropy estimator vs Gaussian reference (dim %zu, %zu samples):\n", dim,
              samples);
  json gauss_rows = json::array();
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    const double sigma = sigmas[si];
    if (sigma <= 0.0) throw std::invalid_argument("mi-demo: sigmas must be > 0");
    mll::Rng rng = master.derive((1u << 21) + si);
    mll::Matrix z(samples, dim);
    for (double& v : z.data()) v = rng.normal(0.0, sigma);
    const double est = mll::entropy_estimator(z);
    const double analytic = mll::gaussian_conditional_entropy(dim, sigma);
    std::printf("  sigma %-6g estimator %10.4f analytic %10.4f\n", sigma, est, analytic);
    json row;
    row["sigma"] = sigma;
    row["estimator"] = est;
    row["analytic"] = analytic;
    gauss_rows.push_back(std::move(row));
  }
  summary["gaussian"] = gauss_rows;
  summary["views_agree"] = ok;
  summary["timestamp"] = iso_timestamp();
  if (!out_dir.empty()) write_summary(out_dir, summary);
  return ok ? 0 : 1;
}

int cmd_eval_recall(const std::string& embeddings, const std::string& labels,
                    const std::string& ks_str, const std::string& distance,
                    const std::string& out_dir) {
  const mll::Matrix z = mll::io::read_matrix_auto(embeddings);
  const mll::LabelVector y = mll::io::read_labels(labels);
  if (z.rows() != y.size()) {
    throw std::invalid_argument("eval-recall: " + std::to_string(z.rows()) + " embeddings vs " +
                                std::to_string(y.size()) + " labels");
  }
  const mll::EmbeddingBatch b{z, y};
  const mll::RecallResult r =
      mll::recall_at_k(b, parse_ks(ks_str), mll::distance_from_string(distance));
  json out = recall_to_json(r);
  std::printf("%s\n", out.dump(2).c_str());
  if (!out_dir.empty()) {
    out["timestamp"] = iso_timestamp();
    write_summary(out_dir, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metric-learning loss decompositions: verification campaigns, desk-scale "
               "training, gradient checks, information demos, retrieval evaluation"};
  app.require_subcommand(1);

  std::string v_config, v_out = "mll-out", v_replay;
  std::uint64_t v_seed = 0;
  std::size_t v_trials = 0, v_jobs = 0;
  CLI::App* verify = app.add_subcommand("verify", "run seeded verification campaigns");
  verify->add_option("--config", v_config, "JSON config file");
  CLI::Option* v_seed_opt = verify->add_option("--seed", v_seed, "campaign seed");
  CLI::Option* v_trials_opt = verify->add_option("--trials", v_trials, "trials per verifier");
  CLI::Option* v_jobs_opt = verify->add_option("--jobs", v_jobs, "worker threads");
  verify->add_option("--out", v_out, "output directory");
  verify->add_option("--replay", v_replay, "re-run a witness file and exit");

  std::string t_config, t_out = "mll-out";
  std::uint64_t t_seed = 0;
  CLI::App* train = app.add_subcommand("train", "train on synthetic blobs, write the trace");
  train->add_option("--config", t_config, "JSON config file");
  CLI::Option* t_seed_opt = train->add_option("--seed", t_seed, "training seed");
  train->add_option("--out", t_out, "output directory");

  std::string g_config, g_out = "mll-out";
  std::uint64_t g_seed = 0;
  CLI::App* grad = app.add_subcommand("grad-check", "finite-difference gradient audit");
  grad->add_option("--config", g_config, "JSON config file");
  CLI::Option* g_seed_opt = grad->add_option("--seed", g_seed, "batch seed");
  grad->add_option("--out", g_out, "output directory");

  std::string m_config, m_out = "mll-out";
  std::uint64_t m_seed = 0;
  CLI::App* mi = app.add_subcommand("mi-demo", "mutual information and entropy demos");
  mi->add_option("--config", m_config, "JSON config file");
  CLI::Option* m_seed_opt = mi->add_option("--seed", m_seed, "demo seed");
  mi->add_option("--out", m_out, "output directory");

  std::string e_embeddings, e_labels, e_ks = "1,2,4,8", e_distance = "euclidean", e_out;
  CLI::App* eval = app.add_subcommand("eval-recall", "recall@k from embedding + label files");
  eval->add_option("--embeddings", e_embeddings, "matrix file (CSV or MLL1 binary)")->required();
  eval->add_option("--labels", e_labels, "label file, one integer per line")->required();
  eval->add_option("--ks", e_ks, "comma-separated k values");
  eval->add_option("--distance", e_distance, "euclidean|cosine");
  eval->add_option("--out", e_out, "output directory (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (verify->parsed()) {
      if (!v_replay.empty()) return cmd_replay(v_replay);
      return cmd_verify(load_config(v_config),
                        v_seed_opt->count() ? std::optional<std::uint64_t>(v_seed) : std::nullopt,
                        v_trials_opt->count() ? std::optional<std::size_t>(v_trials) : std::nullopt,
                        v_jobs_opt->count() ? std::optional<std::size_t>(v_jobs) : std::nullopt,
                        v_out);
    }
    if (train->parsed()) {
      return cmd_train(load_config(t_config),
                       t_seed_opt->count() ? std::optional<std::uint64_t>(t_seed) : std::nullopt,
                       t_out);
    }
    if (grad->parsed()) {
      return cmd_grad_check(load_config(g_config),
                            g_seed_opt->count() ? std::optional<std::uint64_t>(g_seed)
                                                : std::nullopt,
                            g_out);
    }
    if (mi->parsed()) {
      return cmd_mi_demo(load_config(m_config),
                         m_seed_opt->count() ? std::optional<std::uint64_t>(m_seed) : std::nullopt,
                         m_out);
    }
    if (eval->parsed()) {
      return cmd_eval_recall(e_embeddings, e_labels, e_ks, e_distance, e_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  std::fprintf(stderr, "error: no subcommand\n");
  return 2;
}
