// Acceptance run: one [PASS]/[FAIL] line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <array>
#include <sstream>
#include <string>
#include <vector>

#include "lockin/belief_dynamics.hpp"
#include "lockin/bernoulli_models.hpp"
#include "lockin/causal.hpp"
#include "lockin/cli.hpp"
#include "lockin/diversity.hpp"
#include "lockin/hierarchy.hpp"
#include "lockin/rng.hpp"
#include "lockin/topic_id.hpp"
#include "topic_fixtures.hpp"
#include "tree_fixtures.hpp"

using namespace lockin;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kPhaseNearTruth = 0.05;
constexpr double kPhaseFarFromTruth = 0.1;
constexpr double kPhaseStable = 0.01;
constexpr std::size_t kPhaseMinLocked = 14;
constexpr double kPhaseMaxSeconds = 60.0;
constexpr double kSpectralTol = 1e-8;
constexpr double kSpectralMaxSeconds = 5.0;
constexpr double kLockinHigh = 0.9;
constexpr double kLockinLow = 0.05;
constexpr double kLockinMaxSeconds = 60.0;
constexpr double kHalfTol = 1e-12;
constexpr double kOracleTol = 1e-12;
constexpr double kPerfMaxSeconds = 5.0;
constexpr double kKdeTruth = 1.4189385332046727;  // 0.5 ln(2 pi e)
constexpr double kKdeTol = 0.05;
constexpr double kKinkTol = 0.05;
constexpr double kKinkAlpha = 0.01;
constexpr double kSizeTarget = 0.05;
constexpr double kSizeTol = 0.02;
constexpr double kRkdMaxSeconds = 60.0;
constexpr double kOrthTol = 1e-8;
constexpr double kTraceTol = 1e-8;
constexpr double kHc3Tol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "lockin_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

belief::SimulationConfig phase_config(double product) {
  const double lambda = std::sqrt(product / 10.0);
  belief::SimulationConfig cfg;
  cfg.n_agents = 11;
  cfg.ground_truth = 0.0;
  cfg.steps = 10000;
  cfg.runs = 15;
  cfg.seed = 2025;
  cfg.record_every = 5000;
  cfg.schedule = belief::TrustSchedule::constant(belief::human_llm_trust(11, lambda, lambda));
  return cfg;
}

Outcome phase_change() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t near_sub = 0, locked_super = 0, stable_locked = 0, stable_super = 0;
  double worst_sub = 0.0;
  for (double product : {0.9, 1.0, 1.1}) {
    const auto cfg = phase_config(product);
    const auto records = belief::simulate(cfg);
    std::vector<double> half(cfg.runs), last(cfg.runs);
    for (const auto& r : records) (r.t == cfg.steps ? last : half)[r.run] = r.nu_hat[0];
    for (std::size_t run = 0; run < cfg.runs; ++run) {
      const double err = std::abs(last[run] - cfg.ground_truth);
      if (product == 0.9) {
        worst_sub = std::max(worst_sub, err);
        near_sub += err < kPhaseNearTruth;
      }
      if (product == 1.1) stable_super += std::abs(last[run] - half[run]) < kPhaseStable;
      if (product == 1.1 && err > kPhaseFarFromTruth) {
        ++locked_super;
        stable_locked += std::abs(last[run] - half[run]) < kPhaseStable;
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = near_sub == 15 && stable_locked >= kPhaseMinLocked && secs <= kPhaseMaxSeconds;
  return {pass, fmt("0.9: %zu/15 runs within %.2f (max err %.4f); 1.1: %zu/15 stable, %zu/15 beyond %.1f, %zu both "
                    "(need %zu)",
                    near_sub, kPhaseNearTruth, worst_sub, stable_super, locked_super, kPhaseFarFromTruth,
                    stable_locked, kPhaseMinLocked)};
}

Outcome spectral_formula() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(7);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 2 + rng() % 199;
    const double l1 = 2.0 * (1.0 - rng.uniform());
    const double l2 = 2.0 * (1.0 - rng.uniform());
    const double rho = belief::spectral_radius(belief::human_llm_trust(n, l1, l2));
    worst = std::max(worst, std::abs(rho - std::sqrt(static_cast<double>(n - 1) * l1 * l2)));
  }
  const double secs = seconds_since(t0);
  return {worst < kSpectralTol && secs <= kSpectralMaxSeconds, fmt("max |rho - sqrt((N-1) l1 l2)| = %.3g", worst)};
}

bernoulli::BetaPairConfig beta_config(double gamma) {
  bernoulli::BetaPairConfig cfg;
  cfg.gamma_h = cfg.gamma_a = gamma;
  cfg.theta = 0.5;
  cfg.rounds = 10000;
  cfg.runs = 200;
  cfg.epsilon = 0.05;
  cfg.seed = 2025;
  return cfg;
}

Outcome beta_lockin() {
  const auto t0 = std::chrono::steady_clock::now();
  const double high = bernoulli::beta_pair_simulate(beta_config(1.1)).lockin_rate;
  const double low = bernoulli::beta_pair_simulate(beta_config(0.0)).lockin_rate;
  const double secs = seconds_since(t0);
  return {high >= kLockinHigh && low <= kLockinLow && secs <= kLockinMaxSeconds,
          fmt("gamma=1.1: lockin_rate %.3f (need >= %.2f); gamma=0: %.3f (need <= %.2f)", high, kLockinHigh, low,
              kLockinLow)};
}

Outcome lineage_endpoints() {
  const auto small = fixtures::balanced_binary(3);
  const std::vector<hierarchy::NodeId> homogeneous(20, 9);
  const double d0 = diversity::lineage_diversity(small, homogeneous);
  // Leaves 7 and 14 sit in different root subtrees.
  const std::vector<hierarchy::NodeId> separated{7, 14};
  const double d1 = diversity::lineage_diversity(small, separated);

  const auto big = fixtures::balanced_binary(16);
  // Node X at depth 8 spans 2^8 leaves; take its first and last leaf.
  hierarchy::NodeId x = 0;
  for (int d = 0; d < 8; ++d) x = 2 * x + 1;
  hierarchy::NodeId first = x, last = x;
  while (!big.is_leaf(first)) first = 2 * first + 1;
  while (!big.is_leaf(last)) last = 2 * last + 2;
  const std::vector<hierarchy::NodeId> cluster{first, last};
  const bool built = big.leaf_count(x) == 256 && big.lca(first, last) == x;
  const double dh = diversity::lineage_diversity(big, cluster);
  return {built && d0 == 0.0 && d1 == 1.0 && std::abs(dh - 0.5) <= kHalfTol,
          fmt("homogeneous %.17g, root-separated %.17g, sqrt|T| cluster %.17g", d0, d1, dh)};
}

Outcome oracle_equivalence() {
  Rng rng(11);
  double worst_lineage = 0.0, worst_depth = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    hierarchy::HierarchyTree tree = fixtures::random_tree(rng, 3 + rng() % 19998);
    while (tree.leaf_total() > 10000 || tree.leaf_total() < 2) tree = fixtures::random_tree(rng, 3 + rng() % 15000);
    const auto leaves = tree.leaves();
    std::vector<hierarchy::NodeId> corpus(2 + rng() % 199);
    for (auto& c : corpus) c = leaves[rng() % leaves.size()];
    worst_lineage = std::max(worst_lineage, std::abs(diversity::lineage_diversity(tree, corpus) -
                                                     diversity::lineage_diversity_naive(tree, corpus)));
    worst_depth = std::max(worst_depth, std::abs(diversity::depth_diversity(tree, corpus) -
                                                 diversity::depth_diversity_naive(tree, corpus)));
  }
  return {worst_lineage <= kOracleTol && worst_depth <= kOracleTol,
          fmt("max |fast - naive|: lineage %.3g, depth %.3g", worst_lineage, worst_depth)};
}

Outcome lineage_performance() {
  // Complete binary tree in heap layout with exactly 10^6 leaves.
  const std::size_t leaves = 1000000, nodes = 2 * leaves - 1;
  std::vector<std::int64_t> parents(nodes, hierarchy::kNoParent);
  for (std::size_t v = 1; v < nodes; ++v) parents[v] = static_cast<std::int64_t>((v - 1) / 2);
  const auto tree = hierarchy::HierarchyTree::from_parents(parents);
  Rng rng(13);
  std::vector<hierarchy::NodeId> corpus(100000);
  for (auto& c : corpus) c = static_cast<hierarchy::NodeId>(leaves - 1 + rng() % leaves);
  const auto t0 = std::chrono::steady_clock::now();
  const double d = diversity::lineage_diversity(tree, corpus);
  const double secs = seconds_since(t0);
  return {tree.leaf_total() == leaves && secs <= kPerfMaxSeconds && d > 0.0 && d < 1.0,
          fmt("|T|=%llu, m=%zu: D=%.6f in %.3f s (limit %.0f s)", static_cast<unsigned long long>(tree.leaf_total()),
              corpus.size(), d, secs, kPerfMaxSeconds)};
}

// Every ordered tuple of up to three non-overlapping blocks of `a`, checked
// against `b` by earliest in-order placement.
std::array<std::uint32_t, 4> exhaustive_lcs(const std::string& a, const std::string& b) {
  std::array<std::uint32_t, 4> best{0, 0, 0, 0};
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  std::function<void(std::size_t, std::uint32_t)> extend = [&](std::size_t from, std::uint32_t total) {
    // Does the current tuple embed in b?
    std::size_t cursor = 0;
    for (auto [s, len] : blocks) {
      const auto pos = b.find(a.substr(s, len), cursor);
      if (pos == std::string::npos) return;
      cursor = pos + len;
    }
    for (std::size_t k = blocks.size(); k <= 3; ++k) best[k] = std::max(best[k], total);
    if (blocks.size() == 3) return;
    for (std::size_t s = from; s < a.size(); ++s) {
      for (std::size_t len = 1; s + len <= a.size(); ++len) {
        blocks.emplace_back(s, len);
        extend(s + len, total + static_cast<std::uint32_t>(len));
        blocks.pop_back();
      }
    }
  };
  extend(0, 0);
  return best;
}

Outcome lcs_semantics() {
  Rng rng(17);
  std::size_t mismatches = 0, checked = 0;
  for (int pair = 0; pair < 500; ++pair) {
    std::string a, b;
    for (auto* s : {&a, &b}) {
      const std::size_t len = rng() % 13;
      for (std::size_t i = 0; i < len; ++i) *s += "abc"[rng() % 3];
    }
    const auto oracle = exhaustive_lcs(a, b);
    for (int k = 1; k <= 3; ++k) {
      ++checked;
      mismatches += topics::lcs_k(a, b, k) != oracle[static_cast<std::size_t>(k)];
    }
    ++checked;
    mismatches += topics::similarity(a, b) != oracle[1] + oracle[2] + oracle[3];
  }
  return {mismatches == 0, fmt("%zu/%zu values differ from exhaustive enumeration", mismatches, checked)};
}

Outcome topic_clustering() {
  const auto corpus = fixtures::three_family_corpus(5);
  std::vector<topics::SnapshotClustering> at;
  for (std::int64_t threshold : {40, 60, 80}) at.push_back(topics::cluster_snapshot(corpus, threshold));
  const auto refines = [](const topics::SnapshotClustering& fine, const topics::SnapshotClustering& coarse) {
    for (const auto& f : fine.components) {
      const bool inside = std::any_of(coarse.components.begin(), coarse.components.end(), [&](const auto& c) {
        return std::includes(c.begin(), c.end(), f.begin(), f.end());
      });
      if (!inside) return false;
    }
    return true;
  };
  const bool mono = refines(at[1], at[0]) && refines(at[2], at[1]);
  return {at[1].components.size() == 3 && mono,
          fmt("components at 40/60/80: %zu/%zu/%zu; refinement %s", at[0].components.size(), at[1].components.size(),
              at[2].components.size(), mono ? "holds" : "violated")};
}

Outcome kde_entropy() {
  Rng rng(19);
  std::vector<double> xs(50000);
  for (auto& x : xs) x = rng.normal();
  const double h = diversity::kde_entropy(xs);
  return {std::abs(h - kKdeTruth) <= kKdeTol, fmt("H = %.4f nats (target %.4f +- %.2f)", h, kKdeTruth, kKdeTol)};
}

std::vector<causal::SeriesPoint> kink_series(std::uint64_t seed, std::size_t n, double change, double sigma) {
  Rng rng(seed);
  std::vector<causal::SeriesPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = {t, 2.0 + 0.4 * t + change * std::max(t, 0.0) + rng.normal(0.0, sigma)};
  }
  return out;
}

Outcome rkd_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fit = causal::rkd(kink_series(1001, 2000, -0.8, 0.1), 0.0);
  std::size_t rejections = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    rejections += causal::rkd(kink_series(50000 + seed, 2000, 0.0, 0.1), 0.0).p_value < kSizeTarget;
  }
  const double size = static_cast<double>(rejections) / 1000.0;
  const double secs = seconds_since(t0);
  const bool pass = std::abs(fit.slope_change + 0.8) <= kKinkTol && fit.p_value < kKinkAlpha &&
                    std::abs(size - kSizeTarget) <= kSizeTol && secs <= kRkdMaxSeconds;
  return {pass, fmt("slope change %.4f (se %.4f, p %.2g); no-kink rejection rate %.3f", fit.slope_change,
                    fit.slope_change_se, fit.p_value, size)};
}

Outcome statistics_identities() {
  using causal::Matrix;
  using causal::Vector;
  Rng rng(23);
  double worst_orth = 0.0, worst_trace = 0.0, worst_lm = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 20 + static_cast<Eigen::Index>(rng() % 500), k = 2 + static_cast<Eigen::Index>(rng() % 5);
    Matrix x(n, k);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      for (Eigen::Index j = 1; j < k; ++j) x(i, j) = rng.normal();
      y(i) = x.row(i).sum() + rng.normal() * (1.0 + std::abs(x(i, 1)));
    }
    const auto fit = causal::ols(x, y);
    worst_orth = std::max(worst_orth, (x.transpose() * fit.residuals).cwiseAbs().maxCoeff());
    worst_trace = std::max(worst_trace, std::abs(fit.hat_diag.sum() - static_cast<double>(k)));
    const auto bp = causal::breusch_pagan(fit, x);
    worst_lm = std::max(worst_lm, std::abs(bp.lm_stat - static_cast<double>(n) * bp.r_squared));
  }

  Matrix x(4, 2);
  x << 1, 0.0, 1, 1.0, 1, 2.5, 1, 4.0;
  Vector y(4);
  y << 1.0, 2.2, 2.9, 5.3;
  const auto fit = causal::ols(x, y);
  const Matrix xtx_inv = (x.transpose() * x).inverse();
  const Vector e = y - x * (xtx_inv * x.transpose() * y);
  const Matrix h = x * xtx_inv * x.transpose();
  Matrix omega = Matrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) omega(i, i) = e(i) * e(i) / std::pow(1.0 - h(i, i), 2);
  const double hc3_diff =
      (causal::hc3_covariance(fit, x) - xtx_inv * x.transpose() * omega * x * xtx_inv).cwiseAbs().maxCoeff();

  return {worst_orth < kOrthTol && worst_trace < kTraceTol && hc3_diff <= kHc3Tol && worst_lm == 0.0,
          fmt("max |X'e| %.3g, max |tr H - k| %.3g, HC3 4-point diff %.3g, max |LM - nR^2| %.3g", worst_orth,
              worst_trace, hc3_diff, worst_lm)};
}

// Runs each randomized command twice through the CLI and compares the files.
Outcome determinism() {
  const std::vector<std::vector<std::string>> commands = {
      {"simulate-gaussian", "--agents", "11", "--lambda1", "0.33166247903554", "--lambda2", "0.33166247903554",
       "--steps", "10000", "--runs", "15", "--record-every", "500", "--seed", "2025"},
      {"simulate-beta-pair", "--gamma-h", "1.1", "--gamma-a", "1.1", "--theta", "0.5", "--rounds", "10000", "--runs",
       "200", "--record-every", "1000", "--seed", "2025"},
      {"simulate-beta-pair", "--gamma-h", "0", "--gamma-a", "0", "--rounds", "10000", "--runs", "200", "--seed",
       "2025"},
      {"simulate-group-bernoulli", "--agents", "100", "--rounds", "200", "--seed", "2025"},
  };
  std::size_t identical = 0;
  std::string failed;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::string first;
    bool same = true;
    for (int rep = 0; rep < 2; ++rep) {
      auto args = commands[c];
      const auto path = scratch() / fmt("det_%zu_%d.csv", c, rep);
      args.insert(args.end(), {"--out", path.string()});
      std::ostringstream out, err;
      if (cli::run(args, out, err) != 0) {
        same = false;
        failed += " " + commands[c][0] + " failed: " + err.str();
        break;
      }
      const auto bytes = io::read_file(path);
      if (rep == 0) {
        first = bytes;
      } else {
        same = same && bytes == first && !bytes.empty();
      }
    }
    identical += same;
  }
  return {identical == commands.size(), fmt("%zu/%zu outputs byte-identical on rerun%s", identical, commands.size(),
                                            failed.c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"phase-change", phase_change},
      {"spectral-formula", spectral_formula},
      {"beta-pair-lockin", beta_lockin},
      {"lineage-endpoints", lineage_endpoints},
      {"fast-vs-naive", oracle_equivalence},
      {"lineage-performance", lineage_performance},
      {"lcs-semantics", lcs_semantics},
      {"topic-clustering", topic_clustering},
      {"kde-entropy", kde_entropy},
      {"rkd", rkd_recovery},
      {"statistics-identities", statistics_identities},
      {"determinism", determinism},
  };
  std::size_t passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    passed += o.pass;
    std::printf("[%s] %2zu %-22s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", passed, criteria.size());
  fs::remove_all(scratch());
  return passed == criteria.size() ? 0 : 1;
}
