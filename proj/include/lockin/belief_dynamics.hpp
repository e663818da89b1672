#ifndef LOCKIN_BELIEF_DYNAMICS_HPP
#define LOCKIN_BELIEF_DYNAMICS_HPP

// Gaussian multi-agent belief dynamics over a trust matrix.
//
// Each agent keeps a private posterior N(mu_hat, 1/p) from its own noisy
// measurements and an aggregate posterior N(nu_hat, 1/q) that also folds in
// the trust-weighted aggregate precisions of the agents it listens to:
//
//   p'          = p + sigma^-2
//   mu_hat' p'  = mu_hat p + sigma^-2 o
//   q'          = p' + W q
//   nu_hat' q'  = mu_hat' p' + W (nu_hat . q)
//
// The spectral radius of W separates the convergent phase (rho < 1) from the
// lock-in phase (rho > 1).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lockin/error.hpp"
#include "lockin/io.hpp"
#include "lockin/parallel.hpp"
#include "lockin/rng.hpp"

namespace lockin::belief {

/// Square nonnegative matrix; w(i, j) is agent i's trust in agent j's aggregate belief.
class TrustMatrix {
 public:
  TrustMatrix(std::size_t n, std::vector<double> row_major) : n_(n), w_(std::move(row_major)) {
    if (n_ == 0) throw InvalidParameter("trust matrix must have at least one agent");
    if (w_.size() != n_ * n_) {
      throw InvalidParameter("trust matrix data has " + std::to_string(w_.size()) + " entries, expected " +
                             std::to_string(n_ * n_));
    }
    for (std::size_t k = 0; k < w_.size(); ++k) {
      if (!std::isfinite(w_[k]) || w_[k] < 0.0) {
        throw InvalidParameter("trust matrix entry (" + std::to_string(k / n_) + "," + std::to_string(k % n_) +
                               ") must be finite and nonnegative");
      }
    }
  }

  static TrustMatrix zeros(std::size_t n) { return TrustMatrix(n, std::vector<double>(n * n, 0.0)); }

  static TrustMatrix identity(std::size_t n) {
    std::vector<double> w(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
    return TrustMatrix(n, std::move(w));
  }

  static TrustMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    std::vector<double> w;
    w.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != n) {
        throw ValidationError("trust matrix row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                              " columns, expected " + std::to_string(n));
      }
      w.insert(w.end(), rows[i].begin(), rows[i].end());
    }
    if (n == 0) throw ValidationError("trust matrix is empty");
    try {
      return TrustMatrix(n, std::move(w));
    } catch (const InvalidParameter& e) {
      throw ValidationError(e.what());
    }
  }

  /// N rows of N comma-separated floats, no header.
  static TrustMatrix from_csv(std::string_view text) {
    return from_rows(io::parse_numeric_csv(text, "trust matrix"));
  }

  std::string to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (j) out += ',';
        out += io::format_double((*this)(i, j));
      }
      out += '\n';
    }
    return out;
  }

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return w_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const noexcept { return {w_.data() + i * n_, n_}; }
  std::span<const double> data() const noexcept { return w_; }

  bool operator==(const TrustMatrix&) const = default;

 private:
  std::size_t n_;
  std::vector<double> w_;
};

/// Star topology: agent 0 (the AI) trusts every human with lambda1, every
/// human trusts the AI with lambda2, humans ignore one another.
inline TrustMatrix human_llm_trust(std::size_t n_agents, double lambda1, double lambda2) {
  if (n_agents < 2) throw InvalidParameter("star trust matrix needs at least 2 agents");
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !std::isfinite(lambda1) || !std::isfinite(lambda2)) {
    throw InvalidParameter("lambda1 and lambda2 must be positive and finite");
  }
  std::vector<double> w(n_agents * n_agents, 0.0);
  for (std::size_t j = 1; j < n_agents; ++j) w[j] = lambda1;
  for (std::size_t i = 1; i < n_agents; ++i) w[i * n_agents] = lambda2;
  return TrustMatrix(n_agents, std::move(w));
}

inline constexpr double kDefaultSpectralTol = 1e-10;
inline constexpr std::size_t kDefaultSpectralMaxIter = 100000;

namespace detail {

/// Strongly connected components of the support graph of w (Kosaraju).
inline std::vector<std::vector<std::size_t>> strong_components(const TrustMatrix& w) {
  const std::size_t n = w.size();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t root = 0; root < n; ++root) {
    if (seen[root]) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    seen[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < n) {
        const std::size_t u = next++;
        if (w(v, u) != 0.0 && !seen[u]) {
          seen[u] = 1;
          stack.emplace_back(u, 0);
        }
      } else {
        order.push_back(v);
        stack.pop_back();
      }
    }
  }
  std::vector<std::vector<std::size_t>> comps;
  std::vector<char> assigned(n, 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (assigned[*it]) continue;
    std::vector<std::size_t> comp;
    std::vector<std::size_t> stack{*it};
    assigned[*it] = 1;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (std::size_t u = 0; u < n; ++u) {
        if (w(u, v) != 0.0 && !assigned[u]) {
          assigned[u] = 1;
          stack.push_back(u);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

}  // namespace detail

/// Spectral radius by power iteration on W + I.
///
/// For nonnegative W, rho(W) is itself an eigenvalue, so 1 + rho(W) is the
/// strictly dominant eigenvalue of W + I even when W has the +-rho pair of a
/// bipartite graph. rho(W) is the largest rho over the irreducible diagonal
/// blocks, and on an irreducible block W + I is primitive: the positive
/// iterate converges geometrically and the Collatz-Wielandt ratios
/// (Ax)_i / x_i bracket the answer from both sides. Each block is scaled by
/// its largest row sum before shifting.
inline double spectral_radius(const TrustMatrix& w, double tol = kDefaultSpectralTol,
                              std::size_t max_iter = kDefaultSpectralMaxIter) {
  if (!(tol > 0.0)) throw InvalidParameter("spectral tolerance must be positive");
  if (max_iter == 0) throw InvalidParameter("max_iter must be positive");

  double rho = 0.0;
  for (const auto& comp : detail::strong_components(w)) {
    const std::size_t m = comp.size();
    std::vector<double> block(m * m);
    double scale = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      double row_sum = 0.0;
      for (std::size_t b = 0; b < m; ++b) {
        block[a * m + b] = w(comp[a], comp[b]);
        row_sum += block[a * m + b];
      }
      scale = std::max(scale, row_sum);
    }
    if (scale == 0.0) continue;  // single node without a self loop
    for (auto& v : block) v /= scale;
    const double block_tol = tol / scale;

    std::vector<double> x(m, 1.0 / static_cast<double>(m));
    std::vector<double> y(m);
    double lo = 0.0, hi = 0.0;
    bool converged = false;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
      double total = 0.0;
      lo = std::numeric_limits<double>::infinity();
      hi = 0.0;
      for (std::size_t a = 0; a < m; ++a) {
        double acc = x[a];
        for (std::size_t b = 0; b < m; ++b) acc += block[a * m + b] * x[b];
        y[a] = acc;
        total += acc;
        const double ratio = acc / x[a];
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
      }
      if (hi - lo <= block_tol) {
        converged = true;
        break;
      }
      for (std::size_t a = 0; a < m; ++a) x[a] = y[a] / total;
    }
    if (!converged) {
      const double estimate = std::max(0.0, 0.5 * (lo + hi) - 1.0) * scale;
      throw ConvergenceError("power iteration did not converge in " + std::to_string(max_iter) +
                                 " iterations (last estimate " + io::format_double(estimate) + ", bracket width " +
                                 io::format_double((hi - lo) * scale) + ")",
                             estimate, (hi - lo) * scale);
    }
    rho = std::max(rho, std::max(0.0, 0.5 * (lo + hi) - 1.0) * scale);
  }
  return rho;
}

enum class Phase { subcritical, critical, supercritical };

inline const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::subcritical: return "subcritical";
    case Phase::critical: return "critical";
    case Phase::supercritical: return "supercritical";
  }
  return "unknown";
}

struct PhaseVerdict {
  double rho = 0.0;
  Phase phase = Phase::subcritical;
  double tolerance = 0.0;
};

inline constexpr double kDefaultCriticalBand = 1e-9;

/// rho within `tolerance` of 1 is reported as critical rather than guessed.
inline PhaseVerdict classify_phase(const TrustMatrix& w, double tolerance = kDefaultCriticalBand) {
  if (!(tolerance > 0.0)) throw InvalidParameter("phase tolerance must be positive");
  const double rho = spectral_radius(w, tolerance / 10.0);
  Phase phase = Phase::critical;
  if (rho < 1.0 - tolerance) phase = Phase::subcritical;
  else if (rho > 1.0 + tolerance) phase = Phase::supercritical;
  return {rho, phase, tolerance};
}

/// Per-agent beliefs at step t. At t = 0 the aggregate precision is zero and
/// nu_hat is a placeholder 0, marked in `degenerate`.
struct GaussianGroupState {
  std::size_t t = 0;
  std::vector<double> mu_hat;
  std::vector<double> p;
  std::vector<double> nu_hat;
  std::vector<double> q;
  std::vector<double> obs_sum;
  std::vector<bool> degenerate;

  static GaussianGroupState fresh(std::size_t n) {
    GaussianGroupState s;
    s.mu_hat.assign(n, 0.0);
    s.p.assign(n, 0.0);
    s.nu_hat.assign(n, 0.0);
    s.q.assign(n, 0.0);
    s.obs_sum.assign(n, 0.0);
    s.degenerate.assign(n, true);
    return s;
  }

  std::size_t size() const noexcept { return p.size(); }
  bool operator==(const GaussianGroupState&) const = default;
};

namespace detail {
inline void require_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw InvalidParameter(std::string(what) + "[" + std::to_string(i) + "] is not finite");
  }
}
}  // namespace detail

/// One synchronous update of every agent's private and aggregate belief.
///
/// p is kept as t * sigma^-2 and mu_hat as the running sample mean, which is
/// the closed form of the first two recurrences. Agents with an all-zero trust
/// row aggregate nothing, so their aggregate belief is their private one.
inline GaussianGroupState step(const GaussianGroupState& state, const TrustMatrix& w,
                               std::span<const double> observations, std::span<const double> noise_sd) {
  const std::size_t n = state.size();
  if (w.size() != n || observations.size() != n || noise_sd.size() != n || state.mu_hat.size() != n ||
      state.nu_hat.size() != n || state.q.size() != n || state.obs_sum.size() != n) {
    throw InvalidParameter("dimension mismatch in belief step");
  }
  detail::require_finite(observations, "observation");
  detail::require_finite(state.q, "q");
  detail::require_finite(state.nu_hat, "nu_hat");
  detail::require_finite(state.obs_sum, "obs_sum");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(noise_sd[i] > 0.0) || !std::isfinite(noise_sd[i])) {
      throw InvalidParameter("noise_sd[" + std::to_string(i) + "] must be positive and finite");
    }
  }

  GaussianGroupState next;
  next.t = state.t + 1;
  next.mu_hat.resize(n);
  next.p.resize(n);
  next.nu_hat.resize(n);
  next.q.resize(n);
  next.obs_sum.resize(n);
  next.degenerate.assign(n, false);
  const double steps = static_cast<double>(next.t);
  std::vector<std::pair<double, double>> terms;
  terms.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const double inv_var = 1.0 / (noise_sd[i] * noise_sd[i]);
    next.obs_sum[i] = state.obs_sum[i] + observations[i];
    next.p[i] = steps * inv_var;
    next.mu_hat[i] = next.obs_sum[i] / steps;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = w.row(i);
    terms.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (r[j] == 0.0) continue;
      terms.emplace_back(r[j] * state.q[j], r[j] * state.nu_hat[j] * state.q[j]);
    }
    // Summing in sorted order makes the result independent of agent labels.
    std::sort(terms.begin(), terms.end());
    double trusted_precision = 0.0;
    double trusted_mass = 0.0;
    for (const auto& [precision, mass] : terms) {
      trusted_precision += precision;
      trusted_mass += mass;
    }
    if (terms.empty()) {
      next.q[i] = next.p[i];
      next.nu_hat[i] = next.mu_hat[i];
      continue;
    }
    next.q[i] = next.p[i] + trusted_precision;
    if (next.q[i] == 0.0) {
      next.nu_hat[i] = 0.0;
      next.degenerate[i] = true;
      continue;
    }
    next.nu_hat[i] = (next.mu_hat[i] * next.p[i] + trusted_mass) / next.q[i];
    if (!std::isfinite(next.q[i]) || !std::isfinite(next.nu_hat[i])) {
      throw NumericError("aggregate precision overflowed at t=" + std::to_string(next.t) + " for agent " +
                         std::to_string(i));
    }
  }
  return next;
}

using LambdaFn = std::function<double(std::size_t)>;

struct LambdaBounds {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

/// Source of the trust matrix W(t) applied on the transition t -> t+1.
class TrustSchedule {
 public:
  static TrustSchedule constant(TrustMatrix w) {
    TrustSchedule s;
    s.n_ = w.size();
    s.kind_ = Static{std::move(w)};
    return s;
  }

  /// W(t) = tables[t]; asking for t past the end is an error.
  static TrustSchedule tabulated(std::vector<TrustMatrix> tables) {
    if (tables.empty()) throw InvalidParameter("tabulated schedule needs at least one matrix");
    const std::size_t n = tables.front().size();
    for (std::size_t t = 0; t < tables.size(); ++t) {
      if (tables[t].size() != n) throw InvalidParameter("tabulated matrix at t=" + std::to_string(t) + " has wrong size");
    }
    TrustSchedule s;
    s.n_ = n;
    s.kind_ = Tabulated{std::move(tables)};
    return s;
  }

  static TrustSchedule parametric(std::size_t n_agents, LambdaFn lambda1, LambdaFn lambda2, LambdaBounds bounds) {
    if (n_agents < 2) throw InvalidParameter("star schedule needs at least 2 agents");
    if (!lambda1 || !lambda2) throw InvalidParameter("lambda functions must be set");
    if (!(bounds.lower > 0.0) || !(bounds.lower < bounds.upper) || !std::isfinite(bounds.upper)) {
      throw InvalidParameter("lambda bounds must satisfy 0 < L < U < inf");
    }
    TrustSchedule s;
    s.n_ = n_agents;
    s.kind_ = Parametric{std::move(lambda1), std::move(lambda2), bounds};
    return s;
  }

  std::size_t agents() const noexcept { return n_; }

  TrustMatrix at(std::size_t t) const {
    if (const auto* s = std::get_if<Static>(&kind_)) return s->w;
    if (const auto* tab = std::get_if<Tabulated>(&kind_)) {
      if (t >= tab->tables.size()) {
        throw InvalidParameter("tabulated schedule has no matrix for t=" + std::to_string(t));
      }
      return tab->tables[t];
    }
    const auto& par = std::get<Parametric>(kind_);
    const double l1 = par.lambda1(t);
    const double l2 = par.lambda2(t);
    for (double l : {l1, l2}) {
      if (!std::isfinite(l) || l < par.bounds.lower || l > par.bounds.upper) {
        throw InvalidParameter("lambda value " + io::format_double(l) + " at t=" + std::to_string(t) +
                               " is outside [" + io::format_double(par.bounds.lower) + ", " +
                               io::format_double(par.bounds.upper) + "]");
      }
    }
    return human_llm_trust(n_, l1, l2);
  }

 private:
  struct Static {
    TrustMatrix w;
  };
  struct Tabulated {
    std::vector<TrustMatrix> tables;
  };
  struct Parametric {
    LambdaFn lambda1;
    LambdaFn lambda2;
    LambdaBounds bounds;
  };

  TrustSchedule() = default;

  std::size_t n_ = 0;
  std::variant<Static, Tabulated, Parametric> kind_{Static{TrustMatrix::zeros(1)}};
};

/// Star matrices W(t) from time-varying trust levels, each required to stay in [L, U].
inline TrustSchedule time_varying_schedule(std::size_t n_agents, LambdaFn lambda1, LambdaFn lambda2,
                                           LambdaBounds bounds) {
  return TrustSchedule::parametric(n_agents, std::move(lambda1), std::move(lambda2), bounds);
}

struct SimulationConfig {
  std::size_t n_agents = 11;
  double ground_truth = 0.0;
  std::vector<double> noise_sd;  // empty means sigma = 1 for every agent
  std::size_t steps = 10000;
  std::size_t runs = 15;
  std::uint64_t seed = 0;
  TrustSchedule schedule = TrustSchedule::constant(TrustMatrix::zeros(11));
  std::size_t record_every = 1;  // the final step is always recorded
  std::size_t threads = 1;
  /// Agent i draws observations from substream stream_of_agent[i]; empty means identity.
  std::vector<std::size_t> stream_of_agent;

  std::vector<double> resolved_noise_sd() const {
    return noise_sd.empty() ? std::vector<double>(n_agents, 1.0) : noise_sd;
  }

  void validate() const {
    if (n_agents == 0) throw InvalidParameter("n_agents must be positive");
    if (steps == 0) throw InvalidParameter("steps must be at least 1");
    if (runs == 0) throw InvalidParameter("runs must be at least 1");
    if (record_every == 0) throw InvalidParameter("record_every must be at least 1");
    if (!std::isfinite(ground_truth)) throw InvalidParameter("ground truth must be finite");
    if (schedule.agents() != n_agents) throw InvalidParameter("schedule agent count does not match n_agents");
    if (!noise_sd.empty() && noise_sd.size() != n_agents) throw InvalidParameter("noise_sd needs one entry per agent");
    for (double s : noise_sd) {
      if (!(s > 0.0) || !std::isfinite(s)) throw InvalidParameter("noise_sd entries must be positive");
    }
    if (!stream_of_agent.empty()) {
      if (stream_of_agent.size() != n_agents) throw InvalidParameter("stream_of_agent needs one entry per agent");
      std::vector<std::size_t> sorted = stream_of_agent;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw InvalidParameter("stream_of_agent entries must be distinct");
      }
    }
  }
};

struct TrajectoryRecord {
  std::size_t run = 0;
  std::size_t t = 0;
  std::vector<double> mu_hat;
  std::vector<double> p;
  std::vector<double> nu_hat;
  std::vector<double> q;
  double mean_abs_error = 0.0;  // mean over agents of |nu_hat - ground truth|

  bool operator==(const TrajectoryRecord&) const = default;
};

/// Observation substream of one agent in one run.
inline Rng observation_stream(std::uint64_t seed, std::size_t run, std::size_t stream) {
  return Rng(seed, run, stream);
}

/// Simulates one run; records are ordered by t.
inline std::vector<TrajectoryRecord> simulate_run(const SimulationConfig& config, std::size_t run) {
  const std::size_t n = config.n_agents;
  const auto sd = config.resolved_noise_sd();
  std::vector<Rng> streams;
  streams.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t key = config.stream_of_agent.empty() ? i : config.stream_of_agent[i];
    streams.push_back(observation_stream(config.seed, run, key));
  }
  std::vector<TrajectoryRecord> out;
  out.reserve(config.steps / config.record_every + 1);
  auto state = GaussianGroupState::fresh(n);
  std::vector<double> obs(n);
  for (std::size_t t = 0; t < config.steps; ++t) {
    std::optional<TrustMatrix> w;
    try {
      w.emplace(config.schedule.at(t));
    } catch (const InvalidParameter& e) {
      throw InvalidParameter(std::string("invalid trust matrix at t=") + std::to_string(t) + ": " + e.what());
    }
    if (w->size() != n) throw InvalidParameter("trust matrix at t=" + std::to_string(t) + " has wrong size");
    for (std::size_t i = 0; i < n; ++i) obs[i] = streams[i].normal(config.ground_truth, sd[i]);
    state = step(state, *w, obs, sd);
    if (state.t % config.record_every == 0 || state.t == config.steps) {
      TrajectoryRecord rec{run, state.t, state.mu_hat, state.p, state.nu_hat, state.q, 0.0};
      double err = 0.0;
      for (double v : state.nu_hat) err += std::abs(v - config.ground_truth);
      rec.mean_abs_error = err / static_cast<double>(n);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

/// Independent runs, canonically ordered by (run, t) whatever the thread count.
inline std::vector<TrajectoryRecord> simulate(const SimulationConfig& config) {
  config.validate();
  std::vector<std::vector<TrajectoryRecord>> per_run(config.runs);
  parallel_for(config.runs, config.threads, [&](std::size_t run) { per_run[run] = simulate_run(config, run); });
  std::vector<TrajectoryRecord> out;
  for (auto& r : per_run) {
    out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  return out;
}

inline constexpr std::string_view kTrajectoryHeader = "run,t,agent,mu_hat,p,nu_hat,q";

inline std::string trajectory_csv(std::span<const TrajectoryRecord> records) {
  std::string out(kTrajectoryHeader);
  out += '\n';
  for (const auto& rec : records) {
    for (std::size_t i = 0; i < rec.p.size(); ++i) {
      out += std::to_string(rec.run);
      out += ',';
      out += std::to_string(rec.t);
      out += ',';
      out += std::to_string(i);
      for (double v : {rec.mu_hat[i], rec.p[i], rec.nu_hat[i], rec.q[i]}) {
        out += ',';
        out += io::format_double(v);
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace lockin::belief

#endif  // LOCKIN_BELIEF_DYNAMICS_HPP
