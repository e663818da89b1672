#ifndef LOCKIN_BERNOULLI_MODELS_HPP
#define LOCKIN_BERNOULLI_MODELS_HPP

// Beta-Bernoulli belief models.
//
// The pair model has a human and an AI that each see one coin toss per round
// and, believing the partner's evidence to be independent of their own, add
// gamma times the partner's Beta parameters to their own counts. With
// gamma_h * gamma_a > 1 the counts grow geometrically and the posterior mean
// freezes near a value set by the first few tosses.
//
// Parameters grow like gamma^round, so states store them relative to a shared
// power-of-two scale: the represented value of a stored parameter x is
// x * 2^log2_scale. Rescaling by powers of two is exact.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lockin/error.hpp"
#include "lockin/io.hpp"
#include "lockin/parallel.hpp"
#include "lockin/rng.hpp"

namespace lockin::bernoulli {

/// Counts of a Beta(a + 1, b + 1) posterior, in units of the owning state's scale.
struct BetaBelief {
  double a = 0.0;
  double b = 0.0;

  bool operator==(const BetaBelief&) const = default;
};

/// Mean of Beta(a + 1, b + 1) where the true parameters are (a, b) * 2^log2_scale.
inline double posterior_mean(const BetaBelief& belief, long long log2_scale = 0) {
  const double one = std::ldexp(1.0, static_cast<int>(-log2_scale));
  return (belief.a + one) / (belief.a + belief.b + 2.0 * one);
}

namespace detail {
inline constexpr int kRescaleExponent = 512;
inline constexpr double kRescaleThreshold = 0x1.0p+600;
}  // namespace detail

struct ObservationSums {
  std::uint64_t successes = 0;
  std::uint64_t failures = 0;

  bool operator==(const ObservationSums&) const = default;
};

struct PairState {
  std::size_t round = 0;
  BetaBelief human;
  BetaBelief ai;
  ObservationSums human_obs;
  ObservationSums ai_obs;
  long long log2_scale = 0;

  double human_mean() const { return posterior_mean(human, log2_scale); }
  double ai_mean() const { return posterior_mean(ai, log2_scale); }
  bool operator==(const PairState&) const = default;
};

/// One simultaneous round: a_X' = gamma_X a_partner + sum of X's successes,
/// likewise b with failures, using the partner's pre-round values.
inline PairState beta_pair_step(const PairState& state, double gamma_h, double gamma_a, bool o_h, bool o_a) {
  if (!(gamma_h >= 0.0) || !(gamma_a >= 0.0) || !std::isfinite(gamma_h) || !std::isfinite(gamma_a)) {
    throw InvalidParameter("trust parameters gamma_h and gamma_a must be finite and nonnegative");
  }
  PairState next = state;
  next.round = state.round + 1;
  next.human_obs.successes += o_h ? 1 : 0;
  next.human_obs.failures += o_h ? 0 : 1;
  next.ai_obs.successes += o_a ? 1 : 0;
  next.ai_obs.failures += o_a ? 0 : 1;

  const int down = static_cast<int>(-state.log2_scale);
  auto scaled = [down](std::uint64_t count) { return std::ldexp(static_cast<double>(count), down); };
  next.human.a = gamma_h * state.ai.a + scaled(next.human_obs.successes);
  next.human.b = gamma_h * state.ai.b + scaled(next.human_obs.failures);
  next.ai.a = gamma_a * state.human.a + scaled(next.ai_obs.successes);
  next.ai.b = gamma_a * state.human.b + scaled(next.ai_obs.failures);

  const double largest = std::max({next.human.a, next.human.b, next.ai.a, next.ai.b});
  if (largest > detail::kRescaleThreshold) {
    for (double* v : {&next.human.a, &next.human.b, &next.ai.a, &next.ai.b}) {
      *v = std::ldexp(*v, -detail::kRescaleExponent);
    }
    next.log2_scale += detail::kRescaleExponent;
  }
  return next;
}

struct BetaRow {
  std::size_t run = 0;
  std::size_t round = 0;
  std::string agent;
  BetaBelief belief;
  long long log2_scale = 0;
  double posterior_mean = 0.0;

  bool operator==(const BetaRow&) const = default;
};

struct BetaPairConfig {
  double theta = 0.5;
  double gamma_h = 1.0;
  double gamma_a = 1.0;
  std::size_t rounds = 10000;
  std::size_t runs = 200;
  std::uint64_t seed = 0;
  double epsilon = 0.05;
  std::size_t record_every = 0;  // 0 records only the final round
  std::size_t threads = 1;

  void validate() const {
    if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidParameter("theta must lie in [0, 1]");
    if (!(gamma_h >= 0.0) || !(gamma_a >= 0.0) || !std::isfinite(gamma_h) || !std::isfinite(gamma_a)) {
      throw InvalidParameter("trust parameters gamma_h and gamma_a must be finite and nonnegative");
    }
    if (rounds == 0) throw InvalidParameter("rounds must be at least 1");
    if (runs == 0) throw InvalidParameter("runs must be at least 1");
    if (!(epsilon > 0.0)) throw InvalidParameter("epsilon must be positive");
  }
};

struct BetaPairResult {
  std::vector<BetaRow> trajectories;
  std::vector<double> final_human_means;  // one per run
  double lockin_rate = 0.0;                // share of runs ending with |mean - theta| > epsilon
};

/// Runs independent pairs. Human tosses come from substream (seed, run, 0),
/// AI tosses from (seed, run, 1).
inline BetaPairResult beta_pair_simulate(const BetaPairConfig& config) {
  config.validate();
  std::vector<std::vector<BetaRow>> rows(config.runs);
  std::vector<double> finals(config.runs);
  parallel_for(config.runs, config.threads, [&](std::size_t run) {
    Rng human_stream(config.seed, run, 0);
    Rng ai_stream(config.seed, run, 1);
    PairState state;
    for (std::size_t r = 0; r < config.rounds; ++r) {
      const bool o_h = human_stream.bernoulli(config.theta);
      const bool o_a = ai_stream.bernoulli(config.theta);
      state = beta_pair_step(state, config.gamma_h, config.gamma_a, o_h, o_a);
      const bool record = state.round == config.rounds || (config.record_every && state.round % config.record_every == 0);
      if (record) {
        rows[run].push_back({run, state.round, "human", state.human, state.log2_scale, state.human_mean()});
        rows[run].push_back({run, state.round, "ai", state.ai, state.log2_scale, state.ai_mean()});
      }
    }
    finals[run] = state.human_mean();
  });
  BetaPairResult result;
  std::size_t locked = 0;
  for (std::size_t run = 0; run < config.runs; ++run) {
    result.trajectories.insert(result.trajectories.end(), rows[run].begin(), rows[run].end());
    if (std::abs(finals[run] - config.theta) > config.epsilon) ++locked;
  }
  result.final_human_means = std::move(finals);
  result.lockin_rate = static_cast<double>(locked) / static_cast<double>(config.runs);
  return result;
}

/// N agents and an authority whose belief is the arithmetic mean of theirs.
struct GroupBernoulliState {
  std::size_t round = 0;
  std::vector<BetaBelief> beliefs;
  BetaBelief authority;
  long long log2_scale = 0;

  bool operator==(const GroupBernoulliState&) const = default;
};

struct GroupBernoulliConfig {
  std::size_t n_agents = 100;
  double trust_in_authority = 1.0;
  double theta = 0.5;
  std::size_t rounds = 200;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_agents < 2) throw InvalidParameter("group model needs at least 2 agents");
    if (!(trust_in_authority >= 0.0) || !std::isfinite(trust_in_authority)) {
      throw InvalidParameter("trust_in_authority must be finite and nonnegative");
    }
    if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidParameter("theta must lie in [0, 1]");
    if (rounds == 0) throw InvalidParameter("rounds must be at least 1");
  }
};

/// One broadcast round. Each agent adds its toss and trust * authority to its
/// counts; the authority's earlier contribution is never removed, so agents
/// re-count their own past evidence. The authority then re-averages.
inline GroupBernoulliState group_bernoulli_step(const GroupBernoulliState& state, double trust,
                                                const std::vector<bool>& tosses) {
  if (tosses.size() != state.beliefs.size()) throw InvalidParameter("one toss per agent required");
  GroupBernoulliState next = state;
  next.round = state.round + 1;
  const double unit = std::ldexp(1.0, static_cast<int>(-state.log2_scale));
  double largest = 0.0;
  for (std::size_t i = 0; i < next.beliefs.size(); ++i) {
    auto& b = next.beliefs[i];
    b.a += (tosses[i] ? unit : 0.0) + trust * state.authority.a;
    b.b += (tosses[i] ? 0.0 : unit) + trust * state.authority.b;
    largest = std::max({largest, b.a, b.b});
  }
  if (largest > detail::kRescaleThreshold) {
    for (auto& b : next.beliefs) {
      b.a = std::ldexp(b.a, -detail::kRescaleExponent);
      b.b = std::ldexp(b.b, -detail::kRescaleExponent);
    }
    next.log2_scale += detail::kRescaleExponent;
  }
  double sum_a = 0.0, sum_b = 0.0;
  for (const auto& b : next.beliefs) {
    sum_a += b.a;
    sum_b += b.b;
  }
  const double n = static_cast<double>(next.beliefs.size());
  next.authority = {sum_a / n, sum_b / n};
  return next;
}

/// States after rounds 1..rounds. Agent i tosses from substream (seed, 0, i).
inline std::vector<GroupBernoulliState> group_bernoulli_simulate(const GroupBernoulliConfig& config) {
  config.validate();
  std::vector<Rng> streams;
  streams.reserve(config.n_agents);
  for (std::size_t i = 0; i < config.n_agents; ++i) streams.emplace_back(config.seed, 0, i);
  GroupBernoulliState state;
  state.beliefs.assign(config.n_agents, BetaBelief{});
  std::vector<GroupBernoulliState> out;
  out.reserve(config.rounds);
  std::vector<bool> tosses(config.n_agents);
  for (std::size_t r = 0; r < config.rounds; ++r) {
    for (std::size_t i = 0; i < config.n_agents; ++i) tosses[i] = streams[i].bernoulli(config.theta);
    state = group_bernoulli_step(state, config.trust_in_authority, tosses);
    out.push_back(state);
  }
  return out;
}

inline std::vector<double> agent_means(const GroupBernoulliState& state) {
  std::vector<double> m;
  m.reserve(state.beliefs.size());
  for (const auto& b : state.beliefs) m.push_back(posterior_mean(b, state.log2_scale));
  return m;
}

inline constexpr const char* kBetaHeader = "run,round,agent,a,b,posterior_mean";

inline void append_row(std::string& out, std::size_t run, std::size_t round, const std::string& agent,
                       const BetaBelief& belief, long long log2_scale, double mean) {
  out += std::to_string(run);
  out += ',';
  out += std::to_string(round);
  out += ',';
  out += agent;
  out += ',';
  out += io::format_scaled(belief.a, log2_scale);
  out += ',';
  out += io::format_scaled(belief.b, log2_scale);
  out += ',';
  out += io::format_double(mean);
  out += '\n';
}

inline std::string beta_pair_csv(const std::vector<BetaRow>& rows) {
  std::string out = std::string(kBetaHeader) + "\n";
  for (const auto& r : rows) append_row(out, r.run, r.round, r.agent, r.belief, r.log2_scale, r.posterior_mean);
  return out;
}

/// Group trajectory; the authority row uses agent id "authority".
inline std::string group_csv(const std::vector<GroupBernoulliState>& states, std::size_t record_every = 1) {
  std::string out = std::string(kBetaHeader) + "\n";
  for (const auto& s : states) {
    if (record_every > 1 && s.round % record_every != 0 && &s != &states.back()) continue;
    for (std::size_t i = 0; i < s.beliefs.size(); ++i) {
      append_row(out, 0, s.round, std::to_string(i), s.beliefs[i], s.log2_scale,
                 posterior_mean(s.beliefs[i], s.log2_scale));
    }
    append_row(out, 0, s.round, "authority", s.authority, s.log2_scale, posterior_mean(s.authority, s.log2_scale));
  }
  return out;
}

}  // namespace lockin::bernoulli

#endif  // LOCKIN_BERNOULLI_MODELS_HPP
