#ifndef LOCKIN_CLI_HPP
#define LOCKIN_CLI_HPP

// Batch front end. `run` parses the arguments, executes one subcommand and
// maps library errors onto exit codes:
//   0 success, 1 usage, 2 data or validation, 3 numeric or convergence.
// Errors go to the error stream as one JSON object per line.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lockin/belief_dynamics.hpp"
#include "lockin/bernoulli_models.hpp"
#include "lockin/causal.hpp"
#include "lockin/diversity.hpp"
#include "lockin/error.hpp"
#include "lockin/hierarchy.hpp"
#include "lockin/io.hpp"
#include "lockin/topic_id.hpp"

namespace lockin::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_parameter: return kExitUsage;
    case ErrorKind::validation:
    case ErrorKind::io: return kExitData;
    case ErrorKind::convergence:
    case ErrorKind::numeric: return kExitNumeric;
  }
  return kExitData;
}

namespace detail {

inline void error_record(std::ostream& err, std::string_view kind, int code, std::string_view message,
                         const std::function<void(nlohmann::ordered_json&)>& extra = {}) {
  nlohmann::ordered_json rec;
  rec["error"] = kind;
  rec["exit_code"] = code;
  rec["message"] = message;
  if (extra) extra(rec);
  err << rec.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

inline std::string flag_name(std::string_view token) {
  const auto eq = token.find('=');
  return std::string(token.substr(0, eq));
}

/// Strips `--params FILE` and appends its keys as flags that are not already
/// given on the command line.
inline std::vector<std::string> merge_params(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--params") {
      if (i + 1 >= args.size()) throw InvalidParameter("--params needs a file argument");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--params=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!path) return args;

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_file(*path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("params file '" + *path + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ValidationError("params file '" + *path + "' must hold a flat JSON object");

  std::vector<std::string> present;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0) present.push_back(flag_name(a));
  }
  for (const auto& [key, value] : doc.items()) {
    std::string flag = key;
    while (!flag.empty() && flag.front() == '-') flag.erase(flag.begin());
    std::replace(flag.begin(), flag.end(), '_', '-');
    flag = "--" + flag;
    if (std::find(present.begin(), present.end(), flag) != present.end()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(value.dump());
    } else {
      throw InvalidParameter("params key '" + key + "' must be a string, number or boolean");
    }
  }
  return args;
}

/// Writes the payload to `path`, or to `out` when no path was given.
inline void emit(const std::string& path, std::string_view payload, std::ostream& out) {
  if (path.empty()) {
    out << payload;
  } else {
    io::write_file_atomic(path, payload);
  }
}

inline std::string kv(std::string_view key, double v) { return std::string(key) + "=" + io::format_double(v) + "\n"; }

template <typename T>
std::string kv(std::string_view key, const T& v) {
  std::ostringstream ss;
  ss << key << '=' << v << '\n';
  return ss.str();
}

/// Piecewise-constant trust levels from a CSV with header "t,lambda1,lambda2";
/// each row holds from its t until the next row.
inline belief::TrustSchedule lambda_schedule(std::size_t agents, std::string_view text) {
  const auto rows = io::lines(text);
  if (rows.empty()) throw ValidationError("lambda schedule is empty");
  const auto header = io::split(rows.front(), ',');
  if (header.size() != 3 || io::trim(header[0]) != "t" || io::trim(header[1]) != "lambda1" ||
      io::trim(header[2]) != "lambda2") {
    throw ValidationError("lambda schedule header must be \"t,lambda1,lambda2\"");
  }
  std::vector<double> ts, l1, l2;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = io::split(rows[i], ',');
    const std::string where = "lambda schedule line " + std::to_string(i + 1);
    if (cells.size() != 3) throw ValidationError(where + " needs three columns");
    ts.push_back(io::parse_double(cells[0], where));
    l1.push_back(io::parse_double(cells[1], where));
    l2.push_back(io::parse_double(cells[2], where));
    if (ts.size() == 1 && ts[0] != 0.0) throw ValidationError("lambda schedule must start at t=0");
    if (ts.size() > 1 && !(ts.back() > ts[ts.size() - 2])) throw ValidationError(where + ": t must increase");
  }
  if (ts.empty()) throw ValidationError("lambda schedule has no rows");
  double lo = INFINITY, hi = 0.0;
  for (double v : l1) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : l2) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(lo > 0.0)) throw ValidationError("lambda schedule values must be positive");
  const auto pick = [ts](std::vector<double> values) {
    return [ts, values = std::move(values)](std::size_t t) {
      const auto it = std::upper_bound(ts.begin(), ts.end(), static_cast<double>(t));
      return values[static_cast<std::size_t>(it - ts.begin()) - 1];
    };
  };
  const double upper = hi > lo ? hi : 2.0 * hi;
  return belief::time_varying_schedule(agents, pick(l1), pick(l2), {lo, upper});
}

/// Trust matrix from `--trust-file` or the star flags.
struct TrustSource {
  std::string file;
  std::size_t agents = 11;
  double lambda1 = 0.0;
  double lambda2 = 0.0;

  void add_to(CLI::App* sub, CLI::Option** file_opt = nullptr) {
    auto* f = sub->add_option("--trust-file", file, "N x N trust matrix CSV without header (overrides the star flags)");
    if (file_opt) *file_opt = f;
    sub->add_option("--agents", agents, "number of agents N in the star matrix (agent 0 is the AI)")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
    sub->add_option("--lambda1", lambda1, "trust of the AI in each human")->check(CLI::NonNegativeNumber);
    sub->add_option("--lambda2", lambda2, "trust of each human in the AI")->check(CLI::NonNegativeNumber);
  }

  belief::TrustMatrix matrix() const {
    if (!file.empty()) return belief::TrustMatrix::from_csv(io::read_file(file));
    return belief::human_llm_trust(agents, lambda1, lambda2);
  }
};

}  // namespace detail

/// Runs one command line (program name excluded).
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  using detail::kv;
  CLI::App app{"Lock-in toolkit: belief-dynamics simulation, concept hierarchies, diversity metrics, topic "
               "identification and regression kink analysis.\nAny subcommand accepts --params FILE.json, a flat "
               "object of flag values; flags given on the command line win.",
               "lockin"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", "lockin 1.0.0");

  std::function<void()> action;
  auto on = [&](CLI::App* sub, std::function<void()> f) {
    sub->callback([&action, f = std::move(f)] { action = f; });
  };

  std::string out_path;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  auto add_out = [&](CLI::App* sub, const char* what) { sub->add_option("--out", out_path, what); };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "64-bit random seed"); };
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "worker threads; output is identical for any value")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1024}));
  };

  // simulate-gaussian
  detail::TrustSource g_trust;
  std::string g_schedule;
  double g_truth = 0.0;
  std::vector<double> g_noise{1.0};
  std::size_t g_steps = 10000, g_runs = 15, g_record = 1;
  {
    auto* sub = app.add_subcommand("simulate-gaussian",
                                   "Gaussian belief dynamics with trust-weighted aggregation. Writes CSV "
                                   "run,t,agent,mu_hat,p,nu_hat,q.");
    CLI::Option* file_opt = nullptr;
    g_trust.add_to(sub, &file_opt);
    sub->add_option("--lambda-schedule", g_schedule,
                    "time-varying star trust: CSV with header t,lambda1,lambda2, piecewise constant from each t")
        ->excludes(file_opt);
    sub->add_option("--ground-truth", g_truth, "true value mu");
    sub->add_option("--noise-sd", g_noise, "observation noise sd, one value or one per agent")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    sub->add_option("--steps", g_steps, "time steps T")->check(CLI::PositiveNumber);
    sub->add_option("--runs", g_runs, "independent runs")->check(CLI::PositiveNumber);
    sub->add_option("--record-every", g_record, "record every k-th step (the last step is always kept)")
        ->check(CLI::PositiveNumber);
    add_seed(sub);
    add_threads(sub);
    add_out(sub, "trajectory CSV path (stdout if omitted)");
    on(sub, [&] {
      belief::SimulationConfig cfg;
      std::optional<belief::PhaseVerdict> verdict;
      if (!g_schedule.empty()) {
        cfg.n_agents = g_trust.agents;
        cfg.schedule = detail::lambda_schedule(g_trust.agents, io::read_file(g_schedule));
      } else {
        auto w = g_trust.matrix();
        cfg.n_agents = w.size();
        verdict = belief::classify_phase(w);
        cfg.schedule = belief::TrustSchedule::constant(std::move(w));
      }
      if (g_noise.size() == 1) {
        cfg.noise_sd.assign(cfg.n_agents, g_noise[0]);
      } else {
        cfg.noise_sd = g_noise;
      }
      cfg.ground_truth = g_truth;
      cfg.steps = g_steps;
      cfg.runs = g_runs;
      cfg.record_every = g_record;
      cfg.seed = seed;
      cfg.threads = threads;
      cfg.validate();
      const auto records = belief::simulate(cfg);
      detail::emit(out_path, belief::trajectory_csv(records), out);
      if (out_path.empty()) return;
      if (verdict) out << kv("rho", verdict->rho) << kv("phase", belief::to_string(verdict->phase));
      for (const auto& r : records) {
        if (r.t != cfg.steps) continue;
        out << "run=" << r.run << " nu_hat_0=" << io::format_double(r.nu_hat[0])
            << " mean_abs_error=" << io::format_double(r.mean_abs_error) << '\n';
      }
    });
  }

  // simulate-beta-pair
  bernoulli::BetaPairConfig bp;
  {
    auto* sub = app.add_subcommand("simulate-beta-pair",
                                   "Human and AI Beta-Bernoulli beliefs with mutual trust. Writes CSV "
                                   "run,round,agent,a,b,posterior_mean and reports the lock-in rate.");
    sub->add_option("--theta", bp.theta, "Bernoulli success probability")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--gamma-h", bp.gamma_h, "human trust in the AI")->check(CLI::NonNegativeNumber);
    sub->add_option("--gamma-a", bp.gamma_a, "AI trust in the human")->check(CLI::NonNegativeNumber);
    sub->add_option("--rounds", bp.rounds, "rounds per run")->check(CLI::PositiveNumber);
    sub->add_option("--runs", bp.runs, "independent runs")->check(CLI::PositiveNumber);
    sub->add_option("--epsilon", bp.epsilon, "lock-in radius around theta")->check(CLI::PositiveNumber);
    sub->add_option("--record-every", bp.record_every, "record every k-th round; 0 keeps only the final round");
    add_seed(sub);
    add_threads(sub);
    add_out(sub, "trajectory CSV path (stdout if omitted)");
    on(sub, [&] {
      bp.seed = seed;
      bp.threads = threads;
      const auto res = bernoulli::beta_pair_simulate(bp);
      detail::emit(out_path, bernoulli::beta_pair_csv(res.trajectories), out);
      if (!out_path.empty()) out << kv("lockin_rate", res.lockin_rate);
    });
  }

  // simulate-group-bernoulli
  bernoulli::GroupBernoulliConfig gb;
  std::size_t gb_record = 1;
  {
    auto* sub = app.add_subcommand("simulate-group-bernoulli",
                                   "Agents with Beta beliefs that broadcast to an averaging authority. Writes CSV "
                                   "run,round,agent,a,b,posterior_mean (agent \"authority\" for the authority).");
    sub->add_option("--agents", gb.n_agents, "number of agents")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 24));
    sub->add_option("--trust", gb.trust_in_authority, "agent trust in the authority")->check(CLI::NonNegativeNumber);
    sub->add_option("--theta", gb.theta, "Bernoulli success probability")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--rounds", gb.rounds, "rounds")->check(CLI::PositiveNumber);
    sub->add_option("--record-every", gb_record, "record every k-th round (the last is always kept)")
        ->check(CLI::PositiveNumber);
    add_seed(sub);
    add_out(sub, "trajectory CSV path (stdout if omitted)");
    on(sub, [&] {
      gb.seed = seed;
      const auto states = bernoulli::group_bernoulli_simulate(gb);
      detail::emit(out_path, bernoulli::group_csv(states, gb_record), out);
      if (out_path.empty()) return;
      const auto& last = states.back();
      const auto means = bernoulli::agent_means(last);
      double avg = 0.0;
      for (double m : means) avg += m;
      out << kv("authority_mean", bernoulli::posterior_mean(last.authority, last.log2_scale))
          << kv("agent_mean", avg / static_cast<double>(means.size()));
    });
  }

  // spectral
  detail::TrustSource s_trust;
  double s_tol = belief::kDefaultCriticalBand;
  {
    auto* sub = app.add_subcommand("spectral", "Spectral radius and lock-in phase of a trust matrix.");
    s_trust.add_to(sub);
    sub->add_option("--tolerance", s_tol, "half-width of the critical band around rho = 1")
        ->check(CLI::NonNegativeNumber);
    on(sub, [&] {
      const auto v = belief::classify_phase(s_trust.matrix(), s_tol);
      out << kv("rho", v.rho) << kv("phase", belief::to_string(v.phase));
    });
  }

  // hierarchy-build
  std::string h_emb, h_linkage = "average", h_metric = "cosine";
  {
    auto* sub = app.add_subcommand("hierarchy-build",
                                   "Agglomerative concept tree from embeddings JSONL ({\"id\",\"vec\",\"label\"?} per line). Writes tree "
                                   "JSON {\"nodes\":[{\"id\",\"parent\",\"label\"},...]}.");
    sub->add_option("--embeddings", h_emb, "embeddings JSONL file")->required();
    sub->add_option("--linkage", h_linkage, "average, complete or single")
        ->check(CLI::IsMember({"average", "complete", "single"}));
    sub->add_option("--metric", h_metric, "cosine or euclidean")->check(CLI::IsMember({"cosine", "euclidean"}));
    add_out(sub, "tree JSON path (stdout if omitted)");
    on(sub, [&] {
      const auto emb = hierarchy::load_embeddings(io::read_file(h_emb));
      const auto tree = hierarchy::build_agglomerative(emb, hierarchy::parse_linkage(h_linkage),
                                                       hierarchy::parse_metric(h_metric));
      detail::emit(out_path, hierarchy::save_tree(tree), out);
    });
  }

  // hierarchy-validate
  std::string v_tree;
  {
    auto* sub = app.add_subcommand("hierarchy-validate", "Checks a tree JSON file and prints its shape.");
    sub->add_option("--tree", v_tree, "tree JSON")->required();
    on(sub, [&] {
      const auto tree = hierarchy::load_tree(io::read_file(v_tree));
      std::uint32_t height = 0;
      for (hierarchy::NodeId v = 0; v < tree.node_count(); ++v) height = std::max(height, tree.depth(v));
      out << kv("valid", "true") << kv("nodes", tree.node_count()) << kv("leaves", tree.leaf_total())
          << kv("root", tree.root()) << kv("height", height)
          << kv("unary_nodes", tree.has_unary_nodes() ? "true" : "false");
    });
  }

  // diversity
  std::string d_tree, d_corpus, d_metric = "lineage", d_filter = "all", d_samples;
  std::int64_t d_window = 0;
  double d_topic_frac = 0.01;
  std::optional<double> d_bandwidth;
  {
    auto* sub = app.add_subcommand(
        "diversity",
        "Windowed corpus diversity. Writes CSV window_start,window_end,metric,value,n; windows without a value "
        "print null and a note on stderr. With --metric kde_entropy, reads --samples instead.");
    sub->add_option("--tree", d_tree, "tree JSON");
    sub->add_option("--corpus", d_corpus,
                    "corpus JSONL: one {time, leaf, conversation?, value_laden?} object per line");
    sub->add_option("--metric", d_metric, "lineage, depth, topic_entropy, jaccard or kde_entropy")
        ->check(CLI::IsMember({"lineage", "depth", "topic_entropy", "jaccard", "kde_entropy"}));
    sub->add_option("--window", d_window, "window length in seconds; 0 uses one window over the whole corpus")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--filter", d_filter, "all or value_laden")->check(CLI::IsMember({"all", "value_laden"}));
    sub->add_option("--topic-frac", d_topic_frac, "topic size bound as a fraction of all leaves")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--samples", d_samples, "one-column numeric CSV for kde_entropy");
    sub->add_option("--bandwidth", d_bandwidth, "KDE bandwidth (Silverman's rule if omitted)")
        ->check(CLI::PositiveNumber);
    add_threads(sub);
    add_out(sub, "report CSV path (stdout if omitted)");
    on(sub, [&] {
      if (d_metric == "kde_entropy") {
        if (d_samples.empty()) throw InvalidParameter("kde_entropy needs --samples");
        std::vector<double> xs;
        for (const auto& row : io::parse_numeric_csv(io::read_file(d_samples), "samples")) {
          if (row.size() != 1) throw ValidationError("samples CSV must have one column");
          xs.push_back(row[0]);
        }
        detail::emit(out_path, kv("kde_entropy", diversity::kde_entropy(xs, d_bandwidth)), out);
        return;
      }
      if (d_tree.empty() || d_corpus.empty()) throw InvalidParameter("diversity needs --tree and --corpus");
      const auto tree = hierarchy::load_tree(io::read_file(d_tree));
      const auto corpus = diversity::load_corpus(io::read_file(d_corpus), tree);
      std::int64_t window = d_window;
      if (window == 0) {
        window = 1;
        if (!corpus.items.empty()) {
          const auto [lo, hi] = std::minmax_element(corpus.items.begin(), corpus.items.end(),
                                                    [](const auto& a, const auto& b) { return a.time < b.time; });
          window = hi->time - lo->time + 1;
        }
      }
      diversity::WindowOptions opts;
      opts.topic_frac = d_topic_frac;
      opts.threads = threads;
      const auto reports = diversity::windowed_series(tree, corpus, diversity::parse_metric(d_metric), window,
                                                      diversity::parse_filter(d_filter), opts);
      detail::emit(out_path, diversity::report_csv(reports), out);
      for (const auto& r : reports) {
        if (r.value) continue;
        nlohmann::ordered_json note;
        note["note"] = "null value";
        note["window_start"] = r.window_start;
        note["reason"] = r.reason;
        err << note.dump() << '\n';
      }
    });
  }

  // topics
  std::string t_dir;
  std::int64_t t_threshold = 60;
  {
    auto* sub = app.add_subcommand(
        "topics",
        "Topic chains across statement snapshots. Reads NNN.json files (arrays of {id, statement}) from a directory; "
        "writes chains JSON.");
    sub->add_option("--snapshots", t_dir, "snapshot directory")->required();
    sub->add_option("--threshold", t_threshold, "similarity threshold S_T; edges need a strictly larger score")
        ->check(CLI::NonNegativeNumber);
    add_threads(sub);
    add_out(sub, "chains JSON path (stdout if omitted)");
    on(sub, [&] {
      const auto raw = topics::load_snapshot_dir(t_dir);
      std::vector<topics::SnapshotClustering> snaps;
      for (std::size_t t = 0; t < raw.size(); ++t) snaps.push_back(topics::cluster_snapshot(raw[t], t_threshold, t, threads));
      const auto chains = topics::align_chains(snaps, topics::similarity_cross_weight(snaps, t_threshold, threads));
      detail::emit(out_path, topics::chains_json(chains), out);
      if (out_path.empty()) return;
      for (const auto& s : snaps) {
        out << "snapshot=" << s.t << " statements=" << s.statements.size() << " components=" << s.components.size()
            << '\n';
      }
      out << kv("chains", chains.size());
    });
  }

  // rkd
  std::string r_series;
  double r_kink = 0.0;
  causal::RkdOptions r_opts;
  {
    auto* sub = app.add_subcommand("rkd",
                                   "Regression kink design on a series CSV with header t,y. Writes fit JSON.");
    sub->add_option("--series", r_series, "series CSV")->required();
    sub->add_option("--kink-time", r_kink, "kink date t0; t >= t0 is the right side")->required();
    sub->add_option("--degree", r_opts.degree, "polynomial degree on each side")->check(CLI::Range(1, 10));
    sub->add_flag("--robust", r_opts.robust, "HC3 standard errors");
    sub->add_flag("--level-jump", r_opts.level_jump, "allow a level discontinuity at t0");
    add_out(sub, "fit JSON path (stdout if omitted)");
    on(sub, [&] {
      const auto fit = causal::rkd(causal::parse_series_csv(io::read_file(r_series)), r_kink, r_opts);
      detail::emit(out_path, causal::kink_fit_json(fit), out);
      if (out_path.empty()) return;
      out << kv("slope_change", fit.slope_change) << kv("se", fit.slope_change_se) << kv("p_value", fit.p_value);
    });
  }

  try {
    args = detail::merge_params(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ExtrasError& e) {
    std::vector<std::string> extra;
    for (auto* a : {&app, app.get_subcommands().empty() ? &app : app.get_subcommands().front()}) {
      for (auto& r : a->remaining(false)) extra.push_back(r);
    }
    std::string msg = "unexpected arguments:";
    for (const auto& x : extra) msg += " " + x;
    if (extra.empty()) msg = e.what();
    detail::error_record(err, "usage", kExitUsage, msg, [&](auto& rec) { rec["unexpected"] = extra; });
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    detail::error_record(err, "usage", kExitUsage, e.what());
    return kExitUsage;
  } catch (const Error& e) {
    detail::error_record(err, to_string(e.kind()), exit_code(e.kind()), e.what());
    return exit_code(e.kind());
  }

  try {
    action();
    return kExitOk;
  } catch (const ValidationError& e) {
    detail::error_record(err, to_string(e.kind()), kExitData, e.what(), [&](auto& rec) {
      if (e.node()) rec["node"] = *e.node();
    });
    return kExitData;
  } catch (const ConvergenceError& e) {
    detail::error_record(err, to_string(e.kind()), kExitNumeric, e.what(), [&](auto& rec) {
      rec["last_estimate"] = e.last_estimate();
      rec["residual"] = e.residual();
    });
    return kExitNumeric;
  } catch (const Error& e) {
    detail::error_record(err, to_string(e.kind()), exit_code(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    detail::error_record(err, "internal", kExitData, e.what());
    return kExitData;
  }
}

inline int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args), std::cout, std::cerr);
}

}  // namespace lockin::cli

#endif  // LOCKIN_CLI_HPP
