#ifndef LOCKIN_DIVERSITY_HPP
#define LOCKIN_DIVERSITY_HPP

// Diversity of concept corpora over a concept hierarchy: lineage and depth
// diversity (virtual-tree aggregation plus quadratic reference versions),
// topic cuts and topic entropy, pairwise Jaccard distance, and KDE entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lockin/error.hpp"
#include "lockin/hierarchy.hpp"
#include "lockin/io.hpp"
#include "lockin/parallel.hpp"

namespace lockin::diversity {

using hierarchy::HierarchyTree;
using hierarchy::NodeId;

struct CorpusItem {
  std::int64_t time = 0;
  NodeId leaf = 0;
  std::optional<std::string> conversation;
  std::optional<bool> value_laden;
};

struct ConceptCorpus {
  std::vector<CorpusItem> items;

  std::vector<NodeId> leaves() const {
    std::vector<NodeId> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.leaf);
    return out;
  }
};

inline void validate_leaves(const HierarchyTree& tree, std::span<const NodeId> leaves) {
  for (NodeId v : leaves) {
    if (!tree.valid(v)) throw ValidationError("corpus references unknown node " + std::to_string(v), v);
    if (!tree.is_leaf(v)) throw ValidationError("corpus references internal node " + std::to_string(v), v);
  }
}

/// JSONL, one {"time":1690000000,"leaf":42,"conversation":"c17","value_laden":true} per line.
inline ConceptCorpus load_corpus(std::string_view text, const HierarchyTree& tree) {
  ConceptCorpus corpus;
  std::size_t line_no = 0;
  for (auto line : io::lines(text)) {
    ++line_no;
    const std::string where = "corpus line " + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ValidationError(where + " is not valid JSON");
    }
    if (!obj.is_object() || !obj.contains("time") || !obj["time"].is_number_integer() || !obj.contains("leaf") ||
        !obj["leaf"].is_number_integer()) {
      throw ValidationError(where + " needs integer \"time\" and \"leaf\"");
    }
    CorpusItem item;
    item.time = obj["time"].get<std::int64_t>();
    const auto leaf = obj["leaf"].get<std::int64_t>();
    if (!tree.valid(leaf)) throw ValidationError(where + " references unknown node " + std::to_string(leaf), leaf);
    item.leaf = static_cast<NodeId>(leaf);
    if (obj.contains("conversation") && !obj["conversation"].is_null()) {
      const auto& c = obj["conversation"];
      item.conversation = c.is_string() ? c.get<std::string>() : c.dump();
    }
    if (obj.contains("value_laden") && !obj["value_laden"].is_null()) {
      if (!obj["value_laden"].is_boolean()) throw ValidationError(where + " has a non-boolean \"value_laden\"");
      item.value_laden = obj["value_laden"].get<bool>();
    }
    corpus.items.push_back(std::move(item));
  }
  validate_leaves(tree, corpus.leaves());
  return corpus;
}

namespace detail {

inline void require_pairs(const HierarchyTree& tree, std::span<const NodeId> leaves) {
  if (leaves.size() < 2) {
    throw ValidationError("insufficient corpus: need at least 2 items, got " + std::to_string(leaves.size()));
  }
  validate_leaves(tree, leaves);
}

struct LcaPairs {
  NodeId node;
  std::uint64_t pairs;  // ordered pairs of distinct positions with this LCA
};

/// Pair counts per LCA node from the virtual tree of the occupied leaves.
inline std::vector<LcaPairs> lca_pair_counts(const HierarchyTree& tree, std::span<const NodeId> leaves) {
  std::vector<NodeId> sorted(leaves.begin(), leaves.end());
  std::sort(sorted.begin(), sorted.end(), [&](NodeId a, NodeId b) { return tree.tin(a) < tree.tin(b); });

  struct Key {
    NodeId node;
    std::uint64_t count;
  };
  std::vector<Key> keys;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    keys.push_back({sorted[i], j - i});
    i = j;
  }
  const std::size_t occupied = keys.size();
  for (std::size_t i = 0; i + 1 < occupied; ++i) keys.push_back({tree.lca_unchecked(keys[i].node, keys[i + 1].node), 0});
  std::sort(keys.begin(), keys.end(), [&](const Key& a, const Key& b) {
    return tree.tin(a.node) < tree.tin(b.node) || (tree.tin(a.node) == tree.tin(b.node) && a.count > b.count);
  });
  keys.erase(std::unique(keys.begin(), keys.end(), [](const Key& a, const Key& b) { return a.node == b.node; }),
             keys.end());

  const std::size_t k = keys.size();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> vparent(k, kNone);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < k; ++i) {
    while (!stack.empty() && !tree.is_ancestor(keys[stack.back()].node, keys[i].node)) stack.pop_back();
    if (!stack.empty()) vparent[i] = stack.back();
    stack.push_back(i);
  }

  std::vector<std::uint64_t> subtree(k, 0), child_sq(k, 0);
  for (std::size_t i = k; i-- > 0;) {
    subtree[i] += keys[i].count;
    if (vparent[i] != kNone) {
      subtree[vparent[i]] += subtree[i];
      child_sq[vparent[i]] += subtree[i] * subtree[i];
    }
  }
  std::vector<LcaPairs> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t pairs = subtree[i] * subtree[i] - child_sq[i] - keys[i].count;
    if (pairs > 0) out.push_back({keys[i].node, pairs});
  }
  return out;
}

inline double lineage_from_ratio(double expected_ratio, double leaf_total) {
  return (std::log(leaf_total) - std::log(expected_ratio)) / std::log(leaf_total);
}

inline void require_nondegenerate(const HierarchyTree& tree) {
  if (tree.leaf_total() < 2) throw ValidationError("degenerate tree: lineage diversity needs at least 2 leaves");
}

}  // namespace detail

/// Lineage diversity (log|T| - log E[|T| / |T_lca|]) / log|T| over ordered
/// pairs of distinct corpus positions. O(m log |T|).
inline double lineage_diversity(const HierarchyTree& tree, std::span<const NodeId> leaves) {
  detail::require_pairs(tree, leaves);
  detail::require_nondegenerate(tree);
  const double total = static_cast<double>(tree.leaf_total());
  const double m = static_cast<double>(leaves.size());
  double acc = 0.0;
  for (const auto& [node, pairs] : detail::lca_pair_counts(tree, leaves)) {
    acc += static_cast<double>(pairs) * (total / static_cast<double>(tree.leaf_count(node)));
  }
  return detail::lineage_from_ratio(acc / (m * (m - 1.0)), total);
}

/// Same quantity by a direct double loop with lca(); quadratic in m.
inline double lineage_diversity_naive(const HierarchyTree& tree, std::span<const NodeId> leaves) {
  detail::require_pairs(tree, leaves);
  detail::require_nondegenerate(tree);
  const long double total = static_cast<long double>(tree.leaf_total());
  long double acc = 0.0L;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      acc += 2.0L * total / static_cast<long double>(tree.leaf_count(tree.lca(leaves[i], leaves[j])));
    }
  }
  const long double m = static_cast<long double>(leaves.size());
  return detail::lineage_from_ratio(static_cast<double>(acc / (m * (m - 1.0L))), static_cast<double>(total));
}

/// E[ln |T_lca| - depth(lca)] over ordered pairs of distinct positions.
inline double depth_diversity(const HierarchyTree& tree, std::span<const NodeId> leaves) {
  detail::require_pairs(tree, leaves);
  const double m = static_cast<double>(leaves.size());
  double acc = 0.0;
  for (const auto& [node, pairs] : detail::lca_pair_counts(tree, leaves)) {
    acc += static_cast<double>(pairs) *
           (std::log(static_cast<double>(tree.leaf_count(node))) - static_cast<double>(tree.depth(node)));
  }
  return acc / (m * (m - 1.0));
}

inline double depth_diversity_naive(const HierarchyTree& tree, std::span<const NodeId> leaves) {
  detail::require_pairs(tree, leaves);
  long double acc = 0.0L;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      const NodeId l = tree.lca(leaves[i], leaves[j]);
      acc += 2.0L * (std::log(static_cast<long double>(tree.leaf_count(l))) - static_cast<long double>(tree.depth(l)));
    }
  }
  const long double m = static_cast<long double>(leaves.size());
  return static_cast<double>(acc / (m * (m - 1.0L)));
}

// ---------------------------------------------------------------------------
// Topics

inline constexpr std::uint32_t kNoTopic = static_cast<std::uint32_t>(-1);

struct TopicAssignment {
  std::vector<NodeId> topics;           // topic roots in preorder
  std::vector<std::uint32_t> topic_of;  // per node; kNoTopic above the cut
  std::uint64_t bound = 0;

  std::uint32_t topic(NodeId leaf) const { return topic_of.at(leaf); }
};

/// Largest leaf count a topic may have: ceil(frac * |T|), with a relative
/// slack of 1e-12 so that products like 0.01 * 100 do not round up.
inline std::uint64_t topic_bound(double frac, std::uint64_t leaf_total) {
  if (!(frac > 0.0 && frac <= 1.0)) throw InvalidParameter("topic fraction must be in (0, 1]");
  const double x = frac * static_cast<double>(leaf_total);
  const auto bound = static_cast<std::uint64_t>(std::ceil(x * (1.0 - 1e-12)));
  return std::max<std::uint64_t>(bound, 1);
}

/// Topics are the highest nodes with at most ceil(frac * |T|) leaves.
inline TopicAssignment cut_topics(const HierarchyTree& tree, double frac) {
  TopicAssignment out;
  out.bound = topic_bound(frac, tree.leaf_total());
  out.topic_of.assign(tree.node_count(), kNoTopic);
  std::vector<NodeId> stack{tree.root()};
  std::vector<NodeId> order;
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    if (tree.leaf_count(v) <= out.bound) {
      order.push_back(v);
      continue;
    }
    const auto kids = tree.children(v);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) { return tree.tin(a) < tree.tin(b); });
  out.topics = order;
  for (std::uint32_t k = 0; k < order.size(); ++k) {
    std::vector<NodeId> sub{order[k]};
    while (!sub.empty()) {
      const NodeId v = sub.back();
      sub.pop_back();
      out.topic_of[v] = k;
      for (NodeId c : tree.children(v)) sub.push_back(c);
    }
  }
  return out;
}

/// Shannon entropy (nats) of the empirical topic distribution.
inline double topic_entropy(const TopicAssignment& assignment, std::span<const NodeId> leaves) {
  if (leaves.empty()) throw ValidationError("topic entropy of an empty corpus");
  std::vector<std::uint64_t> counts(assignment.topics.size(), 0);
  for (NodeId v : leaves) {
    if (v >= assignment.topic_of.size() || assignment.topic_of[v] == kNoTopic) {
      throw ValidationError("node " + std::to_string(v) + " has no topic", v);
    }
    ++counts[assignment.topic_of[v]];
  }
  const double m = static_cast<double>(leaves.size());
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / m;
    h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

/// Mean Jaccard distance over unordered pairs of sets. Two empty sets are at
/// distance 0.
inline double jaccard_avg_distance(const std::vector<std::vector<std::uint32_t>>& sets) {
  if (sets.size() < 2) throw ValidationError("Jaccard distance needs at least 2 conversations");
  std::vector<std::vector<std::uint32_t>> norm(sets);
  for (auto& s : norm) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    for (std::size_t j = i + 1; j < norm.size(); ++j) {
      const auto& a = norm[i];
      const auto& b = norm[j];
      std::size_t inter = 0, ia = 0, ib = 0;
      while (ia < a.size() && ib < b.size()) {
        if (a[ia] < b[ib]) {
          ++ia;
        } else if (b[ib] < a[ia]) {
          ++ib;
        } else {
          ++inter;
          ++ia;
          ++ib;
        }
      }
      const std::size_t uni = a.size() + b.size() - inter;
      if (uni > 0) acc += 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
    }
  }
  const double n = static_cast<double>(norm.size());
  return acc / (n * (n - 1.0) / 2.0);
}

/// Topic sets per conversation id, ordered by id. Items without a
/// conversation id are skipped.
inline std::vector<std::vector<std::uint32_t>> conversation_topic_sets(const TopicAssignment& assignment,
                                                                      std::span<const CorpusItem> items) {
  std::map<std::string, std::vector<std::uint32_t>> by_conv;
  for (const auto& it : items) {
    if (!it.conversation) continue;
    by_conv[*it.conversation].push_back(assignment.topic(it.leaf));
  }
  std::vector<std::vector<std::uint32_t>> out;
  out.reserve(by_conv.size());
  for (auto& [id, topics] : by_conv) out.push_back(std::move(topics));
  return out;
}

// ---------------------------------------------------------------------------
// KDE differential entropy

namespace detail {

// Linear-interpolation quantile of sorted data.
inline double quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// 0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to the sd when the IQR is 0.
inline double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw ValidationError("bandwidth needs at least 2 samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double mean = 0.0;
  for (double x : sorted) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : sorted) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double iqr = detail::quantile(sorted, 0.75) - detail::quantile(sorted, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw ValidationError("degenerate spread: all samples are equal");
  return 0.9 * spread * std::pow(n, -0.2);
}

/// Differential entropy (nats) of a Gaussian KDE, integrated by the trapezoid
/// rule on 2048 points over [min - 4h, max + 4h].
inline double kde_entropy(std::span<const double> samples, std::optional<double> bandwidth = std::nullopt) {
  if (samples.size() < 2) throw ValidationError("KDE entropy needs at least 2 samples");
  for (double x : samples) {
    if (!std::isfinite(x)) throw ValidationError("KDE sample is not finite");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw ValidationError("degenerate spread: all samples are equal");
  double h = 0.0;
  if (bandwidth) {
    if (!(*bandwidth > 0.0) || !std::isfinite(*bandwidth)) throw InvalidParameter("bandwidth must be positive");
    h = *bandwidth;
  } else {
    h = silverman_bandwidth(sorted);
  }

  constexpr std::size_t kGrid = 2048;
  constexpr double kCutoff = 10.0;  // exp(-50) is below double resolution of the sum
  const double lo = sorted.front() - 4.0 * h;
  const double hi = sorted.back() + 4.0 * h;
  const double dx = (hi - lo) / static_cast<double>(kGrid - 1);
  const double norm = 1.0 / (static_cast<double>(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  double integral = 0.0;
  for (std::size_t g = 0; g < kGrid; ++g) {
    const double x = lo + dx * static_cast<double>(g);
    const auto first = std::lower_bound(sorted.begin(), sorted.end(), x - kCutoff * h);
    const auto last = std::upper_bound(first, sorted.end(), x + kCutoff * h);
    double f = 0.0;
    for (auto it = first; it != last; ++it) {
      const double z = (x - *it) / h;
      f += std::exp(-0.5 * z * z);
    }
    f *= norm;
    const double integrand = f > 0.0 ? -f * std::log(f) : 0.0;
    integral += (g == 0 || g + 1 == kGrid) ? 0.5 * integrand : integrand;
  }
  return integral * dx;
}

// ---------------------------------------------------------------------------
// Windowed time series

enum class Metric { lineage, depth, topic_entropy, jaccard };
enum class Filter { all, value_laden };

inline Metric parse_metric(std::string_view s) {
  if (s == "lineage") return Metric::lineage;
  if (s == "depth") return Metric::depth;
  if (s == "topic_entropy") return Metric::topic_entropy;
  if (s == "jaccard") return Metric::jaccard;
  throw InvalidParameter("unknown diversity metric '" + std::string(s) + "'");
}

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::lineage: return "lineage";
    case Metric::depth: return "depth";
    case Metric::topic_entropy: return "topic_entropy";
    case Metric::jaccard: return "jaccard";
  }
  return "?";
}

inline Filter parse_filter(std::string_view s) {
  if (s == "all") return Filter::all;
  if (s == "value_laden") return Filter::value_laden;
  throw InvalidParameter("unknown filter '" + std::string(s) + "'");
}

struct DiversityReport {
  std::int64_t window_start = 0;
  std::int64_t window_end = 0;  // exclusive
  Metric metric = Metric::lineage;
  std::optional<double> value;
  std::string reason;  // set when value is empty
  std::size_t n = 0;
};

struct WindowOptions {
  double topic_frac = 0.01;
  std::size_t threads = 1;
};

/// One metric value over a whole set of items.
inline double evaluate(const HierarchyTree& tree, std::span<const CorpusItem> items, Metric metric,
                       const TopicAssignment* topics = nullptr) {
  std::vector<NodeId> leaves;
  leaves.reserve(items.size());
  for (const auto& it : items) leaves.push_back(it.leaf);
  switch (metric) {
    case Metric::lineage: return lineage_diversity(tree, leaves);
    case Metric::depth: return depth_diversity(tree, leaves);
    case Metric::topic_entropy:
      if (!topics) throw InvalidParameter("topic entropy needs a topic assignment");
      return topic_entropy(*topics, leaves);
    case Metric::jaccard:
      if (!topics) throw InvalidParameter("Jaccard distance needs a topic assignment");
      return jaccard_avg_distance(conversation_topic_sets(*topics, items));
  }
  throw InvalidParameter("unknown metric");
}

/// Buckets the corpus into windows [t0 + k w, t0 + (k + 1) w) starting at the
/// earliest timestamp of the unfiltered corpus, and evaluates the metric on
/// the filtered items of each window. Windows with too few items get no value
/// and a reason.
inline std::vector<DiversityReport> windowed_series(const HierarchyTree& tree, const ConceptCorpus& corpus,
                                                    Metric metric, std::int64_t window_seconds, Filter filter,
                                                    const WindowOptions& opts = {}) {
  if (window_seconds <= 0) throw InvalidParameter("window length must be positive");
  if (corpus.items.empty()) return {};
  validate_leaves(tree, corpus.leaves());
  if (metric == Metric::lineage) detail::require_nondegenerate(tree);

  std::vector<CorpusItem> items = corpus.items;
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  const std::int64_t t0 = items.front().time;
  const auto window_count = static_cast<std::size_t>((items.back().time - t0) / window_seconds + 1);

  std::vector<std::vector<CorpusItem>> buckets(window_count);
  for (auto& it : items) {
    if (filter == Filter::value_laden && !it.value_laden.value_or(false)) continue;
    buckets[static_cast<std::size_t>((it.time - t0) / window_seconds)].push_back(std::move(it));
  }

  std::optional<TopicAssignment> topics;
  if (metric == Metric::topic_entropy || metric == Metric::jaccard) topics = cut_topics(tree, opts.topic_frac);

  std::vector<DiversityReport> out(window_count);
  parallel_for(window_count, opts.threads, [&](std::size_t k) {
    auto& r = out[k];
    r.window_start = t0 + static_cast<std::int64_t>(k) * window_seconds;
    r.window_end = r.window_start + window_seconds;
    r.metric = metric;
    const auto& bucket = buckets[k];
    r.n = bucket.size();
    if (bucket.empty()) {
      r.reason = "empty window";
      return;
    }
    if (metric == Metric::jaccard) {
      const auto sets = conversation_topic_sets(*topics, bucket);
      r.n = sets.size();
      if (sets.size() < 2) {
        r.reason = "fewer than 2 conversations";
        return;
      }
    } else if (metric != Metric::topic_entropy && bucket.size() < 2) {
      r.reason = "fewer than 2 items";
      return;
    }
    r.value = evaluate(tree, bucket, metric, topics ? &*topics : nullptr);
  });
  return out;
}

inline constexpr std::string_view kReportHeader = "window_start,window_end,metric,value,n";

/// Report CSV; windows without a value print "null".
inline std::string report_csv(const std::vector<DiversityReport>& reports) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : reports) {
    out += std::to_string(r.window_start) + ',' + std::to_string(r.window_end) + ',' + to_string(r.metric) + ',' +
           (r.value ? io::format_double(*r.value) : std::string("null")) + ',' + std::to_string(r.n) + '\n';
  }
  return out;
}

}  // namespace lockin::diversity

#endif  // LOCKIN_DIVERSITY_HPP
