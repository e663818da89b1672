#ifndef LOCKIN_HIERARCHY_HPP
#define LOCKIN_HIERARCHY_HPP

// Rooted concept hierarchy: leaves are concepts, internal nodes are nested
// clusters. Provides leaf counts, depths, Euler-tour intervals and
// binary-lifting LCA, plus JSON persistence and a deterministic agglomerative
// builder over concept embeddings.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lockin/error.hpp"
#include "lockin/io.hpp"

namespace lockin::hierarchy {

using NodeId = std::uint32_t;
inline constexpr std::int64_t kNoParent = -1;

class HierarchyTree {
 public:
  /// Builds and annotates a tree from a parent array (kNoParent marks the root).
  ///
  /// Throws ValidationError naming the offending node on a dangling parent,
  /// a cycle, or zero or several roots. Internal nodes with a single child are
  /// rejected unless `allow_unary` is set, in which case has_unary_nodes()
  /// reports them.
  static HierarchyTree from_parents(const std::vector<std::int64_t>& parents, std::vector<std::string> labels = {},
                                    bool allow_unary = true) {
    const std::size_t n = parents.size();
    if (n == 0) throw ValidationError("tree has no nodes");
    if (n > std::numeric_limits<NodeId>::max() / 2) throw ValidationError("tree too large");
    if (!labels.empty() && labels.size() != n) throw ValidationError("label count does not match node count");

    HierarchyTree t;
    t.parent_.resize(n);
    std::optional<NodeId> root;
    for (std::size_t v = 0; v < n; ++v) {
      const auto p = parents[v];
      if (p == kNoParent) {
        if (root) {
          throw ValidationError("multiple roots: nodes " + std::to_string(*root) + " and " + std::to_string(v) +
                                    " have no parent",
                                static_cast<long long>(v));
        }
        root = static_cast<NodeId>(v);
        t.parent_[v] = static_cast<NodeId>(v);
        continue;
      }
      if (p < 0 || static_cast<std::uint64_t>(p) >= n) {
        throw ValidationError("node " + std::to_string(v) + " has dangling parent " + std::to_string(p),
                              static_cast<long long>(v));
      }
      if (static_cast<std::size_t>(p) == v) {
        throw ValidationError("cycle: node " + std::to_string(v) + " is its own parent", static_cast<long long>(v));
      }
      t.parent_[v] = static_cast<NodeId>(p);
    }
    if (!root) {
      const NodeId on_cycle = t.find_cycle_node(0);
      throw ValidationError("cycle through node " + std::to_string(on_cycle) + " (no root)",
                            static_cast<long long>(on_cycle));
    }
    t.root_ = *root;

    // Children in CSR form, sorted by id.
    t.child_offset_.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) {
      if (v != t.root_) ++t.child_offset_[t.parent_[v] + 1];
    }
    for (std::size_t v = 0; v < n; ++v) t.child_offset_[v + 1] += t.child_offset_[v];
    t.children_.resize(n - 1);
    {
      std::vector<std::uint32_t> fill(t.child_offset_.begin(), t.child_offset_.end() - 1);
      for (std::size_t v = 0; v < n; ++v) {
        if (v != t.root_) t.children_[fill[t.parent_[v]]++] = static_cast<NodeId>(v);
      }
    }

    // Preorder DFS from the root; anything unreached hangs off a cycle.
    t.depth_.assign(n, 0);
    t.tin_.assign(n, 0);
    t.tout_.assign(n, 0);
    t.leaf_count_.assign(n, 0);
    std::vector<char> reached(n, 0);
    std::vector<std::pair<NodeId, std::uint32_t>> stack;
    stack.emplace_back(t.root_, t.child_offset_[t.root_]);
    reached[t.root_] = 1;
    std::uint32_t clock = 0;
    t.tin_[t.root_] = clock++;
    std::uint32_t max_depth = 0;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < t.child_offset_[v + 1]) {
        const NodeId c = t.children_[next++];
        reached[c] = 1;
        t.depth_[c] = t.depth_[v] + 1;
        max_depth = std::max(max_depth, t.depth_[c]);
        t.tin_[c] = clock++;
        stack.emplace_back(c, t.child_offset_[c]);
      } else {
        const NodeId done = v;
        t.tout_[done] = clock;
        if (t.child_offset_[done] == t.child_offset_[done + 1]) {
          t.leaf_count_[done] = 1;
        }
        stack.pop_back();
        if (!stack.empty()) t.leaf_count_[stack.back().first] += t.leaf_count_[done];
      }
    }
    if (clock != n) {
      for (std::size_t v = 0; v < n; ++v) {
        if (!reached[v]) {
          const NodeId on_cycle = t.find_cycle_node(static_cast<NodeId>(v));
          throw ValidationError("cycle through node " + std::to_string(on_cycle), static_cast<long long>(on_cycle));
        }
      }
    }

    for (std::size_t v = 0; v < n; ++v) {
      if (t.child_count(static_cast<NodeId>(v)) == 1) {
        if (!allow_unary) {
          throw ValidationError("internal node " + std::to_string(v) + " has a single child",
                                static_cast<long long>(v));
        }
        t.has_unary_ = true;
      }
    }

    // Binary lifting; levels only need to cover the tree height.
    const std::size_t levels = std::max<std::size_t>(1, std::bit_width(max_depth));
    t.up_.assign(levels, std::vector<NodeId>(n));
    t.up_[0] = t.parent_;
    for (std::size_t k = 1; k < levels; ++k) {
      const auto& prev = t.up_[k - 1];
      auto& cur = t.up_[k];
      for (std::size_t v = 0; v < n; ++v) cur[v] = prev[prev[v]];
    }
    t.labels_ = std::move(labels);
    return t;
  }

  std::size_t node_count() const noexcept { return parent_.size(); }
  /// |T|: number of leaf concepts.
  std::uint64_t leaf_total() const noexcept { return leaf_count_[root_]; }
  NodeId root() const noexcept { return root_; }
  bool has_unary_nodes() const noexcept { return has_unary_; }

  std::optional<NodeId> parent(NodeId v) const {
    check(v);
    if (v == root_) return std::nullopt;
    return parent_[v];
  }
  std::span<const NodeId> children(NodeId v) const {
    check(v);
    return {children_.data() + child_offset_[v], child_offset_[v + 1] - child_offset_[v]};
  }
  std::size_t child_count(NodeId v) const { return child_offset_[v + 1] - child_offset_[v]; }
  bool is_leaf(NodeId v) const { return child_count(v) == 0; }
  std::uint64_t leaf_count(NodeId v) const noexcept { return leaf_count_[v]; }
  std::uint32_t depth(NodeId v) const noexcept { return depth_[v]; }
  /// Preorder entry time; a subtree occupies [tin, tout).
  std::uint32_t tin(NodeId v) const noexcept { return tin_[v]; }
  std::uint32_t tout(NodeId v) const noexcept { return tout_[v]; }
  bool is_ancestor(NodeId a, NodeId v) const noexcept { return tin_[a] <= tin_[v] && tin_[v] < tout_[a]; }
  bool valid(std::int64_t v) const noexcept { return v >= 0 && static_cast<std::uint64_t>(v) < parent_.size(); }

  std::string_view label(NodeId v) const {
    check(v);
    return labels_.empty() ? std::string_view{} : std::string_view{labels_[v]};
  }

  std::vector<NodeId> leaves() const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < node_count(); ++v) {
      if (is_leaf(v)) out.push_back(v);
    }
    return out;
  }

  /// Lowest common ancestor in O(log height).
  NodeId lca(NodeId u, NodeId v) const {
    check(u);
    check(v);
    return lca_unchecked(u, v);
  }

  NodeId lca_unchecked(NodeId u, NodeId v) const noexcept {
    if (is_ancestor(u, v)) return u;
    if (is_ancestor(v, u)) return v;
    for (std::size_t k = up_.size(); k-- > 0;) {
      const NodeId w = up_[k][u];
      if (!is_ancestor(w, v)) u = w;
    }
    return parent_[u];
  }

  /// Parent array with kNoParent at the root.
  std::vector<std::int64_t> parent_array() const {
    std::vector<std::int64_t> out(parent_.begin(), parent_.end());
    out[root_] = kNoParent;
    return out;
  }

  const std::vector<std::string>& labels() const noexcept { return labels_; }

  bool operator==(const HierarchyTree& other) const {
    return parent_ == other.parent_ && root_ == other.root_ && labels_ == other.labels_;
  }

 private:
  HierarchyTree() = default;

  void check(NodeId v) const {
    if (v >= parent_.size()) throw InvalidParameter("node id " + std::to_string(v) + " is out of range");
  }

  // Walks parents from an unrooted node until a node repeats.
  NodeId find_cycle_node(NodeId start) const {
    std::vector<char> on_path(parent_.size(), 0);
    NodeId v = start;
    while (!on_path[v]) {
      on_path[v] = 1;
      v = parent_[v];
    }
    return v;
  }

  std::vector<NodeId> parent_;
  NodeId root_ = 0;
  std::vector<std::uint32_t> child_offset_;
  std::vector<NodeId> children_;
  std::vector<std::uint64_t> leaf_count_;
  std::vector<std::uint32_t> depth_;
  std::vector<std::uint32_t> tin_;
  std::vector<std::uint32_t> tout_;
  std::vector<std::vector<NodeId>> up_;
  std::vector<std::string> labels_;
  bool has_unary_ = false;
};

// ---------------------------------------------------------------------------
// JSON persistence: {"nodes":[{"id":0,"parent":null,"label":"root"}, ...]}

inline HierarchyTree load_tree(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("tree JSON does not parse: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw ValidationError("tree JSON must be an object with a \"nodes\" array");
  }
  const auto& nodes = doc["nodes"];
  const std::size_t n = nodes.size();
  std::vector<std::int64_t> parents(n, kNoParent);
  std::vector<std::string> labels(n);
  std::vector<char> seen(n, 0);
  bool any_label = false;
  for (const auto& node : nodes) {
    if (!node.is_object() || !node.contains("id") || !node["id"].is_number_integer()) {
      throw ValidationError("every node needs an integer \"id\"");
    }
    const auto id = node["id"].get<std::int64_t>();
    if (id < 0 || static_cast<std::uint64_t>(id) >= n) {
      throw ValidationError("node id " + std::to_string(id) + " is outside 0.." + std::to_string(n - 1) +
                                " (ids must be contiguous)",
                            id);
    }
    if (seen[id]) throw ValidationError("duplicate node id " + std::to_string(id), id);
    seen[id] = 1;
    if (!node.contains("parent") || node["parent"].is_null()) {
      parents[id] = kNoParent;
    } else if (node["parent"].is_number_integer()) {
      const auto p = node["parent"].get<std::int64_t>();
      if (p < 0 || static_cast<std::uint64_t>(p) >= n) {
        throw ValidationError("node " + std::to_string(id) + " has dangling parent " + std::to_string(p), id);
      }
      parents[id] = p;
    } else {
      throw ValidationError("node " + std::to_string(id) + " has a non-integer parent", id);
    }
    if (node.contains("label") && !node["label"].is_null()) {
      if (!node["label"].is_string()) throw ValidationError("node " + std::to_string(id) + " label must be a string", id);
      labels[id] = node["label"].get<std::string>();
      any_label = true;
    }
  }
  if (!any_label) labels.clear();
  return HierarchyTree::from_parents(parents, std::move(labels), true);
}

/// Canonical form: nodes in id order, label omitted when empty.
inline std::string save_tree(const HierarchyTree& tree) {
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (NodeId v = 0; v < tree.node_count(); ++v) {
    nlohmann::ordered_json node;
    node["id"] = v;
    const auto p = tree.parent(v);
    node["parent"] = p ? nlohmann::ordered_json(*p) : nlohmann::ordered_json(nullptr);
    const auto label = tree.label(v);
    if (!label.empty()) node["label"] = std::string(label);
    nodes.push_back(std::move(node));
  }
  nlohmann::ordered_json doc;
  doc["nodes"] = std::move(nodes);
  return doc.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Embeddings and agglomerative construction

struct EmbeddingRow {
  std::int64_t id = 0;
  std::string label;
  std::vector<double> vec;
};

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<EmbeddingRow> rows;

  void validate() const {
    if (dim == 0) throw ValidationError("embedding dimension must be positive");
    std::vector<std::int64_t> ids;
    ids.reserve(rows.size());
    for (const auto& r : rows) {
      if (r.vec.size() != dim) {
        throw ValidationError("embedding " + std::to_string(r.id) + " has dimension " + std::to_string(r.vec.size()) +
                                  ", expected " + std::to_string(dim),
                              r.id);
      }
      bool nonzero = false;
      for (double x : r.vec) {
        if (!std::isfinite(x)) throw ValidationError("embedding " + std::to_string(r.id) + " is not finite", r.id);
        nonzero = nonzero || x != 0.0;
      }
      if (!nonzero) throw ValidationError("embedding " + std::to_string(r.id) + " is the zero vector", r.id);
      ids.push_back(r.id);
    }
    std::sort(ids.begin(), ids.end());
    const auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) throw ValidationError("duplicate embedding id " + std::to_string(*dup), *dup);
  }
};

/// JSONL, one {"id":7,"label":"climate change","vec":[...]} per line.
inline EmbeddingTable load_embeddings(std::string_view text) {
  EmbeddingTable table;
  std::size_t line_no = 0;
  for (auto line : io::lines(text)) {
    ++line_no;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ValidationError("embeddings line " + std::to_string(line_no) + " is not valid JSON");
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_number_integer() || !obj.contains("vec") ||
        !obj["vec"].is_array()) {
      throw ValidationError("embeddings line " + std::to_string(line_no) + " needs integer \"id\" and array \"vec\"");
    }
    EmbeddingRow row;
    row.id = obj["id"].get<std::int64_t>();
    if (obj.contains("label") && obj["label"].is_string()) row.label = obj["label"].get<std::string>();
    for (const auto& x : obj["vec"]) {
      if (!x.is_number()) throw ValidationError("embedding " + std::to_string(row.id) + " has a non-numeric entry", row.id);
      row.vec.push_back(x.get<double>());
    }
    if (table.rows.empty()) table.dim = row.vec.size();
    table.rows.push_back(std::move(row));
  }
  table.validate();
  return table;
}

enum class Linkage { average, complete, single };
enum class Metric { cosine, euclidean };

inline Linkage parse_linkage(std::string_view s) {
  if (s == "average") return Linkage::average;
  if (s == "complete") return Linkage::complete;
  if (s == "single") return Linkage::single;
  throw InvalidParameter("unknown linkage '" + std::string(s) + "'");
}

inline Metric parse_metric(std::string_view s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "euclidean") return Metric::euclidean;
  throw InvalidParameter("unknown metric '" + std::string(s) + "'");
}

namespace detail {

inline double point_distance(const std::vector<double>& a, const std::vector<double>& b, Metric metric) {
  if (metric == Metric::euclidean) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(acc);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 2.0);
}

/// Condensed upper-triangular distance storage.
class Condensed {
 public:
  explicit Condensed(std::size_t n) : n_(n), d_(n * (n - 1) / 2) {}
  double& at(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return d_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
  }

 private:
  std::size_t n_;
  std::vector<double> d_;
};

}  // namespace detail

/// Greedy agglomerative clustering into a full binary dendrogram.
///
/// Rows are ordered by id, so leaves 0..n-1 are the rows in id order and the
/// result does not depend on input order. Merge k creates node n + k; the root
/// is node 2n - 2. Each step merges the pair with the smallest linkage
/// distance, ties broken by the pair's (smaller, larger) minimum leaf index.
/// Linkage distances are updated with the Lance-Williams recurrences.
/// Memory is O(n^2).
inline HierarchyTree build_agglomerative(const EmbeddingTable& emb, Linkage linkage, Metric metric) {
  emb.validate();
  const std::size_t n = emb.rows.size();
  if (n < 2) throw InvalidParameter("agglomerative clustering needs at least 2 embeddings");

  std::vector<const EmbeddingRow*> rows;
  rows.reserve(n);
  for (const auto& r : emb.rows) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  detail::Condensed dist(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist.at(i, j) = detail::point_distance(rows[i]->vec, rows[j]->vec, metric);

  // Slot i holds the cluster whose smallest leaf index is i.
  std::vector<char> active(n, 1);
  std::vector<std::size_t> size(n, 1);
  std::vector<NodeId> node_of(n);
  for (std::size_t i = 0; i < n; ++i) node_of[i] = static_cast<NodeId>(i);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> nn(n, n);
  std::vector<double> nn_dist(n, kInf);

  auto refresh = [&](std::size_t i) {
    nn[i] = n;
    nn_dist[i] = kInf;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!active[j]) continue;
      const double d = dist.at(i, j);
      if (d < nn_dist[i]) {
        nn_dist[i] = d;
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i) refresh(i);

  std::vector<std::int64_t> parents(2 * n - 1, kNoParent);
  for (std::size_t merge = 0; merge + 1 < n; ++merge) {
    std::size_t a = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && nn[i] < n && (a == n || nn_dist[i] < nn_dist[a])) a = i;
    }
    const std::size_t b = nn[a];
    const auto new_node = static_cast<NodeId>(n + merge);
    parents[node_of[a]] = new_node;
    parents[node_of[b]] = new_node;

    const double sa = static_cast<double>(size[a]);
    const double sb = static_cast<double>(size[b]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const double da = dist.at(a, k);
      const double db = dist.at(b, k);
      double merged = 0.0;
      switch (linkage) {
        case Linkage::single: merged = std::min(da, db); break;
        case Linkage::complete: merged = std::max(da, db); break;
        case Linkage::average: merged = (sa * da + sb * db) / (sa + sb); break;
      }
      dist.at(a, k) = merged;
    }
    active[b] = 0;
    size[a] += size[b];
    node_of[a] = new_node;

    for (std::size_t k = 0; k < a; ++k) {
      if (!active[k]) continue;
      if (nn[k] == a || nn[k] == b) {
        refresh(k);
      } else {
        const double d = dist.at(k, a);
        if (d < nn_dist[k] || (d == nn_dist[k] && a < nn[k])) {
          nn_dist[k] = d;
          nn[k] = a;
        }
      }
    }
    for (std::size_t k = a + 1; k < b; ++k) {
      if (active[k] && nn[k] == b) refresh(k);
    }
    refresh(a);
  }

  std::vector<std::string> labels(2 * n - 1);
  bool any_label = false;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = rows[i]->label;
    any_label = any_label || !labels[i].empty();
  }
  if (!any_label) labels.clear();
  return HierarchyTree::from_parents(parents, std::move(labels), false);
}

}  // namespace lockin::hierarchy

#endif  // LOCKIN_HIERARCHY_HPP
