#ifndef LOCKIN_TOPIC_ID_HPP
#define LOCKIN_TOPIC_ID_HPP

// Topic identification over knowledge-base snapshots: k-block common
// substring similarity, threshold-graph clustering per snapshot, and greedy
// alignment of clusters across consecutive snapshots into topic chains.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lockin/error.hpp"
#include "lockin/io.hpp"
#include "lockin/parallel.hpp"

namespace lockin::topics {

struct Statement {
  std::int64_t id = 0;
  std::string text;
};

/// Lowercase ASCII, collapse whitespace runs to one space, trim.
inline std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

namespace detail {

/// Best totals with at most 1..K blocks. E tracks a block ending at (i, j),
/// F the best over the prefixes.
template <std::size_t K>
std::array<std::uint32_t, K> lcs_blocks(std::string_view a, std::string_view b) {
  constexpr std::int32_t kNeg = -1;
  const std::size_t m = b.size();
  std::array<std::vector<std::int32_t>, K + 1> e_prev, e_cur, f_prev, f_cur;
  for (std::size_t c = 0; c <= K; ++c) {
    e_prev[c].assign(m + 1, kNeg);
    e_cur[c].assign(m + 1, kNeg);
    f_prev[c].assign(m + 1, 0);
    f_cur[c].assign(m + 1, 0);
  }
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t c = 1; c <= K; ++c) {
      e_cur[c][0] = kNeg;
      f_cur[c][0] = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        std::int32_t e = kNeg;
        if (a[i - 1] == b[j - 1]) e = 1 + std::max(e_prev[c][j - 1], f_prev[c - 1][j - 1]);
        e_cur[c][j] = e;
        f_cur[c][j] = std::max({f_prev[c][j], f_cur[c][j - 1], e});
      }
    }
    std::swap(e_prev, e_cur);
    std::swap(f_prev, f_cur);
  }
  std::array<std::uint32_t, K> out{};
  for (std::size_t c = 1; c <= K; ++c) out[c - 1] = static_cast<std::uint32_t>(f_prev[c][m]);
  return out;
}

}  // namespace detail

/// Largest total length of at most k non-overlapping common blocks taken in
/// the same order in both strings. Operates on the raw characters.
inline std::uint32_t lcs_k(std::string_view a, std::string_view b, int k) {
  if (k < 1) throw InvalidParameter("lcs_k needs k >= 1");
  if (a.empty() || b.empty()) return 0;
  switch (k) {
    case 1: return detail::lcs_blocks<1>(a, b)[0];
    case 2: return detail::lcs_blocks<2>(a, b)[1];
    case 3: return detail::lcs_blocks<3>(a, b)[2];
    default: break;
  }
  // Beyond 3 blocks: same recurrences with full tables.
  const std::size_t n = a.size(), m = b.size();
  const auto kk = static_cast<std::size_t>(k);
  std::vector<std::vector<std::int32_t>> E(kk + 1, std::vector<std::int32_t>((n + 1) * (m + 1), -1));
  std::vector<std::vector<std::int32_t>> F(kk + 1, std::vector<std::int32_t>((n + 1) * (m + 1), 0));
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t c = 1; c <= kk; ++c)
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 1; j <= m; ++j) {
        if (a[i - 1] == b[j - 1]) E[c][at(i, j)] = 1 + std::max(E[c][at(i - 1, j - 1)], F[c - 1][at(i - 1, j - 1)]);
        F[c][at(i, j)] = std::max({F[c][at(i - 1, j)], F[c][at(i, j - 1)], E[c][at(i, j)]});
      }
  return static_cast<std::uint32_t>(F[kk][at(n, m)]);
}

/// LCS_1 + LCS_2 + LCS_3.
inline std::uint32_t similarity(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) return 0;
  const auto r = detail::lcs_blocks<3>(a, b);
  return r[0] + r[1] + r[2];
}

// ---------------------------------------------------------------------------
// Per-snapshot clustering

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

struct SnapshotClustering {
  std::size_t t = 0;
  std::vector<Statement> statements;                 // normalized text, sorted by id
  std::vector<std::vector<std::int64_t>> components;  // sorted ids, ordered by smallest id
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  std::uint32_t threshold = 0;
};

/// Edge iff similarity > threshold; components are the connected components.
inline SnapshotClustering cluster_snapshot(std::vector<Statement> statements, std::int64_t threshold, std::size_t t = 0,
                                           std::size_t threads = 1) {
  if (threshold < 0) throw InvalidParameter("similarity threshold must be >= 0");
  std::sort(statements.begin(), statements.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  for (std::size_t i = 1; i < statements.size(); ++i) {
    if (statements[i].id == statements[i - 1].id) {
      throw ValidationError("duplicate statement id " + std::to_string(statements[i].id) + " in snapshot " +
                                std::to_string(t),
                            statements[i].id);
    }
  }
  for (auto& s : statements) s.text = normalize(s.text);

  SnapshotClustering out;
  out.t = t;
  out.threshold = static_cast<std::uint32_t>(threshold);
  const std::size_t n = statements.size();
  std::vector<std::vector<std::size_t>> adjacent(n);
  parallel_for(n, threads, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (similarity(statements[i].text, statements[j].text) > static_cast<std::uint32_t>(threshold)) {
        adjacent[i].push_back(j);
      }
    }
  });
  UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : adjacent[i]) {
      uf.unite(i, j);
      out.edges.emplace_back(statements[i].id, statements[j].id);
    }
  }
  std::vector<std::size_t> comp_of_root(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = uf.find(i);
    if (comp_of_root[r] == n) {
      comp_of_root[r] = out.components.size();
      out.components.emplace_back();
    }
    out.components[comp_of_root[r]].push_back(statements[i].id);
  }
  out.statements = std::move(statements);
  return out;
}

// ---------------------------------------------------------------------------
// Chains

struct ChainLayer {
  std::size_t t = 0;
  std::size_t component = 0;
  std::vector<std::int64_t> member_ids;

  bool operator==(const ChainLayer&) const = default;
};

struct TopicChain {
  std::size_t chain_id = 0;
  std::vector<ChainLayer> layers;
  std::uint64_t weight = 0;

  bool operator==(const TopicChain&) const = default;
};

/// Weight between component a of snapshot t and component b of snapshot t + 1.
using CrossWeight = std::function<std::uint64_t(std::size_t t, std::size_t a, std::size_t b)>;

/// Greedy forest of chains over the layered component graph: edges in
/// descending weight (ties by t, then a, then b), accepted when neither end
/// is already matched on that side. Every component ends up in exactly one
/// chain; unmatched components form chains of length one. Chains are ordered
/// by their first (t, component).
inline std::vector<TopicChain> align_chains(const std::vector<SnapshotClustering>& snapshots,
                                            const CrossWeight& cross_weight) {
  if (snapshots.empty()) throw InvalidParameter("align_chains needs at least one snapshot");
  struct Edge {
    std::uint64_t w;
    std::size_t t, a, b;
  };
  std::vector<Edge> edges;
  for (std::size_t t = 0; t + 1 < snapshots.size(); ++t) {
    for (std::size_t a = 0; a < snapshots[t].components.size(); ++a) {
      for (std::size_t b = 0; b < snapshots[t + 1].components.size(); ++b) {
        const std::uint64_t w = cross_weight(t, a, b);
        if (w > 0) edges.push_back({w, t, a, b});
      }
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    if (x.w != y.w) return x.w > y.w;
    if (x.t != y.t) return x.t < y.t;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> next(snapshots.size()), prev(snapshots.size());
  std::vector<std::vector<std::uint64_t>> next_w(snapshots.size());
  for (std::size_t t = 0; t < snapshots.size(); ++t) {
    next[t].assign(snapshots[t].components.size(), kNone);
    next_w[t].assign(snapshots[t].components.size(), 0);
    prev[t].assign(snapshots[t].components.size(), kNone);
  }
  for (const auto& e : edges) {
    if (next[e.t][e.a] != kNone || prev[e.t + 1][e.b] != kNone) continue;
    next[e.t][e.a] = e.b;
    next_w[e.t][e.a] = e.w;
    prev[e.t + 1][e.b] = e.a;
  }

  std::vector<TopicChain> chains;
  for (std::size_t t = 0; t < snapshots.size(); ++t) {
    for (std::size_t c = 0; c < snapshots[t].components.size(); ++c) {
      if (prev[t][c] != kNone) continue;
      TopicChain chain;
      chain.chain_id = chains.size();
      std::size_t layer = t, comp = c;
      while (true) {
        chain.layers.push_back({layer, comp, snapshots[layer].components[comp]});
        if (layer + 1 >= snapshots.size() || next[layer][comp] == kNone) break;
        chain.weight += next_w[layer][comp];
        comp = next[layer][comp];
        ++layer;
      }
      chains.push_back(std::move(chain));
    }
  }
  return chains;
}

/// Cross weight = number of pairs (x in a, y in b) with similarity above the
/// threshold. Precomputes all adjacent-layer weights.
inline CrossWeight similarity_cross_weight(const std::vector<SnapshotClustering>& snapshots, std::int64_t threshold,
                                           std::size_t threads = 1) {
  if (threshold < 0) throw InvalidParameter("similarity threshold must be >= 0");
  std::vector<std::vector<std::vector<std::uint64_t>>> table(snapshots.empty() ? 0 : snapshots.size() - 1);
  for (std::size_t t = 0; t + 1 < snapshots.size(); ++t) {
    const auto& s0 = snapshots[t];
    const auto& s1 = snapshots[t + 1];
    auto component_index = [](const SnapshotClustering& s) {
      std::vector<std::size_t> idx(s.statements.size());
      for (std::size_t c = 0; c < s.components.size(); ++c) {
        for (auto id : s.components[c]) {
          const auto it = std::lower_bound(s.statements.begin(), s.statements.end(), id,
                                           [](const Statement& st, std::int64_t v) { return st.id < v; });
          idx[static_cast<std::size_t>(it - s.statements.begin())] = c;
        }
      }
      return idx;
    };
    const auto c0 = component_index(s0);
    const auto c1 = component_index(s1);
    std::vector<std::vector<std::uint64_t>> rows(s0.statements.size(), std::vector<std::uint64_t>(s1.components.size()));
    parallel_for(s0.statements.size(), threads, [&](std::size_t i) {
      for (std::size_t j = 0; j < s1.statements.size(); ++j) {
        if (similarity(s0.statements[i].text, s1.statements[j].text) > static_cast<std::uint32_t>(threshold)) {
          ++rows[i][c1[j]];
        }
      }
    });
    auto& w = table[t];
    w.assign(s0.components.size(), std::vector<std::uint64_t>(s1.components.size(), 0));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t b = 0; b < rows[i].size(); ++b) w[c0[i]][b] += rows[i][b];
  }
  return [table = std::move(table)](std::size_t t, std::size_t a, std::size_t b) { return table.at(t).at(a).at(b); };
}

// ---------------------------------------------------------------------------
// Files

/// One snapshot file: [{"id":1,"statement":"..."}, ...].
inline std::vector<Statement> parse_snapshot(std::string_view bytes, std::string_view name) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error&) {
    throw ValidationError("snapshot " + std::string(name) + " is not valid JSON");
  }
  if (!doc.is_array()) throw ValidationError("snapshot " + std::string(name) + " must be a JSON array");
  std::vector<Statement> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("id") || !item["id"].is_number_integer() || !item.contains("statement") ||
        !item["statement"].is_string()) {
      throw ValidationError("snapshot " + std::string(name) + " entries need integer \"id\" and string \"statement\"");
    }
    out.push_back({item["id"].get<std::int64_t>(), item["statement"].get<std::string>()});
  }
  return out;
}

/// Snapshot files NNN.json of a directory in numeric order; the position in
/// that order is the snapshot index.
inline std::vector<std::vector<Statement>> load_snapshot_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<std::pair<std::uint64_t, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    const auto stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); })) {
      continue;
    }
    files.emplace_back(std::stoull(stem), entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no NNN.json snapshot files in " + dir.string());
  std::vector<std::vector<Statement>> out;
  for (const auto& [num, path] : files) out.push_back(parse_snapshot(io::read_file(path), path.filename().string()));
  return out;
}

inline std::string chains_json(const std::vector<TopicChain>& chains) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& c : chains) {
    nlohmann::ordered_json chain;
    chain["chain_id"] = c.chain_id;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const auto& l : c.layers) {
      nlohmann::ordered_json layer;
      layer["t"] = l.t;
      layer["component"] = l.component;
      layer["member_ids"] = l.member_ids;
      layers.push_back(std::move(layer));
    }
    chain["layers"] = std::move(layers);
    chain["weight"] = c.weight;
    doc.push_back(std::move(chain));
  }
  return doc.dump() + "\n";
}

inline std::vector<TopicChain> load_chains(std::string_view bytes) {
  std::vector<TopicChain> out;
  try {
    const auto doc = nlohmann::json::parse(bytes);
    for (const auto& c : doc) {
      TopicChain chain;
      chain.chain_id = c.at("chain_id").get<std::size_t>();
      chain.weight = c.at("weight").get<std::uint64_t>();
      for (const auto& l : c.at("layers")) {
        chain.layers.push_back(
            {l.at("t").get<std::size_t>(), l.at("component").get<std::size_t>(), l.at("member_ids").get<std::vector<std::int64_t>>()});
      }
      out.push_back(std::move(chain));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("chain JSON is malformed: ") + e.what());
  }
  return out;
}

}  // namespace lockin::topics

#endif  // LOCKIN_TOPIC_ID_HPP
