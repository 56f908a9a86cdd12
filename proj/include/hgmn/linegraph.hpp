#pragma once

#include "hgmn/graph.hpp"
#include "hgmn/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hgmn {

/// The k-th iterated line graph. Node i of the level represents edge i of the
/// level below (canonical edge order); `graph` holds the level's structure
/// and lifted features.
struct LineGraphLevel {
  int order = 1;                           // k >= 1
  std::vector<Edge> parent_edge_of_node;   // level-k node -> level-(k-1) edge
  Graph graph;                             // adjacency + features X^(k)
  SpMat incidence;                         // |V^(k-1)| x |V^(k)|, two 1s per column
};

/// Per-level degree caps d^(k); level k is pruned to cap degree_caps[k]
/// before level k+1 is built. Levels without a cap are left untouched.
struct PruneConfig {
  std::vector<int> degree_caps;

  std::optional<int> cap_for_level(int k) const {
    if (k < 0 || k >= static_cast<int>(degree_caps.size())) return std::nullopt;
    return degree_caps[static_cast<std::size_t>(k)];
  }
  bool empty() const { return degree_caps.empty(); }
};

/// Levels 0..m plus composed incidence products. composed(k) maps original
/// nodes to level-k nodes; composed(0) is the identity.
struct IlgStack {
  Graph base;
  std::vector<LineGraphLevel> levels;        // k = 1..m
  std::vector<SpMat> composed;               // composed[k] = H^(k), k = 0..m
  std::vector<double> pre_prune_max_degree;  // d_max^(l) before pruning, l = 0..m-1

  int order() const { return static_cast<int>(levels.size()); }
  const Graph& level_graph(int k) const { return k == 0 ? base : levels[static_cast<std::size_t>(k - 1)].graph; }
  const SpMat& composed_incidence() const { return composed.back(); }
  SpMat row_normalized(int k) const;
  SpMat row_normalized_top() const { return row_normalized(order()); }
};

/// One application of the line-graph operation. Undirected: line nodes are
/// adjacent iff their edges share an endpoint. Directed: e1 -> e2 iff
/// head(e1) == tail(e2) and e1 != e2. Throws EmptyLevelError on edgeless
/// input.
LineGraphLevel build_line_graph(const Graph& level_graph, int order);

/// H^T H - 2I for a valid incidence matrix (exactly two 1s per column);
/// binary symmetric with zero diagonal. Matches the shared-endpoint rule for
/// undirected graphs only.
SpMat adjacency_from_incidence(const SpMat& h);

/// Row i of the result is the concatenation of the parent feature rows of
/// line-node i's two endpoints: ascending node id for undirected edges,
/// (tail, head) for directed ones. Width doubles.
Matrix lift_features(const std::vector<Edge>& parent_edges, const Matrix& x_prev, bool directed);

/// D_H^{-1} H; all-zero rows stay zero.
SpMat row_normalize_incidence(const SpMat& h);

/// Caps each unprotected node to at most d_k incident edges via seeded
/// sampling. An edge survives when either endpoint is protected or both
/// endpoints selected it.
Graph bounded_degree_prune(const Graph& g, int d_k, const std::vector<char>& protected_nodes,
                           std::uint64_t seed);

/// Builds levels 1..m iteratively, pruning level k (anchors protected through
/// the composed incidence) before constructing level k+1. m = 0 yields a
/// stack whose composed incidence is the identity.
IlgStack build_ilg_stack(const Graph& g, int m, const PruneConfig& prune, std::uint64_t seed);

/// Whether the binarized patterns of (A + I)^m and H^(m) H^(m)^T coincide;
/// exact integer arithmetic on the unpruned stack. Undirected input only.
bool lemma1_check(const Graph& g, int m);

/// The pattern identity requires every connected component to carry at least
/// m edges: an isolated vertex has an empty H row already at m = 1, and a
/// lone-edge component loses its row at m = 2.
bool lemma1_domain_ok(const Graph& g, int m);

/// Upper bound |V| * prod_{l<k} (d_max^(l) / 2) that every built level obeys;
/// asserted during construction and exposed for reporting.
std::vector<double> level_size_bounds(const IlgStack& stack);

/// Writes per-level edge lists, incidence triplet files and a JSON manifest.
void export_stack(const IlgStack& stack, const std::string& dir, std::uint64_t seed,
                  const PruneConfig& prune);

}  // namespace hgmn
