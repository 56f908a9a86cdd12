#pragma once

#include "hgmn/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace hgmn {

struct Edge {
  int tail = 0;
  int head = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Simple graph with dense 0-based node ids. Undirected edges are stored once
/// with tail < head. Self-loops and duplicate edges are rejected. Values are
/// immutable after construction and safe to share across threads.
struct Graph {
  bool directed = false;
  int num_nodes = 0;
  std::vector<Edge> edges;   // canonical ascending (tail, head) order
  Matrix features;           // num_nodes x d, d may be 0
  Matrix edge_features;      // optional, |edges| x d_e; stored but not consumed
  std::vector<int> anchor_tags;  // sorted ids flagged ground-truth-relevant

  int num_edges() const { return static_cast<int>(edges.size()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

/// Canonicalizes edges (ordering, undirected endpoint swap), checks all Graph
/// invariants and throws ValidationError on violation.
Graph make_graph(bool directed, int num_nodes, std::vector<Edge> edges, Matrix features = {});

/// Total degree per node (in + out for directed graphs).
std::vector<int> node_degrees(const Graph& g);
int max_degree(const Graph& g);

/// Binary adjacency; symmetric with both (i,j) and (j,i) stored for
/// undirected graphs.
SpMat adjacency_matrix(const Graph& g);

/// D^{-1/2} (A + I) D^{-1/2} with D_ii = row-degree of A + 1.
SpMat normalized_adjacency(const Graph& g);

struct LoadedGraph {
  Graph graph;
  std::vector<std::int64_t> original_ids;  // dense id -> external id, ascending
};

/// Parses "u v" edge lines ('#' comments, blank lines allowed). External ids
/// are remapped to a dense ascending range; duplicate lines are deduplicated;
/// self-loops are rejected.
LoadedGraph load_edge_list(std::istream& in, bool directed);
LoadedGraph load_edge_list_text(const std::string& text, bool directed);
LoadedGraph load_edge_list_file(const std::string& path, bool directed);

void write_edge_list(std::ostream& out, const Graph& g);

/// G(n, p) with each unordered pair independently an edge; deterministic for
/// a fixed seed.
Graph generate_erdos_renyi(int n, double p, std::uint64_t seed);

struct AnchorPair {
  int src = 0;
  int tgt = 0;
  bool train = true;
};

/// Ground-truth node correspondences with a train/test split. One-to-one: no
/// src or tgt id appears twice.
struct AnchorSet {
  std::vector<AnchorPair> pairs;

  std::vector<AnchorPair> train_pairs() const;
  std::vector<AnchorPair> test_pairs() const;
  /// tgt column per src row, -1 where no ground truth exists.
  std::vector<int> gt_column_of_row(int num_src_rows) const;
  void validate(int num_src_nodes, int num_tgt_nodes) const;
};

/// Splits pairs into round(train_ratio * n) train anchors via seeded shuffle.
AnchorSet split_anchors(std::vector<std::pair<int, int>> pairs, double train_ratio,
                        std::uint64_t seed);

/// Parses "src tgt" or "src tgt train|test" lines. When no explicit split
/// column is present the train_ratio/seed split is applied.
AnchorSet load_anchor_list(std::istream& in, double train_ratio, std::uint64_t seed);
AnchorSet load_anchor_list_file(const std::string& path, double train_ratio, std::uint64_t seed);

/// Deletes each edge independently with probability p_d; the anchor set is
/// the identity mapping over all nodes, split by train_ratio.
std::pair<Graph, AnchorSet> perturb_delete_edges(const Graph& g, double p_d, std::uint64_t seed,
                                                 double train_ratio);

/// One-hot encoding of node degree with buckets 0..cap (degrees above cap
/// share the last bucket). Width is cap + 1.
Matrix degree_onehot_features(const Graph& g, int cap);

/// Joint one-hot degree features for a graph pair: a shared bucket count so
/// both sides get the same feature width.
std::pair<Matrix, Matrix> joint_degree_onehot_features(const Graph& gs, const Graph& gt,
                                                       int max_cap);

/// CSV feature matrix, row i = features of node i.
Matrix load_feature_csv(std::istream& in);
Matrix load_feature_csv_file(const std::string& path);

}  // namespace hgmn
