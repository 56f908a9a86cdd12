#include "hgmn/linegraph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>

namespace hgmn {

namespace {

// Unpadded count-based degrees used by the size bound: total degree for both
// orientations, so |E| <= |V| * d_max / 2 holds for directed graphs too.
double bound_degree(const Graph& g) { return static_cast<double>(max_degree(g)); }

void check_incidence(const SpMat& h) {
  std::vector<int> col_count(static_cast<std::size_t>(h.cols()), 0);
  for (Eigen::Index r = 0; r < h.outerSize(); ++r) {
    for (SpMat::InnerIterator it(h, r); it; ++it) {
      if (it.value() != 1.0) {
        throw ValidationError("incidence entries must be exactly 1");
      }
      ++col_count[static_cast<std::size_t>(it.col())];
    }
  }
  for (std::size_t c = 0; c < col_count.size(); ++c) {
    if (col_count[c] != 2) {
      throw ValidationError("incidence column " + std::to_string(c) + " has " +
                            std::to_string(col_count[c]) + " nonzeros, expected 2");
    }
  }
}

}  // namespace

LineGraphLevel build_line_graph(const Graph& level_graph, int order) {
  if (level_graph.num_edges() == 0) throw EmptyLevelError(order);
  const int num_line_nodes = level_graph.num_edges();

  std::vector<Edge> line_edges;
  if (!level_graph.directed) {
    // Two edges are adjacent iff they share an endpoint; in a simple graph
    // each adjacent pair shares exactly one node, so no deduplication needed.
    std::vector<std::vector<int>> incident(static_cast<std::size_t>(level_graph.num_nodes));
    for (int e = 0; e < num_line_nodes; ++e) {
      incident[static_cast<std::size_t>(level_graph.edges[static_cast<std::size_t>(e)].tail)].push_back(e);
      incident[static_cast<std::size_t>(level_graph.edges[static_cast<std::size_t>(e)].head)].push_back(e);
    }
    for (const auto& edges_at_node : incident) {
      for (std::size_t a = 0; a < edges_at_node.size(); ++a) {
        for (std::size_t b = a + 1; b < edges_at_node.size(); ++b) {
          line_edges.push_back({edges_at_node[a], edges_at_node[b]});
        }
      }
    }
  } else {
    std::vector<std::vector<int>> by_tail(static_cast<std::size_t>(level_graph.num_nodes));
    for (int e = 0; e < num_line_nodes; ++e) {
      by_tail[static_cast<std::size_t>(level_graph.edges[static_cast<std::size_t>(e)].tail)].push_back(e);
    }
    for (int e1 = 0; e1 < num_line_nodes; ++e1) {
      const int mid = level_graph.edges[static_cast<std::size_t>(e1)].head;
      for (int e2 : by_tail[static_cast<std::size_t>(mid)]) {
        if (e2 != e1) line_edges.push_back({e1, e2});
      }
    }
  }

  LineGraphLevel level;
  level.order = order;
  level.parent_edge_of_node = level_graph.edges;
  Matrix lifted;
  if (level_graph.features.size() != 0) {
    lifted = lift_features(level_graph.edges, level_graph.features, level_graph.directed);
  }
  level.graph =
      make_graph(level_graph.directed, num_line_nodes, std::move(line_edges), std::move(lifted));

  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(num_line_nodes) * 2);
  for (int e = 0; e < num_line_nodes; ++e) {
    const auto& parent = level_graph.edges[static_cast<std::size_t>(e)];
    trips.emplace_back(parent.tail, e, 1.0);
    trips.emplace_back(parent.head, e, 1.0);
  }
  level.incidence = sparse_from_triplets(level_graph.num_nodes, num_line_nodes, trips);
  return level;
}

SpMat adjacency_from_incidence(const SpMat& h) {
  check_incidence(h);
  SpMat gram = (SpMat(h.transpose()) * h).pruned();
  std::vector<Triplet> trips;
  for (Eigen::Index r = 0; r < gram.outerSize(); ++r) {
    for (SpMat::InnerIterator it(gram, r); it; ++it) {
      if (it.row() == it.col()) continue;  // diagonal is exactly 2, removed by -2I
      // Off-diagonal entries are in {0, 1} for simple graphs; clamp and check.
      if (it.value() != 1.0) {
        throw ValidationError("incidence gram off-diagonal entry " + std::to_string(it.value()) +
                              ", expected 1");
      }
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), 1.0);
    }
  }
  return sparse_from_triplets(h.cols(), h.cols(), trips);
}

Matrix lift_features(const std::vector<Edge>& parent_edges, const Matrix& x_prev, bool directed) {
  const Eigen::Index d = x_prev.cols();
  Matrix lifted(static_cast<Eigen::Index>(parent_edges.size()), 2 * d);
  for (Eigen::Index i = 0; i < lifted.rows(); ++i) {
    auto e = parent_edges[static_cast<std::size_t>(i)];
    if (!directed && e.tail > e.head) std::swap(e.tail, e.head);
    if (e.tail >= x_prev.rows() || e.head >= x_prev.rows()) {
      throw ValidationError("parent edge endpoint outside feature matrix");
    }
    lifted.block(i, 0, 1, d) = x_prev.row(e.tail);
    lifted.block(i, d, 1, d) = x_prev.row(e.head);
  }
  return lifted;
}

SpMat row_normalize_incidence(const SpMat& h) {
  std::vector<double> row_sum(static_cast<std::size_t>(h.rows()), 0.0);
  for (Eigen::Index r = 0; r < h.outerSize(); ++r) {
    for (SpMat::InnerIterator it(h, r); it; ++it) row_sum[static_cast<std::size_t>(it.row())] += it.value();
  }
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(h.nonZeros()));
  for (Eigen::Index r = 0; r < h.outerSize(); ++r) {
    for (SpMat::InnerIterator it(h, r); it; ++it) {
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value() / row_sum[static_cast<std::size_t>(it.row())]);
    }
  }
  return sparse_from_triplets(h.rows(), h.cols(), trips);
}

SpMat IlgStack::row_normalized(int k) const {
  return row_normalize_incidence(composed[static_cast<std::size_t>(k)]);
}

Graph bounded_degree_prune(const Graph& g, int d_k, const std::vector<char>& protected_nodes,
                           std::uint64_t seed) {
  if (d_k < 1) throw ValidationError("degree cap must be >= 1");
  if (static_cast<int>(protected_nodes.size()) != g.num_nodes) {
    throw ValidationError("protected flag count does not match node count");
  }
  // Each node selects min(degree, d_k) of its incident edges; an edge
  // survives if both endpoints selected it or either endpoint is protected.
  std::vector<std::vector<int>> incident(static_cast<std::size_t>(g.num_nodes));
  for (int e = 0; e < g.num_edges(); ++e) {
    incident[static_cast<std::size_t>(g.edges[static_cast<std::size_t>(e)].tail)].push_back(e);
    incident[static_cast<std::size_t>(g.edges[static_cast<std::size_t>(e)].head)].push_back(e);
  }
  auto rng = make_rng(seed, "degree_prune");
  std::vector<int> votes(static_cast<std::size_t>(g.num_edges()), 0);
  for (int v = 0; v < g.num_nodes; ++v) {
    auto& edges_at_v = incident[static_cast<std::size_t>(v)];
    const int keep = std::min<int>(d_k, static_cast<int>(edges_at_v.size()));
    // Partial Fisher-Yates; the first `keep` slots are the selection.
    for (int i = 0; i < keep; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(edges_at_v.size()) - 1);
      std::swap(edges_at_v[static_cast<std::size_t>(i)], edges_at_v[static_cast<std::size_t>(pick(rng))]);
      ++votes[static_cast<std::size_t>(edges_at_v[static_cast<std::size_t>(i)])];
    }
  }
  std::vector<Edge> kept;
  kept.reserve(g.edges.size());
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto& edge = g.edges[static_cast<std::size_t>(e)];
    const bool shielded = protected_nodes[static_cast<std::size_t>(edge.tail)] ||
                          protected_nodes[static_cast<std::size_t>(edge.head)];
    if (shielded || votes[static_cast<std::size_t>(e)] == 2) kept.push_back(edge);
  }
  Graph pruned = make_graph(g.directed, g.num_nodes, std::move(kept), g.features);
  pruned.anchor_tags = g.anchor_tags;
  return pruned;
}

IlgStack build_ilg_stack(const Graph& g, int m, const PruneConfig& prune, std::uint64_t seed) {
  if (m < 0) throw ValidationError("line graph order must be >= 0");
  IlgStack stack;
  stack.base = g;
  stack.composed.push_back(sparse_identity(g.num_nodes));

  // Anchored original nodes, used to derive per-level protected sets.
  std::vector<char> anchor_mark(static_cast<std::size_t>(g.num_nodes), 0);
  for (int node : g.anchor_tags) {
    if (node < 0 || node >= g.num_nodes) throw ValidationError("anchor tag out of range");
    anchor_mark[static_cast<std::size_t>(node)] = 1;
  }

  Graph current = g;
  for (int k = 0; k < m; ++k) {
    if (auto cap = prune.cap_for_level(k)) {
      // A level-k node is protected when its composed-incidence column
      // touches any anchored original node.
      const SpMat& h = stack.composed[static_cast<std::size_t>(k)];
      std::vector<char> protected_nodes(static_cast<std::size_t>(current.num_nodes), 0);
      for (Eigen::Index r = 0; r < h.outerSize(); ++r) {
        if (!anchor_mark[static_cast<std::size_t>(r)]) continue;
        for (SpMat::InnerIterator it(h, r); it; ++it) {
          protected_nodes[static_cast<std::size_t>(it.col())] = 1;
        }
      }
      stack.pre_prune_max_degree.push_back(bound_degree(current));
      current = bounded_degree_prune(current, *cap, protected_nodes,
                                     substream_seed(seed, "prune_level", static_cast<std::uint64_t>(k)));
    } else {
      stack.pre_prune_max_degree.push_back(bound_degree(current));
    }
    try {
      stack.levels.push_back(build_line_graph(current, k + 1));
    } catch (const EmptyLevelError&) {
      throw EmptyLevelError(k + 1);
    }
    const auto& level = stack.levels.back();
    stack.composed.push_back(
        SpMat((stack.composed[static_cast<std::size_t>(k)] * level.incidence).pruned()));
    current = level.graph;

    // Size bound: |V^(k)| <= |V| * prod_{l<k} (d_max^(l) / 2), degrees
    // measured before pruning.
    double bound = static_cast<double>(g.num_nodes);
    for (double dmax : stack.pre_prune_max_degree) bound *= dmax / 2.0;
    if (static_cast<double>(current.num_nodes) > bound + 1e-9) {
      throw ValidationError("line graph level " + std::to_string(k + 1) +
                            " exceeds its size bound");
    }
  }
  return stack;
}

std::vector<double> level_size_bounds(const IlgStack& stack) {
  std::vector<double> bounds{static_cast<double>(stack.base.num_nodes)};
  double bound = static_cast<double>(stack.base.num_nodes);
  for (double dmax : stack.pre_prune_max_degree) {
    bound *= dmax / 2.0;
    bounds.push_back(bound);
  }
  return bounds;
}

bool lemma1_check(const Graph& g, int m) {
  if (g.directed) throw ValidationError("lemma check is stated for undirected graphs");
  IlgStack stack = build_ilg_stack(g, m, PruneConfig{}, 0);

  const int n = g.num_nodes;
  IntMatrix walk = IntMatrix::Identity(n, n);
  IntMatrix a_plus_i = IntMatrix::Identity(n, n);
  for (const auto& e : g.edges) {
    a_plus_i(e.tail, e.head) = 1;
    a_plus_i(e.head, e.tail) = 1;
  }
  for (int i = 0; i < m; ++i) walk = walk * a_plus_i;

  IntMatrix h = IntMatrix::Zero(n, stack.composed_incidence().cols());
  for (const auto& t : sparse_triplets(stack.composed_incidence())) {
    h(t.row(), t.col()) = static_cast<std::int64_t>(t.value());
  }
  IntMatrix gram = h * h.transpose();

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if ((walk(i, j) > 0) != (gram(i, j) > 0)) return false;
    }
  }
  return true;
}

bool lemma1_domain_ok(const Graph& g, int m) {
  if (g.directed) return false;
  // Union-find over nodes; count edges per component root.
  std::vector<int> parent(static_cast<std::size_t>(g.num_nodes));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (const auto& e : g.edges) parent[static_cast<std::size_t>(find(e.tail))] = find(e.head);
  std::vector<int> edge_count(static_cast<std::size_t>(g.num_nodes), 0);
  for (const auto& e : g.edges) ++edge_count[static_cast<std::size_t>(find(e.tail))];
  for (int v = 0; v < g.num_nodes; ++v) {
    if (edge_count[static_cast<std::size_t>(find(v))] < m) return false;
  }
  return true;
}

void export_stack(const IlgStack& stack, const std::string& dir, std::uint64_t seed,
                  const PruneConfig& prune) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["order"] = stack.order();
  manifest["seed"] = seed;
  manifest["prune"] = prune.degree_caps;
  manifest["base"] = {{"nodes", stack.base.num_nodes},
                      {"edges", stack.base.num_edges()},
                      {"directed", stack.base.directed}};
  const auto bounds = level_size_bounds(stack);
  nlohmann::json levels = nlohmann::json::array();

  {
    std::ofstream out(fs::path(dir) / "level0.edges");
    write_edge_list(out, stack.base);
  }
  for (int k = 1; k <= stack.order(); ++k) {
    const auto& level = stack.levels[static_cast<std::size_t>(k - 1)];
    {
      std::ofstream out(fs::path(dir) / ("level" + std::to_string(k) + ".edges"));
      write_edge_list(out, level.graph);
    }
    {
      std::ofstream out(fs::path(dir) / ("incidence" + std::to_string(k - 1) + "_" +
                                         std::to_string(k) + ".txt"));
      for (const auto& t : sparse_triplets(level.incidence)) {
        out << t.row() << " " << t.col() << " " << t.value() << "\n";
      }
    }
    levels.push_back({{"order", k},
                      {"nodes", level.graph.num_nodes},
                      {"edges", level.graph.num_edges()},
                      {"size_bound", bounds[static_cast<std::size_t>(k)]}});
  }
  {
    std::ofstream out(fs::path(dir) / "composed_incidence.txt");
    for (const auto& t : sparse_triplets(stack.composed_incidence())) {
      out << t.row() << " " << t.col() << " " << t.value() << "\n";
    }
  }
  manifest["levels"] = levels;
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << manifest.dump(2) << "\n";
}

}  // namespace hgmn
