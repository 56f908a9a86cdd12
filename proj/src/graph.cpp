#include "hgmn/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace hgmn {

namespace {

void check_features(const Matrix& features, int expected_rows, const char* what) {
  if (features.size() != 0 && features.rows() != expected_rows) {
    throw ValidationError(std::string(what) + " row count " + std::to_string(features.rows()) +
                          " does not match " + std::to_string(expected_rows));
  }
}

}  // namespace

Graph make_graph(bool directed, int num_nodes, std::vector<Edge> edges, Matrix features) {
  if (num_nodes < 0) throw ValidationError("negative node count");
  for (auto& e : edges) {
    if (e.tail < 0 || e.tail >= num_nodes || e.head < 0 || e.head >= num_nodes) {
      throw ValidationError("edge (" + std::to_string(e.tail) + ", " + std::to_string(e.head) +
                            ") out of range for " + std::to_string(num_nodes) + " nodes");
    }
    if (e.tail == e.head) {
      throw ValidationError("self-loop at node " + std::to_string(e.tail));
    }
    if (!directed && e.tail > e.head) std::swap(e.tail, e.head);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw ValidationError("duplicate edge");
  }
  check_features(features, num_nodes, "feature matrix");
  Graph g;
  g.directed = directed;
  g.num_nodes = num_nodes;
  g.edges = std::move(edges);
  g.features = std::move(features);
  return g;
}

std::vector<int> node_degrees(const Graph& g) {
  std::vector<int> deg(static_cast<std::size_t>(g.num_nodes), 0);
  for (const auto& e : g.edges) {
    ++deg[static_cast<std::size_t>(e.tail)];
    ++deg[static_cast<std::size_t>(e.head)];
  }
  return deg;
}

int max_degree(const Graph& g) {
  const auto deg = node_degrees(g);
  return deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
}

SpMat adjacency_matrix(const Graph& g) {
  std::vector<Triplet> trips;
  trips.reserve(g.edges.size() * (g.directed ? 1 : 2));
  for (const auto& e : g.edges) {
    trips.emplace_back(e.tail, e.head, 1.0);
    if (!g.directed) trips.emplace_back(e.head, e.tail, 1.0);
  }
  return sparse_from_triplets(g.num_nodes, g.num_nodes, trips);
}

SpMat normalized_adjacency(const Graph& g) {
  const int n = g.num_nodes;
  std::vector<double> row_deg(static_cast<std::size_t>(n), 1.0);  // self-connection
  for (const auto& e : g.edges) {
    row_deg[static_cast<std::size_t>(e.tail)] += 1.0;
    if (!g.directed) row_deg[static_cast<std::size_t>(e.head)] += 1.0;
  }
  std::vector<double> inv_sqrt(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) inv_sqrt[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(row_deg[static_cast<std::size_t>(i)]);
  std::vector<Triplet> trips;
  trips.reserve(g.edges.size() * 2 + static_cast<std::size_t>(n));
  auto scaled = [&](int i, int j) { return inv_sqrt[static_cast<std::size_t>(i)] * inv_sqrt[static_cast<std::size_t>(j)]; };
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, scaled(i, i));
  for (const auto& e : g.edges) {
    trips.emplace_back(e.tail, e.head, scaled(e.tail, e.head));
    if (!g.directed) trips.emplace_back(e.head, e.tail, scaled(e.head, e.tail));
  }
  return sparse_from_triplets(n, n, trips);
}

namespace {

struct ParsedLine {
  std::vector<std::string> fields;
  long number = 0;
};

std::vector<ParsedLine> significant_lines(std::istream& in) {
  std::vector<ParsedLine> out;
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    ParsedLine parsed;
    parsed.number = number;
    std::string tok;
    while (fields >> tok) parsed.fields.push_back(tok);
    if (!parsed.fields.empty()) out.push_back(std::move(parsed));
  }
  return out;
}

std::int64_t parse_int(const std::string& tok, long line) {
  std::int64_t v = 0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw ParseError("expected integer, got \"" + tok + "\"", line);
  }
  return v;
}

}  // namespace

LoadedGraph load_edge_list(std::istream& in, bool directed) {
  std::vector<std::pair<std::int64_t, std::int64_t>> raw_edges;
  std::set<std::int64_t> ids;
  for (const auto& line : significant_lines(in)) {
    if (line.fields.size() != 2) {
      throw ParseError("expected \"u v\", got " + std::to_string(line.fields.size()) + " fields",
                       line.number);
    }
    const std::int64_t u = parse_int(line.fields[0], line.number);
    const std::int64_t v = parse_int(line.fields[1], line.number);
    if (u == v) {
      throw ValidationError("self-loop \"" + std::to_string(u) + " " + std::to_string(v) +
                            "\" at line " + std::to_string(line.number));
    }
    raw_edges.emplace_back(u, v);
    ids.insert(u);
    ids.insert(v);
  }
  LoadedGraph out;
  out.original_ids.assign(ids.begin(), ids.end());
  std::map<std::int64_t, int> dense;
  for (int i = 0; i < static_cast<int>(out.original_ids.size()); ++i) {
    dense[out.original_ids[static_cast<std::size_t>(i)]] = i;
  }
  std::vector<Edge> edges;
  edges.reserve(raw_edges.size());
  for (const auto& [u, v] : raw_edges) edges.push_back({dense[u], dense[v]});
  if (!directed) {
    for (auto& e : edges) {
      if (e.tail > e.head) std::swap(e.tail, e.head);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  out.graph = make_graph(directed, static_cast<int>(out.original_ids.size()), std::move(edges));
  return out;
}

LoadedGraph load_edge_list_text(const std::string& text, bool directed) {
  std::istringstream in(text);
  return load_edge_list(in, directed);
}

LoadedGraph load_edge_list_file(const std::string& path, bool directed) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open edge list file: " + path);
  return load_edge_list(in, directed);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << "# " << (g.directed ? "directed" : "undirected") << " nodes=" << g.num_nodes
      << " edges=" << g.num_edges() << "\n";
  for (const auto& e : g.edges) out << e.tail << " " << e.head << "\n";
}

Graph generate_erdos_renyi(int n, double p, std::uint64_t seed) {
  if (n <= 0) throw ValidationError("Erdos-Renyi graph needs at least one node");
  if (p < 0.0 || p > 1.0) throw ValidationError("edge probability out of [0, 1]");
  auto rng = make_rng(seed, "erdos_renyi");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (unit(rng) < p) edges.push_back({i, j});
    }
  }
  return make_graph(false, n, std::move(edges));
}

std::vector<AnchorPair> AnchorSet::train_pairs() const {
  std::vector<AnchorPair> out;
  for (const auto& p : pairs) {
    if (p.train) out.push_back(p);
  }
  return out;
}

std::vector<AnchorPair> AnchorSet::test_pairs() const {
  std::vector<AnchorPair> out;
  for (const auto& p : pairs) {
    if (!p.train) out.push_back(p);
  }
  return out;
}

std::vector<int> AnchorSet::gt_column_of_row(int num_src_rows) const {
  std::vector<int> gt(static_cast<std::size_t>(num_src_rows), -1);
  for (const auto& p : pairs) {
    if (p.src >= 0 && p.src < num_src_rows) gt[static_cast<std::size_t>(p.src)] = p.tgt;
  }
  return gt;
}

void AnchorSet::validate(int num_src_nodes, int num_tgt_nodes) const {
  std::unordered_set<int> srcs, tgts;
  for (const auto& p : pairs) {
    if (p.src < 0 || p.src >= num_src_nodes || p.tgt < 0 || p.tgt >= num_tgt_nodes) {
      throw ValidationError("anchor (" + std::to_string(p.src) + ", " + std::to_string(p.tgt) +
                            ") out of range");
    }
    if (!srcs.insert(p.src).second) {
      throw ValidationError("source node " + std::to_string(p.src) + " anchored twice");
    }
    if (!tgts.insert(p.tgt).second) {
      throw ValidationError("target node " + std::to_string(p.tgt) + " anchored twice");
    }
  }
}

AnchorSet split_anchors(std::vector<std::pair<int, int>> pairs, double train_ratio,
                        std::uint64_t seed) {
  if (train_ratio < 0.0 || train_ratio > 1.0) {
    throw ValidationError("train ratio out of [0, 1]");
  }
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto rng = make_rng(seed, "anchor_split");
  std::shuffle(order.begin(), order.end(), rng);
  const auto num_train =
      static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(pairs.size())));
  std::vector<char> is_train(pairs.size(), 0);
  for (std::size_t i = 0; i < std::min(num_train, order.size()); ++i) is_train[order[i]] = 1;
  AnchorSet out;
  out.pairs.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.pairs.push_back({pairs[i].first, pairs[i].second, is_train[i] != 0});
  }
  return out;
}

AnchorSet load_anchor_list(std::istream& in, double train_ratio, std::uint64_t seed) {
  std::vector<std::pair<int, int>> pairs;
  std::vector<char> explicit_train;
  bool any_explicit = false;
  for (const auto& line : significant_lines(in)) {
    if (line.fields.size() != 2 && line.fields.size() != 3) {
      throw ParseError("expected \"src tgt\" or \"src tgt train|test\"", line.number);
    }
    const int src = static_cast<int>(parse_int(line.fields[0], line.number));
    const int tgt = static_cast<int>(parse_int(line.fields[1], line.number));
    pairs.emplace_back(src, tgt);
    if (line.fields.size() == 3) {
      const auto& label = line.fields[2];
      if (label != "train" && label != "test") {
        throw ParseError("split label must be train or test, got \"" + label + "\"", line.number);
      }
      explicit_train.push_back(label == "train" ? 1 : 0);
      any_explicit = true;
    } else {
      explicit_train.push_back(-1);
    }
  }
  if (any_explicit) {
    for (std::size_t i = 0; i < explicit_train.size(); ++i) {
      if (explicit_train[i] == static_cast<char>(-1)) {
        throw ParseError("mixed anchor lines: all rows need a split label once any row has one");
      }
    }
    AnchorSet out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      out.pairs.push_back({pairs[i].first, pairs[i].second, explicit_train[i] != 0});
    }
    return out;
  }
  return split_anchors(std::move(pairs), train_ratio, seed);
}

AnchorSet load_anchor_list_file(const std::string& path, double train_ratio, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open anchor file: " + path);
  return load_anchor_list(in, train_ratio, seed);
}

std::pair<Graph, AnchorSet> perturb_delete_edges(const Graph& g, double p_d, std::uint64_t seed,
                                                 double train_ratio) {
  if (p_d < 0.0 || p_d > 1.0) throw ValidationError("deletion probability out of [0, 1]");
  auto rng = make_rng(seed, "edge_delete");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Edge> kept;
  kept.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    if (unit(rng) >= p_d) kept.push_back(e);
  }
  Graph target = make_graph(g.directed, g.num_nodes, std::move(kept));
  std::vector<std::pair<int, int>> identity;
  identity.reserve(static_cast<std::size_t>(g.num_nodes));
  for (int i = 0; i < g.num_nodes; ++i) identity.emplace_back(i, i);
  AnchorSet anchors = split_anchors(std::move(identity), train_ratio, seed);
  return {std::move(target), std::move(anchors)};
}

Matrix degree_onehot_features(const Graph& g, int cap) {
  if (cap < 0) throw ValidationError("degree bucket cap must be >= 0");
  const auto deg = node_degrees(g);
  Matrix features = Matrix::Zero(g.num_nodes, cap + 1);
  for (int i = 0; i < g.num_nodes; ++i) {
    features(i, std::min(deg[static_cast<std::size_t>(i)], cap)) = 1.0;
  }
  return features;
}

std::pair<Matrix, Matrix> joint_degree_onehot_features(const Graph& gs, const Graph& gt,
                                                       int max_cap) {
  const int cap = std::min(std::max(max_degree(gs), max_degree(gt)), max_cap);
  return {degree_onehot_features(gs, cap), degree_onehot_features(gt, cap)};
}

Matrix load_feature_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("expected number, got \"" + cell + "\"", number);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged feature row", number);
    }
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

Matrix load_feature_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open feature file: " + path);
  return load_feature_csv(in);
}

}  // namespace hgmn
