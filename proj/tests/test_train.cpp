#include <doctest.h>

#include "hgmn/train.hpp"

using namespace hgmn;

namespace {

Matrix random_features(int n, int d, std::uint64_t seed) {
  auto rng = make_rng(seed, "test_train");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = normal(rng);
  }
  return m;
}

TrainConfig small_config(int m, bool hierarchical = false) {
  TrainConfig cfg;
  cfg.m = m;
  cfg.hierarchical = hierarchical;
  cfg.epochs = 30;
  cfg.seed = 5;
  cfg.gnn.layers = 2;
  cfg.gnn.hidden_dim = 12;
  cfg.gnn.mlp_hidden = 10;
  return cfg;
}

/// Identical source/target pair with injective random features plus the
/// identity anchor split.
std::tuple<Graph, Graph, AnchorSet> self_matching_pair(int n, std::uint64_t seed) {
  Graph g = generate_erdos_renyi(n, 0.25, seed);
  g.features = random_features(n, 8, substream_seed(seed, "features"));
  std::vector<std::pair<int, int>> identity;
  for (int i = 0; i < n; ++i) identity.emplace_back(i, i);
  AnchorSet anchors = split_anchors(std::move(identity), 0.7, seed);
  return {g, g, anchors};
}

}  // namespace

TEST_CASE("local-only self matching reaches perfect precision") {
  auto [gs, gt, anchors] = self_matching_pair(20, 17);
  TrainConfig cfg = small_config(0);
  cfg.alpha = 0.0;
  cfg.epochs = 60;
  auto result = train_khgmn(gs, gt, anchors, cfg);
  CHECK(precision_at_k(result.final_correspondence, anchors.test_pairs(), 1) == 1.0);
  CHECK(result.loss_curve.size() == 60);
  CHECK(result.loss_curve.back() < result.loss_curve.front());
}

TEST_CASE("training is deterministic per seed") {
  auto [gs, gt, anchors] = self_matching_pair(14, 23);
  SUBCASE("joint variant") {
    TrainConfig cfg = small_config(1);
    auto a = train_khgmn(gs, gt, anchors, cfg);
    auto b = train_khgmn(gs, gt, anchors, cfg);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.final_correspondence.dense == b.final_correspondence.dense);
  }
  SUBCASE("hierarchical variant") {
    TrainConfig cfg = small_config(1, /*hierarchical=*/true);
    auto a = train_hierarchical(gs, gt, anchors, cfg);
    auto b = train_hierarchical(gs, gt, anchors, cfg);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.final_correspondence.dense == b.final_correspondence.dense);
  }
}

TEST_CASE("hierarchical stages") {
  auto [gs, gt, anchors] = self_matching_pair(14, 29);
  TrainConfig cfg = small_config(1, /*hierarchical=*/true);
  auto result = train_hierarchical(gs, gt, anchors, cfg);

  SUBCASE("one correspondence per level") {
    CHECK(result.level_correspondences.size() == 2);
    CHECK(result.params.count("level0") == 1);
    CHECK(result.params.count("level1") == 1);
  }
  SUBCASE("level-1 features are two concatenated embeddings wide") {
    // first linear map of the level-1 encoder consumes 2 * hidden_dim
    const auto& level1 = result.params.at("level1");
    CHECK(level1.at("enc/L00/mlp00_w").rows() == 2 * cfg.gnn.hidden_dim);
  }
  SUBCASE("stage zero equals the standalone local-only run") {
    TrainConfig local = cfg;
    local.hierarchical = false;
    local.m = 0;
    auto standalone = train_khgmn(gs, gt, anchors, local);
    CHECK(standalone.final_correspondence.dense == result.level_correspondences[0].dense);
  }
}

TEST_CASE("top-k sparse training keeps ground truth in support") {
  auto [gs, gt, anchors] = self_matching_pair(16, 31);
  TrainConfig cfg = small_config(0);
  cfg.topk = 3;
  cfg.epochs = 10;
  auto result = train_khgmn(gs, gt, anchors, cfg);
  const auto& s = result.final_correspondence;
  for (const auto& p : anchors.pairs) {
    CHECK(s.dense(p.src, p.tgt) > 0.0);
  }
  // masked entries carry no mass
  int zero_entries = 0;
  for (int i = 0; i < s.rows; ++i) {
    for (int j = 0; j < s.cols; ++j) zero_entries += s.dense(i, j) == 0.0;
  }
  CHECK(zero_entries > 0);
}

TEST_CASE("validation errors") {
  auto [gs, gt, anchors] = self_matching_pair(10, 37);
  SUBCASE("alpha range") {
    TrainConfig cfg = small_config(1);
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(train_khgmn(gs, gt, anchors, cfg), ValidationError);
  }
  SUBCASE("hierarchical needs m >= 1") {
    TrainConfig cfg = small_config(0, true);
    CHECK_THROWS_AS(train_hierarchical(gs, gt, anchors, cfg), ValidationError);
  }
  SUBCASE("missing features") {
    Graph bare = generate_erdos_renyi(10, 0.3, 1);
    CHECK_THROWS_AS(train_khgmn(bare, bare, anchors, small_config(0)), ValidationError);
  }
  SUBCASE("source larger than target") {
    Graph big = generate_erdos_renyi(12, 0.3, 2);
    big.features = random_features(12, 8, 3);
    CHECK_THROWS_AS(train_khgmn(big, gs, anchors, small_config(0)), ValidationError);
  }
  SUBCASE("feature width mismatch") {
    Graph other = gt;
    other.features = random_features(10, 5, 4);
    CHECK_THROWS_AS(train_khgmn(gs, other, anchors, small_config(0)), ValidationError);
  }
  SUBCASE("stack too deep for the pair") {
    // P3's third iterate is empty
    Graph p3 = make_graph(false, 3, {{0, 1}, {1, 2}});
    p3.features = random_features(3, 4, 5);
    AnchorSet tiny;
    tiny.pairs = {{0, 0, true}, {1, 1, true}, {2, 2, false}};
    TrainConfig cfg = small_config(3);
    cfg.epochs = 2;
    CHECK_THROWS_AS(train_khgmn(p3, p3, tiny, cfg), EmptyLevelError);
  }
}

TEST_CASE("variant names") {
  TrainConfig cfg;
  cfg.m = 2;
  cfg.hierarchical = false;
  CHECK(variant_name(cfg) == "2-HGMN");
  cfg.hierarchical = true;
  CHECK(variant_name(cfg) == "0-1-2-HGMN");
  cfg.m = 1;
  CHECK(variant_name(cfg) == "0-1-HGMN");
}
