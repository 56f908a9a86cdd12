#include "hgmn/train.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace hgmn {

using ad::Var;

void TrainConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ValidationError("alpha out of [0, 1]");
  if (m < 0) throw ValidationError("line-graph order must be >= 0");
  if (epochs < 1) throw ValidationError("need at least one epoch");
  if (lr <= 0.0) throw ValidationError("learning rate must be positive");
  if (train_ratio < 0.0 || train_ratio > 1.0) throw ValidationError("train ratio out of [0, 1]");
  if (topk < 0) throw ValidationError("topk must be >= 0");
  sinkhorn().validate();
  gnn.validate();
}

std::string variant_name(const TrainConfig& cfg) {
  if (!cfg.hierarchical) return std::to_string(cfg.m) + "-HGMN";
  std::string name = "0";
  for (int k = 1; k <= cfg.m; ++k) name += "-" + std::to_string(k);
  return name + "-HGMN";
}

namespace {

Graph with_anchor_tags(Graph g, std::vector<int> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  g.anchor_tags = std::move(nodes);
  return g;
}

/// Directed levels always run the direction-aware operator; undirected
/// levels run whatever the config selects.
gnn::GnnConfig level_operator(const gnn::GnnConfig& base, bool directed_level) {
  gnn::GnnConfig cfg = base;
  if (directed_level) cfg.op = gnn::Operator::TriDirected;
  return cfg;
}

struct PairSignals {
  gnn::GraphSignals src;
  gnn::GraphSignals tgt;
};

struct LevelRun {
  ad::ParamStore params;
  Correspondence correspondence;
  std::vector<double> loss_curve;
  Matrix z_src;  // embeddings under the final trained parameters
  Matrix z_tgt;
};

/// Epoch loop shared by every stage: forward to a sinkhorned correspondence,
/// anchor cross-entropy, Adam. `build_raw` produces the raw fused scores for
/// the stage and reports the encoder outputs through the out-parameters.
template <typename RawBuilder>
LevelRun run_training_stage(RawBuilder&& build_raw,
                            std::vector<std::pair<std::string, ad::ParamStore*>> stores,
                            const AnchorSet& anchors, const TrainConfig& cfg, int n_src_rows) {
  const auto train_anchors = anchors.train_pairs();
  if (train_anchors.empty()) throw ValidationError("no train anchors");
  const auto gt_col = anchors.gt_column_of_row(n_src_rows);

  std::vector<ad::AdamState> adam(stores.size());
  for (auto& state : adam) state.cfg.lr = cfg.lr;

  LevelRun run;
  auto forward = [&](ad::Tape& tape, std::vector<ad::ParamBinder>& binders, Matrix* z_s_out,
                     Matrix* z_t_out) {
    Var raw = build_raw(tape, binders, z_s_out, z_t_out);
    Matrix support;
    const Matrix* mask = nullptr;
    if (cfg.topk > 0) {
      support = topk_support_mask(raw.value(), cfg.topk, gt_col);
      mask = &support;
    }
    Var s = sinkhorn_normalize_on_tape(raw, cfg.sinkhorn(), mask);
    Correspondence::from_dense(s.value(), Correspondence::Provenance::Sinkhorned)
        .check_sinkhorn_marginals(1e-6, cfg.sinkhorn_col_tol);
    return s;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      ad::Tape tape(/*check_finite=*/true);
      std::vector<ad::ParamBinder> binders;
      binders.reserve(stores.size());
      for (auto& [prefix, store] : stores) binders.emplace_back(tape, *store);
      Var s = forward(tape, binders, nullptr, nullptr);
      Var loss = matching_loss_on_tape(s, train_anchors);
      const double loss_value = loss.value()(0, 0);
      if (!std::isfinite(loss_value)) throw NumericalError("training loss diverged", epoch);
      run.loss_curve.push_back(loss_value);
      tape.backward(loss);
      for (std::size_t i = 0; i < stores.size(); ++i) {
        adam_step(*stores[i].second, binders[i].collect_grads(), adam[i]);
      }
    } catch (const NumericalError& e) {
      if (e.epoch >= 0) throw;
      throw NumericalError(e.what(), epoch);
    }
  }

  // Final forward under the trained parameters.
  ad::Tape tape(/*check_finite=*/true);
  std::vector<ad::ParamBinder> binders;
  for (auto& [prefix, store] : stores) binders.emplace_back(tape, *store);
  Var s = forward(tape, binders, &run.z_src, &run.z_tgt);
  run.correspondence =
      Correspondence::from_dense(s.value(), Correspondence::Provenance::Sinkhorned, &anchors);
  return run;
}

/// One similarity stage with a single shared encoder. Level 0 trains on the
/// local similarity alone; higher levels fuse their projected similarity
/// with a frozen local term.
LevelRun train_single_level(const gnn::GnnConfig& encoder_cfg, const PairSignals& signals,
                            const SpMat* h_src, const SpMat* h_tgt, const Matrix* frozen_local,
                            const AnchorSet& anchors, const TrainConfig& cfg, int level,
                            int n_src_rows) {
  ad::ParamStore params;
  gnn::init_encoder_params(params, encoder_cfg, static_cast<int>(signals.src.features.cols()),
                           "enc", substream_seed(cfg.seed, "level", static_cast<std::uint64_t>(level)));

  auto build_raw = [&](ad::Tape& tape, std::vector<ad::ParamBinder>& binders, Matrix* z_s_out,
                       Matrix* z_t_out) -> Var {
    Var z_s = gnn::encode(tape, binders[0], encoder_cfg, signals.src, "enc");
    Var z_t = gnn::encode(tape, binders[0], encoder_cfg, signals.tgt, "enc");
    if (z_s_out) *z_s_out = z_s.value();
    if (z_t_out) *z_t_out = z_t.value();
    if (level == 0) return ad::matmul(z_s, ad::transpose(z_t));
    Var high = high_order_similarity(*h_src, z_s, z_t, *h_tgt);
    return fuse_similarity(cfg.alpha, high, tape.constant(*frozen_local));
  };

  LevelRun run = run_training_stage(build_raw, {{"enc", &params}}, anchors, cfg, n_src_rows);
  run.params = std::move(params);
  return run;
}

std::pair<IlgStack, IlgStack> build_pair_stacks(const Graph& g_src, const Graph& g_tgt,
                                                const AnchorSet& anchors,
                                                const TrainConfig& cfg) {
  std::vector<int> src_nodes, tgt_nodes;
  for (const auto& p : anchors.pairs) {
    src_nodes.push_back(p.src);
    tgt_nodes.push_back(p.tgt);
  }
  Graph gs = with_anchor_tags(g_src, std::move(src_nodes));
  Graph gt = with_anchor_tags(g_tgt, std::move(tgt_nodes));
  IlgStack ss = build_ilg_stack(gs, cfg.m, cfg.prune, substream_seed(cfg.seed, "stack", 0));
  IlgStack st = build_ilg_stack(gt, cfg.m, cfg.prune, substream_seed(cfg.seed, "stack", 1));
  return {std::move(ss), std::move(st)};
}

void validate_pair(const Graph& g_src, const Graph& g_tgt, const AnchorSet& anchors,
                   const TrainConfig& cfg) {
  cfg.validate();
  anchors.validate(g_src.num_nodes, g_tgt.num_nodes);
  if (g_src.num_nodes > g_tgt.num_nodes) {
    throw ValidationError("source graph must not be larger than the target graph");
  }
  if (g_src.feature_dim() == 0 || g_tgt.feature_dim() == 0) {
    throw ValidationError("both graphs need node features");
  }
  if (g_src.feature_dim() != g_tgt.feature_dim()) {
    throw ValidationError("source and target feature widths differ");
  }
}

}  // namespace

TrainResult train_khgmn(const Graph& g_src, const Graph& g_tgt, const AnchorSet& anchors,
                        const TrainConfig& cfg) {
  validate_pair(g_src, g_tgt, anchors, cfg);
  TrainResult result;

  if (cfg.m == 0) {
    PairSignals signals{gnn::make_signals(g_src), gnn::make_signals(g_tgt)};
    LevelRun run = train_single_level(cfg.gnn, signals, nullptr, nullptr, nullptr, anchors, cfg,
                                      /*level=*/0, g_src.num_nodes);
    result.params.emplace("theta2", std::move(run.params));
    result.final_correspondence = std::move(run.correspondence);
    result.loss_curve = std::move(run.loss_curve);
    return result;
  }

  auto [stack_s, stack_t] = build_pair_stacks(g_src, g_tgt, anchors, cfg);
  const SpMat h_src = stack_s.row_normalized_top();
  const SpMat h_tgt = stack_t.row_normalized_top();

  PairSignals local_signals{gnn::make_signals(g_src), gnn::make_signals(g_tgt)};
  const Graph& level_src = stack_s.level_graph(cfg.m);
  const Graph& level_tgt = stack_t.level_graph(cfg.m);
  if (level_src.feature_dim() != level_tgt.feature_dim()) {
    throw ValidationError("line-graph feature widths differ between the pair");
  }
  PairSignals high_signals{gnn::make_signals(level_src), gnn::make_signals(level_tgt)};
  const gnn::GnnConfig theta1_cfg = level_operator(cfg.gnn, level_src.directed);

  ad::ParamStore theta1, theta2;
  gnn::init_encoder_params(theta1, theta1_cfg, level_src.feature_dim(), "theta1",
                           substream_seed(cfg.seed, "theta1"));
  gnn::init_encoder_params(theta2, cfg.gnn, g_src.feature_dim(), "theta2",
                           substream_seed(cfg.seed, "theta2"));

  auto build_raw = [&](ad::Tape& tape, std::vector<ad::ParamBinder>& binders, Matrix* z_s_out,
                       Matrix* z_t_out) -> Var {
    Var z_sm = gnn::encode(tape, binders[0], theta1_cfg, high_signals.src, "theta1");
    Var z_tm = gnn::encode(tape, binders[0], theta1_cfg, high_signals.tgt, "theta1");
    Var z_s = gnn::encode(tape, binders[1], cfg.gnn, local_signals.src, "theta2");
    Var z_t = gnn::encode(tape, binders[1], cfg.gnn, local_signals.tgt, "theta2");
    if (z_s_out) *z_s_out = z_s.value();
    if (z_t_out) *z_t_out = z_t.value();
    Var high = high_order_similarity(h_src, z_sm, z_tm, h_tgt);
    Var local = ad::matmul(z_s, ad::transpose(z_t));
    return fuse_similarity(cfg.alpha, high, local);
  };

  LevelRun run = run_training_stage(build_raw, {{"theta1", &theta1}, {"theta2", &theta2}},
                                    anchors, cfg, g_src.num_nodes);
  result.params.emplace("theta1", std::move(theta1));
  result.params.emplace("theta2", std::move(theta2));
  result.final_correspondence = std::move(run.correspondence);
  result.loss_curve = std::move(run.loss_curve);
  return result;
}

TrainResult train_hierarchical(const Graph& g_src, const Graph& g_tgt, const AnchorSet& anchors,
                               const TrainConfig& cfg) {
  validate_pair(g_src, g_tgt, anchors, cfg);
  if (cfg.m < 1) throw ValidationError("hierarchical training needs m >= 1");

  auto [stack_s, stack_t] = build_pair_stacks(g_src, g_tgt, anchors, cfg);

  TrainResult result;

  // Level 0: local-only matching on the original pair.
  PairSignals level0{gnn::make_signals(g_src), gnn::make_signals(g_tgt)};
  LevelRun prev = train_single_level(cfg.gnn, level0, nullptr, nullptr, nullptr, anchors, cfg,
                                     /*level=*/0, g_src.num_nodes);
  const Matrix frozen_local = prev.z_src * prev.z_tgt.transpose();
  result.level_correspondences.push_back(prev.correspondence);
  result.params.emplace("level0", std::move(prev.params));

  for (int k = 1; k <= cfg.m; ++k) {
    const auto& level_s = stack_s.levels[static_cast<std::size_t>(k - 1)];
    const auto& level_t = stack_t.levels[static_cast<std::size_t>(k - 1)];
    // Level-k features: concatenated frozen embeddings of the two incident
    // level-(k-1) nodes, canonical endpoint order.
    const bool parent_directed = stack_s.level_graph(k - 1).directed;
    Matrix feat_s = lift_features(level_s.parent_edge_of_node, prev.z_src, parent_directed);
    Matrix feat_t = lift_features(level_t.parent_edge_of_node, prev.z_tgt, parent_directed);
    PairSignals level_signals{gnn::make_signals(level_s.graph, std::move(feat_s)),
                              gnn::make_signals(level_t.graph, std::move(feat_t))};
    const SpMat h_src = stack_s.row_normalized(k);
    const SpMat h_tgt = stack_t.row_normalized(k);
    const gnn::GnnConfig level_cfg = level_operator(cfg.gnn, level_s.graph.directed);
    LevelRun run = train_single_level(level_cfg, level_signals, &h_src, &h_tgt, &frozen_local,
                                      anchors, cfg, k, g_src.num_nodes);
    result.level_correspondences.push_back(run.correspondence);
    result.loss_curve = run.loss_curve;
    result.params.emplace("level" + std::to_string(k), std::move(run.params));
    prev.z_src = std::move(run.z_src);
    prev.z_tgt = std::move(run.z_tgt);
  }

  result.final_correspondence = result.level_correspondences.back();
  return result;
}

}  // namespace hgmn
