#include "hgmn/gnn.hpp"

#include <algorithm>
#include <cstdio>
#include <vector>

namespace hgmn::gnn {

using ad::Var;

Operator operator_from_name(const std::string& name) {
  if (name == "gin") return Operator::Gin;
  if (name == "gcn") return Operator::Gcn;
  if (name == "tridirected") return Operator::TriDirected;
  throw ValidationError("unknown operator: " + name + " (expected gin|gcn|tridirected)");
}

std::string operator_name(Operator op) {
  switch (op) {
    case Operator::Gin: return "gin";
    case Operator::Gcn: return "gcn";
    case Operator::TriDirected: return "tridirected";
  }
  return "?";
}

void GnnConfig::validate() const {
  if (layers < 1) throw ValidationError("encoder needs at least one layer");
  if (hidden_dim < 1) throw ValidationError("hidden dimension must be >= 1");
  if (mlp_layers < 1) throw ValidationError("MLP needs at least one linear map");
  if (mlp_hidden < 1) throw ValidationError("MLP hidden width must be >= 1");
}

GraphSignals make_signals(const Graph& g) { return make_signals(g, g.features); }

GraphSignals make_signals(const Graph& g, Matrix features_override) {
  GraphSignals s;
  s.adjacency = adjacency_matrix(g);
  s.norm_adjacency = normalized_adjacency(g);
  s.out_adjacency = s.adjacency;
  s.in_adjacency = SpMat(s.adjacency.transpose());
  s.features = std::move(features_override);
  s.directed = g.directed;
  if (s.features.rows() != g.num_nodes) {
    throw ContractError("feature rows " + std::to_string(s.features.rows()) +
                        " do not match node count " + std::to_string(g.num_nodes));
  }
  return s;
}

namespace {

std::string layer_name(const std::string& prefix, int t, const char* item) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "/L%02d/", t);
  return prefix + buf + item;
}

int layer_input_dim(const GnnConfig& cfg, int in_dim, int t) {
  return t == 0 ? in_dim : cfg.hidden_dim;
}

/// MLP widths for layer t: in -> mlp_hidden x (mlp_layers - 1) -> hidden.
std::vector<int> mlp_dims(const GnnConfig& cfg, int in) {
  std::vector<int> dims{in};
  for (int l = 0; l + 1 < cfg.mlp_layers; ++l) dims.push_back(cfg.mlp_hidden);
  dims.push_back(cfg.hidden_dim);
  return dims;
}

Var mlp_forward(ad::ParamBinder& params, const GnnConfig& cfg, Var x, int t,
                const std::string& prefix) {
  Var h = x;
  for (int l = 0; l < cfg.mlp_layers; ++l) {
    char item[16];
    std::snprintf(item, sizeof(item), "mlp%02d_", l);
    h = ad::add_row_broadcast(ad::matmul(h, params(layer_name(prefix, t, item) + "w")),
                              params(layer_name(prefix, t, item) + "b"));
    if (l + 1 < cfg.mlp_layers) h = ad::relu(h);
  }
  return h;
}

}  // namespace

void init_encoder_params(ad::ParamStore& store, const GnnConfig& cfg, int in_dim,
                         const std::string& prefix, std::uint64_t seed) {
  cfg.validate();
  if (in_dim < 1) throw ValidationError("encoder input width must be >= 1");
  for (int t = 0; t < cfg.layers; ++t) {
    const int in = layer_input_dim(cfg, in_dim, t);
    switch (cfg.op) {
      case Operator::Gin: {
        store.create_constant(layer_name(prefix, t, "eps"), 1, 1, 0.0);
        const auto dims = mlp_dims(cfg, in);
        for (int l = 0; l + 1 < static_cast<int>(dims.size()); ++l) {
          char item[16];
          std::snprintf(item, sizeof(item), "mlp%02d_", l);
          store.create_glorot(layer_name(prefix, t, item) + "w", dims[static_cast<std::size_t>(l)],
                              dims[static_cast<std::size_t>(l + 1)], seed);
          store.create_constant(layer_name(prefix, t, item) + "b", 1,
                                dims[static_cast<std::size_t>(l + 1)], 0.0);
        }
        store.create_constant(layer_name(prefix, t, "bn_gamma"), 1, cfg.hidden_dim, 1.0);
        store.create_constant(layer_name(prefix, t, "bn_beta"), 1, cfg.hidden_dim, 0.0);
        break;
      }
      case Operator::Gcn: {
        store.create_glorot(layer_name(prefix, t, "w"), in, cfg.hidden_dim, seed);
        const auto dims = mlp_dims(cfg, cfg.hidden_dim);
        for (int l = 0; l + 1 < static_cast<int>(dims.size()); ++l) {
          char item[16];
          std::snprintf(item, sizeof(item), "mlp%02d_", l);
          store.create_glorot(layer_name(prefix, t, item) + "w", dims[static_cast<std::size_t>(l)],
                              dims[static_cast<std::size_t>(l + 1)], seed);
          store.create_constant(layer_name(prefix, t, item) + "b", 1,
                                dims[static_cast<std::size_t>(l + 1)], 0.0);
        }
        break;
      }
      case Operator::TriDirected: {
        store.create_glorot(layer_name(prefix, t, "w_self"), in, cfg.hidden_dim, seed);
        store.create_glorot(layer_name(prefix, t, "w_in"), in, cfg.hidden_dim, seed);
        store.create_glorot(layer_name(prefix, t, "w_out"), in, cfg.hidden_dim, seed);
        break;
      }
    }
  }
  if (cfg.use_jk) {
    store.create_glorot(prefix + "/jk_w", cfg.layers * cfg.hidden_dim, cfg.hidden_dim, seed);
  }
}

Var gin_aggregate(const SpMat& adjacency, Var x, Var eps) {
  return ad::add(ad::add(ad::spmm(adjacency, x), x), ad::scale_by(x, eps));
}

Var gin_layer(ad::ParamBinder& params, const GnnConfig& cfg, const SpMat& adjacency, Var x,
              int t, const std::string& prefix) {
  Var agg = gin_aggregate(adjacency, x, params(layer_name(prefix, t, "eps")));
  Var out = ad::relu(mlp_forward(params, cfg, agg, t, prefix));
  Var normed = ad::batch_feature_normalize(out);
  return ad::add_row_broadcast(
      ad::mul_row_broadcast(normed, params(layer_name(prefix, t, "bn_gamma"))),
      params(layer_name(prefix, t, "bn_beta")));
}

Var gcn_layer(ad::ParamBinder& params, const GnnConfig& cfg, const SpMat& norm_adjacency, Var x,
              int t, const std::string& prefix) {
  Var pre = ad::matmul(ad::spmm(norm_adjacency, x), params(layer_name(prefix, t, "w")));
  return mlp_forward(params, cfg, ad::relu(pre), t, prefix);
}

Var tri_directed_layer(ad::ParamBinder& params, const GnnConfig& cfg, const SpMat& in_adj,
                       const SpMat& out_adj, Var x, int t, const std::string& prefix) {
  (void)cfg;
  Var self_term = ad::matmul(x, params(layer_name(prefix, t, "w_self")));
  Var in_term = ad::matmul(ad::spmm(in_adj, x), params(layer_name(prefix, t, "w_in")));
  Var out_term = ad::matmul(ad::spmm(out_adj, x), params(layer_name(prefix, t, "w_out")));
  return ad::relu(ad::add(ad::add(self_term, in_term), out_term));
}

Var encode(ad::Tape& tape, ad::ParamBinder& params, const GnnConfig& cfg,
           const GraphSignals& signals, const std::string& prefix) {
  cfg.validate();
  Var h = tape.constant(signals.features);
  std::vector<Var> per_layer;
  per_layer.reserve(static_cast<std::size_t>(cfg.layers));
  for (int t = 0; t < cfg.layers; ++t) {
    switch (cfg.op) {
      case Operator::Gin:
        h = gin_layer(params, cfg, signals.adjacency, h, t, prefix);
        break;
      case Operator::Gcn:
        h = gcn_layer(params, cfg, signals.norm_adjacency, h, t, prefix);
        break;
      case Operator::TriDirected:
        h = tri_directed_layer(params, cfg, signals.in_adjacency, signals.out_adjacency, h, t,
                               prefix);
        break;
    }
    per_layer.push_back(h);
  }
  if (!cfg.use_jk) return h;
  return ad::matmul(ad::concat_cols(per_layer), params(prefix + "/jk_w"));
}

Matrix encode_values(const GnnConfig& cfg, ad::ParamStore& store, const GraphSignals& signals,
                     const std::string& prefix) {
  ad::Tape tape(/*check_finite=*/true);
  ad::ParamBinder binder(tape, store);
  return encode(tape, binder, cfg, signals, prefix).value();
}

}  // namespace hgmn::gnn
