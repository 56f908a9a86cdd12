#pragma once

#include "hgmn/graph.hpp"
#include "hgmn/optim.hpp"
#include "hgmn/tape.hpp"
#include "hgmn/types.hpp"

#include <cstdint>
#include <string>

namespace hgmn::gnn {

enum class Operator { Gin, Gcn, TriDirected };

Operator operator_from_name(const std::string& name);
std::string operator_name(Operator op);

struct GnnConfig {
  Operator op = Operator::Gin;
  int layers = 3;        // T
  int hidden_dim = 100;
  int mlp_layers = 2;    // linear maps inside each attached MLP
  int mlp_hidden = 100;
  bool use_jk = true;    // project concat(x^(1)..x^(T)) back to hidden_dim

  void validate() const;
};

/// Immutable per-graph operands for the encoder.
struct GraphSignals {
  SpMat adjacency;        // binary, both directions for undirected graphs
  SpMat norm_adjacency;   // D^{-1/2}(A+I)D^{-1/2}
  SpMat in_adjacency;     // A^T pattern
  SpMat out_adjacency;    // A pattern
  Matrix features;
  bool directed = false;
};

GraphSignals make_signals(const Graph& g);
GraphSignals make_signals(const Graph& g, Matrix features_override);

/// Registers every parameter the encoder needs under `prefix`, seeded per
/// name. Layout per layer depends on the operator family.
void init_encoder_params(ad::ParamStore& store, const GnnConfig& cfg, int in_dim,
                         const std::string& prefix, std::uint64_t seed);

/// (1 + eps) * x + sum of neighbor rows.
ad::Var gin_aggregate(const SpMat& adjacency, ad::Var x, ad::Var eps);

ad::Var gin_layer(ad::ParamBinder& params, const GnnConfig& cfg, const SpMat& adjacency,
                  ad::Var x, int t, const std::string& prefix);
ad::Var gcn_layer(ad::ParamBinder& params, const GnnConfig& cfg, const SpMat& norm_adjacency,
                  ad::Var x, int t, const std::string& prefix);
ad::Var tri_directed_layer(ad::ParamBinder& params, const GnnConfig& cfg, const SpMat& in_adj,
                           const SpMat& out_adj, ad::Var x, int t, const std::string& prefix);

/// Runs T layers over the signals and returns node embeddings Z. The same
/// parameter store serves source and target; forwards never mutate it.
ad::Var encode(ad::Tape& tape, ad::ParamBinder& params, const GnnConfig& cfg,
               const GraphSignals& signals, const std::string& prefix);

/// Forward-only embeddings with frozen parameters.
Matrix encode_values(const GnnConfig& cfg, ad::ParamStore& store, const GraphSignals& signals,
                     const std::string& prefix);

}  // namespace hgmn::gnn
