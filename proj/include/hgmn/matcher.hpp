#pragma once

#include "hgmn/graph.hpp"
#include "hgmn/tape.hpp"
#include "hgmn/types.hpp"

#include <string>
#include <vector>

namespace hgmn {

struct SinkhornConfig {
  int iters = 10;
  double tau = 1.0;
  /// Tolerance of the column-marginal postcondition check. Row sums are
  /// always checked at 1e-6 (the final pass makes them exact); column sums
  /// converge at a rate set by the score scale, so callers that feed
  /// unbounded mid-training scores relax this.
  double col_check_tol = 1e-6;

  void validate() const;
};

/// Soft assignment scores over V_s x V_t, dense or row-sparse. Sparse rows
/// keep at most k+1 entries and always include the row's ground-truth column
/// when one exists.
struct Correspondence {
  enum class Provenance { Raw, Sinkhorned };

  struct Entry {
    int col = 0;
    double value = 0.0;
  };

  int rows = 0;
  int cols = 0;
  Provenance provenance = Provenance::Raw;
  bool is_sparse = false;
  Matrix dense;                                  // when !is_sparse
  std::vector<std::vector<Entry>> sparse_rows;   // per row, ascending col
  std::vector<int> gt_col;                       // ground-truth column or -1

  static Correspondence from_dense(Matrix scores, Provenance provenance,
                                   const AnchorSet* anchors = nullptr);

  /// Stored value, or 0 for an absent sparse entry.
  double value_at(int i, int j) const;
  bool present(int i, int j) const;
  /// Row entries as (col, value); dense rows materialize every column.
  std::vector<Entry> row_entries(int i) const;

  void check_sinkhorn_marginals(double row_tol = 1e-6, double col_tol = 1e-6) const;
};

// ---------------------------------------------------------------------------
// Similarity and normalization

/// exp(scores / tau), padded square with uniform dummy rows, `iters` rounds of
/// alternating column/row normalization (ending on rows), dummy rows dropped.
/// An optional 0/1 support mask zeroes non-support entries before iterating.
ad::Var sinkhorn_normalize_on_tape(ad::Var scores, const SinkhornConfig& cfg,
                                   const Matrix* support_mask = nullptr);

/// Plain-matrix convenience over the tape implementation.
Correspondence sinkhorn_normalize(const Matrix& scores, const SinkhornConfig& cfg,
                                  const AnchorSet* anchors = nullptr);

/// (H_s Z_s)(H_t Z_t)^T: two sparse-dense products then one dense product, so
/// nothing of size |V^(m)| x |V^(m)| is ever formed.
ad::Var high_order_similarity(const SpMat& h_row_norm_s, ad::Var z_s, ad::Var z_t,
                              const SpMat& h_row_norm_t);
Matrix high_order_similarity(const SpMat& h_row_norm_s, const Matrix& z_s, const Matrix& z_t,
                             const SpMat& h_row_norm_t);

/// alpha * high + (1 - alpha) * local. At the endpoints the output is
/// bit-identical to the surviving branch.
ad::Var fuse_similarity(double alpha, ad::Var high, ad::Var local);

/// Fused scores pushed through Sinkhorn.
Correspondence combined_similarity(double alpha, const Matrix& high, const Matrix& local,
                                   const SinkhornConfig& cfg, const AnchorSet* anchors = nullptr);

// ---------------------------------------------------------------------------
// Loss and sparsification

/// -sum over train anchors of log(S_{i, pi(i)}) with the 1e-12 clamp.
ad::Var matching_loss_on_tape(ad::Var sinkhorned, const std::vector<AnchorPair>& train_anchors);

/// Same reduction over a stored correspondence; sparse supports must contain
/// every train anchor entry.
double matching_loss(const Correspondence& s, const std::vector<AnchorPair>& train_anchors);

/// Keeps the k largest values per row (ties -> lowest column id) plus the
/// ground-truth column when absent. Values are carried over unchanged.
Correspondence sparsify_topk(const Correspondence& dense, int k);

/// 0/1 mask of the same top-k + ground-truth support over a raw score matrix.
Matrix topk_support_mask(const Matrix& scores, int k, const std::vector<int>& gt_col);

// ---------------------------------------------------------------------------
// Evaluation and rounding

/// Fraction of test anchors whose true column ranks in the row's top k
/// (ties broken toward the lowest column id). Errors on an empty test set.
double precision_at_k(const Correspondence& s, const std::vector<AnchorPair>& test_anchors,
                      int k);

/// Row-wise argmax with used columns skipped, rows processed by descending
/// row confidence. Returns the matched column per row, -1 if exhausted.
std::vector<int> greedy_assignment(const Correspondence& s);

/// Exact maximum-weight one-to-one assignment (rows <= cols); O(n^3), meant
/// for small instances.
std::vector<int> hungarian_assignment(const Matrix& scores);

/// Triplet text ("i j score") for sparse storage or dense CSV, plus a JSON
/// manifest carrying config hash, seed and provenance.
void export_correspondence(const Correspondence& s, const std::string& dir,
                           const std::string& config_hash, std::uint64_t seed);

}  // namespace hgmn
