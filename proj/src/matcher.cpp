#include "hgmn/matcher.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

namespace hgmn {

void SinkhornConfig::validate() const {
  if (iters < 1) throw ValidationError("sinkhorn needs at least one iteration");
  if (tau <= 0.0) throw ValidationError("sinkhorn tau must be positive");
}

Correspondence Correspondence::from_dense(Matrix scores, Provenance provenance,
                                          const AnchorSet* anchors) {
  Correspondence c;
  c.rows = static_cast<int>(scores.rows());
  c.cols = static_cast<int>(scores.cols());
  c.provenance = provenance;
  c.dense = std::move(scores);
  c.gt_col.assign(static_cast<std::size_t>(c.rows), -1);
  if (anchors) {
    for (const auto& p : anchors->pairs) {
      if (p.src >= 0 && p.src < c.rows && p.tgt >= 0 && p.tgt < c.cols) {
        c.gt_col[static_cast<std::size_t>(p.src)] = p.tgt;
      }
    }
  }
  return c;
}

double Correspondence::value_at(int i, int j) const {
  if (!is_sparse) return dense(i, j);
  const auto& row = sparse_rows[static_cast<std::size_t>(i)];
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const Entry& e, int col) { return e.col < col; });
  return (it != row.end() && it->col == j) ? it->value : 0.0;
}

bool Correspondence::present(int i, int j) const {
  if (!is_sparse) return true;
  const auto& row = sparse_rows[static_cast<std::size_t>(i)];
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const Entry& e, int col) { return e.col < col; });
  return it != row.end() && it->col == j;
}

std::vector<Correspondence::Entry> Correspondence::row_entries(int i) const {
  if (is_sparse) return sparse_rows[static_cast<std::size_t>(i)];
  std::vector<Entry> out;
  out.reserve(static_cast<std::size_t>(cols));
  for (int j = 0; j < cols; ++j) out.push_back({j, dense(i, j)});
  return out;
}

void Correspondence::check_sinkhorn_marginals(double row_tol, double col_tol) const {
  if (is_sparse || provenance != Provenance::Sinkhorned) {
    throw ContractError("marginal check expects a dense sinkhorned correspondence");
  }
  for (int i = 0; i < rows; ++i) {
    const double sum = dense.row(i).sum();
    if (std::abs(sum - 1.0) > row_tol) {
      throw NumericalError("sinkhorn row " + std::to_string(i) + " sums to " +
                           std::to_string(sum));
    }
  }
  for (int j = 0; j < cols; ++j) {
    const double sum = dense.col(j).sum();
    if (sum > 1.0 + col_tol) {
      throw NumericalError("sinkhorn column " + std::to_string(j) + " sums to " +
                           std::to_string(sum));
    }
  }
}

ad::Var sinkhorn_normalize_on_tape(ad::Var scores, const SinkhornConfig& cfg,
                                   const Matrix* support_mask) {
  cfg.validate();
  const Matrix& s = scores.value();
  if (!s.allFinite()) throw NumericalError("sinkhorn input has non-finite scores");
  const Eigen::Index n_src = s.rows();
  const Eigen::Index n_tgt = s.cols();
  if (n_src > n_tgt) {
    throw ValidationError("sinkhorn expects |V_s| <= |V_t|, got " + std::to_string(n_src) +
                          " x " + std::to_string(n_tgt));
  }
  ad::Tape& tape = *scores.tape;

  // exp((s - max) / tau); the shift cancels in the first row scaling, so the
  // output is invariant to it and it can stay detached.
  const double shift = s.maxCoeff();
  ad::Var scaled = ad::add(ad::scalar_mul(scores, 1.0 / cfg.tau),
                           tape.constant(Matrix::Constant(n_src, n_tgt, -shift / cfg.tau)));
  ad::Var kernel = ad::exp(scaled);
  if (support_mask) {
    if (support_mask->rows() != n_src || support_mask->cols() != n_tgt) {
      throw ContractError("support mask shape mismatch");
    }
    kernel = ad::elementwise_mul(kernel, tape.constant(*support_mask));
  }

  ad::Var padded = kernel;
  if (n_tgt > n_src) {
    // Uniform dummy rows at the mean kernel mass; the fixed point is
    // invariant to the pad constant, it only affects convergence speed.
    const double pad = std::max(kernel.value().mean(), ad::kLogClampFloor);
    padded = ad::concat_rows(kernel, tape.constant(Matrix::Constant(n_tgt - n_src, n_tgt, pad)));
  }
  for (int round = 0; round < cfg.iters; ++round) {
    padded = ad::row_normalize(ad::col_normalize(padded));
  }
  return n_tgt > n_src ? ad::slice_rows(padded, 0, n_src) : padded;
}

Correspondence sinkhorn_normalize(const Matrix& scores, const SinkhornConfig& cfg,
                                  const AnchorSet* anchors) {
  ad::Tape tape;
  ad::Var s = tape.constant(scores);
  ad::Var out = sinkhorn_normalize_on_tape(s, cfg);
  Correspondence c =
      Correspondence::from_dense(out.value(), Correspondence::Provenance::Sinkhorned, anchors);
  c.check_sinkhorn_marginals(1e-6, cfg.col_check_tol);
  return c;
}

ad::Var high_order_similarity(const SpMat& h_row_norm_s, ad::Var z_s, ad::Var z_t,
                              const SpMat& h_row_norm_t) {
  if (z_s.cols() != z_t.cols()) {
    throw ContractError("embedding widths differ: " + std::to_string(z_s.cols()) + " vs " +
                        std::to_string(z_t.cols()));
  }
  ad::Var projected_s = ad::spmm(h_row_norm_s, z_s);
  ad::Var projected_t = ad::spmm(h_row_norm_t, z_t);
  return ad::matmul(projected_s, ad::transpose(projected_t));
}

Matrix high_order_similarity(const SpMat& h_row_norm_s, const Matrix& z_s, const Matrix& z_t,
                             const SpMat& h_row_norm_t) {
  ad::Tape tape;
  return high_order_similarity(h_row_norm_s, tape.constant(z_s), tape.constant(z_t),
                               h_row_norm_t)
      .value();
}

ad::Var fuse_similarity(double alpha, ad::Var high, ad::Var local) {
  if (alpha < 0.0 || alpha > 1.0) throw ValidationError("alpha out of [0, 1]");
  return ad::add(ad::scalar_mul(high, alpha), ad::scalar_mul(local, 1.0 - alpha));
}

Correspondence combined_similarity(double alpha, const Matrix& high, const Matrix& local,
                                   const SinkhornConfig& cfg, const AnchorSet* anchors) {
  ad::Tape tape;
  ad::Var fused = fuse_similarity(alpha, tape.constant(high), tape.constant(local));
  ad::Var out = sinkhorn_normalize_on_tape(fused, cfg);
  Correspondence c =
      Correspondence::from_dense(out.value(), Correspondence::Provenance::Sinkhorned, anchors);
  c.check_sinkhorn_marginals(1e-6, cfg.col_check_tol);
  return c;
}

namespace {

Matrix anchor_mask(Eigen::Index rows, Eigen::Index cols,
                   const std::vector<AnchorPair>& anchors) {
  Matrix mask = Matrix::Zero(rows, cols);
  for (const auto& p : anchors) {
    if (p.src < 0 || p.src >= rows || p.tgt < 0 || p.tgt >= cols) {
      throw ValidationError("anchor (" + std::to_string(p.src) + ", " + std::to_string(p.tgt) +
                            ") outside score matrix");
    }
    mask(p.src, p.tgt) = 1.0;
  }
  return mask;
}

}  // namespace

ad::Var matching_loss_on_tape(ad::Var sinkhorned, const std::vector<AnchorPair>& train_anchors) {
  ad::Tape& tape = *sinkhorned.tape;
  const Matrix mask = anchor_mask(sinkhorned.rows(), sinkhorned.cols(), train_anchors);
  ad::Var picked = ad::elementwise_mul(ad::log_clamped(sinkhorned), tape.constant(mask));
  return ad::scalar_mul(ad::sum(picked), -1.0);
}

double matching_loss(const Correspondence& s, const std::vector<AnchorPair>& train_anchors) {
  if (s.provenance != Correspondence::Provenance::Sinkhorned) {
    throw ContractError("matching loss expects a sinkhorned correspondence");
  }
  double loss = 0.0;
  for (const auto& p : train_anchors) {
    if (!s.present(p.src, p.tgt)) {
      throw ContractError("train anchor (" + std::to_string(p.src) + ", " +
                          std::to_string(p.tgt) + ") missing from sparse support");
    }
    loss -= std::log(std::max(s.value_at(p.src, p.tgt), ad::kLogClampFloor));
  }
  return loss;
}

namespace {

/// Column ids of the k largest values (value desc, col asc on ties).
std::vector<int> topk_columns(const std::vector<Correspondence::Entry>& entries, int k) {
  std::vector<int> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  const auto better = [&](int a, int b) {
    if (entries[static_cast<std::size_t>(a)].value != entries[static_cast<std::size_t>(b)].value) {
      return entries[static_cast<std::size_t>(a)].value > entries[static_cast<std::size_t>(b)].value;
    }
    return entries[static_cast<std::size_t>(a)].col < entries[static_cast<std::size_t>(b)].col;
  };
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(), better);
  std::vector<int> cols;
  cols.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    cols.push_back(entries[static_cast<std::size_t>(order[i])].col);
  }
  return cols;
}

}  // namespace

Correspondence sparsify_topk(const Correspondence& dense, int k) {
  if (k < 1) throw ValidationError("top-k needs k >= 1");
  if (dense.is_sparse) throw ContractError("sparsify_topk expects a dense correspondence");
  Correspondence out;
  out.rows = dense.rows;
  out.cols = dense.cols;
  out.provenance = dense.provenance;
  out.is_sparse = true;
  out.gt_col = dense.gt_col;
  out.sparse_rows.resize(static_cast<std::size_t>(dense.rows));
  for (int i = 0; i < dense.rows; ++i) {
    auto entries = dense.row_entries(i);
    auto cols = topk_columns(entries, k);
    const int gt = dense.gt_col[static_cast<std::size_t>(i)];
    if (gt >= 0 && std::find(cols.begin(), cols.end(), gt) == cols.end()) cols.push_back(gt);
    std::sort(cols.begin(), cols.end());
    auto& row = out.sparse_rows[static_cast<std::size_t>(i)];
    row.reserve(cols.size());
    for (int c : cols) row.push_back({c, dense.dense(i, c)});
  }
  return out;
}

Matrix topk_support_mask(const Matrix& scores, int k, const std::vector<int>& gt_col) {
  if (k < 1) throw ValidationError("top-k needs k >= 1");
  Matrix mask = Matrix::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    std::vector<Correspondence::Entry> entries;
    entries.reserve(static_cast<std::size_t>(scores.cols()));
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      entries.push_back({static_cast<int>(j), scores(i, j)});
    }
    for (int c : topk_columns(entries, k)) mask(i, c) = 1.0;
    if (i < static_cast<Eigen::Index>(gt_col.size()) && gt_col[static_cast<std::size_t>(i)] >= 0) {
      mask(i, gt_col[static_cast<std::size_t>(i)]) = 1.0;
    }
  }
  return mask;
}

double precision_at_k(const Correspondence& s, const std::vector<AnchorPair>& test_anchors,
                      int k) {
  if (k < 1) throw ValidationError("precision needs k >= 1");
  if (test_anchors.empty()) {
    throw ValidationError("precision over an empty test set is undefined");
  }
  int hits = 0;
  for (const auto& p : test_anchors) {
    if (p.src < 0 || p.src >= s.rows || p.tgt < 0 || p.tgt >= s.cols) {
      throw ValidationError("test anchor out of range");
    }
    if (!s.present(p.src, p.tgt)) continue;  // absent columns rank below k
    const double target = s.value_at(p.src, p.tgt);
    int rank = 1;
    for (const auto& entry : s.row_entries(p.src)) {
      if (entry.col == p.tgt) continue;
      if (entry.value > target || (entry.value == target && entry.col < p.tgt)) ++rank;
      if (rank > k) break;
    }
    if (rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test_anchors.size());
}

std::vector<int> greedy_assignment(const Correspondence& s) {
  std::vector<double> confidence(static_cast<std::size_t>(s.rows),
                                 -std::numeric_limits<double>::infinity());
  for (int i = 0; i < s.rows; ++i) {
    for (const auto& e : s.row_entries(i)) {
      confidence[static_cast<std::size_t>(i)] = std::max(confidence[static_cast<std::size_t>(i)], e.value);
    }
  }
  std::vector<int> order(static_cast<std::size_t>(s.rows));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return confidence[static_cast<std::size_t>(a)] > confidence[static_cast<std::size_t>(b)];
  });
  std::vector<char> used(static_cast<std::size_t>(s.cols), 0);
  std::vector<int> match(static_cast<std::size_t>(s.rows), -1);
  for (int i : order) {
    int best = -1;
    double best_value = -std::numeric_limits<double>::infinity();
    for (const auto& e : s.row_entries(i)) {
      if (used[static_cast<std::size_t>(e.col)]) continue;
      if (e.value > best_value || (e.value == best_value && (best < 0 || e.col < best))) {
        best = e.col;
        best_value = e.value;
      }
    }
    if (best >= 0) {
      match[static_cast<std::size_t>(i)] = best;
      used[static_cast<std::size_t>(best)] = 1;
    }
  }
  return match;
}

std::vector<int> hungarian_assignment(const Matrix& scores) {
  const int n = static_cast<int>(scores.rows());
  const int m = static_cast<int>(scores.cols());
  if (n > m) throw ValidationError("hungarian assignment expects rows <= cols");
  // Potentials formulation over cost = -score, 1-based with column 0 as the
  // virtual root.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<int> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = -scores(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> match(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<std::size_t>(j)] > 0) match[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return match;
}

void export_correspondence(const Correspondence& s, const std::string& dir,
                           const std::string& config_hash, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (s.is_sparse) {
    std::ofstream out(fs::path(dir) / "correspondence.txt");
    for (int i = 0; i < s.rows; ++i) {
      for (const auto& e : s.sparse_rows[static_cast<std::size_t>(i)]) {
        out << i << " " << e.col << " " << e.value << "\n";
      }
    }
  } else {
    std::ofstream out(fs::path(dir) / "correspondence.csv");
    for (int i = 0; i < s.rows; ++i) {
      for (int j = 0; j < s.cols; ++j) {
        out << s.dense(i, j) << (j + 1 == s.cols ? "" : ",");
      }
      out << "\n";
    }
  }
  nlohmann::json manifest;
  manifest["rows"] = s.rows;
  manifest["cols"] = s.cols;
  manifest["sparse"] = s.is_sparse;
  manifest["provenance"] = s.provenance == Correspondence::Provenance::Sinkhorned ? "sinkhorned" : "raw";
  manifest["config_hash"] = config_hash;
  manifest["seed"] = seed;
  std::ofstream mout(fs::path(dir) / "correspondence_manifest.json");
  mout << manifest.dump(2) << "\n";
}

}  // namespace hgmn
