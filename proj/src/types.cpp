#include "hgmn/types.hpp"

#include <algorithm>
#include <map>

namespace hgmn {

SpMat sparse_from_triplets(Eigen::Index rows, Eigen::Index cols,
                           const std::vector<Triplet>& entries, bool sum_duplicates) {
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= rows || t.col() < 0 || t.col() >= cols) {
      throw ValidationError("sparse entry (" + std::to_string(t.row()) + ", " +
                            std::to_string(t.col()) + ") out of range for " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  if (!sum_duplicates) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> keys;
    keys.reserve(entries.size());
    for (const auto& t : entries) keys.emplace_back(t.row(), t.col());
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
      throw ValidationError("duplicate sparse entries");
    }
  }
  SpMat m(rows, cols);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  return m;
}

std::vector<Triplet> sparse_triplets(const SpMat& m) {
  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(m.nonZeros()));
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    for (SpMat::InnerIterator it(m, r); it; ++it) {
      out.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  return out;
}

bool sparse_equal(const SpMat& a, const SpMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  const auto ta = sparse_triplets(a);
  const auto tb = sparse_triplets(b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].row() != tb[i].row() || ta[i].col() != tb[i].col() ||
        ta[i].value() != tb[i].value()) {
      return false;
    }
  }
  return true;
}

SpMat sparse_identity(Eigen::Index n) {
  SpMat m(n, n);
  m.setIdentity();
  m.makeCompressed();
  return m;
}

}  // namespace hgmn
