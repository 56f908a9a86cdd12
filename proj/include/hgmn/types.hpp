#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hgmn {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using SpMat = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<Scalar>;
using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input text (carries a 1-based line number where known).
struct ParseError : Error {
  explicit ParseError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? "parse error at line " + std::to_string(line) + ": " + msg : msg),
        line_number(line) {}
  long line_number;
};

/// Input violates a documented precondition or invariant.
struct ValidationError : Error {
  using Error::Error;
};

/// An operation was called with incompatible shapes or arguments.
struct ContractError : Error {
  using Error::Error;
};

/// Iterating the line-graph construction hit a level with no edges.
struct EmptyLevelError : Error {
  explicit EmptyLevelError(int lvl)
      : Error("line graph level " + std::to_string(lvl) + " has no edges"), level(lvl) {}
  int level;
};

/// Non-finite values were produced (reports the training epoch when known).
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg, int at_epoch = -1)
      : Error(at_epoch >= 0 ? msg + " (epoch " + std::to_string(at_epoch) + ")" : msg),
        epoch(at_epoch) {}
  int epoch;
};

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent seed for a named sub-stream of a base seed.
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view tag,
                                    std::uint64_t index = 0) {
  return splitmix64(seed ^ splitmix64(fnv1a(tag) + 0x9e3779b97f4a7c15ULL * (index + 1)));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view tag,
                                std::uint64_t index = 0) {
  return std::mt19937_64(substream_seed(seed, tag, index));
}

// ---------------------------------------------------------------------------
// Sparse helpers

/// Builds a compressed sparse matrix from triplets, checking index ranges.
/// Duplicate (row, col) entries are summed when `sum_duplicates` is set and
/// rejected otherwise.
SpMat sparse_from_triplets(Eigen::Index rows, Eigen::Index cols,
                           const std::vector<Triplet>& entries, bool sum_duplicates = false);

std::vector<Triplet> sparse_triplets(const SpMat& m);

/// Exact structural equality: same shape and identical (row, col, value) list.
bool sparse_equal(const SpMat& a, const SpMat& b);

SpMat sparse_identity(Eigen::Index n);

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace hgmn
