#pragma once

#include "hgmn/tape.hpp"
#include "hgmn/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>

namespace hgmn::ad {

/// Named trainable matrices. std::map keeps iteration order lexicographic,
/// so updates are deterministic; names use zero-padded layer indices.
class ParamStore {
 public:
  /// Glorot-uniform init (+/- sqrt(6 / (fan_in + fan_out))), seeded per
  /// parameter name so creation order does not matter.
  Matrix& create_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                        std::uint64_t seed);
  Matrix& create_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                          double value);

  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  std::size_t size() const { return values_.size(); }

  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  /// Order-independent digest of all parameter values; used to verify that
  /// forward passes leave parameters untouched.
  double checksum() const;

 private:
  std::map<std::string, Matrix> values_;
};

using GradMap = std::map<std::string, Matrix>;

/// Binds parameters into a tape, one leaf per name so gradients from source
/// and target forwards accumulate on the same node.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

  Var operator()(const std::string& name);

  /// Pre-binds a name to an existing tape node (used by gradient checks to
  /// differentiate through externally created leaves).
  void preset(const std::string& name, Var v) { bound_[name] = v; }

  /// Gradients of every bound parameter after Tape::backward.
  GradMap collect_grads() const;

  ParamStore& store() { return *store_; }

 private:
  Tape* tape_;
  ParamStore* store_;
  std::map<std::string, Var> bound_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates per parameter plus the shared step counter.
struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::map<std::string, Matrix> first_moment;
  std::map<std::string, Matrix> second_moment;
};

/// One bias-corrected Adam update over every gradient in `grads`.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state);

/// JSON checkpoint: {"version": 1, "params": {name: {rows, cols, data}}}.
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace hgmn::ad
