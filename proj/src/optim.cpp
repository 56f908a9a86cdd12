#include "hgmn/optim.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace hgmn::ad {

Matrix& ParamStore::create_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                  std::uint64_t seed) {
  if (values_.count(name)) throw ContractError("parameter already exists: " + name);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  auto rng = make_rng(seed, name);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng);
  }
  return values_.emplace(name, std::move(m)).first->second;
}

Matrix& ParamStore::create_constant(const std::string& name, Eigen::Index rows,
                                    Eigen::Index cols, double value) {
  if (values_.count(name)) throw ContractError("parameter already exists: " + name);
  return values_.emplace(name, Matrix::Constant(rows, cols, value)).first->second;
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

double ParamStore::checksum() const {
  double acc = 0.0;
  for (const auto& [name, value] : values_) {
    acc += static_cast<double>(fnv1a(name) % 1024) * value.sum() + value.squaredNorm();
  }
  return acc;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_->leaf(store_->at(name), /*requires_grad=*/true);
  bound_.emplace(name, v);
  return v;
}

GradMap ParamBinder::collect_grads() const {
  GradMap grads;
  for (const auto& [name, var] : bound_) {
    grads[name] = tape_->grad(var);
  }
  return grads;
}

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state) {
  ++state.step;
  const auto& cfg = state.cfg;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, grad] : grads) {
    Matrix& value = params.at(name);
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      throw ContractError("adam_step: gradient shape mismatch for " + name);
    }
    Matrix& m = state.first_moment.try_emplace(name, Matrix::Zero(value.rows(), value.cols()))
                    .first->second;
    Matrix& v = state.second_moment.try_emplace(name, Matrix::Zero(value.rows(), value.cols()))
                    .first->second;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const Matrix m_hat = m / bias1;
    const Matrix v_hat = v / bias2;
    value.array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  }
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
  nlohmann::json doc;
  doc["version"] = 1;
  nlohmann::json body;
  for (const auto& [name, value] : params) {
    std::vector<double> data(static_cast<std::size_t>(value.size()));
    for (Eigen::Index i = 0; i < value.rows(); ++i) {
      for (Eigen::Index j = 0; j < value.cols(); ++j) {
        data[static_cast<std::size_t>(i * value.cols() + j)] = value(i, j);
      }
    }
    body[name] = {{"rows", value.rows()}, {"cols", value.cols()}, {"data", data}};
  }
  doc["params"] = std::move(body);
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out << doc.dump() << "\n";
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  if (!doc.contains("version") || doc["version"].get<int>() != 1) {
    throw ValidationError("unsupported checkpoint version");
  }
  ParamStore store;
  for (const auto& [name, entry] : doc["params"].items()) {
    const auto rows = entry["rows"].get<Eigen::Index>();
    const auto cols = entry["cols"].get<Eigen::Index>();
    const auto data = entry["data"].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw ValidationError("checkpoint entry " + name + " has wrong element count");
    }
    Matrix& m = store.create_constant(name, rows, cols, 0.0);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        m(i, j) = data[static_cast<std::size_t>(i * cols + j)];
      }
    }
  }
  return store;
}

}  // namespace hgmn::ad
