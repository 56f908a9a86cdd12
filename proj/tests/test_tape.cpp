#include <doctest.h>

#include "hgmn/grad_check.hpp"
#include "hgmn/graph.hpp"
#include "hgmn/optim.hpp"
#include "hgmn/tape.hpp"

#include <cmath>
#include <filesystem>

using namespace hgmn;
using ad::GradCheckProblem;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed,
                     double offset = 0.0) {
  auto rng = make_rng(seed, "test_tape");
  std::normal_distribution<double> normal(offset, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  }
  return m;
}

/// Keeps entries away from zero so relu/log kinks sit outside the FD step.
Matrix safe_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Matrix m = random_matrix(r, c, seed);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      if (std::abs(m(i, j)) < 0.05) m(i, j) = m(i, j) < 0 ? -0.1 : 0.1;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("forward fixtures") {
  Tape tape;
  SUBCASE("relu") {
    Matrix x(1, 2);
    x << -1.0, 2.0;
    Var y = ad::relu(tape.constant(x));
    CHECK(y.value()(0, 0) == 0.0);
    CHECK(y.value()(0, 1) == 2.0);
  }
  SUBCASE("spmm identity") {
    Matrix x = random_matrix(3, 4, 1);
    Var y = ad::spmm(sparse_identity(3), tape.constant(x));
    CHECK(y.value() == x);
  }
  SUBCASE("row softmax symmetry") {
    Matrix x = Matrix::Zero(1, 2);
    Var y = ad::row_softmax(tape.constant(x));
    CHECK(y.value()(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y.value()(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("log clamps below the floor") {
    Matrix x(1, 2);
    x << 0.0, 1.0;
    Var y = ad::log_clamped(tape.constant(x));
    CHECK(y.value()(0, 0) == doctest::Approx(std::log(1e-12)));
    CHECK(y.value()(0, 1) == 0.0);
  }
}

TEST_CASE("simple backward fixtures") {
  SUBCASE("sum gives all-ones gradient") {
    Tape tape;
    Var w = tape.leaf(random_matrix(2, 2, 2), true);
    tape.backward(ad::sum(w));
    CHECK(tape.grad(w) == Matrix::Ones(2, 2));
  }
  SUBCASE("relu subgradient picks the active region") {
    Tape tape;
    Matrix x(1, 2);
    x << -1.0, 3.0;
    Var w = tape.leaf(x, true);
    tape.backward(ad::sum(ad::relu(w)));
    CHECK(tape.grad(w)(0, 0) == 0.0);
    CHECK(tape.grad(w)(0, 1) == 1.0);
  }
  SUBCASE("non-scalar loss rejected") {
    Tape tape;
    Var w = tape.leaf(random_matrix(2, 2, 3), true);
    CHECK_THROWS_AS(tape.backward(w), ContractError);
  }
  SUBCASE("shape mismatch names the op") {
    Tape tape;
    Var a = tape.constant(random_matrix(2, 3, 4));
    Var b = tape.constant(random_matrix(2, 3, 5));
    try {
      ad::matmul(a, b);
      FAIL("expected contract error");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
  }
  SUBCASE("finite checking rejects NaN") {
    Tape tape(/*check_finite=*/true);
    Matrix bad(1, 1);
    bad << std::nan("");
    CHECK_THROWS_AS(tape.leaf(bad, false), NumericalError);
  }
}

TEST_CASE("every op matches central differences") {
  const SpMat sp = adjacency_matrix(generate_erdos_renyi(4, 0.6, 11));
  std::vector<std::pair<const char*, GradCheckProblem>> problems;
  auto weighted_sum = [](Var y, Var w) { return ad::sum(ad::elementwise_mul(y, w)); };

  problems.push_back({"matmul",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::matmul(p[0], p[1]));
                       },
                       {random_matrix(3, 4, 20), random_matrix(4, 2, 21)}}});
  problems.push_back({"transpose",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::matmul(ad::transpose(p[0]), p[0]));
                       },
                       {random_matrix(3, 2, 22)}}});
  problems.push_back({"spmm",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::elementwise_mul(ad::spmm(sp, p[0]), p[1]));
                       },
                       {random_matrix(4, 3, 23), random_matrix(4, 3, 24)}}});
  problems.push_back({"add_sub",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::sub(ad::add(p[0], p[1]), ad::scalar_mul(p[0], 0.3)));
                       },
                       {random_matrix(3, 3, 25), random_matrix(3, 3, 26)}}});
  problems.push_back({"scale_by",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::scale_by(p[0], p[1]));
                       },
                       {random_matrix(3, 3, 27), random_matrix(1, 1, 28)}}});
  problems.push_back({"relu",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::relu(p[0]));
                       },
                       {safe_matrix(4, 4, 29)}}});
  problems.push_back({"elementwise_mul",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::elementwise_mul(p[0], p[1]));
                       },
                       {random_matrix(3, 3, 30), random_matrix(3, 3, 31)}}});
  problems.push_back({"exp",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::exp(p[0]));
                       },
                       {random_matrix(3, 3, 32)}}});
  problems.push_back({"log_clamped",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return ad::sum(ad::log_clamped(ad::exp(p[0])));
                       },
                       {random_matrix(3, 3, 33)}}});
  problems.push_back({"row_softmax",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return weighted_sum(ad::row_softmax(p[0]), p[1]);
                       },
                       {random_matrix(4, 5, 34), random_matrix(4, 5, 35)}}});
  problems.push_back({"row_normalize",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return weighted_sum(ad::row_normalize(ad::exp(p[0])), p[1]);
                       },
                       {random_matrix(4, 5, 36), random_matrix(4, 5, 37)}}});
  problems.push_back({"col_normalize",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return weighted_sum(ad::col_normalize(ad::exp(p[0])), p[1]);
                       },
                       {random_matrix(4, 5, 38), random_matrix(4, 5, 39)}}});
  problems.push_back({"concat_cols",
                      {[&](Tape&, const std::vector<Var>& p) {
                         std::vector<Var> parts{p[0], p[1]};
                         return weighted_sum(ad::concat_cols(parts), p[2]);
                       },
                       {random_matrix(3, 2, 40), random_matrix(3, 3, 41),
                        random_matrix(3, 5, 42)}}});
  problems.push_back({"concat_slice_rows",
                      {[&](Tape&, const std::vector<Var>& p) {
                         Var stacked = ad::concat_rows(p[0], p[1]);
                         return weighted_sum(ad::slice_rows(stacked, 1, 3), p[2]);
                       },
                       {random_matrix(2, 3, 43), random_matrix(3, 3, 44),
                        random_matrix(3, 3, 45)}}});
  problems.push_back({"batch_feature_normalize",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return weighted_sum(ad::batch_feature_normalize(p[0]), p[1]);
                       },
                       {random_matrix(6, 3, 46), random_matrix(6, 3, 47)}}});
  problems.push_back({"add_row_broadcast",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return weighted_sum(ad::add_row_broadcast(p[0], p[1]), p[2]);
                       },
                       {random_matrix(4, 3, 48), random_matrix(1, 3, 49),
                        random_matrix(4, 3, 50)}}});
  problems.push_back({"mul_row_broadcast",
                      {[&](Tape&, const std::vector<Var>& p) {
                         return weighted_sum(ad::mul_row_broadcast(p[0], p[1]), p[2]);
                       },
                       {random_matrix(4, 3, 51), random_matrix(1, 3, 52),
                        random_matrix(4, 3, 53)}}});

  for (auto& [name, problem] : problems) {
    INFO(name);
    CHECK(ad::grad_check(problem) < 1e-4);
  }
}

TEST_CASE("backward determinism") {
  auto run = [] {
    Tape tape;
    Var w = tape.leaf(random_matrix(5, 5, 60), true);
    Var v = tape.leaf(random_matrix(5, 5, 61), true);
    Var loss = ad::sum(ad::elementwise_mul(ad::row_softmax(ad::matmul(w, v)), v));
    tape.backward(loss);
    return std::pair<Matrix, Matrix>(tape.grad(w), tape.grad(v));
  };
  auto [gw1, gv1] = run();
  auto [gw2, gv2] = run();
  CHECK(gw1 == gw2);
  CHECK(gv1 == gv2);
}

TEST_CASE("row softmax and batch normalization invariants") {
  Tape tape;
  Matrix x = random_matrix(20, 7, 70);
  Var s = ad::row_softmax(tape.constant(x));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    CHECK(std::abs(s.value().row(i).sum() - 1.0) < 1e-12);
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      CHECK(s.value()(i, j) > 0.0);
      CHECK(s.value()(i, j) < 1.0);
    }
  }
  Var normed = ad::batch_feature_normalize(tape.constant(x));
  for (Eigen::Index j = 0; j < normed.cols(); ++j) {
    const double mean = normed.value().col(j).mean();
    const double var = normed.value().col(j).array().square().mean() - mean * mean;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("grad_check oracle behaviors") {
  SUBCASE("quadratic is exact to first order") {
    GradCheckProblem quadratic{[](Tape&, const std::vector<Var>& p) {
                                 return ad::sum(ad::elementwise_mul(p[0], p[0]));
                               },
                               {random_matrix(3, 3, 80)}};
    CHECK(ad::grad_check(quadratic) < 1e-8);
  }
  SUBCASE("constant function has zero error") {
    GradCheckProblem constant{[](Tape& t, const std::vector<Var>& p) {
                                (void)p;
                                return t.constant(Matrix::Constant(1, 1, 3.0));
                              },
                              {random_matrix(2, 2, 81)}};
    CHECK(ad::grad_check(constant) == 0.0);
  }
  SUBCASE("one-layer GCN with cross entropy on P3") {
    auto p3 = make_graph(false, 3, {{0, 1}, {1, 2}});
    const SpMat norm_adj = normalized_adjacency(p3);
    const Matrix x = random_matrix(3, 2, 82);
    GradCheckProblem gcn{[&](Tape& tape, const std::vector<Var>& p) {
                           Var z = ad::relu(ad::matmul(ad::spmm(norm_adj, tape.constant(x)), p[0]));
                           Var s = ad::row_softmax(ad::matmul(z, ad::transpose(z)));
                           Matrix mask = Matrix::Identity(3, 3);
                           return ad::scalar_mul(
                               ad::sum(ad::elementwise_mul(ad::log_clamped(s),
                                                           tape.constant(mask))),
                               -1.0);
                         },
                         {random_matrix(2, 4, 83)}};
    CHECK(ad::grad_check(gcn) < 1e-4);
  }
}

TEST_CASE("adam optimizer") {
  using ad::AdamState;
  using ad::GradMap;
  using ad::ParamStore;

  SUBCASE("zero gradient leaves parameters alone") {
    ParamStore store;
    store.create_glorot("w", 3, 3, 1);
    const Matrix before = store.at("w");
    AdamState state;
    GradMap grads{{"w", Matrix::Zero(3, 3)}};
    adam_step(store, grads, state);
    CHECK(store.at("w") == before);
  }
  SUBCASE("first step moves every coordinate by ~lr") {
    ParamStore store;
    store.create_constant("w", 2, 2, 1.0);
    AdamState state;
    state.cfg.lr = 1e-3;
    Matrix g(2, 2);
    g << 0.5, -2.0, 1.0, 3.0;
    GradMap grads{{"w", g}};
    adam_step(store, grads, state);
    for (Eigen::Index i = 0; i < 2; ++i) {
      for (Eigen::Index j = 0; j < 2; ++j) {
        const double delta = store.at("w")(i, j) - 1.0;
        CHECK(std::abs(std::abs(delta) - 1e-3) < 1e-6);
        CHECK(delta * g(i, j) < 0.0);  // descent direction
      }
    }
    CHECK(state.step == 1);
  }
  SUBCASE("deterministic across identical runs") {
    auto run = [] {
      ParamStore store;
      store.create_glorot("w", 4, 4, 9);
      AdamState state;
      for (int i = 0; i < 5; ++i) {
        GradMap grads{{"w", random_matrix(4, 4, 100 + static_cast<std::uint64_t>(i))}};
        adam_step(store, grads, state);
      }
      return Matrix(store.at("w"));
    };
    CHECK(run() == run());
  }
  SUBCASE("shape mismatch rejected") {
    ParamStore store;
    store.create_constant("w", 2, 2, 0.0);
    AdamState state;
    GradMap grads{{"w", Matrix::Zero(3, 3)}};
    CHECK_THROWS_AS(adam_step(store, grads, state), ContractError);
  }
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  ad::ParamStore store;
  store.create_glorot("enc/L00/w", 4, 3, 5);
  store.create_constant("enc/L00/b", 1, 3, 0.25);
  const auto path = (fs::temp_directory_path() / "hgmn_ckpt_test.json").string();
  ad::save_checkpoint(store, path);
  ad::ParamStore loaded = ad::load_checkpoint(path);
  CHECK(loaded.size() == 2);
  CHECK(loaded.at("enc/L00/w") == store.at("enc/L00/w"));
  CHECK(loaded.at("enc/L00/b") == store.at("enc/L00/b"));
  fs::remove(path);
}
