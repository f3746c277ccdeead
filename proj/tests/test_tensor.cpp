#include "doctest.h"

#include <cmath>
#include <random>

#include "zsda/rng.hpp"
#include "zsda/tensor.hpp"

using namespace zsda;

namespace {

// Independent per-entry oracle: explicit sum-of-products loop, no shared
// code with cp_reconstruct_head.
double cp_entry_oracle(const CPFactors& f, const MultiIndex& idx, int j) {
  double total = 0.0;
  for (int k = 0; k < f.rank; ++k) {
    double prod = 1.0;
    for (int m = 0; m < f.grid.mode_count(); ++m)
      prod *= f.factor(k, m)(idx[static_cast<std::size_t>(m)], j);
    total += prod;
  }
  return total;
}

CPFactors random_factors(int rank, const DomainGrid& grid, int width, std::uint64_t seed) {
  CPFactors f = CPFactors::zeros(rank, grid, width);
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int k = 0; k < rank; ++k)
    for (int m = 0; m < grid.mode_count(); ++m)
      for (Eigen::Index a = 0; a < f.factor(k, m).rows(); ++a)
        for (Eigen::Index b = 0; b < f.factor(k, m).cols(); ++b)
          f.factor(k, m)(a, b) = unif(rng);
  return f;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("flat and multi index examples") {
  DomainGrid grid({2, 3});
  CHECK(grid.flat_index({0, 0}) == 0);
  CHECK(grid.flat_index({1, 2}) == 5);  // row-major: last mode fastest
  CHECK(grid.domain_count() == 6);

  // Brute-force oracle on [5,5]: enumerate row-major order by hand.
  DomainGrid sq({5, 5});
  int t = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      CHECK(sq.flat_index({i, j}) == t);
      CHECK(sq.multi_index(t) == MultiIndex{i, j});
      ++t;
    }
  CHECK(sq.multi_index(7) == MultiIndex{1, 2});
}

TEST_CASE("round trip is exhaustive on grids up to 10^4 domains") {
  for (const auto& dims :
       {std::vector<int>{7}, {2, 3, 4}, {5, 5}, {10, 10, 10, 10}, {1, 4, 1, 3}}) {
    DomainGrid grid(dims);
    for (int t = 0; t < grid.domain_count(); ++t)
      REQUIRE(grid.flat_index(grid.multi_index(t)) == t);
  }
}

TEST_CASE("index bounds are errors") {
  DomainGrid grid({2, 3});
  CHECK_THROWS_AS(grid.flat_index({2, 0}), BoundsError);
  CHECK_THROWS_AS(grid.flat_index({0, -1}), BoundsError);
  CHECK_THROWS_AS(grid.flat_index({0}), BoundsError);
  CHECK_THROWS_AS(grid.multi_index(6), BoundsError);
  CHECK_THROWS_AS(grid.multi_index(-1), BoundsError);
  CHECK_THROWS_AS(DomainGrid({2, 0}), ShapeError);
  CHECK_THROWS_AS(DomainGrid(std::vector<int>{}), ShapeError);
}

TEST_CASE("cp_reconstruct_head examples") {
  DomainGrid grid({2, 2});
  CPFactors ones = CPFactors::zeros(1, grid, 3);
  for (int m = 0; m < 2; ++m) ones.factor(0, m).setOnes();
  const Eigen::VectorXd head = cp_reconstruct_head(ones, {1, 0});
  for (int j = 0; j < 3; ++j) CHECK(head(j) == doctest::Approx(1.0));

  // A zero row annihilates its whole rank term.
  CPFactors two = random_factors(2, grid, 1, 7);
  two.factor(1, 0).row(1).setZero();
  const double expect = two.factor(0, 0)(1, 0) * two.factor(0, 1)(0, 0);
  CHECK(cp_reconstruct_head(two, {1, 0})(0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cp_reconstruct_head matches the triple-loop oracle") {
  DomainGrid grid({2, 2, 2});
  CPFactors f = random_factors(2, grid, 2, 2024);
  for (int t = 0; t < grid.domain_count(); ++t) {
    const MultiIndex idx = grid.multi_index(t);
    const Eigen::VectorXd head = cp_reconstruct_head(f, idx);
    for (int j = 0; j < 2; ++j)
      CHECK(head(j) == doctest::Approx(cp_entry_oracle(f, idx, j)).epsilon(1e-12));
  }
}

TEST_CASE("cp_materialize examples and oracle equivalence") {
  DomainGrid grid({2, 2});
  CPFactors ones = CPFactors::zeros(1, grid, 1);
  ones.factor(0, 0).setOnes();
  ones.factor(0, 1).setOnes();
  const HeadTensor all = cp_materialize(ones);
  CHECK(all.values.rows() == 4);
  CHECK((all.values.array() == 1.0).all());

  // 20 seeded random factor sets against the per-entry oracle (the full
  // 100-set sweep runs in the acceptance suite).
  auto seeds = make_rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> pick_rank(1, 3), pick_modes(2, 4), pick_dim(1, 5),
        pick_width(1, 8);
    const int modes = pick_modes(seeds);
    std::vector<int> dims;
    for (int m = 0; m < modes; ++m) dims.push_back(pick_dim(seeds));
    DomainGrid g(dims);
    CPFactors f = random_factors(pick_rank(seeds), g, pick_width(seeds),
                                 derive_seed(4242, static_cast<std::uint64_t>(trial)));
    const HeadTensor heads = cp_materialize(f);
    for (int t = 0; t < g.domain_count(); ++t) {
      const MultiIndex idx = g.multi_index(t);
      for (int j = 0; j < f.width; ++j) {
        const double oracle = cp_entry_oracle(f, idx, j);
        REQUIRE(heads.values(t, j) ==
                doctest::Approx(oracle).epsilon(1e-12).scale(std::max(1.0, std::abs(oracle))));
      }
    }
  }
}

TEST_CASE("materialization is invariant to compensating factor rescaling") {
  DomainGrid grid({3, 4, 2});
  CPFactors f = random_factors(3, grid, 4, 5150);
  const HeadTensor before = cp_materialize(f);
  const double c = -7.25;
  f.factor(1, 0) *= c;
  f.factor(1, 2) *= 1.0 / c;
  const HeadTensor after = cp_materialize(f);
  CHECK((before.values - after.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("additive_to_cp realizes s_i + v_j + u with ones padding") {
  auto rng = make_rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int q = 3;
  Eigen::VectorXd u(q);
  for (int j = 0; j < q; ++j) u(j) = gauss(rng);
  Eigen::MatrixXd s(5, q), v(5, q);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (int j = 0; j < q; ++j) {
      s(i, j) = gauss(rng);
      v(i, j) = gauss(rng);
    }

  const CPFactors f = additive_to_cp(u, {s, v});
  CHECK(f.rank == 3);  // M + 1
  // Padding slots are exactly one.
  CHECK((f.factor(0, 1).array() == 1.0).all());
  CHECK((f.factor(1, 0).array() == 1.0).all());
  CHECK((f.factor(2, 1).array() == 1.0).all());
  for (Eigen::Index i = 0; i < 5; ++i)
    CHECK((f.factor(2, 0).row(i).transpose() - u).cwiseAbs().maxCoeff() == 0.0);

  const HeadTensor heads = cp_materialize(f);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const Eigen::VectorXd expect = s.row(i).transpose() + v.row(j).transpose() + u;
      const Eigen::VectorXd got = heads.values.row(f.grid.flat_index({i, j})).transpose();
      CHECK((expect - got).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("additive_to_cp edge cases") {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  const CPFactors f =
      additive_to_cp(zero, {Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 2)});
  CHECK((cp_materialize(f).values.array() == 0.0).all());

  // Random additive construction on [2,3] matches direct evaluation.
  auto rng = make_rng(77);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd u(2);
  Eigen::MatrixXd b0(2, 2), b1(3, 2);
  u << gauss(rng), gauss(rng);
  for (Eigen::Index i = 0; i < b0.size(); ++i) b0(i) = gauss(rng);
  for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = gauss(rng);
  const CPFactors g = additive_to_cp(u, {b0, b1});
  const HeadTensor heads = cp_materialize(g);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      const Eigen::VectorXd expect = u + b0.row(i).transpose() + b1.row(j).transpose();
      CHECK((heads.values.row(g.grid.flat_index({i, j})).transpose() - expect)
                .cwiseAbs()
                .maxCoeff() < 1e-12);
    }

  CHECK_THROWS_AS(additive_to_cp(zero, {Eigen::MatrixXd::Zero(2, 3)}), ShapeError);
  CHECK_THROWS_AS(additive_to_cp(zero, {}), ShapeError);
}

TEST_CASE("pdim_bound formula") {
  CHECK(pdim_bound(1, 1, 1) == doctest::Approx(std::log(8.0 * std::exp(1.0))).epsilon(1e-12));
  const double expect = 2.0 * 4.0 * 9.0 * std::log(32.0 * std::exp(1.0));
  CHECK(pdim_bound(2, 4, 3) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(pdim_bound(2, 4, 3) == doctest::Approx(321.53).epsilon(1e-3));
  CHECK(pdim_bound(2, 1, 1) > pdim_bound(1, 1, 1));
  CHECK(pdim_bound(3, 5, 2) > pdim_bound(2, 5, 2));
  CHECK_THROWS_AS(pdim_bound(0, 1, 1), DomainError);
  CHECK_THROWS_AS(pdim_bound(1, 0, 1), DomainError);
  CHECK_THROWS_AS(pdim_bound(1, 1, 0), DomainError);
}

TEST_CASE("validation rejects bad factor shapes and non-finite data") {
  DomainGrid grid({2, 2});
  CPFactors f = CPFactors::zeros(1, grid, 2);
  f.factor(0, 0)(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(f.validate(), DataError);
  CPFactors g = CPFactors::zeros(1, grid, 2);
  g.factor(0, 1) = Eigen::MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(g.validate(), ShapeError);
}

}  // TEST_SUITE
