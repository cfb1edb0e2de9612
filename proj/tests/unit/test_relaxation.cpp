#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <sstream>

#include "fhmm/relaxation.hpp"
#include "helpers.hpp"

using namespace fhmm;

namespace {

RelaxedSolution as_solution(const SdpBlockProblem& p,
                            const std::vector<LiftedBlock>& blocks,
                            const std::vector<TransitionVector>& zs) {
  RelaxedSolution sol;
  for (const auto& b : blocks) sol.xhat.push_back(b.xhat);
  for (const auto& z : zs) sol.z.push_back(z.z);
  sol.objective = relaxed_objective(p, sol);
  return sol;
}

}  // namespace

TEST_CASE("svec preserves inner products and round-trips") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  for (int rep = 0; rep < 20; ++rep) {
    MatrixXd a = MatrixXd::NullaryExpr(5, 5, [&] { return gauss(rng); });
    MatrixXd b = MatrixXd::NullaryExpr(5, 5, [&] { return gauss(rng); });
    a = (0.5 * (a + a.transpose())).eval();
    b = (0.5 * (b + b.transpose())).eval();
    REQUIRE(smat(svec(a), 5).isApprox(a, 1e-14));
    REQUIRE(svec(a).dot(svec(b)) ==
            Catch::Approx((a.array() * b.array()).sum()).epsilon(1e-12));
  }
}

TEST_CASE("row inventory matches the constraint count for M=1, K=2") {
  auto model = fhmm::testing::small_model(1);
  auto [states, trace] = simulate(model, 3, 1);
  auto p = build(model, trace);
  REQUIRE(p.m == 4);       // 1 + n + M with n = 2
  REQUIRE(p.mprime == 4);  // 2n
  REQUIRE(p.zdim == 4);    // K^2
  REQUIRE(p.A.rows() == 4);
  REQUIRE(p.B.rows() == 4);
  REQUIRE(p.C.cols() == 4);
  REQUIRE(p.d.size() == 2);
}

TEST_CASE("integral lifts are feasible with exactly zero residual") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    auto model = fhmm::testing::random_small_model(rng, 2, 3);
    auto [sim_states, trace] = simulate(model, 5, 60 + rep);
    auto states = fhmm::testing::random_states(rng, model, 5);
    auto p = build(model, trace);
    auto [blocks, zs] = lift(p, states);

    for (int t = 0; t < 5; ++t) {
      REQUIRE(a_residual(p, blocks[t].xhat).cwiseAbs().maxCoeff() == 0.0);
      // rank-1 PSD with trace 1 + M
      REQUIRE(blocks[t].xhat.trace() == 1.0 + model.num_appliances());
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(blocks[t].xhat);
      REQUIRE(eig.eigenvalues().minCoeff() >= -1e-12);
    }
    for (int t = 0; t + 1 < 5; ++t)
      REQUIRE(coupling_residual(p, blocks[t].xhat, zs[t].z, blocks[t + 1].xhat)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);

    // svec-operator residuals agree with the structural evaluators
    for (int t = 0; t < 5; ++t) {
      VectorXd via_ops = p.A * svec(blocks[t].xhat) - p.b;
      REQUIRE((via_ops - a_residual(p, blocks[t].xhat)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("lift round-trips the one-hot vectors") {
  auto model = fhmm::testing::small_model(2);
  auto [states, trace] = simulate(model, 4, 9);
  auto p = build(model, trace);
  auto [blocks, zs] = lift(p, states);
  for (int t = 0; t < 4; ++t) {
    const VectorXd x = blocks[t].x();
    for (int i = 0; i < 2; ++i)
      for (int s = 0; s < 2; ++s)
        REQUIRE(x(p.x_index(i, s)) ==
                (states.assignments(t, i) == s ? 1.0 : 0.0));
    REQUIRE(blocks[t].inner().diagonal() == x);
  }
}

TEST_CASE("relaxed objective reproduces the exact objective at integral lifts") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    auto model = fhmm::testing::random_small_model(rng, 2, 2);
    auto [sim_states, trace] = simulate(model, 6, 200 + rep);
    auto states = fhmm::testing::random_states(rng, model, 6);

    ObjectiveOptions opts;
    opts.use_edges = rep % 2 == 0;
    opts.log_zero_penalty = kLogZeroSolverPenalty;
    auto p = build(model, trace, opts);
    auto [blocks, zs] = lift(p, states);
    auto sol = as_solution(p, blocks, zs);

    const double expected = objective(model, trace, states, opts);
    REQUIRE(sol.objective ==
            Catch::Approx(expected).epsilon(1e-12).margin(1e-12));

    // per-step quadratic identity
    for (int t = 0; t < 6; ++t) {
      double level = 0.0;
      for (int i = 0; i < 2; ++i)
        level += model.appliances[i].power_levels(states.assignments(t, i));
      const double quad = (trace.aggregate(t) - level) * (trace.aggregate(t) - level) /
                          (2.0 * model.sigma * model.sigma);
      const double lifted = (p.cost[t].array() * blocks[t].xhat.array()).sum() +
                            trace.aggregate(t) * trace.aggregate(t) /
                                (2.0 * model.sigma * model.sigma);
      REQUIRE(lifted == Catch::Approx(quad).epsilon(1e-9).margin(1e-9));
    }
  }
}

TEST_CASE("relaxed objective of all-zero blocks is the recorded offset") {
  auto model = fhmm::testing::small_model(1);
  auto [states, trace] = simulate(model, 3, 21);
  auto p = build(model, trace);
  RelaxedSolution sol;
  sol.xhat.assign(3, MatrixXd::Zero(p.order(), p.order()));
  sol.z.assign(2, VectorXd::Zero(p.zdim));
  REQUIRE(relaxed_objective(p, sol) == p.objective_offset);
}

TEST_CASE("problem dump emits one JSON object per step") {
  auto model = fhmm::testing::small_model(1);
  auto [states, trace] = simulate(model, 3, 2);
  auto p = build(model, trace);
  std::ostringstream os;
  dump_problem(p, os);
  int lines = 0;
  std::string line;
  std::istringstream is(os.str());
  while (std::getline(is, line)) {
    auto obj = nlohmann::json::parse(line);
    REQUIRE(obj.contains("D"));
    ++lines;
  }
  REQUIRE(lines == 3);
}

TEST_CASE("build rejects single-step traces") {
  auto model = fhmm::testing::small_model(1);
  ObservationTrace trace;
  trace.aggregate = Eigen::VectorXd::Zero(1);
  REQUIRE_THROWS_AS(build(model, trace), InputError);
}
