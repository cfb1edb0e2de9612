#include <catch2/catch_amalgamated.hpp>

#include "fhmm/exact.hpp"
#include "helpers.hpp"

using namespace fhmm;

TEST_CASE("joint state codec round-trips") {
  auto model = fhmm::testing::small_model(3);
  model.appliances[1].power_levels = Eigen::Vector3d(0.0, 50.0, 120.0);
  model.appliances[1].transition = Eigen::Matrix3d::Constant(1.0 / 3.0);
  model.initial_dist = uniform_initial(model.appliances);
  JointStateCodec codec(model);
  REQUIRE(codec.size == 2 * 3 * 2);
  for (int j = 0; j < codec.size; ++j) REQUIRE(codec.encode(codec.decode(j)) == j);
}

TEST_CASE("viterbi degenerates to single-chain decoding for M=1") {
  std::mt19937_64 rng(2);
  auto model = fhmm::testing::random_small_model(rng, 1, 3);
  auto [truth, trace] = simulate(model, 12, 8);

  auto result = exact_map_viterbi(model, trace);
  // reference: brute force over all 3^12 sequences
  auto brute = exact_map_enumerate(model, trace);
  REQUIRE(result.objective == brute.objective);
  REQUIRE(result.states.assignments == brute.states.assignments);
}

TEST_CASE("viterbi equals enumeration on random two-chain instances") {
  for (int seed = 0; seed < 25; ++seed) {
    std::mt19937_64 rng(40 + seed);
    auto model = fhmm::testing::random_small_model(rng, 2, 2);
    auto [truth, trace] = simulate(model, 6, 500 + seed);
    ObjectiveOptions opts;
    opts.use_edges = seed % 2 == 0;
    auto dp = exact_map_viterbi(model, trace, opts);
    auto brute = exact_map_enumerate(model, trace, opts);
    REQUIRE(dp.objective == brute.objective);
  }
}

TEST_CASE("noiseless deterministic instance recovers the generating sequence") {
  ApplianceHmm a;
  a.power_levels = Eigen::Vector2d(0.0, 100.0);
  a.transition.resize(2, 2);
  a.transition << 0.0, 1.0, 1.0, 0.0;  // alternator
  auto model = make_model({a}, 1.0, 1.0);
  model.initial_dist[0] = Eigen::Vector2d(1.0, 0.0);
  auto [truth, trace] = simulate(model, 9, 4);
  trace.aggregate = trace.per_appliance->rowwise().sum();

  auto result = exact_map_viterbi(model, trace);
  REQUIRE(result.states.assignments == truth.assignments);
  REQUIRE(result.objective == 0.0);
}

TEST_CASE("enumeration with horizon one minimizes the unary cost") {
  auto model = fhmm::testing::small_model(2, 5.0);
  ObservationTrace trace;
  trace.aggregate = Eigen::VectorXd::Constant(1, 250.0);
  auto result = exact_map_enumerate(model, trace);
  // levels are (0,100) and (0,250); the closest sum to 250 is 250
  REQUIRE(result.states.assignments(0, 0) == 0);
  REQUIRE(result.states.assignments(0, 1) == 1);
}

TEST_CASE("flat models keep all sequences within the uniform bound") {
  auto model = fhmm::testing::small_model(2, 1e6);
  for (auto& a : model.appliances) a.transition.setConstant(0.5);
  auto [states, trace] = simulate(model, 4, 3);
  auto best = exact_map_enumerate(model, trace);
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    auto other = fhmm::testing::random_states(rng, model, 4);
    REQUIRE(objective(model, trace, other) - best.objective <=
            3 * 2 * std::log(2.0) + 1e-6);
  }
}

TEST_CASE("capacity guards reject oversized instances") {
  std::vector<ApplianceHmm> apps;
  for (int i = 0; i < 13; ++i) apps.push_back(fhmm::testing::two_state(0.0, 100.0 + i));
  auto model = make_model(std::move(apps), 10.0, 10.0);  // 2^13 joint states
  ObservationTrace trace;
  trace.aggregate = Eigen::VectorXd::Zero(4);
  REQUIRE_THROWS_AS(exact_map_viterbi(model, trace), CapacityError);
  REQUIRE_THROWS_AS(exact_map_enumerate(model, trace), CapacityError);
}

TEST_CASE("optimal objective does not increase with sigma") {
  std::mt19937_64 rng(91);
  auto model = fhmm::testing::random_small_model(rng, 2, 2);
  auto [states, trace] = simulate(model, 6, 19);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {1.0, 2.0, 5.0, 10.0, 50.0}) {
    auto m = model;
    m.sigma = sigma;
    const double obj = exact_map_viterbi(m, trace).objective;
    REQUIRE(obj <= prev + 1e-12);
    prev = obj;
  }
}
