#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fhmm/model.hpp"

namespace fhmm {

/// Mixed-radix codec for joint states. Appliance 0 is the most significant
/// digit, so ascending indices enumerate tuples in lexicographic order.
struct JointStateCodec {
  std::vector<int> radices;  // K_i per appliance
  int size = 1;

  explicit JointStateCodec(const FhmmModel& model) {
    radices.reserve(model.num_appliances());
    for (int i = 0; i < model.num_appliances(); ++i) {
      radices.push_back(model.num_states(i));
      size *= model.num_states(i);
    }
  }

  int encode(const std::vector<int>& tuple) const {
    int idx = 0;
    for (size_t i = 0; i < radices.size(); ++i) idx = idx * radices[i] + tuple[i];
    return idx;
  }

  std::vector<int> decode(int idx) const {
    std::vector<int> tuple(radices.size());
    for (int i = static_cast<int>(radices.size()) - 1; i >= 0; --i) {
      tuple[i] = idx % radices[i];
      idx /= radices[i];
    }
    return tuple;
  }
};

struct ExactResult {
  StateSequence states;
  double objective = 0.0;
};

namespace detail {

inline std::vector<double> joint_level_sums(const FhmmModel& model,
                                            const JointStateCodec& codec) {
  std::vector<double> sums(codec.size);
  for (int j = 0; j < codec.size; ++j) {
    const auto tuple = codec.decode(j);
    double s = 0.0;
    for (size_t i = 0; i < tuple.size(); ++i)
      s += model.appliances[i].power_levels(tuple[i]);
    sums[j] = s;
  }
  return sums;
}

// Per-appliance transition cost tables for every t, shared by both oracles so
// that tie detection sees identical floats.
inline std::vector<std::vector<MatrixXd>> transition_tables(
    const FhmmModel& model, const EdgeCosts* edges, int horizon,
    const ObjectiveOptions& opts) {
  std::vector<std::vector<MatrixXd>> tables(horizon - 1);
  for (int t = 0; t + 1 < horizon; ++t) {
    tables[t].reserve(model.num_appliances());
    for (int i = 0; i < model.num_appliances(); ++i)
      tables[t].push_back(transition_cost_matrix(model, edges, t, i, opts));
  }
  return tables;
}

}  // namespace detail

/// Exact MAP by dynamic programming over the joint chain. Ties are broken
/// toward the lexicographically smallest assignment (t-major, then appliance).
inline ExactResult exact_map_viterbi(const FhmmModel& model,
                                     const ObservationTrace& trace,
                                     const ObjectiveOptions& opts = {}) {
  const JointStateCodec codec(model);
  const int horizon = trace.horizon();
  const int joint = codec.size;
  if (joint > 4096)
    throw CapacityError("joint state space " + std::to_string(joint) +
                        " exceeds the Viterbi guard of 4096");
  const double work = static_cast<double>(horizon) * joint * joint;
  if (work > 1e9)
    throw CapacityError("T * (joint states)^2 = " + std::to_string(work) +
                        " exceeds the Viterbi guard of 1e9");

  std::optional<EdgeCosts> edges;
  if (opts.use_edges) edges = edge_costs(model, trace);
  const auto tables =
      detail::transition_tables(model, edges ? &*edges : nullptr, horizon, opts);
  const auto level = detail::joint_level_sums(model, codec);
  const double inv_two_sigma2 = 1.0 / (2.0 * model.sigma * model.sigma);

  std::vector<std::vector<int>> tuples(joint);
  for (int j = 0; j < joint; ++j) tuples[j] = codec.decode(j);

  auto unary = [&](int t, int j) {
    const double r = trace.aggregate(t) - level[j];
    return r * r * inv_two_sigma2;
  };
  auto edge_cost = [&](int t, int j, int jn) {
    double c = 0.0;
    for (int i = 0; i < model.num_appliances(); ++i)
      c += tables[t][i](tuples[j][i], tuples[jn][i]);
    return c;
  };

  // Cost-to-go so the forward reconstruction can pick the smallest joint
  // index achieving the optimum at each step (lexicographic tie-break).
  std::vector<std::vector<double>> cost_to_go(horizon, std::vector<double>(joint));
  for (int j = 0; j < joint; ++j) cost_to_go[horizon - 1][j] = unary(horizon - 1, j);
  for (int t = horizon - 2; t >= 0; --t)
    for (int j = 0; j < joint; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (int jn = 0; jn < joint; ++jn) {
        const double cand = edge_cost(t, j, jn) + cost_to_go[t + 1][jn];
        if (cand < best) best = cand;
      }
      cost_to_go[t][j] = unary(t, j) + best;
    }

  StateSequence states;
  states.assignments.resize(horizon, model.num_appliances());
  int cur = 0;
  double best0 = std::numeric_limits<double>::infinity();
  for (int j = 0; j < joint; ++j)
    if (cost_to_go[0][j] < best0) {
      best0 = cost_to_go[0][j];
      cur = j;
    }
  for (int i = 0; i < model.num_appliances(); ++i)
    states.assignments(0, i) = tuples[cur][i];
  for (int t = 0; t + 1 < horizon; ++t) {
    int next = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int jn = 0; jn < joint; ++jn) {
      const double cand = edge_cost(t, cur, jn) + cost_to_go[t + 1][jn];
      if (cand < best) {
        best = cand;
        next = jn;
      }
    }
    cur = next;
    for (int i = 0; i < model.num_appliances(); ++i)
      states.assignments(t + 1, i) = tuples[cur][i];
  }

  return {states, objective(model, trace, edges ? &*edges : nullptr, states, opts)};
}

/// Independent brute-force oracle: enumerates every joint sequence in
/// lexicographic order and keeps the first minimizer.
inline ExactResult exact_map_enumerate(const FhmmModel& model,
                                       const ObservationTrace& trace,
                                       const ObjectiveOptions& opts = {}) {
  const JointStateCodec codec(model);
  const int horizon = trace.horizon();
  const double total = std::pow(static_cast<double>(codec.size), horizon);
  if (!(total <= 2e7))
    throw CapacityError("(joint states)^T = " + std::to_string(total) +
                        " exceeds the enumeration guard of 2e7");

  std::optional<EdgeCosts> edges;
  if (opts.use_edges) edges = edge_costs(model, trace);
  const EdgeCosts* eptr = edges ? &*edges : nullptr;

  std::vector<int> digits(horizon, 0);
  StateSequence seq;
  seq.assignments.resize(horizon, model.num_appliances());
  auto fill_seq = [&] {
    for (int t = 0; t < horizon; ++t) {
      const auto tuple = codec.decode(digits[t]);
      for (int i = 0; i < model.num_appliances(); ++i) seq.assignments(t, i) = tuple[i];
    }
  };

  double best = std::numeric_limits<double>::infinity();
  StateSequence best_seq;
  bool done = false;
  while (!done) {
    fill_seq();
    const double obj = objective(model, trace, eptr, seq, opts);
    if (obj < best || best_seq.assignments.size() == 0) {
      best = obj;
      best_seq = seq;
    }
    // odometer: last time step is the fastest digit, preserving lex order
    int pos = horizon - 1;
    while (pos >= 0) {
      if (++digits[pos] < codec.size) break;
      digits[pos] = 0;
      --pos;
    }
    done = pos < 0;
  }
  return {std::move(best_seq), best};
}

}  // namespace fhmm
