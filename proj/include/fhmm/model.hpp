#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fhmm/errors.hpp"
#include "fhmm/rng.hpp"

namespace fhmm {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

/// One appliance: a hidden Markov chain over K constant power levels.
struct ApplianceHmm {
  VectorXd power_levels;  // watts, length K
  MatrixXd transition;    // K x K, row-stochastic

  int num_states() const { return static_cast<int>(power_levels.size()); }
};

/// Additive factorial HMM: M independent chains, observed through the sum of
/// their levels plus Gaussian noise of std-dev sigma. sigma_diff scales the
/// optional edge-matching cost on consecutive aggregate differences.
struct FhmmModel {
  std::vector<ApplianceHmm> appliances;
  double sigma = 1.0;
  double sigma_diff = 1.0;
  std::vector<VectorXd> initial_dist;  // per appliance, length K_i

  int num_appliances() const { return static_cast<int>(appliances.size()); }
  int num_states(int i) const { return appliances[i].num_states(); }
  int total_states() const {
    int n = 0;
    for (const auto& a : appliances) n += a.num_states();
    return n;
  }
};

inline std::vector<VectorXd> uniform_initial(const std::vector<ApplianceHmm>& apps) {
  std::vector<VectorXd> init;
  init.reserve(apps.size());
  for (const auto& a : apps)
    init.push_back(VectorXd::Constant(a.num_states(), 1.0 / a.num_states()));
  return init;
}

inline FhmmModel make_model(std::vector<ApplianceHmm> apps, double sigma,
                            double sigma_diff) {
  FhmmModel m;
  m.appliances = std::move(apps);
  m.sigma = sigma;
  m.sigma_diff = sigma_diff;
  m.initial_dist = uniform_initial(m.appliances);
  return m;
}

/// Per-time, per-appliance state assignments (0-based internally; the CSV
/// interface is 1-based). Entry (t,i) selects the active state of chain i.
struct StateSequence {
  MatrixXi assignments;  // T x M

  int horizon() const { return static_cast<int>(assignments.rows()); }
  int num_appliances() const { return static_cast<int>(assignments.cols()); }

  // One-hot view x_{t,i}.
  VectorXd one_hot(const FhmmModel& model, int t, int i) const {
    VectorXd x = VectorXd::Zero(model.num_states(i));
    x(assignments(t, i)) = 1.0;
    return x;
  }
};

struct ObservationTrace {
  VectorXd aggregate;                     // length T, watts
  std::optional<MatrixXd> per_appliance;  // T x M, ground truth when available

  int horizon() const { return static_cast<int>(aggregate.size()); }
};

/// Edge-matching costs: entry (m,k) of E_{t,i} scores explaining the observed
/// aggregate jump between t and t+1 by chain i moving from state m to k.
struct EdgeCosts {
  std::vector<std::vector<MatrixXd>> e;  // (T-1) x M, each K_i x K_i

  const MatrixXd& at(int t, int i) const { return e[t][i]; }
};

namespace detail {
inline std::string idx_msg(const std::string& what, int i, int row = -1) {
  std::string s = what + " (appliance " + std::to_string(i);
  if (row >= 0) s += ", row " + std::to_string(row);
  return s + ")";
}
}  // namespace detail

/// Checks every structural invariant; throws InputError naming the first
/// violation with its (appliance, row) indices.
inline void validate(const FhmmModel& model) {
  if (model.num_appliances() < 1) throw InputError("model must have at least one appliance");
  for (int i = 0; i < model.num_appliances(); ++i) {
    const auto& a = model.appliances[i];
    const int k = a.num_states();
    if (k < 2) throw InputError(detail::idx_msg("appliance needs at least 2 states", i));
    if (a.transition.rows() != k || a.transition.cols() != k)
      throw InputError(detail::idx_msg("transition matrix shape mismatch", i));
    for (int s = 0; s < k; ++s) {
      const double lvl = a.power_levels(s);
      if (!std::isfinite(lvl) || lvl < 0.0)
        throw InputError(detail::idx_msg("power level must be finite and >= 0", i, s));
    }
    for (int r = 0; r < k; ++r) {
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        const double p = a.transition(r, c);
        if (!(p >= 0.0 && p <= 1.0))
          throw InputError(detail::idx_msg("transition entry outside [0,1]", i, r));
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw InputError(detail::idx_msg("row not stochastic", i, r));
    }
  }
  if (!(model.sigma > 0.0)) throw InputError("sigma must be positive");
  if (!(model.sigma_diff > 0.0)) throw InputError("sigma_diff must be positive");
  if (model.initial_dist.size() != static_cast<size_t>(model.num_appliances()))
    throw InputError("initial_dist must have one vector per appliance");
  for (int i = 0; i < model.num_appliances(); ++i) {
    const auto& d = model.initial_dist[i];
    if (d.size() != model.num_states(i))
      throw InputError(detail::idx_msg("initial distribution length mismatch", i));
    if (d.minCoeff() < 0.0)
      throw InputError(detail::idx_msg("initial distribution entry negative", i));
    if (std::abs(d.sum() - 1.0) > 1e-9)
      throw InputError(detail::idx_msg("initial distribution does not sum to 1", i));
  }
}

namespace detail {
// Inverse-CDF draw so that sampling is fully pinned down by the uniform stream.
inline int sample_categorical(const VectorXd& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double cum = 0.0;
  for (int s = 0; s < probs.size(); ++s) {
    cum += probs(s);
    if (u < cum) return s;
  }
  return static_cast<int>(probs.size()) - 1;
}
}  // namespace detail

/// Samples each chain from its initial distribution and transition matrix,
/// then observes the noisy aggregate. Deterministic given the seed.
inline std::pair<StateSequence, ObservationTrace> simulate(const FhmmModel& model,
                                                           int horizon,
                                                           std::uint64_t seed) {
  if (horizon < 1) throw InputError("simulation horizon must be >= 1");
  const int m = model.num_appliances();
  StateSequence states;
  states.assignments.resize(horizon, m);
  std::mt19937_64 rng = make_rng(seed);
  for (int i = 0; i < m; ++i) {
    int s = detail::sample_categorical(model.initial_dist[i], rng);
    states.assignments(0, i) = s;
    for (int t = 1; t < horizon; ++t) {
      s = detail::sample_categorical(model.appliances[i].transition.row(s), rng);
      states.assignments(t, i) = s;
    }
  }
  ObservationTrace trace;
  trace.aggregate.resize(horizon);
  MatrixXd per(horizon, m);
  for (int t = 0; t < horizon; ++t)
    for (int i = 0; i < m; ++i)
      per(t, i) = model.appliances[i].power_levels(states.assignments(t, i));
  std::normal_distribution<double> noise(0.0, model.sigma);
  for (int t = 0; t < horizon; ++t) trace.aggregate(t) = per.row(t).sum() + noise(rng);
  trace.per_appliance = std::move(per);
  return {std::move(states), std::move(trace)};
}

/// E_{t,i} with entries (dy_t - (mu_k - mu_m))^2 / (2 sigma_diff^2) for the
/// aggregate jumps dy_t = y_{t+1} - y_t.
inline EdgeCosts edge_costs(const FhmmModel& model, const ObservationTrace& trace) {
  const int horizon = trace.horizon();
  if (horizon < 2) throw InputError("edge costs need a trace of length >= 2");
  const double inv = 1.0 / (2.0 * model.sigma_diff * model.sigma_diff);
  EdgeCosts costs;
  costs.e.resize(horizon - 1);
  for (int t = 0; t + 1 < horizon; ++t) {
    const double dy = trace.aggregate(t + 1) - trace.aggregate(t);
    costs.e[t].reserve(model.num_appliances());
    for (int i = 0; i < model.num_appliances(); ++i) {
      const auto& mu = model.appliances[i].power_levels;
      const int k = model.num_states(i);
      MatrixXd e(k, k);
      for (int from = 0; from < k; ++from)
        for (int to = 0; to < k; ++to) {
          const double diff = dy - (mu(to) - mu(from));
          e(from, to) = diff * diff * inv;
        }
      costs.e[t].push_back(std::move(e));
    }
  }
  return costs;
}

struct ObjectiveOptions {
  bool use_edges = false;
  // Literal sign of the paper's display: the edge cost is subtracted rather
  // than added. The default treats E as a negative log-likelihood penalty.
  bool paper_literal_sign = false;
  // Cost of a forbidden (zero-probability) transition. The exact objective
  // reports +inf; SDP problem data clamps to a large finite penalty instead.
  double log_zero_penalty = std::numeric_limits<double>::infinity();
};

inline constexpr double kLogZeroSolverPenalty = 1e12;

/// Transition cost C_{t,i}(m,k) = -log P_i(m,k) plus the signed edge term.
/// `edges` may be null when opts.use_edges is false.
inline double transition_entry(const FhmmModel& model, const EdgeCosts* edges, int t,
                               int i, int from, int to, const ObjectiveOptions& opts) {
  const double p = model.appliances[i].transition(from, to);
  double c = p > 0.0 ? -std::log(p) : opts.log_zero_penalty;
  if (opts.use_edges) {
    const double e = edges->at(t, i)(from, to);
    c += opts.paper_literal_sign ? -e : e;
  }
  return c;
}

inline MatrixXd transition_cost_matrix(const FhmmModel& model, const EdgeCosts* edges,
                                       int t, int i, const ObjectiveOptions& opts) {
  const int k = model.num_states(i);
  MatrixXd c(k, k);
  for (int from = 0; from < k; ++from)
    for (int to = 0; to < k; ++to)
      c(from, to) = transition_entry(model, edges, t, i, from, to, opts);
  return c;
}

/// All per-appliance transition cost tables, indexed [t][i] for t in [T-1].
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

namespace detail {
// Accumulation is interleaved (quadratic at t, then the edge terms leaving t)
// so the joint-chain Viterbi can reproduce path costs term for term.
inline double objective_impl(const FhmmModel& model, const ObservationTrace& trace,
                             const EdgeCosts* edges, const StateSequence& states,
                             const ObjectiveOptions& opts) {
  const int horizon = trace.horizon();
  const int m = model.num_appliances();
  const double inv_two_sigma2 = 1.0 / (2.0 * model.sigma * model.sigma);
  double acc = 0.0;
  for (int t = 0; t < horizon; ++t) {
    double level_sum = 0.0;
    for (int i = 0; i < m; ++i)
      level_sum += model.appliances[i].power_levels(states.assignments(t, i));
    const double r = trace.aggregate(t) - level_sum;
    acc += r * r * inv_two_sigma2;
    if (t + 1 < horizon) {
      for (int i = 0; i < m; ++i)
        acc += transition_entry(model, edges, t, i, states.assignments(t, i),
                                states.assignments(t + 1, i), opts);
    }
  }
  return acc;
}
}  // namespace detail

/// Log-posterior objective of the MAP problem (lower is better). Forbidden
/// transitions contribute opts.log_zero_penalty (+inf by default).
inline double objective(const FhmmModel& model, const ObservationTrace& trace,
                        const StateSequence& states,
                        const ObjectiveOptions& opts = {}) {
  if (states.horizon() != trace.horizon() ||
      states.num_appliances() != model.num_appliances())
    throw InputError("objective: dimension mismatch between model, trace and states");
  std::optional<EdgeCosts> edges;
  if (opts.use_edges) edges = edge_costs(model, trace);
  return detail::objective_impl(model, trace, edges ? &*edges : nullptr, states, opts);
}

/// Overload with precomputed edge costs (hot path for local search).
inline double objective(const FhmmModel& model, const ObservationTrace& trace,
                        const EdgeCosts* edges, const StateSequence& states,
                        const ObjectiveOptions& opts) {
  return detail::objective_impl(model, trace, edges, states, opts);
}

}  // namespace fhmm
