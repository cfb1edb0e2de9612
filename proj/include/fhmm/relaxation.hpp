#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <ostream>
#include <vector>

#include "fhmm/model.hpp"

#include <nlohmann/json.hpp>

namespace fhmm {

using SparseMat = Eigen::SparseMatrix<double>;

inline constexpr double kSqrt2 = 1.4142135623730951;

/// Symmetric vectorization: column-major upper triangle with off-diagonal
/// entries scaled by sqrt(2), so <A,B> = svec(A).svec(B) for symmetric A, B.
struct SvecLayout {
  int order = 0;  // matrix side length

  int dim() const { return order * (order + 1) / 2; }

  static int index(int i, int j) {  // requires i <= j
    return j * (j + 1) / 2 + i;
  }
};

inline VectorXd svec(const MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  VectorXd v(n * (n + 1) / 2);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) v(idx++) = i == j ? a(i, j) : kSqrt2 * a(i, j);
  return v;
}

inline MatrixXd smat(const VectorXd& v, int n) {
  MatrixXd a(n, n);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      const double x = i == j ? v(idx) : v(idx) / kSqrt2;
      a(i, j) = x;
      a(j, i) = x;
      ++idx;
    }
  return a;
}

/// Lifted per-time block [[1, x^T], [x, X]] with accessors for the vector and
/// matrix parts.
struct LiftedBlock {
  MatrixXd xhat;  // (n+1) x (n+1) symmetric

  int order() const { return static_cast<int>(xhat.rows()); }
  VectorXd x() const { return xhat.block(1, 0, order() - 1, 1); }
  MatrixXd inner() const { return xhat.block(1, 1, order() - 1, order() - 1); }
};

/// Concatenated vec(Z_{t,i}) blocks for one coupling group.
struct TransitionVector {
  VectorXd z;

  Eigen::Map<const MatrixXd> block(const std::vector<int>& radices,
                                   const std::vector<int>& offsets, int i) const {
    const int k = radices[i];
    return Eigen::Map<const MatrixXd>(z.data() + offsets[i], k, k);
  }
};

/// The chain-structured SDP: per-t cost blocks plus time-invariant sparse
/// operators over svec(Xhat) and the stacked z vector.
///
/// Row inventory:
///   A (m = 1 + n + M):  Xhat[0][0] = 1;  diag(X) = x;  per-appliance 1'x = 1.
///   B,C,E (m' = 2n):    per appliance, Z 1 = x_t and Z' 1 = x_{t+1}; g = 0.
struct SdpBlockProblem {
  int horizon = 0;
  int num_appliances = 0;
  std::vector<int> radices;    // K_i
  std::vector<int> x_offsets;  // appliance block starts within x
  std::vector<int> z_offsets;  // appliance block starts within z
  int n = 0;                   // sum K_i
  int zdim = 0;                // sum K_i^2
  SvecLayout layout;           // order n+1

  std::vector<MatrixXd> cost;       // D_t, dense (n+1)x(n+1)
  std::vector<VectorXd> cost_svec;  // cached svec(D_t)
  std::vector<VectorXd> d;          // per t in [T-1], length zdim
  double objective_offset = 0.0;    // sum_t y_t^2 / (2 sigma^2)

  SparseMat A;  // m x svec-dim
  VectorXd b;
  SparseMat B, E;  // m' x svec-dim
  SparseMat C;     // m' x zdim
  VectorXd g;      // zeros(m')
  int m = 0, mprime = 0;

  int order() const { return n + 1; }
  int svec_dim() const { return layout.dim(); }
  // index of appliance i state s within the stacked x vector
  int x_index(int i, int s) const { return x_offsets[i] + s; }
};

/// Relaxed primal recovered from the solver plus bookkeeping for reporting.
struct ResidualRecord {
  int sweep = 0;
  double max_a_residual = 0.0;
  double max_coupling_residual = 0.0;
  double min_eigenvalue = 0.0;
  double objective = 0.0;
};

struct RelaxedSolution {
  std::vector<MatrixXd> xhat;  // per t, (n+1)x(n+1)
  std::vector<VectorXd> z;     // per t in [T-1]
  double objective = 0.0;
  bool converged = false;
  int sweeps = 0;
  double max_a_residual = 0.0;
  double max_coupling_residual = 0.0;
  double min_eigenvalue = 0.0;
  double min_entry = 0.0;
  // Distance between the recovered primal and its surrogate; vanishes at the
  // solver's fixed point, where feasibility alone is reached much earlier.
  double stationarity = 0.0;
  // Scalar convergence measure: the coupling residual and cone violations are
  // allowed 10x the A-block tolerance, so converged <=> max_residual <= tol.
  double max_residual = 0.0;
  std::vector<ResidualRecord> history;

  VectorXd x(int t) const {
    const int n = static_cast<int>(xhat[t].rows()) - 1;
    return xhat[t].block(1, 0, n, 1);
  }
  MatrixXd inner(int t) const {
    const int n = static_cast<int>(xhat[t].rows()) - 1;
    return xhat[t].block(1, 1, n, n);
  }
};

namespace detail {

// Adds the coefficient of a linear functional reading entry (p,q) of a
// symmetric matrix, in svec coordinates.
inline void add_sym_entry(std::vector<Eigen::Triplet<double>>& trips, int row, int p,
                          int q, double coeff) {
  if (p > q) std::swap(p, q);
  trips.emplace_back(row, SvecLayout::index(p, q), p == q ? coeff : coeff / kSqrt2);
}

}  // namespace detail

/// Assembles the SDP data for a model/trace pair. The d_t vectors follow the
/// objective sign convention in `opts` with -log(0) clamped to a large finite
/// penalty so the problem data stays finite.
inline SdpBlockProblem build(const FhmmModel& model, const ObservationTrace& trace,
                             ObjectiveOptions opts = {}) {
  const int horizon = trace.horizon();
  if (horizon < 2) throw InputError("relaxation needs a trace of length >= 2");

  SdpBlockProblem p;
  p.horizon = horizon;
  p.num_appliances = model.num_appliances();
  int xoff = 0, zoff = 0;
  for (int i = 0; i < model.num_appliances(); ++i) {
    const int k = model.num_states(i);
    p.radices.push_back(k);
    p.x_offsets.push_back(xoff);
    p.z_offsets.push_back(zoff);
    xoff += k;
    zoff += k * k;
  }
  p.n = xoff;
  p.zdim = zoff;
  p.layout.order = p.n + 1;

  // stacked level vector
  VectorXd mu(p.n);
  for (int i = 0; i < model.num_appliances(); ++i)
    mu.segment(p.x_offsets[i], p.radices[i]) = model.appliances[i].power_levels;

  const double alpha = 1.0 / (2.0 * model.sigma * model.sigma);
  p.cost.reserve(horizon);
  p.cost_svec.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    MatrixXd dt = MatrixXd::Zero(p.order(), p.order());
    const double y = trace.aggregate(t);
    dt.block(1, 1, p.n, p.n) = alpha * (mu * mu.transpose());
    dt.block(1, 0, p.n, 1) = -alpha * y * mu;
    dt.block(0, 1, 1, p.n) = (-alpha * y * mu).transpose();
    p.cost_svec.push_back(svec(dt));
    p.cost.push_back(std::move(dt));
    p.objective_offset += y * y * alpha;
  }

  std::optional<EdgeCosts> edges;
  if (opts.use_edges) edges = edge_costs(model, trace);
  ObjectiveOptions clamped = opts;
  clamped.log_zero_penalty = kLogZeroSolverPenalty;
  p.d.reserve(horizon - 1);
  for (int t = 0; t + 1 < horizon; ++t) {
    VectorXd dt(p.zdim);
    for (int i = 0; i < model.num_appliances(); ++i) {
      const int k = p.radices[i];
      const MatrixXd c =
          transition_cost_matrix(model, edges ? &*edges : nullptr, t, i, clamped);
      for (int col = 0; col < k; ++col)
        for (int row = 0; row < k; ++row)
          dt(p.z_offsets[i] + col * k + row) = c(row, col);
    }
    p.d.push_back(std::move(dt));
  }

  p.m = 1 + p.n + p.num_appliances;
  p.mprime = 2 * p.n;
  p.b = VectorXd::Zero(p.m);
  p.g = VectorXd::Zero(p.mprime);

  std::vector<Eigen::Triplet<double>> ta;
  detail::add_sym_entry(ta, 0, 0, 0, 1.0);
  p.b(0) = 1.0;
  for (int j = 0; j < p.n; ++j) {
    detail::add_sym_entry(ta, 1 + j, j + 1, j + 1, 1.0);
    detail::add_sym_entry(ta, 1 + j, 0, j + 1, -1.0);
  }
  for (int i = 0; i < p.num_appliances; ++i) {
    const int row = 1 + p.n + i;
    for (int s = 0; s < p.radices[i]; ++s)
      detail::add_sym_entry(ta, row, 0, p.x_index(i, s) + 1, 1.0);
    p.b(row) = 1.0;
  }
  p.A.resize(p.m, p.svec_dim());
  p.A.setFromTriplets(ta.begin(), ta.end());

  std::vector<Eigen::Triplet<double>> tb, tc, te;
  for (int i = 0; i < p.num_appliances; ++i) {
    const int k = p.radices[i];
    for (int s = 0; s < k; ++s) {
      const int row_out = p.x_offsets[i] + s;        // Z 1 = x_t
      const int row_in = p.n + p.x_offsets[i] + s;   // Z' 1 = x_{t+1}
      detail::add_sym_entry(tb, row_out, 0, p.x_index(i, s) + 1, -1.0);
      detail::add_sym_entry(te, row_in, 0, p.x_index(i, s) + 1, -1.0);
      for (int c = 0; c < k; ++c) {
        tc.emplace_back(row_out, p.z_offsets[i] + c * k + s, 1.0);  // row s of Z
        tc.emplace_back(row_in, p.z_offsets[i] + s * k + c, 1.0);   // column s of Z
      }
    }
  }
  p.B.resize(p.mprime, p.svec_dim());
  p.B.setFromTriplets(tb.begin(), tb.end());
  p.E.resize(p.mprime, p.svec_dim());
  p.E.setFromTriplets(te.begin(), te.end());
  p.C.resize(p.mprime, p.zdim);
  p.C.setFromTriplets(tc.begin(), tc.end());
  return p;
}

/// Rank-1 lift of an integral assignment: Xhat_t = [1;x][1;x]^T and
/// Z_{t,i} = x_{t,i} x_{t+1,i}^T. Feasible with zero residual by construction.
inline std::pair<std::vector<LiftedBlock>, std::vector<TransitionVector>> lift(
    const SdpBlockProblem& p, const StateSequence& states) {
  const int horizon = states.horizon();
  std::vector<LiftedBlock> blocks;
  blocks.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    VectorXd v = VectorXd::Zero(p.order());
    v(0) = 1.0;
    for (int i = 0; i < p.num_appliances; ++i)
      v(1 + p.x_index(i, states.assignments(t, i))) = 1.0;
    blocks.push_back({v * v.transpose()});
  }
  std::vector<TransitionVector> zs;
  zs.reserve(horizon - 1);
  for (int t = 0; t + 1 < horizon; ++t) {
    VectorXd z = VectorXd::Zero(p.zdim);
    for (int i = 0; i < p.num_appliances; ++i) {
      const int k = p.radices[i];
      const int from = states.assignments(t, i);
      const int to = states.assignments(t + 1, i);
      z(p.z_offsets[i] + to * k + from) = 1.0;
    }
    zs.push_back({std::move(z)});
  }
  return {std::move(blocks), std::move(zs)};
}

/// Objective of the lifted problem: sum_t trace(D_t' Xhat_t) + d_t' z_t plus
/// the recorded constant offset. Evaluated on dense blocks.
inline double relaxed_objective(const SdpBlockProblem& p, const RelaxedSolution& sol) {
  double acc = 0.0;
  for (int t = 0; t < p.horizon; ++t) {
    acc += (p.cost[t].array() * sol.xhat[t].array()).sum();
    if (t + 1 < p.horizon) acc += p.d[t].dot(sol.z[t]);
  }
  return acc + p.objective_offset;
}

/// A-block residual vector evaluated structurally on the dense block (exact
/// zeros for integral lifts).
inline VectorXd a_residual(const SdpBlockProblem& p, const MatrixXd& xhat) {
  VectorXd r(p.m);
  r(0) = xhat(0, 0) - 1.0;
  for (int j = 0; j < p.n; ++j) r(1 + j) = xhat(j + 1, j + 1) - xhat(0, j + 1);
  for (int i = 0; i < p.num_appliances; ++i) {
    double s = 0.0;
    for (int st = 0; st < p.radices[i]; ++st) s += xhat(0, p.x_index(i, st) + 1);
    r(1 + p.n + i) = s - 1.0;
  }
  return r;
}

/// Coupling residual for one (t, t+1) pair.
inline VectorXd coupling_residual(const SdpBlockProblem& p, const MatrixXd& xhat_t,
                                  const VectorXd& z_t, const MatrixXd& xhat_next) {
  VectorXd r(p.mprime);
  for (int i = 0; i < p.num_appliances; ++i) {
    const int k = p.radices[i];
    for (int s = 0; s < k; ++s) {
      double row_sum = 0.0, col_sum = 0.0;
      for (int c = 0; c < k; ++c) {
        row_sum += z_t(p.z_offsets[i] + c * k + s);
        col_sum += z_t(p.z_offsets[i] + s * k + c);
      }
      r(p.x_offsets[i] + s) = row_sum - xhat_t(0, p.x_index(i, s) + 1);
      r(p.n + p.x_offsets[i] + s) = col_sum - xhat_next(0, p.x_index(i, s) + 1);
    }
  }
  return r;
}

namespace detail {
inline nlohmann::json sparse_triplets(const SparseMat& mat) {
  nlohmann::json rows = nlohmann::json::array();
  for (int k = 0; k < mat.outerSize(); ++k)
    for (SparseMat::InnerIterator it(mat, k); it; ++it)
      rows.push_back({it.row(), it.col(), it.value()});
  return rows;
}
}  // namespace detail

// Debug dump: one JSON object per time step.
inline void dump_problem(const SdpBlockProblem& p, std::ostream& os) {
  for (int t = 0; t < p.horizon; ++t) {
    nlohmann::json obj;
    obj["t"] = t;
    std::vector<std::vector<double>> dense(p.order());
    for (int r = 0; r < p.order(); ++r)
      dense[r].assign(p.cost[t].row(r).begin(), p.cost[t].row(r).end());
    obj["D"] = dense;
    if (t + 1 < p.horizon)
      obj["d"] = std::vector<double>(p.d[t].begin(), p.d[t].end());
    if (t == 0) {
      obj["A"] = detail::sparse_triplets(p.A);
      obj["B"] = detail::sparse_triplets(p.B);
      obj["C"] = detail::sparse_triplets(p.C);
      obj["E"] = detail::sparse_triplets(p.E);
      obj["b"] = std::vector<double>(p.b.begin(), p.b.end());
      obj["g"] = std::vector<double>(p.g.begin(), p.g.end());
    }
    os << obj.dump() << '\n';
  }
}

}  // namespace fhmm
