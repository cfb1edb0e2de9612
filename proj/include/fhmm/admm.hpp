#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>
#include <vector>

#include "fhmm/relaxation.hpp"

namespace fhmm {

struct SolverConfig {
  double mu_step = 0.001;  // Moreau-Yosida regularization constant
  int max_sweeps = 2500;
  double tolerance = 1e-4;  // on the max A-block residual
  int check_period = 25;    // sweeps between residual evaluations

  void check() const {
    if (!(mu_step > 0.0) || max_sweeps < 1 || !(tolerance > 0.0) || check_period < 1)
      throw InputError("solver config values must be positive");
  }
};

/// Nearest positive semidefinite matrix in Frobenius norm: eigendecompose the
/// symmetrized input and keep the nonnegative eigenvalues.
inline MatrixXd psd_project(const MatrixXd& a) {
  const MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success)
    throw NumericError("psd_project: eigendecomposition failed (matrix norm " +
                       std::to_string(sym.norm()) + ", order " +
                       std::to_string(sym.rows()) + ")");
  const VectorXd& vals = eig.eigenvalues();
  const double cutoff = 1e-12 * std::max(1.0, vals.cwiseAbs().maxCoeff());
  MatrixXd out = MatrixXd::Zero(a.rows(), a.cols());
  for (int i = 0; i < vals.size(); ++i)
    if (vals(i) > cutoff)
      out += vals(i) * eig.eigenvectors().col(i) * eig.eigenvectors().col(i).transpose();
  return out;
}

namespace detail {
// Pseudo-inverse of a symmetric PSD Gram matrix via eigendecomposition.
inline MatrixXd sym_pinv(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (a + a.transpose()));
  if (eig.info() != Eigen::Success)
    throw NumericError("pseudo-inverse: eigendecomposition failed");
  const VectorXd& vals = eig.eigenvalues();
  const double cutoff = 1e-12 * std::max(1.0, vals.cwiseAbs().maxCoeff());
  VectorXd inv = VectorXd::Zero(vals.size());
  for (int i = 0; i < vals.size(); ++i)
    if (std::abs(vals(i)) > cutoff) inv(i) = 1.0 / vals(i);
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}
}  // namespace detail

/// Gram pseudo-inverses reused by every sweep.
struct OperatorCache {
  MatrixXd pinv_aat;       // (A A')^+, m x m
  MatrixXd pinv_coupling;  // (B B' + C C' + E E')^+, m' x m'
};

inline OperatorCache precompute_pinv(const SdpBlockProblem& p) {
  OperatorCache cache;
  cache.pinv_aat = detail::sym_pinv(MatrixXd(p.A * p.A.transpose()));
  cache.pinv_coupling = detail::sym_pinv(
      MatrixXd(p.B * p.B.transpose()) + MatrixXd(p.C * p.C.transpose()) +
      MatrixXd(p.E * p.E.transpose()));
  return cache;
}

/// Primal surrogates and duals swept by the solver. Matrix-valued iterates are
/// stored in svec coordinates.
struct AdmmState {
  std::vector<VectorXd> S;       // per t, svec dim
  std::vector<VectorXd> W, P;    // per t, svec dim
  std::vector<VectorXd> lambda;  // per t, m
  std::vector<VectorXd> nu;      // per t in [T-1], m'
  std::vector<VectorXd> r, h;    // per t in [T-1], zdim
  int sweeps = 0;

  static AdmmState zeros(const SdpBlockProblem& p) {
    AdmmState st;
    st.S.assign(p.horizon, VectorXd::Zero(p.svec_dim()));
    st.W.assign(p.horizon, VectorXd::Zero(p.svec_dim()));
    st.P.assign(p.horizon, VectorXd::Zero(p.svec_dim()));
    st.lambda.assign(p.horizon, VectorXd::Zero(p.m));
    st.nu.assign(p.horizon - 1, VectorXd::Zero(p.mprime));
    st.r.assign(p.horizon - 1, VectorXd::Zero(p.zdim));
    st.h.assign(p.horizon - 1, VectorXd::Zero(p.zdim));
    return st;
  }
};

namespace detail {
inline void require_finite(const VectorXd& v, int t, const char* name) {
  if (!v.allFinite())
    throw NumericError(std::string("admm sweep produced non-finite ") + name +
                       " at t=" + std::to_string(t));
}
}  // namespace detail

/// One Gauss-Seidel pass over t applying the closed-form updates. Boundary
/// conventions: no nu_{t-1} term at t=0, no coupling group or z block at the
/// last step. Each step sees this sweep's nu_{t-1} and last sweep's nu_{t+1}.
inline void sweep(const SdpBlockProblem& p, const OperatorCache& cache,
                  AdmmState& st, double mu) {
  const int horizon = p.horizon;
  for (int t = 0; t < horizon; ++t) {
    const bool has_out = t + 1 < horizon;  // coupling group leaving t
    const bool has_in = t > 0;             // coupling group entering t

    // dual pullbacks shared by several updates
    VectorXd pull = VectorXd::Zero(p.svec_dim());
    if (has_out) pull += p.B.transpose() * st.nu[t];
    if (has_in) pull += p.E.transpose() * st.nu[t - 1];

    const VectorXd residual_dir =
        p.cost_svec[t] - p.A.transpose() * st.lambda[t] - pull - st.S[t] / mu;

    st.P[t] = svec(psd_project(smat(residual_dir - st.W[t], p.order())));
    st.W[t] = (residual_dir - st.P[t]).cwiseMax(0.0);

    VectorXd inner = pull + st.W[t] + st.P[t] - p.cost_svec[t];
    st.lambda[t] = (1.0 / mu) * (cache.pinv_aat * (p.b - p.A * (st.S[t] + mu * inner)));
    st.S[t] += mu * (p.A.transpose() * st.lambda[t] + inner);
    detail::require_finite(st.S[t], t, "S");
    detail::require_finite(st.lambda[t], t, "lambda");

    if (has_out) {
      st.r[t] += mu * (p.C.transpose() * st.nu[t] + st.h[t] - p.d[t]);
      st.h[t] = (p.d[t] - p.C.transpose() * st.nu[t] - st.r[t] / mu).cwiseMax(0.0);

      // X*_t as a function of nu_t with the mu*B'nu_t part extracted
      VectorXd cb = st.S[t] + mu * (p.A.transpose() * st.lambda[t] + st.W[t] +
                                    st.P[t] - p.cost_svec[t]);
      if (has_in) cb += mu * (p.E.transpose() * st.nu[t - 1]);
      const VectorXd cc = st.r[t] + mu * (st.h[t] - p.d[t]);
      // X*_{t+1} with the mu*E'nu_t part extracted; neighbor values are from
      // the previous sweep
      VectorXd ce = st.S[t + 1] + mu * (p.A.transpose() * st.lambda[t + 1] +
                                        st.W[t + 1] + st.P[t + 1] - p.cost_svec[t + 1]);
      if (t + 2 < horizon) ce += mu * (p.B.transpose() * st.nu[t + 1]);
      st.nu[t] = (1.0 / mu) * (cache.pinv_coupling *
                               (p.g - p.B * cb - p.C * cc - p.E * ce));
      detail::require_finite(st.nu[t], t, "nu");
      detail::require_finite(st.r[t], t, "r");
    }
  }
  ++st.sweeps;
}

/// Recovers the primal iterates X*, z* from the surrogates and duals.
inline RelaxedSolution recover(const SdpBlockProblem& p, const AdmmState& st,
                               double mu) {
  RelaxedSolution sol;
  sol.sweeps = st.sweeps;
  sol.stationarity = 0.0;
  sol.xhat.reserve(p.horizon);
  for (int t = 0; t < p.horizon; ++t) {
    VectorXd v = st.S[t] + mu * (p.A.transpose() * st.lambda[t] + st.W[t] + st.P[t] -
                                 p.cost_svec[t]);
    if (t + 1 < p.horizon) v += mu * (p.B.transpose() * st.nu[t]);
    if (t > 0) v += mu * (p.E.transpose() * st.nu[t - 1]);
    sol.stationarity =
        std::max(sol.stationarity, (v - st.S[t]).cwiseAbs().maxCoeff());
    sol.xhat.push_back(smat(v, p.order()));
  }
  sol.z.reserve(p.horizon - 1);
  for (int t = 0; t + 1 < p.horizon; ++t) {
    VectorXd z = st.r[t] + mu * (p.C.transpose() * st.nu[t] + st.h[t] - p.d[t]);
    sol.stationarity =
        std::max(sol.stationarity, (z - st.r[t]).cwiseAbs().maxCoeff());
    sol.z.push_back(std::move(z));
  }
  sol.objective = relaxed_objective(p, sol);

  sol.max_a_residual = 0.0;
  sol.max_coupling_residual = 0.0;
  sol.min_eigenvalue = std::numeric_limits<double>::infinity();
  sol.min_entry = std::numeric_limits<double>::infinity();
  for (int t = 0; t < p.horizon; ++t) {
    sol.max_a_residual = std::max(
        sol.max_a_residual, a_residual(p, sol.xhat[t]).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sol.xhat[t]);
    sol.min_eigenvalue = std::min(sol.min_eigenvalue, eig.eigenvalues().minCoeff());
    sol.min_entry = std::min(sol.min_entry, sol.xhat[t].minCoeff());
    if (t + 1 < p.horizon) {
      sol.max_coupling_residual = std::max(
          sol.max_coupling_residual,
          coupling_residual(p, sol.xhat[t], sol.z[t], sol.xhat[t + 1])
              .cwiseAbs()
              .maxCoeff());
      sol.min_entry = std::min(sol.min_entry, sol.z[t].minCoeff());
    }
  }
  sol.max_residual = std::max(
      {sol.max_a_residual, 0.1 * sol.max_coupling_residual,
       -0.1 * sol.min_eigenvalue, -0.1 * sol.min_entry, sol.stationarity});
  return sol;
}

inline bool solution_converged(const RelaxedSolution& sol, double tol) {
  return sol.max_residual <= tol;
}

/// Stepping interface: admm_rr drives sweeps directly to take rounding
/// snapshots at a fixed period.
class AdmmSolver {
 public:
  AdmmSolver(const SdpBlockProblem& problem, SolverConfig config)
      : problem_(problem), config_(config), cache_(precompute_pinv(problem)),
        state_(AdmmState::zeros(problem)) {
    config_.check();
  }

  void step() { sweep(problem_, cache_, state_, config_.mu_step); }
  RelaxedSolution current() const { return recover(problem_, state_, config_.mu_step); }
  int sweeps() const { return state_.sweeps; }
  const AdmmState& state() const { return state_; }
  const SolverConfig& config() const { return config_; }

  /// Runs until the iterate is both feasible and stationary, or the sweep
  /// budget is exhausted; returns the best checkpoint seen (by the combined
  /// residual), so a larger budget never returns a worse solution. The stop
  /// additionally requires the objective movement between checkpoints to be
  /// inside tolerance: the feasibility residuals reach tolerance long before
  /// the objective settles, and the cost blocks can amplify X-space movement
  /// by their magnitude.
  RelaxedSolution solve() {
    RelaxedSolution best;
    bool have_best = false;
    double prev_obj = std::numeric_limits<double>::quiet_NaN();
    while (state_.sweeps < config_.max_sweeps) {
      step();
      if (state_.sweeps % config_.check_period == 0 ||
          state_.sweeps == config_.max_sweeps) {
        RelaxedSolution sol = current();
        const double obj_move = std::abs(sol.objective - prev_obj);
        const bool settled =
            !std::isnan(prev_obj) &&
            obj_move <= 0.1 * config_.tolerance * (1.0 + std::abs(sol.objective));
        prev_obj = sol.objective;
        const bool stop = settled && solution_converged(sol, config_.tolerance);
        history_.push_back({sol.sweeps, sol.max_a_residual, sol.max_coupling_residual,
                            sol.min_eigenvalue, sol.objective});
        if (!have_best || sol.max_residual < best.max_residual) {
          best = std::move(sol);
          have_best = true;
        }
        if (stop) {
          best.converged = true;
          break;
        }
      }
    }
    if (!have_best) best = current();
    best.history = history_;
    return best;
  }

  const std::vector<ResidualRecord>& history() const { return history_; }

 private:
  const SdpBlockProblem& problem_;
  SolverConfig config_;
  OperatorCache cache_;
  AdmmState state_;
  std::vector<ResidualRecord> history_;
};

inline RelaxedSolution solve(const SdpBlockProblem& problem,
                             const SolverConfig& config = {}) {
  AdmmSolver solver(problem, config);
  return solver.solve();
}

inline void write_residual_log(const std::vector<ResidualRecord>& history,
                               std::ostream& os) {
  os << "sweep,max_A_residual,max_coupling_residual,min_eig,objective\n";
  for (const auto& rec : history)
    os << rec.sweep << ',' << rec.max_a_residual << ',' << rec.max_coupling_residual
       << ',' << rec.min_eigenvalue << ',' << rec.objective << '\n';
  os.flush();
}

}  // namespace fhmm
