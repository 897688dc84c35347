// Copyright 2026, lbmpcc contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

namespace lbmpcc::qp {

/**
 * @brief Horizon-structured convex QP.
 *
 *   min   sum_{k=0}^{N}   0.5 x_k'Q_k x_k + q_k'x_k
 *       + sum_{k=0}^{N-1} 0.5 u_k'R_k u_k + r_k'u_k + x_k'S_k u_k
 *       + sum over soft rows 0.5 Zl s^2 + zl s
 *   s.t. x_0 given,  x_{k+1} = A_k x_k + B_k u_k + c_k
 *        lbx <= x_k <= ubx (k >= 1),  lbu <= u_k <= ubu
 *        C_k x_k + D_k u_k <= e_k + s_k,  s_k >= 0
 *
 * Bounds use +-infinity for absent sides. Every general inequality row
 * is softened by its own nonnegative slack with quadratic weight
 * slack_quad and linear weight slack_lin (per row; their sum must be
 * positive). x_0 is data, so stage-0 state bounds are ignored and
 * stage-0 cost terms in x_0 are constants.
 */
struct QpProblem {
    int N = 0, nx = 0, nu = 0;
    Eigen::VectorXd x0;
    std::vector<Eigen::MatrixXd> A, B;   // N
    std::vector<Eigen::VectorXd> c;      // N
    std::vector<Eigen::MatrixXd> Q;      // N+1
    std::vector<Eigen::VectorXd> q;      // N+1
    std::vector<Eigen::MatrixXd> R;      // N
    std::vector<Eigen::VectorXd> r;      // N
    std::vector<Eigen::MatrixXd> S;      // N, nx x nu
    std::vector<Eigen::VectorXd> lbx, ubx;  // N+1 (index 0 ignored)
    std::vector<Eigen::VectorXd> lbu, ubu;  // N
    std::vector<Eigen::MatrixXd> C;      // N+1, rows_k x nx
    std::vector<Eigen::MatrixXd> D;      // N+1, rows_k x nu (zero at k = N)
    std::vector<Eigen::VectorXd> e;      // N+1
    std::vector<Eigen::VectorXd> slack_quad, slack_lin;  // N+1, per row

    /// Allocates zero dynamics/cost and empty constraint sets.
    static QpProblem sized(int N, int nx, int nu);

    int rows(int k) const { return static_cast<int>(e[k].size()); }

    /// Throws std::invalid_argument on any dimension mismatch or
    /// obviously invalid data (negative weights, lb > ub).
    void validate() const;
};

enum class QpStatus { solved, max_iter, infeasible_detected };

const char* to_string(QpStatus s);

/// Norms recomputed from a candidate point, never from solver internals.
struct KktResiduals {
    double stationarity = 0.0;
    double primal = 0.0;          // equality + inequality violation
    double dual = 0.0;            // multiplier sign violation
    double complementarity = 0.0;
    double max_norm() const;
};

struct QpSolution {
    QpStatus status = QpStatus::max_iter;
    std::vector<Eigen::VectorXd> x;  // N+1, x[0] echoes the given x0
    std::vector<Eigen::VectorXd> u;  // N
    std::vector<Eigen::VectorXd> s;  // N+1 soft-constraint slacks
    // multipliers
    std::vector<Eigen::VectorXd> lam;                    // N, dynamics
    std::vector<Eigen::VectorXd> z_soft, z_snn;          // N+1
    std::vector<Eigen::VectorXd> z_lbx, z_ubx;           // N+1
    std::vector<Eigen::VectorXd> z_lbu, z_ubu;           // N
    int iterations = 0;
    double objective = 0.0;
    KktResiduals residuals;
};

/**
 * @brief Primal-dual interior-point solver with Riccati factorization.
 *
 * One Mehrotra predictor-corrector step per iteration; the banded
 * backward/forward recursions keep the per-iteration cost linear in N.
 * Deterministic: identical inputs give bit-identical outputs.
 */
class QpSolver {
public:
    struct Settings {
        int max_iter = 40;
        double tol = 1e-6;
        bool trace = false;  // per-iteration diagnostics on stderr
    };

    QpSolver() = default;
    explicit QpSolver(Settings s) : settings_(s) {}

    /// warm may carry a previous solution for the same structure; pass
    /// nullptr for a cold start.
    QpSolution solve(const QpProblem& problem, const QpSolution* warm = nullptr);

    const Settings& settings() const { return settings_; }

private:
    Settings settings_;
};

/// Objective value of a candidate (x, u, s), including the constant
/// stage-0 state terms.
double objective_value(const QpProblem& problem, const QpSolution& candidate);

/// First-principles KKT residual norms of any candidate point.
KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& candidate);

/// Plain-text round trip for solver-bug repro; format documented in the
/// implementation next to the writer.
void dump_problem(const QpProblem& problem, std::ostream& out);
QpProblem load_problem(std::istream& in);

}  // namespace lbmpcc::qp
