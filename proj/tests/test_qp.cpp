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

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "lbmpcc/qp.hpp"
#include "lbmpcc/rng.hpp"
#include "oracles.hpp"

using namespace lbmpcc;
using namespace lbmpcc::qp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Random structured QP with a PSD stage Hessian, a PD input block,
// random boxes, and a handful of softened rows.
QpProblem random_problem(Rng& rng, int N, int nx, int nu, int total_soft_rows,
                         double slack_lin_weight) {
    QpProblem p = QpProblem::sized(N, nx, nu);
    for (int i = 0; i < nx; ++i) p.x0[i] = rng.uniform(-1, 1);
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < nx; ++i) {
            p.c[k][i] = rng.uniform(-0.3, 0.3);
            for (int j = 0; j < nx; ++j) p.A[k](i, j) = rng.uniform(-0.8, 0.8);
            for (int j = 0; j < nu; ++j) p.B[k](i, j) = rng.uniform(-0.8, 0.8);
        }
        MatrixXd M(nx + nu, nx + nu);
        for (int i = 0; i < M.rows(); ++i)
            for (int j = 0; j < M.cols(); ++j) M(i, j) = rng.uniform(-0.7, 0.7);
        MatrixXd H = M * M.transpose();
        H.bottomRightCorner(nu, nu) += 0.2 * MatrixXd::Identity(nu, nu);
        p.Q[k] = H.topLeftCorner(nx, nx);
        p.S[k] = H.topRightCorner(nx, nu);
        p.R[k] = H.bottomRightCorner(nu, nu);
        for (int i = 0; i < nx; ++i) p.q[k][i] = rng.uniform(-1, 1);
        for (int i = 0; i < nu; ++i) p.r[k][i] = rng.uniform(-1, 1);
        for (int i = 0; i < nu; ++i) {
            if (rng.uniform() < 0.7) {
                p.lbu[k][i] = rng.uniform(-1.5, -0.2);
                p.ubu[k][i] = rng.uniform(0.2, 1.5);
            }
        }
    }
    {
        MatrixXd M(nx, nx);
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < nx; ++j) M(i, j) = rng.uniform(-0.7, 0.7);
        p.Q[N] = M * M.transpose();
        for (int i = 0; i < nx; ++i) p.q[N][i] = rng.uniform(-1, 1);
    }
    // loose state boxes around a zero-input rollout keep the hard problem feasible
    std::vector<VectorXd> xs(N + 1);
    xs[0] = p.x0;
    for (int k = 0; k < N; ++k) xs[k + 1] = p.A[k] * xs[k] + p.c[k];
    for (int k = 1; k <= N; ++k) {
        for (int i = 0; i < nx; ++i) {
            if (rng.uniform() < 0.3) {
                p.lbx[k][i] = xs[k][i] - rng.uniform(0.5, 2.0);
                p.ubx[k][i] = xs[k][i] + rng.uniform(0.5, 2.0);
            }
        }
    }
    for (int r = 0; r < total_soft_rows; ++r) {
        const int k = static_cast<int>(rng.uniform(0, N + 1));
        const int m = p.rows(k);
        p.C[k].conservativeResize(m + 1, nx);
        p.D[k].conservativeResize(m + 1, nu);
        p.e[k].conservativeResize(m + 1);
        p.slack_quad[k].conservativeResize(m + 1);
        p.slack_lin[k].conservativeResize(m + 1);
        for (int j = 0; j < nx; ++j) p.C[k](m, j) = rng.uniform(-1, 1);
        for (int j = 0; j < nu; ++j) p.D[k](m, j) = k < N ? rng.uniform(-1, 1) : 0.0;
        p.e[k][m] = rng.uniform(-0.5, 1.0);
        p.slack_quad[k][m] = rng.uniform(5.0, 20.0);
        p.slack_lin[k][m] = slack_lin_weight;
    }
    return p;
}

}  // namespace

TEST_CASE("qp: single-stage scalar box example has the analytic KKT point") {
    // min (u - 1)^2 s.t. u <= 0.5: optimum at the bound with dual 1
    QpProblem p = QpProblem::sized(1, 1, 1);
    p.R[0](0, 0) = 2.0;
    p.r[0][0] = -2.0;
    p.ubu[0][0] = 0.5;
    QpSolver solver;
    const QpSolution sol = solver.solve(p);
    REQUIRE(sol.status == QpStatus::solved);
    CHECK(sol.u[0][0] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(sol.z_ubu[0][0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sol.residuals.max_norm() <= 1e-6);
    CHECK(sol.objective == doctest::Approx(0.25 - 1.0).epsilon(1e-6));
}

TEST_CASE("qp: equality-constrained problems match the dense KKT oracle") {
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const int N = 1 + static_cast<int>(rng.uniform(0, 3));
        const int nx = 1 + static_cast<int>(rng.uniform(0, 3));
        const int nu = 1 + static_cast<int>(rng.uniform(0, 3));
        QpProblem p = random_problem(rng, N, nx, nu, 0, 100.0);
        // drop every inequality
        for (int k = 0; k <= N; ++k) {
            p.lbx[k].setConstant(-std::numeric_limits<double>::infinity());
            p.ubx[k].setConstant(std::numeric_limits<double>::infinity());
            if (k < N) {
                p.lbu[k].setConstant(-std::numeric_limits<double>::infinity());
                p.ubu[k].setConstant(std::numeric_limits<double>::infinity());
            }
        }
        QpSolver solver;
        const QpSolution sol = solver.solve(p);
        REQUIRE(sol.status == QpStatus::solved);

        const auto dense = oracles::densify(p);
        const auto w = oracles::dense_equality_solve(dense);
        REQUIRE(w.has_value());
        for (int k = 0; k < N; ++k)
            CHECK((sol.u[k] - w->segment(dense.u_off[k], nu)).cwiseAbs().maxCoeff() < 1e-8);
        for (int k = 1; k <= N; ++k)
            CHECK((sol.x[k] - w->segment(dense.x_off[k], nx)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("qp: objective matches exhaustive active-set enumeration") {
    Rng rng(202);
    int checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const int N = 1 + static_cast<int>(rng.uniform(0, 3));
        const int nx = 1 + static_cast<int>(rng.uniform(0, 3));
        const int nu = 1 + static_cast<int>(rng.uniform(0, 2));
        const QpProblem p = random_problem(rng, N, nx, nu, 3, 50.0);
        const auto dense = oracles::densify(p);
        if (dense.Ain.rows() > 16) continue;  // keep enumeration tractable

        QpSolver solver;
        const QpSolution sol = solver.solve(p);
        REQUIRE(sol.status == QpStatus::solved);
        CHECK(sol.residuals.max_norm() <= 1e-6);

        const auto best = oracles::active_set_enumeration(dense);
        REQUIRE(best.found);
        CHECK(sol.objective == doctest::Approx(best.objective).epsilon(1e-6).scale(1.0));
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("qp: slacks stay at zero when the hard problem is feasible") {
    Rng rng(303);
    for (int trial = 0; trial < 20; ++trial) {
        // exact-penalty sized linear weight
        QpProblem p = random_problem(rng, 2, 2, 2, 3, 1000.0);
        QpSolver solver;
        const QpSolution sol = solver.solve(p);
        REQUIRE(sol.status == QpStatus::solved);

        // feasibility probe of the hard problem: enumeration with slacks
        // forced to zero via huge penalties
        QpProblem hard = p;
        bool hard_feasible = true;
        {
            const auto dense = oracles::densify(hard);
            const auto best = oracles::active_set_enumeration(dense);
            if (!best.found) hard_feasible = false;
            // the enumeration solves the softened problem; the hard
            // problem is feasible iff the optimal slacks are ~zero there
            if (best.found) {
                for (int k = 0; k <= p.N && hard_feasible; ++k)
                    for (int i = 0; i < p.rows(k); ++i)
                        if (best.w[dense.s_off[k] + i] > 1e-6) hard_feasible = false;
            }
        }
        double smax = 0.0;
        for (int k = 0; k <= p.N; ++k)
            if (sol.s[k].size() > 0) smax = std::max(smax, sol.s[k].maxCoeff());
        if (hard_feasible) CHECK(smax <= 1e-5);
    }
}

TEST_CASE("qp: soft rows keep wildly conflicting constraints solvable") {
    Rng rng(404);
    QpProblem p = random_problem(rng, 2, 2, 1, 0, 100.0);
    // an unsatisfiable pair of soft rows at stage 1: x <= -5 and -x <= -5
    const int k = 1;
    p.C[k] = MatrixXd::Zero(2, 2);
    p.C[k](0, 0) = 1.0;
    p.C[k](1, 0) = -1.0;
    p.D[k] = MatrixXd::Zero(2, 1);
    p.e[k] = VectorXd::Constant(2, -5.0);
    p.slack_quad[k] = VectorXd::Constant(2, 10.0);
    p.slack_lin[k] = VectorXd::Constant(2, 10.0);
    QpSolver solver;
    const QpSolution sol = solver.solve(p);
    CHECK(sol.status == QpStatus::solved);
    CHECK(sol.s[k].minCoeff() > 1.0);  // slacks absorb the conflict
}

TEST_CASE("qp: kkt_residuals flags perturbed candidates") {
    QpProblem p = QpProblem::sized(1, 1, 1);
    p.R[0](0, 0) = 2.0;
    p.r[0][0] = -2.0;
    p.ubu[0][0] = 0.5;
    QpSolver solver;
    QpSolution sol = solver.solve(p);
    REQUIRE(sol.status == QpStatus::solved);
    CHECK(kkt_residuals(p, sol).max_norm() <= 1e-6);

    QpSolution bumped = sol;
    bumped.u[0][0] += 1e-3;
    const KktResiduals res = kkt_residuals(p, bumped);
    CHECK(res.stationarity > 1e-4);
    CHECK(res.stationarity < 1e-2);

    // zero-gradient unconstrained problem: the origin is optimal
    QpProblem p0 = QpProblem::sized(1, 1, 1);
    p0.R[0](0, 0) = 1.0;
    QpSolution zero;
    zero.x.assign(2, VectorXd::Zero(1));
    zero.u.assign(1, VectorXd::Zero(1));
    zero.s.assign(2, VectorXd::Zero(0));
    zero.lam.assign(1, VectorXd::Zero(1));
    zero.z_soft.assign(2, VectorXd::Zero(0));
    zero.z_snn.assign(2, VectorXd::Zero(0));
    zero.z_lbx.assign(2, VectorXd::Zero(1));
    zero.z_ubx.assign(2, VectorXd::Zero(1));
    zero.z_lbu.assign(1, VectorXd::Zero(1));
    zero.z_ubu.assign(1, VectorXd::Zero(1));
    CHECK(kkt_residuals(p0, zero).max_norm() == 0.0);
}

TEST_CASE("qp: warm start converges immediately on an unchanged problem") {
    Rng rng(505);
    for (int trial = 0; trial < 10; ++trial) {
        const QpProblem p = random_problem(rng, 3, 3, 2, 4, 50.0);
        QpSolver solver;
        const QpSolution cold = solver.solve(p);
        REQUIRE(cold.status == QpStatus::solved);
        const QpSolution warm = solver.solve(p, &cold);
        REQUIRE(warm.status == QpStatus::solved);
        CHECK(warm.iterations <= 2);
        // both points sit inside the solver tolerance of the optimum
        CHECK(std::abs(warm.objective - cold.objective) <
              1e-5 * std::max(1.0, std::abs(cold.objective)));
    }
}

TEST_CASE("qp: deterministic bit-identical re-solves") {
    Rng rng(606);
    const QpProblem p = random_problem(rng, 3, 3, 2, 4, 50.0);
    QpSolver s1, s2;
    const QpSolution a = s1.solve(p);
    const QpSolution b = s2.solve(p);
    REQUIRE(a.status == b.status);
    CHECK(a.iterations == b.iterations);
    CHECK(a.objective == b.objective);
    for (int k = 0; k <= p.N; ++k) CHECK((a.x[k] - b.x[k]).cwiseAbs().maxCoeff() == 0.0);
    for (int k = 0; k < p.N; ++k) CHECK((a.u[k] - b.u[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("qp: per-solve cost scales linearly in the horizon") {
    // identical stage data replicated across the horizon; a mild
    // contraction keeps the rollout bounded at any N
    auto make = [&](int N) {
        Rng local(808);
        QpProblem proto = random_problem(local, 1, 6, 3, 1, 100.0);
        proto.A[0] *= 0.5;
        QpProblem p = QpProblem::sized(N, 6, 3);
        p.x0 = proto.x0;
        for (int k = 0; k < N; ++k) {
            p.A[k] = proto.A[0];
            p.B[k] = proto.B[0];
            p.c[k] = proto.c[0];
            p.Q[k] = proto.Q[0];
            p.q[k] = proto.q[0];
            p.R[k] = proto.R[0];
            p.r[k] = proto.r[0];
            p.S[k] = proto.S[0];
            p.lbu[k] = proto.lbu[0];
            p.ubu[k] = proto.ubu[0];
        }
        p.Q[N] = proto.Q[0];
        p.q[N] = proto.q[0];
        for (int k = 1; k <= N; ++k) {
            p.C[k] = proto.C[1].rows() ? proto.C[1] : Eigen::MatrixXd::Zero(1, 6);
            p.D[k] = Eigen::MatrixXd::Zero(p.C[k].rows(), 3);
            p.e[k] = proto.e[1].size() ? proto.e[1] : Eigen::VectorXd::Constant(1, 1.0);
            p.slack_quad[k] = Eigen::VectorXd::Constant(p.C[k].rows(), 10.0);
            p.slack_lin[k] = Eigen::VectorXd::Constant(p.C[k].rows(), 100.0);
        }
        return p;
    };
    const QpProblem p80 = make(80);
    const QpProblem p160 = make(160);
    QpSolver solver;
    // warm the caches once
    const QpSolution s80 = solver.solve(p80);
    const QpSolution s160 = solver.solve(p160);
    REQUIRE(s80.status == QpStatus::solved);
    REQUIRE(s160.status == QpStatus::solved);
    auto time_solve = [&](const QpProblem& p) {
        double best = 1e300;
        int iters = 1;
        for (int rep = 0; rep < 7; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            const QpSolution sol = solver.solve(p);
            const auto t1 = std::chrono::steady_clock::now();
            iters = std::max(1, sol.iterations);
            best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
        }
        return std::make_pair(best, iters);
    };
    const auto [t80, i80] = time_solve(p80);
    const auto [t160, i160] = time_solve(p160);
    // normalize per iteration in case the interior-point path lengths differ
    const double per80 = t80 / i80;
    const double per160 = t160 / i160;
    CHECK(per160 / per80 <= 2.5);
}

TEST_CASE("qp: dimension mismatches and bad Hessians are rejected") {
    QpProblem p = QpProblem::sized(2, 2, 1);
    p.R[0](0, 0) = 1.0;
    p.R[1](0, 0) = 0.0;  // not PD
    QpSolver solver;
    CHECK_THROWS_AS(solver.solve(p), std::invalid_argument);
    p.R[1](0, 0) = 1.0;
    p.A.pop_back();
    CHECK_THROWS_AS(solver.solve(p), std::invalid_argument);
}

TEST_CASE("qp: problem dump/load round trip") {
    Rng rng(909);
    const QpProblem p = random_problem(rng, 2, 2, 2, 3, 40.0);
    std::stringstream ss;
    dump_problem(p, ss);
    const QpProblem q = load_problem(ss);
    QpSolver solver;
    const QpSolution a = solver.solve(p);
    const QpSolution b = solver.solve(q);
    CHECK(a.objective == b.objective);
    CHECK(a.iterations == b.iterations);
    for (int k = 0; k < p.N; ++k) CHECK((a.u[k] - b.u[k]).cwiseAbs().maxCoeff() == 0.0);
}
