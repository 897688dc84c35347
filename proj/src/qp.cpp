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

#include "lbmpcc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "lbmpcc/io.hpp"

namespace lbmpcc::qp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFractionToBoundary = 0.995;

std::vector<int> finite_indices(const VectorXd& v) {
    std::vector<int> idx;
    for (int i = 0; i < v.size(); ++i)
        if (std::isfinite(v[i])) idx.push_back(i);
    return idx;
}

double max_step(const VectorXd& v, const VectorXd& dv) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    return a;
}

}  // namespace

const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::solved: return "solved";
        case QpStatus::max_iter: return "max_iter";
        case QpStatus::infeasible_detected: return "infeasible_detected";
    }
    return "?";
}

double KktResiduals::max_norm() const {
    return std::max({stationarity, primal, dual, complementarity});
}

QpProblem QpProblem::sized(int N, int nx, int nu) {
    QpProblem p;
    p.N = N;
    p.nx = nx;
    p.nu = nu;
    p.x0 = VectorXd::Zero(nx);
    p.A.assign(N, MatrixXd::Zero(nx, nx));
    p.B.assign(N, MatrixXd::Zero(nx, nu));
    p.c.assign(N, VectorXd::Zero(nx));
    p.Q.assign(N + 1, MatrixXd::Zero(nx, nx));
    p.q.assign(N + 1, VectorXd::Zero(nx));
    p.R.assign(N, MatrixXd::Zero(nu, nu));
    p.r.assign(N, VectorXd::Zero(nu));
    p.S.assign(N, MatrixXd::Zero(nx, nu));
    p.lbx.assign(N + 1, VectorXd::Constant(nx, -kInf));
    p.ubx.assign(N + 1, VectorXd::Constant(nx, kInf));
    p.lbu.assign(N, VectorXd::Constant(nu, -kInf));
    p.ubu.assign(N, VectorXd::Constant(nu, kInf));
    p.C.assign(N + 1, MatrixXd::Zero(0, nx));
    p.D.assign(N + 1, MatrixXd::Zero(0, nu));
    p.e.assign(N + 1, VectorXd::Zero(0));
    p.slack_quad.assign(N + 1, VectorXd::Zero(0));
    p.slack_lin.assign(N + 1, VectorXd::Zero(0));
    return p;
}

void QpProblem::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("qp problem: " + msg); };
    if (N < 1 || nx < 1 || nu < 1) fail("N, nx, nu must be positive");
    if (x0.size() != nx) fail("x0 size");
    auto check_count = [&](size_t got, size_t want, const char* what) {
        if (got != want) fail(std::string(what) + " stage count");
    };
    check_count(A.size(), N, "A");
    check_count(B.size(), N, "B");
    check_count(c.size(), N, "c");
    check_count(Q.size(), N + 1, "Q");
    check_count(q.size(), N + 1, "q");
    check_count(R.size(), N, "R");
    check_count(r.size(), N, "r");
    check_count(S.size(), N, "S");
    check_count(lbx.size(), N + 1, "lbx");
    check_count(ubx.size(), N + 1, "ubx");
    check_count(lbu.size(), N, "lbu");
    check_count(ubu.size(), N, "ubu");
    check_count(C.size(), N + 1, "C");
    check_count(D.size(), N + 1, "D");
    check_count(e.size(), N + 1, "e");
    check_count(slack_quad.size(), N + 1, "slack_quad");
    check_count(slack_lin.size(), N + 1, "slack_lin");
    for (int k = 0; k <= N; ++k) {
        if (Q[k].rows() != nx || Q[k].cols() != nx) fail("Q dims");
        if (!Q[k].isApprox(Q[k].transpose(), 1e-12)) fail("Q not symmetric");
        if (Q[k].diagonal().minCoeff() < 0.0) fail("Q has a negative diagonal (not PSD)");
        if (q[k].size() != nx) fail("q dims");
        if (lbx[k].size() != nx || ubx[k].size() != nx) fail("x bound dims");
        for (int i = 0; i < nx; ++i)
            if (lbx[k][i] > ubx[k][i]) fail("lbx > ubx");
        const int m = rows(k);
        if (C[k].rows() != m || C[k].cols() != nx) fail("C dims");
        if (D[k].rows() != m || D[k].cols() != nu) fail("D dims");
        if (slack_quad[k].size() != m || slack_lin[k].size() != m) fail("slack weight dims");
        for (int i = 0; i < m; ++i) {
            if (slack_quad[k][i] < 0.0 || slack_lin[k][i] < 0.0) fail("negative slack weight");
            if (slack_quad[k][i] + slack_lin[k][i] <= 0.0) fail("zero slack penalty row");
        }
        if (k == N && m > 0 && D[k].cwiseAbs().maxCoeff() > 0.0) fail("terminal rows must not touch u");
    }
    for (int k = 0; k < N; ++k) {
        if (A[k].rows() != nx || A[k].cols() != nx) fail("A dims");
        if (B[k].rows() != nx || B[k].cols() != nu) fail("B dims");
        if (c[k].size() != nx) fail("c dims");
        if (R[k].rows() != nu || R[k].cols() != nu) fail("R dims");
        if (!R[k].isApprox(R[k].transpose(), 1e-12)) fail("R not symmetric");
        const Eigen::LLT<MatrixXd> llt(R[k]);
        if (llt.info() != Eigen::Success || R[k].diagonal().minCoeff() <= 0.0)
            fail("R must be strictly positive definite");
        if (r[k].size() != nu) fail("r dims");
        if (S[k].rows() != nx || S[k].cols() != nu) fail("S dims");
        if (lbu[k].size() != nu || ubu[k].size() != nu) fail("u bound dims");
        for (int i = 0; i < nu; ++i)
            if (lbu[k][i] > ubu[k][i]) fail("lbu > ubu");
    }
}

double objective_value(const QpProblem& p, const QpSolution& sol) {
    double J = 0.0;
    for (int k = 0; k <= p.N; ++k) {
        const VectorXd& xk = k == 0 ? p.x0 : sol.x[k];
        J += 0.5 * xk.dot(p.Q[k] * xk) + p.q[k].dot(xk);
        if (k < p.N) {
            J += 0.5 * sol.u[k].dot(p.R[k] * sol.u[k]) + p.r[k].dot(sol.u[k]);
            J += xk.dot(p.S[k] * sol.u[k]);
        }
        for (int i = 0; i < p.rows(k); ++i)
            J += 0.5 * p.slack_quad[k][i] * sol.s[k][i] * sol.s[k][i] +
                 p.slack_lin[k][i] * sol.s[k][i];
    }
    return J;
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& sol) {
    KktResiduals res;
    auto track_comp = [&](double z, double g) {
        res.dual = std::max(res.dual, std::max(0.0, -z));
        res.complementarity = std::max(res.complementarity, std::abs(z * g));
        res.primal = std::max(res.primal, std::max(0.0, g));
    };

    for (int k = 0; k <= p.N; ++k) {
        const VectorXd& xk = k == 0 ? p.x0 : sol.x[k];
        // stationarity in x (x0 is data, not a variable)
        if (k >= 1) {
            VectorXd g = p.Q[k] * xk + p.q[k] + sol.lam[k - 1];
            if (k < p.N) g += p.S[k] * sol.u[k] - p.A[k].transpose() * sol.lam[k];
            if (p.rows(k) > 0) g += p.C[k].transpose() * sol.z_soft[k];
            g -= sol.z_lbx[k];
            g += sol.z_ubx[k];
            res.stationarity = std::max(res.stationarity, g.lpNorm<Eigen::Infinity>());
        }
        // stationarity in u
        if (k < p.N) {
            VectorXd g = p.R[k] * sol.u[k] + p.r[k] + p.S[k].transpose() * xk -
                         p.B[k].transpose() * sol.lam[k];
            if (p.rows(k) > 0) g += p.D[k].transpose() * sol.z_soft[k];
            g -= sol.z_lbu[k];
            g += sol.z_ubu[k];
            res.stationarity = std::max(res.stationarity, g.lpNorm<Eigen::Infinity>());
        }
        // stationarity in s and the soft/nonnegativity rows
        for (int i = 0; i < p.rows(k); ++i) {
            const double si = sol.s[k][i];
            const double gs = p.slack_quad[k][i] * si + p.slack_lin[k][i] -
                              sol.z_soft[k][i] - sol.z_snn[k][i];
            res.stationarity = std::max(res.stationarity, std::abs(gs));
            const double grow = (p.C[k].row(i) * xk + p.D[k].row(i) * (k < p.N ? sol.u[k] : VectorXd::Zero(p.nu)))(0) -
                                si - p.e[k][i];
            track_comp(sol.z_soft[k][i], grow);
            track_comp(sol.z_snn[k][i], -si);
        }
        // dynamics
        if (k < p.N) {
            const VectorXd r_eq = sol.x[k + 1] - p.A[k] * xk - p.B[k] * sol.u[k] - p.c[k];
            res.primal = std::max(res.primal, r_eq.lpNorm<Eigen::Infinity>());
        }
        // bounds
        if (k >= 1) {
            for (int i = 0; i < p.nx; ++i) {
                if (std::isfinite(p.lbx[k][i])) track_comp(sol.z_lbx[k][i], p.lbx[k][i] - xk[i]);
                if (std::isfinite(p.ubx[k][i])) track_comp(sol.z_ubx[k][i], xk[i] - p.ubx[k][i]);
            }
        }
        if (k < p.N) {
            for (int i = 0; i < p.nu; ++i) {
                if (std::isfinite(p.lbu[k][i])) track_comp(sol.z_lbu[k][i], p.lbu[k][i] - sol.u[k][i]);
                if (std::isfinite(p.ubu[k][i])) track_comp(sol.z_ubu[k][i], sol.u[k][i] - p.ubu[k][i]);
            }
        }
    }
    return res;
}

namespace {

// Everything the interior-point iteration owns. t2 for the s >= 0 rows
// is the s variable itself, so only the soft rows carry an explicit t.
struct IpmState {
    std::vector<VectorXd> x, u, s, t1;
    std::vector<VectorXd> z1, z2;                      // soft, s >= 0
    std::vector<VectorXd> txl, zxl, txu, zxu;          // masked x bounds
    std::vector<VectorXd> tul, zul, tuu, zuu;          // masked u bounds
    std::vector<VectorXd> lam;                         // lam[k] = multiplier of x_{k+1} row
};

struct Masks {
    std::vector<std::vector<int>> xl, xu, ul, uu;
};

struct Residuals {
    std::vector<VectorXd> eq;            // N
    std::vector<VectorXd> g1;            // soft-row residual C x + D u - s - e + t1
    std::vector<VectorXd> sx, su, ss;    // stationarity blocks
    std::vector<VectorXd> gxl, gxu, gul, guu;  // bound residuals incl t
};

struct Direction {
    std::vector<VectorXd> x, u, s, t1, z1, z2;
    std::vector<VectorXd> txl, zxl, txu, zxu, tul, zul, tuu, zuu;
    std::vector<VectorXd> lam;
};

struct StageFactors {
    std::vector<MatrixXd> Qh, Sh, Rh;     // condensed Hessian blocks
    std::vector<VectorXd> what, w1, w2, hss;
    std::vector<VectorXd> wxl, wxu, wul, wuu;
    std::vector<MatrixXd> P, G, K;
    std::vector<Eigen::LLT<MatrixXd>> F;
};

VectorXd gather(const VectorXd& v, const std::vector<int>& idx) {
    VectorXd out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
    return out;
}

void scatter_add(VectorXd& v, const std::vector<int>& idx, const VectorXd& vals, double sign) {
    for (size_t i = 0; i < idx.size(); ++i) v[idx[i]] += sign * vals[i];
}

}  // namespace

QpSolution QpSolver::solve(const QpProblem& p, const QpSolution* warm) {
    p.validate();
    const int N = p.N, nx = p.nx, nu = p.nu;

    Masks mk;
    mk.xl.resize(N + 1);
    mk.xu.resize(N + 1);
    mk.ul.resize(N);
    mk.uu.resize(N);
    for (int k = 1; k <= N; ++k) {
        mk.xl[k] = finite_indices(p.lbx[k]);
        mk.xu[k] = finite_indices(p.ubx[k]);
    }
    for (int k = 0; k < N; ++k) {
        mk.ul[k] = finite_indices(p.lbu[k]);
        mk.uu[k] = finite_indices(p.ubu[k]);
    }

    IpmState it;
    it.x.assign(N + 1, VectorXd::Zero(nx));
    it.x[0] = p.x0;
    it.u.assign(N, VectorXd::Zero(nu));
    it.s.resize(N + 1);
    it.t1.resize(N + 1);
    it.z1.resize(N + 1);
    it.z2.resize(N + 1);
    it.lam.assign(N, VectorXd::Zero(nx));
    it.txl.resize(N + 1);
    it.zxl.resize(N + 1);
    it.txu.resize(N + 1);
    it.zxu.resize(N + 1);
    it.tul.resize(N);
    it.zul.resize(N);
    it.tuu.resize(N);
    it.zuu.resize(N);

    const bool have_warm = warm != nullptr && static_cast<int>(warm->x.size()) == N + 1 &&
                           static_cast<int>(warm->u.size()) == N && warm->x[1].size() == nx &&
                           warm->u[0].size() == nu;
    // Three entry modes. A full warm start (primal and duals, e.g. a
    // re-solve of the same problem) is taken as-is with tiny floors so
    // an already-optimal point passes the entry test. A primal-only warm
    // start gets slack-informed centered pairs at a small mu. A cold
    // start rolls out the dynamics and centers at mu = 1.
    constexpr double kWarmFloor = 1e-9;
    constexpr double kPrimalWarmMu = 1e-4;
    constexpr double kColdMu = 1.0;
    const bool have_warm_duals =
        have_warm && warm->z_soft.size() == size_t(N + 1) && warm->s.size() == size_t(N + 1) &&
        warm->z_snn.size() == size_t(N + 1) && warm->z_lbx.size() == size_t(N + 1) &&
        warm->z_ubx.size() == size_t(N + 1) && warm->z_lbu.size() == size_t(N) &&
        warm->z_ubu.size() == size_t(N);
    // A primal-only warm start can sit far from stationarity, so its
    // barrier weight is matched to the gradient scale at the entry point.
    double mu_primal_warm = kPrimalWarmMu;
    if (have_warm && !have_warm_duals) {
        double grad = 0.0;
        for (int k = 0; k <= N; ++k) {
            const VectorXd& xk = k == 0 ? p.x0 : warm->x[k];
            grad = std::max(grad, (p.Q[k] * xk + p.q[k]).lpNorm<Eigen::Infinity>());
            if (k < N)
                grad = std::max(grad,
                                (p.R[k] * warm->u[k] + p.r[k]).lpNorm<Eigen::Infinity>());
        }
        mu_primal_warm = std::clamp(0.01 * grad, kPrimalWarmMu, 1e3);
    }
    const double t_floor = have_warm_duals ? kWarmFloor : std::sqrt(kPrimalWarmMu);
    const double mu_init = have_warm ? mu_primal_warm : kColdMu;

    // primal initialization
    if (have_warm) {
        for (int k = 0; k < N; ++k) it.u[k] = warm->u[k];
        for (int k = 1; k <= N; ++k) it.x[k] = warm->x[k];
    } else {
        for (int k = 0; k < N; ++k) {
            for (int i = 0; i < nu; ++i) {
                const double lb = p.lbu[k][i], ub = p.ubu[k][i];
                double v = 0.0;
                if (std::isfinite(lb) && std::isfinite(ub)) {
                    v = std::clamp(0.0, lb + 0.25 * (ub - lb), ub - 0.25 * (ub - lb));
                } else if (std::isfinite(lb)) {
                    v = std::max(0.0, lb + 1.0);
                } else if (std::isfinite(ub)) {
                    v = std::min(0.0, ub - 1.0);
                }
                it.u[k][i] = v;
            }
        }
        for (int k = 0; k < N; ++k) it.x[k + 1] = p.A[k] * it.x[k] + p.B[k] * it.u[k] + p.c[k];
    }

    for (int k = 0; k <= N; ++k) {
        const int m = p.rows(k);
        VectorXd ghard = VectorXd::Zero(m);
        if (m > 0) {
            ghard = p.C[k] * it.x[k] - p.e[k];
            if (k < N) ghard += p.D[k] * it.u[k];
        }
        it.s[k].resize(m);
        it.t1[k].resize(m);
        it.z1[k].resize(m);
        it.z2[k].resize(m);
        const bool warm_soft = have_warm_duals && warm->s[k].size() == m &&
                               warm->z_soft[k].size() == m && warm->z_snn[k].size() == m;
        // stale warm duals are kept inside a centrality band around their
        // slack so no complementarity pair starts pathologically mismatched
        auto sanitize = [&](double z_prev, double t) {
            const double lo = kWarmFloor / t;
            const double hi = 10.0 / t;
            return std::clamp(std::max(z_prev, 0.0), std::max(lo, kWarmFloor), std::max(hi, kWarmFloor));
        };
        for (int i = 0; i < m; ++i) {
            if (warm_soft) {
                it.s[k][i] = std::max(warm->s[k][i], kWarmFloor);
                it.t1[k][i] = std::max(it.s[k][i] - ghard[i], kWarmFloor);
                it.z1[k][i] = sanitize(warm->z_soft[k][i], it.t1[k][i]);
                it.z2[k][i] = sanitize(warm->z_snn[k][i], it.s[k][i]);
            } else if (have_warm) {
                it.s[k][i] = std::max(ghard[i], 0.0) + t_floor;
                it.t1[k][i] = it.s[k][i] - ghard[i];
                it.z1[k][i] = mu_init / it.t1[k][i];
                it.z2[k][i] = mu_init / it.s[k][i];
            } else {
                it.s[k][i] = std::max(1.0, ghard[i] + 1.0);
                it.t1[k][i] = it.s[k][i] - ghard[i];
                it.z1[k][i] = mu_init / it.t1[k][i];
                it.z2[k][i] = mu_init / it.s[k][i];
            }
        }
        auto init_bound = [&](const std::vector<int>& idx, const VectorXd& var, const VectorXd& bound,
                              bool lower, VectorXd& t, VectorXd& z, const VectorXd* wz) {
            t.resize(idx.size());
            z.resize(idx.size());
            for (size_t i = 0; i < idx.size(); ++i) {
                const double gap = lower ? var[idx[i]] - bound[idx[i]] : bound[idx[i]] - var[idx[i]];
                t[i] = std::max(gap, have_warm ? t_floor : 1.0);
                z[i] = wz ? sanitize((*wz)[idx[i]], t[i]) : mu_init / t[i];
            }
        };
        if (k >= 1) {
            init_bound(mk.xl[k], it.x[k], p.lbx[k], true, it.txl[k], it.zxl[k],
                       have_warm_duals && warm->z_lbx[k].size() == nx ? &warm->z_lbx[k] : nullptr);
            init_bound(mk.xu[k], it.x[k], p.ubx[k], false, it.txu[k], it.zxu[k],
                       have_warm_duals && warm->z_ubx[k].size() == nx ? &warm->z_ubx[k] : nullptr);
        } else {
            it.txl[0].resize(0);
            it.zxl[0].resize(0);
            it.txu[0].resize(0);
            it.zxu[0].resize(0);
        }
        if (k < N) {
            init_bound(mk.ul[k], it.u[k], p.lbu[k], true, it.tul[k], it.zul[k],
                       have_warm_duals && warm->z_lbu[k].size() == nu ? &warm->z_lbu[k] : nullptr);
            init_bound(mk.uu[k], it.u[k], p.ubu[k], false, it.tuu[k], it.zuu[k],
                       have_warm_duals && warm->z_ubu[k].size() == nu ? &warm->z_ubu[k] : nullptr);
        }
    }
    if (have_warm && warm->lam.size() == size_t(N) && warm->lam[0].size() == nx) {
        for (int k = 0; k < N; ++k) it.lam[k] = warm->lam[k];
    }

    long M = 0;  // number of complementarity pairs
    for (int k = 0; k <= N; ++k) {
        M += 2 * p.rows(k);
        if (k >= 1) M += static_cast<long>(mk.xl[k].size() + mk.xu[k].size());
        if (k < N) M += static_cast<long>(mk.ul[k].size() + mk.uu[k].size());
    }

    Residuals rs;
    rs.eq.resize(N);
    rs.g1.resize(N + 1);
    rs.sx.resize(N + 1);
    rs.su.resize(N);
    rs.ss.resize(N + 1);
    rs.gxl.resize(N + 1);
    rs.gxu.resize(N + 1);
    rs.gul.resize(N);
    rs.guu.resize(N);

    auto compute_residuals = [&]() {
        for (int k = 0; k < N; ++k)
            rs.eq[k] = it.x[k + 1] - p.A[k] * it.x[k] - p.B[k] * it.u[k] - p.c[k];
        for (int k = 0; k <= N; ++k) {
            const int m = p.rows(k);
            if (m > 0) {
                rs.g1[k] = p.C[k] * it.x[k] - it.s[k] - p.e[k] + it.t1[k];
                if (k < N) rs.g1[k] += p.D[k] * it.u[k];
                rs.ss[k] = p.slack_quad[k].cwiseProduct(it.s[k]) + p.slack_lin[k] - it.z1[k] - it.z2[k];
            } else {
                rs.g1[k].resize(0);
                rs.ss[k].resize(0);
            }
            if (k >= 1) {
                VectorXd g = p.Q[k] * it.x[k] + p.q[k] + it.lam[k - 1];
                if (k < N) g += p.S[k] * it.u[k] - p.A[k].transpose() * it.lam[k];
                if (m > 0) g += p.C[k].transpose() * it.z1[k];
                scatter_add(g, mk.xl[k], it.zxl[k], -1.0);
                scatter_add(g, mk.xu[k], it.zxu[k], +1.0);
                rs.sx[k] = g;
                rs.gxl[k] = gather(p.lbx[k] - it.x[k], mk.xl[k]) + it.txl[k];
                rs.gxu[k] = gather(it.x[k] - p.ubx[k], mk.xu[k]) + it.txu[k];
            }
            if (k < N) {
                VectorXd g = p.R[k] * it.u[k] + p.r[k] + p.S[k].transpose() * it.x[k] -
                             p.B[k].transpose() * it.lam[k];
                if (m > 0) g += p.D[k].transpose() * it.z1[k];
                scatter_add(g, mk.ul[k], it.zul[k], -1.0);
                scatter_add(g, mk.uu[k], it.zuu[k], +1.0);
                rs.su[k] = g;
                rs.gul[k] = gather(p.lbu[k] - it.u[k], mk.ul[k]) + it.tul[k];
                rs.guu[k] = gather(it.u[k] - p.ubu[k], mk.uu[k]) + it.tuu[k];
            }
        }
    };

    auto snapshot = [&](QpStatus status, int iters) {
        QpSolution sol;
        sol.status = status;
        sol.x = it.x;
        sol.u = it.u;
        sol.s = it.s;
        sol.lam = it.lam;
        sol.z_soft = it.z1;
        sol.z_snn = it.z2;
        sol.z_lbx.assign(N + 1, VectorXd::Zero(nx));
        sol.z_ubx.assign(N + 1, VectorXd::Zero(nx));
        sol.z_lbu.assign(N, VectorXd::Zero(nu));
        sol.z_ubu.assign(N, VectorXd::Zero(nu));
        for (int k = 1; k <= N; ++k) {
            scatter_add(sol.z_lbx[k], mk.xl[k], it.zxl[k], 1.0);
            scatter_add(sol.z_ubx[k], mk.xu[k], it.zxu[k], 1.0);
        }
        for (int k = 0; k < N; ++k) {
            scatter_add(sol.z_lbu[k], mk.ul[k], it.zul[k], 1.0);
            scatter_add(sol.z_ubu[k], mk.uu[k], it.zuu[k], 1.0);
        }
        sol.iterations = iters;
        sol.residuals = kkt_residuals(p, sol);
        sol.objective = objective_value(p, sol);
        return sol;
    };

    StageFactors f;
    f.Qh.assign(N + 1, MatrixXd(nx, nx));
    f.Sh.assign(N, MatrixXd(nx, nu));
    f.Rh.assign(N, MatrixXd(nu, nu));
    f.what.resize(N + 1);
    f.w1.resize(N + 1);
    f.w2.resize(N + 1);
    f.hss.resize(N + 1);
    f.wxl.resize(N + 1);
    f.wxu.resize(N + 1);
    f.wul.resize(N);
    f.wuu.resize(N);
    f.P.assign(N + 1, MatrixXd(nx, nx));
    f.G.assign(N, MatrixXd(nx, nu));
    f.K.assign(N, MatrixXd(nu, nx));
    f.F.resize(N);

    Direction dir, dir_aff;
    auto size_direction = [&](Direction& d) {
        d.x.assign(N + 1, VectorXd::Zero(nx));
        d.u.assign(N, VectorXd::Zero(nu));
        d.lam.assign(N, VectorXd::Zero(nx));
        d.s.resize(N + 1);
        d.t1.resize(N + 1);
        d.z1.resize(N + 1);
        d.z2.resize(N + 1);
        d.txl.resize(N + 1);
        d.zxl.resize(N + 1);
        d.txu.resize(N + 1);
        d.zxu.resize(N + 1);
        d.tul.resize(N);
        d.zul.resize(N);
        d.tuu.resize(N);
        d.zuu.resize(N);
    };
    size_direction(dir);
    size_direction(dir_aff);

    // factorization pass: condensed stage Hessians and the Riccati sweep;
    // returns false when a reduced block loses positive definiteness so
    // the caller can retry with a diagonal lift
    auto try_factorize = [&](double reg) {
        for (int k = 0; k <= N; ++k) {
            const int m = p.rows(k);
            if (m > 0) {
                f.w1[k] = it.z1[k].cwiseQuotient(it.t1[k]);
                f.w2[k] = it.z2[k].cwiseQuotient(it.s[k]);
                f.hss[k] = p.slack_quad[k] + f.w1[k] + f.w2[k];
                f.what[k] =
                    f.w1[k].cwiseProduct(p.slack_quad[k] + f.w2[k]).cwiseQuotient(f.hss[k]);
            } else {
                f.w1[k].resize(0);
                f.w2[k].resize(0);
                f.hss[k].resize(0);
                f.what[k].resize(0);
            }
            if (k >= 1) {
                f.Qh[k] = p.Q[k];
                if (m > 0)
                    f.Qh[k].noalias() += p.C[k].transpose() * f.what[k].asDiagonal() * p.C[k];
                f.wxl[k] = it.zxl[k].cwiseQuotient(it.txl[k]);
                f.wxu[k] = it.zxu[k].cwiseQuotient(it.txu[k]);
                for (size_t i = 0; i < mk.xl[k].size(); ++i) f.Qh[k](mk.xl[k][i], mk.xl[k][i]) += f.wxl[k][i];
                for (size_t i = 0; i < mk.xu[k].size(); ++i) f.Qh[k](mk.xu[k][i], mk.xu[k][i]) += f.wxu[k][i];
                f.Qh[k].diagonal().array() += reg;
            }
            if (k < N) {
                const int mm = p.rows(k);
                f.Rh[k] = p.R[k];
                f.Sh[k] = p.S[k];
                if (mm > 0) {
                    f.Rh[k].noalias() += p.D[k].transpose() * f.what[k].asDiagonal() * p.D[k];
                    f.Sh[k].noalias() += p.C[k].transpose() * f.what[k].asDiagonal() * p.D[k];
                }
                f.wul[k] = it.zul[k].cwiseQuotient(it.tul[k]);
                f.wuu[k] = it.zuu[k].cwiseQuotient(it.tuu[k]);
                for (size_t i = 0; i < mk.ul[k].size(); ++i) f.Rh[k](mk.ul[k][i], mk.ul[k][i]) += f.wul[k][i];
                for (size_t i = 0; i < mk.uu[k].size(); ++i) f.Rh[k](mk.uu[k][i], mk.uu[k][i]) += f.wuu[k][i];
                f.Rh[k].diagonal().array() += reg;
            }
        }
        f.P[N] = f.Qh[N];
        for (int k = N - 1; k >= 0; --k) {
            const MatrixXd PB = f.P[k + 1] * p.B[k];
            const MatrixXd Fk = f.Rh[k] + p.B[k].transpose() * PB;
            // at stage 0 the cross term acts on fixed data, and dx_0 = 0
            // zeroes it out of the recursion anyway
            f.G[k] = (k >= 1 ? MatrixXd(f.Sh[k]) : MatrixXd::Zero(nx, nu)) +
                     p.A[k].transpose() * PB;
            f.F[k].compute(Fk);
            if (f.F[k].info() != Eigen::Success) return false;
            f.K[k] = -f.F[k].solve(f.G[k].transpose());
            if (k >= 1) {
                f.P[k] = f.Qh[k] + p.A[k].transpose() * f.P[k + 1] * p.A[k] + f.G[k] * f.K[k];
                f.P[k] = 0.5 * (f.P[k] + f.P[k].transpose());
            }
        }
        return true;
    };

    auto factorize = [&]() {
        if (try_factorize(0.0)) return true;
        for (double reg = 1e-10; reg <= 1e-2; reg *= 1e4)
            if (try_factorize(reg)) return true;
        return false;
    };

    // rhs pass: given the centering/corrector products rc*, compute the
    // Newton direction via the backward/forward recursions.
    std::vector<VectorXd> rc1(N + 1), rc2(N + 1), rcxl(N + 1), rcxu(N + 1), rcul(N), rcuu(N);
    std::vector<VectorXd> beta1(N + 1), beta2(N + 1), rhs_s(N + 1), rhs_x(N + 1), rhs_u(N);
    std::vector<VectorXd> pvec(N + 1), kff(N);

    auto solve_newton = [&](Direction& d) {
        for (int k = 0; k <= N; ++k) {
            const int m = p.rows(k);
            if (m > 0) {
                beta1[k] = (it.z1[k].cwiseProduct(rs.g1[k]) - rc1[k]).cwiseQuotient(it.t1[k]);
                beta2[k] = -rc2[k].cwiseQuotient(it.s[k]);
                rhs_s[k] = -rs.ss[k] + beta1[k] + beta2[k];
            } else {
                beta1[k].resize(0);
                beta2[k].resize(0);
                rhs_s[k].resize(0);
            }
            if (k >= 1) {
                rhs_x[k] = -rs.sx[k];
                if (m > 0) {
                    rhs_x[k].noalias() -= p.C[k].transpose() * beta1[k];
                    rhs_x[k].noalias() +=
                        p.C[k].transpose() *
                        (f.w1[k].cwiseQuotient(f.hss[k]).cwiseProduct(rhs_s[k]));
                }
                const VectorXd bxl = (it.zxl[k].cwiseProduct(rs.gxl[k]) - rcxl[k]).cwiseQuotient(it.txl[k]);
                const VectorXd bxu = (it.zxu[k].cwiseProduct(rs.gxu[k]) - rcxu[k]).cwiseQuotient(it.txu[k]);
                scatter_add(rhs_x[k], mk.xl[k], bxl, +1.0);
                scatter_add(rhs_x[k], mk.xu[k], bxu, -1.0);
            }
            if (k < N) {
                rhs_u[k] = -rs.su[k];
                if (m > 0) {
                    rhs_u[k].noalias() -= p.D[k].transpose() * beta1[k];
                    rhs_u[k].noalias() +=
                        p.D[k].transpose() *
                        (f.w1[k].cwiseQuotient(f.hss[k]).cwiseProduct(rhs_s[k]));
                }
                const VectorXd bul = (it.zul[k].cwiseProduct(rs.gul[k]) - rcul[k]).cwiseQuotient(it.tul[k]);
                const VectorXd buu = (it.zuu[k].cwiseProduct(rs.guu[k]) - rcuu[k]).cwiseQuotient(it.tuu[k]);
                scatter_add(rhs_u[k], mk.ul[k], bul, +1.0);
                scatter_add(rhs_u[k], mk.uu[k], buu, -1.0);
            }
        }

        // backward value recursion (q-hat = -rhs_x, r-hat = -rhs_u)
        pvec[N] = -rhs_x[N];
        for (int k = N - 1; k >= 0; --k) {
            const VectorXd rd = -rs.eq[k];
            const VectorXd tail = pvec[k + 1] + f.P[k + 1] * rd;
            const VectorXd h = -rhs_u[k] + p.B[k].transpose() * tail;
            kff[k] = -f.F[k].solve(h);
            if (k >= 1) pvec[k] = -rhs_x[k] + p.A[k].transpose() * tail + f.G[k] * kff[k];
        }
        // forward rollout
        d.x[0].setZero();
        for (int k = 0; k < N; ++k) {
            d.u[k] = f.K[k] * d.x[k] + kff[k];
            d.x[k + 1] = p.A[k] * d.x[k] + p.B[k] * d.u[k] - rs.eq[k];
            d.lam[k] = -(f.P[k + 1] * d.x[k + 1] + pvec[k + 1]);
        }
        // recover s, t, z directions
        for (int k = 0; k <= N; ++k) {
            const int m = p.rows(k);
            if (m > 0) {
                VectorXd cdx = p.C[k] * d.x[k];
                if (k < N) cdx += p.D[k] * d.u[k];
                d.s[k] = (rhs_s[k] + f.w1[k].cwiseProduct(cdx)).cwiseQuotient(f.hss[k]);
                d.t1[k] = -rs.g1[k] - (cdx - d.s[k]);
                d.z1[k] = f.w1[k].cwiseProduct(cdx - d.s[k]) + beta1[k];
                d.z2[k] = -(rc2[k] + it.z2[k].cwiseProduct(d.s[k])).cwiseQuotient(it.s[k]);
            } else {
                d.s[k].resize(0);
                d.t1[k].resize(0);
                d.z1[k].resize(0);
                d.z2[k].resize(0);
            }
            if (k >= 1) {
                const VectorXd dxl = gather(d.x[k], mk.xl[k]);
                const VectorXd dxu = gather(d.x[k], mk.xu[k]);
                d.txl[k] = -rs.gxl[k] + dxl;
                d.zxl[k] = -f.wxl[k].cwiseProduct(dxl) +
                           (it.zxl[k].cwiseProduct(rs.gxl[k]) - rcxl[k]).cwiseQuotient(it.txl[k]);
                d.txu[k] = -rs.gxu[k] - dxu;
                d.zxu[k] = f.wxu[k].cwiseProduct(dxu) +
                           (it.zxu[k].cwiseProduct(rs.gxu[k]) - rcxu[k]).cwiseQuotient(it.txu[k]);
            }
            if (k < N) {
                const VectorXd dul = gather(d.u[k], mk.ul[k]);
                const VectorXd duu = gather(d.u[k], mk.uu[k]);
                d.tul[k] = -rs.gul[k] + dul;
                d.zul[k] = -f.wul[k].cwiseProduct(dul) +
                           (it.zul[k].cwiseProduct(rs.gul[k]) - rcul[k]).cwiseQuotient(it.tul[k]);
                d.tuu[k] = -rs.guu[k] - duu;
                d.zuu[k] = f.wuu[k].cwiseProduct(duu) +
                           (it.zuu[k].cwiseProduct(rs.guu[k]) - rcuu[k]).cwiseQuotient(it.tuu[k]);
            }
        }
    };

    auto mu_value = [&]() {
        if (M == 0) return 0.0;
        double acc = 0.0;
        for (int k = 0; k <= N; ++k) {
            acc += it.z1[k].dot(it.t1[k]) + it.z2[k].dot(it.s[k]);
            if (k >= 1) acc += it.zxl[k].dot(it.txl[k]) + it.zxu[k].dot(it.txu[k]);
            if (k < N) acc += it.zul[k].dot(it.tul[k]) + it.zuu[k].dot(it.tuu[k]);
        }
        return acc / static_cast<double>(M);
    };

    auto primal_dual_steps = [&](const Direction& d) {
        double ap = 1.0, ad = 1.0;
        for (int k = 0; k <= N; ++k) {
            ap = std::min({ap, max_step(it.t1[k], d.t1[k]), max_step(it.s[k], d.s[k])});
            ad = std::min({ad, max_step(it.z1[k], d.z1[k]), max_step(it.z2[k], d.z2[k])});
            if (k >= 1) {
                ap = std::min({ap, max_step(it.txl[k], d.txl[k]), max_step(it.txu[k], d.txu[k])});
                ad = std::min({ad, max_step(it.zxl[k], d.zxl[k]), max_step(it.zxu[k], d.zxu[k])});
            }
            if (k < N) {
                ap = std::min({ap, max_step(it.tul[k], d.tul[k]), max_step(it.tuu[k], d.tuu[k])});
                ad = std::min({ad, max_step(it.zul[k], d.zul[k]), max_step(it.zuu[k], d.zuu[k])});
            }
        }
        return std::make_pair(ap, ad);
    };

    int iters_done = 0;
    bool converged = false;
    for (int iter = 0; iter <= settings_.max_iter; ++iter) {
        compute_residuals();

        // convergence check against the same first-principles norms the
        // caller sees
        double stat = 0.0, eq = 0.0, ineq = 0.0, comp = 0.0;
        for (int k = 0; k <= N; ++k) {
            const int m = p.rows(k);
            if (k >= 1) stat = std::max(stat, rs.sx[k].lpNorm<Eigen::Infinity>());
            if (k < N) stat = std::max(stat, rs.su[k].lpNorm<Eigen::Infinity>());
            if (m > 0) stat = std::max(stat, rs.ss[k].lpNorm<Eigen::Infinity>());
            if (k < N) eq = std::max(eq, rs.eq[k].lpNorm<Eigen::Infinity>());
            if (m > 0) {
                const VectorXd ghard = rs.g1[k] - it.t1[k];
                for (int i = 0; i < m; ++i) {
                    ineq = std::max(ineq, ghard[i]);
                    ineq = std::max(ineq, -it.s[k][i]);
                    comp = std::max(comp, std::abs(it.z1[k][i] * ghard[i]));
                    comp = std::max(comp, std::abs(it.z2[k][i] * it.s[k][i]));
                }
            }
            auto bound_terms = [&](const std::vector<int>& idx, const VectorXd& g_res,
                                   const VectorXd& t, const VectorXd& z) {
                for (size_t i = 0; i < idx.size(); ++i) {
                    const double g = g_res[i] - t[i];
                    ineq = std::max(ineq, g);
                    comp = std::max(comp, std::abs(z[i] * g));
                }
            };
            if (k >= 1) {
                bound_terms(mk.xl[k], rs.gxl[k], it.txl[k], it.zxl[k]);
                bound_terms(mk.xu[k], rs.gxu[k], it.txu[k], it.zxu[k]);
            }
            if (k < N) {
                bound_terms(mk.ul[k], rs.gul[k], it.tul[k], it.zul[k]);
                bound_terms(mk.uu[k], rs.guu[k], it.tuu[k], it.zuu[k]);
            }
        }
        if (settings_.trace)
            std::fprintf(stderr, "qp iter %2d: stat=%9.2e eq=%9.2e ineq=%9.2e comp=%9.2e\n",
                         iter, stat, eq, ineq, comp);
        if (std::max({stat, eq, ineq, comp}) <= settings_.tol) {
            converged = true;
            iters_done = iter;
            break;
        }
        if (iter == settings_.max_iter) {
            iters_done = iter;
            break;
        }

        if (!factorize()) {
            // numerical breakdown past the achievable accuracy; report the
            // best iterate honestly instead of guessing further
            iters_done = iter;
            break;
        }
        const double mu = mu_value();

        // affine-scaling predictor
        for (int k = 0; k <= N; ++k) {
            rc1[k] = it.z1[k].cwiseProduct(it.t1[k]);
            rc2[k] = it.z2[k].cwiseProduct(it.s[k]);
            if (k >= 1) {
                rcxl[k] = it.zxl[k].cwiseProduct(it.txl[k]);
                rcxu[k] = it.zxu[k].cwiseProduct(it.txu[k]);
            }
            if (k < N) {
                rcul[k] = it.zul[k].cwiseProduct(it.tul[k]);
                rcuu[k] = it.zuu[k].cwiseProduct(it.tuu[k]);
            }
        }
        solve_newton(dir_aff);

        double sigma = 0.0;
        if (M > 0) {
            const auto [ap, ad] = primal_dual_steps(dir_aff);
            double mu_aff = 0.0;
            for (int k = 0; k <= N; ++k) {
                mu_aff += (it.z1[k] + ad * dir_aff.z1[k]).dot(it.t1[k] + ap * dir_aff.t1[k]);
                mu_aff += (it.z2[k] + ad * dir_aff.z2[k]).dot(it.s[k] + ap * dir_aff.s[k]);
                if (k >= 1) {
                    mu_aff += (it.zxl[k] + ad * dir_aff.zxl[k]).dot(it.txl[k] + ap * dir_aff.txl[k]);
                    mu_aff += (it.zxu[k] + ad * dir_aff.zxu[k]).dot(it.txu[k] + ap * dir_aff.txu[k]);
                }
                if (k < N) {
                    mu_aff += (it.zul[k] + ad * dir_aff.zul[k]).dot(it.tul[k] + ap * dir_aff.tul[k]);
                    mu_aff += (it.zuu[k] + ad * dir_aff.zuu[k]).dot(it.tuu[k] + ap * dir_aff.tuu[k]);
                }
            }
            mu_aff /= static_cast<double>(M);
            sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
            sigma = std::clamp(sigma, 0.0, 1.0);
        }

        // centering + Mehrotra corrector; the floor keeps the barrier
        // weights finite once the achievable accuracy is reached
        const double target = std::max(sigma * mu, 1e-3 * settings_.tol);
        for (int k = 0; k <= N; ++k) {
            rc1[k] = it.z1[k].cwiseProduct(it.t1[k]) +
                     dir_aff.z1[k].cwiseProduct(dir_aff.t1[k]) -
                     VectorXd::Constant(p.rows(k), target);
            rc2[k] = it.z2[k].cwiseProduct(it.s[k]) +
                     dir_aff.z2[k].cwiseProduct(dir_aff.s[k]) -
                     VectorXd::Constant(p.rows(k), target);
            if (k >= 1) {
                rcxl[k] = it.zxl[k].cwiseProduct(it.txl[k]) +
                          dir_aff.zxl[k].cwiseProduct(dir_aff.txl[k]) -
                          VectorXd::Constant(it.txl[k].size(), target);
                rcxu[k] = it.zxu[k].cwiseProduct(it.txu[k]) +
                          dir_aff.zxu[k].cwiseProduct(dir_aff.txu[k]) -
                          VectorXd::Constant(it.txu[k].size(), target);
            }
            if (k < N) {
                rcul[k] = it.zul[k].cwiseProduct(it.tul[k]) +
                          dir_aff.zul[k].cwiseProduct(dir_aff.tul[k]) -
                          VectorXd::Constant(it.tul[k].size(), target);
                rcuu[k] = it.zuu[k].cwiseProduct(it.tuu[k]) +
                          dir_aff.zuu[k].cwiseProduct(dir_aff.tuu[k]) -
                          VectorXd::Constant(it.tuu[k].size(), target);
            }
        }
        solve_newton(dir);

        auto [ap, ad] = primal_dual_steps(dir);
        const double tau = std::max(kFractionToBoundary, 1.0 - 0.1 * mu);
        ap = std::min(1.0, tau * ap);
        ad = std::min(1.0, tau * ad);
        if (M == 0) ap = ad = 1.0;
        if (settings_.trace)
            std::fprintf(stderr, "           mu=%9.2e sigma=%6.3f ap=%6.4f ad=%6.4f\n", mu, sigma,
                         ap, ad);

        for (int k = 0; k <= N; ++k) {
            if (k >= 1) it.x[k] += ap * dir.x[k];
            if (k < N) {
                it.u[k] += ap * dir.u[k];
                it.lam[k] += ad * dir.lam[k];
            }
            it.s[k] += ap * dir.s[k];
            it.t1[k] += ap * dir.t1[k];
            it.z1[k] += ad * dir.z1[k];
            it.z2[k] += ad * dir.z2[k];
            if (k >= 1) {
                it.txl[k] += ap * dir.txl[k];
                it.zxl[k] += ad * dir.zxl[k];
                it.txu[k] += ap * dir.txu[k];
                it.zxu[k] += ad * dir.zxu[k];
            }
            if (k < N) {
                it.tul[k] += ap * dir.tul[k];
                it.zul[k] += ad * dir.zul[k];
                it.tuu[k] += ap * dir.tuu[k];
                it.zuu[k] += ad * dir.zuu[k];
            }
        }
        iters_done = iter + 1;
    }

    QpStatus status = QpStatus::max_iter;
    if (converged) {
        status = QpStatus::solved;
    } else {
        // soft rows keep the problem feasible; runaway multipliers with a
        // stuck primal residual indicate inconsistent hard constraints
        double zmax = 0.0, prim = 0.0;
        for (int k = 0; k <= N; ++k) {
            if (it.z1[k].size() > 0) zmax = std::max(zmax, it.z1[k].lpNorm<Eigen::Infinity>());
            if (k >= 1 && it.zxl[k].size() > 0) zmax = std::max(zmax, it.zxl[k].lpNorm<Eigen::Infinity>());
            if (k >= 1 && it.zxu[k].size() > 0) zmax = std::max(zmax, it.zxu[k].lpNorm<Eigen::Infinity>());
            if (k < N && it.zul[k].size() > 0) zmax = std::max(zmax, it.zul[k].lpNorm<Eigen::Infinity>());
            if (k < N && it.zuu[k].size() > 0) zmax = std::max(zmax, it.zuu[k].lpNorm<Eigen::Infinity>());
        }
        for (int k = 0; k < N; ++k) prim = std::max(prim, rs.eq[k].lpNorm<Eigen::Infinity>());
        if (zmax > 1e10 && prim > std::sqrt(settings_.tol)) status = QpStatus::infeasible_detected;
    }
    return snapshot(status, iters_done);
}

// ---------------------------------------------------------------------------
// Plain-text problem round trip. Format: a "lbmpcc-qp 1" magic line,
// "N nx nu", then per-stage blocks in fixed order, one matrix row per
// line, values space-separated (inf/-inf allowed for bounds).

namespace {

void put_vec(std::ostream& out, const VectorXd& v) {
    for (int i = 0; i < v.size(); ++i) out << (i ? " " : "") << io::format_double(v[i]);
    out << "\n";
}

void put_mat(std::ostream& out, const MatrixXd& m) {
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) out << (j ? " " : "") << io::format_double(m(i, j));
        out << "\n";
    }
}

// stream extraction of doubles rejects "inf"; parse tokens via strtod
double get_value(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("qp load: truncated data");
    return io::parse_double(tok, "qp load");
}

VectorXd get_vec(std::istream& in, int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = get_value(in);
    return v;
}

MatrixXd get_mat(std::istream& in, int rows, int cols) {
    MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = get_value(in);
    return m;
}

}  // namespace

void dump_problem(const QpProblem& p, std::ostream& out) {
    out << "lbmpcc-qp 1\n" << p.N << " " << p.nx << " " << p.nu << "\n";
    put_vec(out, p.x0);
    for (int k = 0; k <= p.N; ++k) {
        out << "stage " << k << " rows " << p.rows(k) << "\n";
        put_mat(out, p.Q[k]);
        put_vec(out, p.q[k]);
        put_vec(out, p.lbx[k]);
        put_vec(out, p.ubx[k]);
        put_mat(out, p.C[k]);
        put_mat(out, p.D[k]);
        put_vec(out, p.e[k]);
        put_vec(out, p.slack_quad[k]);
        put_vec(out, p.slack_lin[k]);
        if (k < p.N) {
            put_mat(out, p.A[k]);
            put_mat(out, p.B[k]);
            put_vec(out, p.c[k]);
            put_mat(out, p.R[k]);
            put_vec(out, p.r[k]);
            put_mat(out, p.S[k]);
            put_vec(out, p.lbu[k]);
            put_vec(out, p.ubu[k]);
        }
    }
}

QpProblem load_problem(std::istream& in) {
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "lbmpcc-qp" || version != 1)
        throw std::runtime_error("qp load: unrecognized header");
    int N = 0, nx = 0, nu = 0;
    in >> N >> nx >> nu;
    if (!in || N < 1 || nx < 1 || nu < 1) throw std::runtime_error("qp load: bad dimensions");
    QpProblem p = QpProblem::sized(N, nx, nu);
    p.x0 = get_vec(in, nx);
    for (int k = 0; k <= N; ++k) {
        std::string word;
        int kk = -1, m = -1;
        in >> word >> kk;
        in >> word >> m;
        if (!in || kk != k || m < 0) throw std::runtime_error("qp load: bad stage header");
        p.Q[k] = get_mat(in, nx, nx);
        p.q[k] = get_vec(in, nx);
        p.lbx[k] = get_vec(in, nx);
        p.ubx[k] = get_vec(in, nx);
        p.C[k] = get_mat(in, m, nx);
        p.D[k] = get_mat(in, m, nu);
        p.e[k] = get_vec(in, m);
        p.slack_quad[k] = get_vec(in, m);
        p.slack_lin[k] = get_vec(in, m);
        if (k < N) {
            p.A[k] = get_mat(in, nx, nx);
            p.B[k] = get_mat(in, nx, nu);
            p.c[k] = get_vec(in, nx);
            p.R[k] = get_mat(in, nu, nu);
            p.r[k] = get_vec(in, nu);
            p.S[k] = get_mat(in, nx, nu);
            p.lbu[k] = get_vec(in, nu);
            p.ubu[k] = get_vec(in, nu);
        }
    }
    return p;
}

}  // namespace lbmpcc::qp
