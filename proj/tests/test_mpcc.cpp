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

#include <cmath>

#include "lbmpcc/mpcc.hpp"
#include "lbmpcc/plant.hpp"
#include "lbmpcc/rng.hpp"

using namespace lbmpcc;

namespace {

Track straight_track(double length = 3000.0) {
    return Track::from_points({0.0, length}, {0.0, 0.0});
}

MpccConfig test_config(int N = 25) {
    MpccConfig c;
    c.N = N;
    return c;
}

// dynamically consistent constant-speed warm start on a straight
WarmStart steady_warm(const MpccConfig& cfg, const VehicleParams& p, const TireParams& t,
                      double speed) {
    WarmStart w;
    VehicleState s;
    s.X = 100.0;  // on the +X straight the centerline satisfies Xc(theta) = theta
    s.vx = speed;
    s.T = p.r_wheel * (p.Cw * speed * speed + p.Cfr + p.Crr);
    w.states.resize(cfg.N + 1);
    w.inputs.assign(cfg.N, VecIn::Zero());
    VecAug x = VecAug::Zero();
    x.head<8>() = s.vector();
    x[kIdxTheta] = 100.0;
    x[kIdxVs] = speed;
    for (int k = 0; k <= cfg.N; ++k) {
        w.states[k] = x;
        VehicleState cur = VehicleState::from_vector(x.head<8>());
        const VehicleState nxt = integrate_step(cur, {}, p, t, cfg.dt);
        x.head<8>() = nxt.vector();
        x[kIdxTheta] += cfg.dt * speed;
    }
    return w;
}

}  // namespace

TEST_CASE("gp_disturbance_horizon: absent model gives zeros") {
    const MpccConfig cfg = test_config();
    const VehicleParams p;
    const TireParams t;
    const WarmStart w = steady_warm(cfg, p, t, 15.0);
    std::vector<Vec3> mean, var;
    gp_disturbance_horizon(nullptr, w, p, mean, var);
    REQUIRE(mean.size() == size_t(cfg.N));
    for (const auto& m : mean) CHECK(m.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& v : var) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gp_disturbance_horizon: constant trajectory gives constant disturbance") {
    const MpccConfig cfg = test_config();
    const VehicleParams p;
    const TireParams t;
    WarmStart w = steady_warm(cfg, p, t, 12.0);
    for (int k = 1; k <= cfg.N; ++k) w.states[k] = w.states[0];  // literally constant

    GpHyperparams hyp;
    GpDataset d;
    d.budget = 10;
    d.append(Vec3(0.01, 0.005, 300.0), Vec3(0.02, -0.03, 0.01));
    const GpModel model = fit(d, hyp);

    std::vector<Vec3> mean, var;
    gp_disturbance_horizon(&model, w, p, mean, var);
    for (size_t k = 1; k < mean.size(); ++k) {
        CHECK((mean[k] - mean[0]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((var[k] - var[0]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("gp_disturbance_horizon: interpolates a training point exactly") {
    const MpccConfig cfg = test_config(4);
    const VehicleParams p;
    const TireParams t;
    WarmStart w = steady_warm(cfg, p, t, 12.0);

    // place the warm stage exactly at the dictionary feature point
    const FeatureVector z0 = extract_features(VehicleState::from_vector(w.states[0].head<8>()), p);
    GpHyperparams hyp;
    hyp.sigma_n2 = Vec3(1e-12, 1e-12, 1e-12);
    GpDataset d;
    d.budget = 10;
    const Vec3 target(0.05, -0.04, 0.02);
    d.append(z0.vector(), target);
    const GpModel model = fit(d, hyp);

    std::vector<Vec3> mean, var;
    gp_disturbance_horizon(&model, w, p, mean, var);
    CHECK((mean[0] - target).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(var[0].maxCoeff() < 1e-8);
}

TEST_CASE("build_problem: pure regularization pins the zero-input trajectory") {
    MpccConfig cfg = test_config(10);
    cfg.q_lag = 0.0;
    cfg.q_contour = 0.0;
    cfg.q_progress = 1e-14;  // negligible progress pull
    cfg.Rx.setZero();
    const VehicleParams p;
    const TireParams t;
    const Track track = straight_track();
    const WarmStart w = steady_warm(cfg, p, t, 15.0);

    const qp::QpProblem prob = build_problem(w, track, nullptr, p, t, cfg);
    qp::QpSolver solver({cfg.qp_max_iter, cfg.qp_tol});
    const qp::QpSolution sol = solver.solve(prob);
    REQUIRE(sol.status == qp::QpStatus::solved);
    const VecIn su = mpcc_input_scales();
    for (int k = 0; k < cfg.N; ++k) {
        // zero inputs up to solver tolerance, measured against each
        // input's allowed range
        const Eigen::VectorXd raw = sol.u[k].cwiseProduct(Eigen::VectorXd(su));
        const Eigen::VectorXd rel = raw.cwiseQuotient(cfg.u_max.cwiseAbs());
        CHECK(rel.cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("build_problem: progress velocity pushes toward its bound") {
    MpccConfig cfg = test_config(30);
    const VehicleParams p;
    const TireParams t;
    const Track track = straight_track();
    const WarmStart w = steady_warm(cfg, p, t, 15.0);

    const qp::QpProblem prob = build_problem(w, track, nullptr, p, t, cfg);
    qp::QpSolver solver({cfg.qp_max_iter, cfg.qp_tol});
    const qp::QpSolution sol = solver.solve(prob);
    REQUIRE(sol.status == qp::QpStatus::solved);
    // the optimal progress velocity grows along the horizon
    const double vs_first = w.states[1][kIdxVs] + sol.x[1][kIdxVs];
    const double vs_last = w.states[cfg.N][kIdxVs] + sol.x[cfg.N][kIdxVs];
    CHECK(vs_last > vs_first + 0.5);
}

TEST_CASE("build_problem: slip-difference row matches finite differences") {
    MpccConfig cfg = test_config(6);
    const VehicleParams p;
    const TireParams t;
    const Track track = straight_track();
    WarmStart w = steady_warm(cfg, p, t, 18.0);
    // a dynamically interesting warm point
    w.states[2][4] = 0.4;   // vy
    w.states[2][5] = 0.15;  // omega
    w.states[2][7] = 0.03;  // delta

    const qp::QpProblem prob = build_problem(w, track, nullptr, p, t, cfg);
    const int row = 7;  // alpha_f - alpha_r <= dalpha_max
    const double scale = 1.0 / cfg.feature_bounds.dalpha_max;

    auto alpha_diff = [&](const VecAug& x) {
        const SlipAngles a = slip_angles(VehicleState::from_vector(x.head<8>()), p);
        return a.front - a.rear;
    };
    const double h = 1e-6;
    const VecAug sx = mpcc_state_scales();  // C columns carry the variable scaling
    for (int idx : {3, 4, 5, 7}) {  // vx, vy, omega, delta
        VecAug xp = w.states[2], xm = w.states[2];
        xp[idx] += h;
        xm[idx] -= h;
        const double fd = (alpha_diff(xp) - alpha_diff(xm)) / (2 * h);
        CHECK(prob.C[2](row, idx) == doctest::Approx(scale * fd * sx[idx]).epsilon(1e-5));
    }
    // rhs encodes the margin at the warm point
    CHECK(prob.e[2][row] ==
          doctest::Approx(scale * (cfg.feature_bounds.dalpha_max - alpha_diff(w.states[2])))
              .epsilon(1e-12));
}

TEST_CASE("build_problem: doubling the GP mean shifts the affine term by Bd times the mean") {
    MpccConfig cfg = test_config(8);
    const VehicleParams p;
    const TireParams t;
    const Track track = straight_track();
    const WarmStart w = steady_warm(cfg, p, t, 14.0);

    GpHyperparams hyp;
    hyp.sigma_n2 = Vec3(1e-12, 1e-12, 1e-12);
    GpDataset d1;
    d1.budget = 10;
    const FeatureVector z0 = extract_features(VehicleState::from_vector(w.states[0].head<8>()), p);
    d1.append(z0.vector(), Vec3(0.03, -0.02, 0.01));
    d1.append(z0.vector() + Vec3(0.01, 0.01, 100.0), Vec3(-0.01, 0.04, -0.02));
    GpDataset d2 = d1;
    d2.Y *= 2.0;  // the GP mean is linear in the targets
    const GpModel m1 = fit(d1, hyp);
    const GpModel m2 = fit(d2, hyp);

    std::vector<Vec3> mean1, var1;
    gp_disturbance_horizon(&m1, w, p, mean1, var1);

    const qp::QpProblem p1 = build_problem(w, track, &m1, p, t, cfg);
    const qp::QpProblem p2 = build_problem(w, track, &m2, p, t, cfg);
    const auto Bd = ResidualMap::Bd();
    for (int k = 0; k < cfg.N; ++k) {
        const Eigen::VectorXd diff = p2.c[k] - p1.c[k];
        Eigen::VectorXd expect = Eigen::VectorXd::Zero(kNxAug);
        expect.head<8>() = Bd * mean1[k];
        CHECK((diff - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("step: steady straight running keeps the steering at zero") {
    MpccConfig cfg = test_config(25);
    const VehicleParams p;
    const TireParams t;
    MpccController ctrl(cfg, straight_track(), p, t);

    VehicleState s;
    s.X = 50.0;
    s.vx = 20.0;
    s.T = p.r_wheel * (p.Cw * s.vx * s.vx + p.Cfr + p.Crr);
    ctrl.initialize(s);
    const ControlRate cmd = ctrl.step(s, nullptr);
    CHECK(std::abs(cmd.ddelta) < 1e-3);
}

TEST_CASE("step: identical controllers produce identical commands") {
    MpccConfig cfg = test_config(20);
    const VehicleParams p;
    const TireParams t;
    MpccController a(cfg, straight_track(), p, t);
    VehicleState s;
    s.X = 10.0;
    s.Y = 0.5;
    s.vx = 18.0;
    s.T = 300.0;
    a.initialize(s);
    MpccController b = a;
    ControllerDiagnostics da, db;
    const ControlRate ca = a.step(s, nullptr, &da);
    const ControlRate cb = b.step(s, nullptr, &db);
    CHECK(ca.dT == cb.dT);
    CHECK(ca.ddelta == cb.ddelta);
    CHECK(da.qp_iterations == db.qp_iterations);
}

TEST_CASE("step: lateral offset steers back toward the line") {
    MpccConfig cfg = test_config(25);
    const VehicleParams p;
    const TireParams t;
    MpccController ctrl(cfg, straight_track(), p, t);

    VehicleState s;
    s.X = 100.0;
    s.Y = 1.0;  // one meter left of the centerline, heading along it
    s.vx = 18.0;
    s.T = p.r_wheel * (p.Cw * s.vx * s.vx + p.Cfr + p.Crr);
    ctrl.initialize(s);
    ControllerDiagnostics diag;
    const ControlRate cmd = ctrl.step(s, nullptr, &diag);
    REQUIRE(diag.status == qp::QpStatus::solved);
    CHECK(cmd.ddelta < -1e-5);  // steer right, back to the line
}

TEST_CASE("step: perfect plant gives tiny one-step prediction error") {
    MpccConfig cfg = test_config(25);
    const VehicleParams vp;
    const TireParams tp;
    MpccController ctrl(cfg, straight_track(6000.0), vp, tp);

    PlantParams plant = PlantParams::neutral(vp, tp);
    plant.substep_dt = cfg.dt;
    VehicleState s;
    s.X = 20.0;
    s.vx = 29.5;  // just below the soft limit so the loop settles
    s.T = vp.r_wheel * (vp.Cw * s.vx * s.vx + vp.Cfr + vp.Crr);
    PlantState ps = PlantState::from_state(s);
    Rng rng(5);
    ctrl.initialize(s);

    double worst_tail = 0.0;
    VehicleState obs = observe(ps, plant, rng);
    for (int k = 0; k < 80; ++k) {
        const ControlRate cmd = ctrl.step(obs, nullptr);
        // stage-0 of the shifted warm start is the one-step-ahead prediction
        const VecAug pred = ctrl.warm_start().states[0];
        ps = plant_step(ps, cmd, plant, cfg.dt);
        obs = observe(ps, plant, rng);
        const double err = (pred.head<8>() - obs.vector()).cwiseAbs().maxCoeff();
        if (k > 40) worst_tail = std::max(worst_tail, err);
    }
    CHECK(worst_tail <= 1e-6);
}

TEST_CASE("step: solution progress is nondecreasing along the horizon") {
    MpccConfig cfg = test_config(30);
    const VehicleParams p;
    const TireParams t;
    MpccController ctrl(cfg, straight_track(), p, t);
    VehicleState s;
    s.X = 30.0;
    s.vx = 15.0;
    s.T = 400.0;
    ctrl.initialize(s);
    ctrl.step(s, nullptr);
    const auto& w = ctrl.warm_start();
    for (size_t k = 1; k < w.states.size(); ++k)
        CHECK(w.states[k][kIdxTheta] >= w.states[k - 1][kIdxTheta] - 1e-9);
}

TEST_CASE("step: large lag error triggers a theta re-projection") {
    MpccConfig cfg = test_config(20);
    const VehicleParams p;
    const TireParams t;
    MpccController ctrl(cfg, straight_track(), p, t);
    VehicleState s;
    s.X = 40.0;
    s.vx = 15.0;
    s.T = 300.0;
    ctrl.initialize(s);
    // teleport the vehicle 5 m ahead of the tracked progress
    VehicleState jumped = s;
    jumped.X += 5.0;
    ControllerDiagnostics diag;
    ctrl.step(jumped, nullptr, &diag);
    CHECK(diag.reprojected);
    CHECK(ctrl.progress().theta == doctest::Approx(45.0).epsilon(0.02));
}

TEST_CASE("step: hard input boxes are respected over a short run") {
    MpccConfig cfg = test_config(25);
    const VehicleParams vp;
    const TireParams tp;
    MpccController ctrl(cfg, straight_track(6000.0), vp, tp);
    PlantParams plant;  // mismatched defaults
    plant.vehicle = vp;
    plant.tires = tp;
    VehicleState s;
    s.X = 10.0;
    s.vx = 10.0;
    s.T = 200.0;
    PlantState ps = PlantState::from_state(s);
    Rng rng(9);
    ctrl.initialize(s);
    VehicleState obs = observe(ps, plant, rng);
    for (int k = 0; k < 60; ++k) {
        ControllerDiagnostics diag;
        const ControlRate cmd = ctrl.step(obs, nullptr, &diag);
        CHECK(cmd.dT >= cfg.u_min[0] - 1e-9);
        CHECK(cmd.dT <= cfg.u_max[0] + 1e-9);
        CHECK(cmd.ddelta >= cfg.u_min[1] - 1e-9);
        CHECK(cmd.ddelta <= cfg.u_max[1] + 1e-9);
        ps = plant_step(ps, cmd, plant, cfg.dt);
        obs = observe(ps, plant, rng);
    }
}
