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

#include "lbmpcc/mpcc.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace lbmpcc {

namespace {

constexpr int kRowsPerStage = 11;
constexpr double kThetaFdStep = 1e-3;  // [m]

}  // namespace

// The QP is posed in scaled deviation variables so every direction is
// O(1); raw torque (~1e3 N*m) against raw steering (~1e-2 rad) is
// otherwise too ill-conditioned for a long Riccati recursion.
VecAug mpcc_state_scales() {
    VecAug s;
    s << 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 500.0, 0.1, 1.0, 1.0;
    return s;
}

VecIn mpcc_input_scales() { return VecIn{200.0, 0.02, 1.0}; }

namespace {

double wrap_to_pi(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

VehicleState vehicle_part(const VecAug& x) {
    return VehicleState::from_vector(x.head<8>());
}

ControlRate rate_part(const VecIn& u) {
    return {u[0], u[1]};
}

}  // namespace

void MpccConfig::validate() const {
    if (N < 2) throw std::invalid_argument("mpcc config: N must be >= 2");
    if (!(dt > 0.0)) throw std::invalid_argument("mpcc config: dt must be positive");
    if (q_lag < 0.0 || q_contour < 0.0)
        throw std::invalid_argument("mpcc config: contouring weights must be nonnegative");
    if (!(q_progress > 0.0))
        throw std::invalid_argument("mpcc config: q_progress must be positive");
    if (Rx.minCoeff() < 0.0 || !(Ru.minCoeff() > 0.0))
        throw std::invalid_argument("mpcc config: Rx must be nonnegative, Ru positive");
    for (int i = 0; i < kNxAug; ++i)
        if (x_min[i] > x_max[i]) throw std::invalid_argument("mpcc config: x_min > x_max");
    for (int i = 0; i < kNuAug; ++i)
        if (u_min[i] > u_max[i]) throw std::invalid_argument("mpcc config: u_min > u_max");
    if (!(half_width > 0.0)) throw std::invalid_argument("mpcc config: half_width must be positive");
    if (!(speed_limit > 0.0)) throw std::invalid_argument("mpcc config: speed_limit must be positive");
    if (slack_quad < 0.0 || slack_lin < 0.0 || slack_quad + slack_lin <= 0.0)
        throw std::invalid_argument("mpcc config: slack weights invalid");
    if (x_min[kIdxVs] < 0.0)
        throw std::invalid_argument("mpcc config: progress velocity lower bound must be >= 0");
}

void gp_disturbance_horizon(const GpModel* model, const WarmStart& warm,
                            const VehicleParams& params,
                            std::vector<Vec3>& mean, std::vector<Vec3>& variance) {
    const size_t n = warm.inputs.size();
    mean.assign(n, Vec3::Zero());
    variance.assign(n, Vec3::Zero());
    if (!model) return;
    for (size_t k = 0; k < n; ++k) {
        const FeatureVector z = extract_features(vehicle_part(warm.states[k]), params);
        const GpPrediction pred = model->predict(z.vector());
        mean[k] = pred.mean;
        variance[k] = pred.variance;
    }
}

qp::QpProblem build_problem(const WarmStart& warm, const Track& track,
                            const GpModel* model, const VehicleParams& params,
                            const TireParams& tires, const MpccConfig& cfg,
                            std::vector<Vec3>* gp_mean_out, std::vector<Vec3>* gp_var_out) {
    cfg.validate();
    const int N = cfg.N;
    if (static_cast<int>(warm.states.size()) != N + 1 || static_cast<int>(warm.inputs.size()) != N)
        throw std::invalid_argument("build_problem: warm start sized inconsistently with config");

    std::vector<Vec3> gp_mean, gp_var;
    gp_disturbance_horizon(model, warm, params, gp_mean, gp_var);
    if (gp_mean_out) *gp_mean_out = gp_mean;
    if (gp_var_out) *gp_var_out = gp_var;

    qp::QpProblem p = qp::QpProblem::sized(N, kNxAug, kNuAug);
    p.x0.setZero();  // deviation coordinates: warm.states[0] is the measurement

    for (int k = 0; k < N; ++k) {
        const VehicleState xw = vehicle_part(warm.states[k]);
        const ControlRate uw = rate_part(warm.inputs[k]);
        if (!(xw.vx > 0.0))
            throw std::invalid_argument("build_problem: warm state with nonpositive vx");
        const DiscreteJacobians lin = linearize_discretize(xw, uw, params, tires, cfg.dt);

        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(kNxAug, kNxAug);
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(kNxAug, kNuAug);
        A.topLeftCorner<8, 8>() = lin.A;
        A(kIdxTheta, kIdxTheta) = 1.0;
        A(kIdxTheta, kIdxVs) = cfg.dt;
        A(kIdxVs, kIdxVs) = 1.0;
        B.topLeftCorner<8, 2>() = lin.B;
        B(kIdxVs, 2) = 1.0;

        // nonlinear prediction of the warm pair, with the zero-order GP
        // term entering the velocity rows
        VecAug fw;
        fw.head<8>() = integrate_step(xw, uw, params, tires, cfg.dt).vector();
        fw.head<8>() += ResidualMap::Bd() * gp_mean[k];
        fw[kIdxTheta] = warm.states[k][kIdxTheta] + cfg.dt * warm.states[k][kIdxVs];
        fw[kIdxVs] = warm.states[k][kIdxVs] + warm.inputs[k][2];

        p.A[k] = A;
        p.B[k] = B;
        p.c[k] = fw - warm.states[k + 1];

        p.R[k] = (2.0 * cfg.Ru).asDiagonal();
        p.r[k] = 2.0 * cfg.Ru.cwiseProduct(warm.inputs[k]);
        p.lbu[k] = cfg.u_min - warm.inputs[k];
        p.ubu[k] = cfg.u_max - warm.inputs[k];
    }

    const double ellipse_f_cap = std::pow(cfg.feature_bounds.p_ellipse * tires.Df, 2);
    const double ellipse_r_cap = std::pow(cfg.feature_bounds.p_ellipse * tires.Dr, 2);
    const double track_scale = 1.0 / std::max(1.0, 2.0 * cfg.half_width);
    const double speed_scale = 0.1;

    for (int k = 1; k <= N; ++k) {
        const VecAug& xwa = warm.states[k];
        const VehicleState xw = vehicle_part(xwa);

        // cost: contouring (Gauss-Newton), state regularization, progress
        Eigen::MatrixXd Q = (2.0 * cfg.Rx).asDiagonal();
        Eigen::VectorXd q = 2.0 * cfg.Rx.cwiseProduct(xwa);
        const auto lin = track.linearize_errors(xwa[0], xwa[1], xwa[kIdxTheta]);
        const Eigen::Vector3d Jl(lin.del_dX, lin.del_dY, lin.del_dtheta);
        const Eigen::Vector3d Jc(lin.dec_dX, lin.dec_dY, lin.dec_dtheta);
        const Eigen::Matrix3d Gc =
            2.0 * (cfg.q_lag * Jl * Jl.transpose() + cfg.q_contour * Jc * Jc.transpose());
        const Eigen::Vector3d gc = 2.0 * (cfg.q_lag * lin.e_l * Jl + cfg.q_contour * lin.e_c * Jc);
        const int map3[3] = {0, 1, kIdxTheta};
        for (int a = 0; a < 3; ++a) {
            q[map3[a]] += gc[a];
            for (int b = 0; b < 3; ++b) Q(map3[a], map3[b]) += Gc(a, b);
        }
        q[kIdxVs] -= cfg.q_progress;
        p.Q[k] = Q;
        p.q[k] = q;

        p.lbx[k] = cfg.x_min - xwa;
        p.ubx[k] = cfg.x_max - xwa;

        // softened rows
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(kRowsPerStage, kNxAug);
        Eigen::VectorXd e(kRowsPerStage);

        // track corridor, linearized quadratic distance
        const CenterlinePoint cq = track.query(xwa[kIdxTheta]);
        const CenterlinePoint cqp = track.query(xwa[kIdxTheta] + kThetaFdStep);
        const CenterlinePoint cqm = track.query(xwa[kIdxTheta] - kThetaFdStep);
        const double dXc = (cqp.Xc - cqm.Xc) / (2.0 * kThetaFdStep);
        const double dYc = (cqp.Yc - cqm.Yc) / (2.0 * kThetaFdStep);
        const double rx = xwa[0] - cq.Xc, ry = xwa[1] - cq.Yc;
        C(0, 0) = track_scale * 2.0 * rx;
        C(0, 1) = track_scale * 2.0 * ry;
        C(0, kIdxTheta) = track_scale * (-2.0) * (rx * dXc + ry * dYc);
        e[0] = track_scale * (cfg.half_width * cfg.half_width - rx * rx - ry * ry);

        // axle force ellipses through the tire maps
        const SlipAngles sa = slip_angles(xw, params);
        const SlipAngleGradients sg = slip_angle_gradients(xw, params);
        const auto [Ffy, Fry] = lateral_tire_forces(sa.front, sa.rear, tires);
        const auto [Ffx, Frx] = longitudinal_forces(xw.T, params);
        const double Gf = magic_formula_slope(tires.Bf, tires.Cf, tires.Df, sa.front);
        const double Gr = magic_formula_slope(tires.Br, tires.Cr, tires.Dr, sa.rear);
        const double pl2 = cfg.feature_bounds.p_long * cfg.feature_bounds.p_long;

        const double hf = pl2 * Ffx * Ffx + Ffy * Ffy - ellipse_f_cap;
        const int vel_idx[4] = {3, 4, 5, 7};  // vx, vy, omega, delta
        for (int a = 0; a < 4; ++a) C(1, vel_idx[a]) = 2.0 * Ffy * Gf * sg.front[a] / ellipse_f_cap;
        C(1, 6) = 2.0 * pl2 * Ffx * params.kappa / params.r_wheel / ellipse_f_cap;
        e[1] = -hf / ellipse_f_cap;

        const double hr = pl2 * Frx * Frx + Fry * Fry - ellipse_r_cap;
        for (int a = 0; a < 4; ++a) C(2, vel_idx[a]) = 2.0 * Fry * Gr * sg.rear[a] / ellipse_r_cap;
        C(2, 6) = 2.0 * pl2 * Frx * (1.0 - params.kappa) / params.r_wheel / ellipse_r_cap;
        e[2] = -hr / ellipse_r_cap;

        // slip-angle box and front/rear difference
        const double a_scale = 1.0 / cfg.feature_bounds.alpha_max;
        for (int a = 0; a < 4; ++a) {
            C(3, vel_idx[a]) = a_scale * sg.front[a];
            C(4, vel_idx[a]) = -a_scale * sg.front[a];
            C(5, vel_idx[a]) = a_scale * sg.rear[a];
            C(6, vel_idx[a]) = -a_scale * sg.rear[a];
        }
        e[3] = a_scale * (cfg.feature_bounds.alpha_max - sa.front);
        e[4] = a_scale * (cfg.feature_bounds.alpha_max + sa.front);
        e[5] = a_scale * (cfg.feature_bounds.alpha_max - sa.rear);
        e[6] = a_scale * (cfg.feature_bounds.alpha_max + sa.rear);

        const double d_scale = 1.0 / cfg.feature_bounds.dalpha_max;
        for (int a = 0; a < 4; ++a) {
            C(7, vel_idx[a]) = d_scale * (sg.front[a] - sg.rear[a]);
            C(8, vel_idx[a]) = -d_scale * (sg.front[a] - sg.rear[a]);
        }
        e[7] = d_scale * (cfg.feature_bounds.dalpha_max - (sa.front - sa.rear));
        e[8] = d_scale * (cfg.feature_bounds.dalpha_max + (sa.front - sa.rear));

        // soft speed envelope
        C(9, 3) = speed_scale;
        e[9] = speed_scale * (cfg.speed_limit - xw.vx);
        C(10, 3) = -speed_scale;
        e[10] = speed_scale * (xw.vx - cfg.vx_min_soft);

        p.C[k] = C;
        p.D[k] = Eigen::MatrixXd::Zero(kRowsPerStage, kNuAug);
        p.e[k] = e;
        p.slack_quad[k] = Eigen::VectorXd::Constant(kRowsPerStage, cfg.slack_quad);
        p.slack_lin[k] = Eigen::VectorXd::Constant(kRowsPerStage, cfg.slack_lin);
    }

    // change of variables into scaled deviations
    const VecAug sx = mpcc_state_scales();
    const VecIn su = mpcc_input_scales();
    const Eigen::VectorXd sxv = sx, suv = su;
    for (int k = 0; k <= N; ++k) {
        p.Q[k] = sxv.asDiagonal() * p.Q[k] * sxv.asDiagonal();
        p.Q[k].diagonal().array() += 1e-8;  // keeps the recursion PSD under roundoff
        p.q[k] = p.q[k].cwiseProduct(sxv);
        p.lbx[k] = p.lbx[k].cwiseQuotient(sxv);
        p.ubx[k] = p.ubx[k].cwiseQuotient(sxv);
        if (p.rows(k) > 0) p.C[k] = p.C[k] * sxv.asDiagonal();
        if (k < N) {
            p.A[k] = sxv.cwiseInverse().asDiagonal() * p.A[k] * sxv.asDiagonal();
            p.B[k] = sxv.cwiseInverse().asDiagonal() * p.B[k] * suv.asDiagonal();
            p.c[k] = p.c[k].cwiseQuotient(sxv);
            p.R[k] = suv.asDiagonal() * p.R[k] * suv.asDiagonal();
            p.r[k] = p.r[k].cwiseProduct(suv);
            p.lbu[k] = p.lbu[k].cwiseQuotient(suv);
            p.ubu[k] = p.ubu[k].cwiseQuotient(suv);
        }
    }
    return p;
}

MpccController::MpccController(MpccConfig config, Track track, VehicleParams params,
                               TireParams tires)
    : config_(std::move(config)),
      track_(std::move(track)),
      params_(params),
      tires_(tires),
      solver_(qp::QpSolver::Settings{config_.qp_max_iter, config_.qp_tol}) {
    config_.validate();
    params_.validate();
    tires_.validate();
}

void MpccController::initialize(const VehicleState& measurement) {
    const int N = config_.N;
    const double dt = config_.dt;
    const double theta0 = track_.project(measurement.X, measurement.Y, -1.0);
    const double vs0 = std::clamp(measurement.vx, 1.0, config_.x_max[kIdxVs]);
    const double T_bal =
        params_.r_wheel * (params_.Cw * vs0 * vs0 + params_.Cfr + params_.Crr);

    warm_.states.assign(N + 1, VecAug::Zero());
    warm_.inputs.assign(N, VecIn::Zero());

    const double phi_offset =
        measurement.phi - track_.query(theta0).Phic;
    const double branch = 2.0 * M_PI * std::round(phi_offset / (2.0 * M_PI));

    for (int k = 0; k <= N; ++k) {
        const double th = theta0 + k * dt * vs0;
        const CenterlinePoint cq = track_.query(th);
        const double curv =
            wrap_to_pi(track_.query(th + kThetaFdStep).Phic - track_.query(th - kThetaFdStep).Phic) /
            (2.0 * kThetaFdStep);
        VecAug x;
        x << cq.Xc, cq.Yc, cq.Phic + branch, vs0, 0.0, curv * vs0, T_bal,
            std::atan((params_.lf + params_.lr) * curv), th, vs0;
        warm_.states[k] = x;
    }
    warm_.states[0].head<8>() = measurement.vector();
    warm_.states[0][kIdxTheta] = theta0;
    warm_.states[0][kIdxVs] = vs0;

    prev_qp_ = qp::QpSolution{};
    have_prev_qp_ = false;
    last_command_ = ControlRate{};
    initialized_ = true;
}

ProgressState MpccController::progress() const {
    if (!initialized_) return {};
    return {track_.wrap(warm_.states[0][kIdxTheta]), warm_.states[0][kIdxVs]};
}

ControlRate MpccController::step(const VehicleState& measurement, const GpModel* model,
                                 ControllerDiagnostics* diagnostics) {
    const auto t_start = std::chrono::steady_clock::now();
    if (!initialized_) initialize(measurement);
    const int N = config_.N;

    ControllerDiagnostics diag;

    // refresh the stage-0 embedding
    warm_.states[0].head<8>() = measurement.vector();
    double theta0 = warm_.states[0][kIdxTheta];
    const auto [e_l, e_c] = track_.contouring_errors(measurement.X, measurement.Y, theta0);
    (void)e_c;
    if (std::abs(e_l) > config_.reprojection_lag) {
        const double proj = track_.project(measurement.X, measurement.Y, track_.wrap(theta0));
        // keep the unwrapped branch of the running theta
        theta0 = proj + track_.theta_max() * std::round((theta0 - proj) / track_.theta_max());
        warm_.states[0][kIdxTheta] = theta0;
        diag.reprojected = true;
    }

    qp::QpProblem problem = build_problem(warm_, track_, model, params_, tires_, config_,
                                          &diag.gp_mean, &diag.gp_variance);

    // Primal-only warm start: the shifted trajectory is the QP's origin
    // in deviation coordinates, so zero deviations are the guess. The
    // solver derives slack-informed centered pairs itself; carrying the
    // previous multipliers across a relinearization destabilizes it.
    qp::QpSolution warm_sol;
    const qp::QpSolution* warm_ptr = nullptr;
    if (have_prev_qp_) {
        warm_sol.x.assign(N + 1, Eigen::VectorXd::Zero(kNxAug));
        warm_sol.u.assign(N, Eigen::VectorXd::Zero(kNuAug));
        warm_ptr = &warm_sol;
    }

    qp::QpSolution sol = solver_.solve(problem, warm_ptr);
    if (sol.status != qp::QpStatus::solved && warm_ptr != nullptr) {
        // a cold start explores a different interior path; retry once
        const qp::QpSolution retry = solver_.solve(problem, nullptr);
        if (retry.status == qp::QpStatus::solved) sol = retry;
    }

    diag.status = sol.status;
    diag.kkt = sol.residuals;
    diag.qp_iterations = sol.iterations;
    for (int k = 1; k <= N; ++k) {
        if (sol.s[k].size() > 0)
            diag.slack_max = std::max(diag.slack_max, sol.s[k].lpNorm<Eigen::Infinity>());
    }
    double margin = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= N; ++k) {
        const Eigen::VectorXd m = problem.e[k] - problem.C[k] * sol.x[k];
        if (m.size() > 0) margin = std::min(margin, m.minCoeff());
    }
    diag.constraint_margin = std::isfinite(margin) ? margin : 0.0;

    ControlRate command = last_command_;
    if (sol.status == qp::QpStatus::solved) {
        const VecAug sx = mpcc_state_scales();
        const VecIn su = mpcc_input_scales();
        std::vector<VecAug> xs(N + 1);
        std::vector<VecIn> us(N);
        for (int k = 0; k <= N; ++k)
            xs[k] = warm_.states[k] + VecAug(sol.x[k].cwiseProduct(Eigen::VectorXd(sx)));
        for (int k = 0; k < N; ++k)
            us[k] = warm_.inputs[k] + VecIn(sol.u[k].cwiseProduct(Eigen::VectorXd(su)));

        command = {us[0][0], us[0][1]};
        last_command_ = command;
        diag.dvs = us[0][2];

        // shift one stage, duplicating the terminal stage
        for (int k = 0; k < N; ++k) warm_.states[k] = xs[k + 1];
        warm_.states[N] = xs[N];
        for (int k = 0; k + 1 < N; ++k) warm_.inputs[k] = us[k + 1];
        warm_.inputs[N - 1] = us[N - 1];

        // wrap the progress branch once the base stage passes the loop end
        if (track_.closed() && warm_.states[0][kIdxTheta] >= track_.theta_max()) {
            for (int k = 0; k <= N; ++k) warm_.states[k][kIdxTheta] -= track_.theta_max();
        }

        prev_qp_ = sol;
        have_prev_qp_ = true;
    } else {
        // hold the previous command, saturated so the actuator states
        // cannot integrate out of their hard boxes
        command.dT = std::clamp(command.dT, config_.x_min[6] - measurement.T,
                                config_.x_max[6] - measurement.T);
        command.ddelta = std::clamp(command.ddelta, config_.x_min[7] - measurement.delta,
                                    config_.x_max[7] - measurement.delta);
        last_command_ = command;
        diag.held_previous_command = true;
        // the stale horizon is unlikely to solve next step either; rebuild
        // the guess from the centerline at the next call
        initialized_ = false;
    }

    diag.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (diagnostics) *diagnostics = diag;
    return command;
}

}  // namespace lbmpcc
