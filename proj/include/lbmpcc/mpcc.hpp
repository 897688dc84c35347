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

#include <optional>
#include <vector>

#include "lbmpcc/gp_residual.hpp"
#include "lbmpcc/qp.hpp"
#include "lbmpcc/track.hpp"
#include "lbmpcc/vehicle_model.hpp"

namespace lbmpcc {

// Augmented state: the 8 vehicle states plus progress (theta, vs).
inline constexpr int kNxAug = 10;
inline constexpr int kNuAug = 3;  // (dT, ddelta, dvs)
inline constexpr int kIdxTheta = 8;
inline constexpr int kIdxVs = 9;

using VecAug = Eigen::Matrix<double, kNxAug, 1>;
using VecIn = Eigen::Matrix<double, kNuAug, 1>;

struct MpccConfig {
    int N = 80;
    double dt = 0.05;

    // contouring cost and progress reward
    double q_lag = 800.0;
    double q_contour = 30.0;
    double q_progress = 2.0;

    // quadratic regularization on states and input moves
    VecAug Rx = (VecAug() << 0, 0, 0, 0, 0.05, 0.1, 1e-7, 2.0, 0, 0.01).finished();
    VecIn Ru{1e-6, 20.0, 0.05};

    // hard boxes
    VecAug x_min =
        (VecAug() << -1e9, -1e9, -1e9, 0.5, -1e9, -1e9, -3000.0, -0.45, -1e9, 0.0).finished();
    VecAug x_max =
        (VecAug() << 1e9, 1e9, 1e9, 40.0, 1e9, 1e9, 2000.0, 0.45, 1e9, 40.0).finished();
    VecIn u_min{-400.0, -0.03, -2.0};
    VecIn u_max{400.0, 0.03, 2.0};

    // softened operating-envelope rows
    FeatureBounds feature_bounds;
    double half_width = 4.5;    // track radius R [m]
    double speed_limit = 30.0;  // soft vx ceiling [m/s]
    double vx_min_soft = 2.0;   // soft vx floor [m/s]
    double slack_quad = 2e3;
    double slack_lin = 2e3;

    int qp_max_iter = 40;
    double qp_tol = 1e-6;
    double reprojection_lag = 2.0;  // |e_l| that forces a theta re-projection [m]

    void validate() const;
};

/// Shifted trajectory guess carried between control steps.
struct WarmStart {
    std::vector<VecAug> states;  // N+1
    std::vector<VecIn> inputs;   // N
};

struct ControllerDiagnostics {
    qp::QpStatus status = qp::QpStatus::max_iter;
    qp::KktResiduals kkt;
    int qp_iterations = 0;
    double dvs = 0.0;                 // first-stage progress-velocity move
    double slack_max = 0.0;           // largest soft-constraint slack
    double constraint_margin = 0.0;   // smallest normalized margin across rows
    bool reprojected = false;
    bool held_previous_command = false;
    std::vector<Vec3> gp_mean;        // per stage 0..N-1
    std::vector<Vec3> gp_variance;
    double solve_seconds = 0.0;
};

/// GP residual evaluated along the warm-start stages (zero-order hold).
/// Without a model every stage is zero mean, zero variance.
void gp_disturbance_horizon(const GpModel* model, const WarmStart& warm,
                            const VehicleParams& params,
                            std::vector<Vec3>& mean, std::vector<Vec3>& variance);

/// Per-variable scales of the transcribed QP: the problem built by
/// build_problem is posed in deviations divided by these, so raw torque
/// and steering land at comparable magnitudes.
VecAug mpcc_state_scales();
VecIn mpcc_input_scales();

/// Transcribes one real-time iteration around the warm trajectory into a
/// structured QP in deviation variables (warm.states[0] is the
/// measurement embedding, so the QP's x0 is zero).
qp::QpProblem build_problem(const WarmStart& warm, const Track& track,
                            const GpModel* model, const VehicleParams& params,
                            const TireParams& tires, const MpccConfig& config,
                            std::vector<Vec3>* gp_mean_out = nullptr,
                            std::vector<Vec3>* gp_var_out = nullptr);

/**
 * @brief Receding-horizon contouring controller.
 *
 * Owns the warm start and the previous QP solution; step() runs one
 * linearize-transcribe-solve pass and shifts the horizon.
 */
class MpccController {
public:
    MpccController(MpccConfig config, Track track, VehicleParams params, TireParams tires);

    /// Projects the measurement onto the track and builds a
    /// constant-speed rollout along the centerline as the initial guess.
    void initialize(const VehicleState& measurement);

    bool initialized() const { return initialized_; }

    /// One control step. model may be null (pure nominal controller).
    ControlRate step(const VehicleState& measurement, const GpModel* model,
                     ControllerDiagnostics* diagnostics = nullptr);

    const WarmStart& warm_start() const { return warm_; }
    const MpccConfig& config() const { return config_; }
    const Track& track() const { return track_; }
    const VehicleParams& params() const { return params_; }
    const TireParams& tires() const { return tires_; }

    /// Progress state the controller currently assigns to the vehicle.
    ProgressState progress() const;

private:
    MpccConfig config_;
    Track track_;
    VehicleParams params_;
    TireParams tires_;
    qp::QpSolver solver_;

    WarmStart warm_;
    qp::QpSolution prev_qp_;
    bool have_prev_qp_ = false;
    ControlRate last_command_;
    bool initialized_ = false;
};

}  // namespace lbmpcc
