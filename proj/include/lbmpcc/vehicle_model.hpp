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
#include <string>

namespace lbmpcc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Mat82 = Eigen::Matrix<double, 8, 2>;

/// Below this longitudinal speed the slip-angle kinematics (which divide
/// by vx) are evaluated at the clamped floor value and flagged.
inline constexpr double kVxFloor = 0.5;  // [m/s]

/**
 * @brief Single-track vehicle state.
 *
 * Global position (X, Y) and yaw phi, body-frame velocities (vx, vy),
 * yaw rate omega, plus the two actuator integrator states: command
 * torque T and steering angle delta.
 */
struct VehicleState {
    double X = 0.0;      // global east position [m]
    double Y = 0.0;      // global north position [m]
    double phi = 0.0;    // yaw angle [rad]
    double vx = 0.0;     // longitudinal velocity [m/s]
    double vy = 0.0;     // lateral velocity [m/s]
    double omega = 0.0;  // yaw rate [rad/s]
    double T = 0.0;      // command torque [N·m]
    double delta = 0.0;  // steering angle [rad]

    Vec8 vector() const;
    static VehicleState from_vector(const Vec8& v);
    bool all_finite() const;
};

/// Per-step increments of the actuator states: T_{k+1} = T_k + dT,
/// delta_{k+1} = delta_k + ddelta. Held over one controller period.
struct ControlRate {
    double dT = 0.0;      // torque increment per step [N·m]
    double ddelta = 0.0;  // steering increment per step [rad]

    Vec2 vector() const { return {dT, ddelta}; }
    static ControlRate from_vector(const Vec2& v) { return {v[0], v[1]}; }
};

/// Chassis parameters treated as exactly known (calibrated) quantities.
struct VehicleParams {
    double m = 1300.0;    // mass [kg]
    double Iz = 1900.0;   // yaw inertia [kg·m²]
    double lf = 1.1;      // CoG to front axle [m]
    double lr = 1.45;     // CoG to rear axle [m]
    double Cw = 0.42;     // air drag coefficient, F_d = Cw·vx² [N·s²/m²]
    double kappa = 0.6;   // front torque split [-]
    double r_wheel = 0.31;  // rolling radius [m]
    double Cfr = 50.0;    // front rolling resistance [N]
    double Crr = 50.0;    // rear rolling resistance [N]

    void validate() const;  // throws std::invalid_argument on bad values
};

/// Simplified magic-formula coefficients per axle:
/// F_y = D·sin(C·arctan(B·alpha)).
struct TireParams {
    double Bf = 10.0, Cf = 1.9, Df = 6500.0;
    double Br = 11.0, Cr = 1.95, Dr = 6000.0;

    void validate() const;
};

/// Residual-model feature vector z = [alpha_f, alpha_r, T].
struct FeatureVector {
    double alpha_f = 0.0;  // front slip angle [rad]
    double alpha_r = 0.0;  // rear slip angle [rad]
    double T = 0.0;        // command torque [N·m]

    Vec3 vector() const { return {alpha_f, alpha_r, T}; }
    static FeatureVector from_vector(const Vec3& v) { return {v[0], v[1], v[2]}; }
};

struct SlipAngles {
    double front = 0.0;  // [rad]
    double rear = 0.0;   // [rad]
    bool vx_clamped = false;
};

/// Front/rear slip angles from the velocity kinematics. vx is clamped to
/// kVxFloor from below; the clamp is reported, never thrown.
SlipAngles slip_angles(const VehicleState& state, const VehicleParams& params);

/// Gradients of the slip angles in (vx, vy, omega, delta); the rear has
/// no steering dependence.
struct SlipAngleGradients {
    Eigen::Vector4d front = Eigen::Vector4d::Zero();
    Eigen::Vector4d rear = Eigen::Vector4d::Zero();
};

SlipAngleGradients slip_angle_gradients(const VehicleState& state,
                                        const VehicleParams& params);

/// dF/dalpha of the magic formula; at alpha = 0 this is B·C·D.
double magic_formula_slope(double B, double C, double D, double alpha);

/// Lateral axle forces from the magic formula. Odd in alpha.
std::pair<double, double> lateral_tire_forces(double alpha_f, double alpha_r,
                                              const TireParams& tires);

/// Longitudinal axle forces from the command torque minus rolling
/// resistance: F_fx = kappa·T/r − Cfr, F_rx = (1−kappa)·T/r − Crr.
std::pair<double, double> longitudinal_forces(double T, const VehicleParams& params);

/**
 * @brief Continuous-time right-hand side of the single-track model.
 *
 * The last two components are the per-step increments (dT, ddelta)
 * treated as held inputs over the step; see integrate_step for how they
 * are scaled during integration so that one step applies exactly one
 * increment.
 *
 * @throws std::domain_error naming the offending term when an
 *         intermediate quantity is non-finite.
 */
Vec8 nominal_derivative(const VehicleState& state, const ControlRate& rate,
                        const VehicleParams& params, const TireParams& tires);

/// Classical RK4 over dt with the rate inputs held constant. The actuator
/// states ramp linearly within the step and land exactly on
/// T + dT, delta + ddelta at the end of it.
VehicleState integrate_step(const VehicleState& state, const ControlRate& rate,
                            const VehicleParams& params, const TireParams& tires,
                            double dt);

struct DiscreteJacobians {
    Mat8 A;
    Mat82 B;
    Vec8 c;  // affine remainder: f(op) − A·x_op − B·u_op
};

/// First-order expansion of the RK4 step map at the operating point:
/// x_{k+1} ≈ A x_k + B u_k + c. Computed by forward sensitivity
/// propagation through the RK4 stages with analytic stage Jacobians.
DiscreteJacobians linearize_discretize(const VehicleState& op_state,
                                       const ControlRate& op_rate,
                                       const VehicleParams& params,
                                       const TireParams& tires, double dt);

/// Force-deviation-to-acceleration map for the velocity states.
/// simplified=false evaluates the full steering-rotation form consistent
/// with the dynamics; simplified=true drops the sin(delta) cross terms
/// and sets cos(delta)=1.
/// dF order: (dF_fx, dF_fy, dF_rx, dF_ry).
Vec3 force_deviation_to_state_error(const Eigen::Vector4d& dF, double delta,
                                    const VehicleParams& params, bool simplified);

/// z = [alpha_f, alpha_r, T] at the given state.
FeatureVector extract_features(const VehicleState& state, const VehicleParams& params);

/// Loads VehicleParams and TireParams from a flat "name = value" file.
/// Unknown keys and missing required keys are reported by name.
std::pair<VehicleParams, TireParams> load_vehicle_params(const std::string& path);

/// Writes the flat key-value parameter file (one name = value per line).
void save_vehicle_params(const std::string& path, const VehicleParams& params,
                         const TireParams& tires);

}  // namespace lbmpcc
