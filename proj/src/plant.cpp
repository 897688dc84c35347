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

#include "lbmpcc/plant.hpp"

#include <cmath>
#include <stdexcept>

namespace lbmpcc {

void PlantParams::validate(double controller_dt) const {
    vehicle.validate();
    tires.validate();
    if (!(substep_dt > 0.0)) throw std::invalid_argument("plant: substep_dt must be positive");
    const double ratio = controller_dt / substep_dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
        throw std::invalid_argument("plant: substep_dt must divide the controller period");
    if (lag_T < 0.0 || lag_delta < 0.0)
        throw std::invalid_argument("plant: actuator lags must be nonnegative");
    for (int i = 0; i < 3; ++i)
        if (noise_std[i] < 0.0) throw std::invalid_argument("plant: noise std must be nonnegative");
    for (double v : {tire_peak_scale, tire_stiffness_scale, drag_scale})
        if (!(v > 0.0)) throw std::invalid_argument("plant: scale factors must be positive");
    if (load_transfer < 0.0 || combined_slip < 0.0)
        throw std::invalid_argument("plant: load_transfer and combined_slip must be nonnegative");
}

PlantParams PlantParams::neutral(const VehicleParams& v, const TireParams& t) {
    PlantParams p;
    p.vehicle = v;
    p.tires = t;
    p.tire_peak_scale = 1.0;
    p.tire_stiffness_scale = 1.0;
    p.drag_scale = 1.0;
    p.load_transfer = 0.0;
    p.combined_slip = 0.0;
    p.lag_T = 0.0;
    p.lag_delta = 0.0;
    p.noise_std.setZero();
    return p;
}

namespace {

// Plant state layout for integration:
// [X, Y, phi, vx, vy, omega, T_act, delta_act]
using PlantVec = Eigen::Matrix<double, 8, 1>;

struct CmdRamp {
    double T0, dT, d0, ddelta, period;
    double T_at(double tau) const { return T0 + dT * (tau / period); }
    double delta_at(double tau) const { return d0 + ddelta * (tau / period); }
};

PlantVec plant_derivative(const PlantVec& s, double tau, const CmdRamp& cmd,
                          const PlantParams& pp) {
    const VehicleParams& p = pp.vehicle;
    const TireParams& t = pp.tires;
    const double vx = s[3], vy = s[4], omega = s[5];
    const double T_act = pp.lag_T > 0.0 ? s[6] : cmd.T_at(tau);
    const double delta_act = pp.lag_delta > 0.0 ? s[7] : cmd.delta_at(tau);

    const double vx_eff = std::max(vx, kVxFloor);
    const double alpha_f = delta_act - std::atan((vy + p.lf * omega) / vx_eff);
    const double alpha_r = std::atan((-vy + p.lr * omega) / vx_eff);

    const double Ffx = p.kappa * T_act / p.r_wheel - p.Cfr;
    const double Frx = (1.0 - p.kappa) * T_act / p.r_wheel - p.Crr;
    const double Cw_eff = pp.drag_scale * p.Cw;
    const double Fd = Cw_eff * vx * vx;

    // axle load shift with longitudinal acceleration (estimated from the
    // longitudinal force balance alone)
    const double ax_est = (Ffx + Frx - Fd) / p.m;
    const double shift = pp.load_transfer * ax_est / 9.81;
    const double scale_f = std::clamp(1.0 - shift, 0.2, 1.8);
    const double scale_r = std::clamp(1.0 + shift, 0.2, 1.8);

    const double Df_eff = t.Df * pp.tire_peak_scale * scale_f;
    const double Dr_eff = t.Dr * pp.tire_peak_scale * scale_r;
    const double Bf_eff = t.Bf * pp.tire_stiffness_scale;
    const double Br_eff = t.Br * pp.tire_stiffness_scale;

    double Ffy = Df_eff * std::sin(t.Cf * std::atan(Bf_eff * alpha_f));
    double Fry = Dr_eff * std::sin(t.Cr * std::atan(Br_eff * alpha_r));

    // combined-slip ellipse derating of the lateral force
    const double uf = pp.combined_slip * Ffx / Df_eff;
    const double ur = pp.combined_slip * Frx / Dr_eff;
    Ffy *= std::sqrt(std::max(0.0, 1.0 - std::min(1.0, uf * uf)));
    Fry *= std::sqrt(std::max(0.0, 1.0 - std::min(1.0, ur * ur)));

    const double cd = std::cos(delta_act), sd = std::sin(delta_act);
    PlantVec dx;
    dx[0] = vx * std::cos(s[2]) - vy * std::sin(s[2]);
    dx[1] = vx * std::sin(s[2]) + vy * std::cos(s[2]);
    dx[2] = omega;
    dx[3] = (Frx - Fd - Ffy * sd + Ffx * cd) / p.m + vy * omega;
    dx[4] = (Fry + Ffy * cd + Ffx * sd) / p.m - vx * omega;
    dx[5] = ((Ffy * cd + Ffx * sd) * p.lf - Fry * p.lr) / p.Iz;
    dx[6] = pp.lag_T > 0.0 ? (cmd.T_at(tau) - T_act) / pp.lag_T : cmd.dT / cmd.period;
    dx[7] = pp.lag_delta > 0.0 ? (cmd.delta_at(tau) - delta_act) / pp.lag_delta
                               : cmd.ddelta / cmd.period;
    return dx;
}

}  // namespace

PlantState plant_step(const PlantState& state, const ControlRate& cmd,
                      const PlantParams& plant, double dt) {
    plant.validate(dt);
    const int nsub = static_cast<int>(std::round(dt / plant.substep_dt));
    const double h = dt / nsub;
    const CmdRamp ramp{state.commanded.T, cmd.dT, state.commanded.delta, cmd.ddelta, dt};

    PlantVec s;
    s << state.commanded.X, state.commanded.Y, state.commanded.phi, state.commanded.vx,
        state.commanded.vy, state.commanded.omega, state.T_act, state.delta_act;

    double tau = 0.0;
    for (int i = 0; i < nsub; ++i) {
        const PlantVec k1 = plant_derivative(s, tau, ramp, plant);
        const PlantVec k2 = plant_derivative(s + 0.5 * h * k1, tau + 0.5 * h, ramp, plant);
        const PlantVec k3 = plant_derivative(s + 0.5 * h * k2, tau + 0.5 * h, ramp, plant);
        const PlantVec k4 = plant_derivative(s + h * k3, tau + h, ramp, plant);
        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        tau += h;
    }

    PlantState next;
    next.commanded.X = s[0];
    next.commanded.Y = s[1];
    next.commanded.phi = s[2];
    next.commanded.vx = s[3];
    next.commanded.vy = s[4];
    next.commanded.omega = s[5];
    next.commanded.T = state.commanded.T + cmd.dT;
    next.commanded.delta = state.commanded.delta + cmd.ddelta;
    next.T_act = plant.lag_T > 0.0 ? s[6] : next.commanded.T;
    next.delta_act = plant.lag_delta > 0.0 ? s[7] : next.commanded.delta;
    return next;
}

VehicleState observe(const PlantState& state, const PlantParams& plant, Rng& rng) {
    VehicleState obs = state.commanded;
    if (plant.noise_std[0] > 0.0) obs.vx += plant.noise_std[0] * rng.normal();
    if (plant.noise_std[1] > 0.0) obs.vy += plant.noise_std[1] * rng.normal();
    if (plant.noise_std[2] > 0.0) obs.omega += plant.noise_std[2] * rng.normal();
    return obs;
}

}  // namespace lbmpcc
