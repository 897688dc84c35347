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

#include "lbmpcc/vehicle_model.hpp"

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "lbmpcc/io.hpp"

namespace lbmpcc {

Vec8 VehicleState::vector() const {
    Vec8 v;
    v << X, Y, phi, vx, vy, omega, T, delta;
    return v;
}

VehicleState VehicleState::from_vector(const Vec8& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

bool VehicleState::all_finite() const {
    return vector().allFinite();
}

void VehicleParams::validate() const {
    if (!(m > 0.0 && Iz > 0.0 && lf > 0.0 && lr > 0.0 && r_wheel > 0.0))
        throw std::invalid_argument("vehicle params: m, Iz, lf, lr, r_wheel must be positive");
    if (!(kappa >= 0.0 && kappa <= 1.0))
        throw std::invalid_argument("vehicle params: kappa must be in [0, 1]");
    if (!(Cw >= 0.0 && Cfr >= 0.0 && Crr >= 0.0))
        throw std::invalid_argument("vehicle params: Cw, Cfr, Crr must be nonnegative");
}

void TireParams::validate() const {
    for (double v : {Bf, Cf, Df, Br, Cr, Dr})
        if (!(v > 0.0)) throw std::invalid_argument("tire params: all coefficients must be positive");
    if (Cf > 2.0 || Cr > 2.0)
        throw std::invalid_argument("tire params: shape factor C must be in (0, 2]");
}

SlipAngles slip_angles(const VehicleState& state, const VehicleParams& params) {
    SlipAngles out;
    double vx = state.vx;
    if (vx < kVxFloor) {
        vx = kVxFloor;
        out.vx_clamped = true;
    }
    out.front = state.delta - std::atan((state.vy + params.lf * state.omega) / vx);
    out.rear = std::atan((-state.vy + params.lr * state.omega) / vx);
    return out;
}

SlipAngleGradients slip_angle_gradients(const VehicleState& s, const VehicleParams& p) {
    SlipAngleGradients g;
    double vx = s.vx;
    bool clamped = false;
    if (vx < kVxFloor) {
        vx = kVxFloor;
        clamped = true;
    }
    const double pf = (s.vy + p.lf * s.omega) / vx;
    const double qr = (-s.vy + p.lr * s.omega) / vx;
    const double df = 1.0 / (1.0 + pf * pf);
    const double dr = 1.0 / (1.0 + qr * qr);
    const double invvx = clamped ? 0.0 : 1.0 / vx;
    g.front << pf * invvx * df, -df / vx, -p.lf * df / vx, 1.0;
    g.rear << -qr * invvx * dr, -dr / vx, p.lr * dr / vx, 0.0;
    return g;
}

double magic_formula_slope(double B, double C, double D, double alpha) {
    const double u = B * alpha;
    return D * C * B * std::cos(C * std::atan(u)) / (1.0 + u * u);
}

std::pair<double, double> lateral_tire_forces(double alpha_f, double alpha_r,
                                              const TireParams& t) {
    const double Ffy = t.Df * std::sin(t.Cf * std::atan(t.Bf * alpha_f));
    const double Fry = t.Dr * std::sin(t.Cr * std::atan(t.Br * alpha_r));
    return {Ffy, Fry};
}

std::pair<double, double> longitudinal_forces(double T, const VehicleParams& p) {
    return {p.kappa * T / p.r_wheel - p.Cfr, (1.0 - p.kappa) * T / p.r_wheel - p.Crr};
}

namespace {

// Continuous RHS with the actuator rows scaled by rate_scale so callers
// can choose between the raw per-step rates (rate_scale = 1) and the
// per-second ramp used inside RK4 (rate_scale = 1/dt).
Vec8 derivative_impl(const VehicleState& s, const ControlRate& u,
                     const VehicleParams& p, const TireParams& t,
                     double rate_scale) {
    const SlipAngles a = slip_angles(s, p);
    const auto [Ffy, Fry] = lateral_tire_forces(a.front, a.rear, t);
    const auto [Ffx, Frx] = longitudinal_forces(s.T, p);
    const double Fd = p.Cw * s.vx * s.vx;
    const double cd = std::cos(s.delta);
    const double sd = std::sin(s.delta);

    Vec8 dx;
    dx[0] = s.vx * std::cos(s.phi) - s.vy * std::sin(s.phi);
    dx[1] = s.vx * std::sin(s.phi) + s.vy * std::cos(s.phi);
    dx[2] = s.omega;
    dx[3] = (Frx - Fd - Ffy * sd + Ffx * cd) / p.m + s.vy * s.omega;
    dx[4] = (Fry + Ffy * cd + Ffx * sd) / p.m - s.vx * s.omega;
    dx[5] = ((Ffy * cd + Ffx * sd) * p.lf - Fry * p.lr) / p.Iz;
    dx[6] = u.dT * rate_scale;
    dx[7] = u.ddelta * rate_scale;

    if (!dx.allFinite()) {
        const char* names[8] = {"Xdot", "Ydot", "phidot", "vxdot",
                                "vydot", "omegadot", "Tdot", "deltadot"};
        for (int i = 0; i < 8; ++i)
            if (!std::isfinite(dx[i]))
                throw std::domain_error(std::string("nominal derivative non-finite in ") + names[i]);
    }
    return dx;
}

}  // namespace

Vec8 nominal_derivative(const VehicleState& state, const ControlRate& rate,
                        const VehicleParams& params, const TireParams& tires) {
    return derivative_impl(state, rate, params, tires, 1.0);
}

VehicleState integrate_step(const VehicleState& state, const ControlRate& rate,
                            const VehicleParams& params, const TireParams& tires,
                            double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate_step: dt must be positive");
    const double rs = 1.0 / dt;
    const Vec8 x0 = state.vector();

    const Vec8 k1 = derivative_impl(state, rate, params, tires, rs);
    const Vec8 k2 = derivative_impl(VehicleState::from_vector(x0 + 0.5 * dt * k1), rate, params, tires, rs);
    const Vec8 k3 = derivative_impl(VehicleState::from_vector(x0 + 0.5 * dt * k2), rate, params, tires, rs);
    const Vec8 k4 = derivative_impl(VehicleState::from_vector(x0 + dt * k3), rate, params, tires, rs);

    return VehicleState::from_vector(x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

namespace {

struct StageJacobians {
    Mat8 Fx;
    Mat82 Fu;
};

// Analytic Jacobian of derivative_impl with rate_scale baked into Fu.
StageJacobians stage_jacobians(const VehicleState& s, const VehicleParams& p,
                               const TireParams& t, double rate_scale) {
    StageJacobians J;
    J.Fx.setZero();
    J.Fu.setZero();

    const SlipAngleGradients sg = slip_angle_gradients(s, p);
    const double daf_dvx = sg.front[0], daf_dvy = sg.front[1], daf_dom = sg.front[2];
    const double dar_dvx = sg.rear[0], dar_dvy = sg.rear[1], dar_dom = sg.rear[2];

    const SlipAngles a = slip_angles(s, p);
    const auto [Ffy, Fry] = lateral_tire_forces(a.front, a.rear, t);
    const auto [Ffx, Frx] = longitudinal_forces(s.T, p);
    (void)Frx;

    const double Gf = magic_formula_slope(t.Bf, t.Cf, t.Df, a.front);
    const double Gr = magic_formula_slope(t.Br, t.Cr, t.Dr, a.rear);

    const double cphi = std::cos(s.phi), sphi = std::sin(s.phi);
    const double cd = std::cos(s.delta), sd = std::sin(s.delta);

    // kinematic rows
    J.Fx(0, 2) = -s.vx * sphi - s.vy * cphi;
    J.Fx(0, 3) = cphi;
    J.Fx(0, 4) = -sphi;
    J.Fx(1, 2) = s.vx * cphi - s.vy * sphi;
    J.Fx(1, 3) = sphi;
    J.Fx(1, 4) = cphi;
    J.Fx(2, 5) = 1.0;

    // vxdot = (Frx − Cw vx² − Ffy sd + Ffx cd)/m + vy ω
    J.Fx(3, 3) = (-2.0 * p.Cw * s.vx - sd * Gf * daf_dvx) / p.m;
    J.Fx(3, 4) = -sd * Gf * daf_dvy / p.m + s.omega;
    J.Fx(3, 5) = -sd * Gf * daf_dom / p.m + s.vy;
    J.Fx(3, 6) = ((1.0 - p.kappa) / p.r_wheel + cd * p.kappa / p.r_wheel) / p.m;
    J.Fx(3, 7) = (-Gf * sd - Ffy * cd - Ffx * sd) / p.m;

    // vydot = (Fry + Ffy cd + Ffx sd)/m − vx ω
    J.Fx(4, 3) = (Gr * dar_dvx + cd * Gf * daf_dvx) / p.m - s.omega;
    J.Fx(4, 4) = (Gr * dar_dvy + cd * Gf * daf_dvy) / p.m;
    J.Fx(4, 5) = (Gr * dar_dom + cd * Gf * daf_dom) / p.m - s.vx;
    J.Fx(4, 6) = sd * p.kappa / (p.r_wheel * p.m);
    J.Fx(4, 7) = (cd * Gf - Ffy * sd + Ffx * cd) / p.m;

    // omegadot = ((Ffy cd + Ffx sd) lf − Fry lr)/Iz
    J.Fx(5, 3) = (cd * Gf * daf_dvx * p.lf - Gr * dar_dvx * p.lr) / p.Iz;
    J.Fx(5, 4) = (cd * Gf * daf_dvy * p.lf - Gr * dar_dvy * p.lr) / p.Iz;
    J.Fx(5, 5) = (cd * Gf * daf_dom * p.lf - Gr * dar_dom * p.lr) / p.Iz;
    J.Fx(5, 6) = sd * p.kappa * p.lf / (p.r_wheel * p.Iz);
    J.Fx(5, 7) = ((cd * Gf - Ffy * sd + Ffx * cd) * p.lf) / p.Iz;

    J.Fu(6, 0) = rate_scale;
    J.Fu(7, 1) = rate_scale;
    return J;
}

}  // namespace

DiscreteJacobians linearize_discretize(const VehicleState& op_state,
                                       const ControlRate& op_rate,
                                       const VehicleParams& params,
                                       const TireParams& tires, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("linearize_discretize: dt must be positive");
    const double rs = 1.0 / dt;
    const Vec8 x0 = op_state.vector();

    // RK4 stage states
    const Vec8 k1 = derivative_impl(op_state, op_rate, params, tires, rs);
    const VehicleState s2 = VehicleState::from_vector(x0 + 0.5 * dt * k1);
    const Vec8 k2 = derivative_impl(s2, op_rate, params, tires, rs);
    const VehicleState s3 = VehicleState::from_vector(x0 + 0.5 * dt * k2);
    const Vec8 k3 = derivative_impl(s3, op_rate, params, tires, rs);
    const VehicleState s4 = VehicleState::from_vector(x0 + dt * k3);
    const Vec8 k4 = derivative_impl(s4, op_rate, params, tires, rs);
    const Vec8 xnext = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    // forward sensitivity through the stages
    const StageJacobians J1 = stage_jacobians(op_state, params, tires, rs);
    const StageJacobians J2 = stage_jacobians(s2, params, tires, rs);
    const StageJacobians J3 = stage_jacobians(s3, params, tires, rs);
    const StageJacobians J4 = stage_jacobians(s4, params, tires, rs);

    const Mat8 I = Mat8::Identity();
    const Mat8 K1x = J1.Fx;
    const Mat82 K1u = J1.Fu;
    const Mat8 K2x = J2.Fx * (I + 0.5 * dt * K1x);
    const Mat82 K2u = J2.Fx * (0.5 * dt * K1u) + J2.Fu;
    const Mat8 K3x = J3.Fx * (I + 0.5 * dt * K2x);
    const Mat82 K3u = J3.Fx * (0.5 * dt * K2u) + J3.Fu;
    const Mat8 K4x = J4.Fx * (I + dt * K3x);
    const Mat82 K4u = J4.Fx * (dt * K3u) + J4.Fu;

    DiscreteJacobians out;
    out.A = I + (dt / 6.0) * (K1x + 2.0 * K2x + 2.0 * K3x + K4x);
    out.B = (dt / 6.0) * (K1u + 2.0 * K2u + 2.0 * K3u + K4u);
    out.c = xnext - out.A * x0 - out.B * op_rate.vector();

    if (!out.A.allFinite() || !out.B.allFinite() || !out.c.allFinite())
        throw std::domain_error("linearize_discretize: non-finite Jacobian entries");
    return out;
}

Vec3 force_deviation_to_state_error(const Eigen::Vector4d& dF, double delta,
                                    const VehicleParams& p, bool simplified) {
    const double dFfx = dF[0], dFfy = dF[1], dFrx = dF[2], dFry = dF[3];
    Vec3 out;
    if (simplified) {
        out[0] = (dFrx + dFfx) / p.m;
        out[1] = (dFry + dFfy) / p.m;
        out[2] = (dFfy * p.lf - dFry * p.lr) / p.Iz;
    } else {
        const double cd = std::cos(delta), sd = std::sin(delta);
        out[0] = (cd * dFfx - sd * dFfy + dFrx) / p.m;
        out[1] = (sd * dFfx + cd * dFfy + dFry) / p.m;
        out[2] = ((sd * dFfx + cd * dFfy) * p.lf - dFry * p.lr) / p.Iz;
    }
    return out;
}

FeatureVector extract_features(const VehicleState& state, const VehicleParams& params) {
    const SlipAngles a = slip_angles(state, params);
    return {a.front, a.rear, state.T};
}

std::pair<VehicleParams, TireParams> load_vehicle_params(const std::string& path) {
    const auto kv = io::load_key_values(path);
    VehicleParams p;
    TireParams t;
    std::map<std::string, double*> fields = {
        {"m", &p.m},         {"Iz", &p.Iz},     {"lf", &p.lf},
        {"lr", &p.lr},       {"Cw", &p.Cw},     {"kappa", &p.kappa},
        {"r_wheel", &p.r_wheel}, {"Cfr", &p.Cfr}, {"Crr", &p.Crr},
        {"Bf", &t.Bf},       {"Cf", &t.Cf},     {"Df", &t.Df},
        {"Br", &t.Br},       {"Cr", &t.Cr},     {"Dr", &t.Dr}};
    std::set<std::string> seen;
    for (const auto& [key, value] : kv) {
        auto it = fields.find(key);
        if (it == fields.end())
            throw std::runtime_error(path + ": unknown vehicle parameter '" + key + "'");
        *it->second = io::parse_double(value, path + ": " + key);
        seen.insert(key);
    }
    for (const auto& [key, ptr] : fields)
        if (!seen.count(key))
            throw std::runtime_error(path + ": missing vehicle parameter '" + key + "'");
    p.validate();
    t.validate();
    return {p, t};
}

void save_vehicle_params(const std::string& path, const VehicleParams& p,
                         const TireParams& t) {
    std::string text;
    auto emit = [&](const char* k, double v) {
        text += std::string(k) + " = " + io::format_double(v) + "\n";
    };
    emit("m", p.m);
    emit("Iz", p.Iz);
    emit("lf", p.lf);
    emit("lr", p.lr);
    emit("Cw", p.Cw);
    emit("kappa", p.kappa);
    emit("r_wheel", p.r_wheel);
    emit("Cfr", p.Cfr);
    emit("Crr", p.Crr);
    emit("Bf", t.Bf);
    emit("Cf", t.Cf);
    emit("Df", t.Df);
    emit("Br", t.Br);
    emit("Cr", t.Cr);
    emit("Dr", t.Dr);
    io::write_file_atomic(path, text);
}

}  // namespace lbmpcc
