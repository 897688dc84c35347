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

#include "lbmpcc/rng.hpp"
#include "lbmpcc/vehicle_model.hpp"

namespace lbmpcc {

/**
 * @brief Deliberately mismatched plant standing in for the real vehicle.
 *
 * Same single-track structure as the nominal model plus the effects the
 * nominal model leaves out: scaled tire peaks and stiffness, scaled
 * drag, longitudinal load transfer, combined-slip derating of lateral
 * force, and first-order actuator lags. With every knob at its neutral
 * value the plant reproduces the nominal integrator exactly.
 */
struct PlantParams {
    VehicleParams vehicle;
    TireParams tires;

    double tire_peak_scale = 0.85;       // scales D per axle
    double tire_stiffness_scale = 1.10;  // scales B per axle
    double drag_scale = 1.0;             // scales Cw
    double load_transfer = 0.15;         // axle-load shift per g of ax [-]
    double combined_slip = 1.0;          // lateral derating by |Fx|/D [-]
    double lag_T = 0.08;                 // torque actuator time constant [s]
    double lag_delta = 0.06;             // steering actuator time constant [s]
    Vec3 noise_std{0.0, 0.0, 0.0};       // observation noise on vx, vy, omega
    double substep_dt = 0.01;            // internal integration step [s]

    void validate(double controller_dt) const;

    static PlantParams neutral(const VehicleParams& v, const TireParams& t);
};

/// Full plant state: the commanded actuator integrators live in
/// `commanded` (what the controller believes), the lagged actuator
/// outputs drive the actual dynamics.
struct PlantState {
    VehicleState commanded;  // T, delta are the commanded integrators
    double T_act = 0.0;
    double delta_act = 0.0;

    static PlantState from_state(const VehicleState& s) {
        return {s, s.T, s.delta};
    }
};

/// Advances one controller period of length dt using RK4 substeps. The
/// commanded torque/steering ramp linearly across the period by the
/// per-step increments in cmd.
PlantState plant_step(const PlantState& state, const ControlRate& cmd,
                      const PlantParams& plant, double dt);

/// Sensor view of the plant: commanded actuator states, optionally
/// noisy velocity states. Noise only affects the returned observation.
VehicleState observe(const PlantState& state, const PlantParams& plant, Rng& rng);

}  // namespace lbmpcc
