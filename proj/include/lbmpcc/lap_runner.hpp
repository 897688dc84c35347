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
#include <string>
#include <vector>

#include "lbmpcc/gp_residual.hpp"
#include "lbmpcc/mpcc.hpp"
#include "lbmpcc/plant.hpp"
#include "lbmpcc/track.hpp"

namespace lbmpcc {

/// One closed-loop step: the observation the controller acted on, the
/// command it issued, and the per-step diagnostics. The nominal-model
/// error columns refer to the transition into the NEXT record.
struct StepRecord {
    double t = 0.0;
    VehicleState state;       // observation at this step
    double theta = 0.0;       // projected track progress (wrapped)
    double vs = 0.0;          // controller progress velocity
    double dT = 0.0, ddelta = 0.0, dvs = 0.0;
    FeatureVector z;
    Vec3 gp_mean = Vec3::Zero();
    Vec3 gp_var = Vec3::Zero();
    double slack_max = 0.0;
    Vec3 e_nominal = Vec3::Zero();  // x_{k+1} - f(x_k, u_k), velocity rows
    int qp_status = 0;
    int qp_iterations = 0;
};

using StepLog = std::vector<StepRecord>;

struct ErrorStats {
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};

/// Per-lap summary in the shape of the experiment tables.
struct LapMetrics {
    bool completed = false;
    double lap_time_s = 0.0;
    double max_abs_ay_g = 0.0;
    double avg_speed_mps = 0.0;
    int dict_updates = 0;
    ErrorStats e_vy_nominal, e_omega_nominal;
    std::optional<ErrorStats> e_vy_residual, e_omega_residual;
};

struct LapRunConfig {
    bool learning = true;
    GpHyperparams hyp;
    double gamma_threshold = 1e-6;
    FeatureBounds feature_bounds;
    int max_consecutive_failures = 25;
    int max_steps = 200000;
};

struct LapResult {
    LapMetrics metrics;
    StepLog log;
};

/**
 * @brief Closed-loop lap: observe, control, advance the plant, and when
 * learning is on offer each step's (z, y) pair to the dictionary. The
 * model used by the controller stays fixed for the whole lap; refits
 * happen between laps.
 */
LapResult run_lap(MpccController& controller, PlantState& plant_state,
                  const PlantParams& plant, const Track& track, GpDataset& dataset,
                  const GpModel* model, const LapRunConfig& cfg, Rng& rng);

/// Model-error table row recomputed from a step log: mean +- std of the
/// per-step absolute deviations |x_{k+1} - f(x_k, u_k)| in vy and omega,
/// with and (if a model is given) without the residual correction.
struct ModelErrorRow {
    ErrorStats e_vy_nominal, e_omega_nominal;
    std::optional<ErrorStats> e_vy_residual, e_omega_residual;
};

ModelErrorRow model_error_stats(const StepLog& log, const GpModel* model,
                                const VehicleParams& params, const TireParams& tires,
                                double dt);

/// Step log CSV round trip (17-significant-digit values, byte-stable).
void save_step_log(const std::string& path, const StepLog& log);
StepLog load_step_log(const std::string& path);

}  // namespace lbmpcc
