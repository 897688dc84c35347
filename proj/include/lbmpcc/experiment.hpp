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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lbmpcc/lap_runner.hpp"
#include "lbmpcc/mpcc.hpp"
#include "lbmpcc/plant.hpp"

namespace lbmpcc {

/**
 * @brief Everything a multi-lap experiment needs, loaded from one
 * sectioned key-value file ([paths], [controller], [gp], [plant],
 * [protocol]). Unknown sections or keys are hard errors.
 */
struct ExperimentConfig {
    // [paths]
    std::string track_csv;
    std::string vehicle_params;
    std::string out_dir = "out";

    // [controller]
    MpccConfig controller;

    // [gp]
    GpHyperparams hyp;
    int gp_budget = 100;
    double gamma_threshold_rel = 1e-3;  // threshold = rel * sigma_f2

    // [plant] (vehicle/tire base values come from the params file)
    PlantParams plant;

    // [protocol]
    int laps = 6;
    double initial_speed = 10.0;
    double speed_limit = 30.0;
    uint64_t seed = 1;
    bool learning = true;
    int max_consecutive_failures = 25;
    double track_half_width = 4.5;
    double resample_spacing = 0.5;

    double gamma_threshold() const { return gamma_threshold_rel * hyp.sigma_f2; }

    void validate() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& name);
ExperimentConfig load_config(const std::string& path);

/// Canonical text form: fixed section and key order, round-trip-exact
/// floating point values.
std::string serialize_config(const ExperimentConfig& cfg);

struct LapRow {
    int lap = 0;
    LapMetrics metrics;
    int dict_size = 0;
};

struct ExperimentResult {
    std::vector<LapRow> laps;
    double track_length_m = 0.0;
    bool all_completed = true;
};

/**
 * @brief The full protocol: lap 1 with the nominal controller collects
 * the initial dictionary, later laps run with the residual model and
 * refit between laps. Step logs, per-lap dataset snapshots, the final
 * dataset, and summary.json all land in out_dir.
 */
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool quiet,
                                bool write_outputs = true);

/// summary.json payload for a finished experiment.
std::string summary_json(const ExperimentConfig& cfg, const ExperimentResult& result);

/// Offline model-error table for a recorded log against any dictionary
/// snapshot (empty path = nominal model only).
ModelErrorRow replay_log(const ExperimentConfig& cfg, const std::string& log_path,
                         const std::string& dataset_path);

/// Plot-data exports: velocity vs arc length, GG diagram, XY trajectory,
/// feature-space scatter, and valid-region boundary samples.
void export_plot_data(const ExperimentConfig& cfg, const std::string& log_path,
                      const std::string& out_dir);

/// Boundary samples of the feature-space valid region; each returned
/// point is valid and sits on at least one constraint (within tol).
struct BoundarySample {
    FeatureVector z;
    FeatureConstraint active;
};

std::vector<BoundarySample> sample_valid_region_boundary(const VehicleParams& params,
                                                         const TireParams& tires,
                                                         const FeatureBounds& bounds,
                                                         int count = 400);

}  // namespace lbmpcc
