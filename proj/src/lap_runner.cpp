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

#include "lbmpcc/lap_runner.hpp"

#include <cmath>
#include <stdexcept>

#include "lbmpcc/io.hpp"

namespace lbmpcc {

namespace {

class RunningStats {
public:
    void add(double v) {
        ++n_;
        const double d = v - mean_;
        mean_ += d / n_;
        m2_ += d * (v - mean_);
    }
    ErrorStats finish() const {
        ErrorStats s;
        s.count = n_;
        s.mean = mean_;
        s.stddev = n_ > 1 ? std::sqrt(m2_ / (n_ - 1)) : 0.0;
        return s;
    }

private:
    int n_ = 0;
    double mean_ = 0.0, m2_ = 0.0;
};

}  // namespace

LapResult run_lap(MpccController& controller, PlantState& plant_state,
                  const PlantParams& plant, const Track& track, GpDataset& dataset,
                  const GpModel* model, const LapRunConfig& cfg, Rng& rng) {
    const double dt = controller.config().dt;
    const VehicleParams& params = controller.params();
    const TireParams& tires = controller.tires();

    LapResult out;
    out.log.reserve(4096);

    double prev_theta = -1.0;
    int consecutive_failures = 0;
    bool wrapped = false;
    double lap_time = 0.0;
    double max_ay = 0.0;
    int updates = 0;

    VehicleState obs = observe(plant_state, plant, rng);
    if (!controller.initialized()) controller.initialize(obs);

    for (int k = 0; k < cfg.max_steps && !wrapped; ++k) {
        const double theta_meas =
            track.project(obs.X, obs.Y, prev_theta < 0.0 ? -1.0 : prev_theta);

        ControllerDiagnostics diag;
        const ControlRate cmd = controller.step(obs, model, &diag);
        if (diag.held_previous_command) {
            if (++consecutive_failures > cfg.max_consecutive_failures) break;
        } else {
            consecutive_failures = 0;
        }

        StepRecord rec;
        rec.t = k * dt;
        rec.state = obs;
        rec.theta = theta_meas;
        rec.vs = controller.progress().vs;
        rec.dT = cmd.dT;
        rec.ddelta = cmd.ddelta;
        rec.dvs = diag.dvs;
        rec.z = extract_features(obs, params);
        if (!diag.gp_mean.empty()) {
            rec.gp_mean = diag.gp_mean.front();
            rec.gp_var = diag.gp_variance.front();
        }
        rec.slack_max = diag.slack_max;
        rec.qp_status = static_cast<int>(diag.status);
        rec.qp_iterations = diag.qp_iterations;

        // advance the plant one controller period
        plant_state = plant_step(plant_state, cmd, plant, dt);
        const VehicleState next_obs = observe(plant_state, plant, rng);

        rec.e_nominal = residual_target(obs, cmd, next_obs, params, tires, dt);
        out.log.push_back(rec);

        // lateral acceleration estimate from the observed transition
        const double ay = (next_obs.vy - obs.vy) / dt + obs.vx * obs.omega;
        max_ay = std::max(max_ay, std::abs(ay));

        if (cfg.learning) {
            const ValidityReport validity =
                is_valid_sample(rec.z, params, tires, cfg.feature_bounds);
            const InsertReport rep = maybe_insert(dataset, rec.z.vector(), rec.e_nominal,
                                                  cfg.hyp, cfg.gamma_threshold, validity);
            if (rep.accepted) ++updates;
        }

        // lap boundary: wrapped theta drops by more than half the track
        const double theta_next = track.project(next_obs.X, next_obs.Y, theta_meas);
        if (theta_meas - theta_next > 0.5 * track.theta_max()) {
            const double before = track.theta_max() - theta_meas;
            const double after = theta_next;
            const double frac = before + after > 0.0 ? before / (before + after) : 1.0;
            lap_time = (k + frac) * dt;
            wrapped = true;
        }
        prev_theta = theta_next;
        obs = next_obs;
    }

    // terminal record so that offline replays see the last transition
    StepRecord tail;
    tail.t = out.log.size() * dt;
    tail.state = obs;
    tail.theta = prev_theta < 0.0 ? 0.0 : prev_theta;
    tail.vs = controller.progress().vs;
    tail.z = extract_features(obs, params);
    out.log.push_back(tail);

    out.metrics.completed = wrapped;
    out.metrics.lap_time_s = wrapped ? lap_time : out.log.size() * dt;
    out.metrics.max_abs_ay_g = max_ay / 9.81;
    out.metrics.avg_speed_mps =
        out.metrics.lap_time_s > 0.0 ? track.theta_max() / out.metrics.lap_time_s : 0.0;
    out.metrics.dict_updates = updates;

    const ModelErrorRow row = model_error_stats(out.log, model, params, tires, dt);
    out.metrics.e_vy_nominal = row.e_vy_nominal;
    out.metrics.e_omega_nominal = row.e_omega_nominal;
    out.metrics.e_vy_residual = row.e_vy_residual;
    out.metrics.e_omega_residual = row.e_omega_residual;
    return out;
}

ModelErrorRow model_error_stats(const StepLog& log, const GpModel* model,
                                const VehicleParams& params, const TireParams& tires,
                                double dt) {
    if (log.size() < 2) throw std::invalid_argument("model_error_stats: empty step log");
    RunningStats vy_nom, om_nom, vy_gp, om_gp;
    for (size_t k = 0; k + 1 < log.size(); ++k) {
        const ControlRate u{log[k].dT, log[k].ddelta};
        const Vec3 e = residual_target(log[k].state, u, log[k + 1].state, params, tires, dt);
        vy_nom.add(std::abs(e[1]));
        om_nom.add(std::abs(e[2]));
        if (model) {
            const Vec3 mu = model->predict(log[k].z.vector()).mean;
            vy_gp.add(std::abs(e[1] - mu[1]));
            om_gp.add(std::abs(e[2] - mu[2]));
        }
    }
    ModelErrorRow row;
    row.e_vy_nominal = vy_nom.finish();
    row.e_omega_nominal = om_nom.finish();
    if (model) {
        row.e_vy_residual = vy_gp.finish();
        row.e_omega_residual = om_gp.finish();
    }
    return row;
}

namespace {

const char* kLogHeader =
    "t,X,Y,phi,vx,vy,omega,T,delta,theta,vs,dT,ddelta,dvs,alpha_f,alpha_r,z_T,"
    "gp_mean_vx,gp_mean_vy,gp_mean_omega,gp_var_vx,gp_var_vy,gp_var_omega,"
    "slack_max,e_vx,e_vy,e_omega,qp_status,qp_iterations";

}  // namespace

void save_step_log(const std::string& path, const StepLog& log) {
    std::string text(kLogHeader);
    text += "\n";
    for (const auto& r : log) {
        const double cols[] = {r.t,
                               r.state.X,
                               r.state.Y,
                               r.state.phi,
                               r.state.vx,
                               r.state.vy,
                               r.state.omega,
                               r.state.T,
                               r.state.delta,
                               r.theta,
                               r.vs,
                               r.dT,
                               r.ddelta,
                               r.dvs,
                               r.z.alpha_f,
                               r.z.alpha_r,
                               r.z.T,
                               r.gp_mean[0],
                               r.gp_mean[1],
                               r.gp_mean[2],
                               r.gp_var[0],
                               r.gp_var[1],
                               r.gp_var[2],
                               r.slack_max,
                               r.e_nominal[0],
                               r.e_nominal[1],
                               r.e_nominal[2],
                               static_cast<double>(r.qp_status),
                               static_cast<double>(r.qp_iterations)};
        bool first = true;
        for (double v : cols) {
            if (!first) text += ",";
            text += io::format_double(v);
            first = false;
        }
        text += "\n";
    }
    io::write_file_atomic(path, text);
}

StepLog load_step_log(const std::string& path) {
    std::vector<std::string> header;
    const auto rows = io::load_csv(path, &header);
    const size_t ncols = io::split(kLogHeader, ',').size();
    if (!header.empty() && header.size() != ncols)
        throw std::runtime_error(path + ": step log column count mismatch");
    StepLog log;
    log.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& c = rows[i];
        if (c.size() != ncols)
            throw std::runtime_error(path + ": step log row " + std::to_string(i + 1) +
                                     " has wrong column count");
        StepRecord r;
        r.t = c[0];
        r.state = {c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]};
        r.theta = c[9];
        r.vs = c[10];
        r.dT = c[11];
        r.ddelta = c[12];
        r.dvs = c[13];
        r.z = {c[14], c[15], c[16]};
        r.gp_mean = {c[17], c[18], c[19]};
        r.gp_var = {c[20], c[21], c[22]};
        r.slack_max = c[23];
        r.e_nominal = {c[24], c[25], c[26]};
        r.qp_status = static_cast<int>(c[27]);
        r.qp_iterations = static_cast<int>(c[28]);
        log.push_back(r);
    }
    return log;
}

}  // namespace lbmpcc
