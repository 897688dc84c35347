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

#include "lbmpcc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lbmpcc/io.hpp"

namespace lbmpcc {

namespace {

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

SectionMap parse_sections(const std::string& text, const std::string& name) {
    SectionMap out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = io::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                         ": malformed section header '" + line + "'");
            section = io::trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw std::runtime_error(name + ":" + std::to_string(lineno) + ": empty section name");
            out[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": expected 'key = value', got '" + line + "'");
        if (section.empty())
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": key outside of any [section]");
        const std::string key = io::trim(line.substr(0, eq));
        if (out[section].count(key))
            throw std::runtime_error(name + ": duplicate key '" + section + "." + key + "'");
        out[section][key] = io::trim(line.substr(eq + 1));
    }
    return out;
}

/// Tracks which keys were consumed so leftovers can be reported.
class Reader {
public:
    Reader(SectionMap sections, std::string name)
        : sections_(std::move(sections)), name_(std::move(name)) {}

    bool has(const std::string& sec, const std::string& key) {
        auto s = sections_.find(sec);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::optional<std::string> take(const std::string& sec, const std::string& key) {
        known_.insert(sec + "." + key);
        known_sections_.insert(sec);
        auto s = sections_.find(sec);
        if (s == sections_.end()) return std::nullopt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        return k->second;
    }

    void get(const std::string& sec, const std::string& key, std::string* out) {
        if (auto v = take(sec, key)) *out = *v;
    }
    void get(const std::string& sec, const std::string& key, double* out) {
        if (auto v = take(sec, key)) *out = io::parse_double(*v, ctx(sec, key));
    }
    void get(const std::string& sec, const std::string& key, int* out) {
        if (auto v = take(sec, key)) {
            const double d = io::parse_double(*v, ctx(sec, key));
            if (d != std::floor(d)) throw std::runtime_error(ctx(sec, key) + ": expected an integer");
            *out = static_cast<int>(d);
        }
    }
    void get(const std::string& sec, const std::string& key, uint64_t* out) {
        if (auto v = take(sec, key)) {
            try {
                *out = std::stoull(*v);
            } catch (const std::exception&) {
                throw std::runtime_error(ctx(sec, key) + ": expected an unsigned integer");
            }
        }
    }
    void get(const std::string& sec, const std::string& key, bool* out) {
        if (auto v = take(sec, key)) {
            if (*v == "1" || *v == "true")
                *out = true;
            else if (*v == "0" || *v == "false")
                *out = false;
            else
                throw std::runtime_error(ctx(sec, key) + ": expected 0/1/true/false");
        }
    }
    template <typename Derived>
    void get_vec(const std::string& sec, const std::string& key,
                 Eigen::MatrixBase<Derived>* out) {
        if (auto v = take(sec, key)) {
            const auto parts = io::split(*v, ',');
            if (static_cast<int>(parts.size()) != out->size())
                throw std::runtime_error(ctx(sec, key) + ": expected " +
                                         std::to_string(out->size()) + " comma-separated values");
            for (int i = 0; i < out->size(); ++i)
                (*out)[i] = io::parse_double(parts[i], ctx(sec, key));
        }
    }

    void finish() const {
        std::vector<std::string> leftovers;
        for (const auto& [sec, kv] : sections_) {
            if (!known_sections_.count(sec)) {
                leftovers.push_back("[" + sec + "]");
                continue;
            }
            for (const auto& [key, value] : kv)
                if (!known_.count(sec + "." + key)) leftovers.push_back(sec + "." + key);
        }
        if (!leftovers.empty()) {
            std::string msg = name_ + ": unknown configuration entries:";
            for (const auto& l : leftovers) msg += " " + l;
            throw std::runtime_error(msg);
        }
    }

private:
    std::string ctx(const std::string& sec, const std::string& key) const {
        return name_ + ": " + sec + "." + key;
    }
    SectionMap sections_;
    std::string name_;
    std::set<std::string> known_;
    std::set<std::string> known_sections_;
};

std::string vec_to_string(const Eigen::VectorXd& v) {
    std::string out;
    for (int i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += io::format_double(v[i]);
    }
    return out;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (track_csv.empty()) throw std::runtime_error("config: paths.track is required");
    if (vehicle_params.empty()) throw std::runtime_error("config: paths.vehicle_params is required");
    controller.validate();
    hyp.validate();
    if (gp_budget < 1) throw std::runtime_error("config: gp.budget must be >= 1");
    if (!(gamma_threshold_rel > 0.0))
        throw std::runtime_error("config: gp.gamma_threshold_rel must be positive");
    if (laps < 1) throw std::runtime_error("config: protocol.laps must be >= 1");
    if (!(initial_speed > 0.0)) throw std::runtime_error("config: protocol.initial_speed must be positive");
    if (!(speed_limit > 0.0)) throw std::runtime_error("config: protocol.speed_limit must be positive");
    if (!(track_half_width > 0.0))
        throw std::runtime_error("config: protocol.track_half_width must be positive");
    if (!(resample_spacing > 0.0))
        throw std::runtime_error("config: protocol.resample_spacing must be positive");
    if (max_consecutive_failures < 1)
        throw std::runtime_error("config: protocol.max_consecutive_failures must be >= 1");
    plant.validate(controller.dt);
}

ExperimentConfig parse_config(const std::string& text, const std::string& name) {
    Reader r(parse_sections(text, name), name);
    ExperimentConfig cfg;

    r.get("paths", "track", &cfg.track_csv);
    r.get("paths", "vehicle_params", &cfg.vehicle_params);
    r.get("paths", "out_dir", &cfg.out_dir);

    MpccConfig& c = cfg.controller;
    r.get("controller", "horizon", &c.N);
    r.get("controller", "dt", &c.dt);
    r.get("controller", "q_lag", &c.q_lag);
    r.get("controller", "q_contour", &c.q_contour);
    r.get("controller", "q_progress", &c.q_progress);
    r.get_vec("controller", "rx", &c.Rx);
    r.get_vec("controller", "ru", &c.Ru);
    r.get_vec("controller", "x_min", &c.x_min);
    r.get_vec("controller", "x_max", &c.x_max);
    r.get_vec("controller", "u_min", &c.u_min);
    r.get_vec("controller", "u_max", &c.u_max);
    r.get("controller", "p_long", &c.feature_bounds.p_long);
    r.get("controller", "p_ellipse", &c.feature_bounds.p_ellipse);
    r.get("controller", "alpha_max", &c.feature_bounds.alpha_max);
    r.get("controller", "dalpha_max", &c.feature_bounds.dalpha_max);
    r.get("controller", "slack_quad", &c.slack_quad);
    r.get("controller", "slack_lin", &c.slack_lin);
    r.get("controller", "qp_max_iter", &c.qp_max_iter);
    r.get("controller", "qp_tol", &c.qp_tol);
    r.get("controller", "reprojection_lag", &c.reprojection_lag);
    r.get("controller", "vx_min_soft", &c.vx_min_soft);

    r.get_vec("gp", "lengthscales", &cfg.hyp.lengthscales);
    r.get("gp", "sigma_f2", &cfg.hyp.sigma_f2);
    r.get_vec("gp", "sigma_n2", &cfg.hyp.sigma_n2);
    r.get("gp", "budget", &cfg.gp_budget);
    r.get("gp", "gamma_threshold_rel", &cfg.gamma_threshold_rel);

    PlantParams& p = cfg.plant;
    r.get("plant", "tire_peak_scale", &p.tire_peak_scale);
    r.get("plant", "tire_stiffness_scale", &p.tire_stiffness_scale);
    r.get("plant", "drag_scale", &p.drag_scale);
    r.get("plant", "load_transfer", &p.load_transfer);
    r.get("plant", "combined_slip", &p.combined_slip);
    r.get("plant", "lag_T", &p.lag_T);
    r.get("plant", "lag_delta", &p.lag_delta);
    r.get_vec("plant", "noise_std", &p.noise_std);
    r.get("plant", "substep_dt", &p.substep_dt);

    r.get("protocol", "laps", &cfg.laps);
    r.get("protocol", "initial_speed", &cfg.initial_speed);
    r.get("protocol", "speed_limit", &cfg.speed_limit);
    r.get("protocol", "seed", &cfg.seed);
    r.get("protocol", "learning", &cfg.learning);
    r.get("protocol", "max_consecutive_failures", &cfg.max_consecutive_failures);
    r.get("protocol", "track_half_width", &cfg.track_half_width);
    r.get("protocol", "resample_spacing", &cfg.resample_spacing);

    r.finish();

    // the envelope knobs shared between controller and protocol
    cfg.controller.speed_limit = cfg.speed_limit;
    cfg.controller.half_width = cfg.track_half_width;
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    ExperimentConfig cfg = parse_config(io::read_file(path), path);
    cfg.validate();
    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string s;
    auto kv = [&](const char* key, const std::string& value) {
        s += std::string(key) + " = " + value + "\n";
    };
    auto num = [&](const char* key, double v) { kv(key, io::format_double(v)); };

    s += "[paths]\n";
    kv("track", cfg.track_csv);
    kv("vehicle_params", cfg.vehicle_params);
    kv("out_dir", cfg.out_dir);
    const MpccConfig& c = cfg.controller;
    s += "\n[controller]\n";
    kv("horizon", std::to_string(c.N));
    num("dt", c.dt);
    num("q_lag", c.q_lag);
    num("q_contour", c.q_contour);
    num("q_progress", c.q_progress);
    kv("rx", vec_to_string(c.Rx));
    kv("ru", vec_to_string(c.Ru));
    kv("x_min", vec_to_string(c.x_min));
    kv("x_max", vec_to_string(c.x_max));
    kv("u_min", vec_to_string(c.u_min));
    kv("u_max", vec_to_string(c.u_max));
    num("p_long", c.feature_bounds.p_long);
    num("p_ellipse", c.feature_bounds.p_ellipse);
    num("alpha_max", c.feature_bounds.alpha_max);
    num("dalpha_max", c.feature_bounds.dalpha_max);
    num("slack_quad", c.slack_quad);
    num("slack_lin", c.slack_lin);
    kv("qp_max_iter", std::to_string(c.qp_max_iter));
    num("qp_tol", c.qp_tol);
    num("reprojection_lag", c.reprojection_lag);
    num("vx_min_soft", c.vx_min_soft);
    s += "\n[gp]\n";
    kv("lengthscales", vec_to_string(cfg.hyp.lengthscales));
    num("sigma_f2", cfg.hyp.sigma_f2);
    kv("sigma_n2", vec_to_string(cfg.hyp.sigma_n2));
    kv("budget", std::to_string(cfg.gp_budget));
    num("gamma_threshold_rel", cfg.gamma_threshold_rel);
    const PlantParams& p = cfg.plant;
    s += "\n[plant]\n";
    num("tire_peak_scale", p.tire_peak_scale);
    num("tire_stiffness_scale", p.tire_stiffness_scale);
    num("drag_scale", p.drag_scale);
    num("load_transfer", p.load_transfer);
    num("combined_slip", p.combined_slip);
    num("lag_T", p.lag_T);
    num("lag_delta", p.lag_delta);
    kv("noise_std", vec_to_string(p.noise_std));
    num("substep_dt", p.substep_dt);
    s += "\n[protocol]\n";
    kv("laps", std::to_string(cfg.laps));
    num("initial_speed", cfg.initial_speed);
    num("speed_limit", cfg.speed_limit);
    kv("seed", std::to_string(cfg.seed));
    kv("learning", cfg.learning ? "1" : "0");
    kv("max_consecutive_failures", std::to_string(cfg.max_consecutive_failures));
    num("track_half_width", cfg.track_half_width);
    num("resample_spacing", cfg.resample_spacing);
    return s;
}

namespace {

VehicleState start_state(const Track& track, const VehicleParams& vp, double speed) {
    const CenterlinePoint c = track.query(0.0);
    VehicleState s;
    s.X = c.Xc;
    s.Y = c.Yc;
    s.phi = c.Phic;
    s.vx = speed;
    s.T = vp.r_wheel * (vp.Cw * speed * speed + vp.Cfr + vp.Crr);
    return s;
}

nlohmann::ordered_json stats_json(const ErrorStats& s) {
    return {{"mean", s.mean}, {"std", s.stddev}, {"count", s.count}};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool quiet, bool write_outputs) {
    cfg.validate();
    const Track track = load_centerline(cfg.track_csv, cfg.resample_spacing);
    const auto [vp, tp] = load_vehicle_params(cfg.vehicle_params);

    PlantParams plant = cfg.plant;
    plant.vehicle = vp;
    plant.tires = tp;
    plant.validate(cfg.controller.dt);

    MpccConfig mc = cfg.controller;
    mc.speed_limit = cfg.speed_limit;
    mc.half_width = cfg.track_half_width;
    MpccController controller(mc, track, vp, tp);

    PlantState ps = PlantState::from_state(start_state(track, vp, cfg.initial_speed));
    Rng rng(cfg.seed);
    GpDataset dataset;
    dataset.budget = cfg.gp_budget;
    std::optional<GpModel> model;

    LapRunConfig lrc;
    lrc.learning = cfg.learning;
    lrc.hyp = cfg.hyp;
    lrc.gamma_threshold = cfg.gamma_threshold();
    lrc.feature_bounds = mc.feature_bounds;
    lrc.max_consecutive_failures = cfg.max_consecutive_failures;
    lrc.max_steps = std::max(10000, static_cast<int>(4.0 * track.theta_max() / mc.dt));

    if (write_outputs) io::create_directories(cfg.out_dir);

    ExperimentResult result;
    result.track_length_m = track.theta_max();
    for (int lap = 1; lap <= cfg.laps; ++lap) {
        const GpModel* mptr = model ? &*model : nullptr;
        const LapResult lr = run_lap(controller, ps, plant, track, dataset, mptr, lrc, rng);

        LapRow row;
        row.lap = lap;
        row.metrics = lr.metrics;
        row.dict_size = dataset.size();
        result.laps.push_back(row);

        if (write_outputs) {
            save_step_log(cfg.out_dir + "/lap_" + std::to_string(lap) + ".csv", lr.log);
            save_dataset(cfg.out_dir + "/dataset_after_lap_" + std::to_string(lap) + ".csv",
                         dataset);
        }
        if (!quiet) {
            std::printf("lap %d: time %.2f s, avg %.2f m/s, max|ay| %.2f g, updates %d, dict %d%s\n",
                        lap, lr.metrics.lap_time_s, lr.metrics.avg_speed_mps,
                        lr.metrics.max_abs_ay_g, lr.metrics.dict_updates, dataset.size(),
                        lr.metrics.completed ? "" : " [aborted]");
        }
        if (!lr.metrics.completed) {
            result.all_completed = false;
            break;
        }
        if (cfg.learning && dataset.size() > 0 && lap < cfg.laps)
            model = fit(dataset, cfg.hyp);
    }

    if (write_outputs) {
        save_dataset(cfg.out_dir + "/dataset.csv", dataset);
        io::write_file_atomic(cfg.out_dir + "/summary.json", summary_json(cfg, result));
    }
    return result;
}

std::string summary_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
    nlohmann::ordered_json j;
    j["track_length_m"] = result.track_length_m;
    j["seed"] = cfg.seed;
    j["laps_requested"] = cfg.laps;
    j["all_completed"] = result.all_completed;
    j["laps"] = nlohmann::ordered_json::array();
    for (const auto& row : result.laps) {
        nlohmann::ordered_json lj;
        lj["lap"] = row.lap;
        lj["completed"] = row.metrics.completed;
        lj["time_s"] = row.metrics.lap_time_s;
        lj["max_ay_g"] = row.metrics.max_abs_ay_g;
        lj["avg_speed_mps"] = row.metrics.avg_speed_mps;
        lj["dict_updates"] = row.metrics.dict_updates;
        lj["dict_size"] = row.dict_size;
        lj["e_vy_nominal"] = stats_json(row.metrics.e_vy_nominal);
        lj["e_omega_nominal"] = stats_json(row.metrics.e_omega_nominal);
        if (row.metrics.e_vy_residual) {
            lj["e_vy_residual"] = stats_json(*row.metrics.e_vy_residual);
            lj["e_omega_residual"] = stats_json(*row.metrics.e_omega_residual);
        }
        j["laps"].push_back(lj);
    }
    return j.dump(2) + "\n";
}

ModelErrorRow replay_log(const ExperimentConfig& cfg, const std::string& log_path,
                         const std::string& dataset_path) {
    const auto [vp, tp] = load_vehicle_params(cfg.vehicle_params);
    const StepLog log = load_step_log(log_path);
    std::optional<GpModel> model;
    if (!dataset_path.empty()) {
        const GpDataset dataset = load_dataset(dataset_path, cfg.gp_budget);
        if (dataset.size() > 0) model = fit(dataset, cfg.hyp);
    }
    return model_error_stats(log, model ? &*model : nullptr, vp, tp, cfg.controller.dt);
}

std::vector<BoundarySample> sample_valid_region_boundary(const VehicleParams& params,
                                                         const TireParams& tires,
                                                         const FeatureBounds& b, int count) {
    // normalized margins: valid iff all m_i(z) <= 0
    auto margins = [&](const Vec3& z) {
        const auto [Ffy, Fry] = lateral_tire_forces(z[0], z[1], tires);
        const auto [Ffx, Frx] = longitudinal_forces(z[2], params);
        Eigen::Matrix<double, 5, 1> m;
        const double pl = b.p_long;
        m[0] = (pl * pl * Ffx * Ffx + Ffy * Ffy) / std::pow(b.p_ellipse * tires.Df, 2) - 1.0;
        m[1] = (pl * pl * Frx * Frx + Fry * Fry) / std::pow(b.p_ellipse * tires.Dr, 2) - 1.0;
        m[2] = std::abs(z[0]) / b.alpha_max - 1.0;
        m[3] = std::abs(z[1]) / b.alpha_max - 1.0;
        m[4] = std::abs(z[0] - z[1]) / b.dalpha_max - 1.0;
        return m;
    };
    const FeatureConstraint order[5] = {FeatureConstraint::ellipse_front,
                                        FeatureConstraint::ellipse_rear,
                                        FeatureConstraint::slip_front,
                                        FeatureConstraint::slip_rear,
                                        FeatureConstraint::slip_diff};
    const double t_scale =
        params.r_wheel * b.p_ellipse * std::min(tires.Df, tires.Dr) / std::max(1e-9, b.p_long);

    std::vector<BoundarySample> out;
    out.reserve(count);
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double y = 1.0 - 2.0 * (i + 0.5) / count;
        const double rad = std::sqrt(std::max(0.0, 1.0 - y * y));
        const double ang = golden * i;
        Vec3 dir(rad * std::cos(ang) * b.alpha_max, y * b.alpha_max,
                 rad * std::sin(ang) * t_scale);
        if (dir.norm() < 1e-12) continue;

        double lo = 0.0, hi = 1.0;
        while (margins(hi * dir).maxCoeff() <= 0.0 && hi < 1e6) hi *= 2.0;
        if (margins(hi * dir).maxCoeff() <= 0.0) continue;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (margins(mid * dir).maxCoeff() <= 0.0)
                lo = mid;
            else
                hi = mid;
            if (margins(lo * dir).maxCoeff() > -1e-9 && lo > 0.0) break;
        }
        const Vec3 z = lo * dir;
        const auto m = margins(z);
        int active = 0;
        m.maxCoeff(&active);
        if (m[active] < -1e-7) continue;  // degenerate direction, skip
        out.push_back({FeatureVector::from_vector(z), order[active]});
    }
    return out;
}

void export_plot_data(const ExperimentConfig& cfg, const std::string& log_path,
                      const std::string& out_dir) {
    const Track track = load_centerline(cfg.track_csv, cfg.resample_spacing);
    const auto [vp, tp] = load_vehicle_params(cfg.vehicle_params);
    const StepLog log = load_step_log(log_path);
    if (log.size() < 2) throw std::runtime_error("export: step log too short");
    const double dt = cfg.controller.dt;
    io::create_directories(out_dir);

    // velocity vs arc length, monotone within the lap
    {
        std::string text = "s,vx\n";
        double s_acc = log.front().theta;
        double prev = log.front().theta;
        for (const auto& r : log) {
            double d = r.theta - prev;
            if (d < -0.5 * track.theta_max()) d += track.theta_max();
            s_acc += std::max(0.0, d);
            prev = r.theta;
            text += io::format_double(s_acc) + "," + io::format_double(r.state.vx) + "\n";
        }
        io::write_file_atomic(out_dir + "/velocity_profile.csv", text);
    }
    // GG diagram in g units, one row per step
    {
        std::string text = "ax_g,ay_g\n";
        for (size_t k = 0; k + 1 < log.size(); ++k) {
            const auto& a = log[k].state;
            const auto& bnext = log[k + 1].state;
            const double ax = (bnext.vx - a.vx) / dt - a.vy * a.omega;
            const double ay = (bnext.vy - a.vy) / dt + a.vx * a.omega;
            text += io::format_double(ax / 9.81) + "," + io::format_double(ay / 9.81) + "\n";
        }
        io::write_file_atomic(out_dir + "/gg_diagram.csv", text);
    }
    // XY trajectory
    {
        std::string text = "X,Y\n";
        for (const auto& r : log)
            text += io::format_double(r.state.X) + "," + io::format_double(r.state.Y) + "\n";
        io::write_file_atomic(out_dir + "/trajectory_xy.csv", text);
    }
    // feature-space scatter with validity flag
    {
        std::string text = "alpha_f,alpha_r,T,valid\n";
        for (const auto& r : log) {
            const ValidityReport v = is_valid_sample(r.z, vp, tp, cfg.controller.feature_bounds);
            text += io::format_double(r.z.alpha_f) + "," + io::format_double(r.z.alpha_r) + "," +
                    io::format_double(r.z.T) + "," + (v.valid ? "1" : "0") + "\n";
        }
        io::write_file_atomic(out_dir + "/feature_scatter.csv", text);
    }
    // valid-region boundary samples
    {
        const auto samples =
            sample_valid_region_boundary(vp, tp, cfg.controller.feature_bounds, 400);
        std::string text = "alpha_f,alpha_r,T,active_constraint\n";
        for (const auto& s : samples)
            text += io::format_double(s.z.alpha_f) + "," + io::format_double(s.z.alpha_r) + "," +
                    io::format_double(s.z.T) + "," + to_string(s.active) + "\n";
        io::write_file_atomic(out_dir + "/valid_region_boundary.csv", text);
    }
}

}  // namespace lbmpcc
