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

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "lbmpcc/experiment.hpp"
#include "lbmpcc/io.hpp"

namespace {

void print_error_row(const lbmpcc::ModelErrorRow& row) {
    auto line = [](const char* name, const lbmpcc::ErrorStats& s) {
        std::printf("  %-18s %10.6f +- %10.6f  (n=%d)\n", name, s.mean, s.stddev, s.count);
    };
    line("e_vy nominal", row.e_vy_nominal);
    line("e_omega nominal", row.e_omega_nominal);
    if (row.e_vy_residual) {
        line("e_vy +residual", *row.e_vy_residual);
        line("e_omega +residual", *row.e_omega_residual);
    } else {
        std::printf("  (no residual model: columns omitted)\n");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning-based model predictive contouring control experiments"};
    app.require_subcommand(1);

    std::string config_path, log_path, dataset_path, out_override;
    uint64_t seed_override = 0;
    int laps_override = 0;
    bool quiet = false;
    bool have_seed = false, have_laps = false;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment configuration file")->required();
    };

    CLI::App* run = app.add_subcommand("run", "run the multi-lap learning protocol");
    add_config(run);
    run->add_option("--seed", seed_override, "override protocol.seed")
        ->each([&](const std::string&) { have_seed = true; });
    run->add_option("--laps", laps_override, "override protocol.laps")
        ->each([&](const std::string&) { have_laps = true; });
    run->add_option("--out", out_override, "override paths.out_dir");
    run->add_flag("--quiet", quiet, "suppress per-lap progress lines");

    CLI::App* replay = app.add_subcommand("replay", "recompute model-error stats from a step log");
    add_config(replay);
    replay->add_option("--log", log_path, "step log CSV")->required();
    replay->add_option("--dataset", dataset_path, "dictionary snapshot CSV (omit for nominal only)");

    CLI::App* exp = app.add_subcommand("export", "emit plot-data CSVs from a step log");
    add_config(exp);
    exp->add_option("--log", log_path, "step log CSV")->required();
    exp->add_option("--out", out_override, "output directory (default: paths.out_dir)");

    CLI::App* val = app.add_subcommand("validate-config", "parse and validate a configuration file");
    add_config(val);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(run)) {
            lbmpcc::ExperimentConfig cfg = lbmpcc::load_config(config_path);
            if (have_seed) cfg.seed = seed_override;
            if (have_laps) cfg.laps = laps_override;
            if (!out_override.empty()) cfg.out_dir = out_override;
            cfg.validate();
            const lbmpcc::ExperimentResult result = lbmpcc::run_experiment(cfg, quiet);
            if (!quiet)
                std::printf("wrote %s/summary.json (%zu laps)\n", cfg.out_dir.c_str(),
                            result.laps.size());
            if (!result.all_completed) {
                std::fprintf(stderr, "error: a lap was aborted before completing\n");
                return 2;
            }
            return 0;
        }
        if (app.got_subcommand(replay)) {
            const lbmpcc::ExperimentConfig cfg = lbmpcc::load_config(config_path);
            const lbmpcc::ModelErrorRow row = lbmpcc::replay_log(cfg, log_path, dataset_path);
            std::printf("model error over %s:\n", log_path.c_str());
            print_error_row(row);
            return 0;
        }
        if (app.got_subcommand(exp)) {
            const lbmpcc::ExperimentConfig cfg = lbmpcc::load_config(config_path);
            const std::string out = out_override.empty() ? cfg.out_dir : out_override;
            lbmpcc::export_plot_data(cfg, log_path, out);
            std::printf("wrote plot data to %s\n", out.c_str());
            return 0;
        }
        if (app.got_subcommand(val)) {
            lbmpcc::load_config(config_path);
            std::printf("%s: OK\n", config_path.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
