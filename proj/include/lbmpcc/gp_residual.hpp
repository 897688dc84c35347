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
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lbmpcc/vehicle_model.hpp"

namespace lbmpcc {

/// SE kernel and noise hyperparameters. One signal variance and one
/// diagonal lengthscale matrix shared by the three outputs; noise is
/// per output (vx, vy, omega).
struct GpHyperparams {
    Vec3 lengthscales{0.02, 0.02, 50.0};  // [rad, rad, N·m]
    double sigma_f2 = 1e-3;               // signal variance
    Vec3 sigma_n2{1e-8, 1e-8, 1e-8};      // per-output noise variance

    void validate() const;
};

/// Feature-space validity bounds: friction ellipse per axle, slip-angle
/// box, and front/rear slip-angle difference.
struct FeatureBounds {
    double p_long = 1.0;      // longitudinal semi-axis shaping [-]
    double p_ellipse = 0.95;  // ellipse size relative to tire peak [-]
    double alpha_max = 0.10;  // [rad]
    double dalpha_max = 0.06; // [rad]
};

enum class FeatureConstraint { ellipse_front, ellipse_rear, slip_front, slip_rear, slip_diff };

const char* to_string(FeatureConstraint c);

struct ValidityReport {
    bool valid = true;
    std::vector<FeatureConstraint> violated;
};

/// Budgeted training dictionary of (feature, target) rows.
struct GpDataset {
    Eigen::MatrixXd Z;  // m x 3 features
    Eigen::MatrixXd Y;  // m x 3 per-step deviations (dvx, dvy, domega)
    int budget = 100;

    int size() const { return static_cast<int>(Z.rows()); }
    void append(const Vec3& z, const Vec3& y);
    void remove_row(int idx);
};

struct InsertReport {
    bool accepted = false;
    bool evicted = false;
    int evicted_index = -1;
    double gamma = 0.0;  // independence score of the candidate
};

struct GpPrediction {
    Vec3 mean = Vec3::Zero();
    Vec3 variance = Vec3::Zero();
};

/// Injection of the 3-dim residual into the 8-dim state (velocity rows).
struct ResidualMap {
    static Eigen::Matrix<double, 8, 3> Bd();
    /// Pseudo-inverse selection: picks the (vx, vy, omega) rows.
    static Vec3 select(const Vec8& full);
};

/**
 * @brief Immutable posterior snapshot over a dataset.
 *
 * Holds one Cholesky factor of (K + sigma_a^2 I) per output together
 * with the corresponding weight vectors; refreshed wholesale by fit().
 */
class GpModel {
public:
    GpPrediction predict(const Vec3& z) const;
    const GpDataset& dataset() const { return dataset_; }
    const GpHyperparams& hyperparams() const { return hyp_; }

private:
    friend GpModel fit(const GpDataset&, const GpHyperparams&);
    GpDataset dataset_;
    GpHyperparams hyp_;
    std::array<Eigen::MatrixXd, 3> chol_;     // lower factors of K + sigma_a^2 I
    std::array<Eigen::VectorXd, 3> weights_;  // (K + sigma_a^2 I)^{-1} Y[:,a]
};

double se_kernel(const Vec3& zi, const Vec3& zj, const GpHyperparams& hyp);

/// Per-step residual target y = Bd^+ (x_next − f(x, u)) with f the RK4
/// discrete nominal map over dt.
Vec3 residual_target(const VehicleState& x, const ControlRate& u,
                     const VehicleState& x_next, const VehicleParams& params,
                     const TireParams& tires, double dt);

/// Kernel linear-independence score of z against the dictionary:
/// gamma = k(z,z) − k_*^T (K + jitter I)^{-1} k_*. Empty dictionary
/// scores sigma_f^2.
double independence_score(const Vec3& z, const GpDataset& dataset,
                          const GpHyperparams& hyp);

/// Gated insertion: candidates outside the valid feature region are
/// rejected outright; otherwise insert iff gamma exceeds the threshold,
/// evicting the member with the smallest leave-one-out independence
/// score when the budget is full.
InsertReport maybe_insert(GpDataset& dataset, const Vec3& z, const Vec3& y,
                          const GpHyperparams& hyp, double gamma_threshold,
                          const ValidityReport& validity);

/// Factorizes (K + sigma_a^2 I) per output. Escalates diagonal jitter
/// from 1e-10 to 1e-6 (relative to sigma_f^2) if the factorization
/// fails, then throws.
GpModel fit(const GpDataset& dataset, const GpHyperparams& hyp);

/// Validity of a feature point under the nominal force maps.
ValidityReport is_valid_sample(const FeatureVector& z, const VehicleParams& params,
                               const TireParams& tires, const FeatureBounds& bounds);

/// Variant taking precomputed axle forces (Ffx, Ffy, Frx, Fry).
ValidityReport is_valid_forces(const Eigen::Vector4d& forces, double alpha_f,
                               double alpha_r, const TireParams& tires,
                               const FeatureBounds& bounds);

/// Dataset persistence: CSV with columns
/// alpha_f, alpha_r, T, y_vx, y_vy, y_omega.
void save_dataset(const std::string& path, const GpDataset& dataset);
GpDataset load_dataset(const std::string& path, int budget);

}  // namespace lbmpcc
