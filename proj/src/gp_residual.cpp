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

#include "lbmpcc/gp_residual.hpp"

#include <cmath>
#include <stdexcept>

#include "lbmpcc/io.hpp"

namespace lbmpcc {

namespace {

constexpr double kIndependenceJitter = 1e-9;  // relative to sigma_f^2

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& Z, const GpHyperparams& hyp) {
    const int m = static_cast<int>(Z.rows());
    Eigen::MatrixXd K(m, m);
    for (int i = 0; i < m; ++i) {
        K(i, i) = hyp.sigma_f2;
        for (int j = 0; j < i; ++j) {
            K(i, j) = se_kernel(Z.row(i), Z.row(j), hyp);
            K(j, i) = K(i, j);
        }
    }
    return K;
}

Eigen::VectorXd kernel_vector(const Eigen::MatrixXd& Z, const Vec3& z,
                              const GpHyperparams& hyp) {
    const int m = static_cast<int>(Z.rows());
    Eigen::VectorXd k(m);
    for (int i = 0; i < m; ++i) k[i] = se_kernel(Z.row(i), z, hyp);
    return k;
}

}  // namespace

void GpHyperparams::validate() const {
    if (!(lengthscales.minCoeff() > 0.0))
        throw std::invalid_argument("gp hyperparams: lengthscales must be positive");
    if (!(sigma_f2 > 0.0))
        throw std::invalid_argument("gp hyperparams: sigma_f2 must be positive");
    if (!(sigma_n2.minCoeff() > 0.0))
        throw std::invalid_argument("gp hyperparams: noise variances must be positive");
}

const char* to_string(FeatureConstraint c) {
    switch (c) {
        case FeatureConstraint::ellipse_front: return "ellipse_front";
        case FeatureConstraint::ellipse_rear: return "ellipse_rear";
        case FeatureConstraint::slip_front: return "slip_front";
        case FeatureConstraint::slip_rear: return "slip_rear";
        case FeatureConstraint::slip_diff: return "slip_diff";
    }
    return "?";
}

void GpDataset::append(const Vec3& z, const Vec3& y) {
    const int m = size();
    Z.conservativeResize(m + 1, 3);
    Y.conservativeResize(m + 1, 3);
    Z.row(m) = z.transpose();
    Y.row(m) = y.transpose();
}

void GpDataset::remove_row(int idx) {
    const int m = size();
    for (int i = idx; i + 1 < m; ++i) {
        Z.row(i) = Z.row(i + 1);
        Y.row(i) = Y.row(i + 1);
    }
    Z.conservativeResize(m - 1, 3);
    Y.conservativeResize(m - 1, 3);
}

Eigen::Matrix<double, 8, 3> ResidualMap::Bd() {
    Eigen::Matrix<double, 8, 3> B = Eigen::Matrix<double, 8, 3>::Zero();
    B(3, 0) = 1.0;  // vx
    B(4, 1) = 1.0;  // vy
    B(5, 2) = 1.0;  // omega
    return B;
}

Vec3 ResidualMap::select(const Vec8& full) {
    return {full[3], full[4], full[5]};
}

double se_kernel(const Vec3& zi, const Vec3& zj, const GpHyperparams& hyp) {
    const Vec3 d = zi - zj;
    double q = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double s = d[i] / hyp.lengthscales[i];
        q += s * s;
    }
    return hyp.sigma_f2 * std::exp(-0.5 * q);
}

Vec3 residual_target(const VehicleState& x, const ControlRate& u,
                     const VehicleState& x_next, const VehicleParams& params,
                     const TireParams& tires, double dt) {
    const VehicleState pred = integrate_step(x, u, params, tires, dt);
    return ResidualMap::select(x_next.vector() - pred.vector());
}

double independence_score(const Vec3& z, const GpDataset& dataset,
                          const GpHyperparams& hyp) {
    const int m = dataset.size();
    const double kzz = hyp.sigma_f2;
    if (m == 0) return kzz;
    Eigen::MatrixXd K = kernel_matrix(dataset.Z, hyp);
    K.diagonal().array() += kIndependenceJitter * hyp.sigma_f2;
    const Eigen::VectorXd ks = kernel_vector(dataset.Z, z, hyp);
    const Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("independence_score: kernel factorization failed");
    const double gamma = kzz - ks.dot(llt.solve(ks));
    return std::max(0.0, gamma);
}

InsertReport maybe_insert(GpDataset& dataset, const Vec3& z, const Vec3& y,
                          const GpHyperparams& hyp, double gamma_threshold,
                          const ValidityReport& validity) {
    InsertReport rep;
    if (!validity.valid) return rep;
    rep.gamma = independence_score(z, dataset, hyp);
    if (rep.gamma <= gamma_threshold) return rep;

    if (dataset.size() >= dataset.budget) {
        // Evict the most redundant member: smallest leave-one-out score.
        // gamma_i equals 1/[(K + eps I)^{-1}]_{ii} - eps, so one
        // factorization covers all members.
        const int m = dataset.size();
        const double eps = kIndependenceJitter * hyp.sigma_f2;
        Eigen::MatrixXd K = kernel_matrix(dataset.Z, hyp);
        K.diagonal().array() += eps;
        const Eigen::LLT<Eigen::MatrixXd> llt(K);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("maybe_insert: kernel factorization failed");
        const Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(m, m));
        int worst = 0;
        double worst_score = std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
            const double s = 1.0 / Kinv(i, i) - eps;
            if (s < worst_score) {
                worst_score = s;
                worst = i;
            }
        }
        dataset.remove_row(worst);
        rep.evicted = true;
        rep.evicted_index = worst;
    }
    dataset.append(z, y);
    rep.accepted = true;
    return rep;
}

GpModel fit(const GpDataset& dataset, const GpHyperparams& hyp) {
    if (dataset.size() == 0) throw std::invalid_argument("gp fit: dataset is empty");
    if (dataset.Z.rows() != dataset.Y.rows() || dataset.Z.cols() != 3 || dataset.Y.cols() != 3)
        throw std::invalid_argument("gp fit: dataset dimensions inconsistent");
    hyp.validate();

    GpModel model;
    model.dataset_ = dataset;
    model.hyp_ = hyp;
    const Eigen::MatrixXd K = kernel_matrix(dataset.Z, hyp);
    for (int a = 0; a < 3; ++a) {
        Eigen::MatrixXd Ka = K;
        Ka.diagonal().array() += hyp.sigma_n2[a];
        double jitter = 1e-10;
        Eigen::LLT<Eigen::MatrixXd> llt(Ka);
        while (llt.info() != Eigen::Success && jitter <= 1e-6) {
            Eigen::MatrixXd Kj = Ka;
            Kj.diagonal().array() += jitter * hyp.sigma_f2;
            llt.compute(Kj);
            jitter *= 10.0;
        }
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("gp fit: factorization failed after jitter escalation");
        model.chol_[a] = llt.matrixL();
        model.weights_[a] = llt.solve(dataset.Y.col(a));
    }
    return model;
}

GpPrediction GpModel::predict(const Vec3& z) const {
    GpPrediction out;
    if (dataset_.size() == 0) {
        out.variance.setConstant(hyp_.sigma_f2);
        return out;
    }
    const Eigen::VectorXd ks = kernel_vector(dataset_.Z, z, hyp_);
    for (int a = 0; a < 3; ++a) {
        out.mean[a] = ks.dot(weights_[a]);
        const Eigen::VectorXd v =
            chol_[a].triangularView<Eigen::Lower>().solve(ks);
        out.variance[a] = std::max(0.0, hyp_.sigma_f2 - v.squaredNorm());
    }
    return out;
}

ValidityReport is_valid_forces(const Eigen::Vector4d& forces, double alpha_f,
                               double alpha_r, const TireParams& tires,
                               const FeatureBounds& b) {
    ValidityReport rep;
    auto fail = [&](FeatureConstraint c) {
        rep.valid = false;
        rep.violated.push_back(c);
    };
    const double Ffx = forces[0], Ffy = forces[1], Frx = forces[2], Fry = forces[3];
    const double lf2 = b.p_long * Ffx, lr2 = b.p_long * Frx;
    if (lf2 * lf2 + Ffy * Ffy > std::pow(b.p_ellipse * tires.Df, 2))
        fail(FeatureConstraint::ellipse_front);
    if (lr2 * lr2 + Fry * Fry > std::pow(b.p_ellipse * tires.Dr, 2))
        fail(FeatureConstraint::ellipse_rear);
    if (std::abs(alpha_f) > b.alpha_max) fail(FeatureConstraint::slip_front);
    if (std::abs(alpha_r) > b.alpha_max) fail(FeatureConstraint::slip_rear);
    if (std::abs(alpha_f - alpha_r) > b.dalpha_max) fail(FeatureConstraint::slip_diff);
    return rep;
}

ValidityReport is_valid_sample(const FeatureVector& z, const VehicleParams& params,
                               const TireParams& tires, const FeatureBounds& bounds) {
    const auto [Ffy, Fry] = lateral_tire_forces(z.alpha_f, z.alpha_r, tires);
    const auto [Ffx, Frx] = longitudinal_forces(z.T, params);
    return is_valid_forces({Ffx, Ffy, Frx, Fry}, z.alpha_f, z.alpha_r, tires, bounds);
}

void save_dataset(const std::string& path, const GpDataset& dataset) {
    std::string text = "alpha_f,alpha_r,T,y_vx,y_vy,y_omega\n";
    for (int i = 0; i < dataset.size(); ++i) {
        text += io::format_double(dataset.Z(i, 0)) + "," + io::format_double(dataset.Z(i, 1)) +
                "," + io::format_double(dataset.Z(i, 2)) + "," + io::format_double(dataset.Y(i, 0)) +
                "," + io::format_double(dataset.Y(i, 1)) + "," + io::format_double(dataset.Y(i, 2)) +
                "\n";
    }
    io::write_file_atomic(path, text);
}

GpDataset load_dataset(const std::string& path, int budget) {
    const auto rows = io::load_csv(path);
    GpDataset d;
    d.budget = budget;
    d.Z.resize(static_cast<int>(rows.size()), 3);
    d.Y.resize(static_cast<int>(rows.size()), 3);
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != 6)
            throw std::runtime_error(path + ": dataset row " + std::to_string(i + 1) +
                                     " must have 6 columns");
        for (int j = 0; j < 3; ++j) {
            d.Z(static_cast<int>(i), j) = rows[i][j];
            d.Y(static_cast<int>(i), j) = rows[i][3 + j];
        }
    }
    if (d.size() > budget)
        throw std::runtime_error(path + ": dataset exceeds budget " + std::to_string(budget));
    return d;
}

}  // namespace lbmpcc
