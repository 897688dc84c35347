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

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lbmpcc/gp_residual.hpp"
#include "lbmpcc/io.hpp"
#include "lbmpcc/rng.hpp"
#include "oracles.hpp"

using namespace lbmpcc;

namespace {

GpHyperparams unit_hyp() {
    GpHyperparams h;
    h.lengthscales = Vec3(1.0, 1.0, 1.0);
    h.sigma_f2 = 1.0;
    h.sigma_n2 = Vec3(1e-10, 1e-10, 1e-10);
    return h;
}

Vec3 random_z(Rng& rng, double scale = 2.0) {
    return Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                rng.uniform(-scale, scale));
}

GpDataset random_dataset(Rng& rng, int m, int budget = 1000) {
    GpDataset d;
    d.budget = budget;
    d.Z.resize(m, 3);
    d.Y.resize(m, 3);
    for (int i = 0; i < m; ++i) {
        d.Z.row(i) = random_z(rng).transpose();
        d.Y.row(i) = random_z(rng, 0.5).transpose();
    }
    return d;
}

}  // namespace

TEST_CASE("se_kernel: zero distance, symmetry, frozen value") {
    const GpHyperparams h = unit_hyp();
    const Vec3 z(0.3, -0.7, 1.1);
    CHECK(se_kernel(z, z, h) == doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const Vec3 a = random_z(rng), b = random_z(rng);
        CHECK(se_kernel(a, b, h) == se_kernel(b, a, h));
    }

    CHECK(se_kernel(Vec3(1, 0, 0), Vec3(0, 0, 0), h) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

    // anisotropic lengthscales weight each feature separately
    GpHyperparams h2 = unit_hyp();
    h2.lengthscales = Vec3(0.5, 1.0, 4.0);
    CHECK(se_kernel(Vec3(0.5, 0, 0), Vec3::Zero(), h2) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(se_kernel(Vec3(0, 0, 4.0), Vec3::Zero(), h2) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("residual_target: exact prediction gives zero, selection picks velocity rows") {
    const VehicleParams p;
    const TireParams t;
    VehicleState x;
    x.vx = 15.0;
    x.vy = 0.2;
    x.omega = 0.1;
    x.T = 400.0;
    x.delta = 0.03;
    const ControlRate u{40.0, -0.002};
    const VehicleState next = integrate_step(x, u, p, t, 0.05);
    CHECK(residual_target(x, u, next, p, t, 0.05).cwiseAbs().maxCoeff() == 0.0);

    VehicleState bumped = next;
    bumped.vy += 0.1;
    const Vec3 y = residual_target(x, u, bumped, p, t, 0.05);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(y[2] == 0.0);

    // the pseudo-inverse selection is exact for any full-state offset
    Vec8 offset = Vec8::Zero();
    offset[3] = -0.04;
    offset[5] = 0.02;
    VehicleState shifted = VehicleState::from_vector(next.vector() + offset);
    const Vec3 y2 = residual_target(x, u, shifted, p, t, 0.05);
    CHECK(y2[0] == doctest::Approx(-0.04).epsilon(1e-12));
    CHECK(y2[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y2[2] == doctest::Approx(0.02).epsilon(1e-12));
}

TEST_CASE("ResidualMap: Bd injects the velocity subspace") {
    const auto Bd = ResidualMap::Bd();
    CHECK((Bd.transpose() * Bd - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0);
    Vec8 v = Vec8::Zero();
    v[3] = 1.5;
    v[4] = -2.5;
    v[5] = 3.5;
    CHECK(ResidualMap::select(v) == Vec3(1.5, -2.5, 3.5));
}

TEST_CASE("independence_score: empty, duplicate, and 2-point oracle") {
    const GpHyperparams h = unit_hyp();
    GpDataset d;
    d.budget = 10;
    CHECK(independence_score(Vec3(1, 2, 3), d, h) == doctest::Approx(h.sigma_f2));

    d.append(Vec3(0, 0, 0), Vec3::Zero());
    CHECK(independence_score(Vec3(0, 0, 0), d, h) == doctest::Approx(0.0).epsilon(1e-6));

    // two-point dictionary against the explicit 2x2 inverse
    d.append(Vec3(1.0, -0.5, 0.25), Vec3::Zero());
    const Vec3 z(0.4, 0.3, -0.2);
    const double k11 = h.sigma_f2, k22 = h.sigma_f2;
    const double k12 = se_kernel(d.Z.row(0), d.Z.row(1), h);
    const double k1z = se_kernel(d.Z.row(0), z, h);
    const double k2z = se_kernel(d.Z.row(1), z, h);
    const double det = k11 * k22 - k12 * k12;
    const double quad =
        (k22 * k1z * k1z - 2.0 * k12 * k1z * k2z + k11 * k2z * k2z) / det;
    const double expect = h.sigma_f2 - quad;
    CHECK(independence_score(z, d, h) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("maybe_insert: gates on validity, novelty, and budget") {
    const GpHyperparams h = unit_hyp();
    const double thresh = 1e-3;
    GpDataset d;
    d.budget = 2;

    ValidityReport valid;
    ValidityReport invalid;
    invalid.valid = false;
    invalid.violated.push_back(FeatureConstraint::slip_front);

    // invalid points are rejected outright
    auto rep = maybe_insert(d, Vec3(0, 0, 0), Vec3::Zero(), h, thresh, invalid);
    CHECK_FALSE(rep.accepted);
    CHECK(d.size() == 0);

    // empty dictionary accepts any valid point
    rep = maybe_insert(d, Vec3(0, 0, 0), Vec3(1, 2, 3), h, thresh, valid);
    CHECK(rep.accepted);
    CHECK(rep.gamma == doctest::Approx(h.sigma_f2));
    CHECK(d.size() == 1);

    // duplicates score near zero and are rejected
    rep = maybe_insert(d, Vec3(0, 0, 0), Vec3::Zero(), h, thresh, valid);
    CHECK_FALSE(rep.accepted);
    CHECK(rep.gamma < thresh);
    CHECK(d.size() == 1);

    // fill the budget with a far point, then insert a third far point:
    // the dictionary stays at budget and contains the newcomer
    rep = maybe_insert(d, Vec3(10, 0, 0), Vec3::Zero(), h, thresh, valid);
    CHECK(rep.accepted);
    CHECK(d.size() == 2);
    rep = maybe_insert(d, Vec3(0, 10, 0), Vec3(9, 9, 9), h, thresh, valid);
    CHECK(rep.accepted);
    CHECK(rep.evicted);
    CHECK(d.size() == 2);
    bool has_new = false;
    for (int i = 0; i < d.size(); ++i)
        if (d.Z.row(i) == Eigen::RowVector3d(0, 10, 0)) has_new = true;
    CHECK(has_new);
}

TEST_CASE("maybe_insert: eviction matches the brute-force leave-one-out oracle") {
    const GpHyperparams h = unit_hyp();
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        GpDataset d = random_dataset(rng, 6, 6);
        // brute force: remove each member, score it against the rest
        int expect = 0;
        double best = 1e300;
        for (int i = 0; i < d.size(); ++i) {
            GpDataset rest = d;
            rest.remove_row(i);
            const double s = independence_score(d.Z.row(i), rest, h);
            if (s < best - 1e-12) {
                best = s;
                expect = i;
            }
        }
        const Eigen::RowVector3d evict_row = d.Z.row(expect);
        GpDataset mutated = d;
        const auto rep =
            maybe_insert(mutated, Vec3(50, 50, 50), Vec3::Zero(), h, 1e-3, ValidityReport{});
        REQUIRE(rep.accepted);
        REQUIRE(rep.evicted);
        CHECK(rep.evicted_index == expect);
        // the evicted row is gone
        for (int i = 0; i < mutated.size(); ++i)
            if (mutated.Z.row(i) == evict_row) CHECK(false);
    }
}

TEST_CASE("dictionary invariant: budget respected, no near-duplicate pairs") {
    const GpHyperparams h = unit_hyp();
    const double thresh = 1e-3 * h.sigma_f2;
    GpDataset d;
    d.budget = 12;
    Rng rng(37);
    for (int i = 0; i < 400; ++i) {
        maybe_insert(d, random_z(rng, 3.0), random_z(rng, 0.1), h, thresh, ValidityReport{});
        CHECK(d.size() <= d.budget);
    }
    for (int i = 0; i < d.size(); ++i) {
        for (int j = 0; j < d.size(); ++j) {
            if (i == j) continue;
            GpDataset single;
            single.budget = 1;
            single.append(d.Z.row(j), Vec3::Zero());
            CHECK(independence_score(d.Z.row(i), single, h) > thresh / 10.0);
        }
    }
}

TEST_CASE("fit/predict: interpolation, reversion, and determinism") {
    GpHyperparams h = unit_hyp();
    h.sigma_n2 = Vec3(1e-12, 1e-12, 1e-12);
    GpDataset d;
    d.budget = 10;
    d.append(Vec3(0.5, -0.2, 0.1), Vec3(0.3, -0.6, 0.9));
    const GpModel m = fit(d, h);

    const GpPrediction at = m.predict(Vec3(0.5, -0.2, 0.1));
    CHECK(at.mean[0] == doctest::Approx(0.3).epsilon(1e-8));
    CHECK(at.mean[1] == doctest::Approx(-0.6).epsilon(1e-8));
    CHECK(at.mean[2] == doctest::Approx(0.9).epsilon(1e-8));
    CHECK(at.variance.maxCoeff() < 1e-8);

    const GpPrediction far = m.predict(Vec3(50, 50, 50));
    CHECK(far.mean.cwiseAbs().maxCoeff() < 1e-6 * 0.9);
    CHECK(far.variance[0] == doctest::Approx(h.sigma_f2).epsilon(1e-9));

    const GpModel m2 = fit(d, h);
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Vec3 z = random_z(rng);
        CHECK(m.predict(z).mean == m2.predict(z).mean);
        CHECK(m.predict(z).variance == m2.predict(z).variance);
    }

    GpDataset empty;
    CHECK_THROWS(fit(empty, h));
}

TEST_CASE("fit/predict: matches the dense oracle on random sets") {
    Rng rng(41);
    GpHyperparams h;
    h.lengthscales = Vec3(0.8, 1.3, 2.1);
    h.sigma_f2 = 0.7;
    h.sigma_n2 = Vec3(1e-4, 2e-4, 3e-4);
    for (int trial = 0; trial < 5; ++trial) {
        const GpDataset d = random_dataset(rng, 20);
        const GpModel m = fit(d, h);
        for (int i = 0; i < 5; ++i) {
            const Vec3 z = random_z(rng);
            const GpPrediction got = m.predict(z);
            const auto want =
                oracles::dense_gp_oracle(d.Z, d.Y, h.lengthscales, h.sigma_f2, h.sigma_n2, z);
            CHECK((got.mean - want.mean).cwiseAbs().maxCoeff() < 1e-8);
            CHECK((got.variance - want.variance).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("predict: variance bounds and monotone information") {
    Rng rng(43);
    GpHyperparams h = unit_hyp();
    h.sigma_n2 = Vec3(1e-6, 1e-6, 1e-6);
    const GpDataset d = random_dataset(rng, 15);
    const GpModel m = fit(d, h);
    for (int i = 0; i < 200; ++i) {
        const Vec3 z = random_z(rng, 4.0);
        const GpPrediction pred = m.predict(z);
        CHECK(pred.variance.minCoeff() >= 0.0);
        CHECK(pred.variance.maxCoeff() <= h.sigma_f2 + 1e-9);
    }

    // adding a training point never increases posterior variance
    for (int trial = 0; trial < 10; ++trial) {
        GpDataset bigger = d;
        bigger.append(random_z(rng), random_z(rng, 0.1));
        const GpModel m2 = fit(bigger, h);
        for (int i = 0; i < 20; ++i) {
            const Vec3 z = random_z(rng, 3.0);
            CHECK(m2.predict(z).variance.maxCoeff() <=
                  m.predict(z).variance.maxCoeff() + 1e-8);
        }
    }
}

TEST_CASE("predict: permuting output columns permutes means") {
    Rng rng(47);
    GpHyperparams h = unit_hyp();
    h.sigma_n2 = Vec3(1e-6, 1e-6, 1e-6);  // equal noise so outputs are symmetric
    GpDataset d = random_dataset(rng, 12);
    GpDataset swapped = d;
    swapped.Y.col(0).swap(swapped.Y.col(2));
    const GpModel m1 = fit(d, h);
    const GpModel m2 = fit(swapped, h);
    for (int i = 0; i < 20; ++i) {
        const Vec3 z = random_z(rng);
        const Vec3 a = m1.predict(z).mean;
        const Vec3 b = m2.predict(z).mean;
        CHECK(a[0] == doctest::Approx(b[2]).epsilon(1e-12));
        CHECK(a[2] == doctest::Approx(b[0]).epsilon(1e-12));
        CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));
    }
}

TEST_CASE("fit: jitter escalation saves duplicate rows at zero noise") {
    GpHyperparams h = unit_hyp();
    h.sigma_n2 = Vec3(1e-18, 1e-18, 1e-18);
    GpDataset d;
    d.budget = 4;
    d.append(Vec3(1, 1, 1), Vec3(0.5, 0, 0));
    d.append(Vec3(1, 1, 1), Vec3(0.5, 0, 0));  // exact duplicate
    const GpModel m = fit(d, h);
    CHECK(m.predict(Vec3(1, 1, 1)).mean[0] == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("is_valid_sample: origin valid, boundary closed, violations named") {
    const VehicleParams p;
    const TireParams t;
    FeatureBounds b;

    CHECK(is_valid_sample({0, 0, 0}, p, t, b).valid);

    // exact front-ellipse boundary stays valid (closed region)
    const double Ffy_cap = b.p_ellipse * t.Df;
    CHECK(is_valid_forces({0.0, Ffy_cap, 0.0, 0.0}, 0.0, 0.0, t, b).valid);
    CHECK_FALSE(is_valid_forces({0.0, Ffy_cap * (1 + 1e-9), 0.0, 0.0}, 0.0, 0.0, t, b).valid);

    const auto rep = is_valid_forces({0, 0, 0, 0}, b.alpha_max + 0.01, 0.0, t, b);
    CHECK_FALSE(rep.valid);
    REQUIRE(rep.violated.size() >= 1);
    CHECK(rep.violated.front() == FeatureConstraint::slip_front);

    // torque beyond the ellipse cap fails through the force map
    const double T_cap = p.r_wheel * (b.p_ellipse * t.Df / b.p_long + p.Cfr) / p.kappa;
    const auto rep2 = is_valid_sample({0, 0, 1.1 * T_cap}, p, t, b);
    CHECK_FALSE(rep2.valid);
    CHECK(rep2.violated.front() == FeatureConstraint::ellipse_front);

    const auto rep3 = is_valid_forces({0, 0, 0, 0}, 0.04, -0.04, t, b);
    CHECK_FALSE(rep3.valid);
    CHECK(rep3.violated.front() == FeatureConstraint::slip_diff);
}

TEST_CASE("dataset CSV round trip") {
    Rng rng(53);
    const GpDataset d = random_dataset(rng, 7, 50);
    const auto dir = std::filesystem::temp_directory_path() / "lbmpcc_gp_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "dataset.csv").string();
    save_dataset(path, d);
    const GpDataset d2 = load_dataset(path, 50);
    CHECK(d2.budget == 50);
    REQUIRE(d2.size() == d.size());
    CHECK((d.Z - d2.Z).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d.Y - d2.Y).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS(load_dataset(path, 3));  // exceeds budget
}
