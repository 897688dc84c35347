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

#include <string>
#include <vector>

namespace lbmpcc {

struct CenterlinePoint {
    double theta = 0.0;  // arc length [m]
    double Xc = 0.0;     // [m]
    double Yc = 0.0;     // [m]
    double Phic = 0.0;   // heading, unwrap-continuous across samples [rad]
};

/// Progress along the centerline: path parameter and its velocity.
struct ProgressState {
    double theta = 0.0;  // [m]
    double vs = 0.0;     // [m/s]
};

/**
 * @brief Arc-length-parameterized centerline, piecewise linear in
 * position with linearly interpolated (unwrapped) heading.
 *
 * Closed tracks are periodic in theta: the final sample coincides with
 * the first and queries wrap modulo theta_max.
 */
class Track {
public:
    /// Builds from raw polyline vertices (x, y) with optional headings.
    /// Arc length is recomputed from chord lengths, the polyline is
    /// densified to roughly resample_spacing, and headings are derived
    /// from finite differences when not supplied.
    static Track from_points(const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<double>& heading = {},
                             double resample_spacing = 0.5);

    double theta_max() const { return theta_max_; }
    bool closed() const { return closed_; }
    const std::vector<CenterlinePoint>& samples() const { return samples_; }

    /// Wraps theta into [0, theta_max) for closed tracks; clamps for open.
    double wrap(double theta) const;

    /// Centerline position and heading at theta.
    CenterlinePoint query(double theta) const;

    /// Theta of the closest centerline point within +-window meters of
    /// theta_hint (exact per-segment foot points). A negative hint scans
    /// the whole track.
    double project(double X, double Y, double theta_hint, double window = 20.0) const;

    /// Lag and contour errors of a position against the reference point
    /// at theta: e_l along the track tangent (negated), e_c across it.
    std::pair<double, double> contouring_errors(double X, double Y, double theta) const;

    struct ErrorLinearization {
        double e_l = 0.0, e_c = 0.0;       // values at the expansion point
        double del_dX = 0.0, del_dY = 0.0, del_dtheta = 0.0;
        double dec_dX = 0.0, dec_dY = 0.0, dec_dtheta = 0.0;
    };

    /// First-order model of (e_l, e_c) in (X, Y, theta). The position
    /// gradients are analytic; the theta gradients come from central
    /// finite differences of query.
    ErrorLinearization linearize_errors(double X, double Y, double theta) const;

private:
    std::vector<CenterlinePoint> samples_;
    double theta_max_ = 0.0;
    bool closed_ = false;

    size_t segment_index(double theta) const;
};

/// Reads a centerline CSV (columns x,y[,heading]; '#' comments; optional
/// header row) and builds the track. Throws on malformed rows, fewer
/// than 3 points, or non-monotone recomputed arc length.
Track load_centerline(const std::string& path, double resample_spacing = 0.5);

/// Writes samples back out as "x,y,heading" rows.
void save_centerline(const std::string& path, const Track& track);

}  // namespace lbmpcc
