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

#include "lbmpcc/track.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lbmpcc/io.hpp"

namespace lbmpcc {

namespace {

constexpr double kClosureTol = 1e-3;  // endpoint coincidence => closed [m]

double wrap_to_pi(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

}  // namespace

Track Track::from_points(const std::vector<double>& x_in, const std::vector<double>& y_in,
                         const std::vector<double>& heading_in, double resample_spacing) {
    if (x_in.size() != y_in.size())
        throw std::runtime_error("track: x and y column lengths differ");
    if (!heading_in.empty() && heading_in.size() != x_in.size())
        throw std::runtime_error("track: heading column length differs");
    if (!(resample_spacing > 0.0))
        throw std::runtime_error("track: resample spacing must be positive");

    // drop consecutive duplicates
    std::vector<double> x, y, h;
    for (size_t i = 0; i < x_in.size(); ++i) {
        if (!i || std::hypot(x_in[i] - x.back(), y_in[i] - y.back()) > 1e-9) {
            x.push_back(x_in[i]);
            y.push_back(y_in[i]);
            if (!heading_in.empty()) h.push_back(heading_in[i]);
        }
    }
    if (x.size() < 2) throw std::runtime_error("track: need at least 2 distinct points");

    Track t;
    t.closed_ = std::hypot(x.front() - x.back(), y.front() - y.back()) <= kClosureTol;
    if (t.closed_) {
        // snap the closing vertex onto the start exactly
        x.back() = x.front();
        y.back() = y.front();
        if (!h.empty()) h.back() = h.front();
        if (x.size() < 3) throw std::runtime_error("track: closed track needs at least 3 distinct points");
    }

    // densify each chord to roughly resample_spacing
    std::vector<double> xd, yd, hd;
    for (size_t i = 0; i + 1 < x.size(); ++i) {
        const double len = std::hypot(x[i + 1] - x[i], y[i + 1] - y[i]);
        // the epsilon keeps chords that already sit at the target spacing
        // from being split again on a save/load round trip
        const int nsub = std::max(1, static_cast<int>(std::ceil(len / resample_spacing - 1e-9)));
        for (int j = 0; j < nsub; ++j) {
            const double a = static_cast<double>(j) / nsub;
            xd.push_back(x[i] + a * (x[i + 1] - x[i]));
            yd.push_back(y[i] + a * (y[i + 1] - y[i]));
            if (!h.empty()) hd.push_back(h[i] + a * wrap_to_pi(h[i + 1] - h[i]));
        }
    }
    xd.push_back(x.back());
    yd.push_back(y.back());
    if (!h.empty()) hd.push_back(h.back());
    if (xd.size() < 3) throw std::runtime_error("track: fewer than 3 samples after densification");

    const size_t n = xd.size();
    t.samples_.resize(n);
    double theta = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (i) {
            const double ds = std::hypot(xd[i] - xd[i - 1], yd[i] - yd[i - 1]);
            if (!(ds > 0.0)) throw std::runtime_error("track: non-monotone arc length");
            theta += ds;
        }
        t.samples_[i].theta = theta;
        t.samples_[i].Xc = xd[i];
        t.samples_[i].Yc = yd[i];
    }
    t.theta_max_ = theta;

    // headings: supplied values, or central finite differences of position
    std::vector<double> raw(n);
    if (!hd.empty()) {
        raw = hd;
    } else {
        for (size_t i = 0; i < n; ++i) {
            size_t ip, im;
            if (t.closed_) {
                // sample n-1 duplicates sample 0, so the ring has n-1 nodes
                ip = (i + 1) % (n - 1);
                im = (i + n - 2) % (n - 1);
            } else {
                ip = std::min(i + 1, n - 1);
                im = i > 0 ? i - 1 : 0;
            }
            raw[i] = std::atan2(yd[ip] - yd[im], xd[ip] - xd[im]);
        }
    }
    t.samples_[0].Phic = raw[0];
    for (size_t i = 1; i < n; ++i)
        t.samples_[i].Phic = t.samples_[i - 1].Phic + wrap_to_pi(raw[i] - t.samples_[i - 1].Phic);

    return t;
}

double Track::wrap(double theta) const {
    if (closed_) {
        double w = std::fmod(theta, theta_max_);
        if (w < 0.0) w += theta_max_;
        return w;
    }
    return std::clamp(theta, 0.0, theta_max_);
}

size_t Track::segment_index(double theta) const {
    auto it = std::upper_bound(samples_.begin(), samples_.end(), theta,
                               [](double v, const CenterlinePoint& p) { return v < p.theta; });
    size_t i = static_cast<size_t>(std::distance(samples_.begin(), it));
    if (i == 0) return 0;
    return std::min(i - 1, samples_.size() - 2);
}

CenterlinePoint Track::query(double theta) const {
    const double w = wrap(theta);
    const size_t i = segment_index(w);
    const CenterlinePoint& a = samples_[i];
    const CenterlinePoint& b = samples_[i + 1];
    const double span = b.theta - a.theta;
    const double s = span > 0.0 ? (w - a.theta) / span : 0.0;
    CenterlinePoint out;
    out.theta = w;
    out.Xc = a.Xc + s * (b.Xc - a.Xc);
    out.Yc = a.Yc + s * (b.Yc - a.Yc);
    out.Phic = a.Phic + s * (b.Phic - a.Phic);
    return out;
}

double Track::project(double X, double Y, double theta_hint, double window) const {
    const size_t nseg = samples_.size() - 1;
    size_t first = 0, count = nseg;
    if (theta_hint >= 0.0) {
        const size_t i_hint = segment_index(wrap(theta_hint));
        // walk outward by arc length on both sides of the hint segment
        const double mean_ds = theta_max_ / static_cast<double>(nseg);
        const size_t reach = std::min(nseg, static_cast<size_t>(window / mean_ds) + 2);
        if (closed_) {
            first = (i_hint + nseg - reach) % nseg;
            count = std::min(nseg, 2 * reach + 1);
        } else {
            first = i_hint > reach ? i_hint - reach : 0;
            const size_t last = std::min(nseg - 1, i_hint + reach);
            count = last - first + 1;
        }
    }

    double best_d2 = std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    for (size_t k = 0; k < count; ++k) {
        const size_t i = closed_ ? (first + k) % nseg : first + k;
        const CenterlinePoint& a = samples_[i];
        const CenterlinePoint& b = samples_[i + 1];
        const double ex = b.Xc - a.Xc, ey = b.Yc - a.Yc;
        const double L2 = ex * ex + ey * ey;
        double s = L2 > 0.0 ? ((X - a.Xc) * ex + (Y - a.Yc) * ey) / L2 : 0.0;
        s = std::clamp(s, 0.0, 1.0);
        const double px = a.Xc + s * ex, py = a.Yc + s * ey;
        const double d2 = (X - px) * (X - px) + (Y - py) * (Y - py);
        if (d2 < best_d2 - 1e-15) {
            best_d2 = d2;
            best_theta = a.theta + s * (b.theta - a.theta);
        }
    }
    return wrap(best_theta);
}

std::pair<double, double> Track::contouring_errors(double X, double Y, double theta) const {
    const CenterlinePoint c = query(theta);
    const double dx = X - c.Xc, dy = Y - c.Yc;
    const double cp = std::cos(c.Phic), sp = std::sin(c.Phic);
    const double e_l = -cp * dx - sp * dy;
    const double e_c = sp * dx - cp * dy;
    return {e_l, e_c};
}

Track::ErrorLinearization Track::linearize_errors(double X, double Y, double theta) const {
    ErrorLinearization lin;
    const CenterlinePoint c = query(theta);
    const double cp = std::cos(c.Phic), sp = std::sin(c.Phic);
    std::tie(lin.e_l, lin.e_c) = contouring_errors(X, Y, theta);
    lin.del_dX = -cp;
    lin.del_dY = -sp;
    lin.dec_dX = sp;
    lin.dec_dY = -cp;

    const double h = 1e-3;
    const auto [el_p, ec_p] = contouring_errors(X, Y, theta + h);
    const auto [el_m, ec_m] = contouring_errors(X, Y, theta - h);
    lin.del_dtheta = (el_p - el_m) / (2.0 * h);
    lin.dec_dtheta = (ec_p - ec_m) / (2.0 * h);
    return lin;
}

Track load_centerline(const std::string& path, double resample_spacing) {
    const auto rows = io::load_csv(path);
    if (rows.size() < 2) throw std::runtime_error(path + ": need at least 2 centerline points");
    std::vector<double> x, y, h;
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 2 && r.size() != 3)
            throw std::runtime_error(path + ": row " + std::to_string(i + 1) +
                                     " must have 2 or 3 columns (x,y[,heading])");
        if (r.size() != rows[0].size())
            throw std::runtime_error(path + ": inconsistent column count at row " + std::to_string(i + 1));
        x.push_back(r[0]);
        y.push_back(r[1]);
        if (r.size() == 3) h.push_back(r[2]);
    }
    return Track::from_points(x, y, h, resample_spacing);
}

void save_centerline(const std::string& path, const Track& track) {
    std::string text = "x,y,heading\n";
    for (const auto& s : track.samples())
        text += io::format_double(s.Xc) + "," + io::format_double(s.Yc) + "," +
                io::format_double(s.Phic) + "\n";
    io::write_file_atomic(path, text);
}

}  // namespace lbmpcc
