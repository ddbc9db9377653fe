#pragma once

// Independent reference computations used only by the tests. None of these
// call into the code paths they are used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "qwise/raster.hpp"

namespace oracle {

inline constexpr double pi = std::numbers::pi;

// Eigenvalues of a real symmetric 3x3 matrix via the trigonometric solution
// of the characteristic cubic, ascending.
inline std::array<double, 3> symmetric_eigenvalues(const std::array<std::array<double, 3>, 3>& a) {
    const double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if (p1 == 0.0) {
        std::array<double, 3> e{a[0][0], a[1][1], a[2][2]};
        std::sort(e.begin(), e.end());
        return e;
    }
    const double p2 = (a[0][0] - q) * (a[0][0] - q) + (a[1][1] - q) * (a[1][1] - q) + (a[2][2] - q) * (a[2][2] - q) +
                      2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    std::array<std::array<double, 3>, 3> b{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) b[i][j] = (a[i][j] - (i == j ? q : 0.0)) / p;
    const double det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                       b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                       b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    const double r = std::clamp(det / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * pi / 3.0);
    const double e2 = 3.0 * q - e1 - e3;
    std::array<double, 3> e{e1, e2, e3};
    std::sort(e.begin(), e.end());
    return e;
}

// NV transitions for a field with on-axis part b_par and transverse magnitude
// b_perp, in the low-field regime where ms=0 is the lowest level.
inline std::pair<double, double> nv_transitions(double b_par, double b_perp, double gamma, double d) {
    const double s = gamma * b_perp / std::sqrt(2.0);
    const auto e = symmetric_eigenvalues({{{d + gamma * b_par, s, 0.0}, {s, 0.0, s}, {0.0, s, d - gamma * b_par}}});
    return {e[1] - e[0], e[2] - e[0]};
}

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

// B (tesla) of a uniformly charged rectangular wall by direct 2-D quadrature.
// normal_is_x: wall in the plane x = plane spanning y in [t0, t1]; otherwise
// plane y = plane spanning x in [t0, t1]. z spans [z0, z1].
inline qwise::Vec3 wall_field_quadrature(bool normal_is_x, double sigma, double plane, double t0, double t1,
                                         double z0, double z1, qwise::Vec3 at, int order = 64, int panels = 16) {
    const auto [gx, gw] = gauss_legendre(order);
    constexpr double mu0 = 4e-7 * pi;
    qwise::Vec3 h{};
    const double dt = (t1 - t0) / panels, dz = (z1 - z0) / panels;
    for (int pt = 0; pt < panels; ++pt)
        for (int pz = 0; pz < panels; ++pz)
            for (int i = 0; i < order; ++i)
                for (int j = 0; j < order; ++j) {
                    const double t = t0 + dt * (pt + 0.5 * (gx[i] + 1.0));
                    const double z = z0 + dz * (pz + 0.5 * (gx[j] + 1.0));
                    const qwise::Vec3 src = normal_is_x ? qwise::Vec3{plane, t, z} : qwise::Vec3{t, plane, z};
                    const qwise::Vec3 r = at - src;
                    const double rn = qwise::norm(r);
                    const double wgt = gw[i] * gw[j] * 0.25 * dt * dz;
                    h = h + (wgt / (rn * rn * rn)) * r;
                }
    return (mu0 * sigma / (4.0 * pi)) * h;
}

// Point dipole field (tesla) of moment m (A m^2) at displacement r.
inline qwise::Vec3 dipole_field(qwise::Vec3 m, qwise::Vec3 r) {
    constexpr double mu0 = 4e-7 * pi;
    const double rn = qwise::norm(r);
    const qwise::Vec3 rh = (1.0 / rn) * r;
    return (mu0 / (4.0 * pi * rn * rn * rn)) * (3.0 * qwise::dot(m, rh) * rh - m);
}

// Counts 4-connected regions of v > frac*max|v| and v < -frac*max|v|.
inline std::pair<int, int> count_sign_lobes(const qwise::RasterMap& map, double frac) {
    const std::size_t w = map.width(), h = map.height();
    const double thr = frac * qwise::max_abs(map.data());
    std::vector<int> label(w * h, 0);
    auto cls = [&](std::size_t k) {
        const double v = map.data()[k];
        return v > thr ? 1 : (v < -thr ? -1 : 0);
    };
    int pos = 0, neg = 0;
    for (std::size_t k = 0; k < w * h; ++k) {
        const int c = cls(k);
        if (c == 0 || label[k]) continue;
        (c > 0 ? pos : neg)++;
        std::vector<std::size_t> stack{k};
        label[k] = 1;
        while (!stack.empty()) {
            const std::size_t q = stack.back();
            stack.pop_back();
            const std::size_t x = q % w, y = q / w;
            const std::size_t nb[4] = {x > 0 ? q - 1 : q, x + 1 < w ? q + 1 : q, y > 0 ? q - w : q,
                                       y + 1 < h ? q + w : q};
            for (std::size_t n : nb)
                if (n != q && !label[n] && cls(n) == c) {
                    label[n] = 1;
                    stack.push_back(n);
                }
        }
    }
    return {pos, neg};
}

// Plain O(n^2) DFT magnitude of a real sequence at fractional bin k.
inline double dft_magnitude(const std::vector<double>& y, double k) {
    std::complex<double> acc{};
    const double n = static_cast<double>(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) acc += y[j] * std::polar(1.0, -2.0 * pi * k * j / n);
    return std::abs(acc);
}

// Bisection root of f on [lo, hi] with f(lo), f(hi) of opposite sign.
template <typename F>
double bisect(F f, double lo, double hi, int iters = 200) {
    double flo = f(lo);
    for (int i = 0; i < iters; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace oracle
