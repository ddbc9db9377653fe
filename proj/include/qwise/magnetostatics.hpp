#pragma once

// Stray field of a uniformly in-plane magnetized thin flake. Uniform M has no
// volume charge; the field comes from sheets of surface charge sigma = M.n on
// the side walls of the flake, which sit on pixel edges of the mask raster.
// The flake occupies 0 <= z <= thickness; the sensor plane is z = -standoff.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "qwise/error.hpp"
#include "qwise/image_stack.hpp"
#include "qwise/nv_esr.hpp"
#include "qwise/parallel.hpp"
#include "qwise/raster.hpp"

namespace qwise {

inline constexpr double mu0 = 4e-7 * std::numbers::pi;

struct FlakeGeometry {
    Mask mask;                 // nonzero = flake
    double thickness_m = 100e-9;
    double standoff_m = 100e-9;

    double pixel_pitch_m() const noexcept { return mask.pixel_pitch_m(); }

    void validate() const {
        if (!(thickness_m > 0.0)) throw ContractError("flake thickness must be > 0");
        if (!(standoff_m > 0.0)) throw ContractError("flake standoff must be > 0");
        if (!(mask.pixel_pitch_m() > 0.0)) throw ContractError("pixel pitch must be > 0");
        if (mask.width() == 0 || mask.height() == 0) throw ContractError("flake mask raster is empty");
    }
};

struct Magnetization {
    double ms_a_per_m = 0.0;
    double dir_x = 1.0;  // in-plane unit direction
    double dir_y = 0.0;

    void validate() const {
        if (!(ms_a_per_m >= 0.0) || !std::isfinite(ms_a_per_m)) throw ContractError("Ms must be finite and >= 0");
        if (std::abs(std::hypot(dir_x, dir_y) - 1.0) > 1e-9)
            throw ContractError("magnetization direction must be an in-plane unit vector");
    }

    static Magnetization along_angle(double ms, double angle_rad) {
        return {ms, std::cos(angle_rad), std::sin(angle_rad)};
    }
};

enum class StrayFieldBackend { prism, transform };

struct StrayFieldOptions {
    StrayFieldBackend backend = StrayFieldBackend::prism;
    unsigned threads = 0;
    // Largest padded transform length per dimension accepted by the transform backend.
    std::size_t max_transform_size = 16384;
};

inline Mask rectangle_mask(std::size_t width, std::size_t height, double pitch, std::size_t x0, std::size_t y0,
                           std::size_t x1, std::size_t y1) {
    Mask m(width, height, pitch, 0);
    for (std::size_t iy = y0; iy < std::min(y1, height); ++iy)
        for (std::size_t ix = x0; ix < std::min(x1, width); ++ix) m(ix, iy) = 1;
    return m;
}

namespace detail {

// log(a + R) where R^2 = a^2 + rest2; rewritten for a < 0 to avoid cancellation.
inline double log_a_plus_r(double a, double r, double rest2) {
    if (a >= 0.0) return std::log(a + r);
    return std::log(rest2) - std::log(r - a);
}

// Integral over v in [va, vb], w in [wa, wb] of (u, v, w) / R^3,
// R = sqrt(u^2 + v^2 + w^2): field of a unit-density rectangular sheet lying in
// the plane normal to the first component, times 4 pi. Components are returned
// as (normal, first tangential, second tangential).
inline Vec3 sheet_field_integral(double u, double va, double vb, double wa, double wb) {
    auto corner = [u](double v, double w) {
        const double u2 = u * u, v2 = v * v, w2 = w * w;
        const double r = std::sqrt(u2 + v2 + w2);
        const double fn = u == 0.0 ? 0.0 : std::atan(v * w / (u * r));
        const double fv = -log_a_plus_r(w, r, u2 + v2);
        const double fw = -log_a_plus_r(v, r, u2 + w2);
        return Vec3{fn, fv, fw};
    };
    return corner(vb, wb) - corner(va, wb) - corner(vb, wa) + corner(va, wa);
}

// B (tesla) at (X, Y, Z) from a side-wall sheet of charge sigma (A/m) on the
// plane x = x0 (normal_is_x) or y = y0, spanning [t0, t1] along the other
// in-plane axis and [z0, z1] vertically.
inline Vec3 wall_field(bool normal_is_x, double sigma, double plane, double t0, double t1, double z0, double z1,
                       double px, double py, double pz) {
    const double u = normal_is_x ? px - plane : py - plane;
    const double tang = normal_is_x ? py : px;
    const Vec3 g = sheet_field_integral(u, tang - t1, tang - t0, pz - z1, pz - z0);
    const double k = mu0 * sigma / (4.0 * std::numbers::pi);
    return normal_is_x ? Vec3{k * g.x, k * g.y, k * g.z} : Vec3{k * g.y, k * g.x, k * g.z};
}

struct Wall {
    bool normal_is_x;
    double sigma;
    double plane;
    double t0, t1;
};

inline std::vector<Wall> collect_walls(const FlakeGeometry& geom, const Magnetization& m) {
    const Mask& mask = geom.mask;
    const double p = mask.pixel_pitch_m();
    const std::size_t w = mask.width(), h = mask.height();
    auto inside = [&](std::ptrdiff_t ix, std::ptrdiff_t iy) -> double {
        if (ix < 0 || iy < 0 || ix >= static_cast<std::ptrdiff_t>(w) || iy >= static_cast<std::ptrdiff_t>(h)) return 0.0;
        return mask(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy)) ? 1.0 : 0.0;
    };
    std::vector<Wall> walls;
    const double sx = m.ms_a_per_m * m.dir_x;
    const double sy = m.ms_a_per_m * m.dir_y;
    for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix <= w; ++ix) {
            const auto i = static_cast<std::ptrdiff_t>(ix), j = static_cast<std::ptrdiff_t>(iy);
            const double q = sx * (inside(i - 1, j) - inside(i, j));
            if (q != 0.0) walls.push_back({true, q, ix * p, iy * p, (iy + 1) * p});
        }
    for (std::size_t iy = 0; iy <= h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
            const auto i = static_cast<std::ptrdiff_t>(ix), j = static_cast<std::ptrdiff_t>(iy);
            const double q = sy * (inside(i, j - 1) - inside(i, j));
            if (q != 0.0) walls.push_back({false, q, iy * p, ix * p, (ix + 1) * p});
        }
    return walls;
}

inline VectorFieldMap stray_field_prism(const FlakeGeometry& geom, const Magnetization& m, unsigned threads) {
    const std::size_t w = geom.mask.width(), h = geom.mask.height();
    const double p = geom.pixel_pitch_m();
    VectorFieldMap out(w, h, p);
    const std::vector<Wall> walls = collect_walls(geom, m);
    if (walls.empty()) return out;
    const double pz = -geom.standoff_m;
    parallel_for(h, threads, [&](std::size_t iy) {
        const double py = (iy + 0.5) * p;
        for (std::size_t ix = 0; ix < w; ++ix) {
            const double px = (ix + 0.5) * p;
            Vec3 b{};
            for (const Wall& wl : walls)
                b = b + wall_field(wl.normal_is_x, wl.sigma, wl.plane, wl.t0, wl.t1, 0.0, geom.thickness_m, px, py, pz);
            out.set(ix, iy, b);
        }
    });
    return out;
}

// 2, 3 and 5 smooth length >= n.
inline std::size_t fast_transform_size(std::size_t n) {
    for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
        std::size_t r = m;
        for (std::size_t f : {2u, 3u, 5u})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

struct FftwFree {
    void operator()(void* ptr) const noexcept { fftw_free(ptr); }
};
struct FftwPlanDestroy {
    void operator()(fftw_plan plan) const noexcept { fftw_destroy_plan(plan); }
};
using FftwPlan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, FftwPlanDestroy>;

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Real 2-D grid and its half-spectrum with forward/inverse plans.
class PaddedTransform {
public:
    PaddedTransform(std::size_t nx, std::size_t ny) : nx_(nx), ny_(ny), nxc_(nx / 2 + 1) {
        real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * nx * ny)));
        spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nxc_ * ny)));
        if (!real_ || !spec_) throw std::bad_alloc();
        std::lock_guard lock(fftw_planner_mutex());
        const int ix = static_cast<int>(nx), iy = static_cast<int>(ny);
        forward_.reset(fftw_plan_dft_r2c_2d(iy, ix, real_.get(), spec_.get(), FFTW_ESTIMATE));
        inverse_.reset(fftw_plan_dft_c2r_2d(iy, ix, spec_.get(), real_.get(), FFTW_ESTIMATE));
    }

    double* real() noexcept { return real_.get(); }
    std::size_t nx() const noexcept { return nx_; }
    std::size_t ny() const noexcept { return ny_; }
    std::size_t spectrum_size() const noexcept { return nxc_ * ny_; }

    std::vector<std::complex<double>> forward() {
        fftw_execute(forward_.get());
        std::vector<std::complex<double>> s(spectrum_size());
        for (std::size_t k = 0; k < s.size(); ++k) s[k] = {spec_.get()[k][0], spec_.get()[k][1]};
        return s;
    }

    // Inverse transform normalized by the grid size; result left in real().
    void inverse(const std::vector<std::complex<double>>& s) {
        for (std::size_t k = 0; k < s.size(); ++k) {
            spec_.get()[k][0] = s[k].real();
            spec_.get()[k][1] = s[k].imag();
        }
        fftw_execute(inverse_.get());
        const double scale = 1.0 / static_cast<double>(nx_ * ny_);
        for (std::size_t k = 0; k < nx_ * ny_; ++k) real_.get()[k] *= scale;
    }

private:
    std::size_t nx_, ny_, nxc_;
    std::unique_ptr<double, FftwFree> real_;
    std::unique_ptr<fftw_complex, FftwFree> spec_;
    FftwPlan forward_;
    FftwPlan inverse_;
};

// Convolves the wall-charge grids with the exact field of a single unit
// wall segment on zero-padded grids. Padding covers every offset between a
// wall and an output pixel, so the circular transform has no wrap-around.
inline VectorFieldMap stray_field_transform(const FlakeGeometry& geom, const Magnetization& m,
                                            std::size_t max_transform_size) {
    const std::size_t w = geom.mask.width(), h = geom.mask.height();
    const double p = geom.pixel_pitch_m();
    VectorFieldMap out(w, h, p);

    const std::size_t px = fast_transform_size(2 * (w + 1));
    const std::size_t py = fast_transform_size(2 * (h + 1));
    if (px > max_transform_size || py > max_transform_size || px > SIZE_MAX / py)
        throw ConfigError("padded transform grid " + std::to_string(px) + "x" + std::to_string(py) +
                              " exceeds max_transform_size " + std::to_string(max_transform_size),
                          "stray_field.max_transform_size");

    const std::vector<Wall> walls = collect_walls(geom, m);
    if (walls.empty()) return out;

    PaddedTransform tf(px, py);
    auto idx = [px](std::size_t i, std::size_t j) { return j * px + i; };
    // Wall index (i, j): x-walls sit at x = i p spanning row j; y-walls at y = j p spanning column i.
    auto charge_spectrum = [&](bool normal_is_x) {
        std::fill(tf.real(), tf.real() + px * py, 0.0);
        for (const Wall& wl : walls) {
            if (wl.normal_is_x != normal_is_x) continue;
            const auto a = static_cast<std::size_t>(std::llround(wl.plane / p));
            const auto b = static_cast<std::size_t>(std::llround(wl.t0 / p));
            if (normal_is_x)
                tf.real()[idx(a, b)] += wl.sigma;
            else
                tf.real()[idx(b, a)] += wl.sigma;
        }
        return tf.forward();
    };
    auto wrap = [](std::ptrdiff_t d, std::size_t n) {
        return static_cast<std::size_t>(d < 0 ? d + static_cast<std::ptrdiff_t>(n) : d);
    };
    // Field at output pixel (i', j') from a unit wall at (i, j), indexed by offset (i' - i, j' - j).
    auto kernel_spectra = [&](bool normal_is_x) {
        std::vector<std::vector<double>> k(3, std::vector<double>(px * py, 0.0));
        const auto ip = static_cast<std::ptrdiff_t>(px), jp = static_cast<std::ptrdiff_t>(py);
        for (std::ptrdiff_t dj = -(jp / 2) + 1; dj < jp / 2; ++dj)
            for (std::ptrdiff_t di = -(ip / 2) + 1; di < ip / 2; ++di) {
                // Offsets expressed in the wall's own frame: x-walls at plane 0 spanning [0, p].
                const double ox = (static_cast<double>(di) + 0.5) * p;
                const double oy = (static_cast<double>(dj) + 0.5) * p;
                const Vec3 b = normal_is_x
                                   ? wall_field(true, 1.0, 0.0, 0.0, p, 0.0, geom.thickness_m, ox, oy, -geom.standoff_m)
                                   : wall_field(false, 1.0, 0.0, 0.0, p, 0.0, geom.thickness_m, ox, oy, -geom.standoff_m);
                const std::size_t at = idx(wrap(di, px), wrap(dj, py));
                k[0][at] = b.x;
                k[1][at] = b.y;
                k[2][at] = b.z;
            }
        std::vector<std::vector<std::complex<double>>> spectra;
        for (auto& comp : k) {
            std::copy(comp.begin(), comp.end(), tf.real());
            spectra.push_back(tf.forward());
        }
        return spectra;
    };

    const auto qx = charge_spectrum(true);
    const auto qy = charge_spectrum(false);
    const auto kx = kernel_spectra(true);
    const auto ky = kernel_spectra(false);
    RasterMap* comps[3] = {&out.bx, &out.by, &out.bz};
    std::vector<std::complex<double>> prod(tf.spectrum_size());
    for (int c = 0; c < 3; ++c) {
        for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = qx[k] * kx[c][k] + qy[k] * ky[c][k];
        tf.inverse(prod);
        for (std::size_t iy = 0; iy < h; ++iy)
            for (std::size_t ix = 0; ix < w; ++ix) (*comps[c])(ix, iy) = tf.real()[idx(ix, iy)];
    }
    return out;
}

}  // namespace detail

// Field (tesla) on the sensor plane at the pixel centers of the mask raster.
inline VectorFieldMap stray_field(const FlakeGeometry& geom, const Magnetization& m,
                                  const StrayFieldOptions& opts = {}) {
    geom.validate();
    m.validate();
    if (opts.backend == StrayFieldBackend::prism) return detail::stray_field_prism(geom, m, opts.threads);
    return detail::stray_field_transform(geom, m, opts.max_transform_size);
}

// Per-pixel linear shift against one NV axis plus a uniform bias shift, Hz.
inline RasterMap field_to_detuning(const VectorFieldMap& field, Vec3 axis, const SpinConstants& c = {},
                                   double bias_shift_hz = 0.0) {
    RasterMap out(field.width(), field.height(), field.pixel_pitch_m());
    for (std::size_t iy = 0; iy < field.height(); ++iy)
        for (std::size_t ix = 0; ix < field.width(); ++ix)
            out(ix, iy) = linear_shift(field.at(ix, iy), axis, c) + bias_shift_hz;
    return out;
}

inline void require_factor(double factor) {
    if (!(factor >= 0.0 && factor <= 1.0)) throw ContractError("photoluminescence factor must lie in [0, 1]");
}

// Scales values under the flake footprint by `factor`; other pixels are untouched.
inline RasterMap mask_photoluminescence(const RasterMap& map, const Mask& mask, double factor) {
    require_same_shape(map, mask, "map vs flake mask");
    require_factor(factor);
    RasterMap out = map;
    for (std::size_t k = 0; k < out.size(); ++k)
        if (mask.data()[k]) out.data()[k] *= factor;
    return out;
}

inline ImageStack mask_photoluminescence(const ImageStack& stack, const Mask& mask, double factor) {
    if (stack.width() != mask.width() || stack.height() != mask.height())
        throw ContractError("shape mismatch: stack vs flake mask");
    require_factor(factor);
    ImageStack out = stack;
    for (std::size_t f = 0; f < out.frames(); ++f)
        for (std::size_t iy = 0; iy < out.height(); ++iy)
            for (std::size_t ix = 0; ix < out.width(); ++ix)
                if (mask(ix, iy)) out.at(ix, iy, f) *= factor;
    return out;
}

// Analysis-side variant: a weight raster (1 off-flake, `factor` on-flake)
// that fits and plane fits use to exclude or down-weight pixels.
inline RasterMap photoluminescence_weights(const Mask& mask, double factor) {
    require_factor(factor);
    RasterMap out(mask.width(), mask.height(), mask.pixel_pitch_m(), 1.0);
    for (std::size_t k = 0; k < out.size(); ++k)
        if (mask.data()[k]) out.data()[k] = factor;
    return out;
}

}  // namespace qwise
