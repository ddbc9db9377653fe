#pragma once

// From fitted frequency maps to physical quantities: background plane,
// signed detuning, vector field, and the quantum dynamic range.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qwise/error.hpp"
#include "qwise/nv_esr.hpp"
#include "qwise/parallel.hpp"
#include "qwise/pixel_fit.hpp"
#include "qwise/raster.hpp"
#include "qwise/spin_dynamics.hpp"
#include "qwise/widefield_synth.hpp"

namespace qwise {

// z = a x + b y + c over pixel-center coordinates in meters.
struct PlaneFit {
    double a_hz_per_m = 0.0;
    double b_hz_per_m = 0.0;
    double c_hz = 0.0;
    double rms_hz = 0.0;
    std::size_t pixels_used = 0;

    double at(double x_m, double y_m) const noexcept { return a_hz_per_m * x_m + b_hz_per_m * y_m + c_hz; }
};

// Ordinary least squares on (x, y, 1) over finite, non-excluded pixels. The
// solve runs in centered micron coordinates.
inline PlaneFit fit_background_plane(const RasterMap& map, const Mask* exclude = nullptr) {
    if (exclude) require_same_shape(map, *exclude, "frequency map vs exclusion mask");
    std::vector<std::array<double, 3>> pts;
    for (std::size_t iy = 0; iy < map.height(); ++iy)
        for (std::size_t ix = 0; ix < map.width(); ++ix) {
            if (exclude && (*exclude)(ix, iy)) continue;
            const double z = map(ix, iy);
            if (!std::isfinite(z)) continue;
            pts.push_back({map.center_x_m(ix) * 1e6, map.center_y_m(iy) * 1e6, z});
        }
    if (pts.size() < 3) throw RankDeficiencyError("plane fit needs at least 3 usable pixels");
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
        mx += p[0];
        my += p[1];
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());

    Eigen::MatrixXd a(pts.size(), 3);
    Eigen::VectorXd z(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
        a.row(static_cast<Eigen::Index>(k)) << pts[k][0] - mx, pts[k][1] - my, 1.0;
        z(static_cast<Eigen::Index>(k)) = pts[k][2];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < 3) throw RankDeficiencyError("plane fit support is collinear");
    const Eigen::Vector3d coef = qr.solve(z);

    PlaneFit fit;
    fit.a_hz_per_m = coef(0) * 1e6;
    fit.b_hz_per_m = coef(1) * 1e6;
    fit.c_hz = coef(2) - coef(0) * mx - coef(1) * my;
    const Eigen::VectorXd resid = a * coef - z;
    fit.rms_hz = std::sqrt(resid.squaredNorm() / static_cast<double>(pts.size()));
    fit.pixels_used = pts.size();
    return fit;
}

inline RasterMap subtract_plane(const RasterMap& map, const PlaneFit& plane) {
    RasterMap out = map;
    for (std::size_t iy = 0; iy < map.height(); ++iy)
        for (std::size_t ix = 0; ix < map.width(); ++ix)
            out(ix, iy) = map(ix, iy) - plane.at(map.center_x_m(ix), map.center_y_m(iy));
    return out;
}

struct SignedDetuning {
    RasterMap sample_hz;     // signed sample detuning, total minus drive offset
    RasterMap total_hz;      // signed total detuning
    Mask indeterminate;      // |f| below resolution or not fitted
};

// Ramsey fits measure |drive offset + sample detuning|. Signs are assigned by
// continuity: each 4-connected region is seeded at its largest frequency with
// the sign of the drive offset, then flooded breadth-first (up, left, right,
// down). A pixel keeps the sign of the pixel it was reached from, except near
// a crossing (either total within the resolution of zero), where it takes the
// sign that puts its total closest to the linear extrapolation from that pixel
// and its own parent. Ties keep the drive offset's sign. Non-finite pixels are
// skipped and flagged.
inline SignedDetuning signed_detuning_map(const RasterMap& ramsey_freq_hz, double drive_offset_hz,
                                          double resolution_hz) {
    if (!(resolution_hz >= 0.0)) throw ContractError("frequency resolution must be >= 0");
    const std::size_t w = ramsey_freq_hz.width(), h = ramsey_freq_hz.height();
    const double pitch = ramsey_freq_hz.pixel_pitch_m();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SignedDetuning out{RasterMap(w, h, pitch, nan), RasterMap(w, h, pitch, nan), Mask(w, h, pitch, 0)};
    const double seed_sign = drive_offset_hz < 0.0 ? -1.0 : 1.0;

    std::vector<std::uint8_t> visited(w * h, 0);
    std::vector<std::size_t> parent(w * h, w * h);
    auto valid = [&](std::size_t k) { return std::isfinite(ramsey_freq_hz.data()[k]); };
    for (std::size_t k = 0; k < w * h; ++k) {
        if (!valid(k)) {
            visited[k] = 1;
            out.indeterminate.data()[k] = 1;
        }
    }
    for (;;) {
        std::size_t seed = w * h;
        for (std::size_t k = 0; k < w * h; ++k)
            if (!visited[k] && (seed == w * h || ramsey_freq_hz.data()[k] > ramsey_freq_hz.data()[seed])) seed = k;
        if (seed == w * h) break;
        std::deque<std::size_t> queue{seed};
        visited[seed] = 1;
        out.total_hz.data()[seed] = seed_sign * std::abs(ramsey_freq_hz.data()[seed]);
        while (!queue.empty()) {
            const std::size_t k = queue.front();
            queue.pop_front();
            const double here = out.total_hz.data()[k];
            const double predicted = parent[k] < w * h ? 2.0 * here - out.total_hz.data()[parent[k]] : here;
            const std::size_t ix = k % w, iy = k / w;
            const std::array<std::pair<bool, std::size_t>, 4> nbrs{{{iy > 0, k - w},
                                                                    {ix > 0, k - 1},
                                                                    {ix + 1 < w, k + 1},
                                                                    {iy + 1 < h, k + w}}};
            for (const auto& [ok, nk] : nbrs) {
                if (!ok || visited[nk]) continue;
                visited[nk] = 1;
                const double f = std::abs(ramsey_freq_hz.data()[nk]);
                double sign = here < 0.0 ? -1.0 : 1.0;
                if (std::min(std::abs(here), f) <= resolution_hz) {
                    const double plus = std::abs(f - predicted), minus = std::abs(-f - predicted);
                    sign = plus < minus ? 1.0 : (minus < plus ? -1.0 : seed_sign);
                }
                out.total_hz.data()[nk] = sign * f;
                parent[nk] = k;
                queue.push_back(nk);
            }
        }
    }
    for (std::size_t k = 0; k < w * h; ++k) {
        if (!valid(k)) continue;
        out.sample_hz.data()[k] = out.total_hz.data()[k] - drive_offset_hz;
        if (std::abs(ramsey_freq_hz.data()[k]) < resolution_hz) out.indeterminate.data()[k] = 1;
    }
    return out;
}

// Always-available unsigned variant: |f| - drive offset.
inline RasterMap unsigned_detuning_map(const RasterMap& ramsey_freq_hz, double drive_offset_hz) {
    RasterMap out = ramsey_freq_hz;
    for (double& v : out.data()) v = std::abs(v) - drive_offset_hz;
    return out;
}

inline VectorFieldMap reconstruct_vector_map(const std::array<const RasterMap*, 3>& shift_maps_hz,
                                             const std::array<Vec3, 3>& axes, const SpinConstants& c = {}) {
    for (const RasterMap* m : shift_maps_hz)
        if (!m) throw ContractError("reconstruct_vector_map needs three maps");
    require_same_shape(*shift_maps_hz[0], *shift_maps_hz[1], "shift maps 1 vs 2");
    require_same_shape(*shift_maps_hz[0], *shift_maps_hz[2], "shift maps 1 vs 3");
    const AxisInverter invert(axes, c);
    const RasterMap& ref = *shift_maps_hz[0];
    VectorFieldMap out(ref.width(), ref.height(), ref.pixel_pitch_m());
    for (std::size_t iy = 0; iy < ref.height(); ++iy)
        for (std::size_t ix = 0; ix < ref.width(); ++ix)
            out.set(ix, iy, invert({(*shift_maps_hz[0])(ix, iy), (*shift_maps_hz[1])(ix, iy), (*shift_maps_hz[2])(ix, iy)}));
    return out;
}

// Forward projection of a field map onto one axis, Hz.
inline RasterMap project_field(const VectorFieldMap& field, Vec3 axis, const SpinConstants& c = {}) {
    RasterMap out(field.width(), field.height(), field.pixel_pitch_m());
    for (std::size_t iy = 0; iy < field.height(); ++iy)
        for (std::size_t ix = 0; ix < field.width(); ++ix) out(ix, iy) = linear_shift(field.at(ix, iy), axis, c);
    return out;
}

struct DynamicRangeConfig {
    double error_threshold = 0.01;  // relative frequency error
    double contrast_floor = 0.10;   // peak-to-peak oscillation / reference level
    FitConfig fit{};
    unsigned threads = 0;
};

struct DynamicRangeRow {
    double delta_hz = 0.0;
    double true_frequency_hz = 0.0;
    double fitted_frequency_hz = 0.0;
    double relative_error = 0.0;
    double contrast = 0.0;
    bool converged = false;
    bool faithful = false;
};

struct DynamicRangeReport {
    SignalMode mode = SignalMode::ramsey;
    double delta_max_hz = 0.0;
    double error_threshold = 0.01;
    double contrast_floor = 0.10;
    std::vector<DynamicRangeRow> rows;
};

// Oscillation frequency a noiseless pixel shows at the given detuning.
inline double model_frequency(SignalMode mode, const RwaParams& p) {
    return mode == SignalMode::rabi ? effective_rabi_frequency(p) : std::abs(p.detuning_hz);
}

// Largest |delta| of the contiguous run of faithful magnitudes that starts at
// the smallest faithful magnitude; a magnitude counts only if every grid
// point with that |delta| is faithful.
inline double faithful_delta_max(const std::vector<DynamicRangeRow>& rows) {
    std::map<double, bool> by_magnitude;
    for (const auto& r : rows) {
        auto [it, inserted] = by_magnitude.try_emplace(std::abs(r.delta_hz), r.faithful);
        if (!inserted) it->second = it->second && r.faithful;
    }
    double best = 0.0;
    bool started = false;
    for (const auto& [mag, ok] : by_magnitude) {
        if (ok) {
            started = true;
            best = mag;
        } else if (started) {
            break;
        }
    }
    return best;
}

// Synthesizes one pixel per grid detuning (a 1-row stack, so each point has
// its own noise lane), fits it, and scores frequency recovery and contrast.
// The drive offset in p is ignored: each row's detuning is the grid value.
inline DynamicRangeReport dynamic_range_sweep(SignalMode mode, const RwaParams& p, std::span<const double> delta_grid_hz,
                                              const TimeGrid& grid, const NoiseModel& noise,
                                              const DynamicRangeConfig& cfg = {}) {
    if (delta_grid_hz.empty()) throw ContractError("dynamic range sweep needs a detuning grid");
    {
        std::vector<double> sorted(delta_grid_hz.begin(), delta_grid_hz.end());
        std::sort(sorted.begin(), sorted.end());
        const double scale = max_abs(sorted);
        for (std::size_t k = 0; k < sorted.size(); ++k)
            if (std::abs(sorted[k] + sorted[sorted.size() - 1 - k]) > 1e-9 * std::max(scale, 1.0))
                throw ContractError("detuning grid must be symmetric about zero");
    }
    RwaParams base = p;
    base.detuning_hz = 0.0;
    RasterMap deltas(delta_grid_hz.size(), 1, 1.0);
    std::copy(delta_grid_hz.begin(), delta_grid_hz.end(), deltas.data().begin());
    const ImageStack stack = synthesize(deltas, mode, base, grid, noise, {}, {}, cfg.threads);
    const StackFit fits = fit_stack(stack, cfg.fit, {cfg.threads, nullptr}, 1.0);

    DynamicRangeReport rep;
    rep.mode = mode;
    rep.error_threshold = cfg.error_threshold;
    rep.contrast_floor = cfg.contrast_floor;
    const double resolution = 1.0 / grid.window_s();
    for (std::size_t k = 0; k < delta_grid_hz.size(); ++k) {
        DynamicRangeRow row;
        row.delta_hz = delta_grid_hz[k];
        row.true_frequency_hz = model_frequency(mode, base.with_detuning(row.delta_hz));
        const PixelFit& pf = fits.pixels[k];
        const bool fitted = pf.status == FitStatus::converged || pf.status == FitStatus::max_iterations;
        row.converged = pf.converged;
        row.fitted_frequency_hz = fitted ? pf.params.frequency_hz : 0.0;
        row.contrast = fitted ? 2.0 * pf.params.amplitude : 0.0;
        row.relative_error =
            std::abs(row.fitted_frequency_hz - row.true_frequency_hz) / std::max(row.true_frequency_hz, resolution);
        row.faithful = fitted && row.relative_error < cfg.error_threshold && row.contrast > cfg.contrast_floor;
        rep.rows.push_back(row);
    }
    rep.delta_max_hz = faithful_delta_max(rep.rows);
    return rep;
}

// Ramsey frequency shift over Rabi frequency shift, delta / (sqrt(delta^2 + c^2) - c)
// with c = 2 eta the resonant Rabi frequency.
inline double ramsey_to_rabi_shift_ratio(double delta_hz, double rabi_frequency_hz) {
    const double d = std::abs(delta_hz);
    // (sqrt(d^2 + c^2) - c) rewritten without cancellation
    const double rabi_shift = d * d / (std::hypot(d, rabi_frequency_hz) + rabi_frequency_hz);
    return d / rabi_shift;
}

// Detuning at which the ratio above equals `ratio` (> 1): 2 r c / (r^2 - 1).
inline double detuning_for_shift_ratio(double ratio, double rabi_frequency_hz) {
    if (!(ratio > 1.0)) throw ContractError("shift ratio must exceed 1");
    return 2.0 * ratio * rabi_frequency_hz / (ratio * ratio - 1.0);
}

struct ShiftRatioProbe {
    double delta_hz = 0.0;
    double closed_form_ratio = 0.0;
    double fitted_ratio = 0.0;
    double ramsey_frequency_hz = 0.0;
    double rabi_frequency_hz = 0.0;
    double rabi_resonant_frequency_hz = 0.0;
};

// Fits noiseless Rabi traces at 0 and delta and a Ramsey trace at delta and
// compares the measured shift ratio with the closed form.
inline ShiftRatioProbe shift_ratio_probe(const RwaParams& p, double delta_hz, const TimeGrid& rabi_grid,
                                         const TimeGrid& ramsey_grid, const FitConfig& cfg = {}) {
    auto fit_freq = [&](SignalMode mode, double d, const TimeGrid& grid) {
        RwaParams q = p.with_detuning(d);
        std::vector<double> trace(grid.n);
        for (std::size_t j = 0; j < grid.n; ++j) trace[j] = signal(mode, q, grid.at(j));
        return fit_pixel(trace, grid, cfg).params.frequency_hz;
    };
    ShiftRatioProbe r;
    r.delta_hz = delta_hz;
    r.closed_form_ratio = ramsey_to_rabi_shift_ratio(delta_hz, 2.0 * p.drive_eta_hz);
    r.rabi_resonant_frequency_hz = fit_freq(SignalMode::rabi, 0.0, rabi_grid);
    r.rabi_frequency_hz = fit_freq(SignalMode::rabi, delta_hz, rabi_grid);
    r.ramsey_frequency_hz = fit_freq(SignalMode::ramsey, delta_hz, ramsey_grid);
    r.fitted_ratio = r.ramsey_frequency_hz / (r.rabi_frequency_hz - r.rabi_resonant_frequency_hz);
    return r;
}

}  // namespace qwise
