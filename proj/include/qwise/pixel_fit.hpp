#pragma once

// Per-pixel damped-cosine fits y(t) = C + A cos(2 pi f t + phi) exp(-t / T).
//
// The solver works on scaled parameters (C, A, f*W, phi, W/T) with W the
// acquisition window, so all five unknowns are O(1) and the tolerances in
// FitConfig are dimensionless. A decay rate of zero means T = infinity.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qwise/error.hpp"
#include "qwise/image_stack.hpp"
#include "qwise/parallel.hpp"
#include "qwise/raster.hpp"
#include "qwise/spin_dynamics.hpp"

namespace qwise {

struct FitParams {
    double offset = 0.0;
    double amplitude = 0.0;
    double frequency_hz = 0.0;
    double phase_rad = 0.0;
    double decay_s = infinity;

    double operator()(double t_s) const {
        const double env = std::isinf(decay_s) ? 1.0 : std::exp(-t_s / decay_s);
        return offset + amplitude * std::cos(two_pi * frequency_hz * t_s + phase_rad) * env;
    }
};

// Wraps into (-pi, pi].
inline double wrap_phase(double phi) {
    double r = std::remainder(phi, two_pi);
    if (r <= -std::numbers::pi) r += two_pi;
    return r;
}

// A >= 0 (sign folded into phi), f >= 0, phi in (-pi, pi].
inline FitParams canonicalize(FitParams p) {
    if (p.frequency_hz < 0.0) {
        p.frequency_hz = -p.frequency_hz;
        p.phase_rad = -p.phase_rad;
    }
    if (p.amplitude < 0.0) {
        p.amplitude = -p.amplitude;
        p.phase_rad += std::numbers::pi;
    }
    p.phase_rad = wrap_phase(p.phase_rad);
    return p;
}

struct FitConfig {
    int max_iterations = 200;
    double gradient_tolerance = 1e-10;
    double step_tolerance = 1e-12;
    double initial_damping = 1e-3;
    double damping_scale = 10.0;
    double min_frequency_hz = 0.0;
    double max_frequency_hz = 0.0;  // 0 => Nyquist of the time grid
    bool record_history = false;

    void validate() const {
        if (max_iterations <= 0 || !(gradient_tolerance > 0.0) || !(step_tolerance > 0.0) ||
            !(initial_damping > 0.0) || !(damping_scale > 1.0))
            throw ContractError("fit configuration values must be positive (damping scale > 1)");
        if (min_frequency_hz < 0.0 || max_frequency_hz < 0.0) throw ContractError("frequency bounds must be >= 0");
    }
};

enum class FitStatus : std::uint8_t { converged, max_iterations, degenerate, excluded, data_error };

inline const char* to_string(FitStatus s) {
    switch (s) {
        case FitStatus::converged: return "converged";
        case FitStatus::max_iterations: return "max_iterations";
        case FitStatus::degenerate: return "degenerate";
        case FitStatus::excluded: return "excluded";
        case FitStatus::data_error: return "data_error";
    }
    return "unknown";
}

struct PixelFit {
    FitParams params;
    double residual_rms = 0.0;
    int iterations = 0;
    bool converged = false;
    FitStatus status = FitStatus::max_iterations;
    std::array<double, 5> variance{};  // C, A, f, phi, T
    std::vector<double> accepted_costs;  // filled when FitConfig::record_history
};

struct InitialGuess {
    FitParams params;
    bool degenerate = false;
};

namespace detail {

inline void require_finite(std::span<const double> trace) {
    for (double v : trace)
        if (!std::isfinite(v)) throw DataError("trace contains NaN or infinite samples");
}

}  // namespace detail

// Mean, sqrt(2) std, and a frequency/phase estimate from the peak of the
// Hann-tapered DFT, refined by a three-point parabola on log magnitude. Ties
// pick the lowest bin.
inline InitialGuess initialize_guess(std::span<const double> trace, const TimeGrid& grid) {
    const std::size_t n = trace.size();
    if (n < 8) throw ContractError("initial guess needs at least 8 samples");
    if (n != grid.n) throw ContractError("trace length does not match time grid");
    detail::require_finite(trace);

    double mean = 0.0;
    for (double v : trace) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> centered(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        centered[j] = trace[j] - mean;
        var += centered[j] * centered[j];
    }
    const double std_dev = std::sqrt(var / static_cast<double>(n));

    InitialGuess g;
    g.params.offset = mean;
    g.params.decay_s = 0.5 * grid.window_s();
    if (std_dev < 1e-12) {
        g.params.amplitude = 0.0;
        g.params.frequency_hz = 0.0;
        g.degenerate = true;
        return g;
    }
    g.params.amplitude = std::sqrt(2.0) * std_dev;

    const double nd = static_cast<double>(n);
    std::vector<double> tapered(n);
    for (std::size_t j = 0; j < n; ++j)
        tapered[j] = centered[j] * (0.5 - 0.5 * std::cos(two_pi * static_cast<double>(j) / nd));

    const std::size_t kmax = n / 2;
    std::vector<std::complex<double>> spectrum(kmax + 1);
    for (std::size_t k = 0; k <= kmax; ++k) {
        const double theta = -two_pi * static_cast<double>(k) / nd;
        const std::complex<double> step(std::cos(theta), std::sin(theta));
        std::complex<double> phasor(1.0, 0.0), acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            acc += tapered[j] * phasor;
            // re-seed to limit drift of the recurrence
            phasor = (j % 64 == 63) ? std::polar(1.0, theta * static_cast<double>(j + 1)) : phasor * step;
        }
        spectrum[k] = acc;
    }
    std::size_t peak = 1;
    for (std::size_t k = 2; k <= kmax; ++k)
        if (std::abs(spectrum[k]) > std::abs(spectrum[peak])) peak = k;

    double delta = 0.0;
    if (peak + 1 <= kmax) {
        const double a = std::abs(spectrum[peak - 1]);
        const double b = std::abs(spectrum[peak]);
        const double c = std::abs(spectrum[peak + 1]);
        if (a > 1e-9 * b && c > 1e-9 * b) {
            const double la = std::log(a), lb = std::log(b), lc = std::log(c);
            const double denom = la - 2.0 * lb + lc;
            if (denom < 0.0) delta = std::clamp(0.5 * (la - lc) / denom, -0.5, 0.5);
        }
    }
    const double f = (static_cast<double>(peak) + delta) / (nd * grid.dt_s);
    g.params.frequency_hz = f;
    // Bin argument is the phase at sample 0; an off-bin peak lags by pi*delta*(n-1)/n.
    const double phase_at_t0 = std::arg(spectrum[peak]) - std::numbers::pi * delta * (nd - 1.0) / nd;
    g.params.phase_rad = wrap_phase(phase_at_t0 - two_pi * f * grid.t0_s);
    return g;
}

namespace detail {

struct ScaledProblem {
    std::span<const double> y;
    std::vector<double> tau;  // t / W
    double window;

    using Vec5 = Eigen::Matrix<double, 5, 1>;

    double model(const Vec5& x, std::size_t j) const {
        return x(0) + x(1) * std::cos(two_pi * x(2) * tau[j] + x(3)) * std::exp(-x(4) * tau[j]);
    }

    double cost(const Vec5& x) const {
        double s = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            const double r = model(x, j) - y[j];
            s += r * r;
        }
        return 0.5 * s;
    }

    // Accumulates J^T J and J^T r without storing J.
    void normal_equations(const Vec5& x, Eigen::Matrix<double, 5, 5>& jtj, Vec5& jtr) const {
        jtj.setZero();
        jtr.setZero();
        Vec5 row;
        for (std::size_t j = 0; j < y.size(); ++j) {
            const double t = tau[j];
            const double theta = two_pi * x(2) * t + x(3);
            const double e = std::exp(-x(4) * t);
            const double c = std::cos(theta) * e;
            const double s = std::sin(theta) * e;
            row << 1.0, c, -x(1) * s * two_pi * t, -x(1) * s, -x(1) * c * t;
            const double r = x(0) + x(1) * c - y[j];
            jtj.selfadjointView<Eigen::Lower>().rankUpdate(row);
            jtr += r * row;
        }
        jtj.triangularView<Eigen::StrictlyUpper>() = jtj.transpose();
    }
};

}  // namespace detail

// Analytic Jacobian of the damped cosine with respect to (C, A, f, phi, T) in
// physical units; exposed for verification against finite differences.
inline std::array<double, 5> damped_cosine_jacobian(const FitParams& p, double t_s) {
    const double e = std::isinf(p.decay_s) ? 1.0 : std::exp(-t_s / p.decay_s);
    const double theta = two_pi * p.frequency_hz * t_s + p.phase_rad;
    const double c = std::cos(theta) * e, s = std::sin(theta) * e;
    const double d_decay = std::isinf(p.decay_s) ? 0.0 : p.amplitude * c * t_s / (p.decay_s * p.decay_s);
    return {1.0, c, -p.amplitude * s * two_pi * t_s, -p.amplitude * s, d_decay};
}

// Levenberg-Marquardt from the DFT guess. Accepted steps strictly decrease the
// squared residual; the frequency is projected onto its bounds and the decay
// rate onto [0, inf) before each step is evaluated.
inline PixelFit fit_pixel(std::span<const double> trace, const TimeGrid& grid, const FitConfig& cfg = {}) {
    grid.validate();
    cfg.validate();
    if (trace.size() != grid.n) throw ContractError("trace length does not match time grid");
    detail::require_finite(trace);

    PixelFit out;
    const InitialGuess guess = initialize_guess(trace, grid);
    if (guess.degenerate) {
        out.params = guess.params;
        out.status = FitStatus::degenerate;
        double s = 0.0;
        for (double v : trace) s += (v - guess.params.offset) * (v - guess.params.offset);
        out.residual_rms = std::sqrt(s / static_cast<double>(trace.size()));
        return out;
    }

    const double window = grid.window_s();
    detail::ScaledProblem prob{trace, std::vector<double>(grid.n), window};
    for (std::size_t j = 0; j < grid.n; ++j) prob.tau[j] = grid.at(j) / window;

    const double f_hi = (cfg.max_frequency_hz > 0.0 ? cfg.max_frequency_hz : grid.nyquist_hz()) * window;
    const double f_lo = cfg.min_frequency_hz * window;
    auto project = [&](detail::ScaledProblem::Vec5 x) {
        x(2) = std::clamp(x(2), f_lo, f_hi);
        x(4) = std::max(x(4), 0.0);
        return x;
    };

    using Vec5 = detail::ScaledProblem::Vec5;
    Vec5 x;
    x << guess.params.offset, guess.params.amplitude, guess.params.frequency_hz * window, guess.params.phase_rad,
        window / guess.params.decay_s;
    x = project(x);
    double cost = prob.cost(x);
    if (cfg.record_history) out.accepted_costs.push_back(cost);

    double lambda = cfg.initial_damping;
    Eigen::Matrix<double, 5, 5> jtj;
    Vec5 jtr;
    bool converged = false;
    int it = 0;
    prob.normal_equations(x, jtj, jtr);
    for (; it < cfg.max_iterations; ++it) {
        // parameters held at a bound by a gradient pointing outward stay frozen
        std::array<bool, 5> frozen{};
        frozen[2] = (x(2) <= f_lo && jtr(2) > 0.0) || (x(2) >= f_hi && jtr(2) < 0.0);
        frozen[4] = x(4) <= 0.0 && jtr(4) > 0.0;
        Vec5 g = jtr;
        for (int k = 0; k < 5; ++k)
            if (frozen[k]) g(k) = 0.0;
        if (g.lpNorm<Eigen::Infinity>() < cfg.gradient_tolerance) {
            converged = true;
            break;
        }
        Eigen::Matrix<double, 5, 5> a = jtj;
        for (int k = 0; k < 5; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
        for (int k = 0; k < 5; ++k) {
            if (!frozen[k]) continue;
            a.row(k).setZero();
            a.col(k).setZero();
            a(k, k) = 1.0;
        }
        const Vec5 step = a.ldlt().solve(-g);
        const Vec5 trial = project(x + step);
        const double trial_cost = prob.cost(trial);
        const double moved = (trial - x).norm();
        const bool tiny = moved < cfg.step_tolerance * (x.norm() + cfg.step_tolerance);
        if (std::isfinite(trial_cost) && trial_cost < cost) {
            x = trial;
            cost = trial_cost;
            if (cfg.record_history) out.accepted_costs.push_back(cost);
            lambda = std::max(lambda / cfg.damping_scale, 1e-15);
            prob.normal_equations(x, jtj, jtr);
            if (tiny) {
                converged = true;
                ++it;
                break;
            }
        } else {
            if (tiny) {
                converged = true;
                break;
            }
            lambda *= cfg.damping_scale;
        }
    }

    const std::size_t n = trace.size();
    out.iterations = it;
    out.converged = converged;
    out.status = converged ? FitStatus::converged : FitStatus::max_iterations;
    out.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(n));

    FitParams p;
    p.offset = x(0);
    p.amplitude = x(1);
    p.frequency_hz = x(2) / window;
    p.phase_rad = x(3);
    p.decay_s = x(4) > 0.0 ? window / x(4) : infinity;
    out.params = canonicalize(p);

    // Parameter variances from sigma^2 (J^T J)^-1, mapped back to physical units.
    const double sigma2 = n > 5 ? 2.0 * cost / static_cast<double>(n - 5) : 0.0;
    const Eigen::Matrix<double, 5, 5> cov = sigma2 * jtj.completeOrthogonalDecomposition().pseudoInverse();
    out.variance[0] = cov(0, 0);
    out.variance[1] = cov(1, 1);
    out.variance[2] = cov(2, 2) / (window * window);
    out.variance[3] = cov(3, 3);
    out.variance[4] = x(4) > 0.0 ? cov(4, 4) * std::pow(window / (x(4) * x(4)), 2) : infinity;
    return out;
}

struct StackFitOptions {
    unsigned threads = 0;
    const Mask* exclude = nullptr;  // nonzero pixels are flagged, not fitted
};

struct StackFit {
    RasterMap frequency_hz;
    RasterMap decay_s;
    RasterMap amplitude;
    RasterMap offset;
    RasterMap phase_rad;
    std::vector<PixelFit> pixels;  // row-major, same layout as the maps

    const PixelFit& pixel(std::size_t ix, std::size_t iy) const { return pixels[iy * frequency_hz.width() + ix]; }
    std::size_t count(FitStatus s) const {
        return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [s](const PixelFit& p) { return p.status == s; }));
    }
};

// Fits every pixel independently. Per-pixel failures become status flags and
// NaN map entries; the stack is never aborted.
inline StackFit fit_stack(const ImageStack& stack, const FitConfig& cfg = {}, const StackFitOptions& opts = {},
                          double pixel_pitch_m = 0.0) {
    cfg.validate();
    if (opts.exclude && (opts.exclude->width() != stack.width() || opts.exclude->height() != stack.height()))
        throw ContractError("shape mismatch: exclusion mask vs stack");
    const double pitch = pixel_pitch_m > 0.0 ? pixel_pitch_m : stack.metadata().pixel_pitch_m;
    const std::size_t w = stack.width(), h = stack.height();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    StackFit out{RasterMap(w, h, pitch, nan), RasterMap(w, h, pitch, nan), RasterMap(w, h, pitch, nan),
                 RasterMap(w, h, pitch, nan), RasterMap(w, h, pitch, nan), std::vector<PixelFit>(w * h)};
    const TimeGrid grid = stack.time_grid();
    parallel_for(h, opts.threads, [&](std::size_t iy) {
        for (std::size_t ix = 0; ix < w; ++ix) {
            PixelFit& pf = out.pixels[iy * w + ix];
            if (opts.exclude && (*opts.exclude)(ix, iy)) {
                pf.status = FitStatus::excluded;
                continue;
            }
            const std::vector<double> trace = stack.trace(ix, iy);
            try {
                pf = fit_pixel(trace, grid, cfg);
            } catch (const DataError&) {
                pf = PixelFit{};
                pf.status = FitStatus::data_error;
                continue;
            }
            if (pf.status == FitStatus::degenerate) continue;
            out.frequency_hz(ix, iy) = pf.params.frequency_hz;
            out.decay_s(ix, iy) = pf.params.decay_s;
            out.amplitude(ix, iy) = pf.params.amplitude;
            out.offset(ix, iy) = pf.params.offset;
            out.phase_rad(ix, iy) = pf.params.phase_rad;
        }
    });
    return out;
}

}  // namespace qwise
