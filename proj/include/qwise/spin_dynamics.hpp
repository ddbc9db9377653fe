#pragma once

// Driven two-level dynamics in the rotating frame. Public quantities are
// ordinary frequencies in Hz; the 2*pi factor is applied only inside the
// model evaluations below.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qwise/error.hpp"
#include "qwise/raster.hpp"

namespace qwise {

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double infinity = std::numeric_limits<double>::infinity();

enum class SignalMode { rabi, ramsey };

inline std::string_view to_string(SignalMode m) { return m == SignalMode::rabi ? "rabi" : "ramsey"; }

inline SignalMode parse_signal_mode(std::string_view s) {
    if (s == "rabi") return SignalMode::rabi;
    if (s == "ramsey") return SignalMode::ramsey;
    throw ContractError("unknown signal mode '" + std::string(s) + "' (expected rabi|ramsey)");
}

struct RwaParams {
    double detuning_hz = 0.0;
    double drive_eta_hz = 0.0;
    double t2_star_s = infinity;       // Ramsey envelope
    double t_rabi_decay_s = infinity;  // Rabi envelope

    void validate() const {
        if (!std::isfinite(detuning_hz)) throw ContractError("detuning_hz must be finite");
        if (!(drive_eta_hz >= 0.0) || std::isinf(drive_eta_hz)) throw ContractError("drive_eta_hz must be finite and >= 0");
        if (!(t2_star_s > 0.0)) throw ContractError("t2_star_s must be > 0");
        if (!(t_rabi_decay_s > 0.0)) throw ContractError("t_rabi_decay_s must be > 0");
    }

    RwaParams with_detuning(double d) const {
        RwaParams p = *this;
        p.detuning_hz = d;
        return p;
    }
};

struct TimeGrid {
    double t0_s = 0.0;
    double dt_s = 1e-9;
    std::size_t n = 2;

    void validate() const {
        if (!(dt_s > 0.0) || !std::isfinite(dt_s)) throw ContractError("time grid dt_s must be > 0");
        if (n < 2) throw ContractError("time grid needs n >= 2 samples");
        if (!std::isfinite(t0_s)) throw ContractError("time grid t0_s must be finite");
    }
    double at(std::size_t i) const noexcept { return t0_s + static_cast<double>(i) * dt_s; }
    double window_s() const noexcept { return static_cast<double>(n - 1) * dt_s; }
    double nyquist_hz() const noexcept { return 0.5 / dt_s; }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

using BlochState = Vec3;

// sqrt(detuning^2 + (2 eta)^2), Hz.
inline double effective_rabi_frequency(const RwaParams& p) {
    return std::hypot(p.detuning_hz, 2.0 * p.drive_eta_hz);
}

// Bright-state population 1 - (2eta/Omega)^2 sin^2(Omega t / 2). The decay
// envelope damps the oscillation around its long-time mean, so P(inf) is the
// mean rather than zero. This is the model the pixel fit sees in Rabi mode.
inline double rabi_population(const RwaParams& p, double t_s) {
    const double omega_hz = effective_rabi_frequency(p);
    if (omega_hz == 0.0) return 1.0;
    const double r = 2.0 * p.drive_eta_hz / omega_hz;
    const double half_depth = 0.5 * r * r;
    const double envelope = std::isinf(p.t_rabi_decay_s) ? 1.0 : std::exp(-t_s / p.t_rabi_decay_s);
    return (1.0 - half_depth) + half_depth * std::cos(two_pi * omega_hz * t_s) * envelope;
}

// Square-root signal form sqrt(D^2 sin^2(Wt/2)/W^2 + cos^2(Wt/2)); identical to
// sqrt(rabi_population) before the envelope is applied.
inline double rabi_signal(const RwaParams& p, double t_s) {
    return std::sqrt(std::max(0.0, rabi_population(p, t_s)));
}

// cos^2(pi * detuning * tau) * exp(-tau / T2*); fringe period 1/|detuning|.
inline double ramsey_signal(const RwaParams& p, double tau_s) {
    const double c = std::cos(std::numbers::pi * p.detuning_hz * tau_s);
    const double envelope = std::isinf(p.t2_star_s) ? 1.0 : std::exp(-tau_s / p.t2_star_s);
    return c * c * envelope;
}

inline double signal(SignalMode mode, const RwaParams& p, double t_s) {
    return mode == SignalMode::rabi ? rabi_population(p, t_s) : ramsey_signal(p, t_s);
}

// Bloch z of the undamped trajectory started at +z: 2 P - 1.
inline double rabi_bloch_z(const RwaParams& p, double t_s) {
    RwaParams undamped = p;
    undamped.t_rabi_decay_s = infinity;
    return 2.0 * rabi_population(undamped, t_s) - 1.0;
}

struct RwaIntegratorOptions {
    // Largest rotation angle (rad) of the Bloch vector per RK4 substep. The
    // RK4 phase error per substep is ~angle^5/120, so 3e-3 keeps the global
    // error below 1e-8 over ~3e3 rad of precession.
    double max_rotation_per_step = 3e-3;
};

// Classic fourth-order Runge-Kutta integration of ds/dt = w x s with
// w = 2pi (2 eta, 0, detuning). Returns one state per grid sample; element 0 is s0.
inline std::vector<BlochState> rwa_evolve(const RwaParams& p, BlochState s0, const TimeGrid& grid,
                                          const RwaIntegratorOptions& opts = {}) {
    p.validate();
    grid.validate();
    if (dot(s0, s0) > 1.0 + 1e-9) throw ContractError("initial Bloch state outside the unit ball");
    if (!(opts.max_rotation_per_step > 0.0)) throw ContractError("max_rotation_per_step must be > 0");

    const Vec3 w{two_pi * 2.0 * p.drive_eta_hz, 0.0, two_pi * p.detuning_hz};
    const double w_norm = norm(w);

    std::vector<BlochState> out;
    out.reserve(grid.n);
    out.push_back(s0);
    if (w_norm == 0.0) {
        out.resize(grid.n, s0);
        return out;
    }

    const double max_h = opts.max_rotation_per_step / w_norm;
    const auto substeps = static_cast<std::size_t>(std::ceil(grid.dt_s / max_h));
    const double h = grid.dt_s / static_cast<double>(substeps);

    auto rhs = [&w](Vec3 s) { return cross(w, s); };
    BlochState s = s0;
    for (std::size_t i = 1; i < grid.n; ++i) {
        const double t_start = grid.at(i - 1);
        if (t_start + h == t_start)
            throw IntegrationFailure("RK4 step size underflow", t_start);
        for (std::size_t k = 0; k < substeps; ++k) {
            const Vec3 k1 = rhs(s);
            const Vec3 k2 = rhs(s + (0.5 * h) * k1);
            const Vec3 k3 = rhs(s + (0.5 * h) * k2);
            const Vec3 k4 = rhs(s + h * k3);
            s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push_back(s);
    }
    return out;
}

struct SensitivitySetpoint {
    double t_s = 0.0;
    double delta_hz = 0.0;
    double slope_per_hz = 0.0;  // signed dS/dDelta at the optimum
};

// Finite-difference derivative of the signal with respect to detuning, using a
// central step of 1e-6 * max(|detuning|, 1 Hz).
inline double signal_detuning_slope(SignalMode mode, const RwaParams& p, double t_s) {
    const double step = 1e-6 * std::max(std::abs(p.detuning_hz), 1.0);
    auto eval = [&](double d) {
        const RwaParams q = p.with_detuning(d);
        return mode == SignalMode::rabi ? rabi_signal(q, t_s) : ramsey_signal(q, t_s);
    };
    return (eval(p.detuning_hz + step) - eval(p.detuning_hz - step)) / (2.0 * step);
}

// (t, detuning) maximizing |dS/dDelta| over the given grids. Ties keep the
// earliest time, then the earliest detuning in the list.
inline SensitivitySetpoint sensitivity_setpoint(const RwaParams& p, SignalMode mode, const TimeGrid& t_range,
                                                std::span<const double> delta_range_hz) {
    t_range.validate();
    if (delta_range_hz.empty()) throw ContractError("sensitivity_setpoint needs a non-empty detuning range");
    SensitivitySetpoint best{t_range.at(0), delta_range_hz.front(), 0.0};
    double best_abs = -1.0;
    for (std::size_t i = 0; i < t_range.n; ++i) {
        const double t = t_range.at(i);
        for (double d : delta_range_hz) {
            const double slope = signal_detuning_slope(mode, p.with_detuning(d), t);
            if (std::abs(slope) > best_abs) {
                best_abs = std::abs(slope);
                best = {t, d, slope};
            }
        }
    }
    return best;
}

}  // namespace qwise
