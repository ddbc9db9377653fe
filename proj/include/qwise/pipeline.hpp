#pragma once

// Configuration-driven stages shared by the command-line tool and the
// acceptance suite. Everything here is a pure function of the configuration
// and its inputs; file output lives in the tool.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qwise/config.hpp"
#include "qwise/field_recon.hpp"
#include "qwise/image_stack.hpp"
#include "qwise/magnetostatics.hpp"
#include "qwise/mask_io.hpp"
#include "qwise/nv_esr.hpp"
#include "qwise/pixel_fit.hpp"
#include "qwise/widefield_synth.hpp"

namespace qwise {

inline SpinConstants spin_constants(const PipelineConfig& c) { return {c.nv.gamma_hz_per_t, c.nv.zero_field_hz}; }

inline TimeGrid time_grid(const PipelineConfig& c) { return {c.time.t0_s, c.time.dt_s, c.time.frames}; }

// Drive parameters with the configured drive offset as the detuning.
inline RwaParams drive_params(const PipelineConfig& c) {
    RwaParams p;
    p.detuning_hz = c.drive.offset_hz;
    p.drive_eta_hz = c.drive.eta_hz;
    p.t2_star_s = c.drive.t2_star_s;
    p.t_rabi_decay_s = c.drive.t_rabi_decay_s;
    return p;
}

inline NoiseModel noise_model(const PipelineConfig& c) {
    return {c.noise.photons_per_frame, c.noise.contrast, c.seed};
}

inline Mask flake_mask(const PipelineConfig& c) {
    const auto& g = c.geometry;
    if (!g.mask_path.empty()) {
        Mask m = read_mask(g.mask_path, g.pixel_pitch_m, g.mask_threshold);
        if (m.width() != g.width_px || m.height() != g.height_px)
            throw ConfigError("mask is " + std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                                  " but the raster is " + std::to_string(g.width_px) + "x" +
                                  std::to_string(g.height_px),
                              "geometry.mask_path");
        return m;
    }
    return rectangle_mask(g.width_px, g.height_px, g.pixel_pitch_m, g.rect_x0_px, g.rect_y0_px, g.rect_x1_px,
                          g.rect_y1_px);
}

struct Scene {
    FlakeGeometry geometry;
    Magnetization magnetization;
    VectorFieldMap field;
    RasterMap detuning_hz;  // sample detuning along the configured NV axis
};

inline Scene build_scene(const PipelineConfig& c, unsigned threads, std::optional<int> axis = std::nullopt) {
    Scene s{{flake_mask(c), c.geometry.thickness_m, c.geometry.standoff_m},
            Magnetization::along_angle(c.magnetization.ms_a_per_m, c.magnetization.angle_rad),
            {},
            {}};
    s.field = stray_field(s.geometry, s.magnetization,
                          {c.stray_field.backend, threads, c.stray_field.max_transform_size});
    s.detuning_hz = field_to_detuning(s.field, NVOrientationSet().axis(axis.value_or(c.nv.axis)), spin_constants(c),
                                      c.nv.bias_shift_hz);
    return s;
}

inline ImageStack simulate_stack(const PipelineConfig& c, const Scene& scene, unsigned threads) {
    const PhotoluminescenceMask pl{&scene.geometry.mask, c.photoluminescence.mask_factor};
    const DriveBackground bg{c.background.a_hz_per_m, c.background.b_hz_per_m, c.background.c_hz};
    ImageStack stack = synthesize(scene.detuning_hz, c.drive.mode, drive_params(c), time_grid(c), noise_model(c), bg,
                                  pl, threads);
    auto& meta = stack.metadata();
    meta.drive_frequency_hz = c.drive.frequency_hz;
    meta.ms_a_per_m = c.magnetization.ms_a_per_m;
    meta.standoff_m = c.geometry.standoff_m;
    meta.pixel_pitch_m = c.geometry.pixel_pitch_m;
    return stack;
}

// Smallest frequency a fit over the stack's window can separate from zero.
inline double frequency_resolution(const PipelineConfig& c, const TimeGrid& grid) {
    return c.recon.resolution_hz > 0.0 ? c.recon.resolution_hz : 1.0 / grid.window_s();
}

// Symmetric grid -limit..limit in steps of `step`, always containing 0.
inline std::vector<double> symmetric_grid(double limit, double step) {
    const auto n = static_cast<long>(std::floor(limit / step + 1e-9));
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(2 * n + 1));
    for (long k = -n; k <= n; ++k) g.push_back(static_cast<double>(k) * step);
    return g;
}

struct SweepSetup {
    RwaParams params;
    TimeGrid grid;
    NoiseModel noise;
    DynamicRangeConfig config;
    std::vector<double> deltas;
};

inline SweepSetup sweep_setup(const PipelineConfig& c, unsigned threads) {
    const auto& s = c.sweep;
    SweepSetup out;
    out.params = drive_params(c);
    out.grid = {0.0, s.dt_s, s.frames};
    out.noise = {s.photons_per_frame, s.contrast, c.seed};
    out.config = {s.error_threshold, s.contrast_floor, c.fit, threads};
    out.deltas = symmetric_grid(s.delta_limit_hz, s.delta_step_hz);
    return out;
}

}  // namespace qwise
