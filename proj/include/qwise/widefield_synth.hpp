#pragma once

// Synthetic wide-field acquisitions: every pixel evolves under its own
// detuning (and drive strength in Rabi mode), is darkened under the flake,
// and is read out with Poisson photon noise.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

#include "qwise/error.hpp"
#include "qwise/image_stack.hpp"
#include "qwise/parallel.hpp"
#include "qwise/raster.hpp"
#include "qwise/rng.hpp"
#include "qwise/spin_dynamics.hpp"

namespace qwise {

struct NoiseModel {
    double photons_per_frame = infinity;  // infinity = noiseless
    double contrast = 1.0;
    std::uint64_t seed = 0;

    bool noiseless() const noexcept { return std::isinf(photons_per_frame); }

    void validate() const {
        if (!(photons_per_frame > 0.0)) throw ContractError("photons_per_frame must be > 0");
        if (!(contrast > 0.0 && contrast <= 1.0)) throw ContractError("contrast must lie in (0, 1]");
    }
};

// Plane added to the Rabi frequency 2*eta over the field of view:
// a x + b y + c with x, y the pixel-center coordinates in meters.
struct DriveBackground {
    double a_hz_per_m = 0.0;
    double b_hz_per_m = 0.0;
    double c_hz = 0.0;

    double at(double x_m, double y_m) const noexcept { return a_hz_per_m * x_m + b_hz_per_m * y_m + c_hz; }
};

struct PhotoluminescenceMask {
    const Mask* mask = nullptr;
    double factor = 1.0;
};

// Per-pixel parameters used by `synthesize`: total detuning is the drive
// offset p.detuning_hz plus the map value.
inline RwaParams pixel_params(const RwaParams& p, SignalMode mode, double map_detuning_hz, const DriveBackground& bg,
                              double x_m, double y_m) {
    RwaParams q = p;
    q.detuning_hz = p.detuning_hz + map_detuning_hz;
    if (mode == SignalMode::rabi) q.drive_eta_hz = std::max(0.0, p.drive_eta_hz + 0.5 * bg.at(x_m, y_m));
    return q;
}

// Stored samples are photon counts divided by the expected count of an
// unmasked bright pixel, i.e. normalized to the reference level at t = 0.
inline ImageStack synthesize(const RasterMap& detuning_hz, SignalMode mode, const RwaParams& p, const TimeGrid& grid,
                             const NoiseModel& noise, const DriveBackground& bg = {},
                             PhotoluminescenceMask pl = {}, unsigned threads = 0) {
    p.validate();
    grid.validate();
    noise.validate();
    if (pl.mask) {
        require_same_shape(detuning_hz, *pl.mask, "detuning map vs flake mask");
        if (!(pl.factor >= 0.0 && pl.factor <= 1.0)) throw ContractError("photoluminescence factor must lie in [0, 1]");
    }
    const std::size_t w = detuning_hz.width(), h = detuning_hz.height();
    AcquisitionMetadata meta;
    meta.mode = mode;
    meta.drive_eta_hz = p.drive_eta_hz;
    meta.drive_offset_hz = p.detuning_hz;
    meta.pixel_pitch_m = detuning_hz.pixel_pitch_m();
    meta.seed = noise.seed;
    ImageStack stack(w, h, grid, meta);

    parallel_for(h, threads, [&](std::size_t iy) {
        for (std::size_t ix = 0; ix < w; ++ix) {
            const RwaParams q = pixel_params(p, mode, detuning_hz(ix, iy), bg, detuning_hz.center_x_m(ix),
                                             detuning_hz.center_y_m(iy));
            const double attenuation = (pl.mask && (*pl.mask)(ix, iy)) ? pl.factor : 1.0;
            for (std::size_t f = 0; f < grid.n; ++f) {
                const double s = signal(mode, q, grid.at(f));
                const double level = attenuation * (1.0 - noise.contrast * (1.0 - s));
                if (noise.noiseless()) {
                    stack.at(ix, iy, f) = level;
                } else {
                    CounterRng rng(noise.seed, ix, iy, f);
                    std::poisson_distribution<long long> photons(std::max(0.0, noise.photons_per_frame * level));
                    stack.at(ix, iy, f) =
                        level > 0.0 ? static_cast<double>(photons(rng)) / noise.photons_per_frame : 0.0;
                }
            }
        }
    });
    return stack;
}

}  // namespace qwise
