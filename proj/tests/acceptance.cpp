// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed here.
// Exit status is nonzero if any criterion fails, except those listed in
// known_unattainable (printed with the reason; see README).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "qwise/config.hpp"
#include "qwise/field_recon.hpp"
#include "qwise/nv_esr.hpp"
#include "qwise/pipeline.hpp"
#include "qwise/pixel_fit.hpp"
#include "qwise/spin_dynamics.hpp"

using namespace qwise;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    std::string bytes;  // serialized outputs for the determinism check
};

class Digest {
public:
    void add(double v) { s_.append(reinterpret_cast<const char*>(&v), sizeof v); }
    void add(std::span<const double> vs) {
        for (double v : vs) add(v);
    }
    void add(const RasterMap& m) { add(m.data()); }
    std::string str() && { return std::move(s_); }

private:
    std::string s_;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr double rabi_resonant_hz = 13.3825e6;  // 2 eta

// Closed-form detuned Rabi precession: rotation of s0 about w = 2pi(2eta, 0, delta).
Vec3 rotate_closed_form(double delta, double eta, double t, Vec3 s0) {
    const Vec3 w{2.0 * eta, 0.0, delta};
    const double wn = norm(w);
    if (wn == 0.0) return s0;
    const Vec3 n = (1.0 / wn) * w;
    const double a = 2.0 * oracle::pi * wn * t;
    return std::cos(a) * s0 + std::sin(a) * cross(n, s0) + (1.0 - std::cos(a)) * dot(n, s0) * n;
}

// 1. rwa_evolve against the closed form.
Outcome closed_form_equivalence(unsigned) {
    const auto t0 = std::chrono::steady_clock::now();
    const TimeGrid grid{0.0, 1e-9, 2001};
    const std::vector<double> values{0.0, 1e6, 13.3825e6, 37e6, 71.5e6, 100e6};
    double worst = 0.0;
    Digest d;
    for (double delta : values)
        for (double eta : values) {
            RwaParams p;
            p.detuning_hz = delta;
            p.drive_eta_hz = eta;
            const auto states = rwa_evolve(p, {0.0, 0.0, 1.0}, grid);
            for (std::size_t j = 0; j < grid.n; ++j) {
                const Vec3 ref = rotate_closed_form(delta, eta, grid.at(j), {0.0, 0.0, 1.0});
                worst = std::max(worst, norm(states[j] - ref));
                worst = std::max(worst, std::abs(states[j].z - rabi_bloch_z(p, grid.at(j))));
                d.add(states[j].x);
                d.add(states[j].y);
                d.add(states[j].z);
            }
        }
    const double secs = seconds_since(t0);
    return {worst < 1e-8 && secs < 10.0,
            fmt("max |error| %.2e over %zu (delta, eta) pairs x 2 us (< 1e-8); %.2f s (< 10 s)", worst,
                values.size() * values.size(), secs),
            std::move(d).str()};
}

// 2. Fitted noiseless Rabi frequency equals sqrt(delta^2 + 4 eta^2).
Outcome effective_rabi_law(unsigned threads) {
    RasterMap deltas(41, 1, 1.0);
    for (std::size_t k = 0; k < 41; ++k) deltas.data()[k] = -15e6 + 0.75e6 * static_cast<double>(k);
    RwaParams p;
    p.drive_eta_hz = 0.5 * rabi_resonant_hz;
    const TimeGrid grid{0.0, 5e-9, 200};
    const ImageStack stack = synthesize(deltas, SignalMode::rabi, p, grid, {}, {}, {}, threads);
    const StackFit fits = fit_stack(stack, {}, {threads, nullptr}, 1.0);
    double worst = 0.0, asym = 0.0;
    for (std::size_t k = 0; k < 41; ++k) {
        const double delta = deltas.data()[k];
        const double expected = std::sqrt(delta * delta + rabi_resonant_hz * rabi_resonant_hz);
        worst = std::max(worst, std::abs(fits.frequency_hz.data()[k] / expected - 1.0));
        const double mirror = fits.frequency_hz.data()[40 - k];
        asym = std::max(asym, std::abs(fits.frequency_hz.data()[k] - mirror) / expected);
    }
    Digest d;
    d.add(fits.frequency_hz);
    return {worst < 1e-6 && asym < 1e-9,
            fmt("max relative error %.2e (< 1e-6), asymmetry %.2e (< 1e-9) over 41 points, |delta| <= 15 MHz", worst,
                asym),
            std::move(d).str()};
}

// 3. Ramsey dynamic range, noiseless and at SNR 20.
Outcome ramsey_dynamic_range(unsigned threads) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineConfig c;
    c.threads = threads;
    const SweepSetup s = sweep_setup(c, threads);
    const bool sampling_ok = s.grid.dt_s <= 1.0 / (4.0 * 60e6);
    NoiseModel noiseless = s.noise;
    noiseless.photons_per_frame = infinity;
    const auto clean = dynamic_range_sweep(SignalMode::ramsey, s.params, s.deltas, s.grid, noiseless, s.config);
    const auto noisy = dynamic_range_sweep(SignalMode::ramsey, s.params, s.deltas, s.grid, s.noise, s.config);
    const double secs = seconds_since(t0);
    Digest d;
    for (const auto* rep : {&clean, &noisy}) {
        d.add(rep->delta_max_hz);
        for (const auto& r : rep->rows) d.add(r.fitted_frequency_hz);
    }
    return {sampling_ok && clean.delta_max_hz >= 60e6 && noisy.delta_max_hz >= 60e6 && secs < 30.0,
            fmt("dt %.3g ns; delta_max %.1f MHz noiseless, %.1f MHz at SNR 20 (%g photons/frame, %zu frames) "
                "(>= 60 MHz at 1%% error); %.2f s (< 30 s)",
                s.grid.dt_s * 1e9, clean.delta_max_hz * 1e-6, noisy.delta_max_hz * 1e-6, s.noise.photons_per_frame,
                s.grid.n, secs),
            std::move(d).str()};
}

// 4. Ramsey/Rabi shift ratio of 70.
Outcome shift_ratio(unsigned) {
    const double delta = detuning_for_shift_ratio(70.0, rabi_resonant_hz);
    const double root = oracle::bisect(
        [](double x) { return x / (std::sqrt(x * x + rabi_resonant_hz * rabi_resonant_hz) - rabi_resonant_hz) - 70.0; },
        1e4, 5e6);
    RwaParams p;
    p.drive_eta_hz = 0.5 * rabi_resonant_hz;
    const auto probe = shift_ratio_probe(p, delta, {0.0, 5e-9, 200}, {0.0, 25e-9, 400});
    const bool ok = delta >= 0.3e6 && delta <= 0.5e6 && std::abs(root / delta - 1.0) < 1e-9 &&
                    std::abs(probe.fitted_ratio / 70.0 - 1.0) < 0.05;
    Digest d;
    d.add(delta);
    d.add(probe.fitted_ratio);
    return {ok,
            fmt("delta = %.5f MHz (in [0.3, 0.5], bisection %.5f MHz); fitted ratio %.4f (within 5%% of 70)",
                delta * 1e-6, root * 1e-6, probe.fitted_ratio),
            std::move(d).str()};
}

// 5. Background plane recovery, exact and under noise.
Outcome plane_fit(unsigned) {
    const double a = 7.94e9, b = 6.50e9, c0 = 13.3825e6;  // 7.94 kHz/um, 6.50 kHz/um
    const std::size_t n = 40;
    const double pitch = 1e-6;
    RasterMap map(n, n, pitch);
    for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t ix = 0; ix < n; ++ix) map(ix, iy) = a * map.center_x_m(ix) + b * map.center_y_m(iy) + c0;
    const PlaneFit exact = fit_background_plane(map);
    const double exact_err = std::max({std::abs(exact.a_hz_per_m / a - 1.0), std::abs(exact.b_hz_per_m / b - 1.0),
                                       std::abs(exact.c_hz / c0 - 1.0)});

    // standard errors of OLS slopes on a full square grid
    double sxx = 0.0;
    for (std::size_t ix = 0; ix < n; ++ix) {
        const double dx = map.center_x_m(ix) - map.center_x_m(0) - 0.5 * static_cast<double>(n - 1) * pitch;
        sxx += dx * dx * static_cast<double>(n);
    }
    const double sigma = 50e3;
    const double se_slope = sigma / std::sqrt(sxx);
    const double xbar = map.center_x_m(0) + 0.5 * static_cast<double>(n - 1) * pitch;
    const double se_c = sigma * std::sqrt(1.0 / static_cast<double>(n * n) + 2.0 * xbar * xbar / sxx);

    std::mt19937_64 rng(20);
    std::normal_distribution<double> noise(0.0, sigma);
    const int trials = 400;
    int within2 = 0, outside4 = 0;
    Digest d;
    d.add(exact.a_hz_per_m);
    d.add(exact.b_hz_per_m);
    d.add(exact.c_hz);
    for (int t = 0; t < trials; ++t) {
        RasterMap noisy = map;
        for (double& v : noisy.data()) v += noise(rng);
        const PlaneFit f = fit_background_plane(noisy);
        const double za = (f.a_hz_per_m - a) / se_slope, zb = (f.b_hz_per_m - b) / se_slope, zc = (f.c_hz - c0) / se_c;
        within2 += (std::abs(za) < 2.0) + (std::abs(zb) < 2.0) + (std::abs(zc) < 2.0);
        outside4 += (std::abs(za) > 4.0) + (std::abs(zb) > 4.0) + (std::abs(zc) > 4.0);
        d.add(f.a_hz_per_m);
    }
    const double frac2 = within2 / (3.0 * trials);
    return {exact_err < 1e-12 && frac2 > 0.92 && frac2 < 0.98 && outside4 == 0,
            fmt("exact relative error %.2e (< 1e-12); noisy (sigma %.0f kHz, %d trials): %.1f%% within 2 SE "
                "(92-98%%), %d beyond 4 SE (0)",
                exact_err, sigma * 1e-3, trials, 100.0 * frac2, outside4),
            std::move(d).str()};
}

// 6. Vector reconstruction from three NV orientations.
Outcome vector_round_trip(unsigned threads) {
    const auto axes = select_axes(NVOrientationSet(), {1, 2, 3});
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    Digest d;
    for (int k = 0; k < 1000; ++k) {
        Vec3 dir;
        do dir = {u(rng), u(rng), u(rng)};
        while (norm(dir) > 1.0 || norm(dir) < 1e-3);
        const double mag = 5e-3 * std::abs(u(rng));
        const FieldVector b = (mag / norm(dir)) * dir;
        const std::array<double, 3> shifts{linear_shift(b, axes[0]), linear_shift(b, axes[1]), linear_shift(b, axes[2])};
        const FieldVector back = shifts_to_field(shifts, axes);
        worst = std::max(worst, norm(back - b) / std::max(norm(b), 1e-300));
        d.add(back.x);
    }
    PipelineConfig c;
    c.stray_field.backend = StrayFieldBackend::prism;
    const Scene scene = build_scene(c, threads);
    const RasterMap s1 = project_field(scene.field, axes[0]);
    const RasterMap s2 = project_field(scene.field, axes[1]);
    const RasterMap s3 = project_field(scene.field, axes[2]);
    const VectorFieldMap rec = reconstruct_vector_map({&s1, &s2, &s3}, axes);
    const double peak = std::max({max_abs(scene.field.bx.data()), max_abs(scene.field.by.data()),
                                  max_abs(scene.field.bz.data())});
    double map_err = 0.0;
    for (std::size_t k = 0; k < rec.bx.size(); ++k) {
        map_err = std::max(map_err, std::abs(rec.bx.data()[k] - scene.field.bx.data()[k]));
        map_err = std::max(map_err, std::abs(rec.by.data()[k] - scene.field.by.data()[k]));
        map_err = std::max(map_err, std::abs(rec.bz.data()[k] - scene.field.bz.data()[k]));
    }
    map_err /= peak;
    d.add(rec.bz);
    return {worst < 1e-12 && map_err < 1e-10,
            fmt("1000 random |B| <= 5 mT: max relative error %.2e (< 1e-12); 40x40 stray-field map: %.2e of peak "
                "(< 1e-10)",
                worst, map_err),
            std::move(d).str()};
}

// 7. Bz of an in-plane magnetized rectangle: four sign lobes, zero net flux.
Outcome quadrupole_structure(unsigned threads) {
    PipelineConfig c;
    c.geometry.width_px = c.geometry.height_px = 80;
    c.geometry.rect_x0_px = 30;
    c.geometry.rect_y0_px = 33;
    c.geometry.rect_x1_px = 50;
    c.geometry.rect_y1_px = 47;
    c.stray_field.backend = StrayFieldBackend::prism;
    const Scene scene = build_scene(c, threads);
    const auto& bz = scene.field.bz.data();
    double net = 0.0, total = 0.0;
    for (double v : bz) {
        net += v;
        total += std::abs(v);
    }
    const double flux_ratio = std::abs(net) / total;
    const auto [pos, neg] = oracle::count_sign_lobes(scene.field.bz, 0.05);
    const auto [dpos, dneg] = oracle::count_sign_lobes(scene.detuning_hz, 0.05);
    Digest d;
    d.add(scene.field.bz);
    return {pos + neg == 4 && flux_ratio < 1e-3,
            fmt("Bz sign lobes %d (+%d/-%d), want 4; net flux ratio %.2e (< 1e-3); NV-axis detuning map lobes "
                "+%d/-%d",
                pos + neg, pos, neg, flux_ratio, dpos, dneg),
            std::move(d).str()};
}

// 8. simulate -> fit -> signed map against the injected map.
Outcome end_to_end(unsigned threads) {
    PipelineConfig c;
    const Scene scene = build_scene(c, threads);
    const ImageStack stack = simulate_stack(c, scene, threads);
    const StackFit fits = fit_stack(stack, c.fit, {threads, nullptr});
    const auto signed_map =
        signed_detuning_map(fits.frequency_hz, c.drive.offset_hz, frequency_resolution(c, stack.time_grid()));
    double s = 0.0;
    for (std::size_t k = 0; k < scene.detuning_hz.size(); ++k) {
        const double e = signed_map.sample_hz.data()[k] - scene.detuning_hz.data()[k];
        s += e * e;
    }
    const double rms = std::sqrt(s / static_cast<double>(scene.detuning_hz.size()));
    const double peak = max_abs(scene.detuning_hz.data());
    const auto [pos, neg] = oracle::count_sign_lobes(scene.detuning_hz, 0.05);
    Digest d;
    d.add(fits.frequency_hz);
    d.add(signed_map.sample_hz);
    return {rms < 0.02 * peak,
            fmt("%zux%zu map (+%d/-%d lobes), offset %.0f MHz, SNR 20: RMS %.3g kHz = %.3f%% of %.2f MHz peak (< 2%%)",
                scene.detuning_hz.width(), scene.detuning_hz.height(), pos, neg, c.drive.offset_hz * 1e-6, rms * 1e-3,
                100.0 * rms / peak, peak * 1e-6),
            std::move(d).str()};
}

// 10. Throughput targets.
Outcome performance(unsigned) {
    PipelineConfig c;
    const Scene scene = build_scene(c, 0);
    const ImageStack stack = simulate_stack(c, scene, 0);
    auto t0 = std::chrono::steady_clock::now();
    const StackFit fits = fit_stack(stack, c.fit, {0, nullptr});
    const double fit_s = seconds_since(t0);

    FlakeGeometry big{rectangle_mask(256, 256, 1e-6, 64, 80, 192, 176), 100e-9, 100e-9};
    t0 = std::chrono::steady_clock::now();
    const VectorFieldMap f = stray_field(big, Magnetization::along_angle(1.5e4, 0.0), {StrayFieldBackend::transform, 0});
    const double field_s = seconds_since(t0);
    return {fit_s < 2.0 && field_s < 1.0 && fits.pixels.size() == 1600 && f.bz.size() == 65536,
            fmt("fit_stack 40x40x200: %.3f s (< 2 s); transform stray field 256x256: %.3f s (< 1 s); %u hardware "
                "threads",
                fit_s, field_s, std::thread::hardware_concurrency()),
            {}};
}

}  // namespace

int main() {
    using Criterion = std::function<Outcome(unsigned)>;
    const std::vector<std::pair<std::string, Criterion>> deterministic{
        {"1 closed-form/ODE equivalence", closed_form_equivalence},
        {"2 effective Rabi law", effective_rabi_law},
        {"3 Ramsey dynamic range", ramsey_dynamic_range},
        {"4 70x shift ratio", shift_ratio},
        {"5 plane-fit reproduction", plane_fit},
        {"6 vector round trip", vector_round_trip},
        {"7 quadrupole structure", quadrupole_structure},
        {"8 end-to-end round trip", end_to_end},
    };
    // Bz below a uniformly in-plane magnetized rectangle has two sign lobes for
    // every magnetization direction; the four-lobe pattern belongs to the
    // NV-axis projection (criterion 8's map). See README.
    const std::map<std::string, std::string> known_unattainable{
        {"7 quadrupole structure", "Bz has two sign lobes for any in-plane magnetization"}};

    int failures = 0, known = 0;
    auto report = [&](const std::string& name, const Outcome& o) {
        std::printf("%s  %-32s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        if (o.pass) return;
        if (const auto it = known_unattainable.find(name); it != known_unattainable.end()) {
            std::printf("      known unattainable: %s\n", it->second.c_str());
            ++known;
        } else {
            ++failures;
        }
        std::fflush(stdout);
    };

    std::vector<std::string> reference;
    for (const auto& [name, run] : deterministic) {
        const Outcome o = run(1);
        report(name, o);
        reference.push_back(o.bytes);
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> mismatches;
    for (unsigned threads : {1u, 2u, 8u})
        for (std::size_t k = 0; k < deterministic.size(); ++k)
            if (deterministic[k].second(threads).bytes != reference[k])
                mismatches.push_back(deterministic[k].first.substr(0, 1) + "@" + std::to_string(threads));
    std::string which;
    for (const auto& m : mismatches) which += " " + m;
    report("9 determinism",
           {mismatches.empty(),
            mismatches.empty() ? fmt("criteria 1-8 byte-identical on rerun and at 1/2/8 threads (%.1f s)", seconds_since(t0))
                               : "mismatch:" + which,
            {}});
    report("10 performance", performance(0));

    std::printf("%d failed, %d known unattainable\n", failures, known);
    return failures == 0 ? 0 : 1;
}
