// qwise: simulate, fit, reconstruct and analyze wide-field NV spin images.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qwise/config.hpp"
#include "qwise/field_recon.hpp"
#include "qwise/pipeline.hpp"
#include "qwise/stack_io.hpp"
#include "qwise/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qwise;

namespace {

enum ExitCode { ok = 0, generic_failure = 1, config_error = 2, input_error = 3, numerical_failure = 4 };

struct Context {
    PipelineConfig config;
    fs::path out_dir;
    unsigned threads = 0;
};

void write_file(const fs::path& path, const std::string& text) { qwise::detail::write_text(path, text); }

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

void write_map_set(const Context& ctx, const RasterMap& map, const std::string& stem, const std::string& quantity,
                   const std::string& unit) {
    write_map(map, ctx.out_dir / (stem + ".qwis"), quantity, unit);
    write_map_csv(map, ctx.out_dir / (stem + ".csv"));
}

void write_heatmap(const Context& ctx, const RasterMap& map, const std::string& stem, const std::string& title,
                   svg::Scale scale, const std::string& unit, double factor) {
    write_file(ctx.out_dir / (stem + ".svg"), svg::heatmap(map, {title, unit, scale, factor}));
}

json fit_params_json(const PixelFit& f) {
    return {{"offset", f.params.offset},
            {"amplitude", f.params.amplitude},
            {"frequency_hz", f.params.frequency_hz},
            {"phase_rad", f.params.phase_rad},
            {"decay_s", f.params.decay_s}};
}

std::string diagnostics_jsonl(const StackFit& fits, std::size_t width) {
    std::string out;
    for (std::size_t k = 0; k < fits.pixels.size(); ++k) {
        const PixelFit& f = fits.pixels[k];
        const json line{{"x", k % width},
                        {"y", k / width},
                        {"status", to_string(f.status)},
                        {"params", fit_params_json(f)},
                        {"residual_rms", f.residual_rms},
                        {"converged", f.converged},
                        {"iterations", f.iterations}};
        out += line.dump() + "\n";
    }
    return out;
}

json status_counts(const StackFit& fits) {
    json j = json::object();
    for (auto s : {FitStatus::converged, FitStatus::max_iterations, FitStatus::degenerate, FitStatus::excluded,
                   FitStatus::data_error})
        j[to_string(s)] = fits.count(s);
    return j;
}

json report_json(const DynamicRangeReport& rep) {
    json rows = json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"delta_hz", r.delta_hz},
                        {"true_frequency_hz", r.true_frequency_hz},
                        {"fitted_frequency_hz", r.fitted_frequency_hz},
                        {"relative_error", r.relative_error},
                        {"contrast", r.contrast},
                        {"converged", r.converged},
                        {"faithful", r.faithful}});
    return {{"mode", to_string(rep.mode)},
            {"delta_max_hz", rep.delta_max_hz},
            {"error_threshold", rep.error_threshold},
            {"contrast_floor", rep.contrast_floor},
            {"rows", rows}};
}

std::string report_csv(const DynamicRangeReport& rep) {
    std::string out = "delta_hz,true_frequency_hz,fitted_frequency_hz,relative_error,contrast,converged,faithful\n";
    for (const auto& r : rep.rows)
        out += format_double(r.delta_hz) + "," + format_double(r.true_frequency_hz) + "," +
               format_double(r.fitted_frequency_hz) + "," + format_double(r.relative_error) + "," +
               format_double(r.contrast) + "," + (r.converged ? "1" : "0") + "," + (r.faithful ? "1" : "0") + "\n";
    return out;
}

// --- simulate ---------------------------------------------------------------

int cmd_simulate(const Context& ctx) {
    const auto& c = ctx.config;
    const Scene scene = build_scene(c, ctx.threads);
    const ImageStack stack = simulate_stack(c, scene, ctx.threads);
    write_stack(stack, ctx.out_dir / "stack.qwis");
    write_map_set(ctx, scene.detuning_hz, "truth_detuning_hz", "sample detuning", "Hz");
    write_map_set(ctx, scene.field.bx, "truth_bx_t", "Bx", "T");
    write_map_set(ctx, scene.field.by, "truth_by_t", "By", "T");
    write_map_set(ctx, scene.field.bz, "truth_bz_t", "Bz", "T");
    write_heatmap(ctx, scene.detuning_hz, "truth_detuning", "Injected sample detuning", svg::Scale::diverging, "MHz",
                  1e-6);
    write_heatmap(ctx, scene.field.bz, "truth_bz", "Stray field Bz", svg::Scale::diverging, "mT", 1e3);

    double lo = 0.0, hi = 0.0;
    for (double v : scene.detuning_hz.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const json summary{{"width_px", stack.width()},
                       {"height_px", stack.height()},
                       {"frames", stack.frames()},
                       {"mode", to_string(c.drive.mode)},
                       {"drive_offset_hz", c.drive.offset_hz},
                       {"sample_detuning_min_hz", lo},
                       {"sample_detuning_max_hz", hi},
                       {"seed", c.seed}};
    write_json(ctx.out_dir / "simulate_summary.json", summary);
    std::cout << "simulate: " << stack.width() << "x" << stack.height() << "x" << stack.frames() << " "
              << to_string(c.drive.mode) << " stack, sample detuning " << lo * 1e-6 << " .. " << hi * 1e-6
              << " MHz, seed " << c.seed << "\n";
    return ok;
}

// --- fit --------------------------------------------------------------------

struct FitOutcome {
    StackFit fits;
    std::optional<SignedDetuning> signed_map;
};

FitOutcome fit_and_write(const Context& ctx, const ImageStack& stack, const std::string& prefix) {
    const auto& c = ctx.config;
    FitOutcome out{fit_stack(stack, c.fit, {ctx.threads, nullptr}), std::nullopt};
    const auto& fits = out.fits;
    write_map_set(ctx, fits.frequency_hz, prefix + "frequency_hz", "fitted frequency", "Hz");
    write_map_set(ctx, fits.decay_s, prefix + "decay_s", "fitted decay time", "s");
    write_map_set(ctx, fits.amplitude, prefix + "amplitude", "fitted amplitude", "1");
    write_map_set(ctx, fits.offset, prefix + "offset", "fitted offset", "1");
    write_map_set(ctx, fits.phase_rad, prefix + "phase_rad", "fitted phase", "rad");
    write_file(ctx.out_dir / (prefix + "fit_diagnostics.jsonl"), diagnostics_jsonl(fits, stack.width()));

    json summary{{"pixels", fits.pixels.size()}, {"status", status_counts(fits)}, {"mode", to_string(stack.metadata().mode)}};
    const auto& meta = stack.metadata();
    if (meta.mode == SignalMode::ramsey) {
        const double resolution = frequency_resolution(c, stack.time_grid());
        out.signed_map = signed_detuning_map(fits.frequency_hz, meta.drive_offset_hz, resolution);
        write_map_set(ctx, out.signed_map->sample_hz, prefix + "sample_detuning_hz", "signed sample detuning", "Hz");
        write_map_set(ctx, unsigned_detuning_map(fits.frequency_hz, meta.drive_offset_hz),
                      prefix + "unsigned_detuning_hz", "unsigned sample detuning", "Hz");
        write_heatmap(ctx, out.signed_map->sample_hz, prefix + "sample_detuning", "Ramsey sample detuning",
                      svg::Scale::diverging, "MHz", 1e-6);
        std::size_t indeterminate = 0;
        for (auto v : out.signed_map->indeterminate.data()) indeterminate += v ? 1 : 0;
        summary["drive_offset_hz"] = meta.drive_offset_hz;
        summary["frequency_resolution_hz"] = resolution;
        summary["indeterminate_pixels"] = indeterminate;
    } else {
        std::optional<Mask> exclude;
        if (c.recon.exclude_flake && stack.width() == c.geometry.width_px && stack.height() == c.geometry.height_px)
            exclude = flake_mask(c);
        const PlaneFit plane = fit_background_plane(fits.frequency_hz, exclude ? &*exclude : nullptr);
        const RasterMap shift = subtract_plane(fits.frequency_hz, plane);
        write_map_set(ctx, shift, prefix + "rabi_shift_hz", "Rabi frequency minus background plane", "Hz");
        write_heatmap(ctx, fits.frequency_hz, prefix + "rabi_frequency", "Fitted Rabi frequency",
                      svg::Scale::sequential, "MHz", 1e-6);
        summary["background_plane"] = {{"a_hz_per_m", plane.a_hz_per_m},
                                       {"b_hz_per_m", plane.b_hz_per_m},
                                       {"c_hz", plane.c_hz},
                                       {"rms_hz", plane.rms_hz},
                                       {"pixels_used", plane.pixels_used}};
    }
    write_json(ctx.out_dir / (prefix + "fit_summary.json"), summary);
    return out;
}

int cmd_fit(const Context& ctx, const fs::path& stack_path) {
    const ImageStack stack = read_stack(stack_path);
    const FitOutcome out = fit_and_write(ctx, stack, "");
    const auto& fits = out.fits;
    std::cout << "fit: " << fits.pixels.size() << " pixels, " << fits.count(FitStatus::converged) << " converged, "
              << fits.count(FitStatus::max_iterations) << " unconverged, " << fits.count(FitStatus::degenerate)
              << " degenerate, " << fits.count(FitStatus::data_error) << " with bad samples\n";
    return ok;
}

// --- reconstruct ------------------------------------------------------------

VectorFieldMap reconstruct_and_write(const Context& ctx, const std::array<RasterMap, 3>& shifts, const std::string& prefix) {
    const auto& c = ctx.config;
    const auto axes = select_axes(NVOrientationSet(), c.nv.recon_axes);
    const VectorFieldMap field = reconstruct_vector_map({&shifts[0], &shifts[1], &shifts[2]}, axes, spin_constants(c));
    write_map_set(ctx, field.bx, prefix + "bx_t", "Bx", "T");
    write_map_set(ctx, field.by, prefix + "by_t", "By", "T");
    write_map_set(ctx, field.bz, prefix + "bz_t", "Bz", "T");
    write_heatmap(ctx, field.bz, prefix + "bz", "Reconstructed Bz", svg::Scale::diverging, "mT", 1e3);
    return field;
}

int cmd_reconstruct(const Context& ctx, const std::vector<std::string>& paths) {
    std::array<RasterMap, 3> shifts{read_map(paths[0]), read_map(paths[1]), read_map(paths[2])};
    for (auto& m : shifts)
        for (double& v : m.data()) v -= ctx.config.nv.bias_shift_hz;
    const VectorFieldMap field = reconstruct_and_write(ctx, shifts, "");
    const json summary{{"width_px", field.width()},
                       {"height_px", field.height()},
                       {"axes", ctx.config.nv.recon_axes},
                       {"max_abs_bx_t", max_abs(field.bx.data())},
                       {"max_abs_by_t", max_abs(field.by.data())},
                       {"max_abs_bz_t", max_abs(field.bz.data())}};
    write_json(ctx.out_dir / "reconstruct_summary.json", summary);
    std::cout << "reconstruct: " << field.width() << "x" << field.height() << " vector map, |Bz| max "
              << max_abs(field.bz.data()) * 1e3 << " mT\n";
    return ok;
}

// --- analyze ----------------------------------------------------------------

json analyze_and_write(const Context& ctx) {
    const auto& c = ctx.config;
    const SweepSetup setup = sweep_setup(c, ctx.threads);
    json out = json::object();
    std::vector<svg::Series> series;
    std::vector<double> markers;
    for (auto mode : {SignalMode::ramsey, SignalMode::rabi}) {
        const auto rep = dynamic_range_sweep(mode, setup.params, setup.deltas, setup.grid, setup.noise, setup.config);
        const std::string name(to_string(mode));
        write_json(ctx.out_dir / ("dynamic_range_" + name + ".json"), report_json(rep));
        write_file(ctx.out_dir / ("dynamic_range_" + name + ".csv"), report_csv(rep));
        out[name] = {{"delta_max_hz", rep.delta_max_hz}};
        svg::Series s{name, mode == SignalMode::ramsey ? "#b2182b" : "#2166ac", {}, {}};
        for (const auto& r : rep.rows) {
            s.x.push_back(r.delta_hz * 1e-6);
            s.y.push_back(r.relative_error);
        }
        series.push_back(std::move(s));
        markers.push_back(-rep.delta_max_hz * 1e-6);
        markers.push_back(rep.delta_max_hz * 1e-6);
    }
    svg::LinePlotStyle style{"Frequency recovery error vs detuning", "detuning (MHz)", "relative frequency error",
                             true, 1e-12, markers, c.sweep.error_threshold};
    write_file(ctx.out_dir / "dynamic_range.svg", svg::line_plot(series, style));

    // Ramsey set-point: steepest fringe slope over the sweep window
    const auto sp = sensitivity_setpoint(setup.params, SignalMode::ramsey, setup.grid, setup.deltas);
    const auto sp_rabi = sensitivity_setpoint(setup.params, SignalMode::rabi, setup.grid, setup.deltas);
    const json setpoint{{"ramsey", {{"t_s", sp.t_s}, {"delta_hz", sp.delta_hz}, {"slope_per_hz", sp.slope_per_hz}}},
                        {"rabi", {{"t_s", sp_rabi.t_s}, {"delta_hz", sp_rabi.delta_hz}, {"slope_per_hz", sp_rabi.slope_per_hz}}}};
    write_json(ctx.out_dir / "sensitivity_setpoint.json", setpoint);
    out["sensitivity_setpoint"] = setpoint;

    const double rabi_freq = 2.0 * c.drive.eta_hz;
    const double delta = detuning_for_shift_ratio(c.sweep.shift_ratio, rabi_freq);
    // Ramsey window long enough to resolve the sub-MHz detuning
    const TimeGrid ramsey_grid{0.0, 0.1 / std::max(delta, 1.0), 400};
    const auto probe = shift_ratio_probe(setup.params, delta, setup.grid, ramsey_grid, c.fit);
    const json ratio{{"target_ratio", c.sweep.shift_ratio},
                     {"delta_hz", probe.delta_hz},
                     {"closed_form_ratio", probe.closed_form_ratio},
                     {"fitted_ratio", probe.fitted_ratio},
                     {"ramsey_frequency_hz", probe.ramsey_frequency_hz},
                     {"rabi_frequency_hz", probe.rabi_frequency_hz},
                     {"rabi_resonant_frequency_hz", probe.rabi_resonant_frequency_hz}};
    write_json(ctx.out_dir / "shift_ratio.json", ratio);
    out["shift_ratio"] = ratio;
    return out;
}

int cmd_analyze(const Context& ctx) {
    const json out = analyze_and_write(ctx);
    std::cout << "analyze: delta_max ramsey " << out["ramsey"]["delta_max_hz"].get<double>() * 1e-6 << " MHz, rabi "
              << out["rabi"]["delta_max_hz"].get<double>() * 1e-6 << " MHz; shift ratio "
              << out["shift_ratio"]["fitted_ratio"].get<double>() << " at "
              << out["shift_ratio"]["delta_hz"].get<double>() * 1e-6 << " MHz\n";
    return ok;
}

// --- report -----------------------------------------------------------------

double rms_difference(const RasterMap& a, const RasterMap& b) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a.data()[k] - b.data()[k];
        if (!std::isfinite(d)) continue;
        s += d * d;
        ++n;
    }
    return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

int cmd_report(const Context& ctx) {
    const auto& c = ctx.config;
    if (c.drive.mode != SignalMode::ramsey)
        throw ConfigError("the report reconstructs signed maps and needs \"ramsey\"", "drive.mode");
    const Scene scene = build_scene(c, ctx.threads);
    write_heatmap(ctx, scene.field.bz, "truth_bz", "Stray field Bz", svg::Scale::diverging, "mT", 1e3);

    std::array<RasterMap, 3> shifts;
    json axes_json = json::array();
    for (std::size_t k = 0; k < 3; ++k) {
        const int axis = c.nv.recon_axes[k];
        PipelineConfig ck = c;
        ck.nv.axis = axis;
        ck.seed = c.seed + k;  // independent noise per orientation
        Scene sk = scene;
        sk.detuning_hz = field_to_detuning(scene.field, NVOrientationSet().axis(axis), spin_constants(c), c.nv.bias_shift_hz);
        const ImageStack stack = simulate_stack(ck, sk, ctx.threads);
        const std::string prefix = "axis" + std::to_string(axis) + "_";
        write_stack(stack, ctx.out_dir / (prefix + "stack.qwis"));
        write_heatmap(ctx, sk.detuning_hz, prefix + "truth_detuning", "Injected detuning, axis " + std::to_string(axis),
                      svg::Scale::diverging, "MHz", 1e-6);
        const FitOutcome fit = fit_and_write(ctx, stack, prefix);
        shifts[k] = fit.signed_map->sample_hz;
        for (double& v : shifts[k].data()) v -= c.nv.bias_shift_hz;
        const double peak = max_abs(sk.detuning_hz.data());
        axes_json.push_back({{"axis", axis},
                             {"peak_detuning_hz", peak},
                             {"signed_map_rms_error_hz", rms_difference(fit.signed_map->sample_hz, sk.detuning_hz)},
                             {"converged_pixels", fit.fits.count(FitStatus::converged)}});
    }
    const VectorFieldMap field = reconstruct_and_write(ctx, shifts, "recon_");
    const double bscale = std::max({max_abs(scene.field.bx.data()), max_abs(scene.field.by.data()), max_abs(scene.field.bz.data())});
    const json vector{{"peak_field_t", bscale},
                      {"bx_rms_error_t", rms_difference(field.bx, scene.field.bx)},
                      {"by_rms_error_t", rms_difference(field.by, scene.field.by)},
                      {"bz_rms_error_t", rms_difference(field.bz, scene.field.bz)}};
    const json analysis = analyze_and_write(ctx);
    const json report{{"seed", c.seed}, {"orientations", axes_json}, {"vector_field", vector}, {"analysis", analysis}};
    write_json(ctx.out_dir / "report.json", report);
    std::cout << "report: Bz rms error " << vector["bz_rms_error_t"].get<double>() * 1e3 << " mT of peak "
              << bscale * 1e3 << " mT; ramsey delta_max " << analysis["ramsey"]["delta_max_hz"].get<double>() * 1e-6
              << " MHz\n";
    return ok;
}

unsigned threads_from_env() {
    if (const char* env = std::getenv("QWISE_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw ConfigError("must be a non-negative integer", "QWISE_THREADS");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qwise: wide-field NV spin imaging pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("-c,--config", config_path, "TOML configuration file (defaults when omitted)");
    app.add_option("-o,--out-dir", out_dir, "output directory");
    app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--threads", threads, "worker threads (0 = all cores; default from QWISE_THREADS)");

    auto* simulate = app.add_subcommand("simulate", "synthesize an image stack from the configured flake");
    std::string stack_path;
    auto* fit = app.add_subcommand("fit", "fit every pixel of a stack");
    fit->add_option("stack", stack_path, "stack file")->required();
    std::vector<std::string> map_paths;
    auto* reconstruct = app.add_subcommand("reconstruct", "three shift maps to a vector field map");
    reconstruct->add_option("maps", map_paths, "shift maps in Hz for the configured recon_axes")->required()->expected(3);
    auto* analyze = app.add_subcommand("analyze", "dynamic-range sweeps, sensitivity set-point, shift ratio");
    auto* report = app.add_subcommand("report", "end-to-end run: three orientations, vector field, analysis");
    bool dump_config = false;
    app.add_flag("--dump-config", dump_config, "also print the effective configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_error;
    }

    try {
        Context ctx;
        ctx.config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
        if (seed) ctx.config.seed = *seed;
        ctx.threads = threads ? *threads : (std::getenv("QWISE_THREADS") ? threads_from_env() : ctx.config.threads);
        ctx.out_dir = out_dir;
        fs::create_directories(ctx.out_dir);
        const std::string effective = to_toml(ctx.config);
        write_file(ctx.out_dir / "config.effective.toml", effective);
        if (dump_config) std::cout << effective;

        if (*simulate) return cmd_simulate(ctx);
        if (*fit) return cmd_fit(ctx, stack_path);
        if (*reconstruct) return cmd_reconstruct(ctx, map_paths);
        if (*analyze) return cmd_analyze(ctx);
        if (*report) return cmd_report(ctx);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return config_error;
    } catch (const FormatError& e) {
        std::cerr << "input format error: " << e.what() << "\n";
        return input_error;
    } catch (const ContractError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return input_error;
    } catch (const IntegrationFailure& e) {
        std::cerr << "numerical failure: " << e.what() << " (reached t = " << e.time_reached_s() << " s)\n";
        return numerical_failure;
    } catch (const InversionError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return numerical_failure;
    } catch (const RankDeficiencyError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return numerical_failure;
    } catch (const DataError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return numerical_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return generic_failure;
    }
    return generic_failure;
}
