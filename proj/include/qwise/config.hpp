#pragma once

// Pipeline configuration: one TOML document, unit-suffixed keys, unknown keys
// rejected. `to_toml` writes the effective configuration with every default
// filled in; loading that text reproduces the same configuration.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <toml.hpp>

#include "qwise/error.hpp"
#include "qwise/magnetostatics.hpp"
#include "qwise/nv_esr.hpp"
#include "qwise/pixel_fit.hpp"
#include "qwise/spin_dynamics.hpp"

namespace qwise {

struct GeometryConfig {
    std::size_t width_px = 40;
    std::size_t height_px = 40;
    double pixel_pitch_m = 1e-6;
    double thickness_m = 100e-9;
    double standoff_m = 100e-9;
    std::string mask_path;  // PGM or CSV; empty means the rectangle below
    double mask_threshold = 0.5;
    std::size_t rect_x0_px = 10;
    std::size_t rect_y0_px = 13;
    std::size_t rect_x1_px = 30;
    std::size_t rect_y1_px = 27;
};

struct MagnetizationConfig {
    double ms_a_per_m = 1.5e4;
    double angle_rad = 0.0;
};

struct NvConfig {
    double gamma_hz_per_t = 28e9;
    double zero_field_hz = 2.87e9;
    int axis = 1;
    std::array<int, 3> recon_axes{1, 2, 3};
    double bias_shift_hz = 0.0;
};

struct DriveConfig {
    SignalMode mode = SignalMode::ramsey;
    double offset_hz = 20e6;
    double eta_hz = 6.69125e6;
    double frequency_hz = 2.3836e9;
    double t2_star_s = infinity;
    double t_rabi_decay_s = infinity;
};

struct TimeConfig {
    double t0_s = 0.0;
    double dt_s = 2.5e-9;
    std::size_t frames = 200;
};

struct NoiseConfig {
    double photons_per_frame = 400.0;
    double contrast = 1.0;
};

struct BackgroundConfig {
    double a_hz_per_m = 0.0;
    double b_hz_per_m = 0.0;
    double c_hz = 0.0;
};

struct PhotoluminescenceConfig {
    double mask_factor = 1.0;
};

struct StrayFieldConfig {
    StrayFieldBackend backend = StrayFieldBackend::transform;
    std::size_t max_transform_size = 16384;
};

struct ReconConfig {
    bool exclude_flake = true;
    double resolution_hz = 0.0;  // 0 => 1 / acquisition window
};

struct SweepConfig {
    double delta_limit_hz = 80e6;
    double delta_step_hz = 2.5e6;
    double dt_s = 4e-9;
    std::size_t frames = 200;
    double photons_per_frame = 400.0;
    double contrast = 1.0;
    double error_threshold = 0.01;
    double contrast_floor = 0.10;
    double shift_ratio = 70.0;
};

struct PipelineConfig {
    std::uint64_t seed = 1;
    unsigned threads = 0;
    GeometryConfig geometry;
    MagnetizationConfig magnetization;
    NvConfig nv;
    DriveConfig drive;
    TimeConfig time;
    NoiseConfig noise;
    BackgroundConfig background;
    PhotoluminescenceConfig photoluminescence;
    StrayFieldConfig stray_field;
    FitConfig fit;
    ReconConfig recon;
    SweepConfig sweep;
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema{
        {"geometry",
         {"width_px", "height_px", "pixel_pitch_m", "thickness_m", "standoff_m", "mask_path", "mask_threshold",
          "rect_x0_px", "rect_y0_px", "rect_x1_px", "rect_y1_px"}},
        {"magnetization", {"ms_a_per_m", "angle_rad"}},
        {"nv", {"gamma_hz_per_t", "zero_field_hz", "axis", "recon_axes", "bias_shift_hz"}},
        {"drive", {"mode", "offset_hz", "eta_hz", "frequency_hz", "t2_star_s", "t_rabi_decay_s"}},
        {"time", {"t0_s", "dt_s", "frames"}},
        {"noise", {"photons_per_frame", "contrast"}},
        {"background", {"a_hz_per_m", "b_hz_per_m", "c_hz"}},
        {"photoluminescence", {"mask_factor"}},
        {"stray_field", {"backend", "max_transform_size"}},
        {"fit",
         {"max_iterations", "gradient_tolerance", "step_tolerance", "initial_damping", "damping_scale",
          "min_frequency_hz", "max_frequency_hz"}},
        {"recon", {"exclude_flake", "resolution_hz"}},
        {"sweep",
         {"delta_limit_hz", "delta_step_hz", "dt_s", "frames", "photons_per_frame", "contrast", "error_threshold",
          "contrast_floor", "shift_ratio"}},
    };
    return schema;
}

class ConfigReader {
public:
    explicit ConfigReader(const toml::table& root) : root_(root) {}

    void check_keys() const {
        const auto& schema = config_schema();
        for (const auto& [key, node] : root_) {
            const std::string k(key.str());
            if (k == "seed" || k == "threads") continue;
            const auto it = schema.find(k);
            if (it == schema.end()) throw ConfigError("unknown key", k);
            const toml::table* sub = node.as_table();
            if (!sub) throw ConfigError("expected a table", k);
            for (const auto& [subkey, subnode] : *sub) {
                (void)subnode;
                const std::string sk(subkey.str());
                if (!it->second.count(sk)) throw ConfigError("unknown key", k + "." + sk);
            }
        }
    }

    void number(const char* section, const char* key, double& out) const {
        if (const toml::node* n = find(section, key)) {
            const auto v = n->value<double>();
            if (!v || n->is_boolean()) throw ConfigError("expected a number", path(section, key));
            if (std::isnan(*v)) throw ConfigError("must not be NaN", path(section, key));
            out = *v;
        }
    }

    template <typename Int>
    void integer(const char* section, const char* key, Int& out) const {
        if (const toml::node* n = find(section, key)) {
            const auto v = n->value_exact<std::int64_t>();
            if (!v) throw ConfigError("expected an integer", path(section, key));
            if (*v < 0) throw ConfigError("must be >= 0", path(section, key));
            out = static_cast<Int>(*v);
        }
    }

    void text(const char* section, const char* key, std::string& out) const {
        if (const toml::node* n = find(section, key)) {
            const auto v = n->value_exact<std::string>();
            if (!v) throw ConfigError("expected a string", path(section, key));
            out = *v;
        }
    }

    void flag(const char* section, const char* key, bool& out) const {
        if (const toml::node* n = find(section, key)) {
            const auto v = n->value_exact<bool>();
            if (!v) throw ConfigError("expected true or false", path(section, key));
            out = *v;
        }
    }

    void axis_triple(const char* section, const char* key, std::array<int, 3>& out) const {
        if (const toml::node* n = find(section, key)) {
            const toml::array* a = n->as_array();
            if (!a || a->size() != 3) throw ConfigError("expected an array of three axis indices", path(section, key));
            for (std::size_t k = 0; k < 3; ++k) {
                const auto v = (*a)[k].value_exact<std::int64_t>();
                if (!v) throw ConfigError("axis indices must be integers", path(section, key));
                out[k] = static_cast<int>(*v);
            }
        }
    }

    static std::string path(const char* section, const char* key) {
        return section ? std::string(section) + "." + key : std::string(key);
    }

private:
    const toml::node* find(const char* section, const char* key) const {
        if (!section) return root_.get(key);
        const toml::table* sub = root_.get_as<toml::table>(section);
        return sub ? sub->get(key) : nullptr;
    }

    const toml::table& root_;
};

inline void require(bool ok, const char* section, const char* key, const char* what) {
    if (!ok) throw ConfigError(what, ConfigReader::path(section, key));
}

inline const char* backend_name(StrayFieldBackend b) { return b == StrayFieldBackend::prism ? "prism" : "transform"; }

}  // namespace detail

inline void validate(const PipelineConfig& c) {
    using detail::require;
    const auto& g = c.geometry;
    require(g.width_px > 0, "geometry", "width_px", "must be > 0");
    require(g.height_px > 0, "geometry", "height_px", "must be > 0");
    require(g.pixel_pitch_m > 0 && std::isfinite(g.pixel_pitch_m), "geometry", "pixel_pitch_m", "must be > 0");
    require(g.thickness_m > 0 && std::isfinite(g.thickness_m), "geometry", "thickness_m", "must be > 0");
    require(g.standoff_m > 0 && std::isfinite(g.standoff_m), "geometry", "standoff_m", "must be > 0");
    require(g.rect_x0_px < g.rect_x1_px && g.rect_x1_px <= g.width_px, "geometry", "rect_x1_px",
            "rectangle must satisfy x0 < x1 <= width_px");
    require(g.rect_y0_px < g.rect_y1_px && g.rect_y1_px <= g.height_px, "geometry", "rect_y1_px",
            "rectangle must satisfy y0 < y1 <= height_px");
    require(c.magnetization.ms_a_per_m >= 0 && std::isfinite(c.magnetization.ms_a_per_m), "magnetization",
            "ms_a_per_m", "must be finite and >= 0");
    require(std::isfinite(c.magnetization.angle_rad), "magnetization", "angle_rad", "must be finite");
    require(c.nv.gamma_hz_per_t > 0 && std::isfinite(c.nv.gamma_hz_per_t), "nv", "gamma_hz_per_t", "must be > 0");
    require(c.nv.zero_field_hz > 0 && std::isfinite(c.nv.zero_field_hz), "nv", "zero_field_hz", "must be > 0");
    require(c.nv.axis >= 1 && c.nv.axis <= 4, "nv", "axis", "must be 1..4");
    for (int a : c.nv.recon_axes) require(a >= 1 && a <= 4, "nv", "recon_axes", "indices must be 1..4");
    require(c.nv.recon_axes[0] != c.nv.recon_axes[1] && c.nv.recon_axes[0] != c.nv.recon_axes[2] &&
                c.nv.recon_axes[1] != c.nv.recon_axes[2],
            "nv", "recon_axes", "indices must be distinct");
    require(std::isfinite(c.nv.bias_shift_hz), "nv", "bias_shift_hz", "must be finite");
    require(std::isfinite(c.drive.offset_hz), "drive", "offset_hz", "must be finite");
    require(c.drive.eta_hz >= 0 && std::isfinite(c.drive.eta_hz), "drive", "eta_hz", "must be finite and >= 0");
    require(c.drive.t2_star_s > 0, "drive", "t2_star_s", "must be > 0 (inf allowed)");
    require(c.drive.t_rabi_decay_s > 0, "drive", "t_rabi_decay_s", "must be > 0 (inf allowed)");
    require(c.time.dt_s > 0 && std::isfinite(c.time.dt_s), "time", "dt_s", "must be > 0");
    require(std::isfinite(c.time.t0_s), "time", "t0_s", "must be finite");
    require(c.time.frames >= 8, "time", "frames", "must be >= 8");
    require(c.noise.photons_per_frame > 0, "noise", "photons_per_frame", "must be > 0 (inf = noiseless)");
    require(c.noise.contrast > 0 && c.noise.contrast <= 1, "noise", "contrast", "must lie in (0, 1]");
    require(std::isfinite(c.background.a_hz_per_m), "background", "a_hz_per_m", "must be finite");
    require(std::isfinite(c.background.b_hz_per_m), "background", "b_hz_per_m", "must be finite");
    require(std::isfinite(c.background.c_hz), "background", "c_hz", "must be finite");
    require(c.photoluminescence.mask_factor >= 0 && c.photoluminescence.mask_factor <= 1, "photoluminescence",
            "mask_factor", "must lie in [0, 1]");
    require(c.stray_field.max_transform_size >= 8, "stray_field", "max_transform_size", "must be >= 8");
    require(c.fit.max_iterations > 0, "fit", "max_iterations", "must be > 0");
    require(c.fit.gradient_tolerance > 0, "fit", "gradient_tolerance", "must be > 0");
    require(c.fit.step_tolerance > 0, "fit", "step_tolerance", "must be > 0");
    require(c.fit.initial_damping > 0, "fit", "initial_damping", "must be > 0");
    require(c.fit.damping_scale > 1, "fit", "damping_scale", "must be > 1");
    require(c.fit.min_frequency_hz >= 0, "fit", "min_frequency_hz", "must be >= 0");
    require(c.fit.max_frequency_hz >= 0, "fit", "max_frequency_hz", "must be >= 0 (0 = Nyquist)");
    require(c.recon.resolution_hz >= 0, "recon", "resolution_hz", "must be >= 0");
    const auto& s = c.sweep;
    require(s.delta_limit_hz > 0 && std::isfinite(s.delta_limit_hz), "sweep", "delta_limit_hz", "must be > 0");
    require(s.delta_step_hz > 0 && s.delta_step_hz <= s.delta_limit_hz, "sweep", "delta_step_hz",
            "must lie in (0, delta_limit_hz]");
    require(s.delta_limit_hz / s.delta_step_hz <= 100000, "sweep", "delta_step_hz", "grid too fine");
    require(s.dt_s > 0 && std::isfinite(s.dt_s), "sweep", "dt_s", "must be > 0");
    require(s.frames >= 8, "sweep", "frames", "must be >= 8");
    require(s.photons_per_frame > 0, "sweep", "photons_per_frame", "must be > 0 (inf = noiseless)");
    require(s.contrast > 0 && s.contrast <= 1, "sweep", "contrast", "must lie in (0, 1]");
    require(s.error_threshold > 0, "sweep", "error_threshold", "must be > 0");
    require(s.contrast_floor >= 0, "sweep", "contrast_floor", "must be >= 0");
    require(s.shift_ratio > 1, "sweep", "shift_ratio", "must be > 1");
}

inline PipelineConfig parse_config(const toml::table& root) {
    detail::ConfigReader r(root);
    r.check_keys();
    PipelineConfig c;
    r.integer(nullptr, "seed", c.seed);
    r.integer(nullptr, "threads", c.threads);

    auto& g = c.geometry;
    r.integer("geometry", "width_px", g.width_px);
    r.integer("geometry", "height_px", g.height_px);
    r.number("geometry", "pixel_pitch_m", g.pixel_pitch_m);
    r.number("geometry", "thickness_m", g.thickness_m);
    r.number("geometry", "standoff_m", g.standoff_m);
    r.text("geometry", "mask_path", g.mask_path);
    r.number("geometry", "mask_threshold", g.mask_threshold);
    r.integer("geometry", "rect_x0_px", g.rect_x0_px);
    r.integer("geometry", "rect_y0_px", g.rect_y0_px);
    r.integer("geometry", "rect_x1_px", g.rect_x1_px);
    r.integer("geometry", "rect_y1_px", g.rect_y1_px);

    r.number("magnetization", "ms_a_per_m", c.magnetization.ms_a_per_m);
    r.number("magnetization", "angle_rad", c.magnetization.angle_rad);

    r.number("nv", "gamma_hz_per_t", c.nv.gamma_hz_per_t);
    r.number("nv", "zero_field_hz", c.nv.zero_field_hz);
    r.integer("nv", "axis", c.nv.axis);
    r.axis_triple("nv", "recon_axes", c.nv.recon_axes);
    r.number("nv", "bias_shift_hz", c.nv.bias_shift_hz);

    std::string mode(to_string(c.drive.mode));
    r.text("drive", "mode", mode);
    try {
        c.drive.mode = parse_signal_mode(mode);
    } catch (const ContractError&) {
        throw ConfigError("expected \"rabi\" or \"ramsey\"", "drive.mode");
    }
    r.number("drive", "offset_hz", c.drive.offset_hz);
    r.number("drive", "eta_hz", c.drive.eta_hz);
    r.number("drive", "frequency_hz", c.drive.frequency_hz);
    r.number("drive", "t2_star_s", c.drive.t2_star_s);
    r.number("drive", "t_rabi_decay_s", c.drive.t_rabi_decay_s);

    r.number("time", "t0_s", c.time.t0_s);
    r.number("time", "dt_s", c.time.dt_s);
    r.integer("time", "frames", c.time.frames);

    r.number("noise", "photons_per_frame", c.noise.photons_per_frame);
    r.number("noise", "contrast", c.noise.contrast);

    r.number("background", "a_hz_per_m", c.background.a_hz_per_m);
    r.number("background", "b_hz_per_m", c.background.b_hz_per_m);
    r.number("background", "c_hz", c.background.c_hz);

    r.number("photoluminescence", "mask_factor", c.photoluminescence.mask_factor);

    std::string backend = detail::backend_name(c.stray_field.backend);
    r.text("stray_field", "backend", backend);
    if (backend == "prism")
        c.stray_field.backend = StrayFieldBackend::prism;
    else if (backend == "transform")
        c.stray_field.backend = StrayFieldBackend::transform;
    else
        throw ConfigError("expected \"prism\" or \"transform\"", "stray_field.backend");
    r.integer("stray_field", "max_transform_size", c.stray_field.max_transform_size);

    r.integer("fit", "max_iterations", c.fit.max_iterations);
    r.number("fit", "gradient_tolerance", c.fit.gradient_tolerance);
    r.number("fit", "step_tolerance", c.fit.step_tolerance);
    r.number("fit", "initial_damping", c.fit.initial_damping);
    r.number("fit", "damping_scale", c.fit.damping_scale);
    r.number("fit", "min_frequency_hz", c.fit.min_frequency_hz);
    r.number("fit", "max_frequency_hz", c.fit.max_frequency_hz);

    r.flag("recon", "exclude_flake", c.recon.exclude_flake);
    r.number("recon", "resolution_hz", c.recon.resolution_hz);

    auto& s = c.sweep;
    r.number("sweep", "delta_limit_hz", s.delta_limit_hz);
    r.number("sweep", "delta_step_hz", s.delta_step_hz);
    r.number("sweep", "dt_s", s.dt_s);
    r.integer("sweep", "frames", s.frames);
    r.number("sweep", "photons_per_frame", s.photons_per_frame);
    r.number("sweep", "contrast", s.contrast);
    r.number("sweep", "error_threshold", s.error_threshold);
    r.number("sweep", "contrast_floor", s.contrast_floor);
    r.number("sweep", "shift_ratio", s.shift_ratio);

    validate(c);
    return c;
}

inline PipelineConfig parse_config(std::string_view text, std::string_view source = "config") {
    try {
        return parse_config(toml::parse(text, source));
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << e.description() << " (line " << e.source().begin.line << ", column " << e.source().begin.column << ")";
        throw ConfigError(msg.str(), std::string(source));
    }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open configuration file", path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

inline std::string to_toml(const PipelineConfig& c) {
    auto i64 = [](auto v) { return static_cast<std::int64_t>(v); };
    toml::table root;
    root.insert("seed", i64(c.seed));
    root.insert("threads", i64(c.threads));
    const auto& g = c.geometry;
    root.insert("geometry", toml::table{{"width_px", i64(g.width_px)},
                                        {"height_px", i64(g.height_px)},
                                        {"pixel_pitch_m", g.pixel_pitch_m},
                                        {"thickness_m", g.thickness_m},
                                        {"standoff_m", g.standoff_m},
                                        {"mask_path", g.mask_path},
                                        {"mask_threshold", g.mask_threshold},
                                        {"rect_x0_px", i64(g.rect_x0_px)},
                                        {"rect_y0_px", i64(g.rect_y0_px)},
                                        {"rect_x1_px", i64(g.rect_x1_px)},
                                        {"rect_y1_px", i64(g.rect_y1_px)}});
    root.insert("magnetization",
                toml::table{{"ms_a_per_m", c.magnetization.ms_a_per_m}, {"angle_rad", c.magnetization.angle_rad}});
    root.insert("nv", toml::table{{"gamma_hz_per_t", c.nv.gamma_hz_per_t},
                                  {"zero_field_hz", c.nv.zero_field_hz},
                                  {"axis", i64(c.nv.axis)},
                                  {"recon_axes", toml::array{i64(c.nv.recon_axes[0]), i64(c.nv.recon_axes[1]),
                                                             i64(c.nv.recon_axes[2])}},
                                  {"bias_shift_hz", c.nv.bias_shift_hz}});
    root.insert("drive", toml::table{{"mode", std::string(to_string(c.drive.mode))},
                                     {"offset_hz", c.drive.offset_hz},
                                     {"eta_hz", c.drive.eta_hz},
                                     {"frequency_hz", c.drive.frequency_hz},
                                     {"t2_star_s", c.drive.t2_star_s},
                                     {"t_rabi_decay_s", c.drive.t_rabi_decay_s}});
    root.insert("time", toml::table{{"t0_s", c.time.t0_s}, {"dt_s", c.time.dt_s}, {"frames", i64(c.time.frames)}});
    root.insert("noise",
                toml::table{{"photons_per_frame", c.noise.photons_per_frame}, {"contrast", c.noise.contrast}});
    root.insert("background", toml::table{{"a_hz_per_m", c.background.a_hz_per_m},
                                          {"b_hz_per_m", c.background.b_hz_per_m},
                                          {"c_hz", c.background.c_hz}});
    root.insert("photoluminescence", toml::table{{"mask_factor", c.photoluminescence.mask_factor}});
    root.insert("stray_field", toml::table{{"backend", std::string(detail::backend_name(c.stray_field.backend))},
                                           {"max_transform_size", i64(c.stray_field.max_transform_size)}});
    root.insert("fit", toml::table{{"max_iterations", i64(c.fit.max_iterations)},
                                   {"gradient_tolerance", c.fit.gradient_tolerance},
                                   {"step_tolerance", c.fit.step_tolerance},
                                   {"initial_damping", c.fit.initial_damping},
                                   {"damping_scale", c.fit.damping_scale},
                                   {"min_frequency_hz", c.fit.min_frequency_hz},
                                   {"max_frequency_hz", c.fit.max_frequency_hz}});
    root.insert("recon",
                toml::table{{"exclude_flake", c.recon.exclude_flake}, {"resolution_hz", c.recon.resolution_hz}});
    const auto& s = c.sweep;
    root.insert("sweep", toml::table{{"delta_limit_hz", s.delta_limit_hz},
                                     {"delta_step_hz", s.delta_step_hz},
                                     {"dt_s", s.dt_s},
                                     {"frames", i64(s.frames)},
                                     {"photons_per_frame", s.photons_per_frame},
                                     {"contrast", s.contrast},
                                     {"error_threshold", s.error_threshold},
                                     {"contrast_floor", s.contrast_floor},
                                     {"shift_ratio", s.shift_ratio}});
    std::ostringstream out;
    out << root << "\n";
    return out.str();
}

}  // namespace qwise
