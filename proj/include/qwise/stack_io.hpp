#pragma once

// Binary stack format (little-endian):
//   "QWIS" | u8 version=1 | u32 width | u32 height | u32 frames | f64 t0_s | f64 dt_s
//   | width*height*frames f64, frame-major, row-major within a frame
// plus a JSON sidecar "<path>.meta.json". Maps reuse the format with frames = 1.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qwise/error.hpp"
#include "qwise/image_stack.hpp"
#include "qwise/raster.hpp"

namespace qwise {

inline constexpr std::array<char, 4> stack_magic{'Q', 'W', 'I', 'S'};
inline constexpr std::uint8_t stack_version = 1;
inline constexpr std::size_t stack_header_bytes = 4 + 1 + 3 * 4 + 2 * 8;

// Header and payload exactly as stored.
struct StackFile {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t frames = 0;
    double t0_s = 0.0;
    double dt_s = 1.0;
    std::vector<double> data;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xffu));
}

template <typename T>
T get_le(const unsigned char* in) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    U bits = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<U>(in[k]) << (8 * k);
    return std::bit_cast<T>(bits);
}

inline std::string sidecar_path(const std::filesystem::path& path) { return path.string() + ".meta.json"; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(FormatErrorKind::io, "cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw FormatError(FormatErrorKind::io, "write failed for '" + path.string() + "'");
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrorKind::io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

inline std::string encode_stack_file(const StackFile& f) {
    if (f.data.size() != static_cast<std::size_t>(f.width) * f.height * f.frames)
        throw ContractError("stack payload size does not match header");
    std::string out;
    out.reserve(stack_header_bytes + 8 * f.data.size());
    out.append(stack_magic.data(), stack_magic.size());
    detail::put_le(out, stack_version);
    detail::put_le(out, f.width);
    detail::put_le(out, f.height);
    detail::put_le(out, f.frames);
    detail::put_le(out, f.t0_s);
    detail::put_le(out, f.dt_s);
    for (double v : f.data) detail::put_le(out, v);
    return out;
}

inline StackFile decode_stack_file(const std::string& bytes) {
    if (bytes.size() < stack_magic.size() || std::memcmp(bytes.data(), stack_magic.data(), stack_magic.size()) != 0)
        throw FormatError(FormatErrorKind::magic_mismatch, "not a stack file: magic bytes are not \"QWIS\"");
    if (bytes.size() < stack_header_bytes) throw FormatError(FormatErrorKind::truncated, "stack header is truncated");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const auto version = p[4];
    if (version != stack_version)
        throw FormatError(FormatErrorKind::version_mismatch,
                          "unsupported stack version " + std::to_string(version) + " (expected 1)");
    StackFile f;
    f.width = detail::get_le<std::uint32_t>(p + 5);
    f.height = detail::get_le<std::uint32_t>(p + 9);
    f.frames = detail::get_le<std::uint32_t>(p + 13);
    f.t0_s = detail::get_le<double>(p + 17);
    f.dt_s = detail::get_le<double>(p + 25);
    const auto count = static_cast<std::uint64_t>(f.width) * f.height * f.frames;
    const auto payload = static_cast<std::uint64_t>(bytes.size() - stack_header_bytes);
    if (payload < count * 8)
        throw FormatError(FormatErrorKind::truncated, "stack payload truncated: header declares " +
                                                          std::to_string(count) + " samples, file holds " +
                                                          std::to_string(payload / 8));
    if (payload > count * 8) throw FormatError(FormatErrorKind::malformed, "trailing bytes after stack payload");
    f.data.resize(count);
    for (std::uint64_t k = 0; k < count; ++k) f.data[k] = detail::get_le<double>(p + stack_header_bytes + 8 * k);
    return f;
}

inline nlohmann::json metadata_to_json(const AcquisitionMetadata& m) {
    return {{"mode", std::string(to_string(m.mode))},
            {"drive_frequency_hz", m.drive_frequency_hz},
            {"drive_eta_hz", m.drive_eta_hz},
            {"drive_offset_hz", m.drive_offset_hz},
            {"ms_a_per_m", m.ms_a_per_m},
            {"standoff_m", m.standoff_m},
            {"pixel_pitch_m", m.pixel_pitch_m},
            {"seed", m.seed}};
}

inline AcquisitionMetadata metadata_from_json(const nlohmann::json& j) {
    try {
        AcquisitionMetadata m;
        m.mode = parse_signal_mode(j.at("mode").get<std::string>());
        m.drive_frequency_hz = j.at("drive_frequency_hz").get<double>();
        m.drive_eta_hz = j.at("drive_eta_hz").get<double>();
        m.drive_offset_hz = j.at("drive_offset_hz").get<double>();
        m.ms_a_per_m = j.at("ms_a_per_m").get<double>();
        m.standoff_m = j.at("standoff_m").get<double>();
        m.pixel_pitch_m = j.at("pixel_pitch_m").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrorKind::malformed, std::string("bad stack metadata: ") + e.what());
    } catch (const ContractError& e) {
        throw FormatError(FormatErrorKind::malformed, std::string("bad stack metadata: ") + e.what());
    }
}

inline void write_stack(const ImageStack& stack, const std::filesystem::path& path) {
    StackFile f;
    f.width = static_cast<std::uint32_t>(stack.width());
    f.height = static_cast<std::uint32_t>(stack.height());
    f.frames = static_cast<std::uint32_t>(stack.frames());
    f.t0_s = stack.time_grid().t0_s;
    f.dt_s = stack.time_grid().dt_s;
    f.data = stack.data();
    detail::write_text(path, encode_stack_file(f));
    detail::write_text(detail::sidecar_path(path), metadata_to_json(stack.metadata()).dump(2) + "\n");
}

// The sidecar is optional on read; without it the metadata keeps defaults.
inline ImageStack read_stack(const std::filesystem::path& path) {
    const StackFile f = decode_stack_file(detail::read_bytes(path));
    if (f.frames < 2 || f.width == 0 || f.height == 0 || !(f.dt_s > 0.0))
        throw FormatError(FormatErrorKind::malformed, "stack needs width, height >= 1, frames >= 2 and dt > 0");
    AcquisitionMetadata meta;
    const auto side = detail::sidecar_path(path);
    if (std::filesystem::exists(side)) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(detail::read_bytes(side));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(FormatErrorKind::malformed, std::string("bad stack sidecar: ") + e.what());
        }
        meta = metadata_from_json(j);
    }
    ImageStack stack(f.width, f.height, TimeGrid{f.t0_s, f.dt_s, f.frames}, meta);
    stack.data() = f.data;
    return stack;
}

// Single-quantity map; `quantity` and `unit` go to the sidecar.
inline void write_map(const RasterMap& map, const std::filesystem::path& path, const std::string& quantity,
                      const std::string& unit) {
    StackFile f;
    f.width = static_cast<std::uint32_t>(map.width());
    f.height = static_cast<std::uint32_t>(map.height());
    f.frames = 1;
    f.data.assign(map.data().begin(), map.data().end());
    detail::write_text(path, encode_stack_file(f));
    const nlohmann::json side = {{"quantity", quantity}, {"unit", unit}, {"pixel_pitch_m", map.pixel_pitch_m()}};
    detail::write_text(detail::sidecar_path(path), side.dump(2) + "\n");
}

inline RasterMap read_map(const std::filesystem::path& path) {
    const StackFile f = decode_stack_file(detail::read_bytes(path));
    if (f.frames != 1 || f.width == 0 || f.height == 0)
        throw FormatError(FormatErrorKind::malformed, "map file must hold exactly one non-empty frame");
    double pitch = 1e-6;
    const auto side = detail::sidecar_path(path);
    if (std::filesystem::exists(side)) {
        try {
            pitch = nlohmann::json::parse(detail::read_bytes(side)).at("pixel_pitch_m").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(FormatErrorKind::malformed, std::string("bad map sidecar: ") + e.what());
        }
    }
    if (!(pitch > 0.0)) throw FormatError(FormatErrorKind::malformed, "map sidecar pixel pitch must be > 0");
    RasterMap map(f.width, f.height, pitch);
    std::copy(f.data.begin(), f.data.end(), map.data().begin());
    return map;
}

inline std::string format_double(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

// "t_s,signal" header then one row per frame.
inline std::string trace_csv(const ImageStack& stack, std::size_t ix, std::size_t iy) {
    if (ix >= stack.width() || iy >= stack.height()) throw ContractError("pixel outside stack");
    std::string out = "t_s,signal\n";
    for (std::size_t f = 0; f < stack.frames(); ++f)
        out += format_double(stack.time_grid().at(f)) + "," + format_double(stack.at(ix, iy, f)) + "\n";
    return out;
}

// One CSV row per raster row (y), columns along x.
inline std::string map_csv(const RasterMap& map) {
    std::string out;
    for (std::size_t iy = 0; iy < map.height(); ++iy) {
        for (std::size_t ix = 0; ix < map.width(); ++ix) {
            if (ix) out += ',';
            out += format_double(map(ix, iy));
        }
        out += '\n';
    }
    return out;
}

inline void write_map_csv(const RasterMap& map, const std::filesystem::path& path) {
    detail::write_text(path, map_csv(map));
}

}  // namespace qwise
