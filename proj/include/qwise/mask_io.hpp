#pragma once

// Flake mask ingestion. Both readers threshold a height-like value:
// value > threshold => inside the flake.

#include <cctype>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "qwise/error.hpp"
#include "qwise/raster.hpp"
#include "qwise/stack_io.hpp"

namespace qwise {

// Binary PGM (P5), 8- or 16-bit samples.
inline Mask parse_pgm_mask(const std::string& bytes, double pitch_m, double threshold) {
    std::size_t pos = 0;
    auto fail = [](const std::string& what) { return FormatError(FormatErrorKind::malformed, "PGM: " + what); };
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw fail("unexpected end of header");
        return bytes.substr(start, pos - start);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw FormatError(FormatErrorKind::magic_mismatch, "PGM: expected P5 magic");
    pos = 2;
    std::size_t width = 0, height = 0, maxval = 0;
    try {
        width = std::stoul(next_token());
        height = std::stoul(next_token());
        maxval = std::stoul(next_token());
    } catch (const std::logic_error&) {
        throw fail("non-numeric header field");
    }
    if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) throw fail("invalid dimensions or maxval");
    ++pos;  // single whitespace after maxval
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    if (bytes.size() < pos + width * height * bpp)
        throw FormatError(FormatErrorKind::truncated, "PGM: pixel data truncated");
    Mask mask(width, height, pitch_m, 0);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
    for (std::size_t k = 0; k < width * height; ++k) {
        const double v = bpp == 1 ? p[k] : static_cast<double>((p[2 * k] << 8) | p[2 * k + 1]);
        mask.data()[k] = v > threshold ? 1 : 0;
    }
    return mask;
}

// Comma-separated rows (row index = y); values may be 0/1 or heights.
inline Mask parse_csv_mask(const std::string& text, double pitch_m, double threshold) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::logic_error&) {
                throw FormatError(FormatErrorKind::malformed, "CSV mask: bad value '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError(FormatErrorKind::malformed, "CSV mask: ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().empty()) throw FormatError(FormatErrorKind::malformed, "CSV mask is empty");
    Mask mask(rows.front().size(), rows.size(), pitch_m, 0);
    for (std::size_t iy = 0; iy < rows.size(); ++iy)
        for (std::size_t ix = 0; ix < rows[iy].size(); ++ix) mask(ix, iy) = rows[iy][ix] > threshold ? 1 : 0;
    return mask;
}

inline Mask read_mask(const std::filesystem::path& path, double pitch_m, double threshold) {
    const std::string bytes = detail::read_bytes(path);
    const auto ext = path.extension().string();
    if (ext == ".pgm") return parse_pgm_mask(bytes, pitch_m, threshold);
    if (ext == ".csv") return parse_csv_mask(bytes, pitch_m, threshold);
    throw FormatError(FormatErrorKind::malformed, "mask file must be .pgm or .csv: " + path.string());
}

}  // namespace qwise
