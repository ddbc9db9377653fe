#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qwise/error.hpp"

namespace qwise {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

// Row-major width x height grid with a physical pixel pitch. Pixel (ix, iy)
// has its center at ((ix + 0.5) * pitch, (iy + 0.5) * pitch) from the origin.
template <typename T>
class Raster {
public:
    Raster() = default;
    Raster(std::size_t width, std::size_t height, double pixel_pitch_m, T fill = T{})
        : width_(width), height_(height), pitch_(pixel_pitch_m), data_(width * height, fill) {
        if (!(pixel_pitch_m > 0.0)) throw ContractError("raster pixel pitch must be positive");
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    double pixel_pitch_m() const noexcept { return pitch_; }

    T& operator()(std::size_t ix, std::size_t iy) { return data_[iy * width_ + ix]; }
    const T& operator()(std::size_t ix, std::size_t iy) const { return data_[iy * width_ + ix]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    double center_x_m(std::size_t ix) const noexcept { return (static_cast<double>(ix) + 0.5) * pitch_; }
    double center_y_m(std::size_t iy) const noexcept { return (static_cast<double>(iy) + 0.5) * pitch_; }

    template <typename U>
    bool same_shape(const Raster<U>& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    double pitch_ = 1.0;
    std::vector<T> data_;
};

using RasterMap = Raster<double>;
using Mask = Raster<std::uint8_t>;

template <typename T, typename U>
void require_same_shape(const Raster<T>& a, const Raster<U>& b, const char* what) {
    if (!a.same_shape(b)) throw ContractError(std::string("shape mismatch: ") + what);
}

// Three same-shape component rasters in tesla.
struct VectorFieldMap {
    RasterMap bx;
    RasterMap by;
    RasterMap bz;

    VectorFieldMap() = default;
    VectorFieldMap(std::size_t width, std::size_t height, double pitch)
        : bx(width, height, pitch), by(width, height, pitch), bz(width, height, pitch) {}

    std::size_t width() const noexcept { return bz.width(); }
    std::size_t height() const noexcept { return bz.height(); }
    double pixel_pitch_m() const noexcept { return bz.pixel_pitch_m(); }

    Vec3 at(std::size_t ix, std::size_t iy) const { return {bx(ix, iy), by(ix, iy), bz(ix, iy)}; }
    void set(std::size_t ix, std::size_t iy, Vec3 b) {
        bx(ix, iy) = b.x;
        by(ix, iy) = b.y;
        bz(ix, iy) = b.z;
    }
};

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace qwise
