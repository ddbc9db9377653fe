#pragma once

// S=1 NV ground-state spin: exact transition frequencies, first-order axis
// projections, and the 3-axis linear inversion used for vector magnetometry.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "qwise/error.hpp"
#include "qwise/raster.hpp"

namespace qwise {

struct SpinConstants {
    double gamma_hz_per_t = 28e9;    // electron gyromagnetic ratio
    double zero_field_hz = 2.87e9;  // D/h

    void validate() const {
        if (!(gamma_hz_per_t > 0.0) || !(zero_field_hz > 0.0))
            throw ContractError("spin constants must be strictly positive");
    }
};

using FieldVector = Vec3;  // tesla, lab frame

enum class EsrBranch { lower, upper };

// The four <111> bond directions of a (100)-cut diamond. With
// `toward_surface_normal` each axis is flipped into the +z half-space; the NV
// axis is a line, so the choice only fixes the sign convention of shifts.
class NVOrientationSet {
public:
    explicit NVOrientationSet(bool toward_surface_normal = true) {
        const double s = 1.0 / std::sqrt(3.0);
        axes_ = {Vec3{s, s, s}, Vec3{s, -s, -s}, Vec3{-s, s, -s}, Vec3{-s, -s, s}};
        if (toward_surface_normal)
            for (auto& a : axes_)
                if (a.z < 0.0) a = -1.0 * a;
    }

    // 1-based, matching the usual orientation numbering 1..4.
    Vec3 axis(int index) const {
        if (index < 1 || index > 4) throw ContractError("NV axis index must be in 1..4");
        return axes_[static_cast<std::size_t>(index - 1)];
    }
    const std::array<Vec3, 4>& axes() const noexcept { return axes_; }

private:
    std::array<Vec3, 4> axes_;
};

namespace detail {

inline void require_unit(Vec3 axis) {
    if (std::abs(norm(axis) - 1.0) > 1e-9) throw ContractError("NV axis must be a unit vector");
}

// Any unit vector orthogonal to `a`.
inline Vec3 orthonormal_to(Vec3 a) {
    const Vec3 trial = std::abs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 u = cross(a, trial);
    return (1.0 / norm(u)) * u;
}

}  // namespace detail

// Hamiltonian gamma B.S + D Sz^2 (Hz) in the NV frame of `axis`, basis
// ordered ms = +1, 0, -1.
inline Eigen::Matrix3cd nv_hamiltonian(const FieldVector& b, Vec3 axis, const SpinConstants& c = {}) {
    detail::require_unit(axis);
    const Vec3 ex = detail::orthonormal_to(axis);
    const Vec3 ey = cross(axis, ex);
    const double bz = dot(b, axis);
    const double bx = dot(b, ex);
    const double by = dot(b, ey);
    const double g = c.gamma_hz_per_t;
    const double r = 1.0 / std::sqrt(2.0);
    using cd = std::complex<double>;
    // S+ = sqrt2 |+1><0| + sqrt2 |0><-1|; Sx = (S+ + S-)/2, Sy = (S+ - S-)/2i
    const cd off = g * r * cd(bx, -by);  // <+1|H|0> = <0|H|-1>
    Eigen::Matrix3cd h = Eigen::Matrix3cd::Zero();
    h(0, 0) = c.zero_field_hz + g * bz;
    h(2, 2) = c.zero_field_hz - g * bz;
    h(0, 1) = off;
    h(1, 2) = off;
    h(1, 0) = std::conj(off);
    h(2, 1) = std::conj(off);
    return h;
}

struct TransitionPair {
    double f_minus_hz = 0.0;
    double f_plus_hz = 0.0;
};

// Exact ground-to-excited transition frequencies, ascending. The reference
// level is the eigenstate with the largest ms=0 weight.
inline TransitionPair transition_frequencies_exact(const FieldVector& b, Vec3 axis, const SpinConstants& c = {}) {
    c.validate();
    const Eigen::Matrix3cd h = nv_hamiltonian(b, axis, c);
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(h);
    if (es.info() != Eigen::Success) throw InversionError("Hermitian eigensolver failed");
    const auto& ev = es.eigenvalues();
    const auto& vecs = es.eigenvectors();
    int ground = 0;
    for (int k = 1; k < 3; ++k)
        if (std::norm(vecs(1, k)) > std::norm(vecs(1, ground))) ground = k;
    std::array<double, 2> f{};
    int j = 0;
    for (int k = 0; k < 3; ++k)
        if (k != ground) f[static_cast<std::size_t>(j++)] = std::abs(ev(k) - ev(ground));
    if (f[0] > f[1]) std::swap(f[0], f[1]);
    return {f[0], f[1]};
}

// First-order Zeeman shift gamma (b . axis), Hz.
inline double linear_shift(const FieldVector& b, Vec3 axis, const SpinConstants& c = {}) {
    detail::require_unit(axis);
    return c.gamma_hz_per_t * dot(b, axis);
}

// Converts a measured resonance on the given branch to the linear shift
// convention: lower branch D - f, upper branch f - D.
inline double resonance_to_shift(double f_res_hz, EsrBranch branch, const SpinConstants& c = {}) {
    return branch == EsrBranch::lower ? c.zero_field_hz - f_res_hz : f_res_hz - c.zero_field_hz;
}

inline double shift_to_resonance(double shift_hz, EsrBranch branch, const SpinConstants& c = {}) {
    return branch == EsrBranch::lower ? c.zero_field_hz - shift_hz : c.zero_field_hz + shift_hz;
}

// Inverse of the three-axis projection: solves gamma A B = shifts with the
// axes as rows of A. Built once per axis triple so map inversion reuses it.
class AxisInverter {
public:
    static constexpr double max_condition = 1e6;

    AxisInverter(const std::array<Vec3, 3>& axes, const SpinConstants& c = {}) : gamma_(c.gamma_hz_per_t) {
        c.validate();
        Eigen::Matrix3d a;
        for (int r = 0; r < 3; ++r) {
            const Vec3 ax = axes[static_cast<std::size_t>(r)];
            detail::require_unit(ax);
            a.row(r) << ax.x, ax.y, ax.z;
        }
        const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(a).singularValues();
        condition_ = sv(2) > 0.0 ? sv(0) / sv(2) : infinity_();
        if (!(condition_ <= max_condition))
            throw InversionError("NV axis matrix is singular or ill-conditioned (cond = " +
                                 std::to_string(condition_) + ")");
        inverse_ = a.inverse();
    }

    double condition_number() const noexcept { return condition_; }

    FieldVector operator()(const std::array<double, 3>& shifts_hz) const {
        const Eigen::Vector3d s(shifts_hz[0], shifts_hz[1], shifts_hz[2]);
        const Eigen::Vector3d bvec = inverse_ * s / gamma_;
        return {bvec(0), bvec(1), bvec(2)};
    }

private:
    static double infinity_() { return std::numeric_limits<double>::infinity(); }
    double gamma_;
    double condition_ = 1.0;
    Eigen::Matrix3d inverse_;
};

inline FieldVector shifts_to_field(const std::array<double, 3>& shifts_hz, const std::array<Vec3, 3>& axes,
                                   const SpinConstants& c = {}) {
    return AxisInverter(axes, c)(shifts_hz);
}

inline std::array<Vec3, 3> select_axes(const NVOrientationSet& set, const std::array<int, 3>& indices) {
    return {set.axis(indices[0]), set.axis(indices[1]), set.axis(indices[2])};
}

// Difference between a measured fourth-axis shift and the one predicted from
// the reconstructed field.
inline double fourth_axis_residual(const FieldVector& reconstructed, Vec3 fourth_axis, double measured_shift_hz,
                                   const SpinConstants& c = {}) {
    return measured_shift_hz - linear_shift(reconstructed, fourth_axis, c);
}

}  // namespace qwise
