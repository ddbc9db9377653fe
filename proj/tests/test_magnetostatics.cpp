#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "qwise/magnetostatics.hpp"

using namespace qwise;

namespace {

FlakeGeometry rectangle_flake(std::size_t n = 40, double pitch = 1e-6) {
    return {rectangle_mask(n, n, pitch, n / 4, n / 4 + 3, 3 * n / 4, 3 * n / 4 - 3), 100e-9, 100e-9};
}

double rms(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace

TEST(WallField, MatchesDirectQuadrature) {
    const double p = 1e-6;
    for (bool nx : {true, false})
        for (const Vec3 at : {Vec3{0.5e-6, 0.5e-6, -100e-9}, Vec3{-1.5e-6, 2.5e-6, -100e-9}, Vec3{0.2e-6, -0.3e-6, -0.4e-6},
                              Vec3{4.5e-6, 0.5e-6, -150e-9}}) {
            const Vec3 exact = detail::wall_field(nx, 2.5e4, 0.0, 0.0, p, 0.0, 100e-9, at.x, at.y, at.z);
            const Vec3 quad = oracle::wall_field_quadrature(nx, 2.5e4, 0.0, 0.0, p, 0.0, 100e-9, at);
            EXPECT_LT(norm(exact - quad), 1e-9 * norm(quad)) << "normal_is_x=" << nx;
        }
}

TEST(StrayField, ZeroMagnetizationGivesZeroMap) {
    const auto g = rectangle_flake();
    for (auto backend : {StrayFieldBackend::prism, StrayFieldBackend::transform}) {
        const auto f = stray_field(g, {0.0, 1.0, 0.0}, {backend});
        EXPECT_EQ(max_abs(f.bx.data()) + max_abs(f.by.data()) + max_abs(f.bz.data()), 0.0);
    }
}

TEST(StrayField, EmptyMaskGivesZeroMap) {
    FlakeGeometry g{Mask(16, 16, 1e-6, 0), 100e-9, 100e-9};
    for (auto backend : {StrayFieldBackend::prism, StrayFieldBackend::transform}) {
        const auto f = stray_field(g, {1e5, 1.0, 0.0}, {backend});
        EXPECT_EQ(max_abs(f.bz.data()), 0.0);
    }
}

TEST(StrayField, ReflectionSymmetryForXMagnetizedRectangle) {
    // 40x40 raster, flake columns 10..29, rows 13..26: centered.
    const auto g = rectangle_flake();
    const auto f = stray_field(g, {2e4, 1.0, 0.0});
    const double scale = max_abs(f.bz.data());
    for (std::size_t iy = 0; iy < 40; ++iy)
        for (std::size_t ix = 0; ix < 40; ++ix) {
            EXPECT_NEAR(f.bz(ix, iy), -f.bz(39 - ix, iy), 1e-12 * scale);
            EXPECT_NEAR(f.bz(ix, iy), f.bz(ix, 39 - iy), 1e-12 * scale);
        }
}

TEST(StrayField, FarFieldMatchesPointDipole) {
    // 4 x 2 um flake; evaluate > 10x the diagonal away.
    const double p = 0.5e-6;
    const std::size_t n = 240;
    FlakeGeometry g{rectangle_mask(n, n, p, 116, 118, 124, 122), 100e-9, 100e-9};
    const Magnetization m = Magnetization::along_angle(3e4, 0.6);
    const auto f = stray_field(g, m);
    const double volume = 8 * p * 4 * p * g.thickness_m;
    const Vec3 moment{m.ms_a_per_m * volume * m.dir_x, m.ms_a_per_m * volume * m.dir_y, 0.0};
    const Vec3 center{120 * p, 120 * p, 0.5 * g.thickness_m};
    const double diag = std::hypot(4e-6, 2e-6);
    int checked = 0;
    for (std::size_t iy = 0; iy < n; iy += 7)
        for (std::size_t ix = 0; ix < n; ix += 7) {
            const Vec3 at{(ix + 0.5) * p, (iy + 0.5) * p, -g.standoff_m};
            const Vec3 r = at - center;
            if (norm(r) < 10.0 * diag) continue;
            const Vec3 ref = oracle::dipole_field(moment, r);
            EXPECT_LT(norm(f.at(ix, iy) - ref), 0.01 * norm(ref));
            ++checked;
        }
    EXPECT_GT(checked, 100);
}

TEST(StrayField, LinearInMagnetization) {
    const auto g = rectangle_flake(32);
    const auto f1 = stray_field(g, {1e4, 0.6, 0.8});
    const auto f2 = stray_field(g, {2e4, 0.6, 0.8});
    for (std::size_t k = 0; k < f1.bz.size(); ++k) {
        EXPECT_NEAR(f2.bz.data()[k], 2.0 * f1.bz.data()[k], 1e-12 * std::abs(f2.bz.data()[k]) + 1e-30);
        EXPECT_NEAR(f2.bx.data()[k], 2.0 * f1.bx.data()[k], 1e-12 * std::abs(f2.bx.data()[k]) + 1e-30);
    }
}

TEST(StrayField, BackendsAgreeOn64Rectangle) {
    const FlakeGeometry g{rectangle_mask(64, 64, 0.5e-6, 16, 20, 48, 44), 100e-9, 100e-9};
    const Magnetization m = Magnetization::along_angle(2e4, 0.3);
    const auto a = stray_field(g, m, {StrayFieldBackend::prism});
    const auto b = stray_field(g, m, {StrayFieldBackend::transform});
    for (auto comp : {&VectorFieldMap::bx, &VectorFieldMap::by, &VectorFieldMap::bz}) {
        std::vector<double> diff((a.*comp).size());
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = (a.*comp).data()[k] - (b.*comp).data()[k];
        EXPECT_LT(rms(diff), 0.01 * rms((a.*comp).data()));
    }
}

TEST(StrayField, BackendsAgreeOnIrregularMask) {
    std::mt19937_64 rng(4);
    Mask mask(48, 40, 1e-6, 0);
    std::bernoulli_distribution coin(0.3);
    for (std::size_t iy = 8; iy < 30; ++iy)
        for (std::size_t ix = 10; ix < 38; ++ix) mask(ix, iy) = coin(rng) || (ix > 15 && ix < 30 && iy > 12) ? 1 : 0;
    const FlakeGeometry g{mask, 80e-9, 150e-9};
    const Magnetization m = Magnetization::along_angle(1.5e4, -1.1);
    const auto a = stray_field(g, m, {StrayFieldBackend::prism, 3});
    const auto b = stray_field(g, m, {StrayFieldBackend::transform});
    for (std::size_t k = 0; k < a.bz.size(); ++k)
        EXPECT_NEAR(a.bz.data()[k], b.bz.data()[k], 1e-9 * max_abs(a.bz.data()));
}

TEST(StrayField, PrismIndependentOfThreadCountBitForBit) {
    const auto g = rectangle_flake(36);
    const Magnetization m = Magnetization::along_angle(2e4, 0.9);
    const auto one = stray_field(g, m, {StrayFieldBackend::prism, 1});
    for (unsigned t : {2u, 5u, 8u}) {
        const auto many = stray_field(g, m, {StrayFieldBackend::prism, t});
        EXPECT_EQ(one.bx, many.bx);
        EXPECT_EQ(one.by, many.by);
        EXPECT_EQ(one.bz, many.bz);
    }
}

TEST(StrayField, NetFluxVanishes) {
    const auto g = rectangle_flake();
    const auto f = stray_field(g, Magnetization::along_angle(2e4, 0.4));
    double net = 0.0, total = 0.0;
    for (double v : f.bz.data()) {
        net += v;
        total += std::abs(v);
    }
    EXPECT_LT(std::abs(net), 1e-3 * total);
}

TEST(StrayField, SideWallChargesGiveTwoBzLobesAndFourProjectedLobes) {
    const auto g = rectangle_flake();
    const auto f = stray_field(g, {2e4, 1.0, 0.0});
    const auto [bz_pos, bz_neg] = oracle::count_sign_lobes(f.bz, 0.05);
    EXPECT_EQ(bz_pos, 1);
    EXPECT_EQ(bz_neg, 1);
    const auto det = field_to_detuning(f, NVOrientationSet().axis(1));
    const auto [d_pos, d_neg] = oracle::count_sign_lobes(det, 0.05);
    EXPECT_EQ(d_pos, 2);
    EXPECT_EQ(d_neg, 2);
}

TEST(StrayField, TransformPaddingOverflowIsConfigError) {
    const auto g = rectangle_flake(40);
    StrayFieldOptions opts{StrayFieldBackend::transform, 0, 64};
    EXPECT_THROW(stray_field(g, {1e4, 1, 0}, opts), ConfigError);
}

TEST(StrayField, InvalidInputsRejected) {
    auto g = rectangle_flake(8);
    EXPECT_THROW(stray_field(g, {1e4, 1.0, 1.0}), ContractError);
    EXPECT_THROW(stray_field(g, {-1.0, 1.0, 0.0}), ContractError);
    g.standoff_m = 0.0;
    EXPECT_THROW(stray_field(g, {1e4, 1.0, 0.0}), ContractError);
}

TEST(FieldToDetuning, ZeroAndUniformFields) {
    VectorFieldMap zero(5, 4, 1e-6);
    const auto axis = NVOrientationSet().axis(1);
    EXPECT_EQ(max_abs(field_to_detuning(zero, axis).data()), 0.0);
    VectorFieldMap uniform(5, 4, 1e-6);
    for (double& v : uniform.bz.data()) v = 1e-3;
    const auto d = field_to_detuning(uniform, axis);
    for (double v : d.data()) EXPECT_NEAR(v, 16.1658e6, 1e2);
    const auto biased = field_to_detuning(zero, axis, {}, 2e6);
    for (double v : biased.data()) EXPECT_EQ(v, 2e6);
}

TEST(MaskPhotoluminescence, Factors) {
    Mask mask(4, 3, 1e-6, 0);
    mask(1, 1) = mask(2, 1) = 1;
    RasterMap map(4, 3, 1e-6, 0.8);
    EXPECT_EQ(mask_photoluminescence(map, mask, 1.0), map);
    const auto zero = mask_photoluminescence(map, mask, 0.0);
    const auto half = mask_photoluminescence(map, mask, 0.5);
    for (std::size_t iy = 0; iy < 3; ++iy)
        for (std::size_t ix = 0; ix < 4; ++ix) {
            const bool in = mask(ix, iy);
            EXPECT_EQ(zero(ix, iy), in ? 0.0 : 0.8);
            EXPECT_EQ(half(ix, iy), in ? 0.4 : 0.8);
        }
    EXPECT_THROW(mask_photoluminescence(map, mask, 1.5), ContractError);
    EXPECT_THROW(mask_photoluminescence(RasterMap(3, 3, 1e-6), mask, 0.5), ContractError);

    ImageStack stack(4, 3, TimeGrid{0, 1e-9, 3});
    std::fill(stack.data().begin(), stack.data().end(), 1.0);
    const auto s = mask_photoluminescence(stack, mask, 0.5);
    for (std::size_t f = 0; f < 3; ++f) {
        EXPECT_EQ(s.at(1, 1, f), 0.5);
        EXPECT_EQ(s.at(0, 0, f), 1.0);
    }
    const auto weights = photoluminescence_weights(mask, 0.0);
    EXPECT_EQ(weights(2, 1), 0.0);
    EXPECT_EQ(weights(3, 2), 1.0);
}
