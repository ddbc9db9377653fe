#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qwise/spin_dynamics.hpp"

using namespace qwise;

namespace {

RwaParams params(double detuning, double eta) {
    RwaParams p;
    p.detuning_hz = detuning;
    p.drive_eta_hz = eta;
    return p;
}

}  // namespace

TEST(EffectiveRabi, ResonantMeanRabiFrequency) {
    EXPECT_NEAR(effective_rabi_frequency(params(0.0, 6.69125e6)), 13.3825e6, 1e-6);
    EXPECT_EQ(effective_rabi_frequency(params(0.0, 0.0)), 0.0);
}

TEST(EffectiveRabi, DetunedValue) {
    // sqrt(15^2 + 13.3825^2) = sqrt(225 + 179.09130625) = 20.10203...
    const double expected = std::sqrt(15.0 * 15.0 + 13.3825 * 13.3825) * 1e6;
    EXPECT_NEAR(expected, 20.1020e6, 1e2);
    EXPECT_NEAR(effective_rabi_frequency(params(15e6, 6.69125e6)), expected, 1e-6);
}

TEST(EffectiveRabi, EvenAndBoundedBelow) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(-1e8, 1e8), e(0.0, 1e8);
    for (int i = 0; i < 1000; ++i) {
        const double dd = d(rng), ee = e(rng);
        EXPECT_EQ(effective_rabi_frequency(params(dd, ee)), effective_rabi_frequency(params(-dd, ee)));
        EXPECT_GE(effective_rabi_frequency(params(dd, ee)), 2.0 * ee);
    }
}

TEST(EffectiveRabi, SmallDetuningBound) {
    const double eta = 6.69125e6;
    for (double d = 0.0; d <= 2.0 * eta; d += eta / 50.0)
        EXPECT_LE(effective_rabi_frequency(params(d, eta)) - 2.0 * eta, d * d / (4.0 * eta) * (1 + 1e-12) + 1e-9);
}

TEST(RabiSignal, InitialBrightAndResonantPiPulse) {
    const RwaParams p = params(0.0, 5e6);
    EXPECT_DOUBLE_EQ(rabi_signal(p, 0.0), 1.0);
    const double t_pi = 0.5 / effective_rabi_frequency(p);  // Omega t = pi
    EXPECT_NEAR(rabi_signal(p, t_pi), 0.0, 1e-7);
    EXPECT_NEAR(rabi_population(p, t_pi), 0.0, 1e-14);
}

TEST(RabiSignal, DetunedPiPulseReachesOneOverSqrt2) {
    const double eta = 4e6;
    const RwaParams p = params(2.0 * eta, eta);
    const double t_pi = 0.5 / effective_rabi_frequency(p);
    EXPECT_NEAR(rabi_signal(p, t_pi), 1.0 / std::sqrt(2.0), 1e-12);
    // same point from the integrated Bloch vector: signal = sqrt((1 + z) / 2)
    const auto traj = rwa_evolve(p, {0, 0, 1}, TimeGrid{0.0, t_pi, 2});
    EXPECT_NEAR(std::sqrt(0.5 * (1.0 + traj.back().z)), 1.0 / std::sqrt(2.0), 1e-8);
}

TEST(RabiSignal, MatchesSquareRootClosedForm) {
    const RwaParams p = params(3.3e6, 2.1e6);
    const double w = two_pi * effective_rabi_frequency(p);
    const double d = two_pi * p.detuning_hz;
    for (double t = 0.0; t < 2e-6; t += 1.7e-8) {
        const double s = std::sin(w * t / 2), c = std::cos(w * t / 2);
        EXPECT_NEAR(rabi_signal(p, t), std::sqrt(d * d * s * s / (w * w) + c * c), 1e-12);
    }
}

TEST(RabiSignal, EvenInDetuning) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-5e7, 5e7), e(0.0, 3e7), t(0.0, 2e-6);
    for (int i = 0; i < 2000; ++i) {
        RwaParams p = params(d(rng), e(rng));
        p.t_rabi_decay_s = 1e-6;
        const double tt = t(rng);
        EXPECT_EQ(rabi_signal(p, tt), rabi_signal(p.with_detuning(-p.detuning_hz), tt));
    }
}

TEST(RabiSignal, DecayDampsTowardMean) {
    RwaParams p = params(1e6, 3e6);
    p.t_rabi_decay_s = 1e-7;
    const double r = 2.0 * p.drive_eta_hz / effective_rabi_frequency(p);
    EXPECT_NEAR(rabi_population(p, 5e-5), 1.0 - 0.5 * r * r, 1e-12);
}

TEST(RabiSignal, DegenerateZeroOmegaIsConstant) {
    EXPECT_EQ(rabi_signal(params(0.0, 0.0), 1e-6), 1.0);
}

TEST(RamseySignal, Examples) {
    RwaParams p = params(20e6, 0.0);
    EXPECT_DOUBLE_EQ(ramsey_signal(p, 0.0), 1.0);
    EXPECT_NEAR(ramsey_signal(p, 25e-9), 0.0, 1e-20);
    p = params(0.0, 0.0);
    p.t2_star_s = 1.3e-6;
    EXPECT_NEAR(ramsey_signal(p, 1.3e-6), std::exp(-1.0), 1e-15);
}

TEST(RamseySignal, FringeCountOverWindow) {
    const double d = 7.3e6;
    const RwaParams p = params(d, 0.0);
    for (int n : {1, 5, 12}) {
        // zeros at tau = (k + 1/2)/|d|: sample densely and count sign changes of the derivative-free
        // quantity cos(pi d tau) which crosses zero exactly once per half period
        int zeros = 0;
        const double window = n / d;
        const int samples = 20000;
        double prev = std::cos(0.0);
        for (int i = 1; i <= samples; ++i) {
            const double tau = window * i / samples;
            const double c = std::cos(std::numbers::pi * d * tau);
            if ((c < 0) != (prev < 0)) ++zeros;
            prev = c;
            EXPECT_NEAR(ramsey_signal(p, tau), c * c, 1e-15);
        }
        EXPECT_EQ(zeros, n);
    }
}

TEST(RwaEvolve, ZeroHamiltonianIsConstant) {
    const BlochState s0{0.3, -0.2, 0.5};
    const auto traj = rwa_evolve(params(0.0, 0.0), s0, TimeGrid{0.0, 1e-8, 50});
    ASSERT_EQ(traj.size(), 50u);
    for (const auto& s : traj) EXPECT_EQ(s, s0);
}

TEST(RwaEvolve, ResonantPiRotationAboutX) {
    const RwaParams p = params(0.0, 5e6);
    const double t_pi = 0.5 / effective_rabi_frequency(p);
    const auto traj = rwa_evolve(p, {0, 0, 1}, TimeGrid{0.0, t_pi, 2});
    EXPECT_NEAR(traj.back().z, -1.0, 1e-8);
    EXPECT_NEAR(traj.back().x, 0.0, 1e-8);
    EXPECT_NEAR(traj.back().y, 0.0, 1e-8);
}

TEST(RwaEvolve, DetunedMatchesClosedFormPointwise) {
    const double eta = 3e6;
    const RwaParams p = params(2.0 * eta, eta);
    const TimeGrid grid{0.0, 3e-9, 600};
    const auto traj = rwa_evolve(p, {0, 0, 1}, grid);
    const double w = effective_rabi_frequency(p);
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double s = std::sin(std::numbers::pi * w * grid.at(i));
        const double oracle = 2.0 * (1.0 - (4.0 * eta * eta) / (w * w) * s * s) - 1.0;
        EXPECT_NEAR(traj[i].z, oracle, 1e-9);
    }
}

TEST(RwaEvolve, NormPreservedOverThousandPeriods) {
    const RwaParams p = params(4e6, 1e6);
    const double period = 1.0 / effective_rabi_frequency(p);
    const auto traj = rwa_evolve(p, {0.6, 0.0, 0.8}, TimeGrid{0.0, 10.0 * period, 101});
    for (const auto& s : traj) EXPECT_NEAR(norm(s), 1.0, 1e-9);
}

TEST(RwaEvolve, RejectsStateOutsideBall) {
    EXPECT_THROW(rwa_evolve(params(1e6, 1e6), {1, 1, 0}, TimeGrid{0, 1e-9, 4}), ContractError);
}

TEST(RwaEvolve, StepUnderflowReportsTimeReached) {
    // Huge offset time makes t + h == t at the required substep length.
    const RwaParams p = params(1e8, 1e8);
    try {
        rwa_evolve(p, {0, 0, 1}, TimeGrid{1e10, 1e-9, 3});
        FAIL() << "expected IntegrationFailure";
    } catch (const IntegrationFailure& e) {
        EXPECT_EQ(e.time_reached_s(), 1e10);
    }
}

TEST(Sensitivity, RamseyZeroSlopeAtZeroTau) {
    const RwaParams p = params(0.0, 0.0);
    EXPECT_EQ(signal_detuning_slope(SignalMode::ramsey, p, 0.0), 0.0);
}

TEST(Sensitivity, RabiZeroSlopeAtResonance) {
    const RwaParams p = params(0.0, 5e6);
    for (double t = 1e-8; t < 1e-6; t += 3.1e-8)
        EXPECT_NEAR(signal_detuning_slope(SignalMode::rabi, p, t), 0.0, 1e-12);
}

TEST(Sensitivity, RamseyMatchesAnalyticDerivative) {
    // dS/dD = -pi tau sin(2 pi D tau) exp(-tau/T2*)
    RwaParams p = params(0.0, 0.0);
    p.t2_star_s = 2e-6;
    for (double d : {-30e6, -3e6, 0.7e6, 12e6, 45e6})
        for (double tau = 5e-9; tau < 1e-6; tau += 37e-9) {
            const double analytic =
                -std::numbers::pi * tau * std::sin(two_pi * d * tau) * std::exp(-tau / p.t2_star_s);
            const double fd = signal_detuning_slope(SignalMode::ramsey, p.with_detuning(d), tau);
            if (std::abs(analytic) > 1e-3 * std::numbers::pi * tau) {
                EXPECT_NEAR(fd, analytic, 1e-4 * std::abs(analytic));
            }
        }
}

TEST(Sensitivity, RamseySetpointAtMaximalSine) {
    const RwaParams p = params(0.0, 0.0);
    const double tau = 100e-9;
    std::vector<double> deltas;
    for (double d = 0.0; d <= 10e6; d += 0.05e6) deltas.push_back(d);
    const auto sp = sensitivity_setpoint(p, SignalMode::ramsey, TimeGrid{tau, 1e-9, 2}, deltas);
    // |sin(2 pi D tau)| = 1 at D = (k + 1/2) / (2 tau) = 2.5 MHz, 7.5 MHz; later tau = 101 ns wins in magnitude
    EXPECT_NEAR(std::abs(std::sin(two_pi * sp.delta_hz * sp.t_s)), 1.0, 2e-3);
    const double expected = std::numbers::pi * sp.t_s * std::abs(std::sin(two_pi * sp.delta_hz * sp.t_s));
    EXPECT_NEAR(std::abs(sp.slope_per_hz), expected, 1e-6 * expected);
}

TEST(Sensitivity, EmptyRangeRejected) {
    EXPECT_THROW(sensitivity_setpoint(params(0, 1e6), SignalMode::rabi, TimeGrid{0, 1e-9, 4}, {}), ContractError);
}
