#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <nsys/lyapunov.hpp>

#include "oracles.hpp"

using namespace nsys;

namespace {
SystemParams p0() { return make_params(1.0, 2.0, 1.0, 1.0, 0.5, 1.0, 1.0); }

ScaledState random_state(const ScaledSystem& sys, std::mt19937_64& rng, double radius) {
    std::uniform_real_distribution<double> u(-radius, radius);
    for (;;) {
        ScaledState x{u(rng), u(rng)};
        if (in_state_space(sys, x)) return x;
    }
}
}  // namespace

TEST_CASE("smoothed distance: values, smoothness at the kinks, convexity") {
    const SmoothDistance d = make_distance(1.0);
    CHECK_THROWS_AS(make_distance(0.0), std::domain_error);
    CHECK(d.f(0.7) == 0.0);
    CHECK(d.f(-0.3) == 0.0);
    CHECK(d.f(2.0) == Catch::Approx(0.5));
    CHECK(d.f(3.5) == Catch::Approx(2.0));
    CHECK(d.f(-3.5) == Catch::Approx(2.0));
    CHECK(d.df(3.5) == 1.0);
    CHECK(d.df(-3.5) == -1.0);

    // C^1/C^2 continuity at |eta| = C and C+1 via finite differences
    for (double eta : {1.0, 2.0, -1.0, -2.0}) {
        const double h = 1e-6;
        CHECK((d.f(eta + h) - d.f(eta - h)) / (2 * h) == Catch::Approx(d.df(eta)).margin(1e-6));
        CHECK((d.df(eta + h) - d.df(eta - h)) / (2 * h) == Catch::Approx(d.d2f(eta)).margin(1e-5));
    }
    // convexity: f'' >= 0 on the ramp
    for (double s = 0.01; s < 1.0; s += 0.07) CHECK(d.d2f(1.0 + s) >= 0.0);
    CHECK(d.g({-3.5, 2.0}) == Catch::Approx(2.5));
}

TEST_CASE("G matches a brute-force Riemann sum") {
    const ScaledSystem sys = scale_system(p0(), 100);
    const SmoothDistance dist = make_distance(1.0);
    for (ScaledState x : {ScaledState{4.0, -2.0}, {-3.0, 5.0}, {10.0, 3.0}, {0.3, 0.2}}) {
        const double lib = G_value(sys, dist, x).G;
        const double ref = oracles::riemann_G(sys, dist, x);
        CHECK(lib == Catch::Approx(ref).margin(2e-4 * (1.0 + ref)));
    }
    // inside the flat region g vanishes along the whole path
    CHECK(G_value(sys, dist, {0.1, -0.2}).G == 0.0);
}

TEST_CASE("directional derivative along the drift equals -g") {
    const ScaledSystem sys = scale_system(p0(), 100);
    const SmoothDistance dist = make_distance(1.0);
    std::mt19937_64 rng(31);
    for (int i = 0; i < 40; ++i) {
        const ScaledState x = random_state(sys, rng, 30.0);
        const double gx = dist.g(x.vec());
        const double dv = grad_G(sys, dist, x, drift_scaled(sys, x)).value;
        CHECK(std::abs(dv + gx) / std::max(gx, 1.0) < 1e-6);
    }
}

TEST_CASE("gradient matches central finite differences of G") {
    const ScaledSystem sys = scale_system(p0(), 100);
    const SmoothDistance dist = make_distance(1.0);
    std::mt19937_64 rng(37);
    const double h = 1e-5;
    for (int i = 0; i < 15; ++i) {
        const ScaledState x = random_state(sys, rng, 20.0);
        for (Vec2 z : {Vec2{1.0, 0.0}, Vec2{0.0, 1.0}, Vec2{0.6, -0.8}}) {
            const double grad = grad_G(sys, dist, x, z).value;
            const ScaledState xp{x.x1 + h * z.x1, x.x2 + h * z.x2};
            const ScaledState xm{x.x1 - h * z.x1, x.x2 - h * z.x2};
            if (!in_state_space(sys, xm)) continue;
            const double fd = (G_value(sys, dist, xp).G - G_value(sys, dist, xm).G) / (2 * h);
            CHECK(std::abs(grad - fd) / std::max({std::abs(grad), std::abs(fd), 1.0}) < 1e-4);
        }
    }
}

TEST_CASE("variational path is linear in the direction") {
    const ScaledSystem sys = scale_system(p0(), 100);
    const ScaledState x{7.0, -3.0};
    const DflTrajectory base = integrate(sys, x, StopRule::alpha_ball());
    const VariationalPath xa = xi_path(base, {1.0, 0.0});
    const VariationalPath xb = xi_path(base, {0.0, 1.0});
    const VariationalPath xc = xi_path(base, {2.5, -1.5});
    for (double t : {0.0, 0.2, 0.9, base.stop_time}) {
        const Vec2 lin = 2.5 * xa.eval(t) + (-1.5) * xb.eval(t);
        CHECK((xc.eval(t) - lin).norm1() < 1e-12 * (1.0 + lin.norm1()));
    }
}

TEST_CASE("variational path is the delta-limit of trajectory differences") {
    const ScaledSystem sys = scale_system(p0(), 100);
    std::mt19937_64 rng(41);
    for (int i = 0; i < 8; ++i) {
        const ScaledState x = random_state(sys, rng, 15.0);
        const DflTrajectory base = integrate(sys, x, StopRule::fixed_horizon(2.0));
        for (Vec2 z : {Vec2{1.0, 0.0}, Vec2{0.0, 1.0}}) {
            const VariationalPath v = xi_path(base, z);
            double err_prev = std::numeric_limits<double>::infinity();
            for (double delta : {1e-3, 1e-4}) {
                const ScaledState xp{x.x1 + delta * z.x1, x.x2 + delta * z.x2};
                const DflTrajectory pert = integrate(sys, xp, StopRule::fixed_horizon(2.0));
                double err = 0.0;
                for (double t = 0.05; t <= 2.0; t += 0.05)
                    err = std::max(err, ((1.0 / delta) * (pert.eval(t) - base.eval(t)) -
                                         v.eval(t)).norm1());
                CHECK(err < 0.05);  // already small at delta = 1e-3
                // decreasing like O(delta), unless already at the round-off
                // floor (the 1/delta quotient amplifies double noise)
                if (err_prev < 1e300 && err_prev > 1e-9) CHECK(err < err_prev);
                err_prev = err;
            }
        }
    }
}

TEST_CASE("second difference is stable under delta halving") {
    const ScaledSystem sys = scale_system(p0(), 100);
    const SmoothDistance dist = make_distance(1.0);
    const ScaledState x{6.0, 4.0};
    const Vec2 z{1.0, 0.0}, zs{0.0, 1.0};
    const SecondDifference a = second_difference(sys, dist, x, z, zs, 1e-3);
    const SecondDifference b = second_difference(sys, dist, x, z, zs, 5e-4);
    CHECK(a.D == Catch::Approx(b.D).margin(1e-2 * (1.0 + std::abs(b.D))));
    // the diagnostic split approximates D
    CHECK(a.term_curvature + a.term_switching ==
          Catch::Approx(a.D).margin(0.05 * (1.0 + std::abs(a.D))));
    CHECK_THROWS_AS(second_difference(sys, dist, x, z, zs, 0.0), std::domain_error);
}

TEST_CASE("generator drift is negative far from the origin") {
    const ScaledSystem sys = scale_system(p0(), 100);
    const SmoothDistance dist = make_distance(1.0);
    // deep in a queueing domain the drift pushes back and G shrinks
    const GeneratorDrift far = generator_drift(sys, dist, {250, 100});
    CHECK(far.g > 0.0);
    CHECK(far.AG < 0.0);
    // near the equilibrium the drift term is small but bounded
    const GeneratorDrift near = generator_drift(sys, dist, {150, 100});
    CHECK(near.g == 0.0);
    CHECK(std::abs(near.AG) < 50.0);
}
