#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dfl.hpp"
#include "model.hpp"

namespace nsys {

// Smoothed distance: g(x) = f(x1) + f(x2) with f even, convex, C^2, flat on
// [-C, C], slope +-1 beyond +-(C+1). The ramp is the smoothstep polynomial
// f'(C+s) = 3s^2 - 2s^3 on s in [0,1].
struct SmoothDistance {
    double C = 1.0;

    double f(double eta) const {
        const double a = std::abs(eta);
        if (a <= C) return 0.0;
        const double s = a - C;
        if (s <= 1.0) return s * s * s - 0.5 * s * s * s * s;
        return 0.5 + (s - 1.0);
    }
    double df(double eta) const {
        const double a = std::abs(eta);
        if (a <= C) return 0.0;
        const double s = a - C;
        const double v = s <= 1.0 ? 3.0 * s * s - 2.0 * s * s * s : 1.0;
        return eta > 0 ? v : -v;
    }
    double d2f(double eta) const {
        const double a = std::abs(eta);
        if (a <= C || a >= C + 1.0) return 0.0;
        const double s = a - C;
        return 6.0 * s - 6.0 * s * s;
    }
    double g(Vec2 x) const { return f(x.x1) + f(x.x2); }
};

inline SmoothDistance make_distance(double C) {
    if (!(C > 0.0)) throw std::domain_error("make_distance: C must be > 0");
    return {C};
}

namespace detail {

// Panel boundaries for quadrature over one trajectory segment: segment ends
// plus the times either coordinate crosses the kink levels of f.
inline std::vector<double> panel_cuts(const SmoothDistance& d, const Segment& seg) {
    std::vector<double> cuts{seg.t0, seg.t1};
    for (int i = 0; i < 2; ++i)
        for (double L : {-d.C - 1.0, -d.C, d.C, d.C + 1.0})
            level_crossings(seg, [&](double t) {
                Vec2 y = seg.eval(t);
                return (i == 0 ? y.x1 : y.x2) - L;
            }, cuts);
    std::sort(cuts.begin(), cuts.end());
    return cuts;
}

template <class F>
double integrate_segments(const SmoothDistance& d, const std::vector<Segment>& segs, F&& fn) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    double total = 0.0;
    for (const auto& seg : segs) {
        if (seg.t1 <= seg.t0) continue;
        const auto cuts = panel_cuts(d, seg);
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            if (cuts[k + 1] - cuts[k] < 1e-14) continue;
            total += GK::integrate(fn, cuts[k], cuts[k + 1], 10, 1e-12);
        }
    }
    return total;
}

}  // namespace detail

struct GValue {
    double G = 0.0;
    double G1 = 0.0, G2 = 0.0;
    double stop_time = 0.0;
};

inline DflTrajectory g_support_trajectory(const ScaledSystem& sys, const SmoothDistance& dist,
                                          const ScaledState& x, IntegrateOptions opt = {}) {
    // Once the trajectory is inside the alpha ball with max|y_i| <= C, both
    // coordinates decay monotonically below C, so the integrands of G and
    // grad G vanish identically afterwards.
    return integrate(sys, x, StopRule::norm_below(dist.C), opt);
}

inline GValue G_value_from(const SmoothDistance& dist, const DflTrajectory& traj) {
    GValue r;
    r.stop_time = traj.stop_time;
    r.G1 = detail::integrate_segments(dist, traj.segments,
                                      [&](double t) { return dist.f(traj.eval(t).x1); });
    r.G2 = detail::integrate_segments(dist, traj.segments,
                                      [&](double t) { return dist.f(traj.eval(t).x2); });
    r.G = r.G1 + r.G2;
    return r;
}

inline GValue G_value(const ScaledSystem& sys, const SmoothDistance& dist,
                      const ScaledState& x, IntegrateOptions opt = {}) {
    return G_value_from(dist, g_support_trajectory(sys, dist, x, opt));
}

// Directional derivative of the DFL with respect to its initial state: the
// piecewise solution of the linear homogeneous system d/dt xi = u^m xi along
// the base trajectory's segments, continuous across switching points.
struct XiSegment {
    double t0 = 0, t1 = 0;
    AffinePiece hom;  // base piece with the constant term zeroed
    Vec2 xi0;
    Vec2 eval(double t) const { return flow_eval(hom, xi0, t - t0); }
};

struct VariationalPath {
    Vec2 z;
    std::vector<XiSegment> segments;
    double sup_norm = 0.0;
    bool one_sided = false;  // base trajectory had a grazing switching point

    Vec2 eval(double t) const {
        if (segments.empty()) return z;
        for (const auto& s : segments)
            if (t <= s.t1) return s.eval(t);
        return segments.back().eval(t);
    }
};

inline VariationalPath xi_path(const DflTrajectory& base, Vec2 z) {
    VariationalPath p;
    p.z = z;
    p.sup_norm = z.norm1();
    Vec2 cur = z;
    for (const auto& seg : base.segments) {
        AffinePiece hom = seg.piece;
        hom.a1 = hom.a2 = 0.0;
        p.segments.push_back({seg.t0, seg.t1, hom, cur});
        cur = flow_eval(hom, cur, seg.t1 - seg.t0);
        p.sup_norm = std::max(p.sup_norm, cur.norm1());
        for (int k = 1; k < 16; ++k) {
            Vec2 v = p.segments.back().eval(seg.t0 + (seg.t1 - seg.t0) * k / 16.0);
            p.sup_norm = std::max(p.sup_norm, v.norm1());
        }
    }
    for (const auto& sp : base.switching_points)
        if (sp.grazing) p.one_sided = true;
    return p;
}

inline VariationalPath xi(const ScaledSystem& sys, const ScaledState& x, Vec2 z,
                          IntegrateOptions opt = {}) {
    return xi_path(integrate(sys, x, StopRule::alpha_ball(), opt), z);
}

struct GradResult {
    double value = 0.0;
    double comp1 = 0.0, comp2 = 0.0;
    bool one_sided = false;
};

inline GradResult grad_G_from(const SmoothDistance& dist, const DflTrajectory& traj,
                              const VariationalPath& var) {
    GradResult r;
    r.one_sided = var.one_sided;
    r.comp1 = detail::integrate_segments(dist, traj.segments, [&](double t) {
        return dist.df(traj.eval(t).x1) * var.eval(t).x1;
    });
    r.comp2 = detail::integrate_segments(dist, traj.segments, [&](double t) {
        return dist.df(traj.eval(t).x2) * var.eval(t).x2;
    });
    r.value = r.comp1 + r.comp2;
    return r;
}

inline GradResult grad_G(const ScaledSystem& sys, const SmoothDistance& dist,
                         const ScaledState& x, Vec2 z, IntegrateOptions opt = {}) {
    DflTrajectory traj = g_support_trajectory(sys, dist, x, opt);
    return grad_G_from(dist, traj, xi_path(traj, z));
}

// One-sided second difference D = [grad_z G(x + delta z*) - grad_z G(x)]/delta,
// with the diagnostic split into the curvature term (f''-weighted product of
// variational paths) and the switching term (f'-weighted xi difference).
struct SecondDifference {
    double D = 0.0;
    double term_curvature = 0.0;
    double term_switching = 0.0;
    double delta = 0.0;
};

inline SecondDifference second_difference(const ScaledSystem& sys, const SmoothDistance& dist,
                                          const ScaledState& x, Vec2 z, Vec2 z_star,
                                          double delta, IntegrateOptions opt = {}) {
    if (!(delta > 0.0)) throw std::domain_error("second_difference: delta must be > 0");
    const ScaledState xp{x.x1 + delta * z_star.x1, x.x2 + delta * z_star.x2};

    DflTrajectory traj0 = g_support_trajectory(sys, dist, x, opt);
    DflTrajectory trajp = g_support_trajectory(sys, dist, xp, opt);
    VariationalPath xi0 = xi_path(traj0, z);
    VariationalPath xip = xi_path(trajp, z);
    VariationalPath xis = xi_path(traj0, z_star);

    SecondDifference r;
    r.delta = delta;
    const double g0 = grad_G_from(dist, traj0, xi0).value;
    const double gp = grad_G_from(dist, trajp, xip).value;
    r.D = (gp - g0) / delta;

    r.term_curvature = detail::integrate_segments(dist, traj0.segments, [&](double t) {
        Vec2 y = traj0.eval(t);
        Vec2 a = xis.eval(t), bz = xi0.eval(t);
        return dist.d2f(y.x1) * a.x1 * bz.x1 + dist.d2f(y.x2) * a.x2 * bz.x2;
    });
    r.term_switching = detail::integrate_segments(dist, trajp.segments, [&](double t) {
        Vec2 yp = trajp.eval(t);
        Vec2 dxi = xip.eval(t) - xi0.eval(t);
        return (dist.df(yp.x1) * dxi.x1 + dist.df(yp.x2) * dxi.x2) / delta;
    });
    return r;
}

// Exact finite-sum action of the Markov generator on G at a lattice state.
struct GeneratorDrift {
    double AG = 0.0;
    double g = 0.0;
    double G = 0.0;
};

inline GeneratorDrift generator_drift(const ScaledSystem& sys, const SmoothDistance& dist,
                                      const UnscaledState& s, IntegrateOptions opt = {}) {
    GeneratorDrift r;
    const ScaledState x = scaled_of_unscaled(sys, s);
    r.g = dist.g(x.vec());
    r.G = G_value(sys, dist, x, opt).G;
    for (const auto& tr : transition_rates(sys, s)) {
        const ScaledState xn = scaled_of_unscaled(sys, tr.to);
        r.AG += (G_value(sys, dist, xn, opt).G - r.G) * tr.rate;
    }
    return r;
}

}  // namespace nsys
