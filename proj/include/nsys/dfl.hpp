#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "model.hpp"

namespace nsys {

// Closed-form flow of an affine piece. Every piece of the N-system drift is
// triangular with the structural property u11 != 0 => u12 == 0, so the
// solution needs at most one exponential per coordinate.
inline Vec2 flow_eval(const AffinePiece& P, Vec2 y0, double dt) {
    Vec2 y;
    if (P.u22 != 0.0) {
        const double c2 = -P.a2 / P.u22;
        y.x2 = c2 + (y0.x2 - c2) * std::exp(P.u22 * dt);
    } else {
        y.x2 = y0.x2 + P.a2 * dt;
    }
    if (P.u11 != 0.0) {
        const double c1 = -P.a1 / P.u11;
        y.x1 = c1 + (y0.x1 - c1) * std::exp(P.u11 * dt);
    } else if (P.u12 != 0.0) {
        // u22 < 0 and a2 == 0 in this case (domain with a type-1 queue)
        y.x1 = y0.x1 + P.a1 * dt + (P.u12 * y0.x2 / (-P.u22)) * (1.0 - std::exp(P.u22 * dt));
    } else {
        y.x1 = y0.x1 + P.a1 * dt;
    }
    return y;
}

struct Segment {
    double t0 = 0, t1 = 0;
    Domain dom = Domain::X0;
    AffinePiece piece;
    Vec2 y0;

    Vec2 eval(double t) const { return flow_eval(piece, y0, t - t0); }
};

struct SwitchPoint {
    double t = 0;
    std::array<bool, 3> boundaries{};  // which of s1, s2, s3 vanish at the switch
    Domain before = Domain::X0, after = Domain::X0;
    bool grazing = false;  // same domain on both sides
};

struct StopRule {
    enum class Kind { AlphaBall, Horizon, NormBelow };
    Kind kind = Kind::Horizon;
    double horizon = std::numeric_limits<double>::infinity();
    double level = 0.0;  // NormBelow: stop when inside the alpha ball and max|y_i| <= level

    static StopRule alpha_ball() { return {Kind::AlphaBall}; }
    static StopRule fixed_horizon(double T) { return {Kind::Horizon, T}; }
    static StopRule norm_below(double level) { return {Kind::NormBelow, std::numeric_limits<double>::infinity(), level}; }
};

struct DflTrajectory {
    ScaledState initial;
    std::vector<Segment> segments;
    std::vector<SwitchPoint> switching_points;
    double stop_time = 0;
    double sup_norm = 0;
    double tau_alpha = std::numeric_limits<double>::quiet_NaN();

    // Valid for all t >= 0; beyond stop_time the final piece is extrapolated
    // (exact whenever the stopping rule leaves the trajectory in an invariant
    // domain, which holds for the alpha-ball rules).
    Vec2 eval(double t) const {
        if (segments.empty()) return initial.vec();
        for (const auto& s : segments)
            if (t <= s.t1) return s.eval(t);
        return segments.back().eval(t);
    }
};

// The invariant ball {||x||_1 <= alpha} inside domain X0. alpha = b/2 is
// valid once n is past the threshold making the ball fit under the domain
// boundaries; the flow in X0 contracts ||.||_1 componentwise, so the ball is
// invariant.
struct AlphaRegion {
    double alpha = 0;
};

inline AlphaRegion make_alpha_region(const ScaledSystem& s) {
    const double alpha = s.params.b / 2.0;
    const double thr = std::pow(s.params.b / (2.0 * s.params.psi12), 2);
    if (static_cast<double>(s.n) < thr)
        throw std::domain_error("make_alpha_region: n below the alpha-region threshold");
    if (!(alpha < -s.bd1) || !(alpha < s.bn))
        throw std::domain_error("make_alpha_region: ball does not fit inside domain X0");
    return {alpha};
}

class CapExceededError : public std::runtime_error {
public:
    explicit CapExceededError(const std::string& m) : std::runtime_error(m) {}
};

namespace detail {

// Expected strict signs of (s1, s2, s3) inside each domain; 0 = unconstrained.
inline std::array<int, 3> domain_signs(Domain d) {
    switch (d) {
        case Domain::X0: return {+1, -1, -1};
        case Domain::X1: return {+1, -1, +1};
        case Domain::X2: return {-1, -1, 0};
        case Domain::X3: return {-1, +1, 0};
        case Domain::X4: return {+1, +1, +1};
    }
    return {0, 0, 0};
}

inline std::array<double, 3> boundary_at(const ScaledSystem& sys, Vec2 y) {
    return {y.x1 - sys.bd1, y.x2 - sys.bd2, y.x1 + y.x2 - sys.bn};
}

// Resolve the domain a trajectory enters from point y0 (possibly on a
// boundary): the candidate whose own flow keeps all its defining
// inequalities satisfied a short time ahead.
inline Domain resolve_domain(const ScaledSystem& sys, Vec2 y0) {
    ScaledState x{y0.x1, y0.x2};
    DomainInfo info = classify_domain(sys, x);
    if (!info.boundary) return info.label;
    const double scale = 1.0 + y0.norm1();
    double best_score = -std::numeric_limits<double>::infinity();
    Domain best = info.label;
    for (double eps : {1e-8, 1e-5}) {
        for (Domain d : info.adjacent) {
            Vec2 yp = flow_eval(sys.piece(d), y0, eps);
            const auto bv = boundary_at(sys, yp);
            const auto sg = domain_signs(d);
            double score = std::numeric_limits<double>::infinity();
            for (int i = 0; i < 3; ++i)
                if (sg[i] != 0) score = std::min(score, bv[i] * sg[i]);
            if (score > best_score) {
                best_score = score;
                best = d;
            }
        }
        if (best_score > -1e-12 * scale) return best;
    }
    return best;  // grazing/tangent contact: least-violating candidate
}

}  // namespace detail

struct IntegrateOptions {
    double cap_time = std::numeric_limits<double>::quiet_NaN();  // default derived from ||x||
    double alpha = std::numeric_limits<double>::quiet_NaN();     // required for alpha-dependent stops
};

inline DflTrajectory integrate(const ScaledSystem& sys, const ScaledState& x,
                               const StopRule& stop, IntegrateOptions opt = {}) {
    if (!in_state_space(sys, x))
        throw std::domain_error("integrate: initial state outside the scaled state space");
    double alpha = opt.alpha;
    if (stop.kind != StopRule::Kind::Horizon && std::isnan(alpha))
        alpha = make_alpha_region(sys).alpha;

    auto stop_fn = [&](double t, Vec2 y) -> double {
        // positive while running; stop at first nonpositive value
        switch (stop.kind) {
            case StopRule::Kind::AlphaBall:
                return y.norm1() - alpha;
            case StopRule::Kind::NormBelow:
                return std::max(y.norm1() - alpha, y.max_abs() - stop.level);
            case StopRule::Kind::Horizon:
                return stop.horizon - t;
        }
        return 1.0;
    };

    const double mu_min = std::min({sys.params.mu11, sys.params.mu12, sys.params.mu22});
    const double mu_max = std::max({sys.params.mu11, sys.params.mu12, sys.params.mu22});
    const double cap = std::isnan(opt.cap_time)
                           ? (100.0 + 20.0 * x.norm1()) / mu_min
                           : opt.cap_time;

    DflTrajectory traj;
    traj.initial = x;
    traj.sup_norm = x.norm1();

    Vec2 y = x.vec();
    double t = 0.0;
    int switch_count = 0;

    if (stop_fn(t, y) <= 0.0) {
        traj.stop_time = 0.0;
        if (stop.kind == StopRule::Kind::AlphaBall) traj.tau_alpha = 0.0;
        Domain d0 = detail::resolve_domain(sys, y);
        traj.segments.push_back({0.0, 0.0, d0, sys.piece(d0), y});
        return traj;
    }

    const double h_max = 0.0625 / mu_max;

    while (true) {
        const Domain dom = detail::resolve_domain(sys, y);
        const AffinePiece piece = sys.piece(dom);
        const auto signs = detail::domain_signs(dom);
        const double t0 = t;
        const Vec2 y0 = y;

        auto bnd = [&](int i, double dt) {
            return detail::boundary_at(sys, flow_eval(piece, y0, dt))[i];
        };

        // Scan forward for the first boundary flip or stop crossing.
        double dt_prev = 0.0;
        double h = 1e-9 / mu_max;
        bool event_found = false;
        bool stop_found = false;
        double event_dt = std::numeric_limits<double>::infinity();
        int event_boundary = -1;
        const double start_guard = 1e-11 * (1.0 + y0.norm1());

        while (true) {
            double dt_cur = dt_prev + h;
            if (t0 + dt_cur > cap) dt_cur = cap - t0;
            Vec2 yc = flow_eval(piece, y0, dt_cur);
            traj.sup_norm = std::max(traj.sup_norm, yc.norm1());

            // stop rule first (takes precedence when earlier)
            if (stop_fn(t0 + dt_cur, yc) <= 0.0) {
                double lo = dt_prev, hi = dt_cur;
                for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
                    double mid = 0.5 * (lo + hi);
                    if (stop_fn(t0 + mid, flow_eval(piece, y0, mid)) <= 0.0) hi = mid;
                    else lo = mid;
                }
                stop_found = true;
                event_dt = hi;
            }

            const auto bv = detail::boundary_at(sys, yc);
            for (int i = 0; i < 3; ++i) {
                if (signs[i] == 0) continue;
                if (bv[i] * signs[i] < 0.0) {
                    // genuine crossing: boundary function left the domain side;
                    // ignore numeric jitter right at a segment start on this boundary
                    if (dt_cur < 16.0 * h && std::abs(bv[i]) < start_guard) continue;
                    double lo = dt_prev, hi = dt_cur;
                    for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
                        double mid = 0.5 * (lo + hi);
                        if (bnd(i, mid) * signs[i] < 0.0) hi = mid;
                        else lo = mid;
                    }
                    if (hi < event_dt) {
                        event_dt = hi;
                        event_boundary = i;
                        event_found = true;
                        stop_found = false;  // stop may still be earlier; rechecked below
                    }
                }
            }
            if (stop_found || event_found) break;
            if (t0 + dt_cur >= cap)
                throw CapExceededError("integrate: hard cap time exceeded (cap=" +
                                       std::to_string(cap) + ", ||x||=" + std::to_string(x.norm1()) + ")");
            dt_prev = dt_cur;
            h = std::min(h * 1.4, h_max);
        }

        // If both a stop and a boundary were bracketed in the same step, the
        // earlier one wins; recompute the stop crossing restricted to [0, event_dt].
        if (event_found) {
            Vec2 ye = flow_eval(piece, y0, event_dt);
            if (stop_fn(t0 + event_dt, ye) <= 0.0) {
                double lo = 0.0, hi = event_dt;
                for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
                    double mid = 0.5 * (lo + hi);
                    if (stop_fn(t0 + mid, flow_eval(piece, y0, mid)) <= 0.0) hi = mid;
                    else lo = mid;
                }
                if (hi < event_dt) {
                    stop_found = true;
                    event_found = false;
                    event_dt = hi;
                }
            }
        }

        const double t_end = t0 + event_dt;
        Vec2 y_end = flow_eval(piece, y0, event_dt);
        // uniform sampling for the sup norm
        for (int k = 1; k < 32; ++k) {
            Vec2 yk = flow_eval(piece, y0, event_dt * k / 32.0);
            traj.sup_norm = std::max(traj.sup_norm, yk.norm1());
        }
        traj.sup_norm = std::max(traj.sup_norm, y_end.norm1());
        traj.segments.push_back({t0, t_end, dom, piece, y0});

        if (stop_found || !event_found) {
            traj.stop_time = t_end;
            if (stop.kind == StopRule::Kind::AlphaBall) traj.tau_alpha = t_end;
            return traj;
        }

        // boundary switch
        t = t_end;
        y = y_end;
        const auto bv = detail::boundary_at(sys, y);
        SwitchPoint sp;
        sp.t = t;
        const double btol = 1e-9 * (1.0 + y.norm1());
        for (int i = 0; i < 3; ++i) sp.boundaries[i] = std::abs(bv[i]) <= btol;
        sp.boundaries[event_boundary] = true;
        sp.before = dom;
        sp.after = detail::resolve_domain(sys, y);
        sp.grazing = (sp.after == sp.before);
        traj.switching_points.push_back(sp);
        if (++switch_count > 64)
            throw CapExceededError("integrate: switch count exceeded 64 (boundary chattering)");
    }
}

inline double hitting_time_alpha(const ScaledSystem& sys, const ScaledState& x,
                                 IntegrateOptions opt = {}) {
    return integrate(sys, x, StopRule::alpha_ball(), opt).tau_alpha;
}

inline std::vector<SwitchPoint> switching_points(const ScaledSystem& sys, const ScaledState& x,
                                                 IntegrateOptions opt = {}) {
    return integrate(sys, x, StopRule::alpha_ball(), opt).switching_points;
}

namespace detail {

// Crossing times of a scalar function of the segment flow with a level, by
// sampling plus bisection; coordinate() maps the flow value to the scalar.
template <class F>
void level_crossings(const Segment& seg, F&& value, std::vector<double>& out) {
    const int K = 256;
    const double len = seg.t1 - seg.t0;
    if (len <= 0.0) return;
    double prev = value(seg.t0);
    for (int k = 1; k <= K; ++k) {
        const double tk = seg.t0 + len * k / K;
        const double cur = value(tk);
        if ((prev < 0.0) != (cur < 0.0)) {
            double lo = seg.t0 + len * (k - 1) / K, hi = tk;
            for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + hi); ++it) {
                double mid = 0.5 * (lo + hi);
                if ((value(mid) < 0.0) == (prev < 0.0)) lo = mid;
                else hi = mid;
            }
            out.push_back(0.5 * (lo + hi));
        }
        prev = cur;
    }
}

}  // namespace detail

// Total time with y_i(t) in [C3, C4] for at least one i. The band must not
// contain 0 (otherwise the occupation time would be infinite).
inline double band_occupation(const ScaledSystem& sys, const ScaledState& x,
                              double C3, double C4, IntegrateOptions opt = {}) {
    if (C3 > C4 || (C3 <= 0.0 && C4 >= 0.0))
        throw std::domain_error("band_occupation: band must exclude 0");
    const double level = std::min(std::abs(C3), std::abs(C4));
    DflTrajectory traj = integrate(sys, x, StopRule::norm_below(level), opt);

    double total = 0.0;
    for (const auto& seg : traj.segments) {
        // event times where the in-band condition (for some i) can change
        std::vector<double> cuts{seg.t0, seg.t1};
        for (int i = 0; i < 2; ++i) {
            auto coord = [&](double t) {
                Vec2 y = seg.eval(t);
                return i == 0 ? y.x1 : y.x2;
            };
            detail::level_crossings(seg, [&](double t) { return coord(t) - C3; }, cuts);
            detail::level_crossings(seg, [&](double t) { return coord(t) - C4; }, cuts);
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            const double tm = 0.5 * (cuts[k] + cuts[k + 1]);
            Vec2 y = seg.eval(tm);
            const bool in1 = y.x1 >= C3 && y.x1 <= C4;
            const bool in2 = y.x2 >= C3 && y.x2 <= C4;
            if (in1 || in2) total += cuts[k + 1] - cuts[k];
        }
    }
    return total;
}

}  // namespace nsys
