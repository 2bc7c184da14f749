// Acceptance gate: one line per criterion, "PASS"/"FAIL" plus the measured
// value and the pinned tolerance. Exit code = number of failed criteria.

#include <chrono>
#include <cstdio>
#include <random>
#include <thread>

#include <nsys/experiments.hpp>

#include "oracles.hpp"

using namespace nsys;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, double measured, double tol,
            double seconds) {
    std::printf("criterion %2d: %s  %s (measured %.3e, tol %.3e) [%.1fs]\n", id,
                pass ? "PASS" : "FAIL", what.c_str(), measured, tol, seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

double now_minus(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SystemParams p0() { return make_params(1.0, 2.0, 1.0, 1.0, 0.5, 1.0, 1.0); }
SystemParams p_equal_rates() { return make_params(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0); }

int n_workers() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 4 : static_cast<int>(hc);
}

ScaledState random_state(const ScaledSystem& sys, std::mt19937_64& rng, double radius) {
    std::uniform_real_distribution<double> u(-radius, radius);
    for (;;) {
        ScaledState x{u(rng), u(rng)};
        if (in_state_space(sys, x)) return x;
    }
}

ExperimentConfig default_config(std::vector<long long> ns) {
    ExperimentConfig cfg;
    cfg.params = p0();
    cfg.n_list = std::move(ns);
    cfg.sim.horizon = 20000.0;
    cfg.sim.burn_in = 2000.0;
    cfg.sde.dt = 1e-3;
    cfg.sde.horizon = 100000.0;
    cfg.sde.burn_in = 100.0;
    cfg.seed = 20260823;
    cfg.workers = n_workers();
    return cfg;
}

// --- criterion 1: exact-drift identity ---
void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::mt19937_64 rng(101);
    for (long long n : {25, 100, 400}) {
        const ScaledSystem sys = scale_system(p0(), n);
        std::uniform_int_distribution<long long> d1(0, 4 * sys.B1);
        std::uniform_int_distribution<long long> d2(0, 4 * sys.B2);
        for (int i = 0; i < 10000; ++i) {
            const UnscaledState st{d1(rng), d2(rng)};
            const ScaledState x = scaled_of_unscaled(sys, st);
            const Vec2 direct = drift_scaled(sys, x);
            const Vec2 piecewise = sys.piece(classify_domain(sys, x).label).drift(x.vec());
            worst = std::max(worst,
                             (direct - piecewise).norm1() / std::max(1.0, direct.norm1()));
        }
    }
    report(1, worst <= 1e-9, "exact-drift identity over lattice states, n in {25,100,400}",
           worst, 1e-9, now_minus(t0));
}

// --- criterion 2: simulated law vs linear-solve oracle ---
void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    const ScaledSystem sys = scale_system(p0(), 25);
    const OracleDistribution od = oracle_stationary(sys, 400, 100);
    const StationaryEstimate est = simulate(sys, {202, 200000.0, 5000.0});

    double tv_joint = 0.0;
    for (long long i = 0; i <= od.X1max; ++i)
        for (long long j = 0; j <= od.X2max; ++j) {
            auto it = est.joint.find({i, j});
            tv_joint += std::abs(od.at(i, j) - (it == est.joint.end() ? 0.0 : it->second));
        }
    tv_joint /= 2.0;

    const auto bd = oracles::birth_death_stationary(sys.Lambda2, sys.params.mu22, sys.B2);
    double tv_marg = 0.0;
    for (std::size_t k = 0; k < bd.size(); ++k) {
        auto it = est.hist2.find(static_cast<long long>(k));
        tv_marg += std::abs(bd[k] - (it == est.hist2.end() ? 0.0 : it->second));
    }
    tv_marg /= 2.0;

    report(2, tv_joint <= 0.02 && tv_marg <= 0.02,
           "stationary law vs oracle (joint TV " + std::to_string(tv_joint) +
               ", birth-death marginal TV " + std::to_string(tv_marg) + ")",
           std::max(tv_joint, tv_marg), 0.02, now_minus(t0));
}

// --- criterion 3: fluid-limit closed form ---
void criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    const ScaledSystem sys = scale_system(p0(), 100);
    const AlphaRegion ar = make_alpha_region(sys);
    std::mt19937_64 rng(303);

    double worst_ball = 0.0;
    std::uniform_real_distribution<double> u(-ar.alpha / 2.0, ar.alpha / 2.0);
    for (int i = 0; i < 100; ++i) {
        const ScaledState x{u(rng), u(rng)};
        const DflTrajectory tr = integrate(sys, x, StopRule::fixed_horizon(6.0));
        for (double t = 0.0; t <= 6.0; t += 0.1) {
            const Vec2 y = tr.eval(t);
            worst_ball = std::max(worst_ball,
                                  std::abs(y.x1 - x.x1 * std::exp(-sys.params.mu12 * t)) +
                                  std::abs(y.x2 - x.x2 * std::exp(-sys.params.mu22 * t)));
        }
    }

    double worst_global = 0.0;
    const std::vector<double> times{0.25, 0.5, 1.0, 2.0, 4.0};
    for (int i = 0; i < 100; ++i) {
        const ScaledState x = random_state(sys, rng, 30.0);
        const DflTrajectory tr = integrate(sys, x, StopRule::fixed_horizon(times.back()));
        const auto ref = oracles::reference_trajectory(sys, x, times);
        for (std::size_t k = 0; k < times.size(); ++k)
            worst_global = std::max(worst_global, (tr.eval(times[k]) - ref[k]).norm1());
    }

    report(3, worst_ball <= 1e-10 && worst_global <= 1e-7,
           "fluid-limit closed form (ball sup " + std::to_string(worst_ball) +
               ", global vs adaptive integrator " + std::to_string(worst_global) + ")",
           std::max(worst_ball * 1e3, worst_global), 1e-7, now_minus(t0));
}

// --- criterion 4: trajectory-lemma suite ---
void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = default_config({25, 100, 400});
    cfg.stability_factor = 1.2;
    const Report rep = run_dfl_diagnostics(cfg);
    double worst = 0.0;
    for (const auto& v : rep.verdicts) worst = std::max(worst, v.measured / v.threshold);
    report(4, rep.passed(),
           "switching count <= 4; fitted T, C', T3 stable across n (20%)", worst, 1.0,
           now_minus(t0));
}

// criteria 5, 7, 8 share the Lyapunov campaign (run per parameter set)
void criteria_5_7_8() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = default_config({25, 100, 400});
    cfg.sweep.angles = 56;  // 6 radii x 56 angles x 3 n >= 10^3 states
    const Report ra = run_lyapunov_certificate(cfg);
    const auto ta = now_minus(t0);

    auto verdict = [](const Report& r, const char* prefix) {
        for (const auto& v : r.verdicts)
            if (v.rule.rfind(prefix, 0) == 0) return v;
        throw std::logic_error("missing verdict");
    };

    const Verdict drift = verdict(ra, "drift identity");
    const Verdict fd = verdict(ra, "gradient FD");
    report(5, drift.pass && fd.pass,
           "gradient identities (drift residual " + std::to_string(drift.measured) +
               ", FD residual " + std::to_string(fd.measured) + ")",
           std::max(drift.measured / 1e-6, fd.measured / 1e-4), 1.0, ta);

    const auto t7 = std::chrono::steady_clock::now();
    ExperimentConfig cfe = cfg;
    cfe.params = p_equal_rates();
    const Report rb = run_lyapunov_certificate(cfe);
    const Verdict sda = verdict(ra, "second-difference");
    const Verdict sdb = verdict(rb, "second-difference");
    report(7, sda.pass && sdb.pass,
           "second-difference bound stable across n (mu12 != mu22 spread " +
               std::to_string(sda.measured) + ", mu12 == mu22 spread " +
               std::to_string(sdb.measured) + ")",
           std::max(sda.measured, sdb.measured), cfg.second_diff_factor, now_minus(t7));

    const Verdict gen = verdict(ra, "generator drift");
    report(8, gen.pass, "Foster-Lyapunov fit: epsilon = " + std::to_string(gen.measured) +
                            " > 0, " + gen.note,
           gen.measured, 0.0, ta);
}

// --- criterion 6: variational accuracy ---
void criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(606);
    bool order_ok = true;
    double lin_err = 0.0;
    std::vector<double> c6_per_n;

    for (long long n : {25, 100, 400}) {
        const ScaledSystem sys = scale_system(p0(), n);
        double c6 = 0.0;
        for (int i = 0; i < 12; ++i) {
            const ScaledState x = random_state(sys, rng, 15.0);
            const DflTrajectory base = integrate(sys, x, StopRule::fixed_horizon(2.0));
            // sample away from switching times, where the difference quotient
            // converges only one-sidedly
            std::vector<double> samples;
            for (double t = 0.1; t <= 2.0; t += 0.1) {
                bool near_switch = false;
                for (const auto& sp : base.switching_points)
                    if (std::abs(t - sp.t) < 0.05) near_switch = true;
                if (!near_switch) samples.push_back(t);
            }
            for (Vec2 z : {Vec2{1.0, 0.0}, Vec2{0.0, 1.0}}) {
                const VariationalPath v = xi_path(base, z);
                c6 = std::max(c6, v.sup_norm / z.norm1());
                double err_prev = std::numeric_limits<double>::infinity();
                for (double delta : {1e-3, 1e-4, 1e-5}) {
                    const ScaledState xp{x.x1 + delta * z.x1, x.x2 + delta * z.x2};
                    const DflTrajectory pert = integrate(sys, xp, StopRule::fixed_horizon(2.0));
                    double err = 0.0;
                    for (double t : samples)
                        err = std::max(err, ((1.0 / delta) * (pert.eval(t) - base.eval(t)) -
                                             v.eval(t)).norm1());
                    // require shrinkage while above the round-off floor of the
                    // 1/delta difference quotient
                    if (err > 1e-8 && err_prev < 1e300 && err > 0.5 * err_prev)
                        order_ok = false;  // not shrinking ~linearly in delta
                    err_prev = err;
                }
            }
            // linearity to round-off
            const VariationalPath xa = xi_path(base, {1.0, 0.0});
            const VariationalPath xb = xi_path(base, {0.0, 1.0});
            const VariationalPath xc = xi_path(base, {0.3, 0.7});
            for (double t : samples) {
                const Vec2 lin = 0.3 * xa.eval(t) + 0.7 * xb.eval(t);
                lin_err = std::max(lin_err, (xc.eval(t) - lin).norm1());
            }
        }
        c6_per_n.push_back(c6);
    }
    const double c6_joint = *std::max_element(c6_per_n.begin(), c6_per_n.end());
    const double c6_spread =
        c6_joint / *std::min_element(c6_per_n.begin(), c6_per_n.end());
    const bool pass = order_ok && lin_err <= 1e-11 && c6_spread <= 2.0;
    report(6, pass,
           "variational path: O(delta) halving, linearity to round-off, C6 = " +
               std::to_string(c6_joint) + " stable across n",
           lin_err, 1e-11, now_minus(t0));
}

// --- criterion 9: tightness ---
void criterion_9() {
    const auto t0 = std::chrono::steady_clock::now();
    const Report rep = run_tightness(default_config({25, 100, 400, 1600}));
    const double ratio = rep.verdicts.at(0).measured;
    report(9, rep.passed(),
           "tightness of E||x|| over n in {25,...,1600} (widened ratio " +
               std::to_string(ratio) + ", Kendall p " +
               std::to_string(rep.verdicts.at(1).measured) + ")",
           ratio, 1.5, now_minus(t0));
}

// --- criterion 10: limit interchange ---
void criterion_10() {
    const auto t0 = std::chrono::steady_clock::now();
    const Report rep = run_interchange(default_config({25, 100, 400, 1600}));
    double worst_ks = 0.0;
    for (int i = 0; i < 2; ++i) worst_ks = std::max(worst_ks, rep.verdicts.at(i).measured);
    report(10, rep.passed(),
           "interchange: marginal KS at n=1600 (" + std::to_string(worst_ks) +
               " vs 0.05), SDE x2 vs OU normal (" +
               std::to_string(rep.verdicts.at(2).measured) + " vs 0.01)",
           worst_ks, 0.05, now_minus(t0));
}

// --- criterion 11: renewal identities ---
void criterion_11() {
    const auto t0 = std::chrono::steady_clock::now();
    const Report rep = run_renewal(default_config({25, 100}));
    report(11, rep.passed(),
           "renewal-cycle arrival and balance identities within family-wise 95% CIs",
           rep.verdicts.at(0).measured, rep.verdicts.at(0).threshold, now_minus(t0));
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criteria_5_7_8();
    criterion_6();
    criterion_9();
    criterion_10();
    criterion_11();
    std::printf("%s (%d criterion failures)\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
    return failures;
}
