#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "model.hpp"
#include "stats.hpp"

namespace nsys {

struct SimConfig {
    std::uint64_t seed = 1;
    double horizon = 0;
    double burn_in = 0;
    int batches = 20;
    std::optional<UnscaledState> initial;  // default: the equilibrium point

    void validate() const {
        if (!(burn_in > 0.0) || !(horizon > burn_in))
            throw std::invalid_argument("SimConfig: need horizon > burn_in > 0");
        if (batches < 10)
            throw std::invalid_argument("SimConfig: need batches >= 10");
        if ((horizon - burn_in) / batches < 1e-9)
            throw std::invalid_argument("SimConfig: horizon too short for requested batches");
    }
};

inline UnscaledState default_initial(const ScaledSystem& sys) {
    return {static_cast<long long>(std::llround(sys.center1)),
            static_cast<long long>(std::llround(sys.center2))};
}

struct StationaryEstimate {
    long long n = 0;
    double mean_abs_scaled = 0;   // estimate of E ||Xhat(inf)||_1
    double half_width = 0;        // 95% batch-means CI
    std::vector<double> per_batch;
    std::map<long long, double> hist1, hist2;  // unscaled marginals, mass sums to 1
    std::map<std::pair<long long, long long>, double> joint;  // unscaled joint law
    std::array<double, 5> domain_occupancy{};
    double max_rate_seen = 0;

    WeightedEcdf scaled_marginal(const ScaledSystem& sys, int coord) const {
        WeightedEcdf e;
        const auto& h = coord == 0 ? hist1 : hist2;
        const double c = coord == 0 ? sys.center1 : sys.center2;
        for (auto& [k, w] : h) e.add((static_cast<double>(k) - c) / sys.sqrt_n, w);
        e.finalize();
        return e;
    }

    double marginal_mean_scaled(const ScaledSystem& sys, int coord) const {
        const auto& h = coord == 0 ? hist1 : hist2;
        const double c = coord == 0 ? sys.center1 : sys.center2;
        double m = 0;
        for (auto& [k, w] : h) m += w * (static_cast<double>(k) - c) / sys.sqrt_n;
        return m;
    }

    double marginal_var_scaled(const ScaledSystem& sys, int coord) const {
        const double m = marginal_mean_scaled(sys, coord);
        const auto& h = coord == 0 ? hist1 : hist2;
        const double c = coord == 0 ? sys.center1 : sys.center2;
        double v = 0;
        for (auto& [k, w] : h) {
            const double x = (static_cast<double>(k) - c) / sys.sqrt_n - m;
            v += w * x * x;
        }
        return v;
    }
};

namespace detail {

// Deterministic, implementation-independent uniforms in (0,1).
inline double next_uniform(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline int domain_index(const ScaledSystem& sys, const UnscaledState& s) {
    return static_cast<int>(classify_domain(sys, scaled_of_unscaled(sys, s)).label);
}

}  // namespace detail

inline StationaryEstimate simulate(const ScaledSystem& sys, const SimConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    UnscaledState s = cfg.initial.value_or(default_initial(sys));
    if (s.X1 < 0 || s.X2 < 0) throw std::invalid_argument("simulate: invalid initial state");

    StationaryEstimate est;
    est.n = sys.n;
    const double span = cfg.horizon - cfg.burn_in;
    const double batch_len = span / cfg.batches;
    std::vector<double> batch_sum(cfg.batches, 0.0);

    std::map<long long, double> h1, h2;
    std::array<double, 5> occ{};
    double t = 0.0;
    double total_weight = 0.0;

    while (t < cfg.horizon) {
        const auto [r1, r2] = service_rates(sys, s);
        const double rates[4] = {sys.Lambda1, r1, sys.Lambda2, r2};
        const double total = rates[0] + rates[1] + rates[2] + rates[3];
        est.max_rate_seen = std::max(est.max_rate_seen, total);
        const double dt = -std::log(detail::next_uniform(rng)) / total;
        const double t_next = std::min(t + dt, cfg.horizon);

        // time-weighted accumulation over [t, t_next)
        double a = std::max(t, cfg.burn_in);
        if (t_next > a) {
            const double w = t_next - a;
            const double abs_scaled = scaled_of_unscaled(sys, s).norm1();
            h1[s.X1] += w;
            h2[s.X2] += w;
            est.joint[{s.X1, s.X2}] += w;
            occ[detail::domain_index(sys, s)] += w;
            total_weight += w;
            // split across batch boundaries
            while (a < t_next) {
                int bi = std::min(cfg.batches - 1,
                                  static_cast<int>((a - cfg.burn_in) / batch_len));
                const double edge = cfg.burn_in + (bi + 1) * batch_len;
                const double b = std::min(t_next, edge);
                batch_sum[bi] += (b - a) * abs_scaled;
                a = b;
            }
        }

        t += dt;
        if (t >= cfg.horizon) break;

        double u = detail::next_uniform(rng) * total;
        int ev = 0;
        for (; ev < 3; ++ev) {
            if (u < rates[ev]) break;
            u -= rates[ev];
        }
        switch (ev) {
            case 0: s.X1 += 1; break;
            case 1: s.X1 -= 1; break;
            case 2: s.X2 += 1; break;
            case 3: s.X2 -= 1; break;
        }
        if (s.X1 < 0 || s.X2 < 0)
            throw std::logic_error("simulate: state left the nonnegative lattice");
    }

    std::vector<double> batch_means_v(cfg.batches);
    for (int i = 0; i < cfg.batches; ++i) batch_means_v[i] = batch_sum[i] / batch_len;
    const BatchMeans bm = batch_means(batch_means_v);
    est.mean_abs_scaled = bm.mean;
    est.half_width = bm.half_width;
    est.per_batch = bm.per_batch;
    for (auto& [k, w] : h1) est.hist1[k] = w / total_weight;
    for (auto& [k, w] : h2) est.hist2[k] = w / total_weight;
    for (auto& [k, w] : est.joint) w /= total_weight;
    for (int i = 0; i < 5; ++i) est.domain_occupancy[i] = occ[i] / total_weight;
    return est;
}

// --- truncated linear-solve oracle ---

class TruncationError : public std::runtime_error {
public:
    double boundary_mass;
    explicit TruncationError(double mass)
        : std::runtime_error("oracle_stationary: boundary-layer mass " + std::to_string(mass) +
                             " exceeds 1e-6; enlarge the truncation box"),
          boundary_mass(mass) {}
};

struct OracleDistribution {
    long long X1max = 0, X2max = 0;
    std::vector<double> p;  // row-major, index = X1*(X2max+1) + X2
    double boundary_mass = 0;
    int sweeps = 0;

    double at(long long X1, long long X2) const { return p[X1 * (X2max + 1) + X2]; }

    std::vector<double> marginal(int coord) const {
        std::vector<double> m(coord == 0 ? X1max + 1 : X2max + 1, 0.0);
        for (long long i = 0; i <= X1max; ++i)
            for (long long j = 0; j <= X2max; ++j)
                m[coord == 0 ? i : j] += at(i, j);
        return m;
    }

    double mean_abs_scaled(const ScaledSystem& sys) const {
        double s = 0;
        for (long long i = 0; i <= X1max; ++i)
            for (long long j = 0; j <= X2max; ++j)
                s += at(i, j) * scaled_of_unscaled(sys, {i, j}).norm1();
        return s;
    }
};

// Global-balance solve of the chain restricted to the box; transitions that
// would leave the box become self-loops (reflection). Gauss-Seidel sweeps on
// the balance equations to relative residual 1e-12.
inline OracleDistribution oracle_stationary(const ScaledSystem& sys, long long X1max, long long X2max) {
    const double margin = 10.0 * sys.sqrt_n;
    if (sys.center1 + margin > X1max || sys.center2 + margin > X2max)
        throw std::invalid_argument("oracle_stationary: box must contain the equilibrium with 10*sqrt(n) margin");
    const long long nx = X1max + 1, ny = X2max + 1;
    if (nx * ny > 1000000)
        throw std::invalid_argument("oracle_stationary: truncation box exceeds 1e6 states");

    OracleDistribution od;
    od.X1max = X1max;
    od.X2max = X2max;
    od.p.assign(nx * ny, 1.0 / (nx * ny));
    auto idx = [&](long long i, long long j) { return i * ny + j; };

    // Precompute service rates and the in-box exit rate per state.
    std::vector<double> srv1(nx * ny), srv2(nx * ny), out(nx * ny, 0.0);
    for (long long i = 0; i < nx; ++i)
        for (long long j = 0; j < ny; ++j) {
            auto [r1, r2] = service_rates(sys, {i, j});
            srv1[idx(i, j)] = r1;
            srv2[idx(i, j)] = r2;
            double o = 0;
            if (i + 1 < nx) o += sys.Lambda1;
            if (j + 1 < ny) o += sys.Lambda2;
            if (i > 0) o += r1;
            if (j > 0) o += r2;
            out[idx(i, j)] = o;
        }

    auto inflow = [&](long long i, long long j) {
        double s = 0;
        if (i > 0) s += od.p[idx(i - 1, j)] * sys.Lambda1;
        if (j > 0) s += od.p[idx(i, j - 1)] * sys.Lambda2;
        if (i + 1 < nx) s += od.p[idx(i + 1, j)] * srv1[idx(i + 1, j)];
        if (j + 1 < ny) s += od.p[idx(i, j + 1)] * srv2[idx(i, j + 1)];
        return s;
    };

    const int max_sweeps = 200000;
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        for (long long i = 0; i < nx; ++i)
            for (long long j = 0; j < ny; ++j) {
                const auto k = idx(i, j);
                if (out[k] > 0.0) od.p[k] = inflow(i, j) / out[k];
            }
        double mass = 0;
        for (double v : od.p) mass += v;
        for (double& v : od.p) v /= mass;
        od.sweeps = sweep;
        if (sweep % 32 == 0 || sweep == max_sweeps) {
            double num = 0, den = 0;
            for (long long i = 0; i < nx; ++i)
                for (long long j = 0; j < ny; ++j) {
                    const auto k = idx(i, j);
                    num += std::abs(od.p[k] * out[k] - inflow(i, j));
                    den += od.p[k] * out[k];
                }
            if (num / den < 1e-12) break;
        }
    }

    for (long long i = 0; i < nx; ++i) od.boundary_mass += od.p[idx(i, ny - 1)];
    for (long long j = 0; j + 1 < ny; ++j) od.boundary_mass += od.p[idx(nx - 1, j)];
    if (od.boundary_mass >= 1e-6) throw TruncationError(od.boundary_mass);
    return od;
}

// --- renewal cycles (hits of X2 = 0) ---

struct RenewalStats {
    long long level = 0;  // regeneration level for X2
    double mean_cycle_T = 0;
    double mean_arrivals_A = 0;
    double mean_potential_services_S = 0;
    long long cycle_count = 0;
    // per-cycle residuals (sample mean +- 95% half-width), both centered at 0
    double resid_arrivals = 0, resid_arrivals_hw = 0;        // A_l - Lambda1*T_l
    double resid_balance = 0, resid_balance_hw = 0;          // (S_l - A_l) - bn*mu12*sqrt(n)*T_l
};

// Cycles are delimited by downward entries of X2 into a fixed regeneration
// level; X2 is an autonomous birth-death chain, so these entries are renewal
// points and the cycle identities hold for any level. The level defaults to
// the typical type-2 count: entries into sparsely visited levels (such as an
// empty type-2 population) become exponentially rare as n grows.
inline RenewalStats renewal_cycles(const ScaledSystem& sys, const SimConfig& cfg,
                                   long long level = -1) {
    cfg.validate();
    if (level < 0) level = static_cast<long long>(std::llround(sys.center2));
    std::mt19937_64 rng(cfg.seed);
    UnscaledState s = cfg.initial.value_or(UnscaledState{default_initial(sys).X1, level});

    std::vector<double> Ts, As, Ss;
    double t = 0.0;
    bool in_cycle = false;
    double cyc_start = 0.0, cyc_A = 0.0, cyc_S = 0.0;

    const double potential_coef = sys.params.mu11 * sys.B1 + sys.params.mu12 * sys.B2;
    auto potential_rate = [&](const UnscaledState& st) {
        return potential_coef - sys.params.mu12 * std::min<double>(st.X2, sys.B2);
    };

    while (t < cfg.horizon) {
        const auto [r1, r2] = service_rates(sys, s);
        const double rates[4] = {sys.Lambda1, r1, sys.Lambda2, r2};
        const double total = rates[0] + rates[1] + rates[2] + rates[3];
        const double dt = -std::log(detail::next_uniform(rng)) / total;
        if (in_cycle) cyc_S += potential_rate(s) * std::min(dt, cfg.horizon - t);
        t += dt;
        if (t >= cfg.horizon) break;

        double u = detail::next_uniform(rng) * total;
        int ev = 0;
        for (; ev < 3; ++ev) {
            if (u < rates[ev]) break;
            u -= rates[ev];
        }
        switch (ev) {
            case 0: s.X1 += 1; if (in_cycle) cyc_A += 1.0; break;
            case 1: s.X1 -= 1; break;
            case 2: s.X2 += 1; break;
            case 3: s.X2 -= 1; break;
        }
        if (ev == 3 && s.X2 == level) {
            if (in_cycle) {
                Ts.push_back(t - cyc_start);
                As.push_back(cyc_A);
                Ss.push_back(cyc_S);
            }
            in_cycle = true;
            cyc_start = t;
            cyc_A = cyc_S = 0.0;
        }
    }

    if (Ts.empty())
        throw std::runtime_error("renewal_cycles: no completed cycles within the horizon");

    RenewalStats r;
    r.level = level;
    r.cycle_count = static_cast<long long>(Ts.size());
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / v.size();
    };
    r.mean_cycle_T = mean(Ts);
    r.mean_arrivals_A = mean(As);
    r.mean_potential_services_S = mean(Ss);

    const double drift_coef = sys.bn * sys.params.mu12 * sys.sqrt_n;
    std::vector<double> dA(Ts.size()), dB(Ts.size());
    for (std::size_t i = 0; i < Ts.size(); ++i) {
        dA[i] = As[i] - sys.Lambda1 * Ts[i];
        dB[i] = (Ss[i] - As[i]) - drift_coef * Ts[i];
    }
    const BatchMeans bA = batch_means(dA), bB = batch_means(dB);
    r.resid_arrivals = bA.mean;
    r.resid_arrivals_hw = bA.half_width;
    r.resid_balance = bB.mean;
    r.resid_balance_hw = bB.half_width;
    return r;
}

}  // namespace nsys
