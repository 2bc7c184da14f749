#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "model.hpp"
#include "stats.hpp"

namespace nsys {

// Limiting drift field and diffusion coefficients of the scaled sequence.
struct LimitField {
    double mu12 = 0, mu22 = 0, b = 0;
    double sigma1 = 0, sigma2 = 0;

    Vec2 drift(Vec2 x) const {
        return {-mu12 * std::min(x.x1, b - x.x2), -mu22 * x.x2};
    }
};

inline LimitField limit_field(const SystemParams& p) {
    LimitField f;
    f.mu12 = p.mu12;
    f.mu22 = p.mu22;
    f.b = p.b;
    f.sigma1 = std::sqrt(p.lambda1 + p.psi11 * p.mu11 + p.psi12 * p.mu12);
    f.sigma2 = std::sqrt(p.lambda2 + p.psi22 * p.mu22);
    return f;
}

struct SdeConfig {
    double dt = 1e-3;
    double horizon = 0;
    double burn_in = 0;
    std::uint64_t seed = 1;
    Vec2 initial{0.0, 0.0};
    int batches = 20;
    std::size_t max_samples = 200000;  // post-burn-in samples kept (thinned)

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("SdeConfig: dt must be > 0");
        if (!(burn_in > 0.0) || !(horizon > burn_in))
            throw std::invalid_argument("SdeConfig: need horizon > burn_in > 0");
    }
};

struct SdeEstimate {
    double mean1 = 0, mean2 = 0;
    double var1 = 0, var2 = 0;
    double mean1_hw = 0, mean2_hw = 0;  // 95% batch-means half-widths
    std::vector<double> samples1, samples2;  // thinned post-burn-in path samples

    WeightedEcdf marginal(int coord) const {
        WeightedEcdf e;
        for (double v : coord == 0 ? samples1 : samples2) e.add(v, 1.0);
        e.finalize();
        return e;
    }
};

namespace detail {
inline double next_normal(std::mt19937_64& rng) {
    // Box-Muller on deterministic uniforms; one draw per call, cached pair dropped
    // to keep the stream position independent of branchy consumers.
    const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}
}  // namespace detail

// Euler-Maruyama on the plane for the first coordinate; the second coordinate
// is an Ornstein-Uhlenbeck process and is stepped with its exact transition.
inline SdeEstimate simulate_sde(const LimitField& f, const SdeConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    Vec2 x = cfg.initial;

    const long long steps = static_cast<long long>(std::ceil(cfg.horizon / cfg.dt));
    const long long burn_steps = static_cast<long long>(cfg.burn_in / cfg.dt);
    const long long post = steps - burn_steps;
    const long long thin = std::max<long long>(1, post / static_cast<long long>(cfg.max_samples));

    const double ou_decay = std::exp(-f.mu22 * cfg.dt);
    const double ou_std = f.sigma2 * std::sqrt((1.0 - ou_decay * ou_decay) / (2.0 * f.mu22));
    const double e_std = f.sigma1 * std::sqrt(cfg.dt);

    SdeEstimate est;
    double s1 = 0, s2 = 0, ss1 = 0, ss2 = 0;
    long long count = 0;
    std::vector<double> b1(cfg.batches, 0.0), b2(cfg.batches, 0.0);
    std::vector<long long> bc(cfg.batches, 0);

    for (long long k = 0; k < steps; ++k) {
        const Vec2 v = f.drift(x);
        x.x1 += v.x1 * cfg.dt + e_std * detail::next_normal(rng);
        x.x2 = x.x2 * ou_decay + ou_std * detail::next_normal(rng);
        if (!std::isfinite(x.x1) || !std::isfinite(x.x2))
            throw std::runtime_error("simulate_sde: numerical blow-up");
        if (k >= burn_steps) {
            const long long i = k - burn_steps;
            s1 += x.x1; s2 += x.x2;
            ss1 += x.x1 * x.x1; ss2 += x.x2 * x.x2;
            ++count;
            const int bi = std::min<int>(cfg.batches - 1,
                                         static_cast<int>(i * cfg.batches / post));
            b1[bi] += x.x1; b2[bi] += x.x2; ++bc[bi];
            if (i % thin == 0) {
                est.samples1.push_back(x.x1);
                est.samples2.push_back(x.x2);
            }
        }
    }

    est.mean1 = s1 / count;
    est.mean2 = s2 / count;
    est.var1 = ss1 / count - est.mean1 * est.mean1;
    est.var2 = ss2 / count - est.mean2 * est.mean2;
    std::vector<double> m1(cfg.batches), m2(cfg.batches);
    for (int i = 0; i < cfg.batches; ++i) {
        m1[i] = b1[i] / bc[i];
        m2[i] = b2[i] / bc[i];
    }
    est.mean1_hw = batch_means(m1).half_width;
    est.mean2_hw = batch_means(m2).half_width;
    return est;
}

}  // namespace nsys
