#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace nsys {

struct Vec2 {
    double x1 = 0.0;
    double x2 = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x1 + b.x1, a.x2 + b.x2}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x1 - b.x1, a.x2 - b.x2}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x1, s * a.x2}; }
    double norm1() const { return std::abs(x1) + std::abs(x2); }
    double max_abs() const { return std::max(std::abs(x1), std::abs(x2)); }
};

struct UnscaledState {
    long long X1 = 0;
    long long X2 = 0;
    bool operator==(const UnscaledState&) const = default;
};

struct ScaledState {
    double x1 = 0.0;
    double x2 = 0.0;
    Vec2 vec() const { return {x1, x2}; }
    double norm1() const { return std::abs(x1) + std::abs(x2); }
};

// The two-pool N-system: pool 1 serves only type 1, pool 2 serves both,
// type 2 has preemptive priority in pool 2. Arrival-rate coefficients are
// derived from the capacity fractions, never supplied by the caller.
struct SystemParams {
    double mu11 = 0, mu12 = 0, mu22 = 0;
    double psi11 = 0, psi12 = 0, psi22 = 0;
    double b = 0;
    double lambda1 = 0, lambda2 = 0;  // derived
};

inline SystemParams make_params(double mu11, double mu12, double mu22,
                                double psi11, double psi12, double psi22, double b) {
    for (double v : {mu11, mu12, mu22, psi11, psi12, psi22, b})
        if (!(v > 0.0))
            throw std::invalid_argument("make_params: all parameters must be > 0");
    SystemParams p;
    p.mu11 = mu11; p.mu12 = mu12; p.mu22 = mu22;
    p.psi11 = psi11; p.psi12 = psi12; p.psi22 = psi22;
    p.b = b;
    p.lambda2 = psi22 * mu22;
    p.lambda1 = psi11 * mu11 + psi12 * mu12;
    return p;
}

enum class Domain : int { X0 = 0, X1 = 1, X2 = 2, X3 = 3, X4 = 4 };

// Drift on a domain: v(x) = u x + a, with u triangular (u21 = 0).
struct AffinePiece {
    double u11 = 0, u12 = 0, u21 = 0, u22 = 0;
    double a1 = 0, a2 = 0;
    Vec2 drift(Vec2 x) const {
        return {u11 * x.x1 + u12 * x.x2 + a1, u21 * x.x1 + u22 * x.x2 + a2};
    }
};

// One member of the scaled sequence. Pool sizes are integer (floor rule) and
// the adjusted coefficients absorb the rounding so that the pool-size and
// load identities hold exactly for this n.
struct ScaledSystem {
    SystemParams params;
    long long n = 0;
    long long B1 = 0, B2 = 0;
    double Lambda1 = 0, Lambda2 = 0;
    double psi11n = 0, psi12n = 0, psi22n = 0, bn = 0;
    double rounding_kappa = 0;  // max of n|psi_ijn - psi_ij| and sqrt(n)|bn - b|
    double sqrt_n = 0;
    double center1 = 0, center2 = 0;  // equilibrium point, unscaled
    double lower1 = 0, lower2 = 0;    // lower bounds of the scaled state space
    double bd1 = 0;   // x1 value of the X1 = B1 boundary: -psi12n*sqrt(n)
    double bd2 = 0;   // x2 value of the X2 = B2 boundary: psi12n*sqrt(n) + bn
    double rate_bound = 0;  // analytic bound on the total exit rate
    std::array<AffinePiece, 5> pieces{};

    const AffinePiece& piece(Domain d) const { return pieces[static_cast<int>(d)]; }
};

inline ScaledSystem scale_system(const SystemParams& p, long long n) {
    if (n < 1) throw std::invalid_argument("scale_system: n must be >= 1");
    ScaledSystem s;
    s.params = p;
    s.n = n;
    s.sqrt_n = std::sqrt(static_cast<double>(n));
    s.Lambda1 = p.lambda1 * n;
    s.Lambda2 = p.lambda2 * n;
    s.B1 = static_cast<long long>(std::floor(p.psi11 * n));
    s.B2 = static_cast<long long>(std::floor(p.psi12 * n + p.psi22 * n + p.b * s.sqrt_n));

    // Adjusted coefficients: B1 = psi11n*n, B2 = psi12n*n + psi22n*n + bn*sqrt(n),
    // with lambda2 = psi22n*mu22 and lambda1 = psi11n*mu11 + psi12n*mu12 exact.
    s.psi11n = static_cast<double>(s.B1) / n;
    s.psi12n = (p.lambda1 - s.psi11n * p.mu11) / p.mu12;
    s.psi22n = p.lambda2 / p.mu22;  // = psi22
    s.bn = (static_cast<double>(s.B2) - s.psi12n * n - s.psi22n * n) / s.sqrt_n;
    s.rounding_kappa = std::max({n * std::abs(s.psi11n - p.psi11),
                                 n * std::abs(s.psi12n - p.psi12),
                                 n * std::abs(s.psi22n - p.psi22),
                                 s.sqrt_n * std::abs(s.bn - p.b)});

    s.center1 = (s.psi11n + s.psi12n) * n;
    s.center2 = s.psi22n * n;
    s.lower1 = -(s.psi11n + s.psi12n) * s.sqrt_n;
    s.lower2 = -s.psi22n * s.sqrt_n;
    s.bd1 = -s.psi12n * s.sqrt_n;
    s.bd2 = s.psi12n * s.sqrt_n + s.bn;
    s.rate_bound = (p.lambda1 + p.lambda2) * n + p.mu11 * s.B1 + std::max(p.mu12, p.mu22) * s.B2;

    const double m11 = p.mu11, m12 = p.mu12, m22 = p.mu22;
    const double q = s.psi12n * s.sqrt_n;
    // X0: X1 > B1, X1 + X2 < B1 + B2 (no queues, pool 1 full)
    s.pieces[0] = {-m12, 0, 0, -m22, 0, 0};
    // X1: X1 > B1, X2 < B2, X1 + X2 > B1 + B2 (type 1 queue)
    s.pieces[1] = {0, m12, 0, -m22, -s.bn * m12, 0};
    // X2: X1 < B1, X2 < B2 (pool 1 not full, no queues)
    s.pieces[2] = {-m11, 0, 0, -m22, s.psi12n * (m12 - m11) * s.sqrt_n, 0};
    // X3: X1 < B1, X2 > B2 (merged over the X1+X2 sign)
    s.pieces[3] = {-m11, 0, 0, 0, s.psi12n * (m12 - m11) * s.sqrt_n, -m22 * s.bd2};
    // X4: X1 > B1, X2 > B2, X1 + X2 > B1 + B2 (both queues, pool 2 all type 2)
    s.pieces[4] = {0, 0, 0, 0, s.psi12n * m12 * s.sqrt_n, -m22 * s.bd2};
    return s;
}

inline std::pair<double, double> service_rates(const ScaledSystem& s, const UnscaledState& st) {
    if (st.X1 < 0 || st.X2 < 0) throw std::invalid_argument("service_rates: negative state");
    const double X1 = static_cast<double>(st.X1), X2 = static_cast<double>(st.X2);
    const double B1 = static_cast<double>(s.B1), B2 = static_cast<double>(s.B2);
    const double rate2 = s.params.mu22 * std::min(X2, B2);
    const double rate1 = s.params.mu11 * std::min(X1, B1) +
                         s.params.mu12 * std::min(std::max(X1 - B1, 0.0), std::max(B2 - X2, 0.0));
    return {rate1, rate2};
}

inline ScaledState scaled_of_unscaled(const ScaledSystem& s, const UnscaledState& st) {
    return {(static_cast<double>(st.X1) - s.center1) / s.sqrt_n,
            (static_cast<double>(st.X2) - s.center2) / s.sqrt_n};
}

// Inverse of the diffusion-scaling map; the result is real-valued (the
// equilibrium point need not be integer).
inline std::pair<double, double> unscaled_of_scaled(const ScaledSystem& s, const ScaledState& x) {
    return {x.x1 * s.sqrt_n + s.center1, x.x2 * s.sqrt_n + s.center2};
}

inline bool in_state_space(const ScaledSystem& s, const ScaledState& x, double tol = 1e-9) {
    return x.x1 >= s.lower1 - tol && x.x2 >= s.lower2 - tol;
}

// Drift of the unscaled process at a real-valued point of R_+^2.
inline Vec2 drift_unscaled(const ScaledSystem& s, double X1, double X2) {
    if (X1 < -1e-9 || X2 < -1e-9) throw std::domain_error("drift_unscaled: point outside R_+^2");
    const double B1 = static_cast<double>(s.B1), B2 = static_cast<double>(s.B2);
    const double V1 = s.Lambda1 - s.params.mu11 * std::min(X1, B1) -
                      s.params.mu12 * std::min(std::max(X1 - B1, 0.0), std::max(B2 - X2, 0.0));
    const double V2 = s.Lambda2 - s.params.mu22 * std::min(X2, B2);
    return {V1, V2};
}

inline Vec2 drift_scaled(const ScaledSystem& s, const ScaledState& x) {
    if (!in_state_space(s, x))
        throw std::domain_error("drift_scaled: point outside the scaled state space");
    auto [X1, X2] = unscaled_of_scaled(s, x);
    Vec2 V = drift_unscaled(s, std::max(X1, 0.0), std::max(X2, 0.0));
    return {V.x1 / s.sqrt_n, V.x2 / s.sqrt_n};
}

// Boundary functions separating the domains; s3 = s1 + s2 identically.
// s1 <> 0 is X1 <> B1, s2 <> 0 is X2 <> B2, s3 <> 0 is X1+X2 <> B1+B2.
inline std::array<double, 3> boundary_values(const ScaledSystem& s, const ScaledState& x) {
    const double s1 = x.x1 - s.bd1;
    const double s2 = x.x2 - s.bd2;
    return {s1, s2, x.x1 + x.x2 - s.bn};
}

namespace detail {
// Map a strict sign pattern (+1/-1 per boundary) to a domain label.
// Returns -1 for the two geometrically empty patterns.
inline int pattern_label(int g1, int g2, int g3) {
    if (g1 > 0) {
        if (g2 > 0) return g3 > 0 ? 4 : -1;
        return g3 < 0 ? 0 : 1;
    }
    if (g2 > 0) return 3;
    return g3 < 0 ? 2 : -1;
}
}  // namespace detail

struct DomainInfo {
    Domain label = Domain::X0;
    std::vector<Domain> adjacent;  // all domains whose closure contains x (within tolerance)
    bool boundary = false;
};

inline DomainInfo classify_domain(const ScaledSystem& s, const ScaledState& x) {
    if (!in_state_space(s, x))
        throw std::domain_error("classify_domain: point outside the scaled state space");
    const auto bv = boundary_values(s, x);
    const double tol = 1e-12 * (1.0 + x.norm1());
    DomainInfo info;
    std::array<std::array<int, 2>, 3> signs{};
    std::array<int, 3> nsigns{};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(bv[i]) <= tol) {
            signs[i] = {-1, 1};
            nsigns[i] = 2;
        } else {
            signs[i] = {bv[i] > 0 ? 1 : -1, 0};
            nsigns[i] = 1;
        }
    }
    for (int i = 0; i < nsigns[0]; ++i)
        for (int j = 0; j < nsigns[1]; ++j)
            for (int k = 0; k < nsigns[2]; ++k) {
                int lab = detail::pattern_label(signs[0][i], signs[1][j], signs[2][k]);
                if (lab < 0) continue;
                Domain d = static_cast<Domain>(lab);
                if (std::find(info.adjacent.begin(), info.adjacent.end(), d) == info.adjacent.end())
                    info.adjacent.push_back(d);
            }
    std::sort(info.adjacent.begin(), info.adjacent.end());
    info.boundary = info.adjacent.size() > 1;
    info.label = info.adjacent.front();
    return info;
}

struct Transition {
    UnscaledState to;
    double rate = 0.0;
};

inline std::vector<Transition> transition_rates(const ScaledSystem& s, const UnscaledState& st) {
    auto [r1, r2] = service_rates(s, st);
    std::vector<Transition> out;
    out.push_back({{st.X1 + 1, st.X2}, s.Lambda1});
    if (r1 > 0.0) out.push_back({{st.X1 - 1, st.X2}, r1});
    out.push_back({{st.X1, st.X2 + 1}, s.Lambda2});
    if (r2 > 0.0) out.push_back({{st.X1, st.X2 - 1}, r2});
    return out;
}

// --- JSON (config-document root) ---

inline void to_json(nlohmann::json& j, const SystemParams& p) {
    j = {{"mu11", p.mu11}, {"mu12", p.mu12}, {"mu22", p.mu22},
         {"psi11", p.psi11}, {"psi12", p.psi12}, {"psi22", p.psi22},
         {"b", p.b}, {"lambda1", p.lambda1}, {"lambda2", p.lambda2}};
}

inline void from_json(const nlohmann::json& j, SystemParams& p) {
    p = make_params(j.at("mu11").get<double>(), j.at("mu12").get<double>(),
                    j.at("mu22").get<double>(), j.at("psi11").get<double>(),
                    j.at("psi12").get<double>(), j.at("psi22").get<double>(),
                    j.at("b").get<double>());
}

inline void to_json(nlohmann::json& j, const ScaledSystem& s) {
    j = {{"params", s.params}, {"n", s.n}, {"B1", s.B1}, {"B2", s.B2},
         {"Lambda1", s.Lambda1}, {"Lambda2", s.Lambda2},
         {"psi11n", s.psi11n}, {"psi12n", s.psi12n}, {"psi22n", s.psi22n},
         {"bn", s.bn}, {"rounding_kappa", s.rounding_kappa}};
}

inline void from_json(const nlohmann::json& j, ScaledSystem& s) {
    SystemParams p = j.at("params").get<SystemParams>();
    s = scale_system(p, j.at("n").get<long long>());
}

}  // namespace nsys
