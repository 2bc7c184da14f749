#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace nsys {

// Per-replication seed derivation: seed_i = splitmix64(root ^ golden*i).
// Documented hash: splitmix64 finalizer applied to root combined with the index.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
    return splitmix64(root ^ splitmix64(index));
}

struct BatchMeans {
    double mean = 0.0;
    double half_width = 0.0;   // 95% CI half-width
    std::vector<double> per_batch;
};

inline BatchMeans batch_means(const std::vector<double>& batches) {
    if (batches.size() < 2)
        throw std::invalid_argument("batch_means: need at least 2 batches");
    BatchMeans r;
    r.per_batch = batches;
    const double k = static_cast<double>(batches.size());
    r.mean = std::accumulate(batches.begin(), batches.end(), 0.0) / k;
    double ss = 0.0;
    for (double v : batches) ss += (v - r.mean) * (v - r.mean);
    const double s = std::sqrt(ss / (k - 1.0));
    boost::math::students_t_distribution<double> t(k - 1.0);
    r.half_width = boost::math::quantile(t, 0.975) * s / std::sqrt(k);
    return r;
}

// Weighted empirical distribution on the real line.
struct WeightedEcdf {
    // (value, weight) pairs; normalized and sorted by finalize().
    std::vector<std::pair<double, double>> atoms;

    void add(double value, double weight) { atoms.emplace_back(value, weight); }

    void finalize() {
        std::sort(atoms.begin(), atoms.end());
        double total = 0.0;
        for (auto& a : atoms) total += a.second;
        if (total <= 0.0) throw std::runtime_error("WeightedEcdf: zero total mass");
        // merge equal values
        std::vector<std::pair<double, double>> merged;
        for (auto& a : atoms) {
            if (!merged.empty() && merged.back().first == a.first)
                merged.back().second += a.second / total;
            else
                merged.emplace_back(a.first, a.second / total);
        }
        atoms = std::move(merged);
    }

    double cdf(double x) const {
        double c = 0.0;
        for (auto& a : atoms) {
            if (a.first > x) break;
            c += a.second;
        }
        return c;
    }
};

// KS distance between two finalized weighted ecdfs.
inline double ks_distance(const WeightedEcdf& a, const WeightedEcdf& b) {
    double d = 0.0;
    std::size_t ia = 0, ib = 0;
    double ca = 0.0, cb = 0.0;
    while (ia < a.atoms.size() || ib < b.atoms.size()) {
        double xa = ia < a.atoms.size() ? a.atoms[ia].first : std::numeric_limits<double>::infinity();
        double xb = ib < b.atoms.size() ? b.atoms[ib].first : std::numeric_limits<double>::infinity();
        if (xa <= xb) ca += a.atoms[ia++].second;
        if (xb <= xa) cb += b.atoms[ib++].second;
        d = std::max(d, std::abs(ca - cb));
    }
    return d;
}

// KS distance of a finalized ecdf against a continuous CDF F.
template <class Cdf>
double ks_distance_cdf(const WeightedEcdf& e, Cdf&& F) {
    double d = 0.0, c = 0.0;
    for (auto& a : e.atoms) {
        const double f = F(a.first);
        d = std::max(d, std::abs(c - f));   // just below the atom
        c += a.second;
        d = std::max(d, std::abs(c - f));   // just above
    }
    return d;
}

inline double normal_cdf(double x, double mean, double stddev) {
    return 0.5 * std::erfc(-(x - mean) / (stddev * std::sqrt(2.0)));
}

struct KendallTest {
    double tau = 0.0;
    double p_positive = 1.0;  // exact one-sided P(tau >= observed) under the null
};

// Exact one-sided Kendall tau trend test for small samples (m <= 8).
inline KendallTest kendall_tau_test(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t m = x.size();
    if (m != y.size() || m < 2) throw std::invalid_argument("kendall_tau_test: bad input");
    if (m > 8) throw std::invalid_argument("kendall_tau_test: exact test limited to m <= 8");
    auto concordance = [&](const std::vector<double>& yy) {
        int s = 0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j) {
                const double dx = x[j] - x[i], dy = yy[j] - yy[i];
                if (dx * dy > 0) ++s;
                else if (dx * dy < 0) --s;
            }
        return s;
    };
    const int obs = concordance(y);
    KendallTest r;
    r.tau = static_cast<double>(obs) / (0.5 * m * (m - 1));
    std::vector<double> perm(y);
    std::sort(perm.begin(), perm.end());
    int count = 0, total = 0;
    do {
        ++total;
        if (concordance(perm) >= obs) ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    r.p_positive = static_cast<double>(count) / total;
    return r;
}

// FNV-1a, used for config provenance hashes.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace nsys
