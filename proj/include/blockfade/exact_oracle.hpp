#pragma once

// Brute-force reference for tail probabilities of two pooled block groups.
// Deliberately self-contained (own binomial code, no grid, no lattice) so it
// can serve as an independent oracle for the quantized and pooled engines.
//
// Blocks sharing one (state, measure) pair pool into a single binomial: over
// n blocks of T uses with crossover delta, the total disagreement count K is
// Binomial(n*T, delta) under the conditioned output measure and
// Binomial(n*T, 1/2) under the unconditioned one, and the summed information
// density is n*T*(ln2 + ln(1-delta)) - K*ln((1-delta)/delta).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "blockfade/grid_pmf.hpp"

namespace blockfade {

namespace oracle_detail {

struct Group {
    std::vector<long double> w;  // w[k] = P(K = k), k = 0..n*T (finite-density part)
    double base = 0.0;           // n*T*(ln2 + ln(1-delta))
    double spacing = 0.0;        // ln((1-delta)/delta)
    long double inf_mass = 0.0L; // P(density = -inf), delta = 0 unconditioned only
};

inline Group make_group(const ChannelParams& cp, int n_blocks, BlockMeasure bm) {
    Group g;
    double d = cp.delta(bm.state);
    long long nt = static_cast<long long>(n_blocks) * cp.T;
    if (n_blocks == 0) {
        g.w.assign(1, 1.0L);
        return g;
    }
    if (d == 0.0) {
        g.base = static_cast<double>(nt) * ln2;
        if (bm.measure == Measure::conditioned) {
            g.w.assign(1, 1.0L);
        } else {
            long double p0 = expl(-static_cast<long double>(nt) * static_cast<long double>(ln2));
            g.w.assign(1, p0);
            g.inf_mass = 1.0L - p0;
        }
        return g;
    }
    double p = bm.measure == Measure::conditioned ? d : 0.5;
    g.base = static_cast<double>(nt) * (ln2 + std::log1p(-d));
    g.spacing = std::log((1.0 - d) / d);
    g.w.resize(static_cast<std::size_t>(nt) + 1);
    long double lp = logl(static_cast<long double>(p));
    long double lq = log1pl(-static_cast<long double>(p));
    long double lgn = lgammal(static_cast<long double>(nt) + 1.0L);
    for (long long k = 0; k <= nt; ++k) {
        long double lw = lgn - lgammal(static_cast<long double>(k) + 1.0L) -
                         lgammal(static_cast<long double>(nt - k) + 1.0L) +
                         static_cast<long double>(k) * lp + static_cast<long double>(nt - k) * lq;
        g.w[static_cast<std::size_t>(k)] = expl(lw);
    }
    return g;
}

}  // namespace oracle_detail

// Exact P(sum of block densities > t), strict inequality, for n0 blocks under
// measure m0 plus n1 blocks under measure m1. Mass at -inf never crosses.
// Guarded to double-sum sizes only; this is a test oracle, not an engine.
inline double exact_two_group_ccdf(const ChannelParams& cp, int n0, int n1, BlockMeasure m0,
                                   BlockMeasure m1, double t) {
    cp.validate();
    if (n0 < 0 || n1 < 0) throw std::domain_error("exact_two_group_ccdf: negative count");
    long long c0 = static_cast<long long>(n0) * cp.T + 1;
    long long c1 = static_cast<long long>(n1) * cp.T + 1;
    if (c0 * c1 > 10'000'000LL)
        throw std::domain_error("exact_two_group_ccdf: size guard exceeded");
    oracle_detail::Group g0 = oracle_detail::make_group(cp, n0, m0);
    oracle_detail::Group g1 = oracle_detail::make_group(cp, n1, m1);
    long double acc = 0.0L;
    for (std::size_t k0 = 0; k0 < g0.w.size(); ++k0) {
        double v0 = g0.base - static_cast<double>(k0) * g0.spacing;
        for (std::size_t k1 = 0; k1 < g1.w.size(); ++k1) {
            double v = v0 + (g1.base - static_cast<double>(k1) * g1.spacing);
            if (v > t) acc += g0.w[k0] * g1.w[k1];
        }
    }
    return static_cast<double>(acc);
}

}  // namespace blockfade
