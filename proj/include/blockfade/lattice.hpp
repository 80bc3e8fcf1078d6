#pragma once

// Exact-atom engine for sums of block information densities.
//
// Every block contributes T(ln2 + ln(1-delta_s)) minus (disagreement count) *
// a_s, where a_s = ln((1-delta_s)/delta_s) depends only on the block's state,
// not on the output measure. So an arbitrary mix of conditioned and
// unconditioned blocks collapses onto a two-axis lattice: value =
// c_const - k0*a_0 - k1*a_1, with k_s the pooled disagreement count over all
// state-s blocks. Per axis the count distribution is
// Binomial(n_cond*T, delta_s) convolved with Binomial(n_unc*T, 1/2).
//
// Axis pmfs are cached by (T, delta, n_cond, n_unc, tail_tol); tail queries
// run in O(len0 * log len1). Atom classification against a threshold is
// strict (>), evaluated on the double-precision atom values.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "blockfade/binomial.hpp"
#include "blockfade/grid_pmf.hpp"

namespace blockfade {

struct AxisPmf {
    // double storage: atom weights live comfortably inside double range, and
    // long sweeps cache hundreds of long axes; sums are accumulated in long
    // double before being stored
    std::vector<double> pmf;   // weight of count kmin + i
    std::vector<double> cum;   // cum[i] = sum of pmf[0..i]
    int kmin = 0;
    long double never_cross = 0.0L;  // P(count pattern forces density -inf)
    long double truncated = 0.0L;    // edge mass dropped by tail_tol
    long double sum = 1.0L;          // total of pmf
};

namespace detail {

inline std::shared_ptr<const AxisPmf> build_axis(int T, double delta, int n_cond, int n_unc,
                                                 double tail_tol) {
    auto ax = std::make_shared<AxisPmf>();
    if (delta == 0.0) {
        // conditioned blocks force count 0; unconditioned ones land there w.p. 2^-T each
        long double p0 = n_unc > 0
                             ? expl(-static_cast<long double>(n_unc) * T * static_cast<long double>(ln2))
                             : 1.0L;
        ax->pmf.assign(1, static_cast<double>(p0));
        ax->never_cross = 1.0L - p0;
    } else {
        std::vector<long double> pc = binomial_pmf(n_cond * T, delta);
        std::vector<long double> acc;
        if (n_unc > 0) {
            std::vector<long double> pu = binomial_pmf(n_unc * T, 0.5);
            acc.assign(pc.size() + pu.size() - 1, 0.0L);
            for (std::size_t i = 0; i < pc.size(); ++i) {
                if (pc[i] == 0.0L) continue;
                for (std::size_t j = 0; j < pu.size(); ++j) acc[i + j] += pc[i] * pu[j];
            }
        } else {
            acc = std::move(pc);
        }
        ax->pmf.assign(acc.begin(), acc.end());
        if (tail_tol > 0.0 && ax->pmf.size() > 1) {
            std::size_t lo = 0, hi = ax->pmf.size() - 1;
            long double dropped = 0.0L;
            while (lo < hi) {
                long double edge = std::min(ax->pmf[lo], ax->pmf[hi]);
                if (!(dropped + edge < static_cast<long double>(tail_tol))) break;
                dropped += edge;
                if (ax->pmf[lo] <= ax->pmf[hi]) ++lo;
                else --hi;
            }
            if (lo > 0 || hi < ax->pmf.size() - 1) {
                std::vector<double> cut(ax->pmf.begin() + static_cast<std::ptrdiff_t>(lo),
                                        ax->pmf.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
                ax->pmf = std::move(cut);
                ax->kmin = static_cast<int>(lo);
                ax->truncated = dropped;
            }
        }
    }
    ax->cum.resize(ax->pmf.size());
    long double c = 0.0L;
    for (std::size_t i = 0; i < ax->pmf.size(); ++i) {
        c += static_cast<long double>(ax->pmf[i]);
        ax->cum[i] = static_cast<double>(c);
    }
    ax->sum = c;
    return ax;
}

}  // namespace detail

// Cached axis lookup. The cache only memoizes pure builds, so hits and misses
// produce identical values; guarded by a mutex for parallel sweeps.
inline std::shared_ptr<const AxisPmf> pooled_axis_pmf(int T, double delta, int n_cond, int n_unc,
                                                      double tail_tol) {
    using Key = std::tuple<int, double, int, int, double>;
    static std::map<Key, std::shared_ptr<const AxisPmf>> cache;
    static std::mutex mu;
    Key k{T, delta, n_cond, n_unc, tail_tol};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(k);
        if (it != cache.end()) return it->second;
    }
    auto ax = detail::build_axis(T, delta, n_cond, n_unc, tail_tol);
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(k, std::move(ax)).first->second;
}

struct LatticeDist {
    double c_const = 0.0;  // sum over blocks of T(ln2 + ln(1-delta_state))
    double a[2] = {0.0, 0.0};
    std::shared_ptr<const AxisPmf> axis[2];
    long double never_cross = 0.0L;
    long double truncated = 0.0L;

    double atom_value(long k0, long k1) const {
        return c_const - static_cast<double>(k0) * a[0] - static_cast<double>(k1) * a[1];
    }

    // P(value > t) over tracked finite atoms, strict
    long double ccdf_raw(double t) const {
        const AxisPmf& a0 = *axis[0];
        const AxisPmf& a1 = *axis[1];
        long double acc = 0.0L;
        for (std::size_t i0 = 0; i0 < a0.pmf.size(); ++i0) {
            long k0 = a0.kmin + static_cast<long>(i0);
            if (!(atom_value(k0, a1.kmin) > t)) {
                if (a[0] > 0.0) break;  // value decreases in k0; later rows only smaller
                continue;  // spacing 0: every row identical, none qualifies
            }
            // count of i1 with atom_value(k0, kmin1 + i1) > t; monotone in i1
            std::size_t lo = 0, hi = a1.pmf.size();
            while (lo < hi) {
                std::size_t mid = lo + (hi - lo) / 2;
                if (atom_value(k0, a1.kmin + static_cast<long>(mid)) > t) lo = mid + 1;
                else hi = mid;
            }
            if (lo > 0)
                acc += static_cast<long double>(a0.pmf[i0]) *
                       static_cast<long double>(a1.cum[lo - 1]);
        }
        return acc;
    }

    // P(value <= t) over tracked mass, -inf bucket included
    long double cdf_tracked(double t) const {
        return axis[0]->sum * axis[1]->sum - ccdf_raw(t) + never_cross;
    }
};

// Pool a block sequence into the two-axis lattice form. tail_tol drops
// per-axis edge mass into `truncated`, which the caller charges to the
// loosening side of whatever bound it is evaluating.
inline LatticeDist make_lattice(const ChannelParams& cp, const std::vector<BlockMeasure>& blocks,
                                double tail_tol = 0.0) {
    cp.validate();
    int nc[2] = {0, 0}, nu[2] = {0, 0};
    double c = 0.0;
    for (const BlockMeasure& b : blocks) {
        if (b.state != 0 && b.state != 1) throw std::domain_error("make_lattice: bad state");
        (b.measure == Measure::conditioned ? nc : nu)[b.state] += 1;
        c += static_cast<double>(cp.T) * (ln2 + std::log1p(-cp.delta(b.state)));
    }
    LatticeDist d;
    d.c_const = c;
    for (int s = 0; s < 2; ++s) {
        double ds = cp.delta(s);
        d.a[s] = ds == 0.0 || ds == 0.5 ? 0.0 : std::log((1.0 - ds) / ds);
        d.axis[s] = pooled_axis_pmf(cp.T, ds, nc[s], nu[s], tail_tol);
    }
    long double fin0 = 1.0L - d.axis[0]->never_cross, fin1 = 1.0L - d.axis[1]->never_cross;
    d.never_cross = 1.0L - fin0 * fin1;
    long double tracked = d.axis[0]->sum * d.axis[1]->sum;
    d.truncated = fin0 * fin1 - tracked;
    if (d.truncated < 0.0L) d.truncated = 0.0L;
    return d;
}

// Flattened atom list sorted by value, with the prefix/suffix sums needed by
// the measure-change form of the union bound: F(t) = P(V <= t) and
// G(t) = E[e^{-V} 1{V > t}]. -inf atoms always belong to F and never to G.
struct FlattenedDist {
    std::vector<double> v;            // ascending
    std::vector<long double> cum_p;   // cum_p[i] = P(V <= v[i]) among finite atoms
    std::vector<long double> tail_pe; // tail_pe[i] = sum_{j>=i} p_j e^{-v_j}
    std::vector<long double> p;       // atom weights, aligned with v
    long double never_cross = 0.0L;
    long double truncated = 0.0L;

    // P(V <= t), -inf mass included, truncated mass excluded
    long double cdf(double t) const {
        std::size_t i = static_cast<std::size_t>(
            std::upper_bound(v.begin(), v.end(), t) - v.begin());
        return (i > 0 ? cum_p[i - 1] : 0.0L) + never_cross;
    }
    // sum of p e^{-v} over finite atoms with v > t
    long double tail_exp_neg(double t) const {
        std::size_t i = static_cast<std::size_t>(
            std::upper_bound(v.begin(), v.end(), t) - v.begin());
        return i < tail_pe.size() ? tail_pe[i] : 0.0L;
    }
};

inline FlattenedDist flatten(const LatticeDist& d) {
    const AxisPmf& a0 = *d.axis[0];
    const AxisPmf& a1 = *d.axis[1];
    FlattenedDist f;
    f.never_cross = d.never_cross;
    f.truncated = d.truncated;
    std::vector<std::pair<double, long double>> atoms;
    atoms.reserve(a0.pmf.size() * a1.pmf.size());
    for (std::size_t i0 = 0; i0 < a0.pmf.size(); ++i0) {
        if (a0.pmf[i0] == 0.0) continue;
        for (std::size_t i1 = 0; i1 < a1.pmf.size(); ++i1) {
            if (a1.pmf[i1] == 0.0) continue;
            atoms.emplace_back(d.atom_value(a0.kmin + static_cast<long>(i0),
                                            a1.kmin + static_cast<long>(i1)),
                               static_cast<long double>(a0.pmf[i0]) *
                                   static_cast<long double>(a1.pmf[i1]));
        }
    }
    std::sort(atoms.begin(), atoms.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    std::size_t n = atoms.size();
    f.v.resize(n);
    f.p.resize(n);
    f.cum_p.resize(n);
    f.tail_pe.resize(n);
    long double c = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        f.v[i] = atoms[i].first;
        f.p[i] = atoms[i].second;
        c += atoms[i].second;
        f.cum_p[i] = c;
    }
    long double s = 0.0L;
    for (std::size_t i = n; i-- > 0;) {
        // largest values first: smallest e^{-v} contributions accumulate first
        s += f.p[i] * expl(-static_cast<long double>(f.v[i]));
        f.tail_pe[i] = s;
    }
    return f;
}

}  // namespace blockfade
