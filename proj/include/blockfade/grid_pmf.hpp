#pragma once

// Grid-quantized distributions of accumulated information density.
//
// A GridPmf stores probability mass on the uniform grid value(j) = origin +
// j*step. Atoms are placed with a mean-preserving two-bin split, so one
// placement moves mass by less than one step; `slack` records the worst-case
// accumulated displacement. Tail queries widen the threshold by slack in the
// direction that can only loosen the result (Rounding::pessimistic) or only
// tighten it (Rounding::optimistic); the two roundings bracket the exact
// value, differing by at most the mass within slack of the threshold.
//
// Bookkeeping buckets besides the grid:
//  - truncated_mass: pruned mass whose location is no longer tracked; charged
//    to whichever side loosens the query at hand.
//  - never_cross_mass: mass at -infinity. A delta = 0 block under the
//    unconditioned output measure assigns positive probability to output
//    patterns impossible given the input, whose information density is -inf;
//    such mass can never exceed a finite threshold and counts as "below t"
//    under both roundings.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "blockfade/binomial.hpp"
#include "blockfade/channel.hpp"

namespace blockfade {

enum class Measure { conditioned, unconditioned };

struct BlockMeasure {
    int state = 0;                           // fading state, selects delta
    Measure measure = Measure::conditioned;  // output law the density is taken under
};

enum class Rounding { pessimistic, optimistic };

// Default grid resolution, nats per bin. Fine enough that near-threshold mass
// (the only quantization error surface) stays negligible for every shipped
// configuration; callers override it per call where they need more.
inline constexpr double default_step = 1e-4;

struct GridPmf {
    double origin = 0.0;  // value of bin 0, nats
    double step = 1.0;    // nats per bin
    std::vector<long double> mass;
    long double truncated_mass = 0.0L;
    long double never_cross_mass = 0.0L;
    double slack = 0.0;  // max displacement between true and binned value, nats

    double value(std::size_t j) const { return origin + step * static_cast<double>(j); }

    long double grid_mass() const {
        long double s = 0.0L;
        for (long double m : mass) s += m;
        return s;
    }
    long double total_mass() const { return grid_mass() + truncated_mass + never_cross_mass; }

    // mean of the tracked grid mass, conditional on it (excludes truncated and -inf buckets)
    double grid_mean() const {
        long double s = 0.0L, m = 0.0L;
        for (std::size_t j = 0; j < mass.size(); ++j) {
            s += mass[j] * static_cast<long double>(value(j));
            m += mass[j];
        }
        return m > 0.0L ? static_cast<double>(s / m) : 0.0;
    }
};

namespace detail {

// Mean-preserving two-bin split of weight w at value v. The grid must already
// cover v: 0 <= (v - origin)/step <= size - 1.
inline void deposit(GridPmf& p, double v, long double w) {
    if (w <= 0.0L) return;
    double x = (v - p.origin) / p.step;
    if (x < 0.0) x = 0.0;
    double fl = std::floor(x);
    std::size_t j = static_cast<std::size_t>(fl);
    if (j >= p.mass.size() - 1) {
        p.mass.back() += w;  // v at or beyond last bin (within caller-sized margin)
        return;
    }
    long double f = static_cast<long double>(x - fl);
    p.mass[j] += w * (1.0L - f);
    p.mass[j + 1] += w * f;
}

}  // namespace detail

inline GridPmf point_mass(double v, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("point_mass: step <= 0");
    GridPmf p;
    p.origin = v;
    p.step = step;
    p.mass.assign(1, 1.0L);
    p.slack = 0.0;
    return p;
}

// Distribution of the per-block information density for T uses in one state.
// With equiprobable inputs the density is v(k) = T ln2 + k ln(delta) +
// (T-k) ln(1-delta), where k is the number of positions where the output
// disagrees with the input; k ~ Binomial(T, delta) under the conditioned
// output measure and k ~ Binomial(T, 1/2) under the unconditioned one.
//
// tail_tol > 0 drops lowest-weight atoms from the support edges while the
// total dropped mass stays below tail_tol; dropped mass goes to
// truncated_mass. delta = 0 under the unconditioned measure places all k > 0
// mass (density -inf) into never_cross_mass.
inline GridPmf block_info_pmf(const ChannelParams& cp, BlockMeasure bm, double step,
                              double tail_tol = 0.0) {
    cp.validate();
    if (!(step > 0.0)) throw std::invalid_argument("block_info_pmf: step <= 0");
    double d = cp.delta(bm.state);
    int T = cp.T;
    double kp = bm.measure == Measure::conditioned ? d : 0.5;

    if (d == 0.0) {
        // conditioned: k = 0 surely; unconditioned: k > 0 has density -inf
        GridPmf p = point_mass(static_cast<double>(T) * ln2, step);
        if (bm.measure == Measure::unconditioned) {
            long double at0 = expl(-static_cast<long double>(T) * static_cast<long double>(ln2));
            p.mass[0] = at0;
            p.never_cross_mass = 1.0L - at0;
        }
        p.slack = step;
        return p;
    }

    std::vector<long double> w = detail::binomial_pmf(T, kp);
    int lo = 0, hi = T;
    long double dropped = 0.0L;
    if (tail_tol > 0.0) {
        while (lo < hi) {
            long double edge = std::min(w[static_cast<std::size_t>(lo)],
                                        w[static_cast<std::size_t>(hi)]);
            if (!(dropped + edge < static_cast<long double>(tail_tol))) break;
            dropped += edge;
            if (w[static_cast<std::size_t>(lo)] <= w[static_cast<std::size_t>(hi)]) ++lo;
            else --hi;
        }
    }

    // v(k) is decreasing in k for d < 0.5 and constant at d = 0.5
    auto vk = [&](int k) {
        return static_cast<double>(T) * ln2 + static_cast<double>(k) * std::log(d) +
               static_cast<double>(T - k) * std::log1p(-d);
    };
    double vmin = vk(hi), vmax = vk(lo);
    if (vmin > vmax) std::swap(vmin, vmax);

    GridPmf p;
    p.origin = vmin;
    p.step = step;
    p.mass.assign(static_cast<std::size_t>(std::floor((vmax - vmin) / step)) + 2, 0.0L);
    for (int k = lo; k <= hi; ++k) detail::deposit(p, vk(k), w[static_cast<std::size_t>(k)]);
    p.truncated_mass = dropped;
    p.slack = step;
    return p;
}

// Distribution of the independent sum. Exact on the shared grid: origins add,
// slacks add, bins convolve. Mass that is -inf in either summand stays -inf;
// products involving truncated mass stay truncated. The truncated bucket is
// closed by total-mass accounting, absorbing float drift.
inline GridPmf convolve(const GridPmf& a, const GridPmf& b) {
    if (a.step != b.step) throw std::invalid_argument("convolve: mismatched steps");
    GridPmf out;
    out.origin = a.origin + b.origin;
    out.step = a.step;
    out.slack = a.slack + b.slack;
    out.mass.assign(a.mass.size() + b.mass.size() - 1, 0.0L);

    // iterate the sparser operand in the outer loop
    auto nnz = [](const GridPmf& p) {
        std::size_t c = 0;
        for (long double m : p.mass) c += (m != 0.0L);
        return c;
    };
    const GridPmf& ker = nnz(a) <= nnz(b) ? a : b;
    const GridPmf& sig = nnz(a) <= nnz(b) ? b : a;
    for (std::size_t i = 0; i < ker.mass.size(); ++i) {
        long double ki = ker.mass[i];
        if (ki == 0.0L) continue;
        for (std::size_t j = 0; j < sig.mass.size(); ++j) {
            out.mass[i + j] += ki * sig.mass[j];
        }
    }

    long double ta = a.total_mass(), tb = b.total_mass();
    out.never_cross_mass = a.never_cross_mass * tb + b.never_cross_mass * ta -
                           a.never_cross_mass * b.never_cross_mass;
    long double trunc = ta * tb - out.grid_mass() - out.never_cross_mass;
    out.truncated_mass = trunc > 0.0L ? trunc : 0.0L;
    return out;
}

// convolve with the inner accumulation in double. Grid semantics are
// identical; cell masses differ from convolve by double rounding, around
// 1e-16 relative, while the step-induced slack that the crossing rules
// already absorb is larger by many orders of magnitude. Meant for search
// layers that run thousands of convolutions per evaluated design.
inline GridPmf convolve_fast(const GridPmf& a, const GridPmf& b) {
    if (a.step != b.step) throw std::invalid_argument("convolve: mismatched steps");
    GridPmf out;
    out.origin = a.origin + b.origin;
    out.step = a.step;
    out.slack = a.slack + b.slack;

    auto nnz = [](const GridPmf& p) {
        std::size_t c = 0;
        for (long double m : p.mass) c += (m != 0.0L);
        return c;
    };
    const GridPmf& ker = nnz(a) <= nnz(b) ? a : b;
    const GridPmf& sig = nnz(a) <= nnz(b) ? b : a;
    std::vector<double> sd(sig.mass.begin(), sig.mass.end());
    std::vector<double> acc(a.mass.size() + b.mass.size() - 1, 0.0);
    for (std::size_t i = 0; i < ker.mass.size(); ++i) {
        double ki = static_cast<double>(ker.mass[i]);
        if (ki == 0.0) continue;
        double* o = acc.data() + i;
        for (std::size_t j = 0; j < sd.size(); ++j) o[j] += ki * sd[j];
    }
    out.mass.assign(acc.begin(), acc.end());

    long double ta = a.total_mass(), tb = b.total_mass();
    out.never_cross_mass = a.never_cross_mass * tb + b.never_cross_mass * ta -
                           a.never_cross_mass * b.never_cross_mass;
    long double trunc = ta * tb - out.grid_mass() - out.never_cross_mass;
    out.truncated_mass = trunc > 0.0L ? trunc : 0.0L;
    return out;
}

// Weighted mixture on a shared step. Components may have incommensurate
// origins; bins are re-deposited with the two-bin split, so the result's
// slack is max(component slack) + step.
inline GridPmf mix(const std::vector<std::pair<double, GridPmf>>& parts) {
    if (parts.empty()) throw std::invalid_argument("mix: empty");
    double step = parts.front().second.step;
    double vmin = 1e300, vmax = -1e300, slack_in = 0.0;
    for (const auto& [w, p] : parts) {
        if (p.step != step) throw std::invalid_argument("mix: mismatched steps");
        if (w < 0.0) throw std::invalid_argument("mix: negative weight");
        if (!p.mass.empty()) {
            vmin = std::min(vmin, p.value(0));
            vmax = std::max(vmax, p.value(p.mass.size() - 1));
        }
        slack_in = std::max(slack_in, p.slack);
    }
    GridPmf out;
    out.origin = vmin;
    out.step = step;
    out.slack = slack_in + step;
    out.mass.assign(static_cast<std::size_t>(std::floor((vmax - vmin) / step)) + 2, 0.0L);
    for (const auto& [w, p] : parts) {
        long double lw = static_cast<long double>(w);
        for (std::size_t j = 0; j < p.mass.size(); ++j) {
            if (p.mass[j] != 0.0L) detail::deposit(out, p.value(j), lw * p.mass[j]);
        }
        out.truncated_mass += lw * p.truncated_mass;
        out.never_cross_mass += lw * p.never_cross_mass;
    }
    return out;
}

// Shift by a constant: exact (origin moves, bins and slack untouched).
inline GridPmf shift(GridPmf p, double delta) {
    p.origin += delta;
    return p;
}

// P(X > t). Pessimistic overstates (counts bins within slack of t as above,
// plus truncated mass); optimistic understates (counts only bins clear of t
// by slack, no truncated mass). -inf mass is below any finite t on both.
inline long double ccdf(const GridPmf& p, double t, Rounding r) {
    double thr = r == Rounding::pessimistic ? t - p.slack : t + p.slack;
    long double s = r == Rounding::pessimistic ? p.truncated_mass : 0.0L;
    // first index with value(j) > thr
    double x = (thr - p.origin) / p.step;
    std::ptrdiff_t j0 = x < 0.0 ? 0 : static_cast<std::ptrdiff_t>(std::floor(x)) + 1;
    for (std::size_t j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(j0, 0));
         j < p.mass.size(); ++j)
        s += p.mass[j];
    return s;
}

// P(X <= t) with the same loosening convention: pessimistic overstates
// (bins within slack of t count as below, truncated and -inf mass included);
// optimistic understates. cdf(t, r) + ccdf(t, opposite r) = total mass.
inline long double cdf(const GridPmf& p, double t, Rounding r) {
    double thr = r == Rounding::pessimistic ? t + p.slack : t - p.slack;
    long double s = p.never_cross_mass + (r == Rounding::pessimistic ? p.truncated_mass : 0.0L);
    double x = (thr - p.origin) / p.step;
    std::ptrdiff_t jend = x < 0.0 ? 0 : static_cast<std::ptrdiff_t>(std::floor(x)) + 1;
    std::size_t end = std::min(p.mass.size(), static_cast<std::size_t>(std::max<std::ptrdiff_t>(jend, 0)));
    for (std::size_t j = 0; j < end; ++j) s += p.mass[j];
    return s;
}

// Table of h(t) = E[exp(-max(0, X - t))] = P(X <= t) + e^t E[e^{-X} 1{X > t}],
// evaluated against the quantized support. Exact at any real t given the
// binned atoms: h rises from (buckets + e^t E[e^{-X}]) below the support to
// total mass above it. Truncated mass is counted at weight 1 (its clip factor
// is at most 1), which can only loosen an achievability bound built from h.
// e^{-x} underflows to 0 for huge x, which only drops provably negligible
// contributions.
struct ClippedExpTable {
    double origin = 0.0;
    double step = 1.0;
    std::vector<long double> cum_mass;     // cum_mass[j]  = sum_{i<=j} mass[i]
    std::vector<long double> tail_expneg;  // tail_expneg[j] = sum_{i>=j} mass[i] e^{-value(i)}
    long double buckets = 0.0L;            // truncated + never-cross, clip weight 1
    long double total = 1.0L;

    double value(std::size_t j) const { return origin + step * static_cast<double>(j); }

    long double eval(double t) const {
        double x = (t - origin) / step;
        std::ptrdiff_t j = x < 0.0 ? -1 : static_cast<std::ptrdiff_t>(std::floor(x));
        std::ptrdiff_t n = static_cast<std::ptrdiff_t>(cum_mass.size());
        if (j >= n - 1) return total;
        long double below = j < 0 ? 0.0L : cum_mass[static_cast<std::size_t>(j)];
        long double tail = tail_expneg[static_cast<std::size_t>(j + 1)];
        long double h = below + buckets + expl(static_cast<long double>(t)) * tail;
        return h < total ? h : total;
    }

    // h sampled at the grid points of the source pmf
    std::vector<long double> sampled() const {
        std::vector<long double> h(cum_mass.size());
        for (std::size_t j = 0; j < h.size(); ++j) h[j] = eval(value(j));
        return h;
    }
};

inline ClippedExpTable clipped_exp_functional(const GridPmf& p) {
    ClippedExpTable t;
    t.origin = p.origin;
    t.step = p.step;
    t.buckets = p.truncated_mass + p.never_cross_mass;
    t.total = p.total_mass();
    std::size_t n = p.mass.size();
    t.cum_mass.assign(n, 0.0L);
    t.tail_expneg.assign(n, 0.0L);
    long double c = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
        c += p.mass[j];
        t.cum_mass[j] = c;
    }
    long double s = 0.0L;
    for (std::size_t j = n; j-- > 0;) {
        // accumulate from the largest value down: smallest e^{-x} terms first
        s += p.mass[j] * expl(-static_cast<long double>(p.value(j)));
        t.tail_expneg[j] = s;
    }
    return t;
}

// First bin index that counts as crossing `level`: the smallest j whose value
// is at least level even under worst-case placement (value - slack >= level).
inline std::size_t crossing_index(const GridPmf& p, double level) {
    double x = (level + p.slack - p.origin) / p.step;
    std::size_t j0 = x <= 0.0 ? 0
                              : std::min(p.mass.size(),
                                         static_cast<std::size_t>(std::ceil(std::min(
                                             x, static_cast<double>(p.mass.size())))));
    while (j0 > 0 && p.value(j0 - 1) - p.slack >= level) --j0;
    while (j0 < p.mass.size() && p.value(j0) - p.slack < level) ++j0;
    return j0;
}

// Mass that counts as having reached `level` under the conservative crossing
// rule above. Shared by the hitting-time engine and the stop-probability
// solvers so that both classify borderline bins identically.
inline long double crossing_mass(const GridPmf& p, double level) {
    long double s = 0.0L;
    for (std::size_t j = crossing_index(p, level); j < p.mass.size(); ++j) s += p.mass[j];
    return s;
}

// Running-sum threshold crossing. Block k's distribution is convolved in,
// then every bin whose value is at least levels[k-1] even under worst-case
// placement (value - slack >= level) is absorbed into stop_prob[k]. The
// conservative direction is to understate crossing: borderline mass stays in
// the residual and stops later, which can only lengthen the computed stopping
// time and, for the nondecreasing per-slot error weights used by the stop
// feedback schemes, only increase the certified error.
struct FirstPassageResult {
    std::vector<long double> stop_prob;  // stop_prob[k] = P(stop at block k), index 0 unused
    std::vector<GridPmf> residual;       // residual[k] = running sum among paths alive after block k
    double expected_stop = 0.0;          // tail charged at the horizon
    long double tail_prob = 0.0L;        // not stopped within len(blocks) blocks
};

inline FirstPassageResult first_passage(const std::vector<GridPmf>& blocks,
                                        const std::vector<double>& levels,
                                        const GridPmf* start = nullptr,
                                        double prune_tol = 1e-13,
                                        GridPmf (*conv)(const GridPmf&, const GridPmf&) = &convolve) {
    if (blocks.empty()) throw std::invalid_argument("first_passage: no blocks");
    if (levels.size() < blocks.size())
        throw std::invalid_argument("first_passage: fewer levels than blocks");
    std::size_t K = blocks.size();
    FirstPassageResult r;
    r.stop_prob.assign(K + 1, 0.0L);
    r.residual.resize(K + 1);
    GridPmf run = start ? *start : point_mass(0.0, blocks.front().step);
    r.residual[0] = run;
    for (std::size_t k = 1; k <= K; ++k) {
        run = conv(run, blocks[k - 1]);
        std::size_t j0 = crossing_index(run, levels[k - 1]);
        long double absorbed = 0.0L;
        for (std::size_t j = j0; j < run.mass.size(); ++j) absorbed += run.mass[j];
        r.stop_prob[k] = absorbed;
        run.mass.resize(j0);

        // prune the left tail: alive mass there is provably <= prune_tol of total
        long double alive = run.grid_mass();
        if (prune_tol > 0.0 && alive > 0.0L) {
            long double budget = alive * static_cast<long double>(prune_tol);
            long double cut = 0.0L;
            std::size_t drop = 0;
            while (drop < run.mass.size() && cut + run.mass[drop] < budget)
                cut += run.mass[drop++];
            if (drop > 0) {
                run.truncated_mass += cut;
                run.origin += static_cast<double>(drop) * run.step;
                run.mass.erase(run.mass.begin(),
                               run.mass.begin() + static_cast<std::ptrdiff_t>(drop));
            }
        }
        if (run.mass.empty()) run.mass.assign(1, 0.0L);
        r.residual[k] = run;
    }
    long double stopped = 0.0L;
    for (long double s : r.stop_prob) stopped += s;
    r.tail_prob = run.total_mass();
    // keep the partition exact: tail is everything that did not stop
    long double want = (start ? start->total_mass() : 1.0L) - stopped;
    r.tail_prob = want > 0.0L ? want : 0.0L;
    double e = 0.0;
    for (std::size_t k = 1; k <= K; ++k)
        e += static_cast<double>(k) * static_cast<double>(r.stop_prob[k]);
    e += static_cast<double>(K) * static_cast<double>(r.tail_prob);
    r.expected_stop = e;
    return r;
}

// Debug dump, one "bin_value,mass" row per nonzero bin.
inline void dump_csv(const GridPmf& p, std::ostream& os) {
    os << "bin_value,mass\n";
    for (std::size_t j = 0; j < p.mass.size(); ++j) {
        if (p.mass[j] != 0.0L)
            os << p.value(j) << ',' << static_cast<double>(p.mass[j]) << '\n';
    }
}

}  // namespace blockfade
