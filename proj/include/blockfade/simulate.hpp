#pragma once

// Monte Carlo ground truth for the analytic error bounds: build actual random
// tree codebooks, push them through the two-state channel, decode, and report
// empirical error rates with confidence intervals next to the matching bound.
//
// Every random quantity is a pure function of (seed, role, counter) via the
// keyed streams in rng.hpp, so a run is bit-for-bit reproducible at any thread
// count. Within one trial the roles are: id 0 the transmitted message, id 1
// the codebook draw, id 1+n the noise of block n.
//
// Desk-scale guards (T <= 32, total codewords <= 2^16, trials <= 1e7) keep the
// exhaustive tuple tracking of the stop-feedback decoder affordable; they are
// hard errors, not clamps.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "blockfade/bounds.hpp"
#include "blockfade/rng.hpp"

namespace blockfade {

namespace detail {

inline void check_sim_dims(int T, const std::vector<int>& M) {
    if (T < 1 || T > 32) throw std::domain_error("simulate: T outside [1, 32]");
    if (M.empty()) throw std::domain_error("simulate: empty cardinality vector");
    long long total = 1;
    for (int m : M) {
        if (m < 1) throw std::domain_error("simulate: cardinality below 1");
        total *= m;
        if (total > (1LL << 16))
            throw std::domain_error("simulate: total codewords above 2^16");
    }
}

inline std::uint64_t block_mask(int T) { return (1ULL << T) - 1; }

// Stream key of one codebook node: level is the 1-based block index, node the
// 0-based prefix index (full-tuple index for extension levels). Level in the
// high half keeps keys distinct across levels of any realizable size.
inline std::uint64_t node_key(std::uint64_t seed, int level, int node) {
    return derive_stream(seed, (static_cast<std::uint64_t>(level) << 32) |
                                   static_cast<std::uint64_t>(node + 1));
}

// Lexicographic "tuple(a) < tuple(b)" on the first `len` components of two
// flattened indices. Component l sits in radix digit l (lowest digit first),
// so the scan order below is most-significant-component first.
inline bool tuple_lex_less(int a, int b, const std::vector<int>& M, int len) {
    for (int l = 0; l < len; ++l) {
        const int da = a % M[l], db = b % M[l];
        if (da != db) return da < db;
        a /= M[l];
        b /= M[l];
    }
    return false;
}

}  // namespace detail

// Random tree codebook: level n stores one T-bit block per message prefix
// (j_1..j_n), flattened with j_1 in the lowest radix digit. Blocks are iid
// equiprobable bits keyed by (seed, level, prefix), so equal seeds rebuild
// identical codebooks and a block never depends on later components.
struct TreeCodebook {
    int T = 0;
    std::vector<int> M;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::uint64_t>> blocks;  // blocks[n-1][prefix index]

    int levels() const { return static_cast<int>(M.size()); }
    int total_codewords() const {
        return blocks.empty() ? 0 : static_cast<int>(blocks.back().size());
    }

    // Block sent in slot `level` (1-based) by the codeword with 0-based
    // flattened index j0. Levels past the stored tree extend each codeword
    // with fresh bits keyed by the full index: prefixes keep sharing their
    // common blocks, completed codewords diverge.
    std::uint64_t block_at(int level, int j0) const {
        if (level < 1) throw std::domain_error("block_at: level below 1");
        if (j0 < 0 || j0 >= total_codewords())
            throw std::domain_error("block_at: codeword index out of range");
        if (level <= levels()) {
            const auto& row = blocks[static_cast<std::size_t>(level) - 1];
            return row[static_cast<std::size_t>(j0) % row.size()];
        }
        return splitmix64_at(detail::node_key(seed, level, j0), 0) &
               detail::block_mask(T);
    }
};

inline TreeCodebook gen_tree_codebook(std::uint64_t seed, int T,
                                      const std::vector<int>& M) {
    detail::check_sim_dims(T, M);
    TreeCodebook cb;
    cb.T = T;
    cb.M = M;
    cb.seed = seed;
    cb.blocks.resize(M.size());
    std::size_t width = 1;
    for (std::size_t n = 0; n < M.size(); ++n) {
        width *= static_cast<std::size_t>(M[n]);
        cb.blocks[n].resize(width);
        for (std::size_t p = 0; p < width; ++p)
            cb.blocks[n][p] =
                splitmix64_at(detail::node_key(seed, static_cast<int>(n) + 1,
                                               static_cast<int>(p)),
                              0) &
                detail::block_mask(T);
    }
    return cb;
}

// Flattened codeword index: j = 1 + sum_n (j_n - 1) * prod_{l<n} M_l, i.e.
// j_1 varies fastest. Bijection between component tuples and {1..prod M_n}.
inline int codeword_index(const std::vector<int>& j, const std::vector<int>& M) {
    if (j.size() != M.size() || M.empty())
        throw std::domain_error("codeword_index: tuple/cardinality size mismatch");
    long long idx = 0, radix = 1;
    for (std::size_t n = 0; n < M.size(); ++n) {
        if (j[n] < 1 || j[n] > M[n])
            throw std::domain_error("codeword_index: component out of range");
        idx += static_cast<long long>(j[n] - 1) * radix;
        radix *= M[n];
    }
    return static_cast<int>(idx) + 1;
}

inline std::vector<int> codeword_tuple(int j_flat, const std::vector<int>& M) {
    if (M.empty()) throw std::domain_error("codeword_tuple: empty cardinality vector");
    long long total = 1;
    for (int m : M) total *= m;
    if (j_flat < 1 || j_flat > total)
        throw std::domain_error("codeword_tuple: index out of range");
    std::vector<int> j(M.size());
    int r = j_flat - 1;
    for (std::size_t n = 0; n < M.size(); ++n) {
        j[n] = r % M[n] + 1;
        r /= M[n];
    }
    return j;
}

// counts[n] = number of codewords with index below j_flat sharing exactly the
// first n blocks with it, n = 0..N-1. Closed form: with P_n the cardinality
// product of the first n levels, exactly floor((j-1)/P_n) smaller indices
// share at least n components (they are the ones congruent to j-1 mod P_n),
// and "exactly n" is the difference of consecutive at-least counts.
inline std::vector<long long> shared_prefix_counts(int j_flat,
                                                   const std::vector<int>& M) {
    if (M.empty())
        throw std::domain_error("shared_prefix_counts: empty cardinality vector");
    long long total = 1;
    for (int m : M) total *= m;
    if (j_flat < 1 || j_flat > total)
        throw std::domain_error("shared_prefix_counts: index out of range");
    const std::size_t N = M.size();
    std::vector<long long> at_least(N + 1);
    long long P = 1;
    for (std::size_t n = 0; n <= N; ++n) {
        at_least[n] = (j_flat - 1LL) / P;
        if (n < N) P *= M[n];
    }
    std::vector<long long> counts(N);
    for (std::size_t n = 0; n < N; ++n) counts[n] = at_least[n] - at_least[n + 1];
    return counts;
}

// One block through the channel in the given state: each use flips
// independently with probability delta(state), all noise drawn from `seed`.
inline std::uint64_t simulate_channel(std::uint64_t block, int state,
                                      const ChannelParams& cp, std::uint64_t seed) {
    cp.validate();
    if (cp.T > 32) throw std::domain_error("simulate: T outside [1, 32]");
    if (state != 0 && state != 1)
        throw std::domain_error("simulate: state must be 0 or 1");
    const double d = cp.delta(state);
    std::uint64_t flips = 0;
    for (int t = 0; t < cp.T; ++t)
        if (uniform01_at(seed, static_cast<std::uint64_t>(t)) < d) flips |= 1ULL << t;
    return (block ^ flips) & detail::block_mask(cp.T);
}

// Realized information density of a candidate block against a received block,
// in nats, with the receiver knowing the state: each agreeing use contributes
// ln(2(1-delta)), each disagreeing use ln(2*delta). delta = 0 puts impossible
// candidates at -infinity, which no finite threshold test ever accepts.
inline double block_info_density(std::uint64_t candidate, std::uint64_t received,
                                 const ChannelParams& cp, int state) {
    if (state != 0 && state != 1)
        throw std::domain_error("simulate: state must be 0 or 1");
    const double d = cp.delta(state);
    const int mism = std::popcount((candidate ^ received) & detail::block_mask(cp.T));
    double v = (cp.T - mism) * std::log(2.0 * (1.0 - d));
    if (mism > 0)
        v += d > 0.0 ? mism * std::log(2.0 * d)
                     : -std::numeric_limits<double>::infinity();
    return v;
}

// Threshold decoder with channel state at the receiver: scan codewords in
// flattened-index order and return the first whose accumulated density over
// all blocks exceeds gamma; no crossing means erasure (nullopt).
inline std::optional<int> feinstein_decode(const ChannelParams& cp,
                                           const std::vector<std::uint64_t>& y,
                                           const std::vector<int>& states,
                                           const TreeCodebook& cb, double gamma) {
    cp.validate();
    if (cp.T != cb.T) throw std::invalid_argument("feinstein_decode: T mismatch");
    const std::size_t N = static_cast<std::size_t>(cb.levels());
    if (y.size() != N || states.size() != N)
        throw std::invalid_argument("feinstein_decode: need one block and state per level");
    detail::check_states(states);

    // Tree structure shares prefix densities: cum[p] after level n is the
    // density of prefix p, extended one level per pass.
    std::vector<double> cum(1, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const auto& row = cb.blocks[n];
        std::vector<double> next(row.size());
        for (std::size_t p = 0; p < row.size(); ++p)
            next[p] = cum[p % cum.size()] +
                      block_info_density(row[p], y[n], cp, states[n]);
        cum.swap(next);
    }
    for (std::size_t p = 0; p < cum.size(); ++p)
        if (cum[p] > gamma) return static_cast<int>(p) + 1;
    return std::nullopt;
}

struct SfRunResult {
    int stop_block = 0;        // first slot whose level was reached; horizon if none
    bool crossed = false;      // false: ran out of horizon, counted as an error
    std::vector<int> decoded;  // lexicographic max among the slot's crossers
    bool correct = false;      // decoded equals the true prefix of that length
};

// One stop-feedback trial: the true message and all noise derive from
// trial_seed, the codebook is taken as given. At slot n the decoder tracks
// the accumulated density of every prefix of length min(n, N) and stops the
// first time any of them reaches levels[n-1] (cumulative thresholds); among
// the crossers it decodes the lexicographically largest tuple. Running past
// the horizon returns crossed = false, which callers count as an error.
inline SfRunResult emssf_decode_run(const ChannelParams& cp, const TreeCodebook& cb,
                                    const std::vector<double>& levels,
                                    const std::vector<int>& states,
                                    std::uint64_t trial_seed, int horizon) {
    cp.validate();
    if (cp.T != cb.T) throw std::invalid_argument("emssf_decode_run: T mismatch");
    if (horizon < 1) throw std::domain_error("emssf_decode_run: horizon below 1");
    if (levels.size() < static_cast<std::size_t>(horizon) ||
        states.size() < static_cast<std::size_t>(horizon))
        throw std::invalid_argument("emssf_decode_run: levels/states shorter than horizon");
    detail::check_states(states);

    const int N = cb.levels();
    const int total = cb.total_codewords();
    const int true_j0 = uniform_int_at(derive_stream(trial_seed, 0), 0, total) - 1;

    std::vector<double> S(1, 0.0);
    for (int n = 1; n <= horizon; ++n) {
        const int s = states[static_cast<std::size_t>(n) - 1];
        const std::uint64_t x = cb.block_at(n, true_j0);
        const std::uint64_t yn =
            simulate_channel(x, s, cp, derive_stream(trial_seed, 1 + static_cast<std::uint64_t>(n)));
        if (n <= N) {
            const auto& row = cb.blocks[static_cast<std::size_t>(n) - 1];
            std::vector<double> next(row.size());
            for (std::size_t p = 0; p < row.size(); ++p)
                next[p] = S[p % S.size()] + block_info_density(row[p], yn, cp, s);
            S.swap(next);
        } else {
            for (int p = 0; p < total; ++p)
                S[static_cast<std::size_t>(p)] +=
                    block_info_density(cb.block_at(n, p), yn, cp, s);
        }

        const double level = levels[static_cast<std::size_t>(n) - 1];
        const int len = std::min(n, N);
        int best = -1;
        for (int p = 0; p < static_cast<int>(S.size()); ++p)
            if (S[static_cast<std::size_t>(p)] >= level &&
                (best < 0 || detail::tuple_lex_less(best, p, cb.M, len)))
                best = p;
        if (best >= 0) {
            SfRunResult out;
            out.stop_block = n;
            out.crossed = true;
            out.decoded.resize(static_cast<std::size_t>(len));
            int rb = best, rt = true_j0;
            out.correct = true;
            for (int l = 0; l < len; ++l) {
                out.decoded[static_cast<std::size_t>(l)] = rb % cb.M[static_cast<std::size_t>(l)] + 1;
                if (rb % cb.M[static_cast<std::size_t>(l)] != rt % cb.M[static_cast<std::size_t>(l)])
                    out.correct = false;
                rb /= cb.M[static_cast<std::size_t>(l)];
                rt /= cb.M[static_cast<std::size_t>(l)];
            }
            return out;
        }
    }
    SfRunResult out;
    out.stop_block = horizon;
    return out;
}

struct BinomialCi {
    double low = 0.0;
    double high = 1.0;
};

// Equal-tailed Clopper-Pearson interval for k successes in n trials. The
// endpoints are beta quantiles; k = 0 and k = n pin the exact edge values.
inline BinomialCi clopper_pearson(long long k, long long n, double confidence = 0.95) {
    if (n < 1 || k < 0 || k > n)
        throw std::domain_error("clopper_pearson: need 0 <= k <= n, n >= 1");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::domain_error("clopper_pearson: confidence outside (0,1)");
    const double a = (1.0 - confidence) / 2.0;
    BinomialCi ci;
    ci.low = k == 0 ? 0.0
                    : boost::math::ibeta_inv(static_cast<double>(k),
                                             static_cast<double>(n - k + 1), a);
    ci.high = k == n ? 1.0
                     : boost::math::ibeta_inv(static_cast<double>(k + 1),
                                              static_cast<double>(n - k), 1.0 - a);
    return ci;
}

struct TrialReport {
    long long trials = 0;
    long long errors = 0;
    double error_rate = 0.0;
    double ci_low = 0.0;   // 95% Clopper-Pearson unless the runner says otherwise
    double ci_high = 0.0;
    double avg_stop_block = 0.0;  // fixed N for the threshold decoder
    double bound_value = 0.0;     // matching analytic bound, unclamped
};

namespace detail {

inline void check_trials(long long trials, int threads) {
    if (trials < 1 || trials > 10'000'000)
        throw std::domain_error("simulate: trials outside [1, 1e7]");
    if (threads < 1) throw std::domain_error("simulate: threads below 1");
}

// Sums fn(t) = (error?, stop_block) over t in [0, trials) across async jobs.
// Per-trial streams ignore the partitioning and the sums are integers, so the
// reduction is exact and identical for every thread count.
template <class Fn>
inline std::pair<long long, long long> sum_trials(long long trials, int threads, Fn fn) {
    const int jobs = static_cast<int>(std::min<long long>(threads, trials));
    const long long chunk = (trials + jobs - 1) / jobs;
    std::vector<std::future<std::pair<long long, long long>>> futs;
    futs.reserve(static_cast<std::size_t>(jobs));
    for (int w = 0; w < jobs; ++w) {
        const long long lo = w * chunk, hi = std::min(trials, lo + chunk);
        futs.push_back(std::async(std::launch::async, [lo, hi, &fn] {
            long long errors = 0, stops = 0;
            for (long long t = lo; t < hi; ++t) {
                const auto [err, stop] = fn(t);
                errors += err ? 1 : 0;
                stops += stop;
            }
            return std::make_pair(errors, stops);
        }));
    }
    long long errors = 0, stops = 0;
    for (auto& f : futs) {
        const auto [e, s] = f.get();
        errors += e;
        stops += s;
    }
    return {errors, stops};
}

inline TrialReport fill_report(long long trials, long long errors, long long stop_sum,
                               double bound_value) {
    TrialReport r;
    r.trials = trials;
    r.errors = errors;
    r.error_rate = static_cast<double>(errors) / static_cast<double>(trials);
    const BinomialCi ci = clopper_pearson(errors, trials);
    r.ci_low = ci.low;
    r.ci_high = ci.high;
    r.avg_stop_block = static_cast<double>(stop_sum) / static_cast<double>(trials);
    r.bound_value = bound_value;
    return r;
}

}  // namespace detail

// Ensemble error rate of the threshold decoder at the union threshold
// gamma = ln((total - 1) / 2): every trial draws a fresh codebook, a uniform
// message, and fresh noise, matching the codebook averaging in the analytic
// bound. Erasures and wrong indices both count as errors. bound_value is the
// exact-oracle additive bound for the same schedule and state sequence.
inline TrialReport run_feinstein_trials(const ChannelParams& cp, const std::vector<int>& M,
                                        const std::vector<int>& states, long long trials,
                                        std::uint64_t seed, int threads = 1) {
    cp.validate();
    detail::check_sim_dims(cp.T, M);
    detail::check_states(states);
    if (states.size() != M.size())
        throw std::invalid_argument("run_feinstein_trials: need one state per level");
    detail::check_trials(trials, threads);

    MessageSchedule sched;
    sched.M.assign(M.begin(), M.end());
    const double gamma = detail::union_threshold(sched.ln_m_total());
    const int N = static_cast<int>(M.size());

    const auto one_trial = [&](long long t) -> std::pair<bool, int> {
        const std::uint64_t ts = derive_stream(seed, static_cast<std::uint64_t>(t));
        const TreeCodebook cb = gen_tree_codebook(derive_stream(ts, 1), cp.T, M);
        const int total = cb.total_codewords();
        const int j0 = uniform_int_at(derive_stream(ts, 0), 0, total) - 1;
        std::vector<std::uint64_t> y(static_cast<std::size_t>(N));
        for (int n = 1; n <= N; ++n)
            y[static_cast<std::size_t>(n) - 1] = simulate_channel(
                cb.block_at(n, j0), states[static_cast<std::size_t>(n) - 1], cp,
                derive_stream(ts, 1 + static_cast<std::uint64_t>(n)));
        const std::optional<int> dec = feinstein_decode(cp, y, states, cb, gamma);
        return {!(dec.has_value() && *dec == j0 + 1), N};
    };
    const auto [errors, stop_sum] = detail::sum_trials(trials, threads, one_trial);
    const double bound = ems_bound_thm1(cp, states, sched).epsilon_bound;
    return detail::fill_report(trials, errors, stop_sum, bound);
}

// Ensemble error rate and mean stopping slot of the stop-feedback decoder.
// gamma holds per-slot threshold increments (at least states.size() of them);
// the decoder and the reported bound_value use identical cumulative levels,
// so the comparison exercises exactly the claimed inequality. Horizon
// exhaustion counts as an error, keeping the estimate conservative.
inline TrialReport run_emssf_trials(const ChannelParams& cp, const std::vector<int>& M,
                                    const std::vector<double>& gamma,
                                    const std::vector<int>& states, long long trials,
                                    std::uint64_t seed, int threads = 1,
                                    double bound_step = 5e-5) {
    cp.validate();
    detail::check_sim_dims(cp.T, M);
    detail::check_trials(trials, threads);

    MessageSchedule sched;
    sched.M.assign(M.begin(), M.end());
    sched.gamma = gamma;
    const StopFeedbackBound bound = emssf_bound_loosened(cp, states, sched, bound_step);

    const int horizon = static_cast<int>(states.size());
    std::vector<double> levels(states.size());
    double g = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k) {
        g += gamma[k];
        levels[k] = g;
    }

    const auto one_trial = [&](long long t) -> std::pair<bool, int> {
        const std::uint64_t ts = derive_stream(seed, static_cast<std::uint64_t>(t));
        const TreeCodebook cb = gen_tree_codebook(derive_stream(ts, 1), cp.T, M);
        const SfRunResult r = emssf_decode_run(cp, cb, levels, states, ts, horizon);
        return {!r.correct, r.stop_block};
    };
    const auto [errors, stop_sum] = detail::sum_trials(trials, threads, one_trial);
    return detail::fill_report(trials, errors, stop_sum, bound.epsilon_bound);
}

}  // namespace blockfade
