#pragma once

// Achievability bounds for expandable-message codes over the block-fading
// BSC, evaluated for a fixed fading state sequence, plus the inversions
// (solve for a cardinality or a threshold) that the adaptive schemes need.
//
// All thresholds and message cardinalities are handled in log domain; the
// union-bound evaluation itself runs on the exact pooled-count lattice
// (lattice.hpp), so the only approximation knobs are the optional per-axis
// tail truncation (charged to the loosening side under pessimistic rounding)
// and, for the stop-feedback bound, the grid step of the hitting-time engine.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "blockfade/grid_pmf.hpp"
#include "blockfade/lattice.hpp"

namespace blockfade {

enum class BoundMethod { thm1, prop1, thm2_loosened, dt };

struct MessageSchedule {
    std::vector<double> M;      // per-epoch cardinalities M_1..M_N, real-valued >= 1
    std::vector<double> gamma;  // optional per-block threshold increments, nats

    int N() const { return static_cast<int>(M.size()); }
    double m_at(std::size_t n) const {  // 1-based epoch index; 1 beyond the schedule
        return n >= 1 && n <= M.size() ? M[n - 1] : 1.0;
    }
    long double ln_m_total() const {
        long double s = 0.0L;
        for (double m : M) s += logl(static_cast<long double>(m));
        return s;
    }
    void validate() const {
        for (double m : M)
            if (!(m >= 1.0)) throw std::domain_error("MessageSchedule: M_n < 1");
        for (double g : gamma)
            if (!std::isfinite(g)) throw std::domain_error("MessageSchedule: gamma not finite");
    }
};

struct BoundBreakdown {
    double epsilon_bound = 0.0;  // raw union bound; may exceed 1
    double missed_detection_term = 0.0;
    std::vector<double> confusion_terms;  // one per epoch (0 where M_n = 1)
    BoundMethod method = BoundMethod::thm1;
    Rounding rounding = Rounding::pessimistic;

    double clamped() const { return epsilon_bound < 1.0 ? epsilon_bound : 1.0; }
};

namespace detail {

// gamma = ln((e^{ln_m_total} - 1) / 2), stable for small ln_m_total
inline double union_threshold(long double ln_m_total) {
    return static_cast<double>(ln_m_total + log1pl(-expl(-ln_m_total)) -
                               static_cast<long double>(ln2));
}

inline void check_states(const std::vector<int>& states) {
    for (int s : states)
        if (s != 0 && s != 1) throw std::domain_error("state outside {0,1}");
}

}  // namespace detail

// Union bound on the error probability of an expandable-message code over a
// known state sequence: decoding threshold gamma = ln((M_1^N - 1)/2), one
// missed-detection term P(sum of conditioned densities <= gamma) plus, per
// epoch n with M_n > 1, weight (M_n - 1)/2 * prod_{j>n} M_j times the tail
// P(sum > gamma) where blocks 1..n-1 keep the conditioned output measure and
// blocks n..N switch to the unconditioned one.
//
// Evaluation is exact on the pooled lattice; `step` is accepted for interface
// uniformity with the grid engine and is not used. tail_tol > 0 truncates
// per-axis count tails; pessimistic rounding charges the truncated mass to
// every term, optimistic drops it.
inline BoundBreakdown ems_bound_thm1(const ChannelParams& cp, const std::vector<int>& states,
                                     const MessageSchedule& sched, double step = 0.0,
                                     Rounding rounding = Rounding::pessimistic,
                                     double tail_tol = 0.0) {
    (void)step;
    cp.validate();
    sched.validate();
    detail::check_states(states);
    std::size_t N = states.size();
    if (sched.M.size() != N)
        throw std::invalid_argument("ems_bound_thm1: schedule/state length mismatch");

    BoundBreakdown out;
    out.method = BoundMethod::thm1;
    out.rounding = rounding;
    out.confusion_terms.assign(N, 0.0);

    long double lnm_tot = sched.ln_m_total();
    if (lnm_tot <= 0.0L) return out;  // single codeword: no error event
    double gam = detail::union_threshold(lnm_tot);
    bool pess = rounding == Rounding::pessimistic;

    std::vector<BlockMeasure> blocks(N);
    for (std::size_t j = 0; j < N; ++j) blocks[j] = {states[j], Measure::conditioned};
    LatticeDist all_cond = make_lattice(cp, blocks, tail_tol);
    long double first = all_cond.cdf_tracked(gam) + (pess ? all_cond.truncated : 0.0L);
    out.missed_detection_term = static_cast<double>(first);

    long double total = first;
    long double lnm_tail = lnm_tot;  // sum of ln M_j for j >= n, maintained down the loop
    for (std::size_t n = 1; n <= N; ++n) {
        long double lnm_n = logl(static_cast<long double>(sched.M[n - 1]));
        lnm_tail -= lnm_n;
        if (lnm_n == 0.0L) continue;
        // weight (M_n - 1)/2 * M_{n+1}^N
        long double w = 0.5L * expm1l(lnm_n) * expl(lnm_tail);
        for (std::size_t j = n - 1; j < N; ++j) blocks[j] = {states[j], Measure::unconditioned};
        LatticeDist mixed = make_lattice(cp, blocks, tail_tol);
        for (std::size_t j = n - 1; j < N; ++j) blocks[j] = {states[j], Measure::conditioned};
        long double tail = mixed.ccdf_raw(gam) + (pess ? mixed.truncated : 0.0L);
        long double term = w * tail;
        out.confusion_terms[n - 1] = static_cast<double>(term);
        total += term;
    }
    out.epsilon_bound = static_cast<double>(total);
    return out;
}

// Same bound through the measure-change identity: per epoch n, with A the
// conditioned prefix 1..n-1 and B the conditioned remainder n..N,
//   term_n = (M_n-1) prod_{j>n} M_j / (M_1^N - 1)
//            * E[ 1{i_A + i_B <= gamma} + e^{gamma - i_B} 1{i_A + i_B > gamma} ].
// Summing the indicator part over n telescopes to the missed-detection term
// and the exponential part reproduces each unconditioned tail exactly, so the
// result numerically equals ems_bound_thm1. Always evaluated exactly (no
// truncation knob).
inline BoundBreakdown ems_bound_prop1(const ChannelParams& cp, const std::vector<int>& states,
                                      const MessageSchedule& sched, double step = 0.0) {
    (void)step;
    cp.validate();
    sched.validate();
    detail::check_states(states);
    std::size_t N = states.size();
    if (sched.M.size() != N)
        throw std::invalid_argument("ems_bound_prop1: schedule/state length mismatch");

    BoundBreakdown out;
    out.method = BoundMethod::prop1;
    out.rounding = Rounding::pessimistic;
    out.confusion_terms.assign(N, 0.0);

    long double lnm_tot = sched.ln_m_total();
    if (lnm_tot <= 0.0L) return out;
    double gam = detail::union_threshold(lnm_tot);
    long double inv_m_minus_1 = 1.0L / expm1l(lnm_tot);  // 1/(M_1^N - 1)
    long double e_gam = expl(static_cast<long double>(gam));

    long double total = 0.0L, first_total = 0.0L;
    long double lnm_tail = lnm_tot;
    std::vector<BlockMeasure> blocks;
    for (std::size_t n = 1; n <= N; ++n) {
        long double lnm_n = logl(static_cast<long double>(sched.M[n - 1]));
        lnm_tail -= lnm_n;
        if (lnm_n == 0.0L) continue;
        long double mu = expm1l(lnm_n) * expl(lnm_tail) * inv_m_minus_1;

        blocks.clear();
        for (std::size_t j = 0; j + 1 < n; ++j) blocks.push_back({states[j], Measure::conditioned});
        FlattenedDist A = flatten(make_lattice(cp, blocks));
        blocks.clear();
        for (std::size_t j = n - 1; j < N; ++j) blocks.push_back({states[j], Measure::conditioned});
        FlattenedDist B = flatten(make_lattice(cp, blocks));

        long double below = 0.0L, expo = 0.0L;
        for (std::size_t i = 0; i < A.v.size(); ++i) {
            double rem = gam - A.v[i];
            below += A.p[i] * B.cdf(rem);
            expo += A.p[i] * B.tail_exp_neg(rem);
        }
        first_total += mu * below;
        long double conf = mu * e_gam * expo;
        out.confusion_terms[n - 1] = static_cast<double>(conf);
        total += mu * below + conf;
    }
    out.missed_detection_term = static_cast<double>(first_total);
    out.epsilon_bound = static_cast<double>(total);
    return out;
}

// Dependency-testing bound over k blocks: the union bound with the whole
// payload in the first epoch, schedule (M1, 1, ..., 1).
inline BoundBreakdown dt_bound(const ChannelParams& cp, const std::vector<int>& states, double m1,
                               double step = 0.0, Rounding rounding = Rounding::pessimistic,
                               double tail_tol = 0.0) {
    MessageSchedule sched;
    sched.M.assign(states.size(), 1.0);
    if (!states.empty()) sched.M[0] = m1;
    BoundBreakdown b = ems_bound_thm1(cp, states, sched, step, rounding, tail_tol);
    b.method = BoundMethod::dt;
    return b;
}

// Per-slot error-weight recursion of the stop-feedback bound. After block k
// the decodable-now error weight is D_k = sum_{l<=k} (M_l-1) M_{l+1}^{min(N,k)}
// e^{-(Gamma_k - Gamma_{l-1})}, which obeys D_k = U_k e^{-gamma_k} with
// U_k = M_k D_{k-1} + (M_k - 1). Choosing gamma_k = max(0, ln(U_k / eps))
// caps every slot's weight at eps; since U_k >= D_{k-1}, the capped weights
// are nondecreasing in k, which makes late-stopping conservatism valid.
struct SlotRule {
    long double D = 0.0L;

    // returns gamma_k for epoch cardinality e^{ln_m} under per-slot budget eps
    double advance(double ln_m, double eps) {
        if (!(eps > 0.0)) throw std::domain_error("SlotRule: eps <= 0");
        if (ln_m < 0.0) throw std::domain_error("SlotRule: M < 1");
        long double u = expl(static_cast<long double>(ln_m)) * D +
                        expm1l(static_cast<long double>(ln_m));
        double g = 0.0;
        if (u > static_cast<long double>(eps))
            g = static_cast<double>(logl(u / static_cast<long double>(eps)));
        if (g < 0.0) g = 0.0;
        D = u * expl(-static_cast<long double>(g));
        return g;
    }
};

// Smallest gamma_k >= 0 keeping slot k's decodable-now error weight <= eps,
// given the committed gamma prefix (sched.gamma, length k-1) and cardinalities
// sched.M (epochs beyond the schedule count as 1). Closed form via the D
// recursion; a vanishing weight as gamma grows makes the solve always
// feasible, so the bisection the contract allows for is never needed.
inline double solve_gamma_for_epsilon(const MessageSchedule& sched, double target_eps) {
    if (!(target_eps > 0.0)) throw std::domain_error("solve_gamma_for_epsilon: eps <= 0");
    SlotRule sr;
    std::size_t k = sched.gamma.size() + 1;
    for (std::size_t i = 1; i < k; ++i) {
        double ln_m = std::log(sched.m_at(i));
        long double u = expl(static_cast<long double>(ln_m)) * sr.D +
                        expm1l(static_cast<long double>(ln_m));
        double g = sched.gamma[i - 1];
        if (g < 0.0) throw std::domain_error("solve_gamma_for_epsilon: negative gamma prefix");
        sr.D = u * expl(-static_cast<long double>(g));
    }
    return sr.advance(std::log(sched.m_at(k)), target_eps);
}

// Call shape matching the other solvers. The per-slot weight recursion is a
// function of the schedule alone (the weights M-tilde and the committed
// gammas involve no channel quantity), so the channel arguments are validated
// and otherwise unused.
inline double solve_gamma_for_epsilon(const ChannelParams& cp, const std::vector<int>& states,
                                      const MessageSchedule& sched, double target_eps) {
    cp.validate();
    detail::check_states(states);
    return solve_gamma_for_epsilon(sched, target_eps);
}

struct StopFeedbackBound {
    FirstPassageResult stop_dist;
    double epsilon_bound = 0.0;  // sum_n P(tau=n) D_n, horizon tail charged at 1
    double expected_tau = 0.0;   // tail charged at the horizon
    double expected_nats = 0.0;  // E[sum_{n <= min(tau,N)} ln M_n]
    std::vector<long double> slot_error_weight;  // D_n, index 0 unused
    bool tail_flagged = false;   // tail_prob > 1e-6: horizon too short for the target
};

// Loosened stop-feedback error bound for a fixed state sequence: the decoder
// stops at tau = first k with accumulated conditioned density >= Gamma_k =
// sum_{i<=k} gamma_i, and the bound charges slot k's stop mass with weight
// D_k. Horizon tail (paths that never stop within `states`) is charged at
// weight 1 in the bound and at the horizon in E[tau].
inline StopFeedbackBound emssf_bound_loosened(const ChannelParams& cp,
                                              const std::vector<int>& states,
                                              const MessageSchedule& sched, double step,
                                              double tail_tol = 0.0) {
    cp.validate();
    sched.validate();
    detail::check_states(states);
    std::size_t H = states.size();
    if (sched.gamma.size() < H)
        throw std::invalid_argument("emssf_bound_loosened: gamma shorter than horizon");
    if (!(step > 0.0)) throw std::invalid_argument("emssf_bound_loosened: step <= 0");

    std::vector<GridPmf> blocks;
    blocks.reserve(H);
    for (std::size_t k = 0; k < H; ++k)
        blocks.push_back(block_info_pmf(cp, {states[k], Measure::conditioned}, step, tail_tol));
    std::vector<double> levels(H);
    double g = 0.0;
    for (std::size_t k = 0; k < H; ++k) {
        levels[k] = g + sched.gamma[k];
        g = levels[k];
    }

    StopFeedbackBound out;
    out.stop_dist = first_passage(blocks, levels);
    out.slot_error_weight.assign(H + 1, 0.0L);
    SlotRule sr;
    for (std::size_t k = 1; k <= H; ++k) {
        double ln_m = std::log(sched.m_at(k));
        long double u = expl(static_cast<long double>(ln_m)) * sr.D +
                        expm1l(static_cast<long double>(ln_m));
        sr.D = u * expl(-static_cast<long double>(sched.gamma[k - 1]));
        out.slot_error_weight[k] = sr.D;
    }

    long double eps = 0.0L;
    double etau = 0.0, enats = 0.0;
    long double lnm_prefix = 0.0L;
    for (std::size_t k = 1; k <= H; ++k) {
        if (k <= sched.M.size()) lnm_prefix += logl(static_cast<long double>(sched.M[k - 1]));
        long double pk = out.stop_dist.stop_prob[k];
        eps += pk * out.slot_error_weight[k];
        etau += static_cast<double>(pk) * static_cast<double>(k);
        enats += static_cast<double>(pk) * static_cast<double>(lnm_prefix);
    }
    long double tail = out.stop_dist.tail_prob;
    eps += tail;  // worst-case weight for never-stopping paths
    etau += static_cast<double>(tail) * static_cast<double>(H);
    enats += static_cast<double>(tail) * static_cast<double>(sched.ln_m_total());
    out.epsilon_bound = static_cast<double>(eps);
    out.expected_tau = etau;
    out.expected_nats = enats;
    out.tail_flagged = tail > 1e-6L;
    return out;
}

// Largest M_next >= 1 with the union bound at schedule prefix + M_next still
// <= target_eps, for the state sequence `states` (whose last entry is the
// hypothesized next state). Returns 1 when even M_next = 1 misses the target.
// Bisection on ln M_next keeps the feasible end, so re-evaluating the bound
// at the returned value reproduces <= target_eps exactly.
inline double solve_M_for_epsilon(const ChannelParams& cp, const std::vector<int>& states,
                                  const MessageSchedule& sched_prefix, double target_eps,
                                  double tail_tol = 0.0) {
    if (!(target_eps > 0.0)) throw std::domain_error("solve_M_for_epsilon: eps <= 0");
    if (sched_prefix.M.size() + 1 != states.size())
        throw std::invalid_argument("solve_M_for_epsilon: need prefix + one hypothesized state");
    MessageSchedule s = sched_prefix;
    s.M.push_back(1.0);
    auto bound_at = [&](double ln_m) {
        s.M.back() = std::exp(ln_m);
        return ems_bound_thm1(cp, states, s, 0.0, Rounding::pessimistic, tail_tol).epsilon_bound;
    };
    if (bound_at(0.0) > target_eps) return 1.0;
    double lo = 0.0;
    double hi = static_cast<double>(cp.T) * static_cast<double>(states.size()) * ln2;
    if (bound_at(hi) <= target_eps) return std::exp(hi);
    for (int it = 0; it < 200 && hi - lo > 1e-6 * std::max(1.0, lo); ++it) {
        double mid = 0.5 * (lo + hi);
        (bound_at(mid) <= target_eps ? lo : hi) = mid;
    }
    return std::exp(lo);
}

// M_k making the conditional probability of stopping exactly at block k equal
// to beta, where each trial M_k re-solves gamma_k for the per-slot error
// budget. `residual` is the walk distribution among paths alive after block
// k-1 (computed from the prefix when absent); `walk_k`, when supplied, is
// that residual already convolved with block k, and short-circuits both.
// Returns 1 when even M_k = 1 stops with probability <= beta (no expansion
// pressure).
inline double solve_M_for_beta(const ChannelParams& cp, const std::vector<int>& states,
                               const MessageSchedule& sched_prefix, double beta, double eps,
                               double step, const GridPmf* residual = nullptr,
                               double tail_tol = 0.0, double tol = 1e-4,
                               const GridPmf* walk_k = nullptr) {
    if (!(beta > 0.0 && beta <= 1.0)) throw std::domain_error("solve_M_for_beta: beta outside (0,1]");
    std::size_t k = states.size();
    if (sched_prefix.gamma.size() + 1 != k)
        throw std::invalid_argument("solve_M_for_beta: gamma prefix must cover blocks 1..k-1");

    GridPmf conv;
    if (walk_k) {
        conv = *walk_k;
    } else {
        GridPmf res;
        if (residual) {
            res = *residual;
        } else if (k == 1) {
            res = point_mass(0.0, step);
        } else {
            std::vector<GridPmf> blocks;
            std::vector<double> levels;
            double g = 0.0;
            for (std::size_t j = 0; j + 1 < k; ++j) {
                blocks.push_back(
                    block_info_pmf(cp, {states[j], Measure::conditioned}, step, tail_tol));
                g += sched_prefix.gamma[j];
                levels.push_back(g);
            }
            res = first_passage(blocks, levels).residual.back();
        }
        conv = convolve(res, block_info_pmf(cp, {states[k - 1], Measure::conditioned}, step,
                                            tail_tol));
    }
    long double alive = conv.total_mass();
    if (alive <= 0.0L) return 1.0;
    double gamma_prev = 0.0;
    for (double g : sched_prefix.gamma) gamma_prev += g;

    // conditional stop probability at block k for threshold increment g_k,
    // classified exactly as the hitting-time engine would
    auto stop_prob = [&](double g_k) {
        return static_cast<double>(crossing_mass(conv, gamma_prev + g_k) / alive);
    };
    MessageSchedule s = sched_prefix;
    s.M.resize(k, 1.0);
    auto gamma_for = [&](double ln_m) {
        s.M[k - 1] = std::exp(ln_m);
        return solve_gamma_for_epsilon(s, eps);
    };
    if (stop_prob(gamma_for(0.0)) <= beta) return 1.0;
    double lo = 0.0, hi = static_cast<double>(cp.T) * static_cast<double>(k) * ln2;
    if (stop_prob(gamma_for(hi)) > beta) return std::exp(hi);
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double p = stop_prob(gamma_for(mid));
        if (std::abs(p - beta) <= tol) return std::exp(mid);
        (p > beta ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

}  // namespace blockfade
