// End-to-end communication schemes over the two-state block-fading channel:
// fixed-length coding at the normal approximation, variable-length coding with
// delayed CSIT (single message, stop when the realized-state error bound meets
// the target), variable-length stop-feedback coding (flat threshold), and the
// two backtrack-retransmission schemes that expand the message space mid-flight
// using delayed CSIT alone or combined with stop-feedback. Every operating
// point is an exact expectation over fading realizations; no sampling.
#pragma once

#include "blockfade/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <future>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace blockfade {

enum class SchemeKind { fixed, vld, vlsf, brq_csit, brq_sf };

inline const char* to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::fixed: return "fixed";
        case SchemeKind::vld: return "vld";
        case SchemeKind::vlsf: return "vlsf";
        case SchemeKind::brq_csit: return "brq_csit";
        case SchemeKind::brq_sf: return "brq_sf";
    }
    return "?";
}

struct StateSequence {
    std::vector<int> states;
    double prob = 1.0;  // product of per-block state probabilities
};

struct FadingOutcome {
    StateSequence seq;
    bool hit_horizon = false;  // policy never terminated within the horizon
};

struct FadingEnumeration {
    std::vector<FadingOutcome> outcomes;
    double truncation_gap = 0.0;  // pruned branch mass; outcomes + gap = 1
};

// true = terminate transmission at this prefix
using FadingPolicy = std::function<bool(const StateSequence&)>;

// Depth-first enumeration of fading prefixes. The policy sees each prefix
// after its last state is realized; good-state branches are visited first.
// Branches whose path probability drops below p_min are cut and their mass
// accumulated into truncation_gap, so emitted weights + gap = 1 exactly.
inline FadingEnumeration enumerate_fading_tree(const ChannelParams& cp, const FadingPolicy& policy,
                                               int horizon, double p_min) {
    cp.validate();
    if (horizon < 1) throw std::domain_error("enumerate_fading_tree: horizon < 1");
    if (!(p_min >= 0.0 && p_min < 1.0))
        throw std::domain_error("enumerate_fading_tree: p_min outside [0,1)");

    FadingEnumeration out;
    StateSequence cur;
    std::function<void()> walk = [&]() {
        if (!cur.states.empty()) {
            if (policy(cur)) {
                out.outcomes.push_back({cur, false});
                return;
            }
            if (static_cast<int>(cur.states.size()) >= horizon) {
                out.outcomes.push_back({cur, true});
                return;
            }
        }
        const double w[2] = {cp.q, 1.0 - cp.q};
        const int s[2] = {1, 0};
        for (int i = 0; i < 2; ++i) {
            double child = cur.prob * w[i];
            if (child <= 0.0) continue;
            if (child < p_min) {
                out.truncation_gap += child;
                continue;
            }
            cur.states.push_back(s[i]);
            double saved = cur.prob;
            cur.prob = child;
            walk();
            cur.prob = saved;
            cur.states.pop_back();
        }
    };
    walk();
    return out;
}

struct SchemeCurvePoint {
    SchemeKind scheme = SchemeKind::fixed;
    double M1 = 0.0;
    double epsilon_target = 0.0;
    double avg_blocks = 0.0;
    double avg_blocklength = 0.0;  // T * avg_blocks, channel uses
    double avg_nats = 0.0;         // E[sum_n ln M_n], horizon tail included
    double rate_bits = 0.0;        // avg_nats / (ln2 * avg_blocklength)
    double eps_certified = 0.0;
    double truncation_gap = 0.0;  // unresolved path mass (pruned + horizon)
    int expansions_cap = 0;
};

namespace detail {

inline double auto_step(int T) {
    return std::clamp(5e-4 * static_cast<double>(T), 1e-4, 0.05);
}

inline GridPmf scaled(GridPmf p, long double w) {
    for (auto& m : p.mass) m *= w;
    p.truncated_mass *= w;
    p.never_cross_mass *= w;
    return p;
}

// Absorb the mass that counts as crossing `level` (same classification as the
// hitting-time engine) and prune the provably negligible left tail of what
// remains. Returns the absorbed mass.
inline long double absorb_crossing(GridPmf& p, double level, double prune_tol = 1e-13) {
    std::size_t j0 = crossing_index(p, level);
    long double absorbed = 0.0L;
    for (std::size_t j = j0; j < p.mass.size(); ++j) absorbed += p.mass[j];
    p.mass.resize(j0);
    long double alive = p.grid_mass();
    if (prune_tol > 0.0 && alive > 0.0L) {
        long double budget = alive * static_cast<long double>(prune_tol);
        long double cut = 0.0L;
        std::size_t drop = 0;
        while (drop < p.mass.size() && cut + p.mass[drop] < budget) cut += p.mass[drop++];
        if (drop > 0) {
            p.truncated_mass += cut;
            p.origin += static_cast<double>(drop) * p.step;
            p.mass.erase(p.mass.begin(), p.mass.begin() + static_cast<std::ptrdiff_t>(drop));
        }
    }
    if (p.mass.empty()) p.mass.assign(1, 0.0L);
    return absorbed;
}

// Flat-threshold continuation over i.i.d. fading-mixture blocks: once no
// transmitter decision remains, the stop statistics are linear in the fading
// law, so averaging the per-block distribution is exact. Stops during block
// k_offset+j are charged at depth k_offset+j with constant error weight
// slot_weight; everything alive at the horizon is unresolved.
inline void flat_run(const GridPmf& mixture, const GridPmf* start, double level,
                     long double slot_weight, double nats_at_stop, int k_offset, int horizon,
                     double& blocks, double& nats, long double& cert, long double& gap) {
    long double total = start ? start->total_mass() : 1.0L;
    int rem = horizon - k_offset;
    if (rem <= 0) {
        gap += total;
        cert += total;
        blocks += static_cast<double>(total) * horizon;
        nats += static_cast<double>(total) * nats_at_stop;
        return;
    }
    auto fp = first_passage(std::vector<GridPmf>(static_cast<std::size_t>(rem), mixture),
                            std::vector<double>(static_cast<std::size_t>(rem), level), start,
                            1e-13, &convolve_fast);
    for (int j = 1; j <= rem; ++j) {
        long double pj = fp.stop_prob[static_cast<std::size_t>(j)];
        blocks += static_cast<double>(pj) * (k_offset + j);
        nats += static_cast<double>(pj) * nats_at_stop;
        cert += pj * slot_weight;
    }
    gap += fp.tail_prob;
    cert += fp.tail_prob;
    blocks += static_cast<double>(fp.tail_prob) * horizon;
    nats += static_cast<double>(fp.tail_prob) * nats_at_stop;
}

inline void flat_mixture_run(const ChannelParams& cp, const GridPmf* start, double level,
                             long double slot_weight, double nats_at_stop, int k_offset,
                             int horizon, double step, double tail_tol, double& blocks,
                             double& nats, long double& cert, long double& gap) {
    GridPmf b0 = block_info_pmf(cp, {0, Measure::conditioned}, step, tail_tol);
    GridPmf b1 = block_info_pmf(cp, {1, Measure::conditioned}, step, tail_tol);
    GridPmf m = mix({{1.0 - cp.q, b0}, {cp.q, b1}});
    flat_run(m, start, level, slot_weight, nats_at_stop, k_offset, horizon, blocks, nats, cert,
             gap);
}

inline void finalize_point(const ChannelParams& cp, SchemeCurvePoint& pt) {
    pt.avg_blocklength = pt.avg_blocks * static_cast<double>(cp.T);
    pt.rate_bits =
        pt.avg_blocklength > 0.0 ? pt.avg_nats / (ln2 * pt.avg_blocklength) : 0.0;
}

inline void check_scheme_args(const ChannelParams& cp, double M1, double eps, int horizon) {
    cp.validate();
    if (!(M1 >= 1.0)) throw std::domain_error("scheme: M1 < 1");
    if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("scheme: eps outside (0,1)");
    if (horizon < 1) throw std::domain_error("scheme: horizon < 1");
}

// single-message degenerate operating point: stops after one block, zero nats
inline SchemeCurvePoint degenerate_point(const ChannelParams& cp, SchemeKind k, double eps) {
    SchemeCurvePoint pt;
    pt.scheme = k;
    pt.M1 = 1.0;
    pt.epsilon_target = eps;
    pt.avg_blocks = 1.0;
    finalize_point(cp, pt);
    return pt;
}

}  // namespace detail

// Fixed-length coding at blocklength n_blocks * T, rated by the two-state
// normal approximation. avg_nats is set so the rate identity used by the
// variable-length schemes holds here too.
inline SchemeCurvePoint scheme_fixed(const ChannelParams& cp, int n_blocks, double eps) {
    cp.validate();
    if (n_blocks < 1) throw std::domain_error("scheme_fixed: n_blocks < 1");
    if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("scheme_fixed: eps outside (0,1)");
    SchemeCurvePoint pt;
    pt.scheme = SchemeKind::fixed;
    pt.epsilon_target = eps;
    pt.avg_blocks = static_cast<double>(n_blocks);
    double n_uses = static_cast<double>(n_blocks) * cp.T;
    // the approximation goes negative below the critical blocklength; zero
    // nats is the honest reading there
    pt.rate_bits = std::max(0.0, normal_approx_rate(cp, n_uses, eps));
    pt.avg_nats = pt.rate_bits * ln2 * n_uses;
    pt.M1 = std::exp(pt.avg_nats);
    pt.avg_blocklength = n_uses;
    // the normal approximation is a design target, not a certified bound
    pt.eps_certified = eps;
    return pt;
}

// Variable-length coding with delayed CSIT: one message of size M1, stop at
// the first block where the single-epoch bound over the realized states meets
// the target. The bound pools blocks of equal state, so alive prefixes are
// tracked by good-block count; pooled-node pruning is never coarser than
// per-path pruning at the same p_min.
inline SchemeCurvePoint scheme_vld(const ChannelParams& cp, double M1, double eps, int horizon,
                                   double p_min) {
    detail::check_scheme_args(cp, M1, eps, horizon);
    SchemeCurvePoint pt;
    pt.scheme = SchemeKind::vld;
    pt.M1 = M1;
    pt.epsilon_target = eps;

    double blocks = 0.0;
    double cert_max = 0.0;
    long double gap = 0.0L;
    std::map<int, long double> cur{{0, 1.0L}};  // good-block count -> alive mass
    for (int k = 1; k <= horizon && !cur.empty(); ++k) {
        std::map<int, long double> next;
        for (const auto& [n1, m] : cur) {
            if (cp.q > 0.0) next[n1 + 1] += m * static_cast<long double>(cp.q);
            if (cp.q < 1.0) next[n1] += m * static_cast<long double>(1.0 - cp.q);
        }
        cur.clear();
        for (const auto& [n1, m] : next) {
            std::vector<int> states(static_cast<std::size_t>(k), 0);
            std::fill(states.begin(), states.begin() + n1, 1);
            double b = dt_bound(cp, states, M1).epsilon_bound;
            if (b <= eps) {
                blocks += static_cast<double>(m) * k;
                cert_max = std::max(cert_max, b);
            } else if (k == horizon || m < static_cast<long double>(p_min)) {
                gap += m;
                blocks += static_cast<double>(m) * horizon;
            } else {
                cur[n1] = m;
            }
        }
    }
    pt.avg_blocks = blocks;
    pt.avg_nats = std::log(M1);
    pt.truncation_gap = static_cast<double>(gap);
    pt.eps_certified = cert_max + pt.truncation_gap;
    detail::finalize_point(cp, pt);
    return pt;
}

// Variable-length stop-feedback coding: single message, flat cumulative
// threshold ln((M1-1)/eps). The per-slot decodable-now weight is exactly eps
// in every slot, so the fading-mixture hitting time gives the exact average
// over both noise and fading.
inline SchemeCurvePoint scheme_vlsf(const ChannelParams& cp, double M1, double eps, int horizon,
                                    double step = 0.0, double tail_tol = 1e-12) {
    detail::check_scheme_args(cp, M1, eps, horizon);
    if (M1 == 1.0) return detail::degenerate_point(cp, SchemeKind::vlsf, eps);
    if (step <= 0.0) step = detail::auto_step(cp.T);

    SchemeCurvePoint pt;
    pt.scheme = SchemeKind::vlsf;
    pt.M1 = M1;
    pt.epsilon_target = eps;
    double gamma = std::log((M1 - 1.0) / eps);  // (M1-1) e^{-gamma} = eps exactly
    double blocks = 0.0, nats = 0.0;
    long double cert = 0.0L, gap = 0.0L;
    detail::flat_mixture_run(cp, nullptr, gamma, static_cast<long double>(eps), std::log(M1), 0,
                             horizon, step, tail_tol, blocks, nats, cert, gap);
    pt.avg_blocks = blocks;
    pt.avg_nats = nats;
    pt.eps_certified = static_cast<double>(cert);
    pt.truncation_gap = static_cast<double>(gap);
    detail::finalize_point(cp, pt);
    return pt;
}

namespace detail {

// Alive prefixes of the delayed-CSIT backtrack scheme, pooled by the good/bad
// block counts of each run between expanded epochs. The union bound reads the
// state pattern only through those per-segment counts (every epoch's prefix
// and suffix boundary sits at an expansion), so pooled nodes evolve exactly
// like their member paths. Expanded-epoch states are implicitly bad: a good
// state at an expansion meets the solved target and terminates the path.
struct BrqKey {
    std::vector<int> segs;  // g0, b0, g1, b1, ... per segment
    bool operator<(const BrqKey& o) const { return segs < o.segs; }
};

struct BrqNode {
    long double mass = 0.0L;
    std::vector<double> m_exp;  // solved cardinalities, one per expansion
};

inline void brq_build_path(const BrqKey& key, double M1, const std::vector<double>& m_exp,
                           std::vector<int>& states, MessageSchedule& sched) {
    states.clear();
    sched.M.clear();
    sched.gamma.clear();
    std::size_t n_seg = key.segs.size() / 2;
    for (std::size_t i = 0; i < n_seg; ++i) {
        if (i > 0) {
            states.push_back(0);
            sched.M.push_back(m_exp[i - 1]);
        }
        for (int g = 0; g < key.segs[2 * i]; ++g) {
            states.push_back(1);
            sched.M.push_back(1.0);
        }
        for (int b = 0; b < key.segs[2 * i + 1]; ++b) {
            states.push_back(0);
            sched.M.push_back(1.0);
        }
    }
    sched.M.front() = M1;  // block 1 carries the initial message space
}

}  // namespace detail

// Backtrack retransmission with delayed CSIT: before each block the
// transmitter asks whether one more good block would already meet the error
// target with no new information (an unexpanded epoch); if so, and expansions
// remain, the message space grows to the largest size that still meets the
// target under that hypothesis. Transmission ends at the first block whose
// realized-state bound meets the target, on good and bad states alike.
inline SchemeCurvePoint scheme_brq_csit(const ChannelParams& cp, double M1, double eps,
                                        int horizon, double p_min, int max_expansions = 5) {
    detail::check_scheme_args(cp, M1, eps, horizon);
    if (max_expansions < 0) throw std::domain_error("scheme_brq_csit: max_expansions < 0");

    SchemeCurvePoint pt;
    pt.scheme = SchemeKind::brq_csit;
    pt.M1 = M1;
    pt.epsilon_target = eps;
    pt.expansions_cap = max_expansions;

    double blocks = 0.0, nats = 0.0, cert_max = 0.0;
    long double gap = 0.0L;
    double ln_m1 = std::log(M1);

    auto leaf = [&](long double m, int k, double ln_nats, double bound) {
        blocks += static_cast<double>(m) * k;
        nats += static_cast<double>(m) * ln_nats;
        cert_max = std::max(cert_max, bound);
    };
    auto unresolved = [&](long double m, double ln_nats) {
        gap += m;
        blocks += static_cast<double>(m) * horizon;
        nats += static_cast<double>(m) * ln_nats;
    };

    // block 1: the initial message space is given, no expansion decision
    std::map<detail::BrqKey, detail::BrqNode> cur;
    for (int s : {1, 0}) {
        long double w = static_cast<long double>(s ? cp.q : 1.0 - cp.q);
        if (w <= 0.0L) continue;
        double b = ems_bound_thm1(cp, {s}, MessageSchedule{{M1}, {}}).epsilon_bound;
        if (b <= eps) {
            leaf(w, 1, ln_m1, b);
        } else if (w < static_cast<long double>(p_min) || horizon == 1) {
            unresolved(w, ln_m1);
        } else {
            detail::BrqKey key{{s, 1 - s}};
            cur[key].mass += w;
        }
    }

    std::vector<int> states;
    MessageSchedule sched;
    for (int k = 1; k < horizon && !cur.empty(); ++k) {
        std::map<detail::BrqKey, detail::BrqNode> next;
        for (const auto& [key, node] : cur) {
            double ln_m_sum = ln_m1;
            for (double m : node.m_exp) ln_m_sum += std::log(m);
            int budget = max_expansions - static_cast<int>(node.m_exp.size());

            detail::brq_build_path(key, M1, node.m_exp, states, sched);
            states.push_back(1);
            sched.M.push_back(1.0);
            double eps_tilde = ems_bound_thm1(cp, states, sched).epsilon_bound;
            double m_next = 1.0;
            if (eps_tilde <= eps && budget > 0) {
                sched.M.pop_back();
                m_next = solve_M_for_epsilon(cp, states, sched, eps);
                sched.M.push_back(1.0);
            }

            if (m_next > 1.0) {
                sched.M.back() = m_next;
                double ln_grown = ln_m_sum + std::log(m_next);
                if (cp.q > 0.0) {
                    // good state matches the solved hypothesis: meets the target
                    double b1 = ems_bound_thm1(cp, states, sched).epsilon_bound;
                    leaf(node.mass * static_cast<long double>(cp.q), k + 1, ln_grown, b1);
                }
                if (cp.q < 1.0) {
                    long double w = node.mass * static_cast<long double>(1.0 - cp.q);
                    states.back() = 0;
                    double b0 = ems_bound_thm1(cp, states, sched).epsilon_bound;
                    if (b0 <= eps) {
                        leaf(w, k + 1, ln_grown, b0);
                    } else if (w < static_cast<long double>(p_min) || k + 1 == horizon) {
                        unresolved(w, ln_grown);
                    } else {
                        detail::BrqKey ck = key;
                        ck.segs.push_back(0);
                        ck.segs.push_back(0);
                        auto& child = next[ck];
                        child.mass += w;
                        if (child.m_exp.empty()) {
                            child.m_exp = node.m_exp;
                            child.m_exp.push_back(m_next);
                        }
                    }
                }
            } else {
                for (int s : {1, 0}) {
                    long double w = node.mass * static_cast<long double>(s ? cp.q : 1.0 - cp.q);
                    if (w <= 0.0L) continue;
                    states.back() = s;
                    double b = s ? eps_tilde : ems_bound_thm1(cp, states, sched).epsilon_bound;
                    if (b <= eps) {
                        leaf(w, k + 1, ln_m_sum, b);
                    } else if (w < static_cast<long double>(p_min) || k + 1 == horizon) {
                        unresolved(w, ln_m_sum);
                    } else {
                        detail::BrqKey ck = key;
                        ck.segs[ck.segs.size() - 2 + (1 - s)] += 1;
                        auto& child = next[ck];
                        child.mass += w;
                        if (child.m_exp.empty()) child.m_exp = node.m_exp;
                    }
                }
            }
        }
        cur.swap(next);
    }
    for (const auto& [key, node] : cur) {
        double ln_m_sum = ln_m1;
        for (double m : node.m_exp) ln_m_sum += std::log(m);
        unresolved(node.mass, ln_m_sum);
    }

    pt.avg_blocks = blocks;
    pt.avg_nats = nats;
    pt.truncation_gap = static_cast<double>(gap);
    pt.eps_certified = cert_max + pt.truncation_gap;
    detail::finalize_point(cp, pt);
    return pt;
}

namespace detail {

// One alive lineage of the stop-feedback backtrack scheme: the walk
// distribution of paths that have neither stopped nor been pruned, with the
// running threshold, slot weight, and committed schedule.
struct SfNode {
    GridPmf pmf;  // absolute mass
    double gamma_total = 0.0;
    long double slot_weight = 0.0L;
    double ln_m_sum = 0.0;
    int budget = 0;
    MessageSchedule sched;
};

}  // namespace detail

// Backtrack retransmission with delayed CSIT and stop-feedback: the receiver
// stops when its running density crosses the committed thresholds; before
// each block the transmitter checks the conditional probability of a stop in
// that block under a hypothesized good state, and expands the message space
// to push it back under beta when it overshoots (expansions permitting). Slot
// thresholds always come from the per-slot error budget, so every slot's
// decodable-now weight stays at most eps.
inline SchemeCurvePoint scheme_brq_sf(const ChannelParams& cp, double M1, double eps, double beta,
                                      int horizon, double p_min, int max_expansions = 5,
                                      double step = 0.0, double tail_tol = 1e-12) {
    detail::check_scheme_args(cp, M1, eps, horizon);
    if (!(beta > 0.0 && beta <= 1.0)) throw std::domain_error("scheme_brq_sf: beta outside (0,1]");
    if (max_expansions < 0) throw std::domain_error("scheme_brq_sf: max_expansions < 0");
    if (M1 == 1.0) return detail::degenerate_point(cp, SchemeKind::brq_sf, eps);
    if (step <= 0.0) step = detail::auto_step(cp.T);

    SchemeCurvePoint pt;
    pt.scheme = SchemeKind::brq_sf;
    pt.M1 = M1;
    pt.epsilon_target = eps;
    pt.expansions_cap = max_expansions;

    double blocks = 0.0, nats = 0.0;
    long double cert = 0.0L, gap = 0.0L;
    double ln_m1 = std::log(M1);

    SlotRule rule;
    double gamma1 = rule.advance(ln_m1, eps);
    long double d1 = rule.D;

    GridPmf b0 = block_info_pmf(cp, {0, Measure::conditioned}, step, tail_tol);
    GridPmf b1 = block_info_pmf(cp, {1, Measure::conditioned}, step, tail_tol);
    GridPmf mixture = mix({{1.0 - cp.q, b0}, {cp.q, b1}});
    bool no_decisions = beta >= 1.0 || max_expansions == 0;

    auto charge_unresolved = [&](long double mass, double ln_sum) {
        gap += mass;
        cert += mass;
        blocks += static_cast<double>(mass) * horizon;
        nats += static_cast<double>(mass) * ln_sum;
    };

    // While no stop event of any member path is material, nothing splits the
    // fading tree: alive prefixes pool by good-block count and their walk
    // distributions are pure convolutions, built once per count pair. A class
    // leaves the pool when some member's next-block stop event reaches joint
    // probability p_min; smaller stop atoms are deferred (their mass stays
    // alive and stops at a later crossing), which can only lengthen stopping
    // and is covered by the nondecreasing slot weights. With p_min = 0 the
    // pool exits on any nonzero crossing mass and the evaluation is exact on
    // the grid.
    std::map<std::pair<int, int>, GridPmf> pure_walks;
    std::function<const GridPmf&(int, int)> walk_of = [&](int g, int b) -> const GridPmf& {
        auto it = pure_walks.find({g, b});
        if (it != pure_walks.end()) return it->second;
        GridPmf w = g == 0 && b == 0 ? point_mass(0.0, step)
                                     : (g > 0 ? convolve_fast(walk_of(g - 1, b), b1)
                                              : convolve_fast(walk_of(0, b - 1), b0));
        return pure_walks.emplace(std::make_pair(g, b), std::move(w)).first->second;
    };

    bool root_spawned = false;
    std::vector<std::vector<detail::SfNode>> spawned(static_cast<std::size_t>(horizon));
    std::map<std::pair<int, int>, long double> virgin{{{0, 0}, 1.0L}};
    for (int depth = 0; depth <= horizon && !virgin.empty(); ++depth) {
        std::map<std::pair<int, int>, long double> keep;
        for (const auto& [gb, mass] : virgin) {
            if (depth == horizon || mass < static_cast<long double>(p_min)) {
                charge_unresolved(mass, ln_m1);
                continue;
            }
            long double member = powl(static_cast<long double>(cp.q), gb.first) *
                                 powl(static_cast<long double>(1.0 - cp.q), gb.second);
            long double stop_atom = 0.0L;
            for (int s : {1, 0}) {
                double w = s ? cp.q : 1.0 - cp.q;
                if (w <= 0.0) continue;
                const GridPmf& child =
                    s ? walk_of(gb.first + 1, gb.second) : walk_of(gb.first, gb.second + 1);
                stop_atom = std::max(stop_atom, member * static_cast<long double>(w) *
                                                    crossing_mass(child, gamma1));
            }
            if (no_decisions || stop_atom > static_cast<long double>(p_min)) {
                // one node carries the whole class: members share the pmf
                // shape and the schedule at spawn, and every later decision is
                // a scale-invariant function of the pmf, so the pooled node
                // evolves exactly as each member does, scaled by class mass
                if (depth == 0) {
                    root_spawned = true;
                } else {
                    detail::SfNode n;
                    n.pmf = detail::scaled(walk_of(gb.first, gb.second), mass);
                    n.gamma_total = gamma1;
                    n.slot_weight = d1;
                    n.ln_m_sum = ln_m1;
                    n.budget = max_expansions;
                    n.sched.M.assign(static_cast<std::size_t>(depth), 1.0);
                    n.sched.M.front() = M1;
                    n.sched.gamma.assign(static_cast<std::size_t>(depth), 0.0);
                    n.sched.gamma.front() = gamma1;
                    spawned[static_cast<std::size_t>(depth)].push_back(std::move(n));
                }
            } else {
                keep[gb] = mass;
            }
        }
        std::map<std::pair<int, int>, long double> adv;
        for (const auto& [gb, mass] : keep) {
            if (cp.q > 0.0) adv[{gb.first + 1, gb.second}] += mass * static_cast<long double>(cp.q);
            if (cp.q < 1.0)
                adv[{gb.first, gb.second + 1}] += mass * static_cast<long double>(1.0 - cp.q);
        }
        virgin.swap(adv);
    }

    // exact per-lineage evolution, one branch per realized state; children of
    // block k are consumed at depth k
    std::vector<detail::SfNode> lineage;
    auto advance_node = [&](detail::SfNode& node, int k, bool forced) {
        double m_k = forced ? M1 : 1.0;
        SlotRule sr{node.slot_weight};
        double gamma_k = sr.advance(forced ? ln_m1 : 0.0, eps);
        GridPmf conv_good = convolve_fast(node.pmf, b1);
        long double alive1 = conv_good.total_mass();
        if (!forced && alive1 > 0.0L &&
            crossing_mass(conv_good, node.gamma_total + gamma_k) >
                static_cast<long double>(beta) * alive1) {
            // only the hypothesized last state and the committed schedule are
            // read when the walk distribution is supplied directly
            std::vector<int> hyp(node.sched.M.size() + 1, 1);
            double m = solve_M_for_beta(cp, hyp, node.sched, beta, eps, step, nullptr, tail_tol,
                                        1e-4, &conv_good);
            if (m > 1.0) {
                // land on the feasible side of the stop-probability jump: the
                // smallest threshold whose conditional stop mass is <= beta
                // converts back to a cardinality in closed form
                long double bm = static_cast<long double>(beta) * alive1;
                long double suffix = 0.0L;
                std::size_t j = conv_good.mass.size();
                while (j > 0 && suffix + conv_good.mass[j - 1] <= bm) suffix += conv_good.mass[--j];
                if (j < conv_good.mass.size()) {
                    double gamma_need = conv_good.value(j) - conv_good.slack - node.gamma_total;
                    if (gamma_need > 0.0) {
                        long double u_need =
                            static_cast<long double>(eps) * expl(static_cast<long double>(gamma_need));
                        m = std::max(m, static_cast<double>((u_need + 1.0L) /
                                                            (node.slot_weight + 1.0L)));
                    }
                }
                m_k = m;
                sr.D = node.slot_weight;
                gamma_k = sr.advance(std::log(m_k), eps);
                node.budget -= 1;
            }
        }
        double gamma_tot = node.gamma_total + gamma_k;
        long double d_k = sr.D;
        double ln_m_sum = node.ln_m_sum + std::log(m_k);
        node.sched.M.push_back(m_k);
        node.sched.gamma.push_back(gamma_k);

        for (int s : {1, 0}) {
            double w = s ? cp.q : 1.0 - cp.q;
            if (w <= 0.0) continue;
            GridPmf conv = detail::scaled(s ? conv_good : convolve_fast(node.pmf, b0),
                                          static_cast<long double>(w));
            long double stopped = detail::absorb_crossing(conv, gamma_tot);
            blocks += static_cast<double>(stopped) * k;
            nats += static_cast<double>(stopped) * ln_m_sum;
            cert += stopped * d_k;
            long double alive = conv.total_mass();
            if (alive <= 0.0L) continue;
            if (alive < static_cast<long double>(p_min) || k == horizon) {
                charge_unresolved(alive, ln_m_sum);
                continue;
            }
            detail::SfNode child;
            child.pmf = std::move(conv);
            child.gamma_total = gamma_tot;
            child.slot_weight = d_k;
            child.ln_m_sum = ln_m_sum;
            child.budget = node.budget;
            child.sched = node.sched;
            lineage.push_back(std::move(child));
        }
    };

    if (root_spawned) {
        // the pool emptied before any block was sent: block 1 carries the
        // given message space, never a decision
        detail::SfNode root;
        root.pmf = point_mass(0.0, step);
        root.budget = max_expansions;
        if (no_decisions) {
            detail::flat_run(mixture, &root.pmf, gamma1, d1, ln_m1, 0, horizon, blocks, nats,
                             cert, gap);
        } else {
            advance_node(root, 1, true);
        }
    }
    for (int depth = 1; depth < horizon; ++depth) {
        std::vector<detail::SfNode> cur = std::move(spawned[static_cast<std::size_t>(depth)]);
        for (auto& carried : lineage) cur.push_back(std::move(carried));
        lineage.clear();
        for (auto& node : cur) {
            if (node.budget == 0 || no_decisions) {
                detail::flat_run(mixture, &node.pmf, node.gamma_total, node.slot_weight,
                                 node.ln_m_sum, depth, horizon, blocks, nats, cert, gap);
            } else {
                advance_node(node, depth + 1, false);
            }
        }
    }
    for (const auto& node : lineage) charge_unresolved(node.pmf.total_mass(), node.ln_m_sum);

    pt.avg_blocks = blocks;
    pt.avg_nats = nats;
    pt.eps_certified = static_cast<double>(cert);
    pt.truncation_gap = static_cast<double>(gap);
    detail::finalize_point(cp, pt);
    return pt;
}

struct SweepConfig {
    double epsilon = 1e-3;
    double beta = 0.9;
    int n_points = 40;
    int horizon = 20;
    double p_min = 1e-9;
    int max_expansions = 5;
    double step = 0.0;      // 0: resolution chosen from T
    double tail_tol = 1e-12;
    double ln_m1_lo = 0.0;  // 0: calibrate from the delayed-CSIT operating range
    double ln_m1_hi = 0.0;
    double gap_budget = 1e-6;  // calibration cap on unresolved mass at the top point
    std::vector<SchemeKind> schemes = {SchemeKind::fixed, SchemeKind::vld, SchemeKind::vlsf,
                                       SchemeKind::brq_csit, SchemeKind::brq_sf};
};

// Rate curves for the requested schemes over a log-uniform M1 grid. The grid
// endpoints default to the single-message delayed-CSIT operating range: the
// low end stops within about one block, the high end is the largest M1 whose
// unresolved mass stays within gap_budget at this horizon. Fixed-length rows
// come first, one per whole number of blocks; rows are ordered by scheme,
// then M1. threads > 1 splits the points across async jobs; every row is an
// independent evaluation written to its own slot, so the output is identical
// for every thread count.
inline std::vector<SchemeCurvePoint> sweep_curves(const ChannelParams& cp,
                                                  const SweepConfig& cfg, int threads = 1) {
    cp.validate();
    if (cfg.n_points < 1) throw std::domain_error("sweep_curves: n_points < 1");
    if (cfg.horizon < 1) throw std::domain_error("sweep_curves: horizon < 1");
    if (threads < 1) throw std::domain_error("sweep_curves: threads < 1");

    double lo = cfg.ln_m1_lo, hi = cfg.ln_m1_hi;
    double cap = static_cast<double>(cp.T) * cfg.horizon * ln2;
    if (hi <= 0.0) {
        double a = std::log(2.0), b = cap;
        if (scheme_vld(cp, std::exp(b), cfg.epsilon, cfg.horizon, cfg.p_min).truncation_gap <=
            cfg.gap_budget) {
            hi = b;
        } else {
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (a + b);
                double g = scheme_vld(cp, std::exp(mid), cfg.epsilon, cfg.horizon, cfg.p_min)
                               .truncation_gap;
                (g <= cfg.gap_budget ? a : b) = mid;
            }
            hi = a;
        }
    }
    if (lo <= 0.0) {
        double a = std::log(1.0 + cfg.epsilon), b = hi;
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (a + b);
            double n = scheme_vld(cp, std::exp(mid), cfg.epsilon, cfg.horizon, cfg.p_min)
                           .avg_blocks;
            (n <= 1.02 ? a : b) = mid;
        }
        lo = a;
    }
    if (!(lo < hi)) hi = lo + 1e-9;

    auto m1_at = [&](int i) {
        double t = cfg.n_points == 1 ? 0.0
                                     : static_cast<double>(i) / static_cast<double>(cfg.n_points - 1);
        return std::exp(lo + (hi - lo) * t);
    };
    struct Job {
        SchemeKind k;
        int i;  // block count for fixed rows, grid index otherwise
    };
    std::vector<Job> jobs;
    for (SchemeKind k : {SchemeKind::fixed, SchemeKind::vld, SchemeKind::vlsf,
                         SchemeKind::brq_csit, SchemeKind::brq_sf}) {
        if (std::find(cfg.schemes.begin(), cfg.schemes.end(), k) == cfg.schemes.end()) continue;
        if (k == SchemeKind::fixed)
            for (int n = 1; n <= cfg.horizon; ++n) jobs.push_back({k, n});
        else
            for (int i = 0; i < cfg.n_points; ++i) jobs.push_back({k, i});
    }

    auto eval = [&](const Job& j) -> SchemeCurvePoint {
        switch (j.k) {
            case SchemeKind::fixed:
                return scheme_fixed(cp, j.i, cfg.epsilon);
            case SchemeKind::vld:
                return scheme_vld(cp, m1_at(j.i), cfg.epsilon, cfg.horizon, cfg.p_min);
            case SchemeKind::vlsf:
                return scheme_vlsf(cp, m1_at(j.i), cfg.epsilon, cfg.horizon, cfg.step,
                                   cfg.tail_tol);
            case SchemeKind::brq_csit:
                return scheme_brq_csit(cp, m1_at(j.i), cfg.epsilon, cfg.horizon, cfg.p_min,
                                       cfg.max_expansions);
            default:
                return scheme_brq_sf(cp, m1_at(j.i), cfg.epsilon, cfg.beta, cfg.horizon,
                                     cfg.p_min, cfg.max_expansions, cfg.step, cfg.tail_tol);
        }
    };

    std::vector<SchemeCurvePoint> out(jobs.size());
    const int slices = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(threads), jobs.size()));
    if (slices <= 1) {
        for (std::size_t idx = 0; idx < jobs.size(); ++idx) out[idx] = eval(jobs[idx]);
        return out;
    }
    const std::size_t chunk = (jobs.size() + static_cast<std::size_t>(slices) - 1) /
                              static_cast<std::size_t>(slices);
    std::vector<std::future<void>> futs;
    futs.reserve(static_cast<std::size_t>(slices));
    for (int w = 0; w < slices; ++w) {
        const std::size_t jlo = static_cast<std::size_t>(w) * chunk;
        const std::size_t jhi = std::min(jobs.size(), jlo + chunk);
        futs.push_back(std::async(std::launch::async, [jlo, jhi, &jobs, &out, &eval] {
            for (std::size_t idx = jlo; idx < jhi; ++idx) out[idx] = eval(jobs[idx]);
        }));
    }
    for (auto& f : futs) f.get();
    return out;
}

}  // namespace blockfade
