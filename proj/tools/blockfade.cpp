// Command-line front end: error bounds for a message schedule, rate curves
// for the five transmission schemes, and Monte Carlo validation runs.
//
// Subcommands: bounds | curves | simulate. Every option can also come from a
// flat "key = value" config file (# comments) given as --config; explicit
// flags override file values and unknown keys are rejected. Exit codes:
// 0 ok, 1 usage, 2 invalid or infeasible configuration, 3 runtime failure
// (including a simulation landing above its bound).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "blockfade/schemes.hpp"
#include "blockfade/simulate.hpp"

namespace {

using nlohmann::json;
using namespace blockfade;

std::string g10(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.10g", v);
    return b;
}

const char* kind_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::fixed: return "fixed";
        case SchemeKind::vld: return "vld";
        case SchemeKind::vlsf: return "vlsf";
        case SchemeKind::brq_csit: return "brq_csit";
        default: return "brq_sf";
    }
}

SchemeKind kind_from(const std::string& s) {
    for (SchemeKind k : {SchemeKind::fixed, SchemeKind::vld, SchemeKind::vlsf,
                         SchemeKind::brq_csit, SchemeKind::brq_sf})
        if (s == kind_name(k)) return k;
    throw std::domain_error("unknown scheme name: " + s);
}

struct ChannelOpts {
    double delta0 = 0.30;
    double delta1 = 0.05;
    double q = 0.6;
    int T = 100;

    ChannelParams params() const {
        const ChannelParams cp{delta0, delta1, q, T};
        cp.validate();
        return cp;
    }
    json to_json() const {
        return {{"delta0", delta0}, {"delta1", delta1}, {"q", q}, {"T", T}};
    }
};

void add_channel_flags(CLI::App* cmd, ChannelOpts& ch) {
    cmd->add_option("--delta0", ch.delta0, "bad-state crossover probability")
        ->capture_default_str();
    cmd->add_option("--delta1", ch.delta1, "good-state crossover probability")
        ->capture_default_str();
    cmd->add_option("--q", ch.q, "probability of the good state per block")
        ->capture_default_str();
    cmd->add_option("--T", ch.T, "channel uses per block")->capture_default_str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file: " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------- bounds --

struct BoundsOpts {
    ChannelOpts ch;
    std::vector<double> M;
    std::vector<int> states;
    std::string method = "both";
    double step = 0.0;
    std::string out;
};

json breakdown_json(const BoundBreakdown& b) {
    return {{"epsilon_bound", b.epsilon_bound},
            {"missed_detection", b.missed_detection_term},
            {"confusion_terms", b.confusion_terms}};
}

void print_breakdown(const char* label, const BoundBreakdown& b) {
    std::printf("%-6s epsilon_bound = %s  (missed detection %s", label,
                g10(b.epsilon_bound).c_str(), g10(b.missed_detection_term).c_str());
    std::printf(", confusion");
    for (double c : b.confusion_terms) std::printf(" %s", g10(c).c_str());
    std::printf(")\n");
}

int cmd_bounds(const BoundsOpts& o) {
    const ChannelParams cp = o.ch.params();
    MessageSchedule sched;
    sched.M = o.M;
    json j{{"channel", o.ch.to_json()}, {"states", o.states}, {"M", o.M}};

    if (o.method == "thm1" || o.method == "both") {
        const BoundBreakdown b = ems_bound_thm1(cp, o.states, sched, o.step);
        print_breakdown("thm1", b);
        j["thm1"] = breakdown_json(b);
    }
    if (o.method == "prop1" || o.method == "both") {
        const BoundBreakdown b = ems_bound_prop1(cp, o.states, sched, o.step);
        print_breakdown("prop1", b);
        j["prop1"] = breakdown_json(b);
    }
    if (o.method == "both") {
        const double d = std::abs(j["thm1"]["epsilon_bound"].get<double>() -
                                  j["prop1"]["epsilon_bound"].get<double>());
        std::printf("|thm1 - prop1| = %s\n", g10(d).c_str());
        j["difference"] = d;
    }
    std::printf("%s\n", j.dump(2).c_str());
    if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------- curves --

struct CurvesOpts {
    ChannelOpts ch;
    double epsilon = 1e-3;
    double beta = 0.9;
    int n_points = 40;
    int horizon = 20;
    double p_min = 1e-9;
    int max_expansions = 5;
    double step = 0.0;
    double tail_tol = 1e-12;
    double m1_lo = 0.0;
    double m1_hi = 0.0;
    double gap_budget = 1e-6;
    std::vector<std::string> schemes;
    int threads = 1;
    std::string out;
    std::string svg;
};

std::string curves_csv(const std::vector<SchemeCurvePoint>& rows, double cap_bits) {
    std::string csv =
        "scheme,M1,epsilon,avg_blocks,avg_blocklength,avg_nats,rate_bits,"
        "eps_certified,truncation_gap\n";
    csv += "capacity,0,0,0,0,0," + g10(cap_bits) + ",0,0\n";
    for (const auto& r : rows) {
        csv += kind_name(r.scheme);
        for (double v : {r.M1, r.epsilon_target, r.avg_blocks, r.avg_blocklength,
                         r.avg_nats, r.rate_bits, r.eps_certified, r.truncation_gap})
            csv += "," + g10(v);
        csv += "\n";
    }
    return csv;
}

// Minimal polyline chart: rate (bits/use) against average blocklength, one
// path per scheme plus the capacity line. The CSV is the authoritative
// artifact; this is a quick visual check.
std::string curves_svg(const std::vector<SchemeCurvePoint>& rows, double cap_bits) {
    const double W = 720, H = 480, L = 64, R = 560, Tm = 24, B = 432;
    double xmax = 1.0;
    for (const auto& r : rows) xmax = std::max(xmax, r.avg_blocklength);
    const double ymax = cap_bits * 1.08;
    const auto X = [&](double v) { return L + (R - L) * v / xmax; };
    const auto Y = [&](double v) { return B - (B - Tm) * v / ymax; };

    const struct { SchemeKind k; const char* color; } series[] = {
        {SchemeKind::fixed, "#888888"},    {SchemeKind::vld, "#1f77b4"},
        {SchemeKind::vlsf, "#2ca02c"},     {SchemeKind::brq_csit, "#d62728"},
        {SchemeKind::brq_sf, "#9467bd"},
    };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
      << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << B << "\" x2=\"" << R << "\" y2=\"" << B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << B
      << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmax * i / 4.0, yv = ymax * i / 4.0;
        s << "<text x=\"" << X(xv) << "\" y=\"" << B + 18
          << "\" font-size=\"11\" text-anchor=\"middle\">" << g10(xv) << "</text>\n"
          << "<text x=\"" << L - 6 << "\" y=\"" << Y(yv) + 4
          << "\" font-size=\"11\" text-anchor=\"end\">" << g10(yv) << "</text>\n";
    }
    s << "<text x=\"" << (L + R) / 2 << "\" y=\"" << H - 8
      << "\" font-size=\"12\" text-anchor=\"middle\">average blocklength (channel uses)"
      << "</text>\n"
      << "<text x=\"14\" y=\"" << (Tm + B) / 2
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << (Tm + B) / 2 << ")\">rate (bits / use)</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << Y(cap_bits) << "\" x2=\"" << R << "\" y2=\""
      << Y(cap_bits) << "\" stroke=\"black\" stroke-dasharray=\"6 4\"/>\n"
      << "<text x=\"" << R + 8 << "\" y=\"" << Y(cap_bits) + 4
      << "\" font-size=\"11\">capacity</text>\n";
    double legend_y = Tm + 12;
    for (const auto& sr : series) {
        std::string pts;
        for (const auto& r : rows)
            if (r.scheme == sr.k)
                pts += g10(X(r.avg_blocklength)) + "," + g10(Y(r.rate_bits)) + " ";
        if (pts.empty()) continue;
        s << "<polyline fill=\"none\" stroke=\"" << sr.color << "\" stroke-width=\"1.5\" points=\""
          << pts << "\"/>\n"
          << "<line x1=\"" << R + 8 << "\" y1=\"" << legend_y << "\" x2=\"" << R + 28
          << "\" y2=\"" << legend_y << "\" stroke=\"" << sr.color
          << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << R + 34 << "\" y=\"" << legend_y + 4 << "\" font-size=\"11\">"
          << kind_name(sr.k) << "</text>\n";
        legend_y += 18;
    }
    s << "</svg>\n";
    return s.str();
}

int cmd_curves(const CurvesOpts& o) {
    const ChannelParams cp = o.ch.params();
    SweepConfig cfg;
    cfg.epsilon = o.epsilon;
    cfg.beta = o.beta;
    cfg.n_points = o.n_points;
    cfg.horizon = o.horizon;
    cfg.p_min = o.p_min;
    cfg.max_expansions = o.max_expansions;
    cfg.step = o.step;
    cfg.tail_tol = o.tail_tol;
    cfg.gap_budget = o.gap_budget;
    if (o.m1_lo > 0.0) cfg.ln_m1_lo = std::log(o.m1_lo);
    if (o.m1_hi > 0.0) cfg.ln_m1_hi = std::log(o.m1_hi);
    if (!o.schemes.empty()) {
        cfg.schemes.clear();
        for (const auto& s : o.schemes) cfg.schemes.push_back(kind_from(s));
    }

    const std::vector<SchemeCurvePoint> rows = sweep_curves(cp, cfg, o.threads);
    const double cap_bits = capacity(cp);
    const std::string csv = curves_csv(rows, cap_bits);
    if (o.out.empty())
        std::fwrite(csv.data(), 1, csv.size(), stdout);
    else
        write_text(o.out, csv);
    if (!o.svg.empty()) write_text(o.svg, curves_svg(rows, cap_bits));
    return 0;
}

// -------------------------------------------------------------- simulate --

struct SimOpts {
    ChannelOpts ch{0.30, 0.05, 0.6, 8};
    std::string mode;
    std::vector<int> M;
    std::vector<int> states;
    int horizon = 0;
    long long trials = 100000;
    std::uint64_t seed = 1;
    int threads = 1;
    double eps = 1e-2;
    std::vector<double> gamma;
    double bound_step = 5e-5;
    std::string out;
};

int cmd_simulate(const SimOpts& o) {
    const ChannelParams cp = o.ch.params();
    json j{{"mode", o.mode},   {"channel", o.ch.to_json()}, {"M", o.M},
           {"trials", o.trials}, {"seed", o.seed}};

    TrialReport r;
    bool pass = true;
    std::string verdict;
    if (o.mode == "ems") {
        r = run_feinstein_trials(cp, o.M, o.states, o.trials, o.seed, o.threads);
        j["states"] = o.states;
        const double sigma =
            std::sqrt(r.error_rate * (1.0 - r.error_rate) / static_cast<double>(r.trials));
        pass = r.error_rate <= r.bound_value + 3.0 * sigma;
        verdict = "bound check: empirical " + g10(r.error_rate) + " <= bound " +
                  g10(r.bound_value) + " + 3*sigma " + g10(3.0 * sigma) +
                  (pass ? " -> PASS" : " -> FAIL");
    } else {
        // full state pattern: tile the given states up to the horizon
        std::vector<int> states = o.states;
        if (o.horizon > 0) {
            if (states.empty()) throw std::domain_error("simulate: empty states");
            while (static_cast<int>(states.size()) < o.horizon)
                states.push_back(o.states[states.size() % o.states.size()]);
            states.resize(static_cast<std::size_t>(o.horizon));
        }
        std::vector<double> gam = o.gamma;
        if (gam.empty()) {
            MessageSchedule sched;
            sched.M.assign(o.M.begin(), o.M.end());
            for (std::size_t k = 0; k < states.size(); ++k) {
                sched.gamma = gam;
                gam.push_back(solve_gamma_for_epsilon(sched, o.eps));
            }
        }
        r = run_emssf_trials(cp, o.M, gam, states, o.trials, o.seed, o.threads,
                             o.bound_step);
        MessageSchedule sched;
        sched.M.assign(o.M.begin(), o.M.end());
        sched.gamma = gam;
        const StopFeedbackBound b = emssf_bound_loosened(cp, states, sched, o.bound_step);
        j["states"] = states;
        j["gamma"] = gam;
        j["expected_tau"] = b.expected_tau;

        const double sigma =
            std::sqrt(r.error_rate * (1.0 - r.error_rate) / static_cast<double>(r.trials));
        const bool err_ok = r.error_rate <= r.bound_value + 3.0 * sigma;
        // slot variance is at most (horizon-1)^2/4, a seed-free worst case
        const double stop_sigma = (static_cast<double>(states.size()) - 1.0) /
                                  (2.0 * std::sqrt(static_cast<double>(r.trials)));
        const bool stop_ok = r.avg_stop_block <= b.expected_tau + 3.0 * stop_sigma;
        pass = err_ok && stop_ok;
        verdict = "bound check: empirical " + g10(r.error_rate) + " <= bound " +
                  g10(r.bound_value) + " + 3*sigma " + g10(3.0 * sigma) +
                  (err_ok ? " -> PASS" : " -> FAIL");
        verdict += "\nlength check: mean stop " + g10(r.avg_stop_block) +
                   " <= expected " + g10(b.expected_tau) + " + 3*sigma " +
                   g10(3.0 * stop_sigma) + (stop_ok ? " -> PASS" : " -> FAIL");
    }

    j["errors"] = r.errors;
    j["error_rate"] = r.error_rate;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    j["avg_stop_block"] = r.avg_stop_block;
    j["bound_value"] = r.bound_value;
    j["pass"] = pass;
    std::printf("%s\n%s\n", j.dump(2).c_str(), verdict.c_str());
    if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
    return pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-blocklength achievable rates for a two-state block-fading "
                 "binary symmetric channel with delayed transmitter state knowledge"};
    app.require_subcommand(1);

    BoundsOpts bo;
    CLI::App* bounds = app.add_subcommand(
        "bounds", "error bounds for one message schedule and state sequence");
    bounds->allow_config_extras(false);
    bounds->set_config("--config", "", "flat key = value file; flags override");
    add_channel_flags(bounds, bo.ch);
    bounds->add_option("--M", bo.M, "per-epoch message cardinalities, e.g. 4,3,2")
        ->delimiter(',')
        ->required();
    bounds->add_option("--states", bo.states, "block states, one per epoch, e.g. 0,1,0")
        ->delimiter(',')
        ->required();
    bounds->add_option("--method", bo.method, "thm1 | prop1 | both")
        ->check(CLI::IsMember({"thm1", "prop1", "both"}))
        ->capture_default_str();
    bounds->add_option("--step", bo.step, "grid resolution in nats (0: exact lattice)")
        ->capture_default_str();
    bounds->add_option("--out", bo.out, "also write the JSON report to this path");

    CurvesOpts co;
    CLI::App* curves = app.add_subcommand(
        "curves", "rate-versus-blocklength sweep for the five schemes (CSV)");
    curves->allow_config_extras(false);
    curves->set_config("--config", "", "flat key = value file; flags override");
    add_channel_flags(curves, co.ch);
    curves->add_option("--epsilon", co.epsilon, "target error probability")
        ->capture_default_str();
    curves->add_option("--beta", co.beta, "stop-feedback expansion trigger threshold")
        ->capture_default_str();
    curves->add_option("--n-points", co.n_points, "grid points per scheme")
        ->capture_default_str();
    curves->add_option("--horizon", co.horizon, "maximum blocks tracked per scheme")
        ->capture_default_str();
    curves->add_option("--p-min", co.p_min, "pruning floor on path probabilities")
        ->capture_default_str();
    curves->add_option("--max-expansions", co.max_expansions,
                       "expansion budget for the backtrack schemes")
        ->capture_default_str();
    curves->add_option("--step", co.step, "grid resolution in nats (0: from T)")
        ->capture_default_str();
    curves->add_option("--tail-tol", co.tail_tol, "per-block tail truncation")
        ->capture_default_str();
    curves->add_option("--m1-lo", co.m1_lo, "lowest M1 on the grid (0: calibrate)")
        ->capture_default_str();
    curves->add_option("--m1-hi", co.m1_hi, "highest M1 on the grid (0: calibrate)")
        ->capture_default_str();
    curves->add_option("--gap-budget", co.gap_budget,
                       "calibration cap on unresolved mass at the top point")
        ->capture_default_str();
    curves->add_option("--schemes", co.schemes,
                       "subset of fixed,vld,vlsf,brq_csit,brq_sf (default all)")
        ->delimiter(',');
    curves->add_option("--threads", co.threads, "parallel sweep jobs; output is identical")
        ->capture_default_str();
    curves->add_option("--out", co.out, "CSV path (default stdout)");
    curves->add_option("--svg", co.svg, "also write a polyline chart to this path");

    SimOpts so;
    CLI::App* simulate = app.add_subcommand(
        "simulate", "Monte Carlo trials against the matching analytic bound");
    simulate->allow_config_extras(false);
    simulate->set_config("--config", "", "flat key = value file; flags override");
    add_channel_flags(simulate, so.ch);
    simulate->add_option("--mode", so.mode, "ems (threshold decoder) | emssf (stop feedback)")
        ->check(CLI::IsMember({"ems", "emssf"}))
        ->required();
    simulate->add_option("--M", so.M, "integer message cardinalities, e.g. 4,3,2")
        ->delimiter(',')
        ->required();
    simulate
        ->add_option("--states", so.states,
                     "block states; ems: one per epoch, emssf: pattern tiled to the horizon")
        ->delimiter(',')
        ->required();
    simulate->add_option("--horizon", so.horizon,
                         "emssf horizon in blocks (0: length of --states)")
        ->capture_default_str();
    simulate->add_option("--trials", so.trials, "Monte Carlo trials")->capture_default_str();
    simulate->add_option("--seed", so.seed, "master seed; the only randomness source")
        ->capture_default_str();
    simulate->add_option("--threads", so.threads, "trial shards; results are identical")
        ->capture_default_str();
    simulate->add_option("--eps", so.eps, "emssf target for the per-slot threshold solve")
        ->capture_default_str();
    simulate->add_option("--gamma", so.gamma,
                         "explicit per-slot threshold increments (emssf; overrides --eps)")
        ->delimiter(',');
    simulate->add_option("--bound-step", so.bound_step,
                         "grid resolution for the emssf reference bound")
        ->capture_default_str();
    simulate->add_option("--out", so.out, "also write the JSON report to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (bounds->parsed()) return cmd_bounds(bo);
        if (curves->parsed()) return cmd_curves(co);
        return cmd_simulate(so);
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
