#pragma once

// Two-state block-fading binary symmetric channel: each block of T uses sees
// crossover delta1 (state 1, probability q) or delta0 (state 0). The receiver
// knows the state sequence; the transmitter learns each state one block late.
// Asymptotic quantities (capacity, dispersion, normal approximation) live here.
//
// Unit convention: internal computation in nats, reported rates and capacity
// in bits per channel use. Dispersion is kept in nats^2 so that
// normal_approx_rate can combine it with the nats capacity before the single
// conversion to bits at the end.

#include <cmath>
#include <stdexcept>

namespace blockfade {

inline constexpr double ln2 = 0.6931471805599453094172321;

struct ChannelParams {
    double delta0 = 0.30;  // bad-state crossover
    double delta1 = 0.05;  // good-state crossover, delta1 <= delta0
    double q = 0.6;        // P(state = 1) per block
    int T = 100;           // channel uses per block

    // delta1 == delta0 is allowed (degenerate no-fading configuration).
    void validate() const {
        if (!(delta1 >= 0.0 && delta1 <= delta0 && delta0 <= 0.5))
            throw std::domain_error("require 0 <= delta1 <= delta0 <= 0.5");
        if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("q outside [0,1]");
        if (T < 1) throw std::domain_error("T must be >= 1");
    }
    double delta(int state) const { return state ? delta1 : delta0; }
};

enum class LogBase { two, e };
enum class DispersionUnit { per_use, per_block };

struct SecondOrderResult {
    double capacity_bits = 0.0;      // bits / channel use
    double dispersion_per_use = 0.0; // nats^2 / channel use
    double rate_bits = 0.0;          // bits / channel use at the queried (n, eps)
};

// h(p); 0*log 0 := 0.
inline double binary_entropy(double p, LogBase base = LogBase::two) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("entropy arg outside [0,1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    double h = -p * std::log(p) - (1.0 - p) * std::log1p(-p);
    return base == LogBase::two ? h / ln2 : h;
}

// C = 1 - q h(delta1) - (1-q) h(delta0), bits per channel use.
inline double capacity(const ChannelParams& cp) {
    cp.validate();
    return 1.0 - cp.q * binary_entropy(cp.delta1)
               - (1.0 - cp.q) * binary_entropy(cp.delta0);
}

inline double capacity_nats(const ChannelParams& cp) { return capacity(cp) * ln2; }

// Dispersion in nats^2:
//   V = E[ delta_S (1-delta_S) ln((1-delta_S)/delta_S)^2 ]
//     + T q (1-q) (h(delta0) - h(delta1))^2,   entropies in nats, S ~ Bern(q).
// The first term is the per-use variance of the information density given the
// state; the second comes from the state drawn once per block, hence the T
// factor. q in {0,1} or delta0 == delta1 collapses it to the BSC dispersion.
inline double dispersion(const ChannelParams& cp, DispersionUnit unit = DispersionUnit::per_use) {
    cp.validate();
    auto noise_var = [](double d) {
        if (d == 0.0 || d == 0.5 || d == 1.0) return 0.0;
        double l = std::log((1.0 - d) / d);
        return d * (1.0 - d) * l * l;
    };
    double t1 = cp.q * noise_var(cp.delta1) + (1.0 - cp.q) * noise_var(cp.delta0);
    double dh = binary_entropy(cp.delta0, LogBase::e) - binary_entropy(cp.delta1, LogBase::e);
    double v = t1 + static_cast<double>(cp.T) * cp.q * (1.0 - cp.q) * dh * dh;
    return unit == DispersionUnit::per_use ? v : v * static_cast<double>(cp.T);
}

namespace detail {

// Inverse standard normal CDF, rational approximation (Acklam's coefficients).
// Refined in inverse_q with two Newton steps; do not use unrefined.
inline double norm_icdf_seed(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    if (p < plow) {
        double u = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
               ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    }
    if (p > phigh) {
        double u = std::sqrt(-2.0 * std::log1p(-p));
        return -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
               ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    }
    double u = p - 0.5, r = u * u;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

// Gaussian Q function, Q(x) = P(N(0,1) > x).
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Q^{-1}(eps) for eps in (0,1); exactly 0 at eps = 0.5. Rational seed plus two
// Newton steps; Q(Q^{-1}(eps)) = eps to relative 1e-10 over eps in [1e-9, 0.5].
inline double inverse_q(double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("inverse_q: eps outside (0,1)");
    if (eps == 0.5) return 0.0;
    double x = -detail::norm_icdf_seed(eps);
    const double inv_sqrt_2pi = 0.3989422804014326779399461;
    for (int it = 0; it < 2; ++it) {
        double phi = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        if (phi <= 0.0) break;
        x += (q_function(x) - eps) / phi;
    }
    return x;
}

// Second-order rate approximation C - sqrt(V/n) Q^{-1}(eps), bits per channel
// use over n uses. The vanishing remainder term is omitted; the result may be
// negative for tiny n and is returned as-is.
inline double normal_approx_rate(const ChannelParams& cp, double n_uses, double eps) {
    if (n_uses < 1.0) throw std::domain_error("normal_approx_rate: n < 1");
    if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("normal_approx_rate: eps outside (0,1)");
    double c_nats = capacity_nats(cp);
    double v = dispersion(cp);
    return (c_nats - std::sqrt(v / n_uses) * inverse_q(eps)) / ln2;
}

inline SecondOrderResult second_order(const ChannelParams& cp, double n_uses, double eps) {
    SecondOrderResult r;
    r.capacity_bits = capacity(cp);
    r.dispersion_per_use = dispersion(cp);
    r.rate_bits = normal_approx_rate(cp, n_uses, eps);
    return r;
}

}  // namespace blockfade
