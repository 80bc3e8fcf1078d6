#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace blockfade::detail {

// Binomial(n, p) pmf in long double via lgammal; handles p in {0, 1} exactly.
inline std::vector<long double> binomial_pmf(int n, double p) {
    if (n < 0 || p < 0.0 || p > 1.0) throw std::domain_error("binomial_pmf: bad args");
    std::vector<long double> out(static_cast<std::size_t>(n) + 1, 0.0L);
    if (p == 0.0) {
        out[0] = 1.0L;
        return out;
    }
    if (p == 1.0) {
        out[static_cast<std::size_t>(n)] = 1.0L;
        return out;
    }
    long double lp = std::log(static_cast<long double>(p));
    long double lq = std::log1p(-static_cast<long double>(p));
    long double lgn = lgammal(static_cast<long double>(n) + 1.0L);
    for (int k = 0; k <= n; ++k) {
        long double lw = lgn - lgammal(static_cast<long double>(k) + 1.0L) -
                         lgammal(static_cast<long double>(n - k) + 1.0L) +
                         static_cast<long double>(k) * lp +
                         static_cast<long double>(n - k) * lq;
        out[static_cast<std::size_t>(k)] = expl(lw);
    }
    return out;
}

}  // namespace blockfade::detail
