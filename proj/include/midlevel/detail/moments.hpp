#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace midlevel::detail {

inline double mean(std::span<const double> x) noexcept
{
    double s = 0.0;
    for (double v : x)
        s += v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

/// Population (1/N) variance.
inline double population_variance(std::span<const double> x) noexcept
{
    if (x.empty())
        return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x)
        s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

/// Pearson correlation; NaN when either input has zero spread. Lengths must match.
inline double correlation(std::span<const double> x, std::span<const double> y) noexcept
{
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        return std::nan("");
    const double r = sxy / std::sqrt(sxx * syy);
    return r > 1.0 ? 1.0 : (r < -1.0 ? -1.0 : r);
}

} // namespace midlevel::detail
