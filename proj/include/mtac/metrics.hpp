#ifndef MTAC_METRICS_HPP
#define MTAC_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "common.hpp"

namespace mtac {

/// Average per-task relative change against a baseline, in percent:
/// (1/K) sum_k (-1)^{delta_k} (M_m,k - M_b,k) / M_b,k * 100, where delta_k = 1
/// when larger values are better. Lower is better.
inline double delta_m_percent(const std::vector<double>& method, const std::vector<double>& baseline,
                              const std::vector<bool>& larger_is_better) {
    if (method.size() != baseline.size() || method.size() != larger_is_better.size())
        throw ConfigError("delta_m_percent: metric vectors differ in length");
    if (method.empty()) throw ConfigError("delta_m_percent: no metrics");
    double total = 0.0;
    for (std::size_t k = 0; k < method.size(); ++k) {
        if (baseline[k] == 0.0)
            throw std::domain_error("delta_m_percent: division by zero baseline entry at index " + std::to_string(k));
        const double sign = larger_is_better[k] ? -1.0 : 1.0;
        total += sign * (method[k] - baseline[k]) / baseline[k];
    }
    return total / static_cast<double>(method.size()) * 100.0;
}

/// Least-squares slope of ys against 0, 1, ..., n-1; NaN entries are skipped.
inline double least_squares_slope(const std::vector<double>& ys) {
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        if (std::isnan(ys[i])) continue;
        const double x = static_cast<double>(i);
        n += 1;
        sx += x;
        sy += ys[i];
        sxx += x * x;
        sxy += x * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (n < 2 || denom == 0.0) return NAN;
    return (n * sxy - sx * sy) / denom;
}

/// Median of the non-NaN entries (mean of the middle pair for even counts).
inline double median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (!std::isnan(x)) {
            s += x;
            ++n;
        }
    return n ? s / static_cast<double>(n) : NAN;
}

}  // namespace mtac

#endif  // MTAC_METRICS_HPP
