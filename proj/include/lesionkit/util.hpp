#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lesionkit {

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ContractViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Compensated (Kahan) accumulator. Keeps long sums deterministic to well
/// below 1e-9 regardless of magnitude spread.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

/// Percentile by linear interpolation between order statistics, the single
/// definition used toolkit-wide (intensity rescaling and HD95 alike).
/// `sorted` must be ascending and non-empty; p in [0,100].
template <typename T>
double percentile_sorted(const std::vector<T>& sorted, double p) {
    if (sorted.empty())
        throw ValidationError("percentile: empty value list");
    if (!(p >= 0.0 && p <= 100.0))
        throw ValidationError("percentile: p must be in [0,100], got " + std::to_string(p));
    const std::size_t n = sorted.size();
    if (n == 1)
        return static_cast<double>(sorted[0]);
    const double rank = p / 100.0 * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= n)
        return static_cast<double>(sorted[n - 1]);
    const double frac = rank - static_cast<double>(lo);
    const double a = static_cast<double>(sorted[lo]);
    const double b = static_cast<double>(sorted[lo + 1]);
    return a + frac * (b - a);
}

template <typename T>
double percentile(std::vector<T> values, double p) {
    std::sort(values.begin(), values.end());
    return percentile_sorted(values, p);
}

namespace detail {

/// splitmix64 step; used to derive independent RNG streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace detail

} // namespace lesionkit
