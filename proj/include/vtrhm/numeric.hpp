#pragma once

#include <cmath>
#include <limits>

namespace vtrhm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Kahan-compensated accumulator.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

// Streaming log-sum-exp: keeps a running maximum and a max-shifted mantissa
// sum, so terms can be folded in one at a time in a fixed order.
struct LogSumExp {
    double max = kNegInf;
    double mantissa = 0.0;  // sum of exp(x - max)

    void add(double x) {
        if (x == kNegInf) return;
        if (x <= max) {
            mantissa += std::exp(x - max);
        } else {
            mantissa = (max == kNegInf) ? 1.0 : mantissa * std::exp(max - x) + 1.0;
            max = x;
        }
    }
    double value() const { return (max == kNegInf) ? kNegInf : max + std::log(mantissa); }
};

inline double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    return (a > b) ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace vtrhm
