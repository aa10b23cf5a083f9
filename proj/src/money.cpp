#include "primes/money.hpp"

#include "primes/error.hpp"

#include <algorithm>

namespace primes {

namespace {

constexpr int128_t pow10(int n) {
    int128_t v = 1;
    for (int i = 0; i < n; ++i) {
        v *= 10;
    }
    return v;
}

constexpr int128_t kScale = pow10(Money::kScaleDigits);

std::string u128_to_string(uint128_t v) {
    if (v == 0) {
        return "0";
    }
    std::string out;
    while (v > 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

} // namespace

Money Money::parse(std::string_view decimal) {
    const std::string original(decimal);
    bool negative = false;
    if (!decimal.empty() && (decimal.front() == '-' || decimal.front() == '+')) {
        negative = decimal.front() == '-';
        decimal.remove_prefix(1);
    }
    if (decimal.empty()) {
        throw ValidationError("invalid decimal amount: '" + original + "'");
    }
    int128_t whole = 0;
    int128_t frac = 0;
    int frac_digits = 0;
    bool seen_point = false;
    bool seen_digit = false;
    for (const char c : decimal) {
        if (c == '.') {
            if (seen_point) {
                throw ValidationError("invalid decimal amount: '" + original + "'");
            }
            seen_point = true;
            continue;
        }
        if (c < '0' || c > '9') {
            throw ValidationError("invalid decimal amount: '" + original + "'");
        }
        seen_digit = true;
        if (seen_point) {
            if (++frac_digits > kScaleDigits) {
                throw ValidationError("too many fractional digits in '" + original + "'");
            }
            frac = frac * 10 + (c - '0');
        } else {
            whole = whole * 10 + (c - '0');
            if (whole > pow10(24)) {
                throw ValidationError("decimal amount out of range: '" + original + "'");
            }
        }
    }
    if (!seen_digit) {
        throw ValidationError("invalid decimal amount: '" + original + "'");
    }
    int128_t units = whole * kScale + frac * pow10(kScaleDigits - frac_digits);
    return Money(negative ? -units : units);
}

std::string Money::to_string() const {
    const int digits = std::max(1, fractional_digits());
    return to_string(digits);
}

std::string Money::to_string(int places) const {
    if (places < 0 || places > kScaleDigits) {
        throw ConfigError("Money::to_string: places must be within 0..12");
    }
    const bool negative = units_ < 0;
    auto magnitude = static_cast<uint128_t>(negative ? -units_ : units_);
    const auto divisor = static_cast<uint128_t>(pow10(kScaleDigits - places));
    auto quotient = magnitude / divisor;
    const auto remainder = magnitude % divisor;
    const auto twice = remainder * 2;
    if (twice > divisor || (twice == divisor && (quotient % 2) == 1)) {
        ++quotient;
    }
    const auto unit = static_cast<uint128_t>(pow10(places));
    std::string out = u128_to_string(quotient / unit);
    if (places > 0) {
        std::string frac = u128_to_string(quotient % unit);
        out += '.';
        out.append(static_cast<std::size_t>(places) - frac.size(), '0');
        out += frac;
    }
    if (negative && quotient != 0) {
        out.insert(out.begin(), '-');
    }
    return out;
}

int Money::fractional_digits() const {
    int128_t frac = units_ % kScale;
    if (frac < 0) {
        frac = -frac;
    }
    if (frac == 0) {
        return 0;
    }
    int digits = kScaleDigits;
    while (frac % 10 == 0) {
        frac /= 10;
        --digits;
    }
    return digits;
}

double Money::to_double() const {
    return static_cast<double>(units_ / kScale) + static_cast<double>(units_ % kScale) / 1e12;
}

} // namespace primes
