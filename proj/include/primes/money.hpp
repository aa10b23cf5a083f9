#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace primes {

__extension__ typedef __int128 int128_t;
__extension__ typedef unsigned __int128 uint128_t;

/// Exact fixed-point currency amount with 12 fractional digits.
///
/// Token prices are quoted per million tokens with at most six decimals, so
/// `tokens * price / 1e6` is always representable without rounding. Rounding
/// happens only when formatting for display.
class Money {
public:
    static constexpr int kScaleDigits = 12;

    constexpr Money() = default;

    /// Parses "5", "5.00", "0.0175", "-1.5". Throws ValidationError on more than
    /// 12 fractional digits or malformed input.
    static Money parse(std::string_view decimal);
    static constexpr Money from_units(int128_t units) { return Money(units); }

    /// Raw count of 1e-12 currency units.
    constexpr int128_t units() const { return units_; }

    /// Exact decimal string with all significant fractional digits (trailing
    /// zeros trimmed, at least one fractional digit kept).
    std::string to_string() const;

    /// Rounded half-to-even to `places` decimals (0..12).
    std::string to_string(int places) const;

    /// Number of fractional digits actually used (0..12).
    int fractional_digits() const;

    double to_double() const;

    constexpr Money operator+(Money other) const { return Money(units_ + other.units_); }
    constexpr Money& operator+=(Money other) {
        units_ += other.units_;
        return *this;
    }
    constexpr auto operator<=>(const Money&) const = default;

private:
    constexpr explicit Money(int128_t units) : units_(units) {}
    int128_t units_ = 0;
};

} // namespace primes
