#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace firststep {

using BigInt = boost::multiprecision::cpp_int;
using BigRat = boost::multiprecision::cpp_rational;

// Exact number for gold answers, annotation values and extracted answers.
// Internally a rational so that chained division stays exact; parsing and
// printing are decimal-aware (17.50 == 17.5, prints as "17.5").
class Number {
public:
    Number() : v_(0) {}
    Number(long long v) : v_(v) {}  // NOLINT: implicit by design for literals
    explicit Number(BigRat v) : v_(std::move(v)) {}

    // Strict decimal parse: [+-]? digits [ '.' digits ]  (no exponents, no
    // separators; callers strip decorations first). Empty/garbage -> nullopt.
    static std::optional<Number> parse_decimal(std::string_view text);

    const BigRat& rat() const { return v_; }

    bool is_integer() const;
    bool is_zero() const { return v_.is_zero(); }
    Number abs() const;

    // Exact decimal string when the reduced denominator is 2^a*5^b, else
    // "num/den". Never loses information.
    std::string str() const;
    double to_double() const { return v_.convert_to<double>(); }

    Number operator+(const Number& o) const { return Number(BigRat(v_ + o.v_)); }
    Number operator-(const Number& o) const { return Number(BigRat(v_ - o.v_)); }
    Number operator*(const Number& o) const { return Number(BigRat(v_ * o.v_)); }
    // Throws std::domain_error on division by zero.
    Number operator/(const Number& o) const;
    Number operator-() const { return Number(BigRat(-v_)); }

    bool operator==(const Number& o) const { return v_ == o.v_; }
    bool operator!=(const Number& o) const { return v_ != o.v_; }
    bool operator<(const Number& o) const { return v_ < o.v_; }
    bool operator<=(const Number& o) const { return v_ <= o.v_; }
    bool operator>(const Number& o) const { return v_ > o.v_; }
    bool operator>=(const Number& o) const { return v_ >= o.v_; }

private:
    BigRat v_;
};

}  // namespace firststep
