#include "firststep/numeric.hpp"

#include <cctype>
#include <stdexcept>

namespace firststep {

std::optional<Number> Number::parse_decimal(std::string_view text) {
    if (text.empty()) return std::nullopt;
    std::size_t i = 0;
    bool negative = false;
    if (text[i] == '+' || text[i] == '-') {
        negative = text[i] == '-';
        ++i;
    }
    BigInt units = 0;
    int frac_digits = 0;
    bool seen_digit = false, seen_point = false;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c >= '0' && c <= '9') {
            units = units * 10 + (c - '0');
            if (seen_point) ++frac_digits;
            seen_digit = true;
        } else if (c == '.' && !seen_point && seen_digit) {
            seen_point = true;
        } else {
            return std::nullopt;
        }
    }
    if (!seen_digit) return std::nullopt;
    if (seen_point && frac_digits == 0) return std::nullopt;
    BigInt den = 1;
    for (int k = 0; k < frac_digits; ++k) den *= 10;
    BigRat v(units, den);
    if (negative) v = -v;
    return Number(v);
}

bool Number::is_integer() const { return boost::multiprecision::denominator(v_) == 1; }

Number Number::abs() const { return v_ < 0 ? Number(BigRat(-v_)) : *this; }

Number Number::operator/(const Number& o) const {
    if (o.v_.is_zero()) throw std::domain_error("division by zero");
    return Number(BigRat(v_ / o.v_));
}

std::string Number::str() const {
    BigInt num = boost::multiprecision::numerator(v_);
    BigInt den = boost::multiprecision::denominator(v_);
    bool negative = num < 0;
    if (negative) num = -num;

    // Factor the denominator as 2^a * 5^b * rest.
    BigInt rest = den;
    int twos = 0, fives = 0;
    while (rest % 2 == 0) {
        rest /= 2;
        ++twos;
    }
    while (rest % 5 == 0) {
        rest /= 5;
        ++fives;
    }
    if (rest != 1) {
        // Non-terminating decimal; print the exact fraction.
        std::string s = num.str() + "/" + den.str();
        return negative ? "-" + s : s;
    }
    int scale = twos > fives ? twos : fives;
    for (int k = fives; k < scale; ++k) num *= 5;
    for (int k = twos; k < scale; ++k) num *= 2;
    std::string digits = num.str();
    std::string out;
    if (scale == 0) {
        out = digits;
    } else {
        if (static_cast<int>(digits.size()) <= scale)
            digits.insert(0, scale - digits.size() + 1, '0');
        out = digits.substr(0, digits.size() - scale) + "." + digits.substr(digits.size() - scale);
        while (out.back() == '0') out.pop_back();
        if (out.back() == '.') out.pop_back();
    }
    return negative ? "-" + out : out;
}

}  // namespace firststep
