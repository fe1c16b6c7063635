#pragma once

// Arithmetic evaluator for the calculator tool.
//
// Grammar (whitespace ignored):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := postfix ('^' unary)?          right associative, binds tighter than unary minus
//   postfix := primary '%'*                  x% == x / 100
//   primary := decimal | '(' expr ')'
//
// Decimal literals are read exactly. Results stay rational for + - * / and integer powers;
// a non-integer exponent switches the result to double.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <boost/multiprecision/cpp_int.hpp>

#include "halucheck/tool_result.hpp"
#include "halucheck/unicode.hpp"

namespace halucheck::calc {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// Exponents beyond this magnitude are rejected.
inline constexpr long max_exponent = 4096;
/// Upper bound on the bit size of an exact power result.
inline constexpr std::size_t max_result_bits = 1 << 20;

class CalcError : public ToolError {
public:
    using ToolError::ToolError;
};

class Number {
public:
    Number() = default;
    Number(Rational r) : value_(std::move(r)) {}
    explicit Number(double d) : value_(d) {}

    bool exact() const noexcept { return std::holds_alternative<Rational>(value_); }
    const Rational& rational() const { return std::get<Rational>(value_); }
    double to_double() const {
        return exact() ? static_cast<double>(rational()) : std::get<double>(value_);
    }

    /// Integers print plainly, terminating fractions as decimals, everything else as
    /// "p/q ≈ approx". Doubles use the shortest round-trip form.
    std::string display() const;

    friend bool operator==(const Number& a, const Number& b) { return a.value_ == b.value_; }

private:
    std::variant<Rational, double> value_{Rational(0)};
};

namespace detail {

inline std::string shortest(double d) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, end);
}

/// Decimal expansion of r when its denominator has no prime factors besides 2 and 5.
inline std::optional<std::string> terminating_decimal(const Rational& r) {
    BigInt den = boost::multiprecision::denominator(r);
    unsigned twos = 0, fives = 0;
    while (den % 2 == 0) {
        den /= 2;
        ++twos;
    }
    while (den % 5 == 0) {
        den /= 5;
        ++fives;
    }
    if (den != 1) return std::nullopt;
    const unsigned digits = std::max(twos, fives);
    BigInt num = boost::multiprecision::numerator(r);
    const bool negative = num < 0;
    if (negative) num = -num;
    BigInt scaled = num * boost::multiprecision::pow(BigInt(10), digits) / boost::multiprecision::denominator(r);
    std::string s = scaled.str();
    if (digits > 0) {
        if (s.size() <= digits) s.insert(0, digits - s.size() + 1, '0');
        s.insert(s.size() - digits, ".");
    }
    return negative ? "-" + s : s;
}

}  // namespace detail

inline std::string Number::display() const {
    if (!exact()) return detail::shortest(std::get<double>(value_));
    const Rational& r = rational();
    if (auto dec = detail::terminating_decimal(r)) return *dec;
    char approx[64];
    std::snprintf(approx, sizeof approx, "%.10g", static_cast<double>(r));
    return boost::multiprecision::numerator(r).str() + "/" + boost::multiprecision::denominator(r).str() + " ≈ " +
           approx;
}

/// Exact value of a decimal literal such as "12", "0.5", ".25", "1e-06".
inline Rational parse_decimal(std::string_view text) {
    std::size_t i = 0;
    BigInt digits = 0;
    long scale = 0;
    bool any = false;
    bool negative = false;
    if (i < text.size() && (text[i] == '-' || text[i] == '+')) negative = text[i++] == '-';
    for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i, any = true) digits = digits * 10 + (text[i] - '0');
    if (i < text.size() && text[i] == '.') {
        ++i;
        for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i, any = true) {
            digits = digits * 10 + (text[i] - '0');
            ++scale;
        }
    }
    if (!any) throw CalcError(payload::FailureCode::parse_error, "malformed number '" + std::string(text) + "'");
    if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        long exp = 0;
        auto [p, ec] = std::from_chars(text.data() + i + 1 + (text.size() > i + 1 && text[i + 1] == '+'),
                                       text.data() + text.size(), exp);
        if (ec != std::errc() || p != text.data() + text.size() || std::labs(exp) > 400)
            throw CalcError(payload::FailureCode::parse_error, "malformed number '" + std::string(text) + "'");
        scale -= exp;
        i = text.size();
    }
    if (i != text.size())
        throw CalcError(payload::FailureCode::parse_error, "malformed number '" + std::string(text) + "'");
    Rational value(digits);
    if (scale > 0) value /= Rational(boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(scale)));
    if (scale < 0) value *= Rational(boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(-scale)));
    return negative ? Rational(-value) : value;
}

namespace detail {

inline Number checked_float(double d) {
    if (std::isnan(d)) throw CalcError(payload::FailureCode::math_domain, "result is not a real number");
    if (std::isinf(d)) throw CalcError(payload::FailureCode::overflow, "result overflows");
    return Number(d);
}

inline Number add(const Number& a, const Number& b) {
    if (a.exact() && b.exact()) return Number(Rational(a.rational() + b.rational()));
    return checked_float(a.to_double() + b.to_double());
}
inline Number sub(const Number& a, const Number& b) {
    if (a.exact() && b.exact()) return Number(Rational(a.rational() - b.rational()));
    return checked_float(a.to_double() - b.to_double());
}
inline Number mul(const Number& a, const Number& b) {
    if (a.exact() && b.exact()) return Number(Rational(a.rational() * b.rational()));
    return checked_float(a.to_double() * b.to_double());
}
inline Number div(const Number& a, const Number& b) {
    if (b.exact() ? b.rational() == 0 : b.to_double() == 0.0)
        throw CalcError(payload::FailureCode::division_by_zero, "division by zero");
    if (a.exact() && b.exact()) return Number(Rational(a.rational() / b.rational()));
    return checked_float(a.to_double() / b.to_double());
}
inline Number negate(const Number& a) {
    if (a.exact()) return Number(Rational(-a.rational()));
    return Number(-a.to_double());
}

inline Number power(const Number& base, const Number& exponent) {
    const bool integral_exponent =
        exponent.exact() && boost::multiprecision::denominator(exponent.rational()) == 1;
    if (base.exact() && integral_exponent) {
        const BigInt e = boost::multiprecision::numerator(exponent.rational());
        if (e > max_exponent || e < -max_exponent)
            throw CalcError(payload::FailureCode::overflow,
                            "exponent magnitude exceeds " + std::to_string(max_exponent));
        const long n = e.convert_to<long>();
        const Rational& b = base.rational();
        if (b == 0 && n < 0) throw CalcError(payload::FailureCode::division_by_zero, "zero raised to a negative power");
        const BigInt num = boost::multiprecision::numerator(b);
        const BigInt den = boost::multiprecision::denominator(b);
        const auto bits = [](const BigInt& v) -> std::size_t {
            return v == 0 ? 0 : boost::multiprecision::msb(boost::multiprecision::abs(v)) + 1;
        };
        if (std::max(bits(num), bits(den)) * static_cast<std::size_t>(std::labs(n)) > max_result_bits)
            throw CalcError(payload::FailureCode::overflow, "power result is too large");
        const unsigned k = static_cast<unsigned>(std::labs(n));
        Rational r(boost::multiprecision::pow(num, k), boost::multiprecision::pow(den, k));
        return n < 0 ? Number(Rational(1 / r)) : Number(std::move(r));
    }
    const double b = base.to_double();
    const double x = exponent.to_double();
    if (b == 0.0 && x < 0) throw CalcError(payload::FailureCode::division_by_zero, "zero raised to a negative power");
    return checked_float(std::pow(b, x));
}

class Parser {
public:
    explicit Parser(std::string_view text) {
        // Normalize typographic operators to ASCII before tokenizing.
        for (char32_t cp : unicode::decode(text)) {
            switch (cp) {
                case U'×': case U'·': case U'∗': src_ += '*'; break;
                case U'÷': case U'∕': src_ += '/'; break;
                case U'−': case U'–': src_ += '-'; break;
                case U'（': src_ += '('; break;
                case U'）': src_ += ')'; break;
                case U'％': src_ += '%'; break;
                default:
                    if (unicode::is_space(cp)) src_ += ' ';
                    else unicode::append_utf8(src_, cp);
            }
        }
    }

    Number parse() {
        skip();
        if (pos_ >= src_.size()) fail("empty formula");
        Number v = expr();
        skip();
        if (pos_ < src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw CalcError(payload::FailureCode::parse_error, why + " at position " + std::to_string(pos_));
    }

    void skip() {
        while (pos_ < src_.size() && src_[pos_] == ' ') ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    bool accept_power() {
        skip();
        if (pos_ < src_.size() && src_[pos_] == '^') {
            ++pos_;
            return true;
        }
        if (pos_ + 1 < src_.size() && src_[pos_] == '*' && src_[pos_ + 1] == '*') {
            pos_ += 2;
            return true;
        }
        return false;
    }

    Number expr() {
        Number v = term();
        for (;;) {
            if (accept('+')) v = add(v, term());
            else if (accept('-')) v = sub(v, term());
            else return v;
        }
    }

    Number term() {
        Number v = unary();
        for (;;) {
            skip();
            if (pos_ + 1 < src_.size() && src_[pos_] == '*' && src_[pos_ + 1] == '*') return v;
            if (accept('*')) v = mul(v, unary());
            else if (accept('/')) v = div(v, unary());
            else return v;
        }
    }

    Number unary() {
        if (++depth_ > 512) fail("expression nested too deeply");
        Number v;
        if (accept('-')) v = negate(unary());
        else if (accept('+')) v = unary();
        else v = pow_expr();
        --depth_;
        return v;
    }

    Number pow_expr() {
        Number base = postfix();
        if (accept_power()) return power(base, unary());
        return base;
    }

    Number postfix() {
        Number v = primary();
        while (accept('%')) v = mul(v, Number(Rational(1, 100)));
        return v;
    }

    Number primary() {
        skip();
        if (accept('(')) {
            Number v = expr();
            if (!accept(')')) fail("missing ')'");
            return v;
        }
        const std::size_t start = pos_;
        while (pos_ < src_.size() && ((src_[pos_] >= '0' && src_[pos_] <= '9') || src_[pos_] == '.')) ++pos_;
        if (start == pos_) {
            if (pos_ >= src_.size()) fail("unexpected end of formula");
            fail("unexpected '" + std::string(1, src_[pos_]) + "'");
        }
        std::string_view lit(src_.data() + start, pos_ - start);
        if (lit == "." || std::count(lit.begin(), lit.end(), '.') > 1) {
            pos_ = start;
            fail("malformed number '" + std::string(lit) + "'");
        }
        return Number(parse_decimal(lit));
    }

    std::string src_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

}  // namespace detail

/// Evaluates a formula. Throws CalcError (parse_error, division_by_zero, overflow, math_domain).
inline Number evaluate(std::string_view formula) { return detail::Parser(formula).parse(); }

struct EquationCheck {
    bool pass = false;
    std::string lhs_text;
    std::string rhs_text;
    Number lhs;
    Number rhs;

    /// e.g. "3 + 0.5 + 1.5 = 5 ≠ 4 (lhs 5 ≠ rhs 4)"
    std::string detail() const {
        const std::string rel = pass ? " = " : " ≠ ";
        return lhs_text + " = " + lhs.display() + rel + rhs.display() + " (lhs " + lhs.display() + rel + "rhs " +
               rhs.display() + ")";
    }
};

/// Exact rational value of a double through its shortest decimal form.
inline Rational exact_tolerance(double tolerance) {
    if (!(tolerance >= 0) || std::isinf(tolerance))
        throw CalcError(payload::FailureCode::parse_error, "tolerance must be a finite non-negative number");
    return parse_decimal(detail::shortest(tolerance));
}

/// Relative tolerance used when either side is inexact and none is given.
inline constexpr double default_float_tolerance = 1e-6;

/// pass iff |lhs - rhs| <= tolerance * max(1, |rhs|). With both sides rational the
/// comparison is exact and the default tolerance is zero.
inline EquationCheck check_equation(std::string_view equation, std::optional<double> tolerance = std::nullopt) {
    const auto eq = equation.find('=');
    if (eq == std::string_view::npos || equation.find('=', eq + 1) != std::string_view::npos)
        throw CalcError(payload::FailureCode::parse_error, "equation must contain exactly one '='");
    EquationCheck out;
    out.lhs_text = std::string(unicode::trim(equation.substr(0, eq)));
    out.rhs_text = std::string(unicode::trim(equation.substr(eq + 1)));
    const auto side = [](std::string_view text, const char* name) {
        try {
            return evaluate(text);
        } catch (const CalcError& e) {
            throw CalcError(e.code(), std::string(name) + " side: " + e.what());
        }
    };
    out.lhs = side(out.lhs_text, "left");
    out.rhs = side(out.rhs_text, "right");
    if (out.lhs.exact() && out.rhs.exact()) {
        const Rational tol = tolerance ? exact_tolerance(*tolerance) : Rational(0);
        const Rational diff = boost::multiprecision::abs(out.lhs.rational() - out.rhs.rational());
        const Rational scale = std::max(Rational(1), Rational(boost::multiprecision::abs(out.rhs.rational())));
        out.pass = diff <= tol * scale;
    } else {
        const double tol = tolerance.value_or(default_float_tolerance);
        if (!(tol >= 0)) throw CalcError(payload::FailureCode::parse_error, "tolerance must be non-negative");
        const double l = out.lhs.to_double();
        const double r = out.rhs.to_double();
        out.pass = std::fabs(l - r) <= tol * std::max(1.0, std::fabs(r));
    }
    return out;
}

}  // namespace halucheck::calc
