#include "sdf3d/rational.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace sdf3d {
namespace {

using i128 = __int128;

std::int64_t narrow(i128 v)
{
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
        throw std::overflow_error("rational arithmetic overflow");
    return static_cast<std::int64_t>(v);
}

i128 gcd128(i128 a, i128 b)
{
    if (a < 0)
        a = -a;
    if (b < 0)
        b = -b;
    while (b != 0) {
        i128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

Rational make(i128 n, i128 d)
{
    if (d == 0)
        throw std::domain_error("rational with zero denominator");
    if (d < 0) {
        n = -n;
        d = -d;
    }
    i128 g = gcd128(n, d);
    if (g > 1) {
        n /= g;
        d /= g;
    }
    return Rational(narrow(n), narrow(d));
}

} // namespace

Rational::Rational(std::int64_t n, std::int64_t d)
{
    if (d == 0)
        throw std::domain_error("rational with zero denominator");
    if (d < 0) {
        n = -n;
        d = -d;
    }
    std::int64_t g = std::gcd(n, d);
    if (g > 1) {
        n /= g;
        d /= g;
    }
    num_ = n;
    den_ = d;
}

std::int64_t Rational::floor() const
{
    std::int64_t q = num_ / den_;
    if (num_ % den_ != 0 && num_ < 0)
        --q;
    return q;
}

std::int64_t Rational::ceil() const
{
    std::int64_t q = num_ / den_;
    if (num_ % den_ != 0 && num_ > 0)
        ++q;
    return q;
}

Rational Rational::reciprocal() const
{
    if (num_ == 0)
        throw std::domain_error("reciprocal of zero");
    return Rational(den_, num_);
}

Rational Rational::from_double(double v, std::int64_t max_den)
{
    if (!std::isfinite(v))
        throw std::domain_error("non-finite value cannot be made rational");
    bool neg = v < 0;
    double x = std::fabs(v);
    // Convergents h/k of the continued fraction of x.
    std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double rem = x;
    for (int iter = 0; iter < 64; ++iter) {
        double a = std::floor(rem);
        if (a > 9.0e15)
            break;
        auto ai = static_cast<std::int64_t>(a);
        i128 h2 = static_cast<i128>(ai) * h1 + h0;
        i128 k2 = static_cast<i128>(ai) * k1 + k0;
        if (k2 > max_den || h2 > std::numeric_limits<std::int64_t>::max())
            break;
        h0 = h1;
        h1 = static_cast<std::int64_t>(h2);
        k0 = k1;
        k1 = static_cast<std::int64_t>(k2);
        double frac = rem - a;
        if (frac < 1e-15)
            break;
        rem = 1.0 / frac;
    }
    if (k1 == 0)
        return Rational(neg ? -h0 : h0, 1);
    return Rational(neg ? -h1 : h1, k1);
}

Rational operator+(const Rational& a, const Rational& b)
{
    if (a.den_ == b.den_)
        return make(static_cast<i128>(a.num_) + b.num_, a.den_);
    return make(static_cast<i128>(a.num_) * b.den_ + static_cast<i128>(b.num_) * a.den_,
                static_cast<i128>(a.den_) * b.den_);
}

Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }

Rational operator*(const Rational& a, const Rational& b)
{
    return make(static_cast<i128>(a.num_) * b.num_, static_cast<i128>(a.den_) * b.den_);
}

Rational operator/(const Rational& a, const Rational& b)
{
    if (b.num_ == 0)
        throw std::domain_error("rational division by zero");
    return make(static_cast<i128>(a.num_) * b.den_, static_cast<i128>(a.den_) * b.num_);
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b)
{
    i128 l = static_cast<i128>(a.num_) * b.den_;
    i128 r = static_cast<i128>(b.num_) * a.den_;
    if (l < r)
        return std::strong_ordering::less;
    if (l > r)
        return std::strong_ordering::greater;
    return std::strong_ordering::equal;
}

std::string Rational::str() const
{
    if (den_ == 1)
        return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
}

std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

} // namespace sdf3d
