#include "eucgo/gauss_rational.hpp"

#include <numeric>
#include <stdexcept>

#include "eucgo/grid.hpp"

namespace eucgo {

namespace {

std::int64_t narrow(__int128 v) {
    if (v > INT64_MAX || v < -INT64_MAX)
        throw Error("cgo_ansatz.overflow", "rational coefficient exceeds 64 bits");
    return static_cast<std::int64_t>(v);
}

Rational make(__int128 n, __int128 d) {
    if (d == 0) throw Error("cgo_ansatz.rational", "zero denominator");
    if (d < 0) {
        n = -n;
        d = -d;
    }
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) {
        __int128 t = a % b;
        a = b;
        b = t;
    }
    if (a > 1) {
        n /= a;
        d /= a;
    }
    return Rational(narrow(n), narrow(d));
}

} // namespace

Rational::Rational(std::int64_t n, std::int64_t d) : n_(n), d_(d) {
    if (d_ == 0) throw Error("cgo_ansatz.rational", "zero denominator");
    if (d_ < 0) {
        n_ = -n_;
        d_ = -d_;
    }
    std::int64_t g = std::gcd(n_ < 0 ? -n_ : n_, d_);
    if (g > 1) {
        n_ /= g;
        d_ /= g;
    }
    if (n_ == 0) d_ = 1;
}

Rational Rational::operator+(const Rational& o) const {
    return make(static_cast<__int128>(n_) * o.d_ + static_cast<__int128>(o.n_) * d_,
                static_cast<__int128>(d_) * o.d_);
}

Rational Rational::operator-(const Rational& o) const { return *this + (-o); }

Rational Rational::operator*(const Rational& o) const {
    return make(static_cast<__int128>(n_) * o.n_, static_cast<__int128>(d_) * o.d_);
}

Rational Rational::operator/(const Rational& o) const {
    return make(static_cast<__int128>(n_) * o.d_, static_cast<__int128>(d_) * o.n_);
}

std::string Rational::str() const {
    return d_ == 1 ? std::to_string(n_) : std::to_string(n_) + "/" + std::to_string(d_);
}

GaussRational GaussRational::pow(int k) const {
    GaussRational r(Rational(1));
    for (int j = 0; j < k; ++j) r = r * *this;
    return r;
}

} // namespace eucgo
