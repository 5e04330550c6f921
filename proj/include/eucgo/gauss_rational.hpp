#pragma once

#include <complex>
#include <cstdint>
#include <string>

namespace eucgo {

// Exact rational with 64-bit parts; arithmetic throws on overflow.
class Rational {
public:
    Rational(std::int64_t n = 0, std::int64_t d = 1);
    std::int64_t num() const { return n_; }
    std::int64_t den() const { return d_; }
    bool is_zero() const { return n_ == 0; }
    double value() const { return static_cast<double>(n_) / static_cast<double>(d_); }
    Rational operator+(const Rational& o) const;
    Rational operator-(const Rational& o) const;
    Rational operator*(const Rational& o) const;
    Rational operator/(const Rational& o) const;
    Rational operator-() const { return Rational(-n_, d_); }
    bool operator==(const Rational& o) const { return n_ == o.n_ && d_ == o.d_; }
    std::string str() const;

private:
    std::int64_t n_, d_;
};

class GaussRational {
public:
    GaussRational(Rational re = Rational(0), Rational im = Rational(0)) : re_(re), im_(im) {}
    static GaussRational i() { return {Rational(0), Rational(1)}; }
    const Rational& re() const { return re_; }
    const Rational& im() const { return im_; }
    bool is_zero() const { return re_.is_zero() && im_.is_zero(); }
    std::complex<double> value() const { return {re_.value(), im_.value()}; }
    GaussRational operator+(const GaussRational& o) const { return {re_ + o.re_, im_ + o.im_}; }
    GaussRational operator-(const GaussRational& o) const { return {re_ - o.re_, im_ - o.im_}; }
    GaussRational operator*(const GaussRational& o) const {
        return {re_ * o.re_ - im_ * o.im_, re_ * o.im_ + im_ * o.re_};
    }
    GaussRational operator*(const Rational& r) const { return {re_ * r, im_ * r}; }
    GaussRational operator/(const Rational& r) const { return {re_ / r, im_ / r}; }
    GaussRational pow(int k) const;
    bool operator==(const GaussRational& o) const { return re_ == o.re_ && im_ == o.im_; }
    std::string str() const { return re_.str() + " " + im_.str(); }

private:
    Rational re_, im_;
};

} // namespace eucgo
