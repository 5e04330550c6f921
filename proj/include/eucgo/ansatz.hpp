#pragma once

#include <string>
#include <vector>

#include "eucgo/gauss_rational.hpp"
#include "eucgo/weights.hpp"

namespace eucgo {

struct HolomorphicDatum {
    std::vector<cplx> c; // h(z) = sum c_j z^j

    static HolomorphicDatum monomial(int j, cplx coef = 1.0);
    int degree() const { return static_cast<int>(c.size()) - 1; }
    cplx eval(cplx z, int derivative = 0) const;
};

// chi(x3) = A P((x3 - center)/w), P(s) = (1 - s^2)^4 on |s| < 1.
struct ProfileChi {
    enum class Family { FixedBump, Concentration } family = Family::FixedBump;
    double center = 0;
    double half_width = 0.3;
    double amplitude = 1;

    static ProfileChi fixed(double center, double half_width);
    // t^{1/2} chi0(t (x3 - center)), chi0 supported on [-a, a] with int chi0^2 = 1.
    static ProfileChi concentration(double center, double a, double t);
    double eval(double x3, int derivative = 0) const;
    double support_lo() const { return center - half_width; }
    double support_hi() const { return center + half_width; }
};

// One symbolic term coef * zbar^p * h^{(j)}(z) * chi^{(d)}(x3).
struct Term {
    GaussRational coef;
    int zbar = 0, hder = 0, chider = 0;
};

class Expr {
public:
    std::vector<Term> terms; // normalised: sorted, merged, no zeros

    void normalise();
    bool is_zero() const { return terms.empty(); }
    Expr dbar() const;         // d/dzbar
    Expr del() const;          // d/dz
    Expr d3() const;           // d/dx3
    Expr dbar_inverse() const; // zbar^p -> zbar^{p+1}/(p+1), no holomorphic part
    Expr scaled(const GaussRational& s) const;
    Expr operator+(const Expr& o) const;
};

class Amplitude {
public:
    int M = 0;
    std::vector<Expr> v; // v_0 .. v_M
    HolomorphicDatum h;
    ProfileChi chi;

    // a_{k,j}: coefficient of zbar^{k-j} h^{(j)} chi^{(k-2j)} in v_k (zero if absent).
    GaussRational coefficient(int k, int j) const;
    // 2 dbar v_k + i d3 v_{k-1} + (1/2) del v_{k-2}, symbolically.
    Expr recursion_residual(int k) const;

    cplx eval_term(int k, const Vec3& x) const;
    // v_eps truncated at `order` (default M).
    cplx eval(double eps, const Vec3& x, int order = -1) const;
    struct Jet {
        cplx v, d, dbar, d3;
    };
    Jet jet(double eps, const Vec3& x, int order = -1) const;
    CVec sample(const Grid& grid, double eps, int order = -1) const;
    std::string dump() const;
};

Amplitude amplitude_build(const HolomorphicDatum& h, const ProfileChi& chi, int M);

enum class PhaseKind { Flat, GlobalPhi, GlobalPsi };

struct CGOPhase {
    double eps = 0;
    double kappa = 1;
    PhaseKind kind = PhaseKind::Flat;
    CVec values;
    RVec real_weight; // Re of the phase (phi, psi, or (1+eps^2/4) x1)
};

// Coefficients (in eps) of <dPhi_eps, dPhi_eps> for the flat phase, exact.
std::vector<GaussRational> flat_eikonal_polynomial();

CGOPhase phase_flat(const Grid& grid, double eps);
std::pair<CGOPhase, CGOPhase> phase_global(const WeightField& w_phi, const WeightField& w_psi,
                                           double eps);

struct TransportResidual {
    double eikonal_norm = 0;
    double transport_norm = 0;
    int nodes = 0;
};

// Residuals over the slab [slab_lo, slab_hi] in x3 (flat metric there).
TransportResidual transport_residual(const Grid& grid, const CGOPhase& phase, const Amplitude& amp,
                                     const MetricField& metric, double slab_lo, double slab_hi,
                                     int order = -1);

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

} // namespace eucgo
