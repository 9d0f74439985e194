#pragma once

// Special functions used by the outage expressions.

#include "coop_arq/errors.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <sstream>

namespace coop_arq {

inline constexpr double kQuadTol = 1e-9;

inline double binom(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    return boost::math::binomial_coefficient<double>(static_cast<unsigned>(n), static_cast<unsigned>(k));
}

/// Gaussian tail Q(x) = P(N(0,1) > x).
inline double qfunc(double x) { return 0.5 * std::erfc(x / 1.4142135623730950488016887242097); }

/// Generalized incomplete gamma  Gamma(alpha, x; b) = int_x^inf t^(alpha-1) e^(-t-b/t) dt.
///
/// The integrand peaks at t* = ((alpha-1) + sqrt((alpha-1)^2 + 4b)) / 2, which
/// is sqrt(b) for alpha = 1. The range is split there: adaptive
/// Gauss-Kronrod in log t on the finite part, exp-sinh on the tail.
inline double gen_inc_gamma(double alpha, double x, double b) {
    if (!(alpha >= 1.0) || !(x >= 0.0) || !(b >= 0.0))
        throw domain_error("gen_inc_gamma: need alpha >= 1, x >= 0, b >= 0");
    if (b == 0.0) return boost::math::tgamma(alpha, x);

    const double am1 = alpha - 1.0;
    const double peak = 0.5 * (am1 + std::sqrt(am1 * am1 + 4.0 * b));
    auto f = [am1, b](double t) -> double {
        if (t <= 0.0) return 0.0;
        const double e = -t - b / t;
        return (am1 == 0.0 ? 1.0 : std::pow(t, am1)) * std::exp(e);
    };

    double total = 0.0;
    double err = 0.0;
    double l1 = 0.0;
    double lo = x;
    if (x < peak) {
        double e1 = 0.0;
        double n1 = 0.0;
        // In log t the e^(-b/t) edge is smooth; below b/750 the integrand underflows.
        const double s0 = std::log(std::max(x, b / 750.0));
        if (s0 < std::log(peak)) {
            auto g = [&f](double s) { const double t = std::exp(s); return f(t) * t; };
            total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, s0, std::log(peak), 20,
                                                                                  kQuadTol * 1e-3, &e1, &n1);
        }
        err += e1;
        l1 += n1;
        lo = peak;
    }
    {
        boost::math::quadrature::exp_sinh<double> es(12);
        double e2 = 0.0;
        double n2 = 0.0;
        total += es.integrate([&](double u) { return f(lo + u); }, 0.0,
                              std::numeric_limits<double>::infinity(), kQuadTol * 1e-2, &e2, &n2);
        err += e2;
        l1 += n2;
    }
    if (!std::isfinite(total) || (total > 0.0 && err > kQuadTol * total && err > 1e-300)) {
        std::ostringstream os;
        os << "gen_inc_gamma: quadrature did not converge (alpha=" << alpha << ", x=" << x
           << ", b=" << b << ", value=" << total << ", err=" << err << ")";
        throw numerical_error(os.str());
    }
    return total;
}

} // namespace coop_arq
