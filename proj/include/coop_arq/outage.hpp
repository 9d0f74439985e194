#pragma once

// Closed-form outage probabilities and lower bounds for the AF relaying
// ARQ family: AF, SAF, OAF, SOAF-A and SOAF-B.

#include "coop_arq/errors.hpp"
#include "coop_arq/fading.hpp"
#include "coop_arq/special.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <vector>

namespace coop_arq {

inline double delta_of_rate(double R) {
    if (!(R >= 0.0)) throw domain_error("delta_of_rate: R must be >= 0");
    return std::exp2(R) - 1.0;
}

struct RateSpec {
    double R = 1.0;
    double delta() const { return delta_of_rate(R); }
};

struct OutageParams {
    RateSpec rate;
    int m = 3;
    int N = 3;
    LinkVariances v;
    double rho = 100.0;

    double delta() const { return rate.delta(); }

    void validate() const {
        if (m < 1 || N < 1) throw domain_error("OutageParams: need m >= 1 and N >= 1");
        if (!(rho > 0.0)) throw domain_error("OutageParams: rho must be > 0");
        v.validate();
    }

    // Marginals of the four link classes.
    double pr_w_lt(double d) const { return -std::expm1(-d / (rho * v.beta0)); }
    double pr_a_le(double t) const { return t <= 0.0 ? 0.0 : -std::expm1(-t / (rho * v.beta1)); }
    double pr_a_gt(double t) const { return t <= 0.0 ? 1.0 : std::exp(-t / (rho * v.beta1)); }
    double pr_b_lt(double d) const { return d <= 0.0 ? 0.0 : -std::expm1(-d / (rho * v.beta2)); }
    double pr_c_le(double t) const { return t <= 0.0 ? 0.0 : -std::expm1(-t / (rho * v.beta3)); }
    double pr_c_gt(double t) const { return t <= 0.0 ? 1.0 : std::exp(-t / (rho * v.beta3)); }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

/// F(Delta, ell) = Pr{a > Delta, ab_i/(a+b_i+1) < delta for i = 1..ell}
/// computed as the integral over a of the conditional failure probability
/// raised to ell. The integrand is nonnegative, so the result keeps full
/// relative precision even when F is tiny.
inline double f_integral(double Delta, int ell, const OutageParams& p) {
    if (!(Delta >= 0.0) || ell < 0) throw domain_error("f_integral: need Delta >= 0, ell >= 0");
    const double s1 = p.rho * p.v.beta1;
    const double s2 = p.rho * p.v.beta2;
    const double d = p.delta();
    if (ell == 0) return 1.0;
    if (d <= 0.0) return 0.0;

    // a in (Delta, delta]: every relayed round fails for sure.
    double head = 0.0;
    if (Delta < d) head = std::exp(-Delta / s1) * -std::expm1(-(d - Delta) / s1);

    // a = d + u. Below u_lo the per-round failure probability is 1 to
    // double precision, so that slice integrates in closed form.
    const double u0 = std::max(Delta - d, 0.0);
    const double u_lo = d * (d + 1.0) / s2 * 1e-3;
    double slice = 0.0;
    double ustart = u0;
    if (u0 < u_lo) {
        slice = std::exp(-(d + u0) / s1) * -std::expm1(-(u_lo - u0) / s1);
        ustart = u_lo;
    }
    const double u_hi = 800.0 * s1 + ustart;
    auto g = [&](double v) {
        const double u = std::exp(v);
        const double x = d * (d + 1.0 + u) / (u * s2);
        const double pf = -std::expm1(-x);
        return std::exp(-(d + u) / s1) / s1 * std::pow(pf, ell) * u;
    };
    // log-u breakpoints at the scales of the b-threshold and of a's mean
    std::vector<double> bp{std::log(ustart), std::log(u_hi)};
    for (double s : {d * (d + 1.0) / s2, s1}) {
        const double ls = std::log(s);
        if (ls > bp.front() && ls < bp.back()) bp.push_back(ls);
    }
    std::sort(bp.begin(), bp.end());
    double tail = 0.0;
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        double err = 0.0;
        const double part = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, bp[i], bp[i + 1], 20, 1e-12, &err);
        if (err > 1e-9 * std::abs(part) && err > 1e-300) throw numerical_error("f_integral: quadrature did not converge");
        tail += part;
    }
    const double total = head + slice + tail;
    if (!std::isfinite(total)) throw numerical_error("f_integral: non-finite result");
    return total;
}

/// F(Delta, ell) via the alternating Gamma(1, x; b) expansion. F(Delta, 0) = 1
/// by convention. When the alternating sum cancels below 1e-4 of its largest
/// term the quadrature error would dominate, so the direct integral is used.
inline double f_closed(double Delta, int ell, const OutageParams& p) {
    if (!(Delta >= 0.0) || ell < 0) throw domain_error("f_closed: need Delta >= 0, ell >= 0");
    if (ell == 0) return 1.0;
    const double s1 = p.rho * p.v.beta1;
    const double s2 = p.rho * p.v.beta2;
    const double d = p.delta();
    const double x = Delta < d ? 0.0 : (Delta - d) / s1;
    double sum = std::exp(-Delta / s1);
    double biggest = sum;
    for (int i = 1; i <= ell; ++i) {
        const double b = i * (d * d + d) / (s1 * s2);
        const double term = binom(ell, i) * std::exp(-(1.0 / s1 + i / s2) * d) * gen_inc_gamma(1.0, x, b);
        biggest = std::max(biggest, term);
        sum += (i % 2 ? -term : term);
    }
    if (!(sum > 1e-4 * biggest)) return f_integral(Delta, ell, p);
    return sum;
}

/// Lower bound F~(Delta, ell) = e^(-Delta/rho b1) Pr{b < delta}^ell, with F~(Delta, 0) = 1.
inline double f_tilde(double Delta, int ell, const OutageParams& p) {
    if (ell < 0) throw domain_error("f_tilde: ell must be >= 0");
    if (ell == 0) return 1.0;
    return p.pr_a_gt(Delta) * std::pow(p.pr_b_lt(p.delta()), ell);
}

/// Single-relay SAF outage after n retransmissions. tilde = true gives the lower bound.
inline double p_out_saf(int n, double Delta, const OutageParams& p, bool tilde = false) {
    p.validate();
    if (n < 0) throw domain_error("p_out_saf: n must be >= 0");
    const double d = p.delta();
    const double pw = p.pr_w_lt(d);
    const double r = p.pr_a_le(Delta) * pw;
    double s = 0.0;
    for (int l = 0; l <= n; ++l) {
        const double F = tilde ? f_tilde(Delta, l, p) : f_closed(Delta, l, p);
        s += std::pow(r, n - l) * F;
    }
    return pw * s;
}

inline double p_out_af(int n, const OutageParams& p) { return p_out_saf(n, 0.0, p); }

inline double p_out_oaf(int n, const OutageParams& p) {
    p.validate();
    if (n < 0) throw domain_error("p_out_oaf: n must be >= 0");
    return p.pr_w_lt(p.delta()) * std::pow(f_closed(0.0, n, p), p.m);
}

/// Recursive sum over round-to-relay assignments for a qualified set of size q.
/// Fq(k) supplies F(Delta, k); the tilde bound reuses the recursion with F~.
inline double calF_recursive(double Delta, int ell, int q, const OutageParams& p,
                             const std::function<double(int)>& Fq) {
    if (q < 1 || ell < 0) throw domain_error("calF_recursive: need q >= 1, ell >= 0");
    if (q == 1) return Fq(ell);
    const double e = p.pr_a_gt(Delta);
    auto mu = [](int zi, int zp) { return (zi == zp) + (zp == 0) - (zi + zp == 0); };
    // level[i][z] = calF^(i)(z); level 1 is F(q z)
    std::vector<std::vector<double>> level(static_cast<std::size_t>(q + 1),
                                           std::vector<double>(static_cast<std::size_t>(ell + 1), 0.0));
    for (int z = 0; z <= ell; ++z) level[1][static_cast<std::size_t>(z)] = Fq(q * z);
    for (int i = 2; i <= q; ++i) {
        for (int zi = 0; zi <= ell; ++zi) {
            double acc = 0.0;
            for (int zp = 0; zp <= zi; ++zp)
                acc += binom(zi, zp) * std::pow(e, mu(zi, zp)) * Fq(q * (zi - zp))
                       * level[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(zp)];
            level[static_cast<std::size_t>(i)][static_cast<std::size_t>(zi)] = acc;
        }
    }
    return level[static_cast<std::size_t>(q)][static_cast<std::size_t>(ell)];
}

inline double calF_recursive(double Delta, int ell, int q, const OutageParams& p, bool tilde = false) {
    std::map<int, double> memo;
    std::function<double(int)> Fq = [&](int k) {
        auto it = memo.find(k);
        if (it != memo.end()) return it->second;
        const double v = tilde ? f_tilde(Delta, k, p) : f_closed(Delta, k, p);
        memo.emplace(k, v);
        return v;
    };
    return calF_recursive(Delta, ell, q, p, Fq);
}

/// SOAF-A outage after n retransmissions (m relays, argmax-b selection).
inline double p_out_soaf_a(int n, double Delta, const OutageParams& p) {
    p.validate();
    if (n < 0) throw domain_error("p_out_soaf_a: n must be >= 0");
    const double d = p.delta();
    const double pw = p.pr_w_lt(d);
    const double pal = p.pr_a_le(Delta);
    std::map<int, double> memo;
    std::function<double(int)> Fq = [&](int k) {
        auto it = memo.find(k);
        if (it != memo.end()) return it->second;
        const double v = f_closed(Delta, k, p);
        memo.emplace(k, v);
        return v;
    };
    auto G1 = [&](int l) {
        if (l == 0) return 1.0;
        double g = 0.0;
        for (int q = 1; q <= p.m; ++q)
            g += binom(p.m, q) * std::pow(pal, p.m - q) * std::pow(1.0 / q, l)
                 * calF_recursive(Delta, l, q, p, Fq);
        return g;
    };
    const double r = std::pow(pal, p.m) * pw;
    double s = 0.0;
    for (int l = 0; l <= n; ++l) s += std::pow(r, n - l) * G1(l);
    return pw * s;
}

inline double p_out_soaf_a_tilde(int n, double Delta, const OutageParams& p) {
    p.validate();
    if (n < 0) throw domain_error("p_out_soaf_a_tilde: n must be >= 0");
    const double d = p.delta();
    const double pw = p.pr_w_lt(d);
    const double pal = p.pr_a_le(Delta);
    const double pag = p.pr_a_gt(Delta);
    const double pb = p.pr_b_lt(d);
    auto G1 = [&](int l) {
        if (l == 0) return 1.0;
        double g = 0.0;
        for (int q = 1; q <= p.m; ++q)
            g += binom(p.m, q) * std::pow(pal, p.m - q) * std::pow(pag, q) * std::pow(pb, q * l);
        return g;
    };
    const double r = std::pow(pal, p.m) * pw;
    double s = 0.0;
    for (int l = 0; l <= n; ++l) s += std::pow(r, n - l) * G1(l);
    return pw * s;
}

namespace detail {

/// Enumeration of qualified-set growth for the SOAF-B lower bound.
/// counts[k-1] is the number of k-hop members. Thresholds th[k-1] gate k-hop joins.
class SoafBEnumerator {
public:
    SoafBEnumerator(const OutageParams& p, std::vector<double> th, bool drop_pass_terms)
        : p_(p), th_(std::move(th)), drop_(drop_pass_terms) {
        pb_ = p_.pr_b_lt(p_.delta());
    }

    double G2(int ell) {
        if (ell == 0) return 1.0;
        memo_.clear();
        ell_ = ell;
        const int m = p_.m;
        const double t1 = th_[0];
        const double pal = p_.pr_a_le(t1);
        const double pag = drop_ ? 1.0 : p_.pr_a_gt(t1);
        double total = 0.0;
        for (int q = 1; q <= m; ++q) {
            const double f11 = binom(m, q) * std::pow(pal, m - q) * std::pow(pag, q) * std::pow(pb_, q);
            if (f11 == 0.0) continue;
            std::vector<int> counts(static_cast<std::size_t>(m), 0);
            counts[0] = q;
            total += f11 * rest(2, counts);
        }
        return total;
    }

private:
    double rest(int i, std::vector<int>& counts) {
        if (i > ell_) return 1.0;
        auto key = std::make_pair(i, counts);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        const int m = p_.m;
        int Q = 0;
        for (int c : counts) Q += c;
        double acc = 0.0;
        // active relay of round i-1 has hop kp = k-1, chosen with prob |Q_kp|/|Q|
        for (int kp = 1; kp <= std::min(i - 1, m); ++kp) {
            const int nk = counts[static_cast<std::size_t>(kp - 1)];
            if (nk == 0) continue;
            const double sel = static_cast<double>(nk) / Q;
            const int k = kp + 1;
            if (k > m) {
                // a hop-m member implies every relay is qualified; nobody can join
                acc += sel * std::pow(pb_, Q) * rest(i + 1, counts);
                continue;
            }
            const double tk = th_[static_cast<std::size_t>(k - 1)];
            const double pcl = p_.pr_c_le(tk);
            const double pcg = drop_ ? 1.0 : p_.pr_c_gt(tk);
            for (int q = 0; q <= m - Q; ++q) {
                const double f = sel * binom(m - Q, q) * std::pow(pcl, m - Q - q) * std::pow(pcg, q)
                                 * std::pow(pb_, Q + q);
                if (f == 0.0) continue;
                counts[static_cast<std::size_t>(k - 1)] += q;
                acc += f * rest(i + 1, counts);
                counts[static_cast<std::size_t>(k - 1)] -= q;
            }
        }
        memo_.emplace(std::move(key), acc);
        return acc;
    }

    const OutageParams& p_;
    std::vector<double> th_;
    bool drop_;
    double pb_ = 0.0;
    int ell_ = 0;
    std::map<std::pair<int, std::vector<int>>, double> memo_;
};

inline void check_soaf_b_size(const OutageParams& p) {
    if (p.m * p.N > 36) throw complexity_error("SOAF-B enumeration: m*N > 36 is not supported");
}

inline double soaf_b_sum(int n, const OutageParams& p, std::vector<double> th, bool drop) {
    const double d = p.delta();
    const double pw = p.pr_w_lt(d);
    const double r = std::pow(p.pr_a_le(th[0]), p.m) * pw;
    SoafBEnumerator en(p, std::move(th), drop);
    double s = 0.0;
    for (int l = 0; l <= n; ++l) s += std::pow(r, n - l) * en.G2(l);
    return pw * s;
}

} // namespace detail

/// Lower bound on SOAF-B outage (noise enhancement at relays ignored).
/// thresholds must hold min(m, N) entries.
inline double p_out_soaf_b_tilde(int n, std::span<const double> thresholds, const OutageParams& p) {
    p.validate();
    detail::check_soaf_b_size(p);
    if (n < 0 || n > p.N) throw domain_error("p_out_soaf_b_tilde: need 0 <= n <= N");
    const std::size_t K = static_cast<std::size_t>(std::min(p.m, p.N));
    if (thresholds.size() != K) throw config_error("p_out_soaf_b_tilde: need min(m,N) thresholds");
    return detail::soaf_b_sum(n, p, std::vector<double>(thresholds.begin(), thresholds.end()), false);
}

/// Variant used by the threshold search: thresholds v_k * delta_e, and the
/// pass probabilities Pr{a > .}, Pr{c > .} replaced by 1. Nondecreasing in delta_e.
inline double p_out_soaf_b_bbss(int n, double delta_e, std::span<const double> v, const OutageParams& p) {
    p.validate();
    detail::check_soaf_b_size(p);
    if (n < 0 || n > p.N) throw domain_error("p_out_soaf_b_bbss: need 0 <= n <= N");
    const std::size_t K = static_cast<std::size_t>(std::min(p.m, p.N));
    if (v.size() < K) throw config_error("p_out_soaf_b_bbss: need min(m,N) ratios");
    std::vector<double> th(K);
    for (std::size_t k = 0; k < K; ++k) th[k] = v[k] * delta_e;
    return detail::soaf_b_sum(n, p, std::move(th), true);
}

/// Per-hop threshold condition: thresholds delta*lambda_i keep every k-hop
/// chain SNR above the level implied by lambda_min. Checked on every prefix.
inline bool requirement1_holds(std::span<const double> lambdas, double delta, double lambda_min) {
    if (!(lambda_min > 1.0) || !(delta > 0.0)) throw domain_error("requirement1_holds: need lambda_min > 1, delta > 0");
    const double bound = 1.0 + 1.0 / (lambda_min * delta);
    double prod = 1.0;
    for (double l : lambdas) {
        if (!(l > 0.0)) return false;
        prod *= 1.0 + 1.0 / (l * delta);
        if (prod > bound) return false;
    }
    return true;
}

/// Effective destination threshold delta' for a relay whose chain meets Requirement 1.
inline double requirement1_delta_prime(double delta, double lambda_min) {
    return 1.0 / ((1.0 + 1.0 / delta) / (1.0 + 1.0 / (lambda_min * delta)) - 1.0);
}

} // namespace coop_arq
