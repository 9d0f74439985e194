#pragma once

// Threshold assignment for SOAF-B: psi_k, the two growth conditions on a
// threshold schedule, the log-scale rule and the Delta_e bisection search.

#include "coop_arq/errors.hpp"
#include "coop_arq/outage.hpp"
#include "coop_arq/special.hpp"
#include "coop_arq/tcm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <vector>

namespace coop_arq {

/// (prod_{i<=k} (1 + 1/Delta_i) - 1)^-1 over the whole span.
inline double psi_k(std::span<const double> deltas) {
    if (deltas.empty()) throw domain_error("psi_k: empty threshold prefix");
    double prod = 1.0;
    for (double d : deltas) {
        if (!(d > 0.0)) throw domain_error("psi_k: thresholds must be > 0");
        prod *= 1.0 + 1.0 / d;
    }
    return 1.0 / (prod - 1.0);
}

struct CodeMetrics {
    double dm2 = 10.0;
    double omega_dm = 1.0;
    double eps0 = 1e-5;

    double dm_eps2() const { return (dm2 - eps0) * (dm2 - eps0) / dm2; }

    void validate() const {
        if (!(eps0 > 0.0) || !(eps0 < dm2)) throw domain_error("CodeMetrics: need 0 < eps0 < d_m^2");
        if (!(omega_dm > 0.0)) throw domain_error("CodeMetrics: omega must be > 0");
    }

    static CodeMetrics from_code(const TrellisCode& code, double eps0 = 1e-5) {
        double cap = 1.0;
        DistanceSpectrum sp;
        while ((sp = distance_spectrum(code, cap)).entries.empty()) cap *= 2.0;
        return CodeMetrics{sp.dm2(), sp.omega_dm(), eps0};
    }
};

/// A threshold schedule maps rho (linear) to Delta_1..Delta_K.
using ThresholdSchedule = std::function<std::vector<double>(double)>;

struct GrowthReport {
    std::vector<double> rho_db;
    std::vector<std::vector<double>> ratio;   // ln Delta_k / ln rho, per rung and k
    std::vector<double> limit;                // extrapolated limit per k
    bool pass = false;
};

/// ln Delta_k / ln rho over a rising ladder. The limit is extrapolated by a
/// least-squares fit of ln Delta_k = L ln rho + a ln ln rho + b; pass iff
/// |L| <= tol for every k.
inline GrowthReport check_subpoly_growth(const ThresholdSchedule& sched, std::vector<double> ladder_db = {},
                                            double tol = 1e-2) {
    if (ladder_db.empty()) ladder_db = {10, 20, 30, 40, 50, 60};
    if (ladder_db.size() < 4) throw domain_error("check_subpoly_growth: need at least 4 ladder points");
    GrowthReport rep;
    rep.rho_db = ladder_db;
    std::vector<std::vector<double>> lnd;
    std::size_t K = 0;
    for (double db : ladder_db) {
        const double rho = db_to_linear(db);
        if (!(rho > 1.0)) throw domain_error("check_subpoly_growth: ladder must have rho > 1");
        auto d = sched(rho);
        if (d.empty() || (K && d.size() != K)) throw domain_error("check_subpoly_growth: schedule length changes");
        K = d.size();
        std::vector<double> row(K), lr(K);
        for (std::size_t k = 0; k < K; ++k) {
            if (!(d[k] > 0.0) || !std::isfinite(d[k]))
                throw domain_error("check_subpoly_growth: schedule not evaluable at " + std::to_string(db) + " dB");
            lr[k] = std::log(d[k]);
            row[k] = lr[k] / std::log(rho);
        }
        rep.ratio.push_back(row);
        lnd.push_back(lr);
    }
    // Normal equations for the 3-term fit; tiny system, solved by Cramer's rule.
    const std::size_t P = ladder_db.size();
    auto basis = [&](std::size_t i, int j) {
        const double l = std::log(db_to_linear(ladder_db[i]));
        return j == 0 ? l : (j == 1 ? std::log(l) : 1.0);
    };
    double A[3][3] = {};
    for (std::size_t i = 0; i < P; ++i)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) A[r][c] += basis(i, r) * basis(i, c);
    auto det3 = [](const double M[3][3]) {
        return M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
               M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
    };
    const double D = det3(A);
    rep.pass = true;
    for (std::size_t k = 0; k < K; ++k) {
        double y[3] = {};
        for (std::size_t i = 0; i < P; ++i)
            for (int r = 0; r < 3; ++r) y[r] += basis(i, r) * lnd[i][k];
        double M[3][3];
        for (int r = 0; r < 3; ++r) {
            M[r][0] = y[r];
            M[r][1] = A[r][1];
            M[r][2] = A[r][2];
        }
        const double L = det3(M) / D;
        rep.limit.push_back(L);
        if (!(std::abs(L) <= tol)) rep.pass = false;
    }
    return rep;
}

/// Lower bound (4/d^2_{m,eps0}) [m(N-k+1) - 1] on lim psi_k / ln rho.
inline double psi_growth_bound(int k, int m, int N, const CodeMetrics& cm) {
    return 4.0 / cm.dm_eps2() * (m * (N - k + 1) - 1);
}

/// psi_k / ln rho divided by its bound, for every k, at one rho.
inline std::vector<double> psi_growth_margins(std::span<const double> deltas, double rho, int m, int N,
                                                const CodeMetrics& cm) {
    std::vector<double> out;
    for (std::size_t k = 1; k <= deltas.size(); ++k) {
        const double b = psi_growth_bound(static_cast<int>(k), m, N, cm);
        const double psi = psi_k(deltas.subspan(0, k)) / std::log(rho);
        out.push_back(b > 0.0 ? psi / b : std::numeric_limits<double>::infinity());
    }
    return out;
}

/// Smallest lambda_e such that Delta_i = lambda_e v_i ln rho meets the
/// psi_k growth bound for every k.
inline double min_lambda_log_scale(int m, int N, std::span<const double> v, const CodeMetrics& cm) {
    cm.validate();
    const std::size_t K = static_cast<std::size_t>(std::min(m, N));
    if (v.size() < K) throw config_error("min_lambda_log_scale: need min(m,N) ratios");
    double lam = 0.0;
    double inv = 0.0;
    for (std::size_t k = 1; k <= K; ++k) {
        if (!(v[k - 1] > 0.0)) throw config_error("min_lambda_log_scale: ratios must be > 0");
        inv += 1.0 / v[k - 1];
        lam = std::max(lam, psi_growth_bound(static_cast<int>(k), m, N, cm) * inv);
    }
    return lam;
}

inline ThresholdSchedule log_scale_schedule(double lambda_e, std::vector<double> v) {
    return [lambda_e, v](double rho) {
        std::vector<double> d(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) d[i] = lambda_e * v[i] * std::log(rho);
        return d;
    };
}

/// Left side of the k-th search condition (k is 1-based); the hop-count
/// reference for the right side is fixed to N by the caller.
inline double alg1_condition_lhs(int k, double delta_e, std::span<const double> v, const CodeMetrics& cm,
                                 const OutageParams& p) {
    if (!(delta_e > 0.0)) throw domain_error("alg1_condition_lhs: Delta_e must be > 0");
    const int K = std::min(p.m, p.N);
    if (k < 1 || k > K) throw domain_error("alg1_condition_lhs: k out of range");
    std::vector<double> d(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) d[static_cast<std::size_t>(i)] = delta_e * v[static_cast<std::size_t>(i)];
    const double psi = psi_k(d);
    const double d2 = cm.dm_eps2();
    double var = v[0] / p.v.beta1;
    for (int i = 1; i < k; ++i) var += v[static_cast<std::size_t>(i)] / p.v.beta3;
    return cm.omega_dm / std::pow(static_cast<double>(p.m), p.N - k) * qfunc(std::sqrt(d2 * psi / 2.0)) / p.rho *
           (4.0 * delta_e / (d2 * psi) + delta_e) * var * p_out_soaf_b_bbss(k - 1, delta_e, v, p);
}

inline double alg1_condition_rhs(double delta_e, std::span<const double> v, const OutageParams& p) {
    return p_out_soaf_b_bbss(p.N, delta_e, v, p);
}

inline bool alg1_condition_holds(int k, double delta_e, std::span<const double> v, const CodeMetrics& cm,
                                 const OutageParams& p) {
    return alg1_condition_lhs(k, delta_e, v, cm, p) <= alg1_condition_rhs(delta_e, v, p);
}

struct DeltaEStar {
    double value = 0.0;           // max over k
    std::vector<double> per_k;    // Delta^(k)_{e,*}
};

inline constexpr double kAlg1Start = 1e-3;
inline constexpr double kAlg1Ceiling = 1e9;
inline constexpr double kAlg1RelTol = 1e-6;
inline constexpr double kAlg1Floor = 1e-12;

/// Per-k smallest Delta_e meeting the k-th condition: doubling from 1e-3,
/// then bisection to relative 1e-6. If the condition already holds at the
/// start the bracket is grown downwards instead, down to 1e-12.
inline DeltaEStar find_delta_e_star(std::span<const double> v, const CodeMetrics& cm, const OutageParams& p) {
    cm.validate();
    p.validate();
    const int K = std::min(p.m, p.N);
    if (v.size() < static_cast<std::size_t>(K)) throw config_error("find_delta_e_star: need min(m,N) ratios");
    for (int i = 0; i < K; ++i)
        if (!(v[static_cast<std::size_t>(i)] > 0.0)) throw config_error("find_delta_e_star: ratios must be > 0");

    DeltaEStar out;
    for (int k = 1; k <= K; ++k) {
        auto ok = [&](double x) { return alg1_condition_holds(k, x, v, cm, p); };
        double lo = kAlg1Start;
        double hi = kAlg1Start;
        if (ok(hi)) {
            // For k = 1 the left side stays finite as Delta_e -> 0, so the
            // condition can hold all the way down; the smallest value is then 0.
            while (ok(lo)) {
                hi = lo;
                lo *= 0.5;
                if (lo < kAlg1Floor) break;
            }
            if (lo < kAlg1Floor) {
                out.per_k.push_back(0.0);
                continue;
            }
        } else {
            while (!ok(hi)) {
                lo = hi;
                hi *= 2.0;
                if (hi > kAlg1Ceiling) {
                    std::ostringstream os;
                    os << "find_delta_e_star: no bracket below " << kAlg1Ceiling << " (k=" << k
                       << ", rho=" << p.rho << ", lhs=" << alg1_condition_lhs(k, lo, v, cm, p)
                       << ", rhs=" << alg1_condition_rhs(lo, v, p) << ")";
                    throw numerical_error(os.str());
                }
            }
        }
        while (hi - lo > kAlg1RelTol * hi) {
            const double mid = 0.5 * (lo + hi);
            (ok(mid) ? hi : lo) = mid;
        }
        out.per_k.push_back(hi);
        out.value = std::max(out.value, hi);
    }
    return out;
}

inline ThresholdSchedule alg1_schedule(std::vector<double> v, CodeMetrics cm, OutageParams p) {
    return [v, cm, p](double rho) mutable {
        p.rho = rho;
        const double de = find_delta_e_star(v, cm, p).value;
        std::vector<double> d(static_cast<std::size_t>(std::min(p.m, p.N)));
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = de * v[i];
        return d;
    };
}

} // namespace coop_arq
