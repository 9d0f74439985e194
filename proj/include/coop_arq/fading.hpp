#pragma once

// Link statistics and per-round gain draws for block Rayleigh fading.
//
// All gains are composite SNRs rho*|h|^2, exponentially distributed with
// mean rho*beta of their link class. The source sits at (0,0) and the
// destination at (1,0).

#include "coop_arq/errors.hpp"
#include "coop_arq/rng.hpp"

#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace coop_arq {

struct Geometry {
    double s0 = 0.05;   ///< radius of the relay disk
    double s1 = 0.5;    ///< disk center x
    double s2 = 0.0;    ///< disk center y
    double eta = 3.0;   ///< path-loss exponent

    void validate() const {
        if (!(s0 >= 0.0)) throw domain_error("geometry: s0 must be >= 0");
        if (!(eta > 0.0)) throw domain_error("geometry: eta must be > 0");
    }
};

/// Worst-case variance per link class.
struct LinkVariances {
    double beta0 = 1.0;
    double beta1 = 1.0;
    double beta2 = 1.0;
    double beta3 = 1.0;

    void validate() const {
        if (!(beta0 > 0 && beta1 > 0 && beta2 > 0 && beta3 > 0))
            throw domain_error("link variances must be strictly positive");
    }
};

inline LinkVariances variances_from_geometry(const Geometry& g) {
    g.validate();
    const double d1 = std::hypot(g.s1, g.s2) + g.s0;
    const double d2 = std::hypot(1.0 - g.s1, g.s2) + g.s0;
    const double d3 = 2.0 * g.s0;
    if (d1 <= 0.0 || d2 <= 0.0 || d3 <= 0.0)
        throw domain_error("variances_from_geometry: zero link distance");
    return {1.0, std::pow(d1, -g.eta), std::pow(d2, -g.eta), std::pow(d3, -g.eta)};
}

struct Position {
    double x = 0.0;
    double y = 0.0;
};

/// Uniform placement in the disk of radius s0 around (s1, s2).
inline std::vector<Position> place_relays(const Geometry& g, int m, SplitMix64& rng) {
    if (m < 1) throw domain_error("place_relays: m must be >= 1");
    std::vector<Position> out;
    out.reserve(static_cast<std::size_t>(m));
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (int j = 0; j < m; ++j) {
        const double r = g.s0 * std::sqrt(rng.uniform());
        const double t = two_pi * rng.uniform();
        out.push_back({g.s1 + r * std::cos(t), g.s2 + r * std::sin(t)});
    }
    return out;
}

/// Per-relay variances. The uniform model replicates the worst-case betas;
/// the exact-geometry model derives every pair from relay positions.
struct LinkModel {
    double beta_sd = 1.0;
    std::vector<double> beta_sr;
    std::vector<double> beta_rd;
    std::vector<std::vector<double>> beta_rr;

    int relays() const { return static_cast<int>(beta_sr.size()); }

    static LinkModel uniform(const LinkVariances& v, int m) {
        v.validate();
        if (m < 1) throw domain_error("LinkModel: m must be >= 1");
        LinkModel lm;
        lm.beta_sd = v.beta0;
        lm.beta_sr.assign(static_cast<std::size_t>(m), v.beta1);
        lm.beta_rd.assign(static_cast<std::size_t>(m), v.beta2);
        lm.beta_rr.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m), v.beta3));
        return lm;
    }

    static LinkModel from_positions(const Geometry& g, std::span<const Position> pos) {
        g.validate();
        LinkModel lm;
        lm.beta_sd = 1.0;
        const std::size_t m = pos.size();
        lm.beta_sr.resize(m);
        lm.beta_rd.resize(m);
        lm.beta_rr.assign(m, std::vector<double>(m, 0.0));
        auto pl = [&](double d) {
            if (d <= 0.0) throw domain_error("LinkModel: coincident nodes");
            return std::pow(d, -g.eta);
        };
        for (std::size_t j = 0; j < m; ++j) {
            lm.beta_sr[j] = pl(std::hypot(pos[j].x, pos[j].y));
            lm.beta_rd[j] = pl(std::hypot(1.0 - pos[j].x, pos[j].y));
            for (std::size_t i = 0; i < m; ++i)
                if (i != j) lm.beta_rr[j][i] = pl(std::hypot(pos[j].x - pos[i].x, pos[j].y - pos[i].y));
        }
        return lm;
    }
};

/// One round of gains. c[i][j] is the gain from relay i to relay j.
struct ChannelRealization {
    double w = 0.0;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<std::vector<double>> c;
};

inline double draw_exp(SplitMix64& rng, double mean) {
    return std::exponential_distribution<double>(1.0 / mean)(rng);
}

/// Draws a full round. Uses the same substreams as the protocol engine, so a
/// trial's gains can be reproduced from (seed, trial, round).
inline ChannelRealization draw_round(const LinkModel& lm, double rho, std::uint64_t seed,
                                     std::uint64_t trial, std::uint32_t round) {
    if (!(rho > 0.0)) throw domain_error("draw_round: rho must be > 0");
    const int m = lm.relays();
    ChannelRealization ch;
    auto sd = substream(seed, trial, round, Link::SD);
    ch.w = draw_exp(sd, rho * lm.beta_sd);
    auto sr = substream(seed, trial, round, Link::SR);
    auto rd = substream(seed, trial, round, Link::RD);
    for (int j = 0; j < m; ++j) ch.a.push_back(draw_exp(sr, rho * lm.beta_sr[static_cast<std::size_t>(j)]));
    for (int j = 0; j < m; ++j) ch.b.push_back(draw_exp(rd, rho * lm.beta_rd[static_cast<std::size_t>(j)]));
    ch.c.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m), 0.0));
    for (int i = 0; i < m; ++i) {
        auto rr = substream(seed, trial, round, Link::RR, static_cast<std::uint32_t>(i));
        for (int j = 0; j < m; ++j) {
            const double x = draw_exp(rr, rho * (i == j ? 1.0 : lm.beta_rr[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
            if (i != j) ch.c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = x;
        }
    }
    return ch;
}

inline ChannelRealization draw_round(const LinkVariances& v, int m, double rho, std::uint64_t seed,
                                     std::uint64_t trial, std::uint32_t round) {
    return draw_round(LinkModel::uniform(v, m), rho, seed, trial, round);
}

/// Two-hop AF SNR ab/(a+b+1).
constexpr double af_two_hop_snr(double a, double b) noexcept { return a * b / (a + b + 1.0); }

/// k-hop AF SNR for chain [a1, c2..ck] and destination hop b.
/// A zero gain anywhere gives 0 (dead hop).
inline double af_multi_hop_snr(std::span<const double> chain, double b) noexcept {
    if (chain.empty()) return b;
    if (chain.size() == 1) return af_two_hop_snr(chain[0], b);
    if (!(b > 0.0)) return 0.0;
    double prod = 1.0 + 1.0 / b;
    for (double g : chain) {
        if (!(g > 0.0)) return 0.0;
        prod *= 1.0 + 1.0 / g;
    }
    return 1.0 / (prod - 1.0);
}

} // namespace coop_arq
