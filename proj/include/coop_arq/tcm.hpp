#pragma once

// Trellis-coded modulation: code tables, distance spectra, encoding,
// coherent Viterbi MLSD, AF forwarding of baseband codewords and
// SNR-weighted maximal ratio combining.

#include "coop_arq/errors.hpp"
#include "coop_arq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace coop_arq {

using cplx = std::complex<double>;

/// A code as a state machine: from state s with input symbol u (k bits),
/// go to next[s*U+u] and emit constellation point out[s*U+u].
struct TrellisCode {
    std::string name;
    int num_states = 0;
    int k = 0;                        // information bits per symbol (= R)
    int L = 130;                      // codeword length in symbols, tail included
    std::vector<cplx> constellation;  // unit average energy
    std::vector<int> next;
    std::vector<int> out;
    std::vector<int> tail_input;      // per state: input moving one step closer to state 0
    int tail_len = 0;                 // steps needed to reach state 0 from anywhere

    int inputs() const { return 1 << k; }
    double R() const { return k; }
    int info_symbols() const { return L - tail_len; }
    int info_bits() const { return k * info_symbols(); }

    int next_state(int s, int u) const { return next[static_cast<std::size_t>(s * inputs() + u)]; }
    int output(int s, int u) const { return out[static_cast<std::size_t>(s * inputs() + u)]; }
};

namespace detail {

/// Backward BFS from state 0 to find termination inputs.
inline void finish_trellis(TrellisCode& c) {
    const int S = c.num_states;
    const int U = c.inputs();
    std::vector<int> dist(static_cast<std::size_t>(S), -1);
    c.tail_input.assign(static_cast<std::size_t>(S), 0);
    dist[0] = 0;
    for (int level = 1; level <= S; ++level) {
        for (int s = 1; s < S; ++s) {
            if (dist[static_cast<std::size_t>(s)] >= 0) continue;
            for (int u = 0; u < U; ++u)
                if (dist[static_cast<std::size_t>(c.next_state(s, u))] == level - 1) {
                    dist[static_cast<std::size_t>(s)] = level;
                    c.tail_input[static_cast<std::size_t>(s)] = u;
                    break;
                }
        }
    }
    int mx = 0;
    for (int d : dist) {
        if (d < 0) throw config_error("trellis " + c.name + " cannot be terminated");
        mx = std::max(mx, d);
    }
    // state 0 stays put under its tail input
    for (int u = 0; u < U; ++u)
        if (c.next_state(0, u) == 0) { c.tail_input[0] = u; break; }
    c.tail_len = mx;
}

inline void normalize(std::vector<cplx>& pts) {
    double e = 0.0;
    for (auto& p : pts) e += std::norm(p);
    e /= static_cast<double>(pts.size());
    const double s = 1.0 / std::sqrt(e);
    for (auto& p : pts) p *= s;
}

inline int octal(int v) {
    int r = 0;
    int base = 1;
    while (v) {
        r += (v % 10) * base;
        base *= 8;
        v /= 10;
    }
    return r;
}

} // namespace detail

/// Rate-1/2 feedforward convolutional code on Gray-mapped QPSK.
/// Generators in octal notation, e.g. {5, 7} or {133, 171}.
inline TrellisCode make_conv_qpsk(const std::string& name, int g1_oct, int g2_oct, int L = 130) {
    const int g1 = detail::octal(g1_oct);
    const int g2 = detail::octal(g2_oct);
    int nu = 0;
    while ((g1 | g2) >> (nu + 1)) ++nu;
    TrellisCode c;
    c.name = name;
    c.k = 1;
    c.L = L;
    c.num_states = 1 << nu;
    const double h = 1.0 / std::sqrt(2.0);
    // label = c1 + 2 c2 ; bit 0 -> +, bit 1 -> -
    for (int lab = 0; lab < 4; ++lab)
        c.constellation.emplace_back((lab & 1) ? -h : h, (lab & 2) ? -h : h);
    c.next.resize(static_cast<std::size_t>(c.num_states * 2));
    c.out.resize(c.next.size());
    // register holds u_{n-1} in bit nu-1 ... u_{n-nu} in bit 0
    for (int s = 0; s < c.num_states; ++s) {
        for (int u = 0; u < 2; ++u) {
            const int reg = (u << nu) | s;   // bit nu is the current input
            const int c1 = __builtin_parity(static_cast<unsigned>(reg & g1));
            const int c2 = __builtin_parity(static_cast<unsigned>(reg & g2));
            c.next[static_cast<std::size_t>(s * 2 + u)] = reg >> 1;
            c.out[static_cast<std::size_t>(s * 2 + u)] = c1 | (c2 << 1);
        }
    }
    detail::finish_trellis(c);
    return c;
}

/// Systematic feedback Ungerboeck code from parity-check polynomials
/// h[0] (feedback) and h[1..kc] (octal), kc coded bits, the rest uncoded.
/// label_to_point maps the set-partition label (z0 = LSB) to a point.
inline TrellisCode make_ungerboeck(const std::string& name, int nu, std::vector<int> h_oct, int k,
                                   std::vector<cplx> label_to_point, int L = 130) {
    const int kc = static_cast<int>(h_oct.size()) - 1;
    std::vector<int> h;
    for (int v : h_oct) h.push_back(detail::octal(v));
    TrellisCode c;
    c.name = name;
    c.k = k;
    c.L = L;
    c.num_states = 1 << nu;
    c.constellation = std::move(label_to_point);
    detail::normalize(c.constellation);
    const int U = 1 << k;
    c.next.resize(static_cast<std::size_t>(c.num_states * U));
    c.out.resize(c.next.size());
    // observer form: state bit (j-1) holds register R_j; z0 = R_1
    for (int s = 0; s < c.num_states; ++s) {
        const int z0 = s & 1;
        for (int u = 0; u < U; ++u) {
            const int x = u & ((1 << kc) - 1);
            int ns = 0;
            for (int j = 1; j <= nu; ++j) {
                int bit = (j < nu) ? (s >> j) & 1 : 0;   // R_{j+1}
                bit ^= ((h[0] >> j) & 1) & z0;
                for (int i = 1; i <= kc; ++i) bit ^= ((h[static_cast<std::size_t>(i)] >> j) & 1) & ((x >> (i - 1)) & 1);
                ns |= bit << (j - 1);
            }
            c.next[static_cast<std::size_t>(s * U + u)] = ns;
            c.out[static_cast<std::size_t>(s * U + u)] = z0 | (u << 1);
        }
    }
    detail::finish_trellis(c);
    return c;
}

/// 8PSK with natural labels: label l -> exp(j 2 pi l / 8).
inline std::vector<cplx> psk8_natural() {
    std::vector<cplx> p;
    for (int l = 0; l < 8; ++l) p.push_back(std::polar(1.0, 2.0 * 3.14159265358979323846 * l / 8.0));
    return p;
}

/// Square (16, 64) or cross (32) QAM with three levels of set partitioning.
/// Lattice point (i, j): z0 = (i+j) mod 2, z1 = i mod 2,
/// z2 = (floor(i/2) + floor(j/2)) mod 2; remaining label bits index the
/// points of a subset in (i, j) order.
inline std::vector<cplx> qam_set_partitioned(int M) {
    std::vector<std::pair<int, int>> pts;
    int side = 0;
    if (M == 16) side = 4;
    else if (M == 64) side = 8;
    else if (M == 32) side = 6;
    else throw config_error("qam_set_partitioned: M must be 16, 32 or 64");
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) {
            if (M == 32 && (i == 0 || i == side - 1) && (j == 0 || j == side - 1)) continue;
            pts.emplace_back(i, j);
        }
    std::vector<cplx> lab(static_cast<std::size_t>(M));
    std::vector<int> used(8, 0);
    for (auto [i, j] : pts) {
        const int sub = ((i + j) & 1) | ((i & 1) << 1) | ((((i >> 1) + (j >> 1)) & 1) << 2);
        const int idx = used[static_cast<std::size_t>(sub)]++;
        lab[static_cast<std::size_t>(sub | (idx << 3))] = cplx(2.0 * i - (side - 1), 2.0 * j - (side - 1));
    }
    return lab;
}

/// Codes by rate tag: rate-1 .. rate-5, plus rate-1-k7 (GP [133, 171]).
inline TrellisCode make_code(const std::string& tag, int L = 130) {
    if (tag == "rate-1") return make_conv_qpsk(tag, 5, 7, L);
    if (tag == "rate-1-k7") return make_conv_qpsk(tag, 133, 171, L);
    if (tag == "rate-2") return make_ungerboeck(tag, 2, {5, 2}, 2, psk8_natural(), L);
    if (tag == "rate-3") return make_ungerboeck(tag, 3, {11, 2, 4}, 3, qam_set_partitioned(16), L);
    if (tag == "rate-4") return make_ungerboeck(tag, 3, {11, 2, 4}, 4, qam_set_partitioned(32), L);
    if (tag == "rate-5") return make_ungerboeck(tag, 3, {11, 2, 4}, 5, qam_set_partitioned(64), L);
    throw config_error("unknown rate tag '" + tag + "'");
}

struct SpectrumEntry {
    double d2 = 0.0;
    double omega = 0.0;   // expected error events at this distance per trellis step
};

struct DistanceSpectrum {
    std::vector<SpectrumEntry> entries;   // ascending d2
    double dm2() const { return entries.empty() ? 0.0 : entries.front().d2; }
    double dM2() const { return entries.empty() ? 0.0 : entries.back().d2; }
    double omega_dm() const { return entries.empty() ? 0.0 : entries.front().omega; }
};

/// Error-event spectrum below d2_cap, averaged over a uniformly random
/// correct path (the mappings are not linear, so every correct state and
/// input is enumerated). An event starts where the two paths split and ends
/// at the first remerge. Distances are grouped to 1e-9.
inline DistanceSpectrum distance_spectrum(const TrellisCode& c, double d2_cap, std::size_t max_work = 2'000'000'000) {
    if (!(d2_cap > 0.0)) throw domain_error("distance_spectrum: cap must be > 0");
    const int S = c.num_states;
    const int U = c.inputs();
    std::vector<double> pd(c.constellation.size() * c.constellation.size());
    const std::size_t P = c.constellation.size();
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t j = 0; j < P; ++j) pd[i * P + j] = std::norm(c.constellation[i] - c.constellation[j]);

    // Lower bound on the distance still needed to remerge from (s1, s2):
    // shortest path in the pair graph (Bellman-Ford style relaxation).
    std::vector<double> lb(static_cast<std::size_t>(S * S), std::numeric_limits<double>::infinity());
    for (int s = 0; s < S; ++s) lb[static_cast<std::size_t>(s * S + s)] = 0.0;
    for (bool changed = true; changed;) {
        changed = false;
        for (int s1 = 0; s1 < S; ++s1)
            for (int s2 = 0; s2 < S; ++s2) {
                if (s1 == s2) continue;
                double best = lb[static_cast<std::size_t>(s1 * S + s2)];
                for (int u1 = 0; u1 < U; ++u1)
                    for (int u2 = 0; u2 < U; ++u2) {
                        const double d = pd[static_cast<std::size_t>(c.output(s1, u1)) * P + static_cast<std::size_t>(c.output(s2, u2))]
                                         + lb[static_cast<std::size_t>(c.next_state(s1, u1) * S + c.next_state(s2, u2))];
                        if (d < best - 1e-12) best = d;
                    }
                if (best < lb[static_cast<std::size_t>(s1 * S + s2)] - 1e-12) {
                    lb[static_cast<std::size_t>(s1 * S + s2)] = best;
                    changed = true;
                }
            }
    }

    // Breadth-first over (correct state, error state, accumulated distance)
    // with equal keys merged, so parallel transitions do not multiply work.
    using Key = std::tuple<int, int, long long>;
    std::map<long long, double> acc;
    std::map<Key, double> frontier, next;
    auto dkey = [](double d) { return std::llround(d * 1e9); };
    const double w_step = 1.0 / U;
    auto push = [&](std::map<Key, double>& dst, int s1, int s2, double d, double w) {
        const int n1 = s1;
        const int n2 = s2;
        if (d + lb[static_cast<std::size_t>(n1 * S + n2)] > d2_cap + 1e-9) return;
        if (n1 == n2) acc[dkey(d)] += w;
        else dst[Key{n1, n2, dkey(d)}] += w;
    };
    for (int s = 0; s < S; ++s)
        for (int u1 = 0; u1 < U; ++u1)
            for (int u2 = 0; u2 < U; ++u2)
                if (u1 != u2)
                    push(frontier, c.next_state(s, u1), c.next_state(s, u2),
                         pd[static_cast<std::size_t>(c.output(s, u1)) * P + static_cast<std::size_t>(c.output(s, u2))],
                         w_step / S);
    std::size_t work = 0;
    for (int depth = 0; !frontier.empty(); ++depth) {
        if (depth > 4096) throw numerical_error("distance_spectrum: no remerge within 4096 steps");
        next.clear();
        for (const auto& [key, w] : frontier) {
            const auto [s1, s2, dk] = key;
            const double d = static_cast<double>(dk) * 1e-9;
            for (int u1 = 0; u1 < U; ++u1)
                for (int u2 = 0; u2 < U; ++u2)
                    push(next, c.next_state(s1, u1), c.next_state(s2, u2),
                         d + pd[static_cast<std::size_t>(c.output(s1, u1)) * P + static_cast<std::size_t>(c.output(s2, u2))],
                         w * w_step);
            work += static_cast<std::size_t>(U * U);
        }
        if (work > max_work) throw numerical_error("distance_spectrum: search exploded; lower the cap");
        std::swap(frontier, next);
    }
    DistanceSpectrum ds;
    for (auto& [key, om] : acc) {
        const double d = static_cast<double>(key) * 1e-9;
        if (!ds.entries.empty() && d - ds.entries.back().d2 <= 1e-7 * std::max(1.0, d)) ds.entries.back().omega += om;
        else ds.entries.push_back({d, om});
    }
    return ds;
}

/// Information bits -> input symbols (k bits each, LSB first).
inline std::vector<int> bits_to_inputs(const TrellisCode& c, std::span<const std::uint8_t> bits) {
    if (static_cast<int>(bits.size()) != c.info_bits())
        throw domain_error("encode: expected " + std::to_string(c.info_bits()) + " bits, got " + std::to_string(bits.size()));
    std::vector<int> u(static_cast<std::size_t>(c.info_symbols()));
    for (int t = 0; t < c.info_symbols(); ++t) {
        int v = 0;
        for (int i = 0; i < c.k; ++i) v |= (bits[static_cast<std::size_t>(t * c.k + i)] & 1) << i;
        u[static_cast<std::size_t>(t)] = v;
    }
    return u;
}

inline std::vector<std::uint8_t> inputs_to_bits(const TrellisCode& c, std::span<const int> u) {
    std::vector<std::uint8_t> bits;
    bits.reserve(u.size() * static_cast<std::size_t>(c.k));
    for (int v : u)
        for (int i = 0; i < c.k; ++i) bits.push_back(static_cast<std::uint8_t>((v >> i) & 1));
    return bits;
}

/// Encodes info input symbols followed by the zero tail. Returns L symbols.
inline std::vector<cplx> encode_inputs(const TrellisCode& c, std::span<const int> u) {
    if (static_cast<int>(u.size()) != c.info_symbols()) throw domain_error("encode: wrong number of input symbols");
    std::vector<cplx> x;
    x.reserve(static_cast<std::size_t>(c.L));
    int s = 0;
    for (int v : u) {
        x.push_back(c.constellation[static_cast<std::size_t>(c.output(s, v))]);
        s = c.next_state(s, v);
    }
    for (int t = 0; t < c.tail_len; ++t) {
        const int v = c.tail_input[static_cast<std::size_t>(s)];
        x.push_back(c.constellation[static_cast<std::size_t>(c.output(s, v))]);
        s = c.next_state(s, v);
    }
    return x;
}

inline std::vector<cplx> encode(const TrellisCode& c, std::span<const std::uint8_t> bits) {
    const auto u = bits_to_inputs(c, bits);
    return encode_inputs(c, u);
}

/// Received codeword: samples = cascade * x + noise, noise ~ CN(0, noise_var).
struct RelayedObservation {
    std::vector<cplx> samples;
    cplx cascade{1.0, 0.0};
    double noise_var = 1.0;

    double snr() const { return std::norm(cascade) / noise_var; }
};

inline void add_noise(std::vector<cplx>& y, double var, SplitMix64& rng) {
    std::normal_distribution<double> n(0.0, std::sqrt(var / 2.0));
    for (auto& v : y) v += cplx(n(rng), n(rng));
}

/// A node transmits the clean codeword x over a link with gain rho|h|^2 and phase.
inline RelayedObservation transmit(std::span<const cplx> x, double gain, double phase, SplitMix64& noise) {
    RelayedObservation o;
    o.cascade = std::polar(std::sqrt(gain), phase);
    o.samples.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) o.samples[i] = o.cascade * x[i];
    o.noise_var = 1.0;
    add_noise(o.samples, 1.0, noise);
    return o;
}

/// AF forwarding: the relay scales its stored observation to unit power,
/// the next link applies sqrt(gain) e^(j phase) and unit receiver noise.
inline RelayedObservation af_relay_forward(const RelayedObservation& in, double gain, double phase, SplitMix64& noise) {
    const double pin = std::norm(in.cascade) + in.noise_var;
    const cplx g = std::polar(std::sqrt(gain / pin), phase);
    RelayedObservation o;
    o.cascade = g * in.cascade;
    o.noise_var = std::norm(g) * in.noise_var + 1.0;
    o.samples.resize(in.samples.size());
    for (std::size_t i = 0; i < in.samples.size(); ++i) o.samples[i] = g * in.samples[i];
    add_noise(o.samples, 1.0, noise);
    return o;
}

/// SNR-weighted MRC with weights conj(cascade)/noise_var, rescaled so the
/// result has unit noise variance. Effective SNR is the sum of branch SNRs.
inline RelayedObservation mrc_combine(std::span<const RelayedObservation> obs) {
    if (obs.empty()) throw domain_error("mrc_combine: empty list");
    if (obs.size() == 1) return obs[0];
    double S = 0.0;
    for (const auto& o : obs) S += o.snr();
    const double scale = S > 0.0 ? 1.0 / std::sqrt(S) : 0.0;
    RelayedObservation r;
    r.samples.assign(obs[0].samples.size(), cplx{});
    for (const auto& o : obs) {
        const cplx w = std::conj(o.cascade) / o.noise_var * scale;
        for (std::size_t i = 0; i < r.samples.size(); ++i) r.samples[i] += w * o.samples[i];
    }
    r.cascade = cplx(std::sqrt(S), 0.0);
    r.noise_var = 1.0;
    return r;
}

/// Coherent Viterbi MLSD with known cascade, starting and ending in state 0.
/// Returns the information input symbols.
class ViterbiDecoder {
public:
    /// Branches leaving one state towards one next state are grouped; a
    /// group's metric is the best point of its (parallel) point set, and
    /// each distinct set is scored once per step.
    explicit ViterbiDecoder(const TrellisCode& c) : c_(c) {
        const int S = c.num_states;
        const int U = c.inputs();
        std::map<std::vector<int>, int> set_id;
        first_.assign(static_cast<std::size_t>(S) + 1, 0);
        for (int s = 0; s < S; ++s) {
            std::map<int, std::vector<std::pair<int, int>>> by_next;   // ns -> (point, input)
            for (int u = 0; u < U; ++u) by_next[c.next_state(s, u)].emplace_back(c.output(s, u), u);
            for (auto& [ns, br] : by_next) {
                std::sort(br.begin(), br.end());
                std::vector<int> pts;
                for (auto& [pt, u] : br) pts.push_back(pt);
                auto it = set_id.try_emplace(pts, static_cast<int>(sets_.size())).first;
                if (it->second == static_cast<int>(sets_.size())) sets_.push_back(pts);
                Group g;
                g.next = ns;
                g.set = it->second;
                g.input_of_point.assign(c.constellation.size(), -1);
                for (auto& [pt, u] : br)
                    if (g.input_of_point[static_cast<std::size_t>(pt)] < 0) g.input_of_point[static_cast<std::size_t>(pt)] = u;
                groups_.push_back(std::move(g));
            }
            first_[static_cast<std::size_t>(s) + 1] = static_cast<int>(groups_.size());
        }
    }

    std::vector<int> decode_inputs(const RelayedObservation& obs) {
        const int S = c_.num_states;
        const int L = static_cast<int>(obs.samples.size());
        if (L != c_.L) throw domain_error("viterbi: observation length != L");
        const std::size_t P = c_.constellation.size();
        constexpr double inf = std::numeric_limits<double>::infinity();
        pm_.assign(static_cast<std::size_t>(S), inf);
        npm_.resize(static_cast<std::size_t>(S));
        bm_.resize(P);
        hx_.resize(P);
        smin_.resize(sets_.size());
        sarg_.resize(sets_.size());
        surv_.resize(static_cast<std::size_t>(L * S));
        for (std::size_t p = 0; p < P; ++p) hx_[p] = obs.cascade * c_.constellation[p];
        pm_[0] = 0.0;
        for (int t = 0; t < L; ++t) {
            const cplx y = obs.samples[static_cast<std::size_t>(t)];
            for (std::size_t p = 0; p < P; ++p) bm_[p] = std::norm(y - hx_[p]);
            std::fill(npm_.begin(), npm_.end(), inf);
            auto* sv = &surv_[static_cast<std::size_t>(t * S)];
            if (t >= c_.info_symbols()) {
                for (int s = 0; s < S; ++s) {
                    const double base = pm_[static_cast<std::size_t>(s)];
                    if (base == inf) continue;
                    const int u = c_.tail_input[static_cast<std::size_t>(s)];
                    const int ns = c_.next_state(s, u);
                    const double v = base + bm_[static_cast<std::size_t>(c_.output(s, u))];
                    if (v < npm_[static_cast<std::size_t>(ns)]) {
                        npm_[static_cast<std::size_t>(ns)] = v;
                        sv[ns] = (s << 8) | u;
                    }
                }
            } else {
                for (std::size_t k = 0; k < sets_.size(); ++k) {
                    double best = inf;
                    int arg = 0;
                    for (int pt : sets_[k])
                        if (bm_[static_cast<std::size_t>(pt)] < best) {
                            best = bm_[static_cast<std::size_t>(pt)];
                            arg = pt;
                        }
                    smin_[k] = best;
                    sarg_[k] = arg;
                }
                for (int s = 0; s < S; ++s) {
                    const double base = pm_[static_cast<std::size_t>(s)];
                    if (base == inf) continue;
                    for (int gi = first_[static_cast<std::size_t>(s)]; gi < first_[static_cast<std::size_t>(s) + 1]; ++gi) {
                        const Group& g = groups_[static_cast<std::size_t>(gi)];
                        const double v = base + smin_[static_cast<std::size_t>(g.set)];
                        if (v < npm_[static_cast<std::size_t>(g.next)]) {
                            npm_[static_cast<std::size_t>(g.next)] = v;
                            sv[g.next] = (s << 8) | g.input_of_point[static_cast<std::size_t>(sarg_[static_cast<std::size_t>(g.set)])];
                        }
                    }
                }
            }
            std::swap(pm_, npm_);
        }
        std::vector<int> u(static_cast<std::size_t>(L));
        int s = 0;
        for (int t = L - 1; t >= 0; --t) {
            const int e = surv_[static_cast<std::size_t>(t * S + s)];
            u[static_cast<std::size_t>(t)] = e & 0xff;
            s = e >> 8;
        }
        u.resize(static_cast<std::size_t>(c_.info_symbols()));
        return u;
    }

    std::vector<std::uint8_t> decode(const RelayedObservation& obs) {
        const auto u = decode_inputs(obs);
        return inputs_to_bits(c_, u);
    }

private:
    struct Group {
        int next = 0;
        int set = 0;
        std::vector<int> input_of_point;
    };

    const TrellisCode& c_;
    std::vector<Group> groups_;
    std::vector<int> first_;
    std::vector<std::vector<int>> sets_;
    std::vector<double> pm_, npm_, bm_, smin_;
    std::vector<int> sarg_;
    std::vector<cplx> hx_;
    std::vector<int> surv_;
};

inline std::vector<std::uint8_t> viterbi_mlsd(const RelayedObservation& obs, const TrellisCode& c) {
    ViterbiDecoder dec(c);
    return dec.decode(obs);
}

} // namespace coop_arq
