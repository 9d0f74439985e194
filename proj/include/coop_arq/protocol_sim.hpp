#pragma once

// Packet-lifetime engine for the relaying ARQ protocols.
//
// The control flow (who transmits, who qualifies, who gets selected) lives in
// run_lifetime(). What a transmission *does* is delegated to a medium: the
// outage medium works on SNRs only, the signal medium in per_sim.hpp pushes
// complex codewords through the same decisions.

#include "coop_arq/errors.hpp"
#include "coop_arq/fading.hpp"
#include "coop_arq/outage.hpp"
#include "coop_arq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

namespace coop_arq {

enum class Protocol { NoRelay, AF, SAF, OAF, SOAF_A, SOAF_B, SODF_B };

struct ProtocolKind {
    Protocol p = Protocol::SAF;
    bool harq = false;
};

inline std::string to_string(Protocol p) {
    switch (p) {
    case Protocol::NoRelay: return "no-relay";
    case Protocol::AF: return "af";
    case Protocol::SAF: return "saf";
    case Protocol::OAF: return "oaf";
    case Protocol::SOAF_A: return "soaf-a";
    case Protocol::SOAF_B: return "soaf-b";
    case Protocol::SODF_B: return "sodf-b";
    }
    return "?";
}

inline Protocol protocol_from_string(const std::string& s) {
    for (Protocol p : {Protocol::NoRelay, Protocol::AF, Protocol::SAF, Protocol::OAF, Protocol::SOAF_A,
                       Protocol::SOAF_B, Protocol::SODF_B})
        if (to_string(p) == s) return p;
    throw config_error("unknown protocol '" + s + "'");
}

inline std::string to_string(const ProtocolKind& k) { return (k.harq ? "harq-" : "") + to_string(k.p); }

/// Number of thresholds a protocol needs.
inline std::size_t thresholds_needed(Protocol p, int m, int N) {
    switch (p) {
    case Protocol::SAF:
    case Protocol::SOAF_A: return 1;
    case Protocol::SOAF_B: return static_cast<std::size_t>(std::min(m, N));
    default: return 0;
    }
}

struct SimParams {
    double R = 1.0;
    int m = 3;
    int N = 3;
    double rho = 100.0;
    LinkModel links = LinkModel::uniform(LinkVariances{}, 3);

    double delta() const { return delta_of_rate(R); }

    void validate() const {
        if (m < 1 || N < 0) throw config_error("SimParams: need m >= 1, N >= 0");
        if (!(rho > 0.0)) throw domain_error("SimParams: rho must be > 0");
        if (links.relays() < m) throw config_error("SimParams: link model has fewer relays than m");
    }
};

struct RoundEvent {
    int transmitter = -1;          // -1 = source, otherwise relay index
    double snr = 0.0;              // instantaneous destination SNR of this round
    std::vector<int> joined;       // relays qualified at the end of this round
};

struct TrialOutcome {
    bool success = false;
    int success_round = -1;        // first successful round, -1 on drop
    int rounds_used = 0;           // success_round, or N on drop
    std::vector<RoundEvent> rounds;

    bool failed_after(int n) const { return success_round < 0 || success_round > n; }
};

/// Per-relay protocol state. The chain is frozen once qualified.
struct RelayState {
    bool qualified = false;
    int hop = 0;
    std::vector<double> chain;
};

namespace detail {

inline int argmax_b(const std::vector<RelayState>& rs, const std::vector<double>& b, int m) {
    int best = -1;
    for (int j = 0; j < m; ++j)
        if (rs[static_cast<std::size_t>(j)].qualified && (best < 0 || b[static_cast<std::size_t>(j)] > b[static_cast<std::size_t>(best)]))
            best = j;
    return best;
}

} // namespace detail

/// One packet lifetime, advanced a round at a time. Medium contract:
///   reset()
///   bool source_to_destination(r, w)          destination verdict for a source round
///   bool relay_to_destination(r, j, b, chain) destination verdict for a relayed round
///   bool source_to_relay(r, j, a, decode)     relay j stores the source signal;
///                                             returns decode success when decode is set
///   bool relay_to_relay(r, j, i, c, decode)   relay i stores relay j's transmission
///   rekey(key)                                later rounds draw from streams of key
///
/// Rounds draw only from (seed, key, round) substreams, so the state after a
/// round is all the future depends on. With a value Medium the object can be
/// copied and rekeyed to branch a lifetime into independent continuations.
template <class Medium>
class Lifetime {
public:
    Lifetime(const ProtocolKind& kind, const SimParams& sp, const std::vector<double>& th, std::uint64_t seed,
             std::uint64_t key, Medium med, bool keep_trace = false)
        : kind_(&kind), sp_(&sp), th_(&th), seed_(seed), key_(key), med_(std::forward<Medium>(med)),
          keep_trace_(keep_trace), m_((kind.p == Protocol::AF || kind.p == Protocol::SAF) ? 1 : sp.m),
          rs_(static_cast<std::size_t>(m_)) {
        med_.reset();
    }

    bool done() const { return out_.success || r_ > sp_->N; }
    int next_round() const { return r_; }
    std::uint64_t key() const { return key_; }
    const TrialOutcome& outcome() const { return out_; }

    void rekey(std::uint64_t key) {
        key_ = key;
        med_.rekey(key);
    }

    /// Plays round next_round(); returns the destination verdict.
    bool step();

    TrialOutcome finish() {
        while (!done()) step();
        if (!out_.success) out_.rounds_used = sp_->N;
        return std::move(out_);
    }

private:
    const ProtocolKind* kind_;
    const SimParams* sp_;
    const std::vector<double>* th_;
    std::uint64_t seed_;
    std::uint64_t key_;
    Medium med_;
    bool keep_trace_;
    int m_;
    int r_ = 0;
    int qsize_ = 0;
    std::vector<RelayState> rs_;
    TrialOutcome out_;
};

template <class Medium>
bool Lifetime<Medium>::step() {
    const ProtocolKind& kind = *kind_;
    const SimParams& sp = *sp_;
    const std::vector<double>& th = *th_;
    const int m = m_;
    const int M = sp.links.relays();
    const double rho = sp.rho;
    const LinkModel& lm = sp.links;
    const std::size_t K = thresholds_needed(kind.p, sp.m, sp.N);
    const bool df = kind.p == Protocol::SODF_B;
    const bool overhear = kind.p == Protocol::SOAF_B || kind.p == Protocol::SODF_B;
    const int r = r_;
    const std::uint64_t seed = seed_, trial = key_;
    auto& rs = rs_;
    auto& med = med_;

    RoundEvent ev;
    const bool from_source = (kind.p == Protocol::NoRelay) || r == 0 || qsize_ == 0;
    bool ok = false;
    int active = -1;
    if (from_source) {
        auto sd = substream(seed, trial, static_cast<std::uint32_t>(r), Link::SD);
        const double w = draw_exp(sd, rho * lm.beta_sd);
        auto sr = substream(seed, trial, static_cast<std::uint32_t>(r), Link::SR);
        std::vector<double> a(static_cast<std::size_t>(M));
        for (int j = 0; j < M; ++j) a[static_cast<std::size_t>(j)] = draw_exp(sr, rho * lm.beta_sr[static_cast<std::size_t>(j)]);
        ev.snr = w;
        ok = med.source_to_destination(r, w);
        if (!ok && kind.p != Protocol::NoRelay) {
            for (int j = 0; j < m; ++j) {
                auto& st = rs[static_cast<std::size_t>(j)];
                if (st.qualified) continue;
                const double aj = a[static_cast<std::size_t>(j)];
                bool q = false;
                switch (kind.p) {
                case Protocol::AF:
                case Protocol::OAF: q = aj > 0.0; break;
                case Protocol::SAF:
                case Protocol::SOAF_A:
                case Protocol::SOAF_B: q = aj > th[0]; break;
                case Protocol::SODF_B: q = med.source_to_relay(r, j, aj, true); break;
                default: break;
                }
                if (!q) continue;
                if (!df) med.source_to_relay(r, j, aj, false);
                st.qualified = true;
                st.hop = 1;
                st.chain.assign(1, aj);
                ++qsize_;
                ev.joined.push_back(j);
            }
        }
    } else {
        auto rd = substream(seed, trial, static_cast<std::uint32_t>(r), Link::RD);
        std::vector<double> b(static_cast<std::size_t>(M));
        for (int j = 0; j < M; ++j) b[static_cast<std::size_t>(j)] = draw_exp(rd, rho * lm.beta_rd[static_cast<std::size_t>(j)]);
        if (kind.p == Protocol::OAF) {
            double best = -1.0;
            for (int j = 0; j < m; ++j) {
                const double s = af_two_hop_snr(rs[static_cast<std::size_t>(j)].chain[0], b[static_cast<std::size_t>(j)]);
                if (s > best) { best = s; active = j; }
            }
        } else {
            active = detail::argmax_b(rs, b, m);
        }
        const auto& st = rs[static_cast<std::size_t>(active)];
        const double bj = b[static_cast<std::size_t>(active)];
        ev.transmitter = active;
        ev.snr = df ? bj : af_multi_hop_snr(st.chain, bj);
        ok = med.relay_to_destination(r, active, bj, st.chain);
        if (!ok && overhear && qsize_ < m) {
            const int k = st.hop;
            auto rr = substream(seed, trial, static_cast<std::uint32_t>(r), Link::RR, static_cast<std::uint32_t>(active));
            std::vector<double> c(static_cast<std::size_t>(M));
            for (int i = 0; i < M; ++i)
                c[static_cast<std::size_t>(i)] = draw_exp(rr, rho * (i == active ? 1.0 : lm.beta_rr[static_cast<std::size_t>(active)][static_cast<std::size_t>(i)]));
            std::vector<int> joined;
            for (int i = 0; i < m; ++i) {
                auto& si = rs[static_cast<std::size_t>(i)];
                if (si.qualified || i == active) continue;
                const double ci = c[static_cast<std::size_t>(i)];
                bool q;
                if (df) {
                    q = med.relay_to_relay(r, active, i, ci, true);
                } else {
                    q = static_cast<std::size_t>(k) < K && ci > th[static_cast<std::size_t>(k)];
                    if (q) med.relay_to_relay(r, active, i, ci, false);
                }
                if (q) joined.push_back(i);
            }
            // join after the scan so every listener heard the same active relay
            for (int i : joined) {
                auto& si = rs[static_cast<std::size_t>(i)];
                si.qualified = true;
                if (df) {
                    si.hop = 1;
                    si.chain.assign(1, c[static_cast<std::size_t>(i)]);
                } else {
                    si.hop = k + 1;
                    si.chain = st.chain;
                    si.chain.push_back(c[static_cast<std::size_t>(i)]);
                }
                ++qsize_;
                ev.joined.push_back(i);
            }
        }
    }
    if (keep_trace_) out_.rounds.push_back(std::move(ev));
    if (ok) {
        out_.success = true;
        out_.success_round = r;
        out_.rounds_used = r;
    }
    ++r_;
    return ok;
}

template <class Medium>
TrialOutcome run_lifetime(const ProtocolKind& kind, const SimParams& sp, const std::vector<double>& th,
                          std::uint64_t seed, std::uint64_t trial, Medium& med, bool keep_trace = false) {
    return Lifetime<Medium&>(kind, sp, th, seed, trial, med, keep_trace).finish();
}

/// SNR-level medium. HARQ accumulates SNR (ideal MRC).
class OutageMedium {
public:
    OutageMedium(double delta, bool harq, bool df) : delta_(delta), harq_(harq), df_(df) {}

    void reset() { acc_ = 0.0; }
    void rekey(std::uint64_t) {}

    bool source_to_destination(int, double w) { return verdict(w); }

    bool relay_to_destination(int, int, double b, const std::vector<double>& chain) {
        return verdict(df_ ? b : af_multi_hop_snr(chain, b));
    }

    bool source_to_relay(int, int, double a, bool decode) { return decode ? a >= delta_ : true; }
    bool relay_to_relay(int, int, int, double c, bool decode) { return decode ? c >= delta_ : true; }

private:
    bool verdict(double snr) {
        if (harq_) {
            acc_ += snr;
            return acc_ >= delta_;
        }
        return snr >= delta_;
    }

    double delta_;
    bool harq_;
    bool df_;
    double acc_ = 0.0;
};

inline void check_thresholds(const ProtocolKind& kind, const SimParams& sp, const std::vector<double>& th) {
    const std::size_t need = thresholds_needed(kind.p, sp.m, sp.N);
    if (th.size() < need)
        throw config_error("protocol " + to_string(kind.p) + " needs " + std::to_string(need) + " threshold(s)");
    for (double t : th)
        if (!(t >= 0.0) || !std::isfinite(t)) throw config_error("thresholds must be finite and >= 0");
}

inline TrialOutcome run_outage_trial(const ProtocolKind& kind, const SimParams& sp, const std::vector<double>& th,
                                     std::uint64_t seed, std::uint64_t trial, bool keep_trace = false) {
    check_thresholds(kind, sp, th);
    OutageMedium med(sp.delta(), kind.harq, kind.p == Protocol::SODF_B);
    return run_lifetime(kind, sp, th, seed, trial, med, keep_trace);
}

inline TrialOutcome run_harq_outage_trial(ProtocolKind kind, const SimParams& sp, const std::vector<double>& th,
                                          std::uint64_t seed, std::uint64_t trial, bool keep_trace = false) {
    kind.harq = true;
    return run_outage_trial(kind, sp, th, seed, trial, keep_trace);
}

/// Failure counts after each round n = 0..N over a fixed trial budget.
struct FailureCounts {
    std::uint64_t trials = 0;
    std::vector<std::uint64_t> failures;   // failures[n]: still failed after round n

    double prob(int n) const { return trials ? static_cast<double>(failures[static_cast<std::size_t>(n)]) / static_cast<double>(trials) : 0.0; }

    /// 3-sigma normal-approximation binomial half-width.
    double ci(int n) const {
        if (!trials) return 0.0;
        const double p = prob(n);
        return 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
    }

    bool low_confidence(int n) const { return failures[static_cast<std::size_t>(n)] < 100; }

    FailureCounts& operator+=(const FailureCounts& o) {
        trials += o.trials;
        for (std::size_t i = 0; i < failures.size(); ++i) failures[i] += o.failures[i];
        return *this;
    }
};

/// Runs trials [0, trials) split into contiguous blocks over `workers`
/// threads. Each trial owns its substreams, so the result does not depend
/// on the worker count.
template <class TrialFn>
FailureCounts run_trials(int N, std::uint64_t trials, int workers, TrialFn&& fn) {
    if (trials < 1) throw config_error("trials must be >= 1");
    workers = std::max(1, workers);
    auto block = [&](std::uint64_t lo, std::uint64_t hi) {
        FailureCounts fc;
        fc.failures.assign(static_cast<std::size_t>(N + 1), 0);
        fc.trials = hi - lo;
        for (std::uint64_t t = lo; t < hi; ++t) {
            const TrialOutcome o = fn(t);
            const int upto = o.success ? o.success_round : N + 1;
            for (int n = 0; n < upto && n <= N; ++n) ++fc.failures[static_cast<std::size_t>(n)];
        }
        return fc;
    };
    if (workers == 1) return block(0, trials);
    std::vector<FailureCounts> parts(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        const std::uint64_t lo = trials * static_cast<std::uint64_t>(w) / static_cast<std::uint64_t>(workers);
        const std::uint64_t hi = trials * static_cast<std::uint64_t>(w + 1) / static_cast<std::uint64_t>(workers);
        pool.emplace_back([&, w, lo, hi] { parts[static_cast<std::size_t>(w)] = block(lo, hi); });
    }
    for (auto& t : pool) t.join();
    FailureCounts total = parts[0];
    for (std::size_t w = 1; w < parts.size(); ++w) total += parts[w];
    return total;
}

inline FailureCounts estimate_outage(const ProtocolKind& kind, const SimParams& sp, const std::vector<double>& th,
                                     std::uint64_t trials, std::uint64_t seed, int workers = 1) {
    sp.validate();
    check_thresholds(kind, sp, th);
    const bool df = kind.p == Protocol::SODF_B;
    return run_trials(sp.N, trials, workers, [&](std::uint64_t t) {
        OutageMedium med(sp.delta(), kind.harq, df);
        return run_lifetime(kind, sp, th, seed, t, med);
    });
}

/// Weighted failure sums from split lifetimes (see split_continue).
struct WeightedFailures {
    std::uint64_t trials = 0;             // root lifetimes
    std::vector<double> sum;              // sum over roots of the weighted failure tally after round n
    std::vector<double> sumsq;            // sum over roots of its square
    std::vector<std::uint64_t> events;    // failed continuations observed, unweighted

    double prob(int n) const { return trials ? sum[static_cast<std::size_t>(n)] / static_cast<double>(trials) : 0.0; }

    /// 3-sigma half-width from the sample variance of the per-root tallies.
    double ci(int n) const {
        if (trials < 2) return 0.0;
        const double T = static_cast<double>(trials);
        const double mean = prob(n);
        const double var = std::max(0.0, sumsq[static_cast<std::size_t>(n)] / T - mean * mean) * T / (T - 1.0);
        return 3.0 * std::sqrt(var / T);
    }

    bool low_confidence(int n) const { return events[static_cast<std::size_t>(n)] < 100; }
};

/// Stream key of continuation b at round r. Branch 0 keeps the parent key,
/// so a split factor of 1 replays the plain trial exactly.
inline std::uint64_t branch_key(std::uint64_t key, int r, int b) {
    if (b == 0) return key;
    return mix64(key ^ mix64(static_cast<std::uint64_t>(r) << 32 | static_cast<std::uint32_t>(b)));
}

/// Split factor for round r: split[r], or 1 past the end.
inline int split_at(const std::vector<int>& split, int r) {
    return static_cast<std::size_t>(r) < split.size() ? split[static_cast<std::size_t>(r)] : 1;
}

/// Multilevel splitting over rounds. `life` has failed every round so far;
/// each of split[r] copies plays the next round r on its own streams, and a
/// copy that fails adds w/split[r] to the tally of round r and splits again.
/// Rounds only depend on the state after the previous round, so every tally
/// is an unbiased estimate of the probability of failing through that round.
template <class L>
void split_continue(const L& life, double w, const std::vector<int>& split, std::vector<double>& y,
                    std::vector<std::uint64_t>& hits) {
    if (life.done()) return;
    const int r = life.next_round();
    const int k = split_at(split, r);
    const double wc = w / k;
    for (int b = 0; b < k; ++b) {
        L child = life;
        if (b) child.rekey(branch_key(life.key(), r, b));
        if (child.step()) continue;
        y[static_cast<std::size_t>(r)] += wc;
        ++hits[static_cast<std::size_t>(r)];
        split_continue(child, wc, split, y, hits);
    }
}

/// Runs roots [0, roots): make_root(t) builds root t's Lifetime, round 0 is
/// played once and round r >= 1 is split split[r] ways. Roots are summed in
/// fixed chunks and the chunks in order, so the result does not depend on the
/// worker count.
template <class MakeRoot>
WeightedFailures run_split_trials(int N, std::uint64_t roots, const std::vector<int>& split, int workers,
                                  MakeRoot&& make_root) {
    if (roots < 1) throw config_error("trials must be >= 1");
    for (int k : split)
        if (k < 1) throw config_error("split factors must be >= 1");
    constexpr std::uint64_t kChunk = 1024;
    const std::size_t S = static_cast<std::size_t>(N + 1);
    const std::uint64_t chunks = (roots + kChunk - 1) / kChunk;
    std::vector<WeightedFailures> part(static_cast<std::size_t>(chunks));
    auto run_chunk = [&](std::uint64_t c) {
        WeightedFailures& wf = part[static_cast<std::size_t>(c)];
        wf.sum.assign(S, 0.0);
        wf.sumsq.assign(S, 0.0);
        wf.events.assign(S, 0);
        const std::uint64_t lo = c * kChunk, hi = std::min(roots, lo + kChunk);
        wf.trials = hi - lo;
        std::vector<double> y(S);
        for (std::uint64_t t = lo; t < hi; ++t) {
            std::fill(y.begin(), y.end(), 0.0);
            auto life = make_root(t);
            if (!life.step()) {
                y[0] = 1.0;
                ++wf.events[0];
                split_continue(life, 1.0, split, y, wf.events);
            }
            for (std::size_t k = 0; k < S; ++k) {
                wf.sum[k] += y[k];
                wf.sumsq[k] += y[k] * y[k];
            }
        }
    };
    workers = std::max(1, workers);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::uint64_t c = static_cast<std::uint64_t>(w); c < chunks; c += static_cast<std::uint64_t>(workers)) run_chunk(c);
        });
    for (auto& t : pool) t.join();
    WeightedFailures total;
    total.sum.assign(S, 0.0);
    total.sumsq.assign(S, 0.0);
    total.events.assign(S, 0);
    for (const auto& wf : part) {
        total.trials += wf.trials;
        for (std::size_t k = 0; k < S; ++k) {
            total.sum[k] += wf.sum[k];
            total.sumsq[k] += wf.sumsq[k];
            total.events[k] += wf.events[k];
        }
    }
    return total;
}

/// Outage after each round, failing lifetimes split split[r] ways at round r.
inline WeightedFailures estimate_outage_split(const ProtocolKind& kind, const SimParams& sp, const std::vector<double>& th,
                                              std::uint64_t trials, std::uint64_t seed, const std::vector<int>& split,
                                              int workers = 1) {
    sp.validate();
    check_thresholds(kind, sp, th);
    const bool df = kind.p == Protocol::SODF_B;
    return run_split_trials(sp.N, trials, split, workers, [&](std::uint64_t t) {
        return Lifetime<OutageMedium>(kind, sp, th, seed, t, OutageMedium(sp.delta(), kind.harq, df));
    });
}

} // namespace coop_arq
