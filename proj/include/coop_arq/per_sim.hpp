#pragma once

// Packet-error-rate simulation: the protocol engine driven by a medium that
// transmits actual TCM codewords, forwards them AF (or re-encodes them for
// DF relays) and decodes at the destination with Viterbi MLSD.
//
// Gains come from the same substreams as the outage engine, so a PER trial
// and an outage trial with the same (seed, trial) see identical fading.

#include "coop_arq/protocol_sim.hpp"
#include "coop_arq/tcm.hpp"

#include <optional>

namespace coop_arq {

class SignalMedium {
public:
    SignalMedium(const TrellisCode& code, const ProtocolKind& kind, int relays, std::uint64_t seed,
                 std::uint64_t trial, bool skip_first = false)
        : code_(code), dec_(code), harq_(kind.harq), skip_first_(skip_first), seed_(seed), trial_(trial),
          store_(static_cast<std::size_t>(relays)) {}

    void rekey(std::uint64_t key) { trial_ = key; }

    void reset() {
        auto bits = substream(seed_, trial_, 0, Link::Bits);
        info_.resize(static_cast<std::size_t>(code_.info_symbols()));
        std::uniform_int_distribution<int> ud(0, code_.inputs() - 1);
        for (auto& u : info_) u = ud(bits);
        x_ = encode_inputs(code_, info_);
        received_.clear();
        for (auto& s : store_) s.reset();
    }

    bool source_to_destination(int r, double w) {
        if (r == 0 && skip_first_) return false;
        auto ph = substream(seed_, trial_, static_cast<std::uint32_t>(r), Link::PhaseSD);
        auto nz = substream(seed_, trial_, static_cast<std::uint32_t>(r), Link::NoiseD);
        return deliver(transmit(x_, w, phase(ph), nz));
    }

    bool relay_to_destination(int r, int j, double b, const std::vector<double>&) {
        auto ph = substream(seed_, trial_, static_cast<std::uint32_t>(r), Link::PhaseRD, static_cast<std::uint32_t>(j));
        auto nz = substream(seed_, trial_, static_cast<std::uint32_t>(r), Link::NoiseD);
        return deliver(send_from(j, b, phase(ph), nz));
    }

    bool source_to_relay(int r, int j, double a, bool decode) {
        auto ph = substream(seed_, trial_, static_cast<std::uint32_t>(r), Link::PhaseSR, static_cast<std::uint32_t>(j));
        auto nz = substream(seed_, trial_, static_cast<std::uint32_t>(r), Link::NoiseR, static_cast<std::uint32_t>(j));
        return keep(j, transmit(x_, a, phase(ph), nz), decode);
    }

    bool relay_to_relay(int r, int j, int i, double c, bool decode) {
        auto ph = substream(seed_, trial_, static_cast<std::uint32_t>(r), Link::PhaseRR, static_cast<std::uint32_t>(i));
        auto nz = substream(seed_, trial_, static_cast<std::uint32_t>(r), Link::NoiseR, static_cast<std::uint32_t>(i));
        return keep(i, send_from(j, c, phase(ph), nz), decode);
    }

    const std::vector<int>& info() const { return info_; }

private:
    struct Stored {
        bool clean = false;   // DF relay holding the re-encoded codeword
        RelayedObservation obs;
    };

    static double phase(SplitMix64& rng) { return 6.283185307179586476925286766559 * rng.uniform(); }

    RelayedObservation send_from(int j, double gain, double ph, SplitMix64& nz) {
        const auto& s = store_[static_cast<std::size_t>(j)];
        if (!s) throw std::logic_error("relay transmits without a stored signal");
        return s->clean ? transmit(x_, gain, ph, nz) : af_relay_forward(s->obs, gain, ph, nz);
    }

    bool keep(int j, RelayedObservation obs, bool decode) {
        if (decode) {
            if (dec_.decode_inputs(obs) != info_) return false;
            store_[static_cast<std::size_t>(j)] = Stored{true, {}};
            return true;
        }
        store_[static_cast<std::size_t>(j)] = Stored{false, std::move(obs)};
        return true;
    }

    bool deliver(RelayedObservation obs) {
        if (!harq_) return dec_.decode_inputs(obs) == info_;
        received_.push_back(std::move(obs));
        return dec_.decode_inputs(mrc_combine(received_)) == info_;
    }

    const TrellisCode& code_;
    ViterbiDecoder dec_;
    bool harq_;
    bool skip_first_;
    std::uint64_t seed_;
    std::uint64_t trial_;
    std::vector<int> info_;
    std::vector<cplx> x_;
    std::vector<RelayedObservation> received_;
    std::vector<std::optional<Stored>> store_;
};

/// One PER-level packet lifetime. Success means the destination decoded the
/// information sequence exactly (genie detection).
inline TrialOutcome run_per_trial(const ProtocolKind& kind, const TrellisCode& code, const SimParams& sp,
                                  const std::vector<double>& th, std::uint64_t seed, std::uint64_t trial,
                                  bool keep_trace = false) {
    check_thresholds(kind, sp, th);
    SignalMedium med(code, kind, sp.links.relays(), seed, trial);
    return run_lifetime(kind, sp, th, seed, trial, med, keep_trace);
}

/// PER after each round n = 0..N. The rate is taken from the code.
inline FailureCounts estimate_per(const ProtocolKind& kind, const TrellisCode& code, SimParams sp,
                                  const std::vector<double>& th, std::uint64_t trials, std::uint64_t seed,
                                  int workers = 1) {
    sp.R = code.R();
    sp.validate();
    check_thresholds(kind, sp, th);
    return run_trials(sp.N, trials, workers, [&](std::uint64_t t) {
        SignalMedium med(code, kind, sp.links.relays(), seed, t);
        return run_lifetime(kind, sp, th, seed, t, med);
    });
}

/// Pr{rounds 1..n all fail | round 0 failed at the destination}, n = 1..N
/// (entry 0 is 1 by construction).
///
/// With ARQ the destination verdict of round 0 depends only on w, its phase
/// and the destination noise of round 0, none of which any later event uses.
/// So PER(n) = PER(0) * this quantity exactly, and every trial lands in the
/// region that matters at high SNR. Not valid for HARQ, which reuses round 0.
inline FailureCounts estimate_per_given_direct_failure(const ProtocolKind& kind, const TrellisCode& code, SimParams sp,
                                                       const std::vector<double>& th, std::uint64_t trials,
                                                       std::uint64_t seed, int workers = 1) {
    if (kind.harq) throw config_error("conditional PER estimator is ARQ-only");
    sp.R = code.R();
    sp.validate();
    check_thresholds(kind, sp, th);
    return run_trials(sp.N, trials, workers, [&](std::uint64_t t) {
        SignalMedium med(code, kind, sp.links.relays(), seed, t, true);
        return run_lifetime(kind, sp, th, seed, t, med);
    });
}

/// PER after each round, failing lifetimes split split[r] ways at round r.
/// Works for HARQ as well: the combiner state is part of the copied medium.
inline WeightedFailures estimate_per_split(const ProtocolKind& kind, const TrellisCode& code, SimParams sp,
                                           const std::vector<double>& th, std::uint64_t trials, std::uint64_t seed,
                                           const std::vector<int>& split, int workers = 1) {
    sp.R = code.R();
    sp.validate();
    check_thresholds(kind, sp, th);
    return run_split_trials(sp.N, trials, split, workers, [&](std::uint64_t t) {
        return Lifetime<SignalMedium>(kind, sp, th, seed, t, SignalMedium(code, kind, sp.links.relays(), seed, t));
    });
}

/// estimate_per_given_direct_failure with splitting from round 1 on.
inline WeightedFailures estimate_per_given_direct_failure_split(const ProtocolKind& kind, const TrellisCode& code,
                                                                SimParams sp, const std::vector<double>& th,
                                                                std::uint64_t trials, std::uint64_t seed,
                                                                const std::vector<int>& split, int workers = 1) {
    if (kind.harq) throw config_error("conditional PER estimator is ARQ-only");
    sp.R = code.R();
    sp.validate();
    check_thresholds(kind, sp, th);
    return run_split_trials(sp.N, trials, split, workers, [&](std::uint64_t t) {
        return Lifetime<SignalMedium>(kind, sp, th, seed, t, SignalMedium(code, kind, sp.links.relays(), seed, t, true));
    });
}

} // namespace coop_arq
