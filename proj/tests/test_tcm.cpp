#include "coop_arq/fading.hpp"
#include "coop_arq/outage.hpp"
#include "coop_arq/per_sim.hpp"
#include "coop_arq/tcm.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>

#include <cmath>
#include <limits>

using namespace coop_arq;

namespace {

std::vector<int> random_inputs(const TrellisCode& c, SplitMix64& rng) {
    std::uniform_int_distribution<int> ud(0, c.inputs() - 1);
    std::vector<int> u(static_cast<std::size_t>(c.info_symbols()));
    for (auto& v : u) v = ud(rng);
    return u;
}

RelayedObservation noiseless(const std::vector<cplx>& x, cplx h) {
    RelayedObservation o;
    o.cascade = h;
    o.noise_var = 1.0;
    for (const auto& s : x) o.samples.push_back(h * s);
    return o;
}

} // namespace

TEST(Codes, UnitEnergyConstellations) {
    for (const char* t : {"rate-1", "rate-2", "rate-3", "rate-4", "rate-5", "rate-1-k7"}) {
        const auto c = make_code(t);
        double e = 0.0;
        for (const auto& p : c.constellation) e += std::norm(p);
        EXPECT_NEAR(e / static_cast<double>(c.constellation.size()), 1.0, 1e-12) << t;
        EXPECT_EQ(c.R(), c.k);
    }
    EXPECT_THROW(make_code("rate-9"), config_error);
}

TEST(Encode, AllZeroFollowsZeroStatePath) {
    const auto c = make_code("rate-2");
    const std::vector<std::uint8_t> bits(static_cast<std::size_t>(c.info_bits()), 0);
    const auto x = encode(c, bits);
    ASSERT_EQ(static_cast<int>(x.size()), c.L);
    for (const auto& s : x) EXPECT_EQ(s, c.constellation[static_cast<std::size_t>(c.output(0, 0))]);
}

TEST(Encode, LengthMismatch) {
    const auto c = make_code("rate-1");
    const std::vector<std::uint8_t> bits(static_cast<std::size_t>(c.info_bits() + 1), 0);
    EXPECT_THROW(encode(c, bits), domain_error);
}

TEST(Encode, PacketEnergy) {
    const auto c = make_code("rate-1");
    SplitMix64 rng(1);
    double acc = 0.0;
    for (int p = 0; p < 1000; ++p) {
        const auto x = encode_inputs(c, random_inputs(c, rng));
        double e = 0.0;
        for (const auto& s : x) e += std::norm(s);
        acc += e / static_cast<double>(x.size());
    }
    EXPECT_NEAR(acc / 1000.0, 1.0, 0.1);
}

TEST(Encode, NoiselessRoundTrip) {
    for (const char* t : {"rate-1", "rate-2", "rate-3", "rate-4", "rate-5"}) {
        const auto c = make_code(t);
        ViterbiDecoder dec(c);
        SplitMix64 rng(2);
        for (int p = 0; p < 1000; ++p) {
            std::vector<std::uint8_t> bits(static_cast<std::size_t>(c.info_bits()));
            for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1);
            const auto x = encode(c, bits);
            ASSERT_EQ(dec.decode(noiseless(x, std::polar(0.7, 1.1))), bits) << t;
        }
    }
}

TEST(Spectrum, MinimumDistances) {
    EXPECT_NEAR(distance_spectrum(make_code("rate-1"), 11).dm2(), 10.0, 1e-9);
    EXPECT_NEAR(distance_spectrum(make_code("rate-2"), 5).dm2(), 4.0, 1e-9);
    EXPECT_NEAR(distance_spectrum(make_code("rate-3"), 2.5).dm2(), 2.0, 1e-3);
    EXPECT_NEAR(distance_spectrum(make_code("rate-4"), 1.5).dm2(), 1.0, 1e-3);
    EXPECT_NEAR(distance_spectrum(make_code("rate-5"), 0.6).dm2(), 0.4762, 1e-3);
}

TEST(Spectrum, Rate1Multiplicity) {
    const auto sp = distance_spectrum(make_code("rate-1"), 20);
    EXPECT_NEAR(sp.omega_dm(), 1.0, 1e-9);
    for (std::size_t i = 1; i < sp.entries.size(); ++i) EXPECT_GT(sp.entries[i].d2, sp.entries[i - 1].d2);
    EXPECT_LE(sp.dM2(), 20.0);
    EXPECT_THROW(distance_spectrum(make_code("rate-1"), 0.0), domain_error);
}

TEST(Viterbi, EqualsExhaustiveSearch) {
    for (const char* t : {"rate-1", "rate-2"}) {
        const auto c = make_code(t, 8);
        const int K = c.info_symbols();
        const int U = c.inputs();
        const int total = static_cast<int>(std::pow(U, K));
        std::vector<std::vector<int>> words(static_cast<std::size_t>(total));
        std::vector<std::vector<cplx>> cws(static_cast<std::size_t>(total));
        for (int w = 0; w < total; ++w) {
            std::vector<int> u(static_cast<std::size_t>(K));
            for (int i = 0, r = w; i < K; ++i, r /= U) u[static_cast<std::size_t>(i)] = r % U;
            cws[static_cast<std::size_t>(w)] = encode_inputs(c, u);
            words[static_cast<std::size_t>(w)] = std::move(u);
        }
        ViterbiDecoder dec(c);
        SplitMix64 rng(3);
        for (int inst = 0; inst < 1000; ++inst) {
            const auto& x = cws[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(total))];
            auto obs = transmit(x, 3.0, 6.28 * rng.uniform(), rng);
            double best = std::numeric_limits<double>::infinity();
            int arg = -1;
            for (int w = 0; w < total; ++w) {
                double d = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i)
                    d += std::norm(obs.samples[i] - obs.cascade * cws[static_cast<std::size_t>(w)][i]);
                if (d < best) {
                    best = d;
                    arg = w;
                }
            }
            ASSERT_EQ(dec.decode_inputs(obs), words[static_cast<std::size_t>(arg)]) << t << " instance " << inst;
        }
    }
}

TEST(Viterbi, GlobalPhaseInvariant) {
    const auto c = make_code("rate-2");
    ViterbiDecoder dec(c);
    SplitMix64 rng(4);
    for (int p = 0; p < 200; ++p) {
        const auto x = encode_inputs(c, random_inputs(c, rng));
        auto obs = transmit(x, 4.0, 0.3, rng);
        const auto ref = dec.decode_inputs(obs);
        const cplx r = std::polar(1.0, 2.0);
        for (auto& s : obs.samples) s *= r;
        obs.cascade *= r;
        ASSERT_EQ(dec.decode_inputs(obs), ref);
    }
}

TEST(Forward, TwoHopSnr) {
    SplitMix64 rng(5);
    for (int i = 0; i < 100; ++i) {
        const double a = 0.1 + 100.0 * rng.uniform();
        const double b = 0.1 + 100.0 * rng.uniform();
        const std::vector<cplx> x(4, cplx(1, 0));
        const auto o = af_relay_forward(transmit(x, a, 0.2, rng), b, 1.3, rng);
        EXPECT_NEAR(o.snr(), af_two_hop_snr(a, b), 1e-9 * af_two_hop_snr(a, b));
        EXPECT_GE(o.noise_var, 1.0);
    }
}

TEST(Forward, MultiHopSnr) {
    SplitMix64 rng(6);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> chain(1 + i % 4);
        for (auto& g : chain) g = 0.1 + 50.0 * rng.uniform();
        const double b = 0.1 + 50.0 * rng.uniform();
        const std::vector<cplx> x(4, cplx(1, 0));
        auto o = transmit(x, chain[0], 0.0, rng);
        for (std::size_t k = 1; k < chain.size(); ++k) o = af_relay_forward(o, chain[k], 0.5, rng);
        o = af_relay_forward(o, b, 0.9, rng);
        const double ref = af_multi_hop_snr(chain, b);
        EXPECT_NEAR(o.snr(), ref, 1e-9 * ref);
    }
}

TEST(Forward, NoiselessLimit) {
    // With a huge gain the relay's scaling tends to the phase alone and the
    // accumulated noise variance stays where it was.
    SplitMix64 rng(7);
    RelayedObservation in;
    in.cascade = cplx(2.0, 0.0);
    in.noise_var = 1e-12;
    in.samples.assign(3, cplx(2.0, 0.0));
    const double g = 1e12;
    const auto o = af_relay_forward(in, g, 0.4, rng);
    const cplx expect = std::polar(std::sqrt(g / 4.0), 0.4) * in.cascade;
    EXPECT_NEAR(std::abs(o.cascade - expect) / std::abs(expect), 0.0, 1e-9);
    EXPECT_NEAR(o.noise_var, g / 4.0 * in.noise_var + 1.0, 1e-9);
}

TEST(Forward, NoiseBookkeeping) {
    const auto c = make_code("rate-1");
    SplitMix64 rng(8);
    double nv = 0.0;
    double acc = 0.0;
    std::size_t cnt = 0;
    for (int f = 0; f < 800; ++f) {
        const auto x = encode_inputs(c, random_inputs(c, rng));
        auto o = transmit(x, 5.0, 0.0, rng);
        o = af_relay_forward(o, 8.0, 1.0, rng);
        o = af_relay_forward(o, 3.0, 2.0, rng);
        nv = o.noise_var;
        for (std::size_t i = 0; i < x.size(); ++i) acc += std::norm(o.samples[i] - o.cascade * x[i]);
        cnt += x.size();
    }
    const double emp = acc / static_cast<double>(cnt);
    EXPECT_NEAR(emp, nv, 3.0 * nv / std::sqrt(static_cast<double>(cnt)));
}

TEST(Mrc, SnrAdditivity) {
    SplitMix64 rng(9);
    const std::vector<cplx> x(8, cplx(1, 0));
    for (int i = 0; i < 100; ++i) {
        std::vector<RelayedObservation> obs;
        double sum = 0.0;
        for (int k = 0; k < 1 + i % 4; ++k) {
            auto o = transmit(x, 0.1 + 20.0 * rng.uniform(), 6.28 * rng.uniform(), rng);
            if (k % 2) o = af_relay_forward(o, 0.1 + 20.0 * rng.uniform(), 1.0, rng);
            sum += o.snr();
            obs.push_back(std::move(o));
        }
        EXPECT_NEAR(mrc_combine(obs).snr(), sum, 1e-9 * sum);
    }
    const auto one = transmit(x, 3.0, 0.2, rng);
    const std::vector<RelayedObservation> two{one, one};
    EXPECT_NEAR(mrc_combine(two).snr(), 2.0 * one.snr(), 1e-9);
    EXPECT_THROW(mrc_combine(std::span<const RelayedObservation>{}), domain_error);
}

TEST(Mrc, SingleObservationSameDecision) {
    const auto c = make_code("rate-1");
    ViterbiDecoder dec(c);
    SplitMix64 rng(10);
    for (int p = 0; p < 300; ++p) {
        const auto x = encode_inputs(c, random_inputs(c, rng));
        const std::vector<RelayedObservation> one{transmit(x, 1.0, 6.28 * rng.uniform(), rng)};
        ASSERT_EQ(dec.decode_inputs(mrc_combine(one)), dec.decode_inputs(one[0]));
    }
}

TEST(Mrc, CombinedNotWorseThanBestBranch) {
    const auto c = make_code("rate-1");
    ViterbiDecoder dec(c);
    SplitMix64 rng(11);
    const int T = 30000;
    int e1 = 0, e2 = 0, ec = 0;
    for (int t = 0; t < T; ++t) {
        const auto u = random_inputs(c, rng);
        const auto x = encode_inputs(c, u);
        std::vector<RelayedObservation> obs{transmit(x, 0.8, 6.28 * rng.uniform(), rng),
                                            transmit(x, 0.8, 6.28 * rng.uniform(), rng)};
        e1 += dec.decode_inputs(obs[0]) != u;
        e2 += dec.decode_inputs(obs[1]) != u;
        ec += dec.decode_inputs(mrc_combine(obs)) != u;
    }
    EXPECT_LE(ec, std::min(e1, e2));
}

TEST(Per, DirectLinkNearUnionBound) {
    // Fading-averaged union bound E_w[min(1, K sum_d omega_d Q(sqrt(w d^2 / 2)))].
    const auto c = make_code("rate-1");
    const auto sp = distance_spectrum(c, 30);
    const double rho = db_to_linear(12);
    const double K = c.info_symbols();
    auto ub = [&](double w) {
        double s = 0.0;
        for (const auto& e : sp.entries) s += K * e.omega * qfunc(std::sqrt(w * e.d2 / 2.0));
        return std::min(1.0, s);
    };
    boost::math::quadrature::exp_sinh<double> es;
    const double bound = es.integrate([&](double w) { return ub(w) * std::exp(-w / rho) / rho; }, 0.0,
                                      std::numeric_limits<double>::infinity());

    SimParams s;
    s.rho = rho;
    s.N = 0;
    const auto fc = estimate_per({Protocol::NoRelay}, c, s, {}, 40000, 12);
    const double ratio = fc.prob(0) / bound;
    EXPECT_GE(ratio, 0.2);
    EXPECT_LE(ratio, 1.0);
}
