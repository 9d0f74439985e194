#include "coop_arq/outage.hpp"
#include "coop_arq/per_sim.hpp"
#include "coop_arq/protocol_sim.hpp"

#include <gtest/gtest.h>

using namespace coop_arq;

namespace {

SimParams sim(double rho_db, int m = 3, int N = 3, double R = 1.0) {
    SimParams sp;
    sp.R = R;
    sp.m = m;
    sp.N = N;
    sp.rho = db_to_linear(rho_db);
    sp.links = LinkModel::uniform(LinkVariances{1, 1, 1, 1}, m);
    return sp;
}

OutageParams params(double rho_db, int m = 3) {
    return OutageParams{RateSpec{1.0}, m, 3, LinkVariances{1, 1, 1, 1}, db_to_linear(rho_db)};
}

bool same_trace(const TrialOutcome& x, const TrialOutcome& y) {
    if (x.success_round != y.success_round || x.rounds.size() != y.rounds.size()) return false;
    for (std::size_t r = 0; r < x.rounds.size(); ++r)
        if (x.rounds[r].transmitter != y.rounds[r].transmitter || x.rounds[r].snr != y.rounds[r].snr ||
            x.rounds[r].joined != y.rounds[r].joined)
            return false;
    return true;
}

} // namespace

TEST(Reductions, SoafASingleRelayIsSaf) {
    const auto sp = sim(8, 1);
    for (std::uint64_t t = 0; t < 20000; ++t)
        ASSERT_TRUE(same_trace(run_outage_trial({Protocol::SAF}, sp, {1.5}, 5, t, true),
                               run_outage_trial({Protocol::SOAF_A}, sp, {1.5}, 5, t, true)));
}

TEST(Reductions, SafZeroThresholdIsAf) {
    const auto sp = sim(8);
    for (std::uint64_t t = 0; t < 20000; ++t)
        ASSERT_TRUE(same_trace(run_outage_trial({Protocol::SAF}, sp, {0.0}, 6, t, true),
                               run_outage_trial({Protocol::AF}, sp, {}, 6, t, true)));
}

TEST(Reductions, ZeroRateAlwaysFirstRound) {
    auto sp = sim(0);
    sp.R = 0.0;
    for (Protocol p : {Protocol::AF, Protocol::OAF, Protocol::SOAF_B}) {
        const auto fc = estimate_outage({p}, sp, {0.0, 0.0, 0.0}, 1000, 1);
        EXPECT_EQ(fc.failures[0], 0u);
    }
}

TEST(Harq, NeverLaterThanArq) {
    const auto sp = sim(6);
    const std::vector<double> th{3.9, 3.9, 3.9};
    for (Protocol p : {Protocol::SAF, Protocol::OAF, Protocol::SOAF_A, Protocol::SOAF_B}) {
        for (std::uint64_t t = 0; t < 20000; ++t) {
            const auto arq = run_outage_trial({p}, sp, th, 8, t);
            const auto harq = run_harq_outage_trial({p}, sp, th, 8, t);
            if (arq.success) {
                ASSERT_TRUE(harq.success);
                ASSERT_LE(harq.success_round, arq.success_round);
            }
            if (arq.success_round == 0 || harq.success_round == 0) {
                ASSERT_EQ(arq.success_round, harq.success_round);
            }
        }
    }
}

TEST(Harq, OutageBelowArqWithSearchedThresholds) {
    const auto sp = sim(15);
    const std::vector<double> th{3.0, 6.0, 9.0};
    const auto arq = estimate_outage({Protocol::SOAF_B}, sp, th, 1'000'000, 3);
    const auto harq = estimate_outage({Protocol::SOAF_B, true}, sp, th, 1'000'000, 3);
    for (int n = 0; n <= 3; ++n) EXPECT_LE(harq.failures[static_cast<std::size_t>(n)], arq.failures[static_cast<std::size_t>(n)]);
}

TEST(Estimate, NonIncreasingInRounds) {
    const auto sp = sim(5);
    const auto fc = estimate_outage({Protocol::SOAF_B}, sp, {2, 4, 6}, 50000, 11);
    for (int n = 1; n <= 3; ++n) EXPECT_LE(fc.prob(n), fc.prob(n - 1));
    for (int n = 0; n <= 3; ++n) {
        EXPECT_GE(fc.prob(n), 0.0);
        EXPECT_LE(fc.prob(n), 1.0);
    }
}

TEST(Estimate, IndependentOfWorkerCount) {
    const auto sp = sim(10);
    const auto one = estimate_outage({Protocol::SOAF_B}, sp, {2, 4, 6}, 30001, 12, 1);
    const auto four = estimate_outage({Protocol::SOAF_B}, sp, {2, 4, 6}, 30001, 12, 4);
    EXPECT_EQ(one.failures, four.failures);
    const auto code = make_code("rate-1");
    const auto p1 = estimate_per({Protocol::SOAF_B}, code, sp, {2, 4, 6}, 2001, 13, 1);
    const auto p3 = estimate_per({Protocol::SOAF_B}, code, sp, {2, 4, 6}, 2001, 13, 3);
    EXPECT_EQ(p1.failures, p3.failures);
}

TEST(Estimate, MatchesAnalytic) {
    const std::uint64_t T = 1'000'000;
    for (double db : {10.0, 15.0, 20.0}) {
        const auto p = params(db);
        const auto sp = sim(db);
        const auto af = estimate_outage({Protocol::AF}, sp, {}, T, 31);
        const auto oaf = estimate_outage({Protocol::OAF}, sp, {}, T, 32);
        const auto saf = estimate_outage({Protocol::SAF}, sp, {1.5}, T, 33);
        const auto sa = estimate_outage({Protocol::SOAF_A}, sp, {1.5}, T, 34);
        // 3 binomial sigma at the closed-form value; the sample CI collapses
        // to zero when no failure is observed.
        auto tol = [&](double cf) { return 3.0 * std::sqrt(cf * (1 - cf) / static_cast<double>(T)); };
        for (int n = 0; n <= 3; ++n) {
            EXPECT_NEAR(af.prob(n), p_out_af(n, p), tol(p_out_af(n, p))) << db << " af " << n;
            EXPECT_NEAR(oaf.prob(n), p_out_oaf(n, p), tol(p_out_oaf(n, p))) << db << " oaf " << n;
            EXPECT_NEAR(saf.prob(n), p_out_saf(n, 1.5, p), tol(p_out_saf(n, 1.5, p))) << db << " saf " << n;
            EXPECT_NEAR(sa.prob(n), p_out_soaf_a(n, 1.5, p), tol(p_out_soaf_a(n, 1.5, p))) << db << " soaf-a " << n;
        }
    }
}

TEST(Estimate, SoafBAboveBound) {
    const std::vector<double> th{3.9, 3.9, 3.9};
    for (double db : {5.0, 10.0}) {
        const auto fc = estimate_outage({Protocol::SOAF_B}, sim(db), th, 1'000'000, 41);
        for (int n = 0; n <= 3; ++n)
            EXPECT_GE(fc.prob(n) + fc.ci(n), p_out_soaf_b_tilde(n, th, params(db))) << db << " " << n;
    }
}

TEST(Estimate, SodfNotWorseThanSoaf) {
    const std::vector<double> th{1.0, 1.0, 1.0};
    for (double db : {4.0, 8.0}) {
        const auto af = estimate_outage({Protocol::SOAF_B}, sim(db), th, 200000, 51);
        const auto df = estimate_outage({Protocol::SODF_B}, sim(db), th, 200000, 51);
        for (int n = 0; n <= 3; ++n) EXPECT_LE(df.prob(n), af.prob(n) + af.ci(n) + df.ci(n));
    }
}

TEST(Requirement1, QualifiedRelayOutageBound) {
    // Force a 3-hop qualified chain that meets Requirement 1 and check the
    // destination outage against Pr{b < delta'} with lambda_min = 1.01.
    const double d = 1.0;
    const double lam[] = {3.9, 3.9, 3.9};
    ASSERT_TRUE(requirement1_holds(lam, d, 1.01));
    const double dp = requirement1_delta_prime(d, 1.01);
    const double rho = db_to_linear(10);
    SplitMix64 rng(77);
    std::exponential_distribution<double> e(1.0 / rho);
    const int n = 1'000'000;
    int fails = 0;
    for (int t = 0; t < n; ++t) {
        std::vector<double> chain(3);
        for (std::size_t i = 0; i < 3; ++i) {
            do chain[i] = e(rng);
            while (!(chain[i] > lam[i] * d));
        }
        fails += af_multi_hop_snr(chain, e(rng)) < d;
    }
    const double bound = -std::expm1(-dp / rho);
    const double mc = static_cast<double>(fails) / n;
    EXPECT_LE(mc, bound + 3.0 * std::sqrt(bound / n));
}

TEST(QualifiedSet, GrowsMonotonically) {
    const auto sp = sim(3);
    for (std::uint64_t t = 0; t < 5000; ++t) {
        const auto o = run_outage_trial({Protocol::SOAF_B}, sp, {0.5, 1.0, 1.5}, 9, t, true);
        std::vector<int> seen;
        for (const auto& ev : o.rounds)
            for (int j : ev.joined) {
                ASSERT_EQ(std::count(seen.begin(), seen.end(), j), 0);
                seen.push_back(j);
            }
    }
}

TEST(Errors, MalformedThresholds) {
    const auto sp = sim(10);
    EXPECT_THROW(run_outage_trial({Protocol::SAF}, sp, {}, 1, 0), config_error);
    EXPECT_THROW(run_outage_trial({Protocol::SOAF_B}, sp, {1.0, 2.0}, 1, 0), config_error);
    EXPECT_THROW(run_outage_trial({Protocol::SOAF_A}, sp, {-1.0}, 1, 0), config_error);
    EXPECT_THROW(estimate_outage({Protocol::AF}, sp, {}, 0, 1), config_error);
    const auto code = make_code("rate-1");
    EXPECT_THROW(estimate_per_given_direct_failure({Protocol::SAF, true}, code, sp, {1.5}, 10, 1), config_error);
}

TEST(Per, ConditionalEstimatorFactorizes) {
    // PER(n) = PER(0) * Pr{rounds 1..n fail | round 0 failed}; compare both
    // routes at an SNR where the direct estimate has enough events.
    const auto code = make_code("rate-1");
    const auto sp = sim(6);
    const std::uint64_t T = 20000;
    const auto full = estimate_per({Protocol::SAF}, code, sp, {1.5}, T, 61);
    const auto cond = estimate_per_given_direct_failure({Protocol::SAF}, code, sp, {1.5}, T, 62);
    EXPECT_EQ(cond.failures[0], T);
    for (int n = 1; n <= 3; ++n) {
        const double a = full.prob(n);
        const double b = full.prob(0) * cond.prob(n);
        EXPECT_NEAR(a, b, full.ci(n) + full.prob(0) * cond.ci(n) + cond.prob(n) * full.ci(0)) << n;
    }
}

TEST(Per, SodfNotWorseThanSoaf) {
    const auto code = make_code("rate-1");
    const std::vector<double> th{2.0, 4.0, 6.0};
    const auto sp = sim(4);
    const auto af = estimate_per({Protocol::SOAF_B}, code, sp, th, 20000, 71);
    const auto df = estimate_per({Protocol::SODF_B}, code, sp, th, 20000, 71);
    for (int n = 0; n <= 3; ++n) EXPECT_LE(df.prob(n), af.prob(n) + af.ci(n) + df.ci(n)) << n;
}

TEST(Split, BranchKeys) {
    EXPECT_EQ(branch_key(42, 2, 0), 42u);
    EXPECT_NE(branch_key(42, 2, 1), 42u);
    EXPECT_NE(branch_key(42, 2, 1), branch_key(42, 2, 2));
    EXPECT_NE(branch_key(42, 2, 1), branch_key(42, 3, 1));
    EXPECT_EQ(split_at({1, 4, 5}, 2), 5);
    EXPECT_EQ(split_at({1, 4}, 3), 1);
}

TEST(Split, FactorOneIsPlain) {
    const auto sp = sim(6);
    const std::vector<double> th{2, 4, 6};
    const auto plain = estimate_outage({Protocol::SOAF_B}, sp, th, 20000, 81);
    const auto one = estimate_outage_split({Protocol::SOAF_B}, sp, th, 20000, 81, {1, 1, 1, 1});
    for (int n = 0; n <= 3; ++n) EXPECT_DOUBLE_EQ(one.prob(n), plain.prob(n)) << n;
    const auto code = make_code("rate-1");
    const auto pc = estimate_per_given_direct_failure({Protocol::SAF}, code, sp, {1.5}, 3000, 82);
    const auto sc = estimate_per_given_direct_failure_split({Protocol::SAF}, code, sp, {1.5}, 3000, 82, {});
    for (int n = 0; n <= 3; ++n) EXPECT_DOUBLE_EQ(sc.prob(n), pc.prob(n)) << n;
}

TEST(Split, OutageMatchesAnalytic) {
    const double db = 20.0;
    const auto w = estimate_outage_split({Protocol::SAF}, sim(db), {1.5}, 200000, 83, {1, 100, 100, 100});
    for (int n = 0; n <= 3; ++n) {
        const double cf = p_out_saf(n, 1.5, params(db));
        EXPECT_NEAR(w.prob(n), cf, w.ci(n) + 1e-3 * cf) << n;
        EXPECT_GE(w.events[static_cast<std::size_t>(n)], 100u) << n;
    }
}

TEST(Split, IndependentOfWorkerCount) {
    const auto sp = sim(10);
    const std::vector<double> th{2, 4, 6};
    const std::vector<int> split{1, 3, 3, 3};
    const auto one = estimate_outage_split({Protocol::SOAF_B}, sp, th, 5001, 84, split, 1);
    const auto three = estimate_outage_split({Protocol::SOAF_B}, sp, th, 5001, 84, split, 3);
    EXPECT_EQ(one.sum, three.sum);
    EXPECT_EQ(one.events, three.events);
    const auto code = make_code("rate-1");
    const auto p1 = estimate_per_split({Protocol::SOAF_B, true}, code, sp, th, 1501, 85, split, 1);
    const auto p2 = estimate_per_split({Protocol::SOAF_B, true}, code, sp, th, 1501, 85, split, 2);
    EXPECT_EQ(p1.sum, p2.sum);
}

TEST(Split, HarqBelowArqPerContinuation) {
    const auto sp = sim(8);
    const std::vector<double> th{3.9, 3.9, 3.9};
    const std::vector<int> split{1, 10, 10, 10};
    const auto code = make_code("rate-1");
    const auto a = estimate_per_split({Protocol::SOAF_B, false}, code, sp, th, 3000, 86, split);
    const auto h = estimate_per_split({Protocol::SOAF_B, true}, code, sp, th, 3000, 86, split);
    for (int n = 0; n <= 3; ++n) EXPECT_LE(h.sum[static_cast<std::size_t>(n)], a.sum[static_cast<std::size_t>(n)]) << n;
}

TEST(Split, Errors) {
    const auto sp = sim(10);
    EXPECT_THROW(estimate_outage_split({Protocol::AF}, sp, {}, 10, 1, {1, 0}), config_error);
    EXPECT_THROW(estimate_outage_split({Protocol::AF}, sp, {}, 0, 1, {1, 2}), config_error);
    const auto code = make_code("rate-1");
    EXPECT_THROW(estimate_per_given_direct_failure_split({Protocol::SAF, true}, code, sp, {1.5}, 10, 1, {1, 2}),
                 config_error);
}
