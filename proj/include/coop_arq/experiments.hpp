#pragma once

// Scenario runner behind the coop-arq CLI: INI configs, the throughput
// metric, slope fitting and CSV output.

#include "coop_arq/errors.hpp"
#include "coop_arq/fading.hpp"
#include "coop_arq/outage.hpp"
#include "coop_arq/per_sim.hpp"
#include "coop_arq/protocol_sim.hpp"
#include "coop_arq/rng.hpp"
#include "coop_arq/tcm.hpp"
#include "coop_arq/threshold.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace coop_arq {

// ---------------------------------------------------------------- metrics

/// Long-run throughput of one packet under ARQ rounds 0..N:
/// R (1 - P_N) / E[rounds], with E[rounds] = 1 + sum_{l<N} P_l.
/// pers holds P_0..P_N (failure after round l), nonincreasing.
inline double throughput_metric(std::span<const double> pers, double R, int N) {
    if (N < 0 || pers.size() != static_cast<std::size_t>(N + 1))
        throw domain_error("throughput_metric: need N+1 PER values");
    double prev = 1.0;
    for (double p : pers) {
        if (!(p >= 0.0 && p <= 1.0)) throw domain_error("throughput_metric: PER outside [0,1]");
        if (p > prev + 1e-12) throw domain_error("throughput_metric: PER sequence must be nonincreasing");
        prev = p;
    }
    double rounds = 1.0;
    for (int l = 0; l < N; ++l) rounds += pers[static_cast<std::size_t>(l)];
    return R * (1.0 - pers[static_cast<std::size_t>(N)]) / rounds;
}

struct SlopePoint {
    double rho_db = 0.0;
    double value = 0.0;
};

/// Negative least-squares slope of log10(value) against log10(rho) over the
/// top decade (last 10 dB) of the grid.
inline double diversity_slope(std::span<const SlopePoint> pts) {
    if (pts.empty()) throw domain_error("diversity_slope: no points");
    double top = pts[0].rho_db;
    for (const auto& p : pts) top = std::max(top, p.rho_db);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& p : pts) {
        if (p.rho_db < top - 10.0 - 1e-9) continue;
        if (!(p.value > 0.0) || !std::isfinite(p.value)) throw domain_error("diversity_slope: values must be > 0");
        const double x = p.rho_db / 10.0;
        const double y = std::log10(p.value);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 3) throw domain_error("diversity_slope: need >= 3 points in the top decade");
    const double den = n * sxx - sx * sx;
    if (!(std::abs(den) > 0.0)) throw domain_error("diversity_slope: degenerate grid");
    return -(n * sxy - sx * sy) / den;
}

// ---------------------------------------------------------------- CSV

struct CurvePoint {
    std::string scenario;
    std::string protocol;
    std::string code;
    double rho_db = 0.0;
    int n = 0;
    double value = 0.0;
    std::optional<double> ci;
    std::string flags;
};

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    void comment(const std::string& key, const std::string& value) { os_ << "# " << key << " = " << value << "\n"; }

    void header() { os_ << "scenario,protocol,code,rho_db,n,value,ci,flags\n"; }

    void row(const CurvePoint& p) {
        os_ << p.scenario << ',' << p.protocol << ',' << p.code << ',' << num(p.rho_db) << ',' << p.n << ','
            << num(p.value) << ',' << (p.ci ? num(*p.ci) : std::string()) << ',' << p.flags << "\n";
    }

    static std::string num(double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.10g", x);
        return buf;
    }

private:
    std::ostream& os_;
};

// ---------------------------------------------------------------- config

inline std::vector<double> parse_doubles(const std::string& s, const std::string& key) {
    std::vector<std::string> parts;
    boost::split(parts, s, boost::is_any_of(", \t"), boost::token_compress_on);
    std::vector<double> out;
    for (auto& p : parts) {
        if (p.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(p, &used));
            if (used != p.size()) throw std::invalid_argument(p);
        } catch (const std::exception&) {
            throw config_error("bad number '" + p + "' in " + key);
        }
    }
    return out;
}

inline std::vector<std::string> parse_words(const std::string& s) {
    std::vector<std::string> parts;
    boost::split(parts, s, boost::is_any_of(", \t"), boost::token_compress_on);
    std::vector<std::string> out;
    for (auto& p : parts)
        if (!p.empty()) out.push_back(p);
    return out;
}

enum class ThresholdSource { Explicit, LogScale, Alg1 };

struct ExperimentConfig {
    std::string scenario;
    std::vector<double> rho_db;
    std::uint64_t trials = 100000;
    int workers = 1;

    int m = 3;
    int N = 3;
    double R = 1.0;
    LinkVariances betas;
    bool use_geometry = false;
    Geometry geometry;

    ThresholdSource source = ThresholdSource::Explicit;
    std::vector<double> factors{1.5};   // explicit thresholds in units of delta
    std::vector<double> v{1, 2, 3};
    double eps0 = 1e-5;

    std::vector<std::string> codes{"rate-1"};
    bool conditional = false;

    double pt = 1e-3;
    int placements = 8;
    std::vector<std::string> protocols{"no-relay", "oaf", "soaf-a", "soaf-b", "sodf-b"};
    std::vector<double> rates{1, 2, 3, 4, 5};

    std::vector<std::pair<std::string, std::string>> echo;   // every key as read, for the CSV header

    LinkVariances variances() const { return use_geometry ? variances_from_geometry(geometry) : betas; }

    void validate() const;
};

inline const std::vector<std::string>& known_scenarios() {
    static const std::vector<std::string> s{"saf-outage", "af-outage", "oaf-outage", "soafa-outage",
                                            "soafb-outage", "saf-per", "soafb-per", "harq-per",
                                            "throughput", "threshold-schedule"};
    return s;
}

inline bool is_mc_scenario(const std::string& s) { return s != "threshold-schedule"; }

inline void ExperimentConfig::validate() const {
    if (std::find(known_scenarios().begin(), known_scenarios().end(), scenario) == known_scenarios().end())
        throw config_error("unknown scenario '" + scenario + "'");
    if (rho_db.empty()) throw config_error("rho_db grid is empty");
    if (is_mc_scenario(scenario) && trials < 1000) throw config_error("trials must be >= 1000 for MC scenarios");
    if (m < 1 || N < 1) throw config_error("need m >= 1 and N >= 1");
    if (workers < 1) throw config_error("workers must be >= 1");
    if (!(R > 0.0)) throw config_error("R must be > 0");
    betas.validate();
    if (use_geometry) geometry.validate();
    for (double x : v)
        if (!(x > 0.0)) throw config_error("threshold ratios v must be > 0");
    if (v.size() < static_cast<std::size_t>(std::min(m, N))) throw config_error("need min(m,N) threshold ratios v");
    if (!(pt > 0.0 && pt <= 1.0)) throw config_error("pt must be in (0,1]");
    if (placements < 1) throw config_error("placements must be >= 1");
}

/// Reads an INI config. A nonempty `scenario` overrides experiment.scenario.
inline ExperimentConfig parse_config(std::istream& in, const std::string& scenario = {}) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    ExperimentConfig c;
    for (const auto& [sec, sub] : tree)
        for (const auto& [key, val] : sub) c.echo.emplace_back(sec + "." + key, val.data());

    auto get = [&](const std::string& path) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(path)) return boost::trim_copy(*v);
        return std::nullopt;
    };
    auto num = [&](const std::string& path, auto& dst) {
        if (auto s = get(path)) {
            auto xs = parse_doubles(*s, path);
            if (xs.size() != 1) throw config_error(path + ": expected one number");
            dst = static_cast<std::remove_reference_t<decltype(dst)>>(xs[0]);
        }
    };

    if (!scenario.empty()) c.scenario = scenario;
    else if (auto s = get("experiment.scenario")) c.scenario = *s;
    else throw config_error("missing experiment.scenario");
    if (auto s = get("experiment.rho_db")) c.rho_db = parse_doubles(*s, "experiment.rho_db");
    num("experiment.trials", c.trials);
    num("experiment.workers", c.workers);

    num("system.m", c.m);
    num("system.N", c.N);
    num("system.R", c.R);
    if (auto s = get("system.beta")) {
        auto b = parse_doubles(*s, "system.beta");
        if (b.size() != 4) throw config_error("system.beta needs 4 values");
        c.betas = {b[0], b[1], b[2], b[3]};
    }
    if (auto s = get("system.links")) {
        if (*s == "uniform") c.use_geometry = false;
        else if (*s == "geometry") c.use_geometry = true;
        else throw config_error("system.links must be uniform or geometry");
    }
    num("geometry.s0", c.geometry.s0);
    num("geometry.s1", c.geometry.s1);
    num("geometry.s2", c.geometry.s2);
    num("geometry.eta", c.geometry.eta);

    if (auto s = get("thresholds.source")) {
        if (*s == "explicit") c.source = ThresholdSource::Explicit;
        else if (*s == "logscale") c.source = ThresholdSource::LogScale;
        else if (*s == "alg1") c.source = ThresholdSource::Alg1;
        else throw config_error("thresholds.source must be explicit, logscale or alg1");
    }
    if (auto s = get("thresholds.factors")) c.factors = parse_doubles(*s, "thresholds.factors");
    if (auto s = get("thresholds.v")) c.v = parse_doubles(*s, "thresholds.v");
    num("thresholds.eps0", c.eps0);

    if (auto s = get("code.rates")) c.codes = parse_words(*s);
    if (auto s = get("per.conditional")) {
        if (*s == "true" || *s == "1") c.conditional = true;
        else if (*s == "false" || *s == "0") c.conditional = false;
        else throw config_error("per.conditional must be true or false");
    }

    num("throughput.pt", c.pt);
    num("throughput.placements", c.placements);
    if (auto s = get("throughput.protocols")) c.protocols = parse_words(*s);
    if (auto s = get("throughput.rates")) c.rates = parse_doubles(*s, "throughput.rates");

    c.validate();
    return c;
}

// ---------------------------------------------------------------- thresholds

/// Per-hop thresholds for SOAF-B at one rho, from the configured source.
inline std::vector<double> soaf_b_thresholds(const ExperimentConfig& c, double rho, const CodeMetrics& cm,
                                             double R, const LinkVariances& var) {
    const std::size_t K = static_cast<std::size_t>(std::min(c.m, c.N));
    std::vector<double> th(K);
    switch (c.source) {
    case ThresholdSource::Explicit: {
        const double d = delta_of_rate(R);
        for (std::size_t k = 0; k < K; ++k) th[k] = d * (c.factors.size() == 1 ? c.factors[0] : c.factors.at(k));
        break;
    }
    case ThresholdSource::LogScale: {
        const double lam = min_lambda_log_scale(c.m, c.N, c.v, cm);
        for (std::size_t k = 0; k < K; ++k) th[k] = lam * c.v[k] * std::log(rho);
        break;
    }
    case ThresholdSource::Alg1: {
        OutageParams p{RateSpec{R}, c.m, c.N, var, rho};
        const double de = find_delta_e_star(c.v, cm, p).value;
        for (std::size_t k = 0; k < K; ++k) th[k] = de * c.v[k];
        break;
    }
    }
    return th;
}

// ---------------------------------------------------------------- throughput

struct ThroughputPoint {
    double throughput = 0.0;
    std::vector<int> chosen_rate;   // per placement, 0 when nothing met the target
};

/// PER counts over `trials`, or nothing as soon as the final-round failures
/// exceed pt * trials (the rate is then rejected whatever the rest gives).
inline std::optional<FailureCounts> per_within_target(const ProtocolKind& kind, const TrellisCode& code, SimParams sp,
                                                      const std::vector<double>& th, std::uint64_t trials,
                                                      std::uint64_t seed, double pt) {
    sp.R = code.R();
    sp.validate();
    check_thresholds(kind, sp, th);
    const auto limit = static_cast<std::uint64_t>(std::floor(pt * static_cast<double>(trials)));
    FailureCounts fc;
    fc.trials = trials;
    fc.failures.assign(static_cast<std::size_t>(sp.N + 1), 0);
    for (std::uint64_t t = 0; t < trials; ++t) {
        SignalMedium med(code, kind, sp.links.relays(), seed, t);
        const TrialOutcome o = run_lifetime(kind, sp, th, seed, t, med);
        const int upto = o.success ? o.success_round : sp.N + 1;
        for (int n = 0; n < upto && n <= sp.N; ++n) ++fc.failures[static_cast<std::size_t>(n)];
        if (fc.failures[static_cast<std::size_t>(sp.N)] > limit) return std::nullopt;
    }
    return fc;
}

/// Rate-adapted throughput averaged over relay placements. For each
/// placement the largest rate whose final PER meets pt is kept. Placement p
/// and every PER run use fixed substreams of `seed`, so protocols compared
/// under one seed see the same placements and fading.
inline ThroughputPoint rate_adapted_throughput(const ProtocolKind& kind, const ExperimentConfig& c, double rho,
                                               std::uint64_t seed) {
    ThroughputPoint out;
    const LinkVariances var = c.variances();
    std::vector<double> rates = c.rates;
    std::sort(rates.rbegin(), rates.rend());
    for (int pl = 0; pl < c.placements; ++pl) {
        auto prng = substream(seed, static_cast<std::uint64_t>(pl), 0, Link::Placement);
        SimParams sp;
        sp.m = c.m;
        sp.N = c.N;
        sp.rho = rho;
        sp.links = c.use_geometry ? LinkModel::from_positions(c.geometry, place_relays(c.geometry, c.m, prng))
                                  : LinkModel::uniform(var, c.m);
        double best = 0.0;
        int chosen = 0;
        for (double R : rates) {
            const auto code = make_code("rate-" + std::to_string(static_cast<int>(R)));
            std::vector<double> th;
            if (thresholds_needed(kind.p, c.m, c.N) > 0) {
                const auto cm = CodeMetrics::from_code(code, c.eps0);
                th = soaf_b_thresholds(c, rho, cm, code.R(), var);
                th.resize(thresholds_needed(kind.p, c.m, c.N));
            }
            const auto fc = per_within_target(kind, code, sp, th, c.trials, seed + static_cast<std::uint64_t>(pl), c.pt);
            if (!fc) continue;
            std::vector<double> pers(static_cast<std::size_t>(c.N + 1));
            for (int n = 0; n <= c.N; ++n) pers[static_cast<std::size_t>(n)] = fc->prob(n);
            best = throughput_metric(pers, code.R(), c.N);
            chosen = static_cast<int>(R);
            break;
        }
        out.chosen_rate.push_back(chosen);
        out.throughput += best / c.placements;
    }
    return out;
}

// ---------------------------------------------------------------- scenarios

namespace detail {

inline std::string mc_flags(const FailureCounts& fc, int n, const std::string& extra = {}) {
    std::string f = "mc";
    if (!extra.empty()) f += "|" + extra;
    if (fc.low_confidence(n)) f += "|low-confidence";
    return f;
}

inline std::string factor_label(const std::string& proto, double f) {
    return proto + "[" + CsvWriter::num(f) + "d]";
}

inline SimParams sim_params(const ExperimentConfig& c, double rho, double R) {
    SimParams sp;
    sp.R = R;
    sp.m = c.m;
    sp.N = c.N;
    sp.rho = rho;
    sp.links = LinkModel::uniform(c.variances(), c.m);
    return sp;
}

} // namespace detail

/// Runs one scenario and writes the CSV (header comments, column row, data).
inline void run_scenario(const ExperimentConfig& c, std::uint64_t seed, std::ostream& os) {
    CsvWriter w(os);
    w.comment("scenario", c.scenario);
    w.comment("seed", std::to_string(seed));
    w.comment("m", std::to_string(c.m));
    w.comment("N", std::to_string(c.N));
    w.comment("trials", std::to_string(c.trials));
    for (const auto& [k, v] : c.echo) w.comment(k, v);
    w.header();

    const auto& S = c.scenario;
    const LinkVariances var = c.variances();
    auto outage_params = [&](double rho) { return OutageParams{RateSpec{c.R}, c.m, c.N, var, rho}; };
    const double delta = delta_of_rate(c.R);

    for (double db : c.rho_db) {
        const double rho = db_to_linear(db);
        const OutageParams op = outage_params(rho);
        auto emit = [&](const std::string& proto, const std::string& code, int n, double v, std::optional<double> ci,
                        const std::string& flags) { w.row({S, proto, code, db, n, v, ci, flags}); };
        auto emit_mc = [&](const std::string& proto, const std::string& code, const FailureCounts& fc,
                           const std::string& extra = {}) {
            for (int n = 0; n <= c.N; ++n) emit(proto, code, n, fc.prob(n), fc.ci(n), detail::mc_flags(fc, n, extra));
        };

        if (S == "saf-outage" || S == "af-outage" || S == "oaf-outage" || S == "soafa-outage") {
            const Protocol p = S == "saf-outage" ? Protocol::SAF
                             : S == "af-outage"  ? Protocol::AF
                             : S == "oaf-outage" ? Protocol::OAF
                                                 : Protocol::SOAF_A;
            const auto sp = detail::sim_params(c, rho, c.R);
            const std::vector<double> fs = thresholds_needed(p, c.m, c.N) ? c.factors : std::vector<double>{0.0};
            for (double f : fs) {
                const std::string label = thresholds_needed(p, c.m, c.N) ? detail::factor_label(to_string(p), f) : to_string(p);
                const double D = f * delta;
                for (int n = 0; n <= c.N; ++n) {
                    double exact = 0.0;
                    switch (p) {
                    case Protocol::SAF: exact = p_out_saf(n, D, op); break;
                    case Protocol::AF: exact = p_out_af(n, op); break;
                    case Protocol::OAF: exact = p_out_oaf(n, op); break;
                    default: exact = p_out_soaf_a(n, D, op); break;
                    }
                    emit(label, "-", n, exact, std::nullopt, "analytic");
                    if (p == Protocol::SAF) emit(label, "-", n, p_out_saf(n, D, op, true), std::nullopt, "analytic|lower-bound");
                    if (p == Protocol::SOAF_A) emit(label, "-", n, p_out_soaf_a_tilde(n, D, op), std::nullopt, "analytic|lower-bound");
                }
                std::vector<double> th;
                if (thresholds_needed(p, c.m, c.N)) th.push_back(D);
                emit_mc(label, "-", estimate_outage({p}, sp, th, c.trials, seed, c.workers));
            }
        } else if (S == "soafb-outage") {
            const auto sp = detail::sim_params(c, rho, c.R);
            const auto cm = CodeMetrics::from_code(make_code(c.codes.at(0)), c.eps0);
            const auto th = soaf_b_thresholds(c, rho, cm, c.R, var);
            for (int n = 0; n <= c.N; ++n)
                emit("soaf-b", "-", n, p_out_soaf_b_tilde(n, th, op), std::nullopt, "analytic|lower-bound");
            emit_mc("soaf-b", "-", estimate_outage({Protocol::SOAF_B}, sp, th, c.trials, seed, c.workers));
        } else if (S == "saf-per") {
            for (const auto& tag : c.codes) {
                const auto code = make_code(tag);
                const auto sp = detail::sim_params(c, rho, code.R());
                for (double f : c.factors) {
                    const std::vector<double> th{f * delta_of_rate(code.R())};
                    const auto label = detail::factor_label("saf", f);
                    if (c.conditional)
                        emit_mc(label, tag, estimate_per_given_direct_failure({Protocol::SAF}, code, sp, th, c.trials, seed, c.workers),
                                "given-direct-failure");
                    else
                        emit_mc(label, tag, estimate_per({Protocol::SAF}, code, sp, th, c.trials, seed, c.workers));
                }
            }
        } else if (S == "soafb-per" || S == "harq-per") {
            for (const auto& tag : c.codes) {
                const auto code = make_code(tag);
                const auto sp = detail::sim_params(c, rho, code.R());
                const auto cm = CodeMetrics::from_code(code, c.eps0);
                const auto th = soaf_b_thresholds(c, rho, cm, code.R(), var);
                if (S == "harq-per") {
                    emit_mc("soaf-b", tag, estimate_per({Protocol::SOAF_B, false}, code, sp, th, c.trials, seed, c.workers));
                    emit_mc("harq-soaf-b", tag, estimate_per({Protocol::SOAF_B, true}, code, sp, th, c.trials, seed, c.workers));
                } else if (c.conditional) {
                    emit_mc("soaf-b", tag, estimate_per_given_direct_failure({Protocol::SOAF_B}, code, sp, th, c.trials, seed, c.workers),
                            "given-direct-failure");
                } else {
                    emit_mc("soaf-b", tag, estimate_per({Protocol::SOAF_B}, code, sp, th, c.trials, seed, c.workers));
                }
            }
        } else if (S == "throughput") {
            for (const auto& name : c.protocols) {
                ProtocolKind kind;
                std::string base = name;
                if (boost::starts_with(name, "harq-")) {
                    kind.harq = true;
                    base = name.substr(5);
                }
                kind.p = protocol_from_string(base);
                const auto tp = rate_adapted_throughput(kind, c, rho, seed);
                std::string rates;
                for (int r : tp.chosen_rate) rates += (rates.empty() ? "R=" : "/") + std::to_string(r);
                emit(name, "adaptive", c.N, tp.throughput, std::nullopt, "mc|" + rates);
            }
        } else if (S == "threshold-schedule") {
            for (const auto& tag : c.codes) {
                const auto code = make_code(tag);
                const auto cm = CodeMetrics::from_code(code, c.eps0);
                const auto th = soaf_b_thresholds(c, rho, cm, code.R(), var);
                for (std::size_t k = 0; k < th.size(); ++k)
                    emit("soaf-b", tag, static_cast<int>(k + 1), th[k], std::nullopt, "analytic");
            }
        }
    }
}

/// Threshold schedule as CSV: rho_db, delta_1..delta_K (linear SNR).
inline void write_schedule_csv(std::ostream& os, const ThresholdSchedule& sched, std::span<const double> rho_db) {
    bool first = true;
    for (double db : rho_db) {
        const auto d = sched(db_to_linear(db));
        if (first) {
            os << "rho_db";
            for (std::size_t k = 0; k < d.size(); ++k) os << ",delta_" << (k + 1);
            os << "\n";
            first = false;
        }
        os << CsvWriter::num(db);
        for (double x : d) os << ',' << CsvWriter::num(x);
        os << "\n";
    }
}

} // namespace coop_arq
