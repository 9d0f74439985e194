// coop-arq: scenario runner, distance spectra and threshold schedules.
//
// Exit codes: 0 ok, 2 bad configuration or arguments, 3 numerical failure.

#include "coop_arq/experiments.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace coop_arq;

namespace {

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw config_error("cannot write " + path);
    return file;
}

int run(const std::string& scenario, const std::string& config, std::uint64_t seed, const std::string& out) {
    std::ifstream in(config);
    if (!in) throw config_error("cannot read config " + config);
    const auto cfg = parse_config(in, scenario);
    // Render into memory first so a failing point leaves no partial file.
    std::ostringstream buf;
    run_scenario(cfg, seed, buf);
    std::ofstream f;
    open_out(out, f) << buf.str();
    return 0;
}

int spectra(const std::string& tag, double cap, const std::string& out) {
    const auto code = make_code(tag);
    const auto sp = distance_spectrum(code, cap);
    std::ofstream f;
    auto& os = open_out(out, f);
    os << "# code = " << tag << "\n# states = " << code.num_states << "\n# d2_cap = " << CsvWriter::num(cap) << "\n";
    os << "d2,omega\n";
    for (const auto& e : sp.entries) os << CsvWriter::num(e.d2) << ',' << CsvWriter::num(e.omega) << "\n";
    return 0;
}

struct ThresholdArgs {
    std::string method = "alg1";
    std::string code = "rate-1";
    std::vector<double> rho_db{10, 20, 30, 40, 50, 60};
    int m = 3;
    int N = 3;
    std::vector<double> v{1, 2, 3};
    std::vector<double> beta{1, 1, 1, 1};
    double eps0 = 1e-5;
    std::string out;
};

int thresholds(const ThresholdArgs& a) {
    if (a.beta.size() != 4) throw config_error("--beta needs 4 values");
    const auto code = make_code(a.code);
    const auto cm = CodeMetrics::from_code(code, a.eps0);
    const std::size_t K = static_cast<std::size_t>(std::min(a.m, a.N));
    if (a.v.size() != K) throw config_error("--v needs min(m,N) values");
    ThresholdSchedule sched;
    if (a.method == "logscale") {
        sched = log_scale_schedule(min_lambda_log_scale(a.m, a.N, a.v, cm), a.v);
    } else {
        OutageParams p{RateSpec{code.R()}, a.m, a.N, {a.beta[0], a.beta[1], a.beta[2], a.beta[3]}, 1.0};
        sched = alg1_schedule(a.v, cm, p);
    }
    std::ofstream f;
    auto& os = open_out(a.out, f);
    os << "# method = " << a.method << "\n# code = " << a.code << "\n# m = " << a.m << "\n# N = " << a.N
       << "\n# eps0 = " << CsvWriter::num(a.eps0) << "\n";
    write_schedule_csv(os, sched, a.rho_db);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cooperative ARQ relaying lab"};
    app.require_subcommand(1);

    std::string scenario, config, out;
    std::uint64_t seed = 1;
    auto* run_cmd = app.add_subcommand("run", "run a scenario and write CSV");
    run_cmd->add_option("scenario", scenario, "scenario name")->required()->check(CLI::IsMember(known_scenarios()));
    run_cmd->add_option("--config", config, "INI config file")->required();
    run_cmd->add_option("--seed", seed, "base seed");
    run_cmd->add_option("--out", out, "output CSV path (default stdout)");

    std::string tag;
    double cap = 20.0;
    std::string spec_out;
    auto* spec_cmd = app.add_subcommand("spectra", "distance spectrum of a code as CSV (d2, omega)");
    spec_cmd->add_option("rate-tag", tag, "rate-1..rate-5 or rate-1-k7")->required();
    spec_cmd->add_option("--cap", cap, "largest d2 to enumerate");
    spec_cmd->add_option("--out", spec_out, "output CSV path (default stdout)");

    ThresholdArgs ta;
    auto* th_cmd = app.add_subcommand("thresholds", "threshold schedule as CSV (rho_db, delta_1..delta_K)");
    th_cmd->add_option("--method", ta.method)->check(CLI::IsMember({"alg1", "logscale"}))->required();
    th_cmd->add_option("--code", ta.code, "rate tag");
    th_cmd->add_option("--rho-db", ta.rho_db, "SNR grid in dB")->delimiter(',');
    th_cmd->add_option("--m", ta.m);
    th_cmd->add_option("--N", ta.N);
    th_cmd->add_option("--v", ta.v, "threshold ratios")->delimiter(',');
    th_cmd->add_option("--beta", ta.beta, "link variances beta0..beta3")->delimiter(',');
    th_cmd->add_option("--eps0", ta.eps0);
    th_cmd->add_option("--out", ta.out, "output CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*run_cmd) return run(scenario, config, seed, out);
        if (*spec_cmd) return spectra(tag, cap, spec_out);
        if (*th_cmd) return thresholds(ta);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
