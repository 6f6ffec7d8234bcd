#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "p4sim/errors.hpp"
#include "p4sim/harness.hpp"

using namespace p4sim;

namespace {

std::map<std::string, std::string> load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return parse_kv(is);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open output file: " + path);
    return os;
}

int cmd_run(const std::string& config, const std::string& out) {
    ExperimentConfig cfg = config_from_kv(load_config(config));
    RunResult r = run_experiment(cfg);
    auto os = open_out(out);
    csv_header(os);
    csv_row(os, cfg, r.metrics);
    if (!r.invariants_ok) {
        std::cerr << "invariant audit failed: " << r.audit_note << "\n";
        return 1;
    }
    std::cerr << "committed " << r.metrics.committed << " txns, throughput "
              << r.metrics.throughput_per_mtu() << " per Mtu\n";
    return 0;
}

int cmd_sweep(const std::string& config, const std::string& out) {
    auto kv = load_config(config);
    auto os = open_out(out);
    bool all_ok = true;
    size_t rows = sweep(kv, os, &all_ok);
    std::cerr << rows << " runs written to " << out << "\n";
    if (!all_ok) {
        std::cerr << "invariant audit failed in at least one run\n";
        return 1;
    }
    return 0;
}

int cmd_crash(const std::string& config) {
    ExperimentConfig cfg = config_from_kv(load_config(config));
    CrashOutcome out = crash_test(cfg);
    std::cout << out.report;
    if (!out.ok) {
        std::cerr << "recovery check failed\n";
        return 1;
    }
    return 0;
}

int cmd_layout(const std::string& trace_path, const std::string& out, uint64_t budget,
               uint64_t seed, bool random_placement) {
    std::ifstream is(trace_path);
    if (!is) throw ConfigError("cannot open trace file: " + trace_path);
    auto trace = read_trace(is);
    SwitchConfig sw;
    LayoutPlan plan = plan_from_trace(trace, sw, budget, seed, random_placement);
    auto os = open_out(out);
    write_layout_csv(os, plan);
    std::cerr << plan.placement.size() << " keys placed\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"in-network transaction processing simulator"};
    app.require_subcommand(1);

    std::string config, out = "out.csv", trace;
    uint64_t budget = 0, seed = 1;
    bool random_placement = false;

    auto* run = app.add_subcommand("run", "run one experiment");
    run->add_option("--config", config, "key=value config file")->required();
    run->add_option("--out", out, "CSV output path");

    auto* sw = app.add_subcommand("sweep", "run a config grid (comma-separated values)");
    sw->add_option("--config", config, "key=value config file")->required();
    sw->add_option("--out", out, "CSV output path");

    auto* cr = app.add_subcommand("crash-test", "run a crash plan and verify recovery");
    cr->add_option("--config", config, "key=value config file")->required();

    auto* lo = app.add_subcommand("layout", "compile a layout plan from a trace file");
    lo->add_option("--trace", trace, "trace file (txnid op key [dep_key])")->required();
    lo->add_option("--out", out, "layout CSV output path");
    lo->add_option("--budget", budget, "hot-set budget (0 = switch capacity)");
    lo->add_option("--seed", seed, "placement seed");
    lo->add_flag("--random", random_placement, "random placement baseline");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config, out);
        if (sw->parsed()) return cmd_sweep(config, out);
        if (cr->parsed()) return cmd_crash(config);
        if (lo->parsed()) return cmd_layout(trace, out, budget, seed, random_placement);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
