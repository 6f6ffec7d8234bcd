#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "p4sim/engine.hpp"
#include "p4sim/layout.hpp"

namespace p4sim {

struct ExperimentConfig {
    EngineConfig engine;
    std::string layout_kind = "optimal"; // optimal | random
    uint64_t trace_txns = 2000;          // offline trace size for hot-set detection
    uint64_t hot_budget = 0;             // 0 = one slot per designated hot key
};

// config files are "key = value" lines; '#' starts a comment
std::map<std::string, std::string> parse_kv(std::istream& is);
ExperimentConfig config_from_kv(const std::map<std::string, std::string>& kv);

/// Offline phase: generate a representative trace, detect the hot set,
/// co-offload cold keys that warm transactions need after hot ones, then
/// compile the layout (or place randomly). Trims the hot set when it
/// exceeds switch capacity.
LayoutPlan build_layout_for(const ExperimentConfig& cfg);

/// Same pipeline for an externally supplied trace (CLI `layout` command).
LayoutPlan plan_from_trace(const std::vector<Txn>& trace, const SwitchConfig& sw,
                           size_t budget, uint64_t seed, bool random_placement = false);

struct RunResult {
    Metrics metrics;
    bool invariants_ok = true;
    std::string audit_note;
};

RunResult run_experiment(const ExperimentConfig& cfg);

void csv_header(std::ostream& os);
void csv_row(std::ostream& os, const ExperimentConfig& cfg, const Metrics& m);

/// Expands comma-separated values in the key-value config into a grid and
/// runs every combination, one CSV row each. Returns the number of rows;
/// sets *all_ok to false if any run fails its invariant audit.
size_t sweep(const std::map<std::string, std::string>& kv, std::ostream& csv, bool* all_ok);

struct CrashOutcome {
    bool ok = false;
    std::string report;
};

/// Runs the config's crash plan, recovers from the logs, and compares
/// against the captured pre-crash oracle state.
CrashOutcome crash_test(const ExperimentConfig& cfg);

} // namespace p4sim
