#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ptshadow/measure.hpp"
#include "ptshadow/shadows.hpp"
#include "ptshadow/states.hpp"

namespace ptshadow {

// Scenario descriptions for the command-line front end: a flat key-value
// text format with [section] blocks, '#' comments, and repeatable
// `partition` keys. Unknown keys are rejected with the offending line
// number, and all physical units are explicit in the key names (times_ms,
// j0_per_s, ...). Times are stored internally in seconds.

enum class ScenarioKind { Ghz, NeelQuench, TfimGround, Werner, FromFile };

std::string scenario_kind_name(ScenarioKind kind);

struct SweepSection {
    Statistic statistic = Statistic::P2;
    std::vector<int> m_grid;
    int trials = 50;
};

struct WernerSection {
    int d = 2;
    double alpha_min = 0.0;
    double alpha_max = 1.0;
    int alpha_points = 101;
};

struct ScenarioConfig {
    ScenarioKind state = ScenarioKind::Ghz;
    int n_qubits = 0;            // chain scenarios
    std::string input_state;     // amplitude file for from_file
    HamiltonianSpec hamiltonian; // defaults match the long-range XY scenario
    std::vector<double> times_s; // quench time grid (seconds)
    bool times_given = false;    // distinguishes "absent" from "explicitly empty"
    std::vector<PartitionSpec> partitions;
    int m = 100;
    int p = 1;
    Ensemble ensemble = Ensemble::Clifford;
    std::uint64_t seed = 1;
    double depolarize_strength = 0.0;
    std::string output_dir = ".";
    std::vector<Statistic> statistics; // estimate targets; default {p2, p3, s3}
    SweepSection sweep;
    WernerSection werner;
};

// `A=1-3;B=7-9`: two clauses separated by ';', in this order, each a
// comma-separated list of 1-based sites or ascending `lo-hi` ranges
// (disconnected halves are comma lists, e.g. `B=5,7-9`). The halves must be
// nonempty and disjoint. Errors: InvalidArgumentError quoting the text.
PartitionSpec parse_partition_spec(const std::string& text);

// Canonical short form of an ascending site list: maximal consecutive runs
// as `lo-hi`, singletons bare, runs joined by '_' (e.g. {1,2,3,5} ->
// "1-3_5"). Used in generated file names.
std::string format_sites(const std::vector<int>& sites);

// Parses a config document / file. Unknown keys, malformed values, or
// out-of-range fields throw InvalidArgumentError naming the key and line;
// an unreadable file throws InvalidArgumentError naming the path. Field
// validity that depends on the command (e.g. which scenarios may be
// sampled) is checked by the command, not here.
ScenarioConfig parse_scenario_text(const std::string& text);
ScenarioConfig load_scenario_config(const std::string& path);

// 64-bit FNV-1a content digest used in output manifests.
std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes); // 16 lowercase hex digits

} // namespace ptshadow
