#include "ptshadow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ptshadow/bounds.hpp"
#include "ptshadow/conditions.hpp"
#include "ptshadow/config.hpp"
#include "ptshadow/errors.hpp"
#include "ptshadow/matrix_io.hpp"
#include "ptshadow/measure.hpp"
#include "ptshadow/rng.hpp"
#include "ptshadow/shadows.hpp"
#include "ptshadow/states.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace ptshadow::cli {
namespace {

// Seed splitting as in the sweep harness: one mix per level, so nearby
// master seeds and nearby indices land on unrelated substreams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key, std::uint64_t sub)
{
    return splitmix64_mix(splitmix64_mix(splitmix64_mix(master) + key) + sub);
}

std::string format_g(double v) // short human form (file names, time axis)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string format_full(double v) // round-trips a double exactly
{
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_plot(double v) // plot tables: fixed 12 significant digits
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::vector<int> sorted_union(const PartitionSpec& part)
{
    std::vector<int> u = part.all_sites();
    std::sort(u.begin(), u.end());
    return u;
}

std::string partition_text(const PartitionSpec& part)
{
    std::vector<int> a = part.a_sites, b = part.b_sites;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return "A=" + format_sites(a) + ";B=" + format_sites(b);
}

// Maps site labels to their 1-based position within `uni` (sorted), so a
// reduced matrix whose axes follow `uni` can be addressed by the original
// partition.
PartitionSpec relabel_to(const PartitionSpec& part, const std::vector<int>& uni)
{
    auto pos = [&uni](int s) {
        return static_cast<int>(std::lower_bound(uni.begin(), uni.end(), s) - uni.begin()) + 1;
    };
    PartitionSpec out;
    out.a_sites.reserve(part.a_sites.size());
    out.b_sites.reserve(part.b_sites.size());
    for (int s : part.a_sites)
        out.a_sites.push_back(pos(s));
    for (int s : part.b_sites)
        out.b_sites.push_back(pos(s));
    return out;
}

// Collects emitted files with content digests; finish() writes the
// command's manifest. All content is built in memory first so the digest
// always matches the bytes on disk.
class OutputWriter {
public:
    explicit OutputWriter(const std::string& dir) : dir_(dir)
    {
        if (!dir_.empty())
            fs::create_directories(dir_);
    }

    ordered_json& add(const std::string& name, const std::string& content)
    {
        const fs::path path = dir_ / name;
        write_raw(path, content);
        ordered_json entry;
        entry["file"] = name;
        entry["fnv1a"] = fnv1a64_hex(content);
        entry["bytes"] = content.size();
        outputs_.push_back(std::move(entry));
        std::cout << "wrote " << path.string() << "\n";
        return outputs_.back();
    }

    void finish(const std::string& command, std::uint64_t seed)
    {
        ordered_json manifest;
        manifest["command"] = command;
        manifest["seed"] = seed;
        manifest["outputs"] = outputs_;
        const fs::path path = dir_ / (command + "_manifest.json");
        write_raw(path, manifest.dump(2) + "\n");
        std::cout << "wrote " << path.string() << "\n";
    }

    const fs::path& dir() const { return dir_; }

private:
    static void write_raw(const fs::path& path, const std::string& content)
    {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw DataError("cannot write output file '" + path.string() + "'");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.close();
        if (!os)
            throw DataError("failed writing output file '" + path.string() + "'");
    }

    fs::path dir_;
    ordered_json outputs_ = ordered_json::array();
};

struct TimedState {
    std::optional<double> t_ms; // set for quench scenarios only
    PureState psi;
};

// Materializes the scenario's pure state(s). May adjust cfg (from_file
// learns its qubit count from the amplitude file).
std::vector<TimedState> build_states(ScenarioConfig& cfg, const std::string& command)
{
    switch (cfg.state) {
    case ScenarioKind::Ghz:
        return {{std::nullopt, make_ghz(cfg.n_qubits)}};
    case ScenarioKind::TfimGround: {
        HamiltonianSpec h = cfg.hamiltonian;
        h.model = HamiltonianModel::TFIM;
        h.n_qubits = cfg.n_qubits;
        return {{std::nullopt, ground_state(build_hamiltonian(h)).state}};
    }
    case ScenarioKind::FromFile: {
        PureState psi = load_pure_state(cfg.input_state);
        if (cfg.n_qubits > 0 && cfg.n_qubits != psi.n_qubits)
            throw InvalidArgumentError("n_qubits=" + std::to_string(cfg.n_qubits) +
                                       " does not match input_state '" + cfg.input_state +
                                       "' with " + std::to_string(psi.n_qubits) + " qubits");
        cfg.n_qubits = psi.n_qubits;
        for (const PartitionSpec& part : cfg.partitions)
            for (int s : part.all_sites())
                if (s > psi.n_qubits)
                    throw InvalidArgumentError(
                        "partition site " + std::to_string(s) + " exceeds the " +
                        std::to_string(psi.n_qubits) + "-qubit input state");
        return {{std::nullopt, std::move(psi)}};
    }
    case ScenarioKind::NeelQuench: {
        HamiltonianSpec h = cfg.hamiltonian;
        h.n_qubits = cfg.n_qubits;
        const SpectralPropagator prop(build_hamiltonian(h));
        const PureState start = make_neel(cfg.n_qubits);
        std::vector<TimedState> out;
        out.reserve(cfg.times_s.size());
        for (double t : cfg.times_s)
            out.push_back({t * 1000.0, prop.evolve(start, t)});
        return out;
    }
    case ScenarioKind::Werner:
        throw InvalidArgumentError(command +
                                   " needs a pure-state scenario; use the werner subcommand "
                                   "for the werner family");
    }
    throw InvalidArgumentError("unknown scenario kind");
}

std::string dataset_filename(const std::optional<double>& t_ms, const std::vector<int>& uni)
{
    std::string name = "dataset_";
    if (t_ms)
        name += "t" + format_g(*t_ms) + "ms_";
    return name + format_sites(uni) + ".txt";
}

int cmd_simulate(ScenarioConfig cfg)
{
    if (cfg.partitions.empty())
        throw InvalidArgumentError("simulate requires at least one partition");
    if (cfg.ensemble == Ensemble::External)
        throw InvalidArgumentError("ensemble=external denotes imported data and cannot be "
                                   "generated; choose clifford or haar");
    if (cfg.depolarize_strength > 0.0)
        throw InvalidArgumentError("depolarize_strength affects only the exact comparison "
                                   "command; sampled runs are pure-state");
    const std::vector<TimedState> states = build_states(cfg, "simulate");

    // one dataset per (time, union of a partition's halves)
    std::vector<std::vector<int>> unions;
    for (const PartitionSpec& part : cfg.partitions) {
        std::vector<int> u = sorted_union(part);
        if (std::find(unions.begin(), unions.end(), u) == unions.end())
            unions.push_back(std::move(u));
    }

    OutputWriter out(cfg.output_dir);
    for (std::size_t ti = 0; ti < states.size(); ++ti) {
        for (std::size_t ui = 0; ui < unions.size(); ++ui) {
            const std::uint64_t ds_seed = derive_seed(cfg.seed, ti, ui);
            const MeasurementDataset ds = generate_dataset(states[ti].psi, unions[ui], cfg.m,
                                                           cfg.p, cfg.ensemble, ds_seed);
            std::ostringstream buf;
            write_dataset(buf, ds);
            ordered_json& entry =
                out.add(dataset_filename(states[ti].t_ms, unions[ui]), buf.str());
            entry["seed"] = ds_seed;
            entry["sites"] = format_sites(unions[ui]);
            if (states[ti].t_ms)
                entry["time_ms"] = *states[ti].t_ms;
        }
    }
    out.finish("simulate", cfg.seed);
    return 0;
}

struct LoadedDataset {
    MeasurementDataset ds;
    std::string stem; // dataset filename without directory / extension / prefix
    std::string filename;
    std::optional<double> t_ms;
    std::vector<int> sites_sorted;
};

std::vector<LoadedDataset> gather_datasets(const fs::path& dir,
                                           const std::vector<std::string>& explicit_paths)
{
    std::vector<std::pair<fs::path, std::optional<double>>> refs;
    if (!explicit_paths.empty()) {
        for (const std::string& p : explicit_paths)
            refs.emplace_back(fs::path(p), std::nullopt);
    } else {
        const fs::path manifest_path = dir / "simulate_manifest.json";
        std::ifstream is(manifest_path, std::ios::binary);
        if (!is)
            throw DataError("no datasets given: pass --dataset or run simulate first "
                            "(missing '" +
                            manifest_path.string() + "')");
        ordered_json manifest;
        try {
            is >> manifest;
        } catch (const std::exception& e) {
            throw DataError("cannot parse '" + manifest_path.string() + "': " + e.what());
        }
        if (!manifest.contains("outputs") || !manifest["outputs"].is_array())
            throw DataError("manifest '" + manifest_path.string() +
                            "' has no outputs array");
        for (const auto& entry : manifest["outputs"]) {
            if (!entry.contains("file"))
                throw DataError("manifest '" + manifest_path.string() +
                                "' has an outputs entry without a file name");
            std::optional<double> t_ms;
            if (entry.contains("time_ms"))
                t_ms = entry["time_ms"].get<double>();
            refs.emplace_back(dir / entry["file"].get<std::string>(), t_ms);
        }
        if (refs.empty())
            throw DataError("manifest '" + manifest_path.string() +
                            "' lists no dataset files");
    }

    std::vector<LoadedDataset> loaded;
    loaded.reserve(refs.size());
    for (const auto& [path, t_ms] : refs) {
        LoadedDataset item{load_dataset(path.string()), {}, {}, t_ms, {}};
        item.filename = path.filename().string();
        item.stem = path.stem().string();
        if (item.stem.rfind("dataset_", 0) == 0)
            item.stem = item.stem.substr(8);
        item.sites_sorted = item.ds.site_list;
        std::sort(item.sites_sorted.begin(), item.sites_sorted.end());
        loaded.push_back(std::move(item));
    }
    return loaded;
}

Estimate run_estimator(Statistic s, const std::vector<Snapshot>& snaps,
                       const PartitionSpec& part, const EstimatorOptions& opts)
{
    switch (s) {
    case Statistic::P2: return estimate_p2(snaps, part, opts);
    case Statistic::P3: return estimate_p3(snaps, part, opts);
    case Statistic::S3: return estimate_s3(snaps, part, opts);
    case Statistic::P4: return estimate_pn(snaps, part, 4, opts);
    }
    throw InvalidArgumentError("unknown statistic");
}

ordered_json partition_json(const PartitionSpec& part)
{
    ordered_json p;
    p["A"] = part.a_sites;
    p["B"] = part.b_sites;
    return p;
}

std::string derived_line(const char* stat, const PartitionSpec& part, double value,
                         double std_error, int m, int p, std::uint64_t seed)
{
    ordered_json j;
    j["statistic"] = stat;
    j["partition"] = partition_json(part);
    j["value"] = value;
    j["std_error"] = std_error;
    j["m"] = m;
    j["p"] = p;
    j["method"] = "propagated";
    j["seed"] = seed;
    return j.dump();
}

std::string undefined_line(const char* stat, const PartitionSpec& part,
                           const std::string& reason, int m, int p, std::uint64_t seed)
{
    ordered_json j;
    j["statistic"] = stat;
    j["partition"] = partition_json(part);
    j["undefined"] = true;
    j["reason"] = reason;
    j["m"] = m;
    j["p"] = p;
    j["seed"] = seed;
    return j.dump();
}

std::string plot_row(const std::string& dataset, const std::optional<double>& t_ms,
                     const PartitionSpec& part, double value, double std_error)
{
    std::vector<int> a = part.a_sites, b = part.b_sites;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return dataset + "," + (t_ms ? format_g(*t_ms) : std::string("nan")) + "," +
           format_sites(a) + "," + format_sites(b) + "," + format_plot(value) + "," +
           format_plot(std_error) + "\n";
}

int cmd_estimate(ScenarioConfig cfg, bool emit_plot,
                 const std::vector<std::string>& dataset_args)
{
    if (cfg.partitions.empty())
        throw InvalidArgumentError("estimate requires at least one partition");
    std::vector<Statistic> stats;
    for (Statistic s : cfg.statistics)
        if (std::find(stats.begin(), stats.end(), s) == stats.end())
            stats.push_back(s);

    OutputWriter out(cfg.output_dir);
    const std::vector<LoadedDataset> datasets = gather_datasets(out.dir(), dataset_args);

    // Every requested partition must be covered by at least one dataset
    // before anything is written.
    std::set<int> sites_seen;
    for (const LoadedDataset& d : datasets)
        sites_seen.insert(d.sites_sorted.begin(), d.sites_sorted.end());
    for (const PartitionSpec& part : cfg.partitions) {
        const std::vector<int> uni = sorted_union(part);
        const bool covered = std::any_of(
            datasets.begin(), datasets.end(), [&uni](const LoadedDataset& d) {
                return std::includes(d.sites_sorted.begin(), d.sites_sorted.end(),
                                     uni.begin(), uni.end());
            });
        if (covered)
            continue;
        std::vector<int> missing;
        for (int s : uni)
            if (!sites_seen.count(s))
                missing.push_back(s);
        if (!missing.empty())
            throw InvalidArgumentError("partition " + partition_text(part) + ": sites " +
                                       format_sites(missing) +
                                       " are missing from every dataset");
        throw InvalidArgumentError("partition " + partition_text(part) +
                                   ": no single dataset covers sites " + format_sites(uni));
    }

    std::string fig1c = "dataset,time_ms,sites_a,sites_b,value,std_error\n";
    std::string fig4a = fig1c;
    const EstimatorOptions opts; // jackknife errors, automatic path and threads

    for (const LoadedDataset& d : datasets) {
        std::vector<std::string> lines;
        for (const PartitionSpec& part : cfg.partitions) {
            const std::vector<int> uni = sorted_union(part);
            if (!std::includes(d.sites_sorted.begin(), d.sites_sorted.end(), uni.begin(),
                               uni.end()))
                continue;
            const std::vector<Snapshot> snaps = build_snapshots(d.ds, uni);
            std::optional<Estimate> est_p2, est_p3, est_s3;
            for (Statistic s : stats) {
                const Estimate est = run_estimator(s, snaps, part, opts);
                if (s == Statistic::P2)
                    est_p2 = est;
                else if (s == Statistic::P3)
                    est_p3 = est;
                else if (s == Statistic::S3)
                    est_s3 = est;
                lines.push_back(estimate_json_line(est, part, d.ds.seed));
            }
            if (est_p2 && est_p3) {
                const double p2v = est_p2->value, p3v = est_p3->value;
                if (std::abs(p3v) > 1e-12) {
                    const double value = p2v * p2v / p3v;
                    const double d2 = 2.0 * p2v / p3v * est_p2->std_error;
                    const double d3 = p2v * p2v / (p3v * p3v) * est_p3->std_error;
                    const double se = std::sqrt(d2 * d2 + d3 * d3);
                    lines.push_back(derived_line("p2_sq_over_p3", part, value, se,
                                                 est_p3->m_used, est_p3->p_used, d.ds.seed));
                    fig1c += plot_row(d.stem, d.t_ms, part, value, se);
                } else {
                    lines.push_back(undefined_line(
                        "p2_sq_over_p3", part,
                        "p3 estimate is zero within tolerance; the ratio is unstable",
                        est_p3->m_used, est_p3->p_used, d.ds.seed));
                }
            }
            if (est_p3 && est_s3) {
                const double p3v = est_p3->value, s3v = est_s3->value;
                if (p3v > 0.0 && s3v > 0.0) {
                    const double value = r3_ratio(p3v, s3v);
                    const double rel3 = est_p3->std_error / p3v;
                    const double rels = est_s3->std_error / s3v;
                    const double se =
                        std::sqrt(rel3 * rel3 + rels * rels) / std::log(2.0);
                    lines.push_back(derived_line("r3", part, value, se, est_p3->m_used,
                                                 est_p3->p_used, d.ds.seed));
                    fig4a += plot_row(d.stem, d.t_ms, part, value, se);
                } else {
                    lines.push_back(undefined_line(
                        "r3", part,
                        std::string("r3 requires positive p3 and s3 estimates; got p3=") +
                            format_g(p3v) + ", s3=" + format_g(s3v),
                        est_p3->m_used, est_p3->p_used, d.ds.seed));
                }
            }
        }
        if (lines.empty())
            continue; // dataset covers none of the requested partitions
        std::string content;
        for (const std::string& l : lines)
            content += l + "\n";
        ordered_json& entry = out.add("results_" + d.stem + ".jsonl", content);
        entry["dataset"] = d.filename;
        entry["records"] = lines.size();
        if (d.t_ms)
            entry["time_ms"] = *d.t_ms;
    }

    if (emit_plot) {
        out.add("fig1c.csv", fig1c);
        out.add("fig4a.csv", fig4a);
    }
    out.finish("estimate", cfg.seed);
    return 0;
}

int cmd_compare(ScenarioConfig cfg, bool emit_plot)
{
    if (cfg.state == ScenarioKind::FromFile)
        throw InvalidArgumentError("compare needs an exactly simulated scenario; "
                                   "state=from_file provides no exact reference");
    if (cfg.partitions.empty())
        throw InvalidArgumentError("compare requires at least one partition");
    const std::vector<TimedState> states = build_states(cfg, "compare");

    std::string fig6 = "time_ms,sites_a,sites_b,negativity,p3_ppt_margin,purity_gap\n";
    std::vector<std::string> lines;
    for (const TimedState& ts : states) {
        const double t_ms = ts.t_ms.value_or(0.0);
        for (const PartitionSpec& part : cfg.partitions) {
            const std::vector<int> uni = sorted_union(part);
            DensityMatrix rho = reduced_density_matrix(ts.psi, uni);
            if (cfg.depolarize_strength > 0.0)
                rho = depolarize(rho, cfg.depolarize_strength);
            const ConditionReport rep = compare_conditions(rho, relabel_to(part, uni));
            lines.push_back(condition_json_line(rep, part, t_ms));
            std::vector<int> a = part.a_sites, b = part.b_sites;
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            fig6 += format_g(t_ms) + "," + format_sites(a) + "," + format_sites(b) + "," +
                    format_plot(rep.negativity) + "," + format_plot(rep.p3_ppt_margin) +
                    "," + format_plot(rep.purity_gap) + "\n";
        }
    }

    OutputWriter out(cfg.output_dir);
    std::string content;
    for (const std::string& l : lines)
        content += l + "\n";
    ordered_json& entry = out.add("conditions.jsonl", content);
    entry["records"] = lines.size();
    if (emit_plot)
        out.add("fig6.csv", fig6);
    out.finish("compare", cfg.seed);
    return 0;
}

int cmd_sweep(ScenarioConfig cfg, bool emit_plot)
{
    if (cfg.state == ScenarioKind::NeelQuench)
        throw InvalidArgumentError("sweep operates on a static state; choose ghz, "
                                   "tfim_ground, or from_file");
    if (cfg.partitions.empty())
        throw InvalidArgumentError("sweep requires at least one partition");
    if (cfg.sweep.m_grid.empty())
        throw InvalidArgumentError("sweep requires a [sweep] section with m_grid");
    const std::vector<TimedState> states = build_states(cfg, "sweep");
    const PureState& psi = states.front().psi;

    OutputWriter out(cfg.output_dir);
    std::string fig2a = "statistic,sites,M,mean_abs_err,stderr,trials\n";
    const std::string stat = statistic_name(cfg.sweep.statistic);
    for (std::size_t pi = 0; pi < cfg.partitions.size(); ++pi) {
        const PartitionSpec& part = cfg.partitions[pi];
        const SweepResult res = error_scaling_sweep(
            psi, part, cfg.sweep.statistic, cfg.sweep.m_grid, cfg.sweep.trials,
            derive_seed(cfg.seed, pi, 0), scenario_kind_name(cfg.state), cfg.p);
        std::ostringstream csv;
        write_sweep_csv(csv, res);
        const std::string sites = format_sites(sorted_union(part));
        ordered_json& entry = out.add("sweep_" + stat + "_ab" + sites + ".csv", csv.str());
        entry["statistic"] = stat;
        entry["sites"] = sites;
        entry["slope_small_m"] = res.slope_small_m; // NaN serializes as null
        entry["slope_large_m"] = res.slope_large_m;
        for (const SweepPoint& pt : res.grid)
            fig2a += stat + "," + sites + "," + std::to_string(pt.m) + "," +
                     format_plot(pt.mean_abs_error) + "," + format_plot(pt.std_error) +
                     "," + std::to_string(pt.trials) + "\n";
    }
    if (emit_plot)
        out.add("fig2a.csv", fig2a);
    out.finish("sweep", cfg.seed);
    return 0;
}

int cmd_werner(ScenarioConfig cfg)
{
    if (cfg.state != ScenarioKind::Werner)
        throw InvalidArgumentError("the werner subcommand requires state=werner");
    const int d = cfg.werner.d;
    if (d < 2 || d > 8)
        throw InvalidArgumentError("werner d must lie in [2, 8]");

    std::vector<double> grid;
    const int points =
        (cfg.werner.alpha_max > cfg.werner.alpha_min) ? cfg.werner.alpha_points : 1;
    grid.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        grid.push_back(points == 1 ? cfg.werner.alpha_min
                                   : cfg.werner.alpha_min +
                                         (cfg.werner.alpha_max - cfg.werner.alpha_min) *
                                             static_cast<double>(i) /
                                             static_cast<double>(points - 1));
    const WernerSweepReport report = werner_equivalence_sweep(d, grid);

    std::string csv = "alpha,p2,p3,ppt_violated,p3_ppt_violated,agree\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const WernerSpec w{d, grid[i]};
        const bool ppt = report.ppt_violated[i] != 0;
        const bool p3v = report.p3_ppt_violated[i] != 0;
        csv += format_full(grid[i]) + "," + format_full(werner_pt_moment(w, 2)) + "," +
               format_full(werner_pt_moment(w, 3)) + "," + (ppt ? "1" : "0") + "," +
               (p3v ? "1" : "0") + "," + (ppt == p3v ? "1" : "0") + "\n";
    }

    OutputWriter out(cfg.output_dir);
    {
        ordered_json& entry = out.add("werner_d" + std::to_string(d) + ".csv", csv);
        entry["d"] = d;
        entry["grid_points"] = grid.size();
    }
    const std::optional<double> alpha_star = werner_alpha_star(d);
    ordered_json summary;
    summary["d"] = d;
    summary["alpha_min"] = cfg.werner.alpha_min;
    summary["alpha_max"] = cfg.werner.alpha_max;
    summary["grid_points"] = grid.size();
    summary["disagreements"] = report.disagreements;
    if (alpha_star)
        summary["alpha_star"] = *alpha_star;
    else
        summary["alpha_star"] = nullptr;
    out.add("werner_summary.json", summary.dump(2) + "\n");
    out.finish("werner", cfg.seed);
    std::cout << "werner d=" << d << ": " << report.disagreements
              << " verdict disagreements across " << grid.size() << " grid points\n";
    return 0;
}

struct CommonArgs {
    std::string config_path;
    std::optional<int> m, p;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool emit_plot = false;
    std::vector<std::string> datasets;
};

int dispatch(const std::string& command, const CommonArgs& args)
{
    ScenarioConfig cfg = load_scenario_config(args.config_path);
    if (args.m) {
        if (*args.m < 1)
            throw InvalidArgumentError("--m must be positive");
        cfg.m = *args.m;
    }
    if (args.p) {
        if (*args.p < 1)
            throw InvalidArgumentError("--p must be positive");
        cfg.p = *args.p;
    }
    if (args.seed)
        cfg.seed = *args.seed;
    if (args.out_dir)
        cfg.output_dir = *args.out_dir;

    if (command == "simulate")
        return cmd_simulate(std::move(cfg));
    if (command == "estimate")
        return cmd_estimate(std::move(cfg), args.emit_plot, args.datasets);
    if (command == "compare")
        return cmd_compare(std::move(cfg), args.emit_plot);
    if (command == "sweep")
        return cmd_sweep(std::move(cfg), args.emit_plot);
    if (command == "werner")
        return cmd_werner(std::move(cfg));
    throw InvalidArgumentError("unknown command '" + command + "'");
}

} // namespace

int run(int argc, char** argv)
{
    CLI::App app{"local randomized measurements: dataset simulation, shadow estimation, "
                 "entanglement conditions, and error-scaling studies"};
    app.require_subcommand(1);

    CommonArgs args;
    const std::pair<const char*, const char*> commands[] = {
        {"simulate", "sample randomized-measurement datasets for a scenario"},
        {"estimate", "estimate moments and derived ratios from datasets"},
        {"compare", "exact entanglement-condition report for a scenario"},
        {"sweep", "statistical-error scaling versus the number of unitaries"},
        {"werner", "closed-form sweep of the two-qudit werner family"},
    };
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", args.config_path, "scenario config file")->required();
        sub->add_option("--m", args.m, "override: number of random unitaries");
        sub->add_option("--p", args.p, "override: shots per unitary");
        sub->add_option("--seed", args.seed, "override: master seed");
        sub->add_option("--out", args.out_dir, "override: output directory");
        sub->add_flag("--emit-plot-data", args.emit_plot,
                      "also write per-figure CSV bundles");
        if (std::string(name) == "estimate")
            sub->add_option("--dataset", args.datasets,
                            "dataset file (repeatable; default: the simulate manifest in "
                            "the output directory)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (const auto& [name, desc] : commands)
            if (app.got_subcommand(name))
                return dispatch(name, args);
        throw InvalidArgumentError("no command given");
    } catch (const ResourceLimitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const InvalidArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const UndefinedRatioError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(const std::vector<std::string>& args)
{
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("ptshadow");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    argv.reserve(storage.size());
    for (std::string& s : storage)
        argv.push_back(s.data());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace ptshadow::cli
