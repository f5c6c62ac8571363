#include "ptshadow/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ptshadow/errors.hpp"

namespace ptshadow {

namespace {

std::string trim(const std::string& s)
{
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

[[noreturn]] void fail(const std::string& what, int line)
{
    throw InvalidArgumentError(what + " (config line " + std::to_string(line) + ")");
}

long long parse_int(const std::string& value, const std::string& key, int line)
{
    try {
        size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size())
            fail("key '" + key + "' has a malformed integer '" + value + "'", line);
        return v;
    } catch (const InvalidArgumentError&) {
        throw;
    } catch (const std::exception&) {
        fail("key '" + key + "' has a malformed integer '" + value + "'", line);
    }
}

std::uint64_t parse_u64(const std::string& value, const std::string& key, int line)
{
    try {
        size_t used = 0;
        if (!value.empty() && value[0] == '-')
            fail("key '" + key + "' must be nonnegative, got '" + value + "'", line);
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size())
            fail("key '" + key + "' has a malformed integer '" + value + "'", line);
        return v;
    } catch (const InvalidArgumentError&) {
        throw;
    } catch (const std::exception&) {
        fail("key '" + key + "' has a malformed integer '" + value + "'", line);
    }
}

double parse_double(const std::string& value, const std::string& key, int line)
{
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size())
            fail("key '" + key + "' has a malformed number '" + value + "'", line);
        return v;
    } catch (const InvalidArgumentError&) {
        throw;
    } catch (const std::exception&) {
        fail("key '" + key + "' has a malformed number '" + value + "'", line);
    }
}

int parse_site_label(const std::string& token, const std::string& context)
{
    size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(token, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != token.size() || v < 1)
        throw InvalidArgumentError("bad site label '" + token + "' in partition '" + context +
                                   "'");
    return v;
}

std::vector<int> parse_site_list(const std::string& text, const std::string& context)
{
    std::vector<int> out;
    for (const std::string& raw : split(text, ',')) {
        const std::string token = trim(raw);
        if (token.empty())
            throw InvalidArgumentError("empty site entry in partition '" + context + "'");
        const size_t dash = token.find('-');
        if (dash == std::string::npos) {
            out.push_back(parse_site_label(token, context));
            continue;
        }
        const int lo = parse_site_label(trim(token.substr(0, dash)), context);
        const int hi = parse_site_label(trim(token.substr(dash + 1)), context);
        if (hi < lo)
            throw InvalidArgumentError("descending range '" + token + "' in partition '" +
                                       context + "'");
        for (int s = lo; s <= hi; ++s)
            out.push_back(s);
    }
    return out;
}

} // namespace

std::string scenario_kind_name(ScenarioKind kind)
{
    switch (kind) {
    case ScenarioKind::Ghz: return "ghz";
    case ScenarioKind::NeelQuench: return "neel_quench";
    case ScenarioKind::TfimGround: return "tfim_ground";
    case ScenarioKind::Werner: return "werner";
    case ScenarioKind::FromFile: return "from_file";
    }
    return "?";
}

PartitionSpec parse_partition_spec(const std::string& text)
{
    const std::vector<std::string> clauses = split(text, ';');
    if (clauses.size() != 2)
        throw InvalidArgumentError("partition '" + text +
                                   "' must have the form A=<sites>;B=<sites>");
    auto clause_body = [&text](const std::string& clause, char label) {
        const std::string c = trim(clause);
        size_t i = 1;
        while (i < c.size() && std::isspace(static_cast<unsigned char>(c[i])))
            ++i;
        if (c.empty() || c[0] != label || i >= c.size() || c[i] != '=')
            throw InvalidArgumentError("partition '" + text +
                                       "' must have the form A=<sites>;B=<sites>");
        return c.substr(i + 1);
    };
    PartitionSpec part;
    part.a_sites = parse_site_list(clause_body(clauses[0], 'A'), text);
    part.b_sites = parse_site_list(clause_body(clauses[1], 'B'), text);
    try {
        check_partition(part);
    } catch (const InvalidArgumentError& e) {
        throw InvalidArgumentError(std::string(e.what()) + " in partition '" + text + "'");
    }
    return part;
}

std::string format_sites(const std::vector<int>& sites)
{
    std::string out;
    size_t i = 0;
    while (i < sites.size()) {
        size_t j = i;
        while (j + 1 < sites.size() && sites[j + 1] == sites[j] + 1)
            ++j;
        if (!out.empty())
            out += '_';
        out += std::to_string(sites[i]);
        if (j > i)
            out += '-' + std::to_string(sites[j]);
        i = j + 1;
    }
    return out;
}

ScenarioConfig parse_scenario_text(const std::string& text)
{
    ScenarioConfig cfg;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line = 0;
    bool state_given = false, model_given = false, statistics_given = false;
    std::vector<std::string> seen_keys; // "<section>/<key>" for duplicate detection

    auto mark_seen = [&](const std::string& key) {
        const std::string tag = section + "/" + key;
        if (std::find(seen_keys.begin(), seen_keys.end(), tag) != seen_keys.end())
            fail("duplicate key '" + key + "'", line);
        seen_keys.push_back(tag);
    };

    while (std::getline(is, raw)) {
        ++line;
        const std::string s = trim(raw);
        if (s.empty() || s[0] == '#')
            continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                fail("malformed section header '" + s + "'", line);
            section = trim(s.substr(1, s.size() - 2));
            if (section != "hamiltonian" && section != "sweep" && section != "werner")
                fail("unknown section '" + section + "'", line);
            continue;
        }
        const size_t eq = s.find('=');
        if (eq == std::string::npos)
            fail("expected 'key = value', got '" + s + "'", line);
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty())
            fail("missing key before '='", line);
        if (value.empty())
            fail("key '" + key + "' has an empty value", line);

        if (section.empty()) {
            if (key == "partition") { // repeatable
                cfg.partitions.push_back(parse_partition_spec(value));
                continue;
            }
            mark_seen(key);
            if (key == "state") {
                state_given = true;
                if (value == "ghz")
                    cfg.state = ScenarioKind::Ghz;
                else if (value == "neel_quench")
                    cfg.state = ScenarioKind::NeelQuench;
                else if (value == "tfim_ground")
                    cfg.state = ScenarioKind::TfimGround;
                else if (value == "werner")
                    cfg.state = ScenarioKind::Werner;
                else if (value == "from_file")
                    cfg.state = ScenarioKind::FromFile;
                else
                    fail("unknown state '" + value +
                         "' (expected ghz, neel_quench, tfim_ground, werner, or from_file)",
                         line);
            } else if (key == "n_qubits") {
                const long long v = parse_int(value, key, line);
                if (v < 1)
                    fail("n_qubits must be positive, got " + value, line);
                cfg.n_qubits = static_cast<int>(v);
            } else if (key == "input_state") {
                cfg.input_state = value;
            } else if (key == "times_ms") {
                cfg.times_given = true;
                double prev = -1.0;
                for (const std::string& tok : split(value, ',')) {
                    const double t_ms = parse_double(trim(tok), key, line);
                    if (t_ms < 0.0)
                        fail("times_ms entries must be nonnegative, got " + trim(tok), line);
                    if (t_ms <= prev)
                        fail("times_ms must be strictly increasing", line);
                    prev = t_ms;
                    cfg.times_s.push_back(t_ms / 1000.0);
                }
            } else if (key == "m") {
                const long long v = parse_int(value, key, line);
                if (v < 1)
                    fail("m must be positive, got " + value, line);
                cfg.m = static_cast<int>(v);
            } else if (key == "p") {
                const long long v = parse_int(value, key, line);
                if (v < 1)
                    fail("p must be positive, got " + value, line);
                cfg.p = static_cast<int>(v);
            } else if (key == "ensemble") {
                try {
                    cfg.ensemble = ensemble_from_name(value);
                } catch (const Error&) {
                    fail("unknown ensemble '" + value + "'", line);
                }
            } else if (key == "seed") {
                cfg.seed = parse_u64(value, key, line);
            } else if (key == "depolarize_strength") {
                cfg.depolarize_strength = parse_double(value, key, line);
                if (cfg.depolarize_strength < 0.0 || cfg.depolarize_strength > 1.0)
                    fail("depolarize_strength must lie in [0, 1], got " + value, line);
            } else if (key == "output_dir") {
                cfg.output_dir = value;
            } else if (key == "statistics") {
                statistics_given = true;
                for (const std::string& tok : split(value, ',')) {
                    const std::string name = trim(tok);
                    if (name == "p2")
                        cfg.statistics.push_back(Statistic::P2);
                    else if (name == "p3")
                        cfg.statistics.push_back(Statistic::P3);
                    else if (name == "s3")
                        cfg.statistics.push_back(Statistic::S3);
                    else if (name == "p4")
                        cfg.statistics.push_back(Statistic::P4);
                    else
                        fail("unknown statistic '" + name + "' (expected p2, p3, s3, or p4)",
                             line);
                }
            } else {
                fail("unknown key '" + key + "'", line);
            }
        } else if (section == "hamiltonian") {
            mark_seen(key);
            if (key == "model") {
                model_given = true;
                if (value == "xy")
                    cfg.hamiltonian.model = HamiltonianModel::XY;
                else if (value == "tfim")
                    cfg.hamiltonian.model = HamiltonianModel::TFIM;
                else
                    fail("unknown model '" + value + "' (expected xy or tfim)", line);
            } else if (key == "j0_per_s") {
                cfg.hamiltonian.j0 = parse_double(value, key, line);
            } else if (key == "alpha") {
                cfg.hamiltonian.alpha = parse_double(value, key, line);
            } else if (key == "b_field_per_s") {
                cfg.hamiltonian.b_field = parse_double(value, key, line);
            } else if (key == "j_tfim") {
                cfg.hamiltonian.j_tfim = parse_double(value, key, line);
            } else {
                fail("unknown key '" + key + "' in [hamiltonian]", line);
            }
        } else if (section == "sweep") {
            mark_seen(key);
            if (key == "statistic") {
                if (value == "p2")
                    cfg.sweep.statistic = Statistic::P2;
                else if (value == "p3")
                    cfg.sweep.statistic = Statistic::P3;
                else
                    fail("sweep statistic must be p2 or p3, got '" + value + "'", line);
            } else if (key == "m_grid") {
                for (const std::string& tok : split(value, ',')) {
                    const long long v = parse_int(trim(tok), key, line);
                    if (v < 2)
                        fail("m_grid entries must be at least 2, got " + trim(tok), line);
                    cfg.sweep.m_grid.push_back(static_cast<int>(v));
                }
            } else if (key == "trials") {
                const long long v = parse_int(value, key, line);
                if (v < 1)
                    fail("trials must be positive, got " + value, line);
                cfg.sweep.trials = static_cast<int>(v);
            } else {
                fail("unknown key '" + key + "' in [sweep]", line);
            }
        } else { // werner
            mark_seen(key);
            if (key == "d") {
                const long long v = parse_int(value, key, line);
                if (v < 2)
                    fail("werner d must be at least 2, got " + value, line);
                cfg.werner.d = static_cast<int>(v);
            } else if (key == "alpha_min") {
                cfg.werner.alpha_min = parse_double(value, key, line);
            } else if (key == "alpha_max") {
                cfg.werner.alpha_max = parse_double(value, key, line);
            } else if (key == "alpha_points") {
                const long long v = parse_int(value, key, line);
                if (v < 1)
                    fail("alpha_points must be positive, got " + value, line);
                cfg.werner.alpha_points = static_cast<int>(v);
            } else {
                fail("unknown key '" + key + "' in [werner]", line);
            }
        }
    }

    if (!state_given)
        throw InvalidArgumentError("config is missing the required key 'state'");
    if (!statistics_given)
        cfg.statistics = {Statistic::P2, Statistic::P3, Statistic::S3};

    const bool chain_scenario = cfg.state == ScenarioKind::Ghz ||
                                cfg.state == ScenarioKind::NeelQuench ||
                                cfg.state == ScenarioKind::TfimGround;
    if (chain_scenario && cfg.n_qubits == 0)
        throw InvalidArgumentError("state=" + scenario_kind_name(cfg.state) +
                                   " requires n_qubits");
    if (cfg.state == ScenarioKind::FromFile && cfg.input_state.empty())
        throw InvalidArgumentError("state=from_file requires input_state");
    if (cfg.state == ScenarioKind::TfimGround && model_given &&
        cfg.hamiltonian.model != HamiltonianModel::TFIM)
        throw InvalidArgumentError("state=tfim_ground requires [hamiltonian] model=tfim");
    if (cfg.state != ScenarioKind::NeelQuench && cfg.times_given)
        throw InvalidArgumentError("times_ms applies to quench scenarios only");
    if (cfg.state == ScenarioKind::NeelQuench && cfg.times_given && cfg.times_s.empty())
        throw InvalidArgumentError("times_ms must be nonempty for quench scenarios");
    if (cfg.state == ScenarioKind::NeelQuench && !cfg.times_given) {
        for (int i = 0; i <= 10; ++i) // default grid: 0..5 ms in 0.5 ms steps
            cfg.times_s.push_back(0.5e-3 * i);
    }
    if (chain_scenario) {
        cfg.hamiltonian.n_qubits = cfg.n_qubits;
        for (const PartitionSpec& part : cfg.partitions)
            for (int s : part.all_sites())
                if (s > cfg.n_qubits)
                    throw InvalidArgumentError("partition site " + std::to_string(s) +
                                               " exceeds n_qubits=" +
                                               std::to_string(cfg.n_qubits));
    }
    if (cfg.werner.alpha_min < 0.0 || cfg.werner.alpha_max > 1.0 ||
        cfg.werner.alpha_min > cfg.werner.alpha_max)
        throw InvalidArgumentError("werner alpha range must satisfy 0 <= alpha_min <= "
                                   "alpha_max <= 1");
    if (cfg.werner.alpha_points < 2 && cfg.werner.alpha_max > cfg.werner.alpha_min)
        throw InvalidArgumentError("werner alpha_points must be at least 2 for a nontrivial "
                                   "range");
    return cfg;
}

ScenarioConfig load_scenario_config(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw InvalidArgumentError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_scenario_text(buf.str());
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view bytes)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string(buf);
}

} // namespace ptshadow
