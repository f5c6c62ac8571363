#include "ptshadow/measure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "ptshadow/parallel.hpp"

namespace ptshadow {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Mat2 phase_normalized(Mat2 u)
{
    for (cplx* e : {&u.a, &u.b, &u.c, &u.d}) {
        const double m = std::abs(*e);
        if (m > 1e-9) {
            const cplx factor = std::conj(*e) / m;
            u.a *= factor;
            u.b *= factor;
            u.c *= factor;
            u.d *= factor;
            return u;
        }
    }
    return u;
}

// The 24 single-qubit Clifford rotations, indexed 6a+3b+c, as products
// S^a X^b V^c with S = diag(1, i), X the bit flip, and V = (SH)^2 the
// axis cycle X->Y->Z->X.  {S^a X^b} is the 8-element subgroup fixing the
// Z axis up to sign, and V has order 3 modulo phase, so the three cosets
// are disjoint and the 24 products are distinct.  Each table entry is
// phase-normalized so the serialized form is reproducible.
std::array<Mat2, 24> build_clifford_table()
{
    const double r = 1.0 / std::sqrt(2.0);
    const Mat2 s{1.0, 0.0, 0.0, cplx(0.0, 1.0)};
    const Mat2 h{r, r, r, -r};
    const Mat2 x{0.0, 1.0, 1.0, 0.0};
    const Mat2 v = mul(mul(s, h), mul(s, h));

    std::array<Mat2, 24> table;
    Mat2 sa = Mat2::identity();
    for (int a = 0; a < 4; ++a) {
        Mat2 saxb = sa;
        for (int b = 0; b < 2; ++b) {
            Mat2 u = saxb;
            for (int c = 0; c < 3; ++c) {
                table[static_cast<size_t>(6 * a + 3 * b + c)] = phase_normalized(u);
                u = mul(u, v);
            }
            saxb = mul(saxb, x);
        }
        sa = mul(sa, s);
    }
    return table;
}

void check_sites(const std::vector<int>& sites, int n_qubits)
{
    if (sites.empty())
        throw InvalidArgumentError("measured site list must be nonempty");
    if (static_cast<int>(sites.size()) > kMaxQubits)
        throw ResourceLimitError("measured site count exceeds dense cap");
    std::set<int> seen;
    for (int s : sites)
        if (s < 1 || s > n_qubits || !seen.insert(s).second)
            throw InvalidArgumentError("measured sites must be distinct labels in 1..n_qubits");
}

std::uint32_t draw_outcome(const std::vector<double>& cumulative, double u)
{
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
    return static_cast<std::uint32_t>(std::min(idx, cumulative.size() - 1));
}

} // namespace

std::string ensemble_name(Ensemble e)
{
    switch (e) {
    case Ensemble::Clifford:
        return "clifford";
    case Ensemble::Haar:
        return "haar";
    case Ensemble::External:
        return "external";
    }
    throw InvalidArgumentError("unknown ensemble");
}

Ensemble ensemble_from_name(const std::string& name)
{
    if (name == "clifford")
        return Ensemble::Clifford;
    if (name == "haar")
        return Ensemble::Haar;
    if (name == "external")
        return Ensemble::External;
    throw DataError("unknown ensemble '" + name + "'");
}

const std::array<Mat2, 24>& clifford_table()
{
    static const std::array<Mat2, 24> table = build_clifford_table();
    return table;
}

Mat2 sample_single_qubit_clifford(CounterRng& rng)
{
    return clifford_table()[static_cast<size_t>(rng.next_below(24))];
}

Mat2 sample_haar_su2(CounterRng& rng)
{
    const cplx a(rng.next_gaussian(), rng.next_gaussian());
    const cplx b(rng.next_gaussian(), rng.next_gaussian());
    const double phi = kTwoPi * rng.next_double();
    const double n = std::sqrt(std::norm(a) + std::norm(b));
    if (n < 1e-12)
        return Mat2::identity(); // probability-zero guard, kept deterministic
    const cplx ph = std::polar(1.0, phi);
    return {a / n, -std::conj(b) / n * ph, b / n, std::conj(a) / n * ph};
}

Eigen::VectorXd born_probabilities(const PureState& state, const LocalUnitary& u,
                                   const std::vector<int>& sites)
{
    check_pure_state(state);
    check_sites(sites, state.n_qubits);
    if (u.per_qubit.size() != sites.size())
        throw InvalidArgumentError("one unitary factor per measured site required");
    for (const Mat2& f : u.per_qubit)
        if (!is_unitary2(f, 1e-10))
            throw InvalidArgumentError("unitary factor fails the unitarity check");

    const int n = state.n_qubits;
    Vec amp = state.amplitudes;

    // Apply each factor in place: rotate the pairs differing at that site's bit.
    for (size_t j = 0; j < sites.size(); ++j) {
        const Eigen::Index bit = Eigen::Index(1) << (n - sites[j]);
        const Mat2& f = u.per_qubit[j];
        for (Eigen::Index g = 0; g < amp.size(); ++g) {
            if (g & bit)
                continue;
            const cplx a0 = amp(g);
            const cplx a1 = amp(g | bit);
            amp(g) = f.a * a0 + f.b * a1;
            amp(g | bit) = f.c * a0 + f.d * a1;
        }
    }

    const int l = static_cast<int>(sites.size());
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(Eigen::Index(1) << l);
    for (Eigen::Index g = 0; g < amp.size(); ++g) {
        Eigen::Index k = 0;
        for (int j = 0; j < l; ++j)
            k |= ((g >> (n - sites[static_cast<size_t>(j)])) & 1) << (l - 1 - j);
        probs(k) += std::norm(amp(g));
    }
    return probs;
}

MeasurementDataset generate_dataset(const PureState& state, const std::vector<int>& sites, int m,
                                    int p, Ensemble ensemble, std::uint64_t seed, int threads)
{
    check_pure_state(state);
    check_sites(sites, state.n_qubits);
    if (m < 1)
        throw InvalidArgumentError("need at least one measurement record");
    if (p < 1)
        throw InvalidArgumentError("need at least one shot per unitary");
    if (ensemble == Ensemble::External)
        throw InvalidArgumentError("cannot sample from the external ensemble");

    MeasurementDataset ds;
    ds.n_sites = state.n_qubits;
    ds.site_list = sites;
    ds.ensemble = ensemble;
    ds.seed = seed;
    ds.shots_per_unitary = p;
    ds.records.resize(static_cast<size_t>(m));

    const int l = static_cast<int>(sites.size());
    for_each_block(m, threads, [&](int r) {
        CounterRng rng = record_stream(seed, static_cast<std::uint64_t>(r));
        MeasurementRecord& rec = ds.records[static_cast<size_t>(r)];
        rec.unitary.per_qubit.resize(static_cast<size_t>(l));
        for (int j = 0; j < l; ++j)
            rec.unitary.per_qubit[static_cast<size_t>(j)] =
                ensemble == Ensemble::Clifford ? sample_single_qubit_clifford(rng)
                                               : sample_haar_su2(rng);

        const Eigen::VectorXd probs = born_probabilities(state, rec.unitary, sites);
        std::vector<double> cumulative(static_cast<size_t>(probs.size()));
        double acc = 0.0;
        for (Eigen::Index i = 0; i < probs.size(); ++i) {
            acc += probs(i);
            cumulative[static_cast<size_t>(i)] = acc;
        }
        cumulative.back() = 1.0; // guard the top edge against roundoff

        rec.outcomes.resize(static_cast<size_t>(p));
        for (int s = 0; s < p; ++s)
            rec.outcomes[static_cast<size_t>(s)] = draw_outcome(cumulative, rng.next_double());
    });
    return ds;
}

namespace {

using ordered_json = nlohmann::ordered_json;

std::string outcome_to_bits(std::uint32_t code, int l)
{
    std::string s(static_cast<size_t>(l), '0');
    for (int j = 0; j < l; ++j)
        if ((code >> (l - 1 - j)) & 1)
            s[static_cast<size_t>(j)] = '1';
    return s;
}

std::uint32_t bits_to_outcome(const std::string& bits, int l, int line_no)
{
    if (static_cast<int>(bits.size()) != l)
        throw DataError("line " + std::to_string(line_no) + ": bitstring length " +
                        std::to_string(bits.size()) + ", expected " + std::to_string(l));
    std::uint32_t code = 0;
    for (int j = 0; j < l; ++j) {
        const char c = bits[static_cast<size_t>(j)];
        if (c != '0' && c != '1')
            throw DataError("line " + std::to_string(line_no) + ": bitstring must be 0/1");
        if (c == '1')
            code |= 1u << (l - 1 - j);
    }
    return code;
}

} // namespace

void write_dataset(std::ostream& os, const MeasurementDataset& ds)
{
    ordered_json header;
    header["version"] = 1;
    header["n_sites"] = ds.n_sites;
    header["sites"] = ds.site_list;
    header["ensemble"] = ensemble_name(ds.ensemble);
    header["seed"] = ds.seed;
    header["m"] = ds.records.size();
    header["p"] = ds.shots_per_unitary;
    os << header.dump() << '\n';

    const int l = ds.n_measured();
    for (size_t r = 0; r < ds.records.size(); ++r) {
        const MeasurementRecord& rec = ds.records[r];
        ordered_json j;
        j["r"] = r;
        ordered_json us = ordered_json::array();
        for (const Mat2& f : rec.unitary.per_qubit)
            us.push_back({f.a.real(), f.a.imag(), f.b.real(), f.b.imag(), f.c.real(), f.c.imag(),
                          f.d.real(), f.d.imag()});
        j["u"] = std::move(us);
        ordered_json ks = ordered_json::array();
        for (std::uint32_t code : rec.outcomes)
            ks.push_back(outcome_to_bits(code, l));
        j["k"] = std::move(ks);
        os << j.dump() << '\n';
    }
}

void save_dataset(const std::string& path, const MeasurementDataset& ds)
{
    std::ofstream out(path, std::ios::binary); // binary: LF endings everywhere
    if (!out)
        throw DataError("cannot open '" + path + "' for writing");
    write_dataset(out, ds);
    out.flush();
    if (!out)
        throw DataError("write to '" + path + "' failed");
}

MeasurementDataset read_dataset(std::istream& is)
{
    std::string line;
    int line_no = 0;

    auto next_line = [&]() -> bool {
        while (std::getline(is, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (!line.empty())
                return true;
        }
        return false;
    };

    auto parse_line = [&]() -> ordered_json {
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError("line " + std::to_string(line_no) + ": malformed JSON");
        return j;
    };

    if (!next_line())
        throw DataError("empty dataset file");
    const ordered_json header = parse_line();

    MeasurementDataset ds;
    std::size_t m = 0;
    try {
        if (header.at("version").get<int>() != 1)
            throw DataError("line 1: unsupported dataset version");
        ds.n_sites = header.at("n_sites").get<int>();
        ds.site_list = header.at("sites").get<std::vector<int>>();
        ds.ensemble = ensemble_from_name(header.at("ensemble").get<std::string>());
        ds.seed = header.at("seed").get<std::uint64_t>();
        m = header.at("m").get<std::size_t>();
        ds.shots_per_unitary = header.at("p").get<int>();
    } catch (const ordered_json::exception& e) {
        throw DataError("line 1: bad header: " + std::string(e.what()));
    }
    if (ds.n_sites < 1 || ds.n_sites > kMaxQubits)
        throw DataError("line 1: n_sites out of range");
    try {
        check_sites(ds.site_list, ds.n_sites);
    } catch (const Error& e) {
        throw DataError("line 1: " + std::string(e.what()));
    }
    if (m < 1)
        throw DataError("line 1: dataset must contain at least one record");
    if (ds.shots_per_unitary < 1)
        throw DataError("line 1: shots per unitary must be >= 1");

    const int l = ds.n_measured();
    ds.records.reserve(m);
    while (next_line()) {
        const ordered_json j = parse_line();
        MeasurementRecord rec;
        std::size_t r = 0;
        try {
            r = j.at("r").get<std::size_t>();
            const auto& us = j.at("u");
            if (!us.is_array() || us.size() != static_cast<std::size_t>(l))
                throw DataError("line " + std::to_string(line_no) +
                                ": expected one unitary factor per measured site");
            for (const auto& uf : us) {
                const auto vals = uf.get<std::vector<double>>();
                if (vals.size() != 8)
                    throw DataError("line " + std::to_string(line_no) +
                                    ": unitary factor needs 8 floats");
                rec.unitary.per_qubit.push_back({cplx(vals[0], vals[1]), cplx(vals[2], vals[3]),
                                                 cplx(vals[4], vals[5]), cplx(vals[6], vals[7])});
            }
            for (const auto& ks : j.at("k"))
                rec.outcomes.push_back(bits_to_outcome(ks.get<std::string>(), l, line_no));
        } catch (const ordered_json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": bad record: " +
                            std::string(e.what()));
        }
        if (r != ds.records.size())
            throw DataError("line " + std::to_string(line_no) + ": record index " +
                            std::to_string(r) + " out of order");
        if (rec.outcomes.size() != static_cast<std::size_t>(ds.shots_per_unitary))
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(ds.shots_per_unitary) + " outcomes");
        for (const Mat2& f : rec.unitary.per_qubit)
            if (!is_unitary2(f, 1e-6))
                throw DataError("line " + std::to_string(line_no) +
                                ": stored factor fails the unitarity check");
        ds.records.push_back(std::move(rec));
        if (ds.records.size() > m)
            throw DataError("line " + std::to_string(line_no) + ": more records than header m");
    }
    if (ds.records.size() != m)
        throw DataError("dataset truncated: header promises m=" + std::to_string(m) + ", found " +
                        std::to_string(ds.records.size()));
    return ds;
}

MeasurementDataset load_dataset(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    return read_dataset(in);
}

} // namespace ptshadow
