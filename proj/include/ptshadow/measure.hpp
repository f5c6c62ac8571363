#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ptshadow/linalg.hpp"
#include "ptshadow/rng.hpp"
#include "ptshadow/states.hpp"

namespace ptshadow {

enum class Ensemble { Clifford, Haar, External };

std::string ensemble_name(Ensemble e);
Ensemble ensemble_from_name(const std::string& name); // throws DataError on unknown names

// Tensor product of single-qubit unitaries, one factor per measured site (in
// site-list order).
struct LocalUnitary {
    std::vector<Mat2> per_qubit;
};

// One randomized-measurement round: a sampled local unitary and the P
// computational-basis outcomes observed under it. Outcome codes index the
// born_probabilities vector: bit for list position j has weight
// 2^(L-1-j), L = number of measured sites.
struct MeasurementRecord {
    LocalUnitary unitary;
    std::vector<std::uint32_t> outcomes;
};

struct MeasurementDataset {
    int n_sites = 0;            // qubits in the underlying chain
    std::vector<int> site_list; // measured sites (1-based chain labels), ordered
    Ensemble ensemble = Ensemble::Clifford;
    std::uint64_t seed = 0;
    int shots_per_unitary = 1; // P
    std::vector<MeasurementRecord> records;

    int n_measured() const { return static_cast<int>(site_list.size()); }
};

// The 24 single-qubit Cliffords as the canonical list S^a X^b V^c with
// a in 0..3, b in 0..1, c in 0..2 (index = 6a + 3b + c), where S = diag(1, i),
// X is the bit flip and V = (SH)^2 cycles the Pauli axes X -> Y -> Z -> X.
// Each entry is phase-normalized: first nonzero entry (row-major) is real
// and positive.
const std::array<Mat2, 24>& clifford_table();

Mat2 sample_single_qubit_clifford(CounterRng& rng);
Mat2 sample_haar_su2(CounterRng& rng);

// Outcome distribution of a computational-basis measurement on `sites` after
// applying u (one factor per site, same order). Index convention: bit for
// sites[j] has weight 2^(L-1-j).
Eigen::VectorXd born_probabilities(const PureState& state, const LocalUnitary& u,
                                   const std::vector<int>& sites);

// M randomized-measurement rounds with P shots each. Record r draws from the
// substream record_stream(seed, r): first one unitary per site (site-list
// order), then P outcomes. Reproducible from (state, sites, m, p, ensemble, seed) alone;
// `threads` only affects wall time.
MeasurementDataset generate_dataset(const PureState& state, const std::vector<int>& sites, int m,
                                    int p, Ensemble ensemble, std::uint64_t seed, int threads = 0);

void write_dataset(std::ostream& os, const MeasurementDataset& ds);
void save_dataset(const std::string& path, const MeasurementDataset& ds);

// Parses and validates a dataset file; throws DataError naming the offending
// line on malformed input, truncation, or unitarity violations above 1e-6.
MeasurementDataset read_dataset(std::istream& is);
MeasurementDataset load_dataset(const std::string& path);

} // namespace ptshadow
