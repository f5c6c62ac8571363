#pragma once

#include <vector>

#include "ptshadow/errors.hpp"
#include "ptshadow/linalg.hpp"

namespace ptshadow {

// Site/bit convention used everywhere, including file formats: site 1 is the
// most significant bit, so bitstring k_1...k_N maps to index sum_i k_i 2^(N-i).

struct PureState {
    int n_qubits = 0;
    Vec amplitudes;

    Eigen::Index dim() const { return amplitudes.size(); }
};

struct DensityMatrix {
    std::vector<int> dims; // local dimension per axis; axis 1 first
    Mat matrix;

    Eigen::Index dim() const { return matrix.rows(); }
    int n_axes() const { return static_cast<int>(dims.size()); }
};

// Bipartition of a (sub)system. Site labels are 1-based. For operations on a
// DensityMatrix the labels address its axes (1..len(dims)); for operations on
// the full chain they address chain sites (1..N).
struct PartitionSpec {
    std::vector<int> a_sites;
    std::vector<int> b_sites;

    std::vector<int> all_sites() const; // a_sites followed by b_sites
};

enum class HamiltonianModel { XY, TFIM };

struct HamiltonianSpec {
    HamiltonianModel model = HamiltonianModel::XY;
    int n_qubits = 0;
    double j0 = 420.0;    // XY coupling rate, 1/s
    double alpha = 1.24;  // power-law exponent
    double b_field = 0.0; // XY transverse field rate, 1/s
    double j_tfim = 1.0;  // TFIM coupling, dimensionless
};

inline constexpr int kMaxQubits = 14; // dense simulation hard cap

// --- validation -----------------------------------------------------------

void check_pure_state(const PureState& s);                       // norm within 1e-10
void check_partition(const PartitionSpec& p);                    // disjoint, nonempty, labels >= 1
void check_partition_covers(const PartitionSpec& p, int n_axes); // additionally: exactly covers 1..n_axes
void check_density_matrix(const DensityMatrix& rho, bool require_psd);

// --- state preparation ----------------------------------------------------

PureState make_ghz(int n_qubits);
PureState make_neel(int n_qubits); // |up down up down ...>, up = |0> at site 1
PureState make_product_state(int n_qubits, const std::vector<Vec>& single_site); // helper
PureState state_from_amplitudes(Vec amplitudes);                                 // validates and infers n

// --- Hamiltonians and dynamics --------------------------------------------

Mat build_hamiltonian(const HamiltonianSpec& spec);

// Eigendecomposition of a Hermitian H, reusable across time points.
class SpectralPropagator {
public:
    explicit SpectralPropagator(const Mat& h);
    PureState evolve(const PureState& state, double t_seconds) const;
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

private:
    Eigen::VectorXd eigenvalues_;
    Mat eigenvectors_;
};

PureState evolve(const PureState& state, const Mat& h, double t_seconds);

struct GroundState {
    PureState state;
    double energy = 0.0;
    bool degenerate = false; // gap to the next level < 1e-10
};

GroundState ground_state(const Mat& h);

// --- reduced states and partial transpose ----------------------------------

// Partial trace keeping `sites` (chain labels for PureState, axis labels for
// DensityMatrix); result axes are ordered exactly as the given list.
DensityMatrix reduced_density_matrix(const PureState& state, const std::vector<int>& sites);
DensityMatrix reduced_density_matrix(const DensityMatrix& rho, const std::vector<int>& sites);

// Transpose the A axes (partition labels address rho's axes). The result is
// Hermitian and trace-1 but generally not psd.
Mat partial_transpose(const DensityMatrix& rho, const PartitionSpec& partition);

// p_n = Tr[(rho^{T_A})^n] for n = 1..n_max, via the PT eigenvalues.
std::vector<double> pt_moments_exact(const DensityMatrix& rho, const PartitionSpec& partition,
                                     int n_max);

// Sum of |lambda| over PT eigenvalues lambda < -1e-10.
double negativity(const DensityMatrix& rho, const PartitionSpec& partition);

DensityMatrix depolarize(const DensityMatrix& rho, double strength);

// Eigenvalues of rho^{T_A}, ascending (shared by the moment/negativity ops).
Eigen::VectorXd pt_spectrum(const DensityMatrix& rho, const PartitionSpec& partition);

} // namespace ptshadow
