#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ptshadow/linalg.hpp"
#include "ptshadow/states.hpp"

namespace ptshadow {

// Diagnostics and verdicts for one state and bipartition. All verdicts use a
// 1e-12 tie tolerance with ties reported as non-violation, so numerical noise
// never claims entanglement.
struct ConditionReport {
    double negativity = 0.0;
    double p2 = 0.0;
    double p3 = 0.0;
    double p3_ppt_margin = 0.0; // 1 - p3/p2^2; strictly positive flags entanglement
    double purity_gap = 0.0;    // Tr(rho_AB^2) - Tr(rho_A^2)
    bool ppt_violated = false;         // negativity above the 1e-10 spectral cutoff
    bool p3_ppt_violated = false;      // p3 < p2^2 (tie tolerance 1e-12)
    bool purity_condition_met = false; // purity_A < purity_AB (same tolerance)
};

// Moment condition: every PPT state obeys p3 >= p2^2, so p3 < p2^2 certifies
// entanglement. Returns true on violation (ties within 1e-12 are not
// violations). Errors: p2 <= 0 -> InvalidArgumentError (p2 is a purity).
bool p3_ppt_test(double p2, double p3);

// Order-p relative of the same test: violation of
//     p_{p-1}^{p-1} <= p_p^{p-2},
// which every PPT state satisfies. moments[i] holds p_{i+1} (so moments[0]
// is the trace) and at least p entries are required. p = 3 reduces exactly
// to p3_ppt_test. Exposed for p in [3, 5] only -- the higher orders are
// strictly weaker tests and exist for property checks, not the headline
// workflow. Errors: p outside [3,5] or missing moments -> InvalidArgumentError.
bool generalized_moment_test(const std::vector<double>& moments, int p);

// Cubic polynomial detector F3(a) = -p3 + 2a*p2 - a^2*p1; a strictly
// positive value signals bipartite entanglement. As a function of a it is a
// downward parabola maximized at a = p2/p1 (optimal_a), where it equals
// p2^2/p1 - p3; with p1 = 1 that is the p3-PPT margin numerator p2^2 - p3.
double f3_value(double p1, double p2, double p3, double a);
// Errors: p1 <= 0 -> InvalidArgumentError.
double optimal_a(double p1, double p2);

// Nested-purity condition: a subsystem strictly more mixed than the whole
// (purity_a < purity_ab, tie tolerance 1e-12) signals entanglement.
// Errors: inputs outside (0, 1] (tiny roundoff above 1 tolerated) ->
// InvalidArgumentError.
bool purity_condition(double purity_a, double purity_ab);

// R3 = -log2(p3 / s3) where s3 = Tr(rho^3). Zero for every product state;
// positive values track entanglement growth (though R3 is not a monotone:
// some separable states score R3 > 0). Defined only for p3 > 0 and s3 > 0.
// Errors: p3 <= 0 or s3 <= 0 -> UndefinedRatioError.
double r3_ratio(double p3, double s3);

// Schatten p-norm: the l_p norm of the eigenvalue vector of a Hermitian
// matrix. p may be infinity (largest |eigenvalue|).
// Errors: p < 1 (or NaN) or a non-Hermitian input -> InvalidArgumentError.
double schatten_norm(const Mat& x, double p);

// Exact comparison on a density matrix: negativity, PT moments p2/p3, the
// p3-PPT margin, the purity gap, and the three verdicts. Partition labels
// address rho's axes and must cover them exactly.
ConditionReport compare_conditions(const DensityMatrix& rho, const PartitionSpec& partition);

// One line-delimited JSON record of a report (negativity, 1 - p3/p2^2, and
// purity-gap columns plus the verdicts), keyed by partition and time.
std::string condition_json_line(const ConditionReport& rep, const PartitionSpec& partition,
                                double time_ms);

// --- Werner family ----------------------------------------------------------
// Two qudits of local dimension d. With Pi_12 the swap operator and
// Pi_+/Pi_- = (I +/- Pi_12)/2 the projectors onto the symmetric and
// antisymmetric subspaces,
//     rho_W = alpha * Pi_+ / binom(d+1, 2) + (1 - alpha) * Pi_- / binom(d, 2).
// Spectrum: lambda_+ = alpha / binom(d+1,2) with multiplicity binom(d+1,2),
// lambda_- = (1-alpha) / binom(d,2) with multiplicity binom(d,2); the reduced
// state of either qudit is I/d. The partial transpose has eigenvalues
// lambda_0 = (2 alpha - 1)/d (multiplicity 1) and
// lambda_1 = (1 + d - 2 alpha)/(d (d^2 - 1)) (multiplicity d^2 - 1), so the
// state is PPT exactly when alpha >= 1/2 (and separable there).

struct WernerSpec {
    int d = 2;          // local dimension >= 2
    double alpha = 0.0; // symmetric-subspace weight in [0, 1]
};

// Dense construction on dims {d, d} (swap built explicitly; sizes are tiny).
// Errors: d < 2 or alpha outside [0,1] -> InvalidArgumentError; d > 12 ->
// ResourceLimitError.
DensityMatrix werner_state(const WernerSpec& spec);

// Closed form Tr[(rho_W^{T_A})^n] = lambda_0^n + (d^2-1) * lambda_1^n.
// Errors: n < 1 or an invalid spec -> InvalidArgumentError (no size cap; no
// matrix is built).
double werner_pt_moment(const WernerSpec& spec, int n);

// Closed form Tr[rho_W^n] = alpha^n / binom(d+1,2)^{n-1}
//                         + (1-alpha)^n / binom(d,2)^{n-1}.
double werner_state_moment(const WernerSpec& spec, int n);

// Smallest alpha with p3 >= 0: for d > 3 the Werner p3 is negative on
// [0, alpha*), so R3 is undefined there. Returns none for d <= 3 (p3 is
// never below the -1e-12 tolerance). Root located by bisection on the
// closed form to 1e-12.
std::optional<double> werner_alpha_star(int d);

struct WernerSweepReport {
    int d = 0;
    std::vector<double> alphas;
    std::vector<char> ppt_violated;    // exact: lambda_0 < 0 (tie tolerance 1e-12)
    std::vector<char> p3_ppt_violated; // from the closed-form moments
    int disagreements = 0;             // grid points where the verdicts differ
};

// For Werner states the p3-PPT condition is equivalent to full PPT; the
// sweep evaluates both verdicts over an alpha grid and counts disagreements
// (expected: zero). Grid points evaluate independently in deterministic
// order. Errors: d outside [2, 8] or grid values outside [0, 1] ->
// InvalidArgumentError.
WernerSweepReport werner_equivalence_sweep(int d, const std::vector<double>& alpha_grid,
                                           int threads = 0);

struct WernerR3Witness {
    double alpha = 0.0;
    double p3 = 0.0; // closed-form PT moment, 0 < p3
    double s3 = 0.0; // closed-form Tr(rho^3), p3 < s3
};

// Scans 100 grid points of [1/2, 1/2 + 1/(2d)) -- all separable Werner
// states -- for one with R3 > 0 (0 < p3 < s3), demonstrating that R3 is not
// an entanglement monotone. Returns the first witness, or none.
// Errors: d < 2 -> InvalidArgumentError.
std::optional<WernerR3Witness> werner_r3_nonmonotone_check(int d);

} // namespace ptshadow
