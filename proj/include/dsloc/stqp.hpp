#pragma once

#include <map>
#include <optional>
#include <string>

#include "dsloc/types.hpp"

namespace dsloc {

/// Node-score vector for the homogenized matching problem; every value is a
/// Gaussian similarity, hence in (0, 1].
class NodeScoreVector {
  public:
    explicit NodeScoreVector(std::vector<double> values);
    int size() const { return static_cast<int>(values_.size()); }
    double operator[](int i) const { return values_[i]; }
    const std::vector<double>& values() const { return values_; }

  private:
    std::vector<double> values_;
};

/// B = A + e b^T + b e^T, so that x^T B x = x^T A x + 2 b^T x on the simplex.
/// Accepts any finite score vector; validated (0,1] scores pass through
/// NodeScoreVector::values().
PayoffMatrix homogenize(const AffinityMatrix& A, std::span<const double> b);
PayoffMatrix homogenize(const AffinityMatrix& A, const NodeScoreVector& b);

/// f(x) = x^T B x
double payoff_value(const PayoffMatrix& B, const SimplexVector& x);

/// Distance from equilibrium: sum_i min{x_i, x^T B x - (B x)_i}^2. Zero
/// exactly at Nash equilibria of the dynamics (the fixed points that admit
/// no infective strategy).
double residual_epsilon(const PayoffMatrix& B, const SimplexVector& x);

/// Returns a strategy y with (y - x)^T B x > 0 when one exists; nullopt
/// otherwise. Chooses between the best pure strategy and the co-strategy of
/// the worst populated one, whichever scores higher.
std::optional<SimplexVector> select_infective(const PayoffMatrix& B, const SimplexVector& x);

struct TracePoint {
    int iteration;
    double objective;
    double residual;
    double step;  // delta of the applied update; 0 on the final record
};

struct SolverConfig {
    double tau = 1e-7;
    /// <= 0 selects the default cap 10 * n * ln(n) + 1000.
    int max_iterations = 0;
    bool record_trace = false;
};

struct EquilibriumResult {
    SimplexVector x;
    double objective = 0.0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<TracePoint> trace;
};

/// Writes "iteration,objective,residual,step" CSV rows for a recorded trace.
std::string trace_to_csv(const EquilibriumResult& result);

/// Infection-immunization dynamics: repeatedly invade x with an infective
/// strategy, stepping by the payoff-optimal mixing weight, until the
/// residual drops to tau. Non-convergence within the iteration cap is
/// reported via converged = false with the best iterate attached.
EquilibriumResult find_equilibrium(const PayoffMatrix& B, const SimplexVector& x0,
                                   const SolverConfig& config = {});

/// Replicator dynamics x_i <- x_i (B x)_i / x^T B x as a cross-check solver.
/// Entries are shifted nonnegative internally when needed; the reported
/// objective and residual refer to the original matrix.
EquilibriumResult replicator_equilibrium(const PayoffMatrix& B, const SimplexVector& x0,
                                         const SolverConfig& config = {});

struct DominantSetResult {
    NodeSet support_set;
    std::map<int, double> membership;  // original node index -> weight, sums to 1
    double objective = 0.0;
    int rank = 0;  // 1-based extraction order
};

struct ExtractionDiagnostics {
    int runs = 0;
    bool all_converged = true;
    std::vector<EquilibriumResult> results;
};

/// Extracts up to k local maximizers by peeling: solve, record the support,
/// remove it from the graph, repeat. Stops when fewer than two nodes remain
/// or the remaining graph has no positive-objective cluster.
std::vector<DominantSetResult> extract_dominant_sets(const PayoffMatrix& B, int k = 3,
                                                     const SolverConfig& config = {},
                                                     double support_cutoff = 1e-8,
                                                     ExtractionDiagnostics* diagnostics = nullptr);

}  // namespace dsloc
