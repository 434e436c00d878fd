#include "dsloc/stqp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dsloc {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

int default_cap(int n) {
    return static_cast<int>(10.0 * n * std::log(std::max(2, n))) + 1000;
}

double residual_from_gradient(std::span<const double> x, std::span<const double> g, double f) {
    double eps = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double m = std::min(x[i], f - g[i]);
        eps += m * m;
    }
    return eps;
}

// Clamps tiny negative round-off and renormalizes so iterates stay on the
// simplex exactly.
void project_to_simplex(std::vector<double>& x) {
    double sum = 0.0;
    for (double& v : x) {
        if (v < 0.0) {
            if (v < -1e-9) throw SolverError("solver iterate left the simplex");
            v = 0.0;
        }
        sum += v;
    }
    if (sum <= 0.0) throw SolverError("solver iterate collapsed to zero");
    for (double& v : x) v /= sum;
}

struct InfectiveChoice {
    bool pure;      // pure strategy on node `index`, else co-strategy removing it
    int index;
    double score;   // (y - x)^T B x
};

std::optional<InfectiveChoice> choose_infective(std::span<const double> x,
                                                std::span<const double> g, double f) {
    const int n = static_cast<int>(x.size());
    int best = -1, worst = -1;
    double r_best = -std::numeric_limits<double>::infinity();
    double r_worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double r = g[i] - f;
        if (r > r_best) {
            r_best = r;
            best = i;
        }
        if (x[i] > 0.0 && r < r_worst) {
            r_worst = r;
            worst = i;
        }
    }
    const double pure_score = r_best;
    const double co_score = worst >= 0 ? -r_worst : 0.0;
    if (pure_score >= co_score && pure_score > 0.0)
        return InfectiveChoice{true, best, pure_score};
    if (co_score > 0.0 && x[worst] < 1.0) return InfectiveChoice{false, worst, co_score};
    return std::nullopt;
}

}  // namespace

NodeScoreVector::NodeScoreVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ContractViolation("NodeScoreVector: empty");
    for (double v : values_)
        if (!(v > 0.0) || !(v <= 1.0))
            throw ContractViolation("NodeScoreVector: values must lie in (0, 1]");
}

PayoffMatrix homogenize(const AffinityMatrix& A, std::span<const double> b) {
    const int n = A.size();
    if (static_cast<int>(b.size()) != n) throw ContractViolation("homogenize: dimension mismatch");
    for (double v : b)
        if (!std::isfinite(v)) throw ContractViolation("homogenize: non-finite score");
    PayoffMatrix B(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) B.set(i, j, A(i, j) + b[i] + b[j]);
    return B;
}

PayoffMatrix homogenize(const AffinityMatrix& A, const NodeScoreVector& b) {
    return homogenize(A, std::span<const double>(b.values()));
}

double payoff_value(const PayoffMatrix& B, const SimplexVector& x) {
    if (x.size() != B.size()) throw ContractViolation("payoff_value: dimension mismatch");
    std::vector<double> g(B.size());
    B.multiply(x.values(), g);
    return dot(x.values(), g);
}

double residual_epsilon(const PayoffMatrix& B, const SimplexVector& x) {
    if (x.size() != B.size()) throw ContractViolation("residual_epsilon: dimension mismatch");
    std::vector<double> g(B.size());
    B.multiply(x.values(), g);
    const double f = dot(x.values(), g);
    return residual_from_gradient(x.values(), g, f);
}

std::optional<SimplexVector> select_infective(const PayoffMatrix& B, const SimplexVector& x) {
    if (x.size() != B.size()) throw ContractViolation("select_infective: dimension mismatch");
    const int n = B.size();
    std::vector<double> g(n);
    B.multiply(x.values(), g);
    const double f = dot(x.values(), g);
    const auto choice = choose_infective(x.values(), g, f);
    if (!choice) return std::nullopt;
    if (choice->pure) return SimplexVector::unit(n, choice->index);
    // Co-strategy: remove the worst populated node, scale the rest back up.
    const double removed = x[choice->index];
    std::vector<double> y(x.values());
    y[choice->index] = 0.0;
    const double factor = 1.0 / (1.0 - removed);
    for (int i = 0; i < n; ++i)
        if (i != choice->index) y[i] *= factor;
    project_to_simplex(y);
    return SimplexVector(std::move(y));
}

std::string trace_to_csv(const EquilibriumResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "iteration,objective,residual,step\n";
    for (const TracePoint& p : result.trace)
        out << p.iteration << ',' << p.objective << ',' << p.residual << ',' << p.step << '\n';
    return out.str();
}

EquilibriumResult find_equilibrium(const PayoffMatrix& B, const SimplexVector& x0,
                                   const SolverConfig& config) {
    const int n = B.size();
    if (x0.size() != n) throw ContractViolation("find_equilibrium: dimension mismatch");
    if (!(config.tau > 0.0)) throw ContractViolation("find_equilibrium: tau must be positive");
    const int cap = config.max_iterations > 0 ? config.max_iterations : default_cap(n);

    std::vector<double> x = x0.values();
    std::vector<double> g(n);
    B.multiply(x, g);
    double f = dot(x, g);

    EquilibriumResult result{SimplexVector(x), 0.0, 0, 0.0, false, {}};
    int iter = 0;
    for (; iter < cap; ++iter) {
        const double eps = residual_from_gradient(x, g, f);
        if (eps <= config.tau) {
            if (config.record_trace) result.trace.push_back({iter, f, eps, 0.0});
            break;
        }
        const auto choice = choose_infective(x, g, f);
        if (!choice) {
            // No infective strategy within round-off; stop at this point.
            if (config.record_trace) result.trace.push_back({iter, f, eps, 0.0});
            break;
        }

        // g_y = B y and the quadratic forms needed for the step size, all
        // derivable from g in O(n) because y touches one coordinate.
        std::vector<double> gy(n);
        double y_gy;   // y^T B y
        double y_gx;   // y^T B x
        if (choice->pure) {
            const int i = choice->index;
            for (int j = 0; j < n; ++j) gy[j] = B(j, i);
            y_gy = B(i, i);
            y_gx = g[i];
        } else {
            const int i = choice->index;
            const double xi = x[i];
            const double factor = 1.0 / (1.0 - xi);
            for (int j = 0; j < n; ++j) gy[j] = factor * (g[j] - xi * B(j, i));
            y_gx = factor * (dot(x, g) - xi * g[i]);
            // y^T B y = factor^2 (x^T B x - 2 x_i (B x)_i + x_i^2 B_ii)
            y_gy = factor * factor * (f - 2.0 * xi * g[i] + xi * xi * B(i, i));
        }

        const double d_gx = y_gx - f;        // (y - x)^T B x
        const double d_gd = y_gy - 2.0 * y_gx + f;  // (y - x)^T B (y - x)
        double delta = 1.0;
        if (d_gd < 0.0) delta = std::min(d_gx / (-d_gd), 1.0);
        if (!(delta > 0.0) || delta > 1.0)
            throw SolverError("find_equilibrium: step size left (0, 1]");

        if (config.record_trace) result.trace.push_back({iter, f, eps, delta});

        // x <- x + delta (y - x); exact zero when a co-strategy is applied in full.
        if (choice->pure) {
            for (int j = 0; j < n; ++j) x[j] *= (1.0 - delta);
            x[choice->index] += delta;
        } else {
            const int i = choice->index;
            const double xi = x[i];
            const double factor = 1.0 / (1.0 - xi);
            for (int j = 0; j < n; ++j) x[j] = x[j] * (1.0 - delta + delta * factor);
            x[i] = delta == 1.0 ? 0.0 : xi * (1.0 - delta);
        }
        project_to_simplex(x);
        for (int j = 0; j < n; ++j) g[j] = (1.0 - delta) * g[j] + delta * gy[j];
        // Refresh the incrementally maintained gradient now and then.
        if ((iter & 0x3f) == 0x3f) B.multiply(x, g);
        f = dot(x, g);
    }

    B.multiply(x, g);
    f = dot(x, g);
    result.x = SimplexVector(x);
    result.objective = f;
    result.iterations = iter;
    // Convergence is judged on the exact residual, not the incrementally
    // maintained one.
    result.residual = residual_from_gradient(x, g, f);
    result.converged = result.residual <= config.tau;
    return result;
}

EquilibriumResult replicator_equilibrium(const PayoffMatrix& B, const SimplexVector& x0,
                                         const SolverConfig& config) {
    const int n = B.size();
    if (x0.size() != n) throw ContractViolation("replicator_equilibrium: dimension mismatch");
    if (!(config.tau > 0.0)) throw ContractViolation("replicator_equilibrium: tau must be positive");
    const int cap = config.max_iterations > 0 ? config.max_iterations : default_cap(n);

    // The multiplicative update needs nonnegative payoffs; a constant shift
    // changes neither the maximizers on the simplex nor the residual.
    double min_entry = 0.0;
    for (double v : B.data()) min_entry = std::min(min_entry, v);
    const double shift = min_entry < 0.0 ? -min_entry : 0.0;

    std::vector<double> x = x0.values();
    std::vector<double> g(n);

    EquilibriumResult result{SimplexVector(x), 0.0, 0, 0.0, false, {}};
    int iter = 0;
    for (; iter < cap; ++iter) {
        B.multiply(x, g);
        const double f = dot(x, g);
        const double eps = residual_from_gradient(x, g, f);
        if (config.record_trace) result.trace.push_back({iter, f, eps, 0.0});
        if (eps <= config.tau) break;
        const double denom = f + shift;
        if (!(denom > 0.0)) break;  // flat shifted payoff; nothing to select on
        for (int i = 0; i < n; ++i) x[i] = x[i] * (g[i] + shift) / denom;
        project_to_simplex(x);
    }

    B.multiply(x, g);
    const double f = dot(x, g);
    result.x = SimplexVector(x);
    result.objective = f;
    result.iterations = iter;
    result.residual = residual_from_gradient(x, g, f);
    result.converged = result.residual <= config.tau;
    return result;
}

std::vector<DominantSetResult> extract_dominant_sets(const PayoffMatrix& B, int k,
                                                     const SolverConfig& config,
                                                     double support_cutoff,
                                                     ExtractionDiagnostics* diagnostics) {
    if (k < 1) throw ContractViolation("extract_dominant_sets: k must be >= 1");
    const int n = B.size();
    std::vector<int> active(n);
    for (int i = 0; i < n; ++i) active[i] = i;

    std::vector<DominantSetResult> results;
    while (static_cast<int>(results.size()) < k && static_cast<int>(active.size()) >= 2) {
        const int m = static_cast<int>(active.size());
        PayoffMatrix sub(m);
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) sub.set(i, j, B(active[i], active[j]));

        EquilibriumResult eq = find_equilibrium(sub, SimplexVector::barycenter(m), config);
        if (diagnostics) {
            diagnostics->runs += 1;
            diagnostics->all_converged = diagnostics->all_converged && eq.converged;
            diagnostics->results.push_back(eq);
        }
        if (!eq.converged) break;
        if (!(eq.objective > 0.0)) break;  // no positive-weight cluster left

        const NodeSet local = support(eq.x, support_cutoff);
        if (local.empty()) break;

        DominantSetResult ds;
        ds.rank = static_cast<int>(results.size()) + 1;
        ds.objective = eq.objective;
        double mass = 0.0;
        for (int i : local.members()) mass += eq.x[i];
        std::vector<int> global_members;
        for (int i : local.members()) {
            global_members.push_back(active[i]);
            ds.membership[active[i]] = eq.x[i] / mass;
        }
        ds.support_set = NodeSet(std::move(global_members));
        results.push_back(std::move(ds));

        std::vector<int> remaining;
        for (int i = 0; i < m; ++i)
            if (!local.contains(i)) remaining.push_back(active[i]);
        active = std::move(remaining);
    }
    return results;
}

}  // namespace dsloc
