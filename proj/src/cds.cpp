#include "dsloc/cds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsloc {

namespace {

double feature_distance(const GlobalFeatureMap& a, const GlobalFeatureMap& b,
                        const std::string& name) {
    const auto ia = a.find(name);
    const auto ib = b.find(name);
    if (ia == a.end() || ib == b.end())
        throw ContractViolation("global feature missing: " + name);
    if (ia->second.size() != ib->second.size())
        throw ContractViolation("global feature dimension mismatch: " + name);
    double acc = 0.0;
    for (size_t i = 0; i < ia->second.size(); ++i) {
        const double d = ia->second[i] - ib->second[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double gamma_for(const std::map<std::string, double>& gammas, const std::string& name,
                 double fallback) {
    const auto it = gammas.find(name);
    return it == gammas.end() ? fallback : it->second;
}

}  // namespace

double FeatureWeighting::weight_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return weights[i];
    throw ContractViolation("FeatureWeighting: unknown feature " + name);
}

double area_under_curve(std::vector<double> normalized_scores) {
    if (normalized_scores.size() < 2)
        throw ContractViolation("area_under_curve: need at least 2 scores");
    std::sort(normalized_scores.begin(), normalized_scores.end());
    const size_t n = normalized_scores.size();
    const double step = 1.0 / static_cast<double>(n - 1);
    double area = 0.0;
    for (size_t i = 0; i + 1 < n; ++i)
        area += 0.5 * (normalized_scores[i] + normalized_scores[i + 1]) * step;
    return area;
}

FeatureWeighting feature_weights(const GlobalFeatureMap& query,
                                 const std::vector<std::pair<std::string, GlobalFeatureMap>>& matched,
                                 const std::vector<std::string>& feature_names,
                                 double area_floor) {
    if (matched.size() < 2)
        throw ContractViolation("feature_weights: need at least 2 matched references");
    if (feature_names.empty()) throw ContractViolation("feature_weights: no features named");

    FeatureWeighting out;
    out.names = feature_names;
    for (const std::string& name : feature_names) {
        std::vector<double> distances;
        distances.reserve(matched.size());
        for (const auto& [id, features] : matched)
            distances.push_back(feature_distance(query, features, name));
        const auto [lo, hi] = std::minmax_element(distances.begin(), distances.end());
        if (*hi == *lo) {
            out.areas.push_back(area_floor);
            out.degenerate.push_back(true);
            continue;
        }
        for (double& d : distances) d = (d - *lo) / (*hi - *lo);
        out.areas.push_back(std::max(area_under_curve(std::move(distances)), area_floor));
        out.degenerate.push_back(false);
    }

    double inv_sum = 0.0;
    for (double a : out.areas) inv_sum += 1.0 / a;
    for (double a : out.areas) out.weights.push_back((1.0 / a) / inv_sum);
    return out;
}

double fused_global_similarity(const GlobalFeatureMap& a, const GlobalFeatureMap& b,
                               const FeatureWeighting& weights,
                               const std::map<std::string, double>& gamma_per_feature,
                               double gamma_default) {
    double similarity = 0.0;
    for (size_t i = 0; i < weights.names.size(); ++i) {
        const double d = feature_distance(a, b, weights.names[i]);
        const double gamma = gamma_for(gamma_per_feature, weights.names[i], gamma_default);
        similarity += weights.weights[i] * std::exp(-(d * d) / (2.0 * gamma * gamma));
    }
    // Kernel underflow floors at the smallest normal value to stay in (0, 1].
    return std::max(similarity, std::numeric_limits<double>::min());
}

CdsGraph build_cds_graph(const std::string& query_id, const GlobalFeatureMap& query_features,
                         const FeatureMatchResult& matches, const MatchingGraph& graph,
                         const FeatureWeighting& weights,
                         const std::map<std::string, GlobalFeatureMap>& reference_features,
                         const std::map<std::string, double>& gamma_per_feature,
                         double gamma_default) {
    if (matches.clusters.empty()) throw ContractViolation("build_cds_graph: no clusters");

    std::vector<CdsNode> nodes;
    nodes.push_back({true, query_id, 0, -1});
    for (const auto& cluster : matches.clusters)
        for (int member : cluster.support_set.members())
            nodes.push_back({false, graph.nodes[member].parent_image, cluster.rank, member});

    const int total = static_cast<int>(nodes.size());
    AffinityMatrix bhat(total);

    // Query rows: fused global similarity to every matched feature's image.
    for (int j = 1; j < total; ++j) {
        const auto it = reference_features.find(nodes[j].image_id);
        if (it == reference_features.end())
            throw ContractViolation("build_cds_graph: no global features for image " +
                                    nodes[j].image_id);
        bhat.set(0, j,
                 fused_global_similarity(query_features, it->second, weights, gamma_per_feature,
                                         gamma_default));
    }

    // Within-cluster blocks: payoff submatrix normalized by its own maximum.
    for (const auto& cluster : matches.clusters) {
        const auto& members = cluster.support_set.members();
        double max_entry = 0.0;
        for (int a : members)
            for (int b : members) max_entry = std::max(max_entry, matches.payoff(a, b));
        if (!(max_entry > 0.0)) continue;

        // Locate the cds node index of each member of this cluster.
        std::map<int, int> node_of;
        for (int idx = 1; idx < total; ++idx)
            if (nodes[idx].cluster_rank == cluster.rank) node_of[nodes[idx].matching_node_index] = idx;
        for (size_t a = 0; a < members.size(); ++a)
            for (size_t b = a + 1; b < members.size(); ++b)
                bhat.set(node_of.at(members[a]), node_of.at(members[b]),
                         matches.payoff(members[a], members[b]) / max_entry);
    }

    return CdsGraph{std::move(nodes), std::move(bhat), 0};
}

double alpha_bound(const AffinityMatrix& bhat, const NodeSet& query_set,
                   const AlphaOptions& opts) {
    const int n = bhat.size();
    if (query_set.empty()) throw ContractViolation("alpha_bound: empty query set");
    for (int q : query_set.members())
        if (q < 0 || q >= n) throw ContractViolation("alpha_bound: query index out of range");
    const auto is_query = [&](int i) { return query_set.contains(i); };

    double gershgorin = 0.0;
    for (int i = 0; i < n; ++i) {
        if (is_query(i)) continue;
        double row = 0.0;
        for (int j = 0; j < n; ++j)
            if (!is_query(j)) row += std::abs(bhat(i, j));
        gershgorin = std::max(gershgorin, row);
    }

    double bound = gershgorin;
    if (opts.power_iteration && gershgorin > 0.0 && n > 1) {
        // Power iteration on the off-query principal submatrix. The iterate
        // stays nonnegative, so the Rayleigh quotient approaches the
        // dominant eigenvalue from below; the margin covers the remainder.
        std::vector<double> v(n, 0.0), w(n, 0.0);
        for (int i = 0; i < n; ++i)
            if (!is_query(i)) v[i] = 1.0;
        double lambda = 0.0;
        for (int step = 0; step < opts.power_steps; ++step) {
            for (int i = 0; i < n; ++i) {
                if (is_query(i)) {
                    w[i] = 0.0;
                    continue;
                }
                double acc = 0.0;
                for (int j = 0; j < n; ++j)
                    if (!is_query(j)) acc += bhat(i, j) * v[j];
                w[i] = acc;
            }
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0) {
                lambda = 0.0;
                break;
            }
            lambda = 0.0;
            for (int i = 0; i < n; ++i) {
                v[i] = w[i] / norm;
            }
            for (int i = 0; i < n; ++i) {
                if (is_query(i)) continue;
                double acc = 0.0;
                for (int j = 0; j < n; ++j)
                    if (!is_query(j)) acc += bhat(i, j) * v[j];
                lambda += v[i] * acc;
            }
        }
        if (lambda > 0.0) bound = std::min(bound, lambda);
    }

    return std::max((1.0 + opts.margin) * bound, opts.floor);
}

double alpha_bound(const AffinityMatrix& bhat, int query_index, const AlphaOptions& opts) {
    return alpha_bound(bhat, NodeSet{query_index}, opts);
}

CdsSolution constrained_dominant_set(const CdsGraph& graph, double alpha, const SimplexVector& x0,
                                     const SolverConfig& config, double support_cutoff) {
    if (!(alpha > 0.0)) throw ContractViolation("constrained_dominant_set: alpha must be positive");
    PayoffMatrix penalized = PayoffMatrix::from_affinity(graph.bhat);
    for (int i = 0; i < penalized.size(); ++i)
        if (i != graph.query_index) penalized.add_diagonal(i, -alpha);

    const EquilibriumResult eq = find_equilibrium(penalized, x0, config);
    if (!eq.converged)
        throw SolverError("constrained_dominant_set: equilibrium search did not converge (residual " +
                          std::to_string(eq.residual) + ")");

    CdsSolution solution{eq.x, alpha, {}, eq.converged};
    const NodeSet sup = support(eq.x, support_cutoff);
    for (int i : sup.members()) solution.membership[i] = eq.x[i];
    if (!sup.contains(graph.query_index))
        throw SolverError(
            "constrained_dominant_set: support excludes the query despite a valid alpha; "
            "support size " +
            std::to_string(sup.size()) + ", alpha " + std::to_string(alpha));
    return solution;
}

CdsSolution constrained_dominant_set(const CdsGraph& graph, double alpha,
                                     const SolverConfig& config, double support_cutoff) {
    return constrained_dominant_set(graph, alpha,
                                    SimplexVector::barycenter(static_cast<int>(graph.nodes.size())),
                                    config, support_cutoff);
}

BestMatch best_match(const CdsGraph& graph, const CdsSolution& solution) {
    BestMatch best;
    best.no_match = true;
    for (const auto& [node, weight] : solution.membership) {
        if (node == graph.query_index) continue;
        const std::string& image = graph.nodes[node].image_id;
        if (best.no_match) {
            best.image_id = image;
            best.score = weight;
            best.no_match = false;
        } else if (weight > best.score) {
            best.image_id = image;
            best.score = weight;
            best.tie = false;
        } else if (weight == best.score && image != best.image_id) {
            best.tie = true;
            if (image < best.image_id) best.image_id = image;
        }
    }
    if (!best.no_match) best.low_confidence = best.score < 1e-3;
    return best;
}

}  // namespace dsloc
