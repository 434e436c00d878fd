#include "dsloc/matching_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsloc {

namespace {

double gaussian_similarity(double distance, double gamma) {
    // Floored at the smallest normal value so scores and edges stay in
    // (0, 1] even when the kernel underflows for very distant pairs.
    return std::max(std::exp(-(distance * distance) / (2.0 * gamma * gamma)),
                    std::numeric_limits<double>::min());
}

double vector_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ContractViolation("global feature dimension mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

double edge_weight(const CandidateNode& u, const CandidateNode& v, const GlobalAccessor& psi,
                   double gamma) {
    if (u.query_feature_id == v.query_feature_id)
        throw ContractViolation("edge_weight: candidates of the same query feature are not connected");
    const double d = vector_distance(psi(u.parent_image), psi(v.parent_image));
    return gaussian_similarity(d, gamma);
}

MatchingGraph build_matching_graph(const std::vector<QueryFeatureCandidates>& selected,
                                   const GlobalAccessor& psi, const MatchingGraphConfig& config) {
    int surviving = 0;
    for (const auto& qf : selected)
        if (!qf.selected.empty()) ++surviving;
    if (surviving < 2)
        throw NonClusterInput(
            "build_matching_graph: fewer than 2 query features survived pruning; "
            "the query cannot be localized");

    std::vector<CandidateNode> nodes;
    for (const auto& qf : selected) {
        for (size_t rank = 0; rank < qf.selected.size(); ++rank) {
            const NeighborEntry& entry = qf.selected[rank];
            CandidateNode node;
            node.query_feature_id = qf.query_feature_id;
            node.nn_rank = static_cast<int>(rank);
            node.descriptor = entry.descriptor;
            node.parent_image = entry.descriptor.parent_image;
            node.zeta = gaussian_similarity(entry.distance, config.gamma_local);
            nodes.push_back(std::move(node));
        }
    }

    const int n = static_cast<int>(nodes.size());
    if (n < 2) throw NonClusterInput("build_matching_graph: fewer than 2 candidate nodes");

    // Global features are per parent image; evaluate each image once.
    std::map<std::string, std::vector<double>> features;
    for (const auto& node : nodes)
        if (!features.count(node.parent_image)) features[node.parent_image] = psi(node.parent_image);

    AffinityMatrix affinity(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (nodes[i].query_feature_id == nodes[j].query_feature_id) continue;
            const double d =
                vector_distance(features.at(nodes[i].parent_image), features.at(nodes[j].parent_image));
            affinity.set(i, j, gaussian_similarity(d, config.gamma_global));
        }
    }

    std::vector<double> zetas;
    zetas.reserve(nodes.size());
    for (const auto& node : nodes) zetas.push_back(node.zeta);

    return MatchingGraph{std::move(nodes), std::move(affinity), NodeScoreVector(std::move(zetas)),
                         config};
}

FeatureMatchResult match_features(const MatchingGraph& graph, int k, const SolverConfig& solver,
                                  double support_cutoff) {
    if (k < 1) throw ContractViolation("match_features: k must be >= 1");
    std::vector<double> scores = graph.scores.values();
    if (graph.config.node_score_scale != 1.0)
        for (double& s : scores) s *= graph.config.node_score_scale;

    FeatureMatchResult result{{}, {}, homogenize(graph.affinity, scores), true};
    ExtractionDiagnostics diag;
    result.clusters = extract_dominant_sets(result.payoff, k, solver, support_cutoff, &diag);
    result.solver_converged = diag.all_converged;
    if (result.clusters.empty()) {
        if (!diag.all_converged)
            throw SolverError("match_features: equilibrium search did not converge after " +
                              std::to_string(diag.results.empty() ? 0 : diag.results.back().iterations) +
                              " iterations");
        throw NonClusterInput("match_features: no cluster extracted from the matching graph");
    }

    for (const auto& cluster : result.clusters)
        for (int node : cluster.support_set.members())
            result.votes[graph.nodes[node].parent_image] += 1;
    return result;
}

VoteOutcome vote_localize(const FeatureMatchResult& result) {
    if (result.votes.empty()) throw ContractViolation("vote_localize: no votes");
    VoteOutcome outcome;
    for (const auto& [image, count] : result.votes) {
        if (count > outcome.votes) {
            outcome.image_id = image;
            outcome.votes = count;
            outcome.tie = false;
        } else if (count == outcome.votes) {
            outcome.tie = true;  // map order is ascending, so the smaller id is already kept
        }
    }
    return outcome;
}

}  // namespace dsloc
