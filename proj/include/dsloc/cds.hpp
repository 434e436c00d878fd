#pragma once

#include <map>
#include <string>
#include <vector>

#include "dsloc/matching_graph.hpp"
#include "dsloc/stqp.hpp"
#include "dsloc/types.hpp"

namespace dsloc {

using GlobalFeatureMap = std::map<std::string, std::vector<double>>;

struct FeatureWeighting {
    std::vector<std::string> names;
    std::vector<double> areas;    // area under the sorted, min-max normalized distance curve
    std::vector<double> weights;  // proportional to 1/area, sums to 1
    std::vector<bool> degenerate;

    double weight_of(const std::string& name) const;
};

/// Trapezoidal area under an already-normalized score curve, sorted
/// ascending over a unit abscissa.
double area_under_curve(std::vector<double> normalized_scores);

/// Rates each global feature by how well it separates the query from the
/// matched reference images: flat distance profiles cover a large area and
/// get a small weight. A feature whose distances are all identical is
/// floored (it then dominates the weights) and flagged for review.
FeatureWeighting feature_weights(const GlobalFeatureMap& query,
                                 const std::vector<std::pair<std::string, GlobalFeatureMap>>& matched,
                                 const std::vector<std::string>& feature_names,
                                 double area_floor = 1e-6);

/// Weighted sum of per-feature Gaussian similarities; in (0, 1].
double fused_global_similarity(const GlobalFeatureMap& a, const GlobalFeatureMap& b,
                               const FeatureWeighting& weights,
                               const std::map<std::string, double>& gamma_per_feature,
                               double gamma_default = 128.0);

struct CdsNode {
    bool is_query = false;
    std::string image_id;
    int cluster_rank = 0;        // which extracted set the node came from (1-based)
    int matching_node_index = -1;  // index into the matching graph, -1 for the query
};

/// Query-anchored graph: the query connects to every matched feature via
/// fused global similarity; features within one extracted set keep their
/// max-normalized payoff affinity; features of different sets are not
/// connected.
struct CdsGraph {
    std::vector<CdsNode> nodes;  // node 0 is the query
    AffinityMatrix bhat;
    int query_index = 0;
};

CdsGraph build_cds_graph(const std::string& query_id, const GlobalFeatureMap& query_features,
                         const FeatureMatchResult& matches, const MatchingGraph& graph,
                         const FeatureWeighting& weights,
                         const std::map<std::string, GlobalFeatureMap>& reference_features,
                         const std::map<std::string, double>& gamma_per_feature,
                         double gamma_default = 128.0);

struct AlphaOptions {
    double margin = 0.1;
    bool power_iteration = false;  // tighten the Gershgorin bound when enabled
    int power_steps = 50;
    double floor = 1e-6;
};

/// alpha = (1 + margin) * U with U an upper bound on the largest eigenvalue
/// of bhat restricted to the non-query nodes (Gershgorin row sums, optionally
/// tightened by power iteration). The pipeline anchors on a single query
/// node; the set form exists for multi-query graphs.
double alpha_bound(const AffinityMatrix& bhat, const NodeSet& query_set,
                   const AlphaOptions& opts = {});
double alpha_bound(const AffinityMatrix& bhat, int query_index, const AlphaOptions& opts = {});

struct CdsSolution {
    SimplexVector x;
    double alpha = 0.0;
    std::map<int, double> membership;  // support node -> weight
    bool converged = false;
};

/// Maximizes x^T (bhat - alpha I_notQ) x over the simplex. With alpha above
/// the eigenvalue bound the support provably contains the query; violating
/// that is reported as a solver error.
CdsSolution constrained_dominant_set(const CdsGraph& graph, double alpha,
                                     const SimplexVector& x0, const SolverConfig& config = {},
                                     double support_cutoff = 1e-8);
CdsSolution constrained_dominant_set(const CdsGraph& graph, double alpha,
                                     const SolverConfig& config = {},
                                     double support_cutoff = 1e-8);

struct BestMatch {
    std::string image_id;
    double score = 0.0;
    bool tie = false;
    bool no_match = false;        // support contained the query only
    bool low_confidence = false;  // strongest non-query membership below 1e-3
};

/// The parent image of the strongest non-query support node.
BestMatch best_match(const CdsGraph& graph, const CdsSolution& solution);

}  // namespace dsloc
