#pragma once

#include <functional>
#include <map>
#include <string>

#include "dsloc/descriptor_index.hpp"
#include "dsloc/stqp.hpp"
#include "dsloc/types.hpp"

namespace dsloc {

/// Returns the global descriptor of an image (the per-image feature the
/// matching edges are built from; GPS in planar meters by default).
using GlobalAccessor = std::function<std::vector<double>(const std::string& image_id)>;

/// One reference-feature candidate: the m-th nearest neighbor of one query
/// feature, scored by local-descriptor similarity.
struct CandidateNode {
    int query_feature_id = 0;
    int nn_rank = 0;  // 0-based rank within the selected list
    LocalDescriptor descriptor;
    std::string parent_image;
    double zeta = 0.0;  // exp(-d^2 / 2 gamma^2), d = query/candidate descriptor distance
};

/// Candidates surviving selection for one query feature, plus the query
/// descriptor they were matched against.
struct QueryFeatureCandidates {
    int query_feature_id = 0;
    LocalDescriptor query_descriptor;
    std::vector<NeighborEntry> selected;
};

struct MatchingGraphConfig {
    double gamma_local = 128.0;   // bandwidth of the node-score kernel
    double gamma_global = 128.0;  // bandwidth of the edge-weight kernel
    double node_score_scale = 1.0;
};

struct MatchingGraph {
    std::vector<CandidateNode> nodes;
    AffinityMatrix affinity;
    NodeScoreVector scores;
    MatchingGraphConfig config;
};

/// Gaussian similarity of two candidates' parent-image global features.
/// Candidates of the same query feature are never connected.
double edge_weight(const CandidateNode& u, const CandidateNode& v, const GlobalAccessor& psi,
                   double gamma);

/// Flattens the surviving candidates into (query_feature_id, nn_rank) order
/// and assembles the affinity matrix and node scores. Requires candidates
/// from at least two query features.
MatchingGraph build_matching_graph(const std::vector<QueryFeatureCandidates>& selected,
                                   const GlobalAccessor& psi, const MatchingGraphConfig& config = {});

struct FeatureMatchResult {
    std::vector<DominantSetResult> clusters;
    std::map<std::string, int> votes;  // image id -> matched-feature count
    PayoffMatrix payoff;               // homogenized matrix the clusters came from
    bool solver_converged = true;
};

/// Homogenizes the graph and extracts up to k dominant sets; vote counts
/// aggregate cluster members by parent image.
FeatureMatchResult match_features(const MatchingGraph& graph, int k,
                                  const SolverConfig& solver = {}, double support_cutoff = 1e-8);

struct VoteOutcome {
    std::string image_id;
    int votes = 0;
    bool tie = false;
};

/// Baseline selection: the image with the most matched features wins; ties
/// resolve to the lexicographically smallest id and are flagged.
VoteOutcome vote_localize(const FeatureMatchResult& result);

}  // namespace dsloc
