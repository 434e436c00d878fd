#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dsloc/matching_graph.hpp"

using namespace dsloc;

namespace {

LocalDescriptor make_descriptor(std::vector<float> values, std::string image, int feature = 0) {
    return {std::move(values), std::move(image), feature};
}

CandidateNode make_candidate(int query_feature, const std::string& image) {
    CandidateNode node;
    node.query_feature_id = query_feature;
    node.parent_image = image;
    node.descriptor = make_descriptor({0.0f}, image);
    node.zeta = 1.0;
    return node;
}

// Planar coordinates per image id, used as the global feature.
GlobalAccessor planar_psi(std::map<std::string, std::vector<double>> positions) {
    return [positions = std::move(positions)](const std::string& id) { return positions.at(id); };
}

QueryFeatureCandidates feature_with(int id, std::vector<float> query_values,
                                    std::vector<std::pair<std::string, std::vector<float>>> refs) {
    QueryFeatureCandidates qf;
    qf.query_feature_id = id;
    qf.query_descriptor = make_descriptor(query_values, "");
    int rank = 0;
    for (auto& [image, values] : refs) {
        LocalDescriptor d = make_descriptor(values, image, rank);
        const double dist = descriptor_distance(qf.query_descriptor, d);
        qf.selected.push_back({std::move(d), dist});
        ++rank;
    }
    return qf;
}

}  // namespace

TEST_CASE("edge_weight") {
    const GlobalAccessor psi = planar_psi({{"a", {0.0, 0.0}}, {"b", {0.0, 0.0}}, {"c", {12.0, 0.0}},
                                           {"far", {2.0 * 128.0, 0.0}}});

    // Identical parent features give similarity one.
    CHECK(edge_weight(make_candidate(0, "a"), make_candidate(1, "b"), psi, 128.0) ==
          doctest::Approx(1.0));

    // Distance of two bandwidths: exp(-2).
    CHECK(edge_weight(make_candidate(0, "a"), make_candidate(1, "far"), psi, 128.0) ==
          doctest::Approx(std::exp(-2.0)));

    // Neighboring street-view placemarks, 12 m apart: exp(-144/32768).
    CHECK(edge_weight(make_candidate(0, "a"), make_candidate(1, "c"), psi, 128.0) ==
          doctest::Approx(std::exp(-144.0 / 32768.0)).epsilon(1e-12));
    CHECK(edge_weight(make_candidate(0, "a"), make_candidate(1, "c"), psi, 128.0) ==
          doctest::Approx(0.995615).epsilon(1e-5));

    // Candidates of the same query feature are never connected.
    CHECK_THROWS_AS(edge_weight(make_candidate(3, "a"), make_candidate(3, "b"), psi, 128.0),
                    ContractViolation);
}

TEST_CASE("build_matching_graph") {
    const GlobalAccessor psi =
        planar_psi({{"a", {0.0, 0.0}}, {"b", {5.0, 0.0}}, {"c", {9.0, 3.0}}});

    SUBCASE("two features with two candidates each give a 4-node graph") {
        const std::vector<QueryFeatureCandidates> selected = {
            feature_with(0, {1.0f}, {{"a", {1.5f}}, {"b", {2.0f}}}),
            feature_with(1, {4.0f}, {{"b", {4.5f}}, {"c", {5.0f}}}),
        };
        const MatchingGraph g = build_matching_graph(selected, psi);
        REQUIRE(g.nodes.size() == 4);

        // Node order is (query_feature_id, nn_rank).
        CHECK(g.nodes[0].query_feature_id == 0);
        CHECK(g.nodes[0].nn_rank == 0);
        CHECK(g.nodes[3].query_feature_id == 1);
        CHECK(g.nodes[3].nn_rank == 1);

        int nonzero = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                if (g.affinity(i, j) != 0.0) ++nonzero;
        CHECK(nonzero == 8);  // 4 cross pairs, counted both ways

        // Same-feature blocks are exactly zero, cross entries in (0, 1].
        CHECK(g.affinity(0, 1) == 0.0);
        CHECK(g.affinity(2, 3) == 0.0);
        for (int i = 0; i < 2; ++i)
            for (int j = 2; j < 4; ++j) {
                CHECK(g.affinity(i, j) > 0.0);
                CHECK(g.affinity(i, j) <= 1.0);
            }
    }

    SUBCASE("a single query feature cannot be localized") {
        const std::vector<QueryFeatureCandidates> selected = {
            feature_with(0, {1.0f}, {{"a", {1.5f}}, {"b", {2.0f}}}),
        };
        CHECK_THROWS_AS(build_matching_graph(selected, psi), NonClusterInput);
    }

    SUBCASE("affinities and node scores match an independent recomputation") {
        const std::vector<QueryFeatureCandidates> selected = {
            feature_with(0, {1.0f, 0.0f}, {{"a", {1.5f, 0.5f}}, {"c", {2.0f, 1.0f}}}),
            feature_with(1, {4.0f, 1.0f}, {{"b", {4.25f, 1.25f}}}),
            feature_with(2, {9.0f, 9.0f}, {{"c", {8.0f, 8.0f}}}),
        };
        MatchingGraphConfig config;
        config.gamma_local = 2.0;
        config.gamma_global = 7.0;
        const MatchingGraph g = build_matching_graph(selected, psi, config);

        const auto gauss = [](double d, double gamma) {
            return std::exp(-d * d / (2.0 * gamma * gamma));
        };
        for (size_t i = 0; i < g.nodes.size(); ++i) {
            // zeta recomputed from the stored descriptors.
            const auto& node = g.nodes[i];
            const auto& qf = selected[node.query_feature_id];
            const double d = descriptor_distance(qf.query_descriptor, node.descriptor);
            CHECK(std::abs(g.scores[static_cast<int>(i)] - gauss(d, config.gamma_local)) <= 1e-12);

            for (size_t j = 0; j < g.nodes.size(); ++j) {
                if (i == j) continue;
                const auto& other = g.nodes[j];
                double expected = 0.0;
                if (node.query_feature_id != other.query_feature_id) {
                    double acc = 0.0;
                    const auto pa = psi(node.parent_image);
                    const auto pb = psi(other.parent_image);
                    for (size_t k = 0; k < pa.size(); ++k) acc += (pa[k] - pb[k]) * (pa[k] - pb[k]);
                    expected = gauss(std::sqrt(acc), config.gamma_global);
                }
                CHECK(std::abs(g.affinity(static_cast<int>(i), static_cast<int>(j)) - expected) <=
                      1e-12);
            }
        }
    }

    SUBCASE("construction is deterministic") {
        const std::vector<QueryFeatureCandidates> selected = {
            feature_with(0, {1.0f}, {{"a", {1.5f}}, {"b", {2.0f}}}),
            feature_with(1, {4.0f}, {{"b", {4.5f}}, {"c", {5.0f}}}),
        };
        const MatchingGraph g1 = build_matching_graph(selected, psi);
        const MatchingGraph g2 = build_matching_graph(selected, psi);
        CHECK(g1.affinity.data() == g2.affinity.data());
        CHECK(g1.scores.values() == g2.scores.values());
    }
}

TEST_CASE("match_features on planted scenarios") {
    SUBCASE("true image with mutually close features wins the first cluster") {
        // Five query features whose best candidates all come from image X
        // (tight global positions); distractor candidates sit far apart.
        std::map<std::string, std::vector<double>> positions{{"X", {0.0, 0.0}}};
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> far(400.0, 2000.0);
        std::vector<QueryFeatureCandidates> selected;
        for (int i = 0; i < 5; ++i) {
            const std::string distractor = "d" + std::to_string(i);
            positions[distractor] = {far(rng), far(rng)};
            QueryFeatureCandidates qf = feature_with(
                i, {static_cast<float>(i), 0.0f},
                {{"X", {static_cast<float>(i), 10.0f}}, {distractor, {static_cast<float>(i), 90.0f}}});
            selected.push_back(std::move(qf));
        }
        const MatchingGraph g = build_matching_graph(selected, planar_psi(positions));
        const FeatureMatchResult result = match_features(g, 3);
        REQUIRE(!result.clusters.empty());

        std::map<std::string, int> first_cluster_votes;
        for (int node : result.clusters[0].support_set.members())
            first_cluster_votes[g.nodes[node].parent_image] += 1;
        std::string best;
        int best_count = 0;
        for (const auto& [image, count] : first_cluster_votes)
            if (count > best_count) {
                best = image;
                best_count = count;
            }
        CHECK(best == "X");

        // At most one candidate per query feature inside each support.
        for (const auto& cluster : result.clusters) {
            std::set<int> seen;
            for (int node : cluster.support_set.members())
                CHECK(seen.insert(g.nodes[node].query_feature_id).second);
        }
    }

    SUBCASE("identical candidates from one image form a uniform cluster") {
        const std::vector<QueryFeatureCandidates> selected = {
            feature_with(0, {1.0f}, {{"X", {1.0f}}}),
            feature_with(1, {1.0f}, {{"X", {1.0f}}}),
            feature_with(2, {1.0f}, {{"X", {1.0f}}}),
        };
        const MatchingGraph g =
            build_matching_graph(selected, planar_psi({{"X", {0.0, 0.0}}}));
        const FeatureMatchResult result = match_features(g, 3);
        REQUIRE(result.clusters.size() == 1);
        CHECK(result.clusters[0].support_set.size() == 3);
        for (const auto& [node, weight] : result.clusters[0].membership)
            CHECK(weight == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
        CHECK(result.votes.at("X") == 3);
    }
}

TEST_CASE("node-score scale feeds the homogenized payoff") {
    const GlobalAccessor psi = planar_psi({{"a", {0.0, 0.0}}, {"b", {5.0, 0.0}}});
    const std::vector<QueryFeatureCandidates> selected = {
        feature_with(0, {1.0f}, {{"a", {1.5f}}}),
        feature_with(1, {4.0f}, {{"b", {4.5f}}}),
    };
    MatchingGraphConfig scaled;
    scaled.node_score_scale = 2.0;
    const MatchingGraph plain = build_matching_graph(selected, psi);
    const MatchingGraph doubled = build_matching_graph(selected, psi, scaled);
    const FeatureMatchResult r1 = match_features(plain, 1);
    const FeatureMatchResult r2 = match_features(doubled, 1);
    // B(i,i) = 2 * scale * zeta(i); the affinity part is unscaled.
    for (int i = 0; i < 2; ++i) {
        CHECK(r1.payoff(i, i) == doctest::Approx(2.0 * plain.scores[i]));
        CHECK(r2.payoff(i, i) == doctest::Approx(4.0 * plain.scores[i]));
    }
    CHECK(r2.payoff(0, 1) - r1.payoff(0, 1) ==
          doctest::Approx(plain.scores[0] + plain.scores[1]));
}

TEST_CASE("vote_localize") {
    FeatureMatchResult result{{}, {}, PayoffMatrix(1), true};

    result.votes = {{"X", 5}, {"Y", 2}};
    VoteOutcome outcome = vote_localize(result);
    CHECK(outcome.image_id == "X");
    CHECK_FALSE(outcome.tie);

    result.votes = {{"X", 3}, {"Y", 3}};
    outcome = vote_localize(result);
    CHECK(outcome.image_id == "X");  // lexicographically smallest
    CHECK(outcome.tie);

    result.votes = {{"Z", 1}, {"Y", 3}, {"X", 3}};
    outcome = vote_localize(result);
    CHECK(outcome.image_id == "X");
    CHECK(outcome.tie);
}
