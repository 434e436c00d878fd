#include "dsloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dsloc {

namespace {

std::string vote_argmax(const std::map<std::string, int>& votes, bool& tie) {
    std::string best_id;
    int best = 0;
    tie = false;
    for (const auto& [id, count] : votes) {
        if (count > best) {
            best_id = id;
            best = count;
            tie = false;
        } else if (count == best) {
            tie = true;
        }
    }
    return best_id;
}

}  // namespace

Method method_from_name(const std::string& name) {
    if (name == "vote") return Method::Vote;
    if (name == "cds") return Method::Cds;
    if (name == "firstnn") return Method::FirstNn;
    throw std::runtime_error("unknown method: " + name + " (expected vote, cds or firstnn)");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::Vote: return "vote";
        case Method::Cds: return "cds";
        case Method::FirstNn: return "firstnn";
    }
    return "?";
}

namespace {

std::vector<LocalDescriptor> flatten_descriptors(const std::vector<ImageRecord>& references) {
    if (references.empty()) throw SchemaError("Localizer: empty reference set");
    std::vector<LocalDescriptor> flat;
    for (const auto& r : references) {
        int feature_id = 0;
        for (const auto& d : r.local_descriptors) flat.push_back({d, r.image_id, feature_id++});
    }
    if (flat.empty()) throw SchemaError("Localizer: references carry no local descriptors");
    return flat;
}

DescriptorIndex make_index(const std::vector<ImageRecord>& references,
                           const LocalizerConfig& config) {
    std::vector<LocalDescriptor> flat = flatten_descriptors(references);
    if (config.index_path.empty()) return DescriptorIndex::build(std::move(flat), config.index);
    DescriptorIndex loaded = DescriptorIndex::load(config.index_path);
    if (loaded.size() != static_cast<int>(flat.size()) ||
        loaded.dimension() != static_cast<int>(flat.front().values.size()))
        throw SchemaError("Localizer: index file " + config.index_path +
                          " does not match the reference set (" + std::to_string(loaded.size()) +
                          " vs " + std::to_string(flat.size()) + " descriptors)");
    return loaded;
}

}  // namespace

Localizer::Localizer(std::vector<ImageRecord> references, LocalizerConfig config)
    : config_(std::move(config)),
      references_(std::move(references)),
      index_(make_index(references_, config_)) {
    config_.selection.validate();
    for (const auto& r : references_) by_id_[r.image_id] = &r;

    if (config_.matching_feature.empty()) {
        std::vector<GpsCoordinate> coords;
        coords.reserve(references_.size());
        for (const auto& r : references_) coords.push_back(r.gps);
        const PlanarProjection projection = PlanarProjection::around_centroid(coords);
        for (const auto& r : references_) {
            const PlanarPoint p = projection.to_meters(r.gps);
            matching_feature_by_id_[r.image_id] = {p.x_m, p.y_m};
        }
    } else {
        for (const auto& r : references_) {
            const auto it = r.global_features.find(config_.matching_feature);
            if (it == r.global_features.end())
                throw SchemaError("Localizer: reference " + r.image_id + " lacks global feature " +
                                  config_.matching_feature);
            matching_feature_by_id_[r.image_id] = it->second;
        }
    }
}

const ImageRecord* Localizer::reference(const std::string& image_id) const {
    const auto it = by_id_.find(image_id);
    return it == by_id_.end() ? nullptr : it->second;
}

std::vector<QueryFeatureCandidates> Localizer::select_candidates(
    const std::vector<std::vector<float>>& descriptors, MatchOutcome& outcome) const {
    std::vector<QueryFeatureCandidates> selected;
    int pruned = 0;
    for (size_t i = 0; i < descriptors.size(); ++i) {
        LocalDescriptor query_desc{descriptors[i], "", static_cast<int>(i)};
        const NeighborList nn =
            index_.knn(query_desc, config_.selection.max_pool, static_cast<int>(i));
        if (nn.neighbors.empty()) continue;
        const PruneDecision decision = prune_query_feature(nn, config_.selection.beta);
        if (!decision.keep) {
            ++pruned;
            continue;
        }
        QueryFeatureCandidates qf;
        qf.query_feature_id = static_cast<int>(i);
        qf.query_descriptor = std::move(query_desc);
        qf.selected = dynamic_nn_select(nn, config_.selection.theta);
        selected.push_back(std::move(qf));
    }
    outcome.numbers["pruned_features"] = pruned;
    outcome.numbers["surviving_features"] = static_cast<double>(selected.size());
    return selected;
}

MatchOutcome Localizer::localize(const std::string& query_id,
                                 const std::vector<std::vector<float>>& descriptors,
                                 const GlobalFeatureMap& global_features) const {
    MatchOutcome outcome;
    outcome.flags["cds_bypassed"] = config_.method != Method::Cds;
    outcome.flags["insufficient_features"] = false;
    outcome.flags["tie"] = false;

    const std::vector<QueryFeatureCandidates> selected = select_candidates(descriptors, outcome);
    if (selected.size() < 2) {
        outcome.flags["insufficient_features"] = true;
        return outcome;
    }

    if (config_.method == Method::FirstNn) {
        std::map<std::string, int> votes;
        for (const auto& qf : selected) votes[qf.selected.front().descriptor.parent_image] += 1;
        bool tie = false;
        outcome.predicted_image = vote_argmax(votes, tie);
        outcome.flags["tie"] = tie;
        return outcome;
    }

    const GlobalAccessor psi = [this](const std::string& image_id) {
        return matching_feature_by_id_.at(image_id);
    };
    const MatchingGraph graph = build_matching_graph(selected, psi, config_.matching);
    const FeatureMatchResult matches =
        match_features(graph, config_.clusters, config_.solver, config_.support_cutoff);
    outcome.numbers["clusters"] = static_cast<double>(matches.clusters.size());
    outcome.numbers["graph_nodes"] = static_cast<double>(graph.nodes.size());

    if (config_.method == Method::Vote) {
        const VoteOutcome vote = vote_localize(matches);
        outcome.predicted_image = vote.image_id;
        outcome.flags["tie"] = vote.tie;
        outcome.numbers["votes"] = vote.votes;
        return outcome;
    }

    // Constrained dominant-set stage over the matched reference images.
    std::vector<std::string> matched_ids;
    for (const auto& [id, count] : matches.votes) matched_ids.push_back(id);

    if (matched_ids.size() < 2) {
        outcome.predicted_image = matched_ids.front();
        outcome.flags["single_matched_image"] = true;
        return outcome;
    }

    std::vector<std::string> feature_names = config_.cds_features;
    if (feature_names.empty())
        for (const auto& [name, values] : global_features) feature_names.push_back(name);
    if (feature_names.empty())
        throw SchemaError("localize: query " + query_id + " carries no global features for fusion");

    std::vector<std::pair<std::string, GlobalFeatureMap>> matched_features;
    std::map<std::string, GlobalFeatureMap> reference_features;
    for (const std::string& id : matched_ids) {
        const ImageRecord* ref = reference(id);
        if (ref == nullptr) throw SchemaError("localize: unknown reference image " + id);
        matched_features.emplace_back(id, ref->global_features);
        reference_features[id] = ref->global_features;
    }

    const FeatureWeighting weights =
        feature_weights(global_features, matched_features, feature_names);
    for (size_t i = 0; i < weights.names.size(); ++i) {
        outcome.numbers["weight_" + weights.names[i]] = weights.weights[i];
        if (weights.degenerate[i]) outcome.flags["degenerate_feature_" + weights.names[i]] = true;
    }

    const CdsGraph cds_graph =
        build_cds_graph(query_id, global_features, matches, graph, weights, reference_features,
                        config_.gamma_per_feature, config_.gamma_feature_default);
    const double alpha = alpha_bound(cds_graph.bhat, cds_graph.query_index, config_.alpha);
    const CdsSolution solution =
        constrained_dominant_set(cds_graph, alpha, config_.solver, config_.support_cutoff);
    const BestMatch best = best_match(cds_graph, solution);

    outcome.numbers["alpha"] = alpha;
    outcome.flags["no_match"] = best.no_match;
    outcome.flags["low_confidence"] = best.low_confidence;
    outcome.flags["tie"] = best.tie;
    for (const auto& [node, weight] : solution.membership) {
        if (node == cds_graph.query_index) continue;
        auto& best_of_image = outcome.numbers["membership_" + cds_graph.nodes[node].image_id];
        best_of_image = std::max(best_of_image, weight);
    }
    if (!best.no_match) {
        outcome.predicted_image = best.image_id;
        outcome.numbers["membership"] = best.score;
    }
    return outcome;
}

std::vector<QueryReportLine> run_pipeline(const std::vector<ImageRecord>& references,
                                          const std::vector<ImageRecord>& queries,
                                          const LocalizerConfig& config) {
    Localizer localizer(references, config);
    std::vector<QueryReportLine> reports;
    reports.reserve(queries.size());
    for (const auto& query : queries) {
        const MatchOutcome outcome =
            localizer.localize(query.image_id, query.local_descriptors, query.global_features);
        QueryReportLine line;
        line.query_id = query.image_id;
        line.method = method_name(config.method);
        line.flags = outcome.flags;
        line.numbers = outcome.numbers;
        line.predicted_image = outcome.predicted_image;
        if (outcome.predicted_image.empty()) {
            line.error_m = -1.0;
            line.failure = true;
        } else {
            const ImageRecord* ref = localizer.reference(outcome.predicted_image);
            line.predicted_gps = ref->gps;
            line.error_m = haversine_m(ref->gps, query.gps);
            line.failure = line.error_m > 300.0;
        }
        reports.push_back(std::move(line));
    }
    return reports;
}

std::string reports_to_jsonl(const std::vector<QueryReportLine>& reports) {
    std::ostringstream out;
    for (const auto& line : reports) out << report_line_to_json(line) << '\n';
    return out.str();
}

std::string exhaustive_descriptor_vote(const std::vector<ImageRecord>& references,
                                       const ImageRecord& query) {
    std::map<std::string, int> votes;
    for (const auto& qd : query.local_descriptors) {
        double best = std::numeric_limits<double>::infinity();
        std::string best_image;
        for (const auto& ref : references) {
            for (const auto& rd : ref.local_descriptors) {
                double acc = 0.0;
                for (size_t i = 0; i < qd.size(); ++i) {
                    const double d = static_cast<double>(qd[i]) - static_cast<double>(rd[i]);
                    acc += d * d;
                }
                if (acc < best || (acc == best && ref.image_id < best_image)) {
                    best = acc;
                    best_image = ref.image_id;
                }
            }
        }
        if (!best_image.empty()) votes[best_image] += 1;
    }
    bool tie = false;
    return vote_argmax(votes, tie);
}

}  // namespace dsloc
