#pragma once

#include <optional>

#include "dsloc/cds.hpp"
#include "dsloc/dataset.hpp"
#include "dsloc/descriptor_index.hpp"
#include "dsloc/matching_graph.hpp"

namespace dsloc {

enum class Method { Vote, Cds, FirstNn };

Method method_from_name(const std::string& name);
std::string method_name(Method method);

struct LocalizerConfig {
    Method method = Method::Cds;
    SelectionConfig selection;
    IndexConfig index;
    /// Loads a previously built index instead of building one; it must match
    /// the reference set.
    std::string index_path;
    MatchingGraphConfig matching;
    /// Global feature used for matching-graph edges; empty selects GPS
    /// converted to planar meters about the reference centroid.
    std::string matching_feature;
    int clusters = 3;
    SolverConfig solver;
    double support_cutoff = 1e-8;
    AlphaOptions alpha;
    /// Global features fused in the post-processing stage; empty selects
    /// every feature carried by the query record.
    std::vector<std::string> cds_features;
    std::map<std::string, double> gamma_per_feature;
    double gamma_feature_default = 128.0;
};

struct MatchOutcome {
    std::string predicted_image;  // empty when localization was not possible
    std::map<std::string, bool> flags;
    std::map<std::string, double> numbers;
};

/// Shared immutable state for localizing queries against one reference set.
class Localizer {
  public:
    Localizer(std::vector<ImageRecord> references, LocalizerConfig config);

    /// Localizes one query from its descriptors and global features alone;
    /// ground-truth GPS never enters here.
    MatchOutcome localize(const std::string& query_id,
                          const std::vector<std::vector<float>>& descriptors,
                          const GlobalFeatureMap& global_features) const;

    const ImageRecord* reference(const std::string& image_id) const;
    const DescriptorIndex& index() const { return index_; }
    const LocalizerConfig& config() const { return config_; }

  private:
    std::vector<QueryFeatureCandidates> select_candidates(
        const std::vector<std::vector<float>>& descriptors, MatchOutcome& outcome) const;

    LocalizerConfig config_;
    std::vector<ImageRecord> references_;
    std::map<std::string, const ImageRecord*> by_id_;
    std::map<std::string, std::vector<double>> matching_feature_by_id_;
    DescriptorIndex index_;
};

/// Runs the full pipeline over a query set and attaches evaluation columns
/// (predicted GPS, haversine error, 300 m failure flag).
std::vector<QueryReportLine> run_pipeline(const std::vector<ImageRecord>& references,
                                          const std::vector<ImageRecord>& queries,
                                          const LocalizerConfig& config);

std::string reports_to_jsonl(const std::vector<QueryReportLine>& reports);

/// Exhaustive first-nearest-descriptor voting; the recoverability oracle the
/// synthetic suites are checked against before any thresholds apply.
std::string exhaustive_descriptor_vote(const std::vector<ImageRecord>& references,
                                       const ImageRecord& query);

}  // namespace dsloc
