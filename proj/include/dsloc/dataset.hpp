#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsloc/geo.hpp"

namespace dsloc {

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One image with its GPS tag, precomputed global descriptors and local
/// descriptors. For query records the GPS tag is evaluation ground truth
/// and is never handed to the matcher.
struct ImageRecord {
    std::string image_id;
    GpsCoordinate gps;
    std::map<std::string, std::vector<double>> global_features;
    std::vector<std::vector<float>> local_descriptors;

    bool operator==(const ImageRecord&) const = default;
};

using ReferenceRecord = ImageRecord;
using QueryRecord = ImageRecord;

enum class DatasetFormat { JsonLines, Binary };

DatasetFormat format_from_name(const std::string& name);

/// Reads records, validating coordinate ranges, descriptor dimensions and
/// image-id uniqueness. Errors carry the offending record and field.
std::vector<ImageRecord> load_records(const std::string& path, DatasetFormat format);
void save_records(const std::string& path, const std::vector<ImageRecord>& records,
                  DatasetFormat format);

/// Loads a reference/query pair and cross-validates descriptor dimensions.
std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> load_dataset(
    const std::string& references_path, const std::string& queries_path, DatasetFormat format);

struct SyntheticCityConfig {
    int grid_rows = 10;
    int grid_cols = 10;
    double spacing_m = 12.0;
    int descriptors_per_image = 20;
    int query_count = 50;
    double noise_level = 0.10;      // relative to the descriptor component scale
    double distractor_rate = 0.30;  // fraction of query descriptors that are random
    int descriptor_dim = 128;
    GpsCoordinate base{40.0, -74.0};
    /// Tie-heavy variant: every reference gets a content twin placed half a
    /// grid away, with independent visual features, so that vote counting
    /// splits evenly between the twins.
    bool duplicate_content = false;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticCity {
    std::vector<ImageRecord> references;
    std::vector<ImageRecord> queries;
    /// Ground-truth reference image per query (same order as queries).
    std::vector<std::string> truth;
};

/// References on a GPS grid; each query clones a reference's local
/// descriptors with additive noise plus a share of random distractors.
/// Deterministic for a fixed config.
SyntheticCity generate_synthetic_city(const SyntheticCityConfig& config);

struct QueryReportLine {
    std::string query_id;
    std::string method;
    std::string predicted_image;  // empty when no prediction was possible
    GpsCoordinate predicted_gps;
    double error_m = -1.0;  // negative when no prediction was possible
    bool failure = false;   // no prediction, or error above 300 m
    std::map<std::string, bool> flags;
    std::map<std::string, double> numbers;  // alpha, feature weights, memberships
};

std::string report_line_to_json(const QueryReportLine& line);
QueryReportLine report_line_from_json(const std::string& json_line);

struct AccuracyCurve {
    std::vector<double> thresholds_m;
    std::vector<double> accuracy;  // fraction of queries localized within each threshold
};

inline const std::vector<double> kDefaultThresholdsM{10, 30, 50, 100, 150, 200, 250, 300};

/// accuracy(t) = fraction of reports with 0 <= error <= t. Monotone in t.
AccuracyCurve evaluate(const std::vector<QueryReportLine>& reports,
                       const std::vector<double>& thresholds_m = kDefaultThresholdsM);

std::string curve_to_csv(const AccuracyCurve& curve);

}  // namespace dsloc
