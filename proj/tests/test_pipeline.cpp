#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dsloc/pipeline.hpp"
#include "dsloc/selfcheck.hpp"

using namespace dsloc;

namespace {

SyntheticCityConfig small_city_config() {
    SyntheticCityConfig config;
    config.grid_rows = 5;
    config.grid_cols = 5;
    config.descriptors_per_image = 10;
    config.query_count = 10;
    config.noise_level = 0.05;
    config.distractor_rate = 0.2;
    config.descriptor_dim = 32;
    config.seed = 3;
    return config;
}

LocalizerConfig synthetic_localizer(Method method) {
    LocalizerConfig config;
    config.method = method;
    config.gamma_per_feature = {{"global_0", 0.5}, {"global_1", 0.5}};
    return config;
}

}  // namespace

TEST_CASE("pipeline end to end on a small planted city") {
    const SyntheticCity city = generate_synthetic_city(small_city_config());

    for (Method method : {Method::Vote, Method::Cds, Method::FirstNn}) {
        CAPTURE(method_name(method));
        const auto reports = run_pipeline(city.references, city.queries, synthetic_localizer(method));
        REQUIRE(reports.size() == city.queries.size());

        int correct = 0;
        for (size_t q = 0; q < reports.size(); ++q) {
            CHECK(reports[q].method == method_name(method));
            CHECK(reports[q].flags.at("cds_bypassed") == (method != Method::Cds));
            if (reports[q].predicted_image == city.truth[q]) ++correct;
        }
        // Planted content with mild noise: everything resolves.
        CHECK(correct >= 9);
    }
}

TEST_CASE("uninformative query features are pruned before graph construction") {
    const SyntheticCity city = generate_synthetic_city(small_city_config());
    const auto reports =
        run_pipeline(city.references, city.queries, synthetic_localizer(Method::Cds));
    // Distractor descriptors have flat distance profiles; the pruning rule
    // removes them so they never vote.
    int queries_with_pruning = 0;
    for (const auto& r : reports) {
        CHECK(r.numbers.at("surviving_features") + r.numbers.at("pruned_features") <= 10);
        if (r.numbers.at("pruned_features") > 0) ++queries_with_pruning;
    }
    CHECK(queries_with_pruning >= 8);
}

TEST_CASE("reports are byte-identical across runs") {
    const SyntheticCity city = generate_synthetic_city(small_city_config());
    const LocalizerConfig config = synthetic_localizer(Method::Cds);
    const std::string a = reports_to_jsonl(run_pipeline(city.references, city.queries, config));
    const std::string b = reports_to_jsonl(run_pipeline(city.references, city.queries, config));
    CHECK(a == b);
    CHECK(!a.empty());
}

TEST_CASE("queries without enough informative features are diagnosed") {
    const SyntheticCity city = generate_synthetic_city(small_city_config());
    std::vector<ImageRecord> queries = {city.queries[0]};
    queries[0].local_descriptors.resize(1);  // one feature cannot form a graph

    const auto reports = run_pipeline(city.references, queries, synthetic_localizer(Method::Cds));
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].flags.at("insufficient_features"));
    CHECK(reports[0].predicted_image.empty());
    CHECK(reports[0].failure);
    CHECK(reports[0].error_m < 0.0);
}

TEST_CASE("tree backend plugs into the pipeline") {
    const SyntheticCity city = generate_synthetic_city(small_city_config());
    LocalizerConfig config = synthetic_localizer(Method::Vote);
    config.index.backend = IndexConfig::Backend::KMeansTree;
    const auto reports = run_pipeline(city.references, city.queries, config);
    int correct = 0;
    for (size_t q = 0; q < reports.size(); ++q)
        if (reports[q].predicted_image == city.truth[q]) ++correct;
    CHECK(correct >= 9);
}

TEST_CASE("a prebuilt index must match the reference set") {
    const SyntheticCity city = generate_synthetic_city(small_city_config());
    SyntheticCityConfig other_config = small_city_config();
    other_config.grid_rows = 3;
    other_config.seed = 99;
    const SyntheticCity other = generate_synthetic_city(other_config);

    std::vector<LocalDescriptor> flat;
    for (const auto& r : other.references) {
        int feature_id = 0;
        for (const auto& d : r.local_descriptors) flat.push_back({d, r.image_id, feature_id++});
    }
    IndexConfig tree;
    tree.backend = IndexConfig::Backend::KMeansTree;
    DescriptorIndex::build(std::move(flat), tree).save("test_mismatched_index.bin");

    LocalizerConfig config = synthetic_localizer(Method::Vote);
    config.index_path = "test_mismatched_index.bin";
    CHECK_THROWS_AS(Localizer(city.references, config), SchemaError);
    std::remove("test_mismatched_index.bin");
}

TEST_CASE("query descriptors must match the reference dimension") {
    const SyntheticCity city = generate_synthetic_city(small_city_config());
    std::vector<ImageRecord> queries = {city.queries[0]};
    for (auto& d : queries[0].local_descriptors) d.resize(16);

    save_records("test_dim_refs.jsonl", city.references, DatasetFormat::JsonLines);
    save_records("test_dim_queries.jsonl", queries, DatasetFormat::JsonLines);
    CHECK_THROWS_AS(load_dataset("test_dim_refs.jsonl", "test_dim_queries.jsonl",
                                 DatasetFormat::JsonLines),
                    SchemaError);
    std::remove("test_dim_refs.jsonl");
    std::remove("test_dim_queries.jsonl");
}

TEST_CASE("exhaustive descriptor vote recovers planted queries") {
    SyntheticCityConfig config = small_city_config();
    config.noise_level = 0.0;
    config.distractor_rate = 0.0;
    const SyntheticCity city = generate_synthetic_city(config);
    for (size_t q = 0; q < city.queries.size(); ++q)
        CHECK(exhaustive_descriptor_vote(city.references, city.queries[q]) == city.truth[q]);
}

TEST_CASE("method names round trip") {
    for (Method m : {Method::Vote, Method::Cds, Method::FirstNn})
        CHECK(method_from_name(method_name(m)) == m);
    CHECK_THROWS(method_from_name("votes"));
}
