#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dsloc/dataset.hpp"
#include "dsloc/geo.hpp"

using namespace dsloc;

namespace {

ImageRecord sample_record(const std::string& id, double lat, double lon) {
    ImageRecord r;
    r.image_id = id;
    r.gps = {lat, lon};
    r.global_features["g0"] = {0.25, 0.5, 0.75};
    r.global_features["g1"] = {1.0};
    r.local_descriptors = {{1.0f, 2.0f, 3.0f}, {0.5f, -0.25f, 1e-3f}};
    return r;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("haversine distance") {
    CHECK(haversine_m({40.0, -74.0}, {40.0, -74.0}) == doctest::Approx(0.0));

    // One degree of longitude at the equator: 2 pi R / 360.
    CHECK(haversine_m({0.0, 0.0}, {0.0, 1.0}) == doctest::Approx(111194.9266).epsilon(1e-6));

    // Antipodal points: pi R.
    CHECK(haversine_m({0.0, 0.0}, {0.0, 180.0}) == doctest::Approx(20015086.796).epsilon(1e-6));

    CHECK(haversine_m({52.5, 13.4}, {52.6, 13.5}) > 0.0);
}

TEST_CASE("planar projection") {
    const PlanarProjection projection({40.0, -74.0});

    SUBCASE("round trip is exact") {
        const GpsCoordinate p{40.0021, -73.9987};
        const GpsCoordinate back = projection.to_gps(projection.to_meters(p));
        CHECK(back.lat_deg == doctest::Approx(p.lat_deg).epsilon(1e-12));
        CHECK(back.lon_deg == doctest::Approx(p.lon_deg).epsilon(1e-12));
    }

    SUBCASE("12 m in planar coordinates is 12 m on the sphere") {
        const GpsCoordinate a = projection.to_gps({0.0, 0.0});
        const GpsCoordinate b = projection.to_gps({12.0, 0.0});
        CHECK(haversine_m(a, b) == doctest::Approx(12.0).epsilon(1e-4));
    }

    SUBCASE("centroid projection centers the input") {
        const std::vector<GpsCoordinate> pts{{40.0, -74.0}, {40.2, -74.2}};
        const PlanarProjection centered = PlanarProjection::around_centroid(pts);
        CHECK(centered.origin().lat_deg == doctest::Approx(40.1));
        CHECK(centered.origin().lon_deg == doctest::Approx(-74.1));
    }
}

TEST_CASE("dataset round trips") {
    const std::vector<ImageRecord> records = {sample_record("a", 40.0, -74.0),
                                              sample_record("b", 40.1, -74.1)};

    SUBCASE("json lines") {
        TempFile file("test_dataset_roundtrip.jsonl");
        save_records(file.path, records, DatasetFormat::JsonLines);
        const auto loaded = load_records(file.path, DatasetFormat::JsonLines);
        CHECK(loaded == records);
    }

    SUBCASE("binary") {
        TempFile file("test_dataset_roundtrip.bin");
        save_records(file.path, records, DatasetFormat::Binary);
        const auto loaded = load_records(file.path, DatasetFormat::Binary);
        CHECK(loaded == records);
    }
}

TEST_CASE("dataset validation errors") {
    SUBCASE("empty reference set") {
        TempFile refs("test_refs_empty.jsonl");
        TempFile queries("test_queries_empty.jsonl");
        std::ofstream(refs.path).close();
        save_records(queries.path, {sample_record("q", 0.0, 0.0)}, DatasetFormat::JsonLines);
        try {
            load_dataset(refs.path, queries.path, DatasetFormat::JsonLines);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("empty reference set") != std::string::npos);
        }
    }

    SUBCASE("latitude out of range names the field") {
        TempFile file("test_bad_lat.jsonl");
        ImageRecord bad = sample_record("a", 91.0, 0.0);
        // Write without validation by hand-crafting the line.
        {
            ImageRecord ok = bad;
            ok.gps.lat_deg = 0.0;
            save_records(file.path, {ok}, DatasetFormat::JsonLines);
            std::ifstream in(file.path);
            std::string line;
            std::getline(in, line);
            in.close();
            const auto pos = line.find("\"lat\":0.0");
            REQUIRE(pos != std::string::npos);
            line.replace(pos, 9, "\"lat\":91.0");
            std::ofstream out(file.path);
            out << line << '\n';
        }
        try {
            load_records(file.path, DatasetFormat::JsonLines);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("latitude") != std::string::npos);
        }
    }

    SUBCASE("duplicate image ids are rejected") {
        TempFile file("test_dup_id.jsonl");
        save_records(file.path, {sample_record("a", 0.0, 0.0), sample_record("a", 1.0, 1.0)},
                     DatasetFormat::JsonLines);
        CHECK_THROWS_AS(load_records(file.path, DatasetFormat::JsonLines), SchemaError);
    }

    SUBCASE("descriptor dimension mismatch is rejected") {
        TempFile file("test_dim_mismatch.jsonl");
        ImageRecord a = sample_record("a", 0.0, 0.0);
        ImageRecord b = sample_record("b", 0.0, 0.0);
        b.local_descriptors = {{1.0f, 2.0f}};
        save_records(file.path, {a, b}, DatasetFormat::JsonLines);
        CHECK_THROWS_AS(load_records(file.path, DatasetFormat::JsonLines), SchemaError);
    }

    SUBCASE("unknown format name") {
        CHECK_THROWS_AS(format_from_name("xml"), SchemaError);
        CHECK(format_from_name("jsonl") == DatasetFormat::JsonLines);
        CHECK(format_from_name("binary") == DatasetFormat::Binary);
    }
}

TEST_CASE("synthetic city generation") {
    SyntheticCityConfig config;
    config.grid_rows = 4;
    config.grid_cols = 4;
    config.descriptors_per_image = 6;
    config.query_count = 8;
    config.seed = 42;

    SUBCASE("deterministic under the seed") {
        const SyntheticCity a = generate_synthetic_city(config);
        const SyntheticCity b = generate_synthetic_city(config);
        CHECK(a.references == b.references);
        CHECK(a.queries == b.queries);
        CHECK(a.truth == b.truth);
    }

    SUBCASE("zero noise and zero distractors plant exact duplicates") {
        SyntheticCityConfig clean = config;
        clean.noise_level = 0.0;
        clean.distractor_rate = 0.0;
        const SyntheticCity city = generate_synthetic_city(clean);
        REQUIRE(city.queries.size() == 8);
        for (size_t q = 0; q < city.queries.size(); ++q) {
            const ImageRecord* truth = nullptr;
            for (const auto& r : city.references)
                if (r.image_id == city.truth[q]) truth = &r;
            REQUIRE(truth != nullptr);
            for (const auto& d : city.queries[q].local_descriptors) {
                bool found = false;
                for (const auto& rd : truth->local_descriptors)
                    if (rd == d) found = true;
                CHECK(found);
            }
        }
    }

    SUBCASE("grid spacing matches the configured metric distance") {
        const SyntheticCity city = generate_synthetic_city(config);
        REQUIRE(city.references.size() == 16);
        // Neighbors in the same row are one spacing apart.
        CHECK(haversine_m(city.references[0].gps, city.references[1].gps) ==
              doctest::Approx(12.0).epsilon(1e-3));
    }

    SUBCASE("duplicate-content mode doubles the references and copies content") {
        SyntheticCityConfig twins = config;
        twins.duplicate_content = true;
        const SyntheticCity city = generate_synthetic_city(twins);
        CHECK(city.references.size() == 32);
        // Consecutive pairs share local descriptors but not visual features.
        for (size_t i = 0; i + 1 < city.references.size(); i += 2) {
            CHECK(city.references[i].local_descriptors == city.references[i + 1].local_descriptors);
            CHECK(city.references[i].global_features.at("global_0") !=
                  city.references[i + 1].global_features.at("global_0"));
        }
    }

    SUBCASE("invalid config is rejected") {
        SyntheticCityConfig bad = config;
        bad.distractor_rate = 1.5;
        CHECK_THROWS_AS(generate_synthetic_city(bad), SchemaError);
    }
}

TEST_CASE("accuracy evaluation") {
    const auto line = [](double error) {
        QueryReportLine l;
        l.query_id = "q";
        l.method = "cds";
        l.predicted_image = "img";
        l.error_m = error;
        l.failure = error < 0.0 || error > 300.0;
        return l;
    };

    SUBCASE("all exact hits give a constant curve at one") {
        const AccuracyCurve curve = evaluate({line(0.0), line(0.0)}, {10.0, 100.0});
        CHECK(curve.accuracy[0] == doctest::Approx(1.0));
        CHECK(curve.accuracy[1] == doctest::Approx(1.0));
    }

    SUBCASE("counting example") {
        const AccuracyCurve curve = evaluate({line(10.0), line(100.0), line(400.0)}, {30.0, 300.0});
        CHECK(curve.accuracy[0] == doctest::Approx(1.0 / 3.0));
        CHECK(curve.accuracy[1] == doctest::Approx(2.0 / 3.0));
    }

    SUBCASE("monotone in the threshold") {
        std::vector<QueryReportLine> reports;
        for (int i = 0; i < 25; ++i) reports.push_back(line(i * 17.0));
        const AccuracyCurve curve = evaluate(reports);
        for (size_t i = 1; i < curve.accuracy.size(); ++i)
            CHECK(curve.accuracy[i] >= curve.accuracy[i - 1]);
    }

    SUBCASE("empty report set is an error") {
        CHECK_THROWS_AS(evaluate({}), SchemaError);
    }

    SUBCASE("csv carries the schema version") {
        const AccuracyCurve curve = evaluate({line(1.0)}, {10.0});
        const std::string csv = curve_to_csv(curve);
        CHECK(csv.rfind("schema_version,threshold_m,accuracy\n", 0) == 0);
        CHECK(csv.find("\n1,10,") != std::string::npos);
    }
}

TEST_CASE("report line round trip") {
    QueryReportLine line;
    line.query_id = "q0001";
    line.method = "cds";
    line.predicted_image = "img0042";
    line.predicted_gps = {40.00123, -74.00456};
    line.error_m = 13.5;
    line.failure = false;
    line.flags = {{"tie", false}, {"cds_bypassed", false}};
    line.numbers = {{"alpha", 3.25}, {"weight_g0", 0.75}};

    const std::string json = report_line_to_json(line);
    const QueryReportLine back = report_line_from_json(json);
    CHECK(back.query_id == line.query_id);
    CHECK(back.method == line.method);
    CHECK(back.predicted_image == line.predicted_image);
    CHECK(back.error_m == doctest::Approx(line.error_m));
    CHECK(back.flags == line.flags);
    CHECK(back.numbers == line.numbers);

    CHECK_THROWS_AS(report_line_from_json("{\"query_id\":\"x\"}"), SchemaError);
}
