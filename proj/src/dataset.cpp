#include "dsloc/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dsloc/rng.hpp"

namespace dsloc {

namespace {

using nlohmann::json;

constexpr int kDatasetSchemaVersion = 1;
constexpr int kReportSchemaVersion = 1;
constexpr std::uint32_t kBinaryMagic = 0x42534C44;  // "DLSB"

const char* kBase64Alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::uint8_t* data, size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (size_t i = 0; i < len; i += 3) {
        std::uint32_t chunk = static_cast<std::uint32_t>(data[i]) << 16;
        if (i + 1 < len) chunk |= static_cast<std::uint32_t>(data[i + 1]) << 8;
        if (i + 2 < len) chunk |= static_cast<std::uint32_t>(data[i + 2]);
        out.push_back(kBase64Alphabet[(chunk >> 18) & 0x3f]);
        out.push_back(kBase64Alphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? kBase64Alphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? kBase64Alphabet[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::array<int, 256> lookup;
    lookup.fill(-1);
    for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kBase64Alphabet[i])] = i;
    std::vector<std::uint8_t> out;
    std::uint32_t chunk = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = lookup[static_cast<unsigned char>(c)];
        if (v < 0) throw SchemaError("invalid base64 character in descriptor data");
        chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((chunk >> bits) & 0xff));
        }
    }
    return out;
}

std::string encode_descriptors(const std::vector<std::vector<float>>& descriptors) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(descriptors.size() * (descriptors.empty() ? 0 : descriptors.front().size()) * 4);
    for (const auto& d : descriptors) {
        for (float v : d) {
            std::uint32_t u;
            static_assert(sizeof(u) == sizeof(v));
            std::memcpy(&u, &v, sizeof(u));
            bytes.push_back(static_cast<std::uint8_t>(u & 0xff));
            bytes.push_back(static_cast<std::uint8_t>((u >> 8) & 0xff));
            bytes.push_back(static_cast<std::uint8_t>((u >> 16) & 0xff));
            bytes.push_back(static_cast<std::uint8_t>((u >> 24) & 0xff));
        }
    }
    return base64_encode(bytes.data(), bytes.size());
}

std::vector<std::vector<float>> decode_descriptors(const std::string& data, int dim, int count,
                                                   const std::string& where) {
    if (dim < 0 || count < 0)
        throw SchemaError(where + ": negative descriptor_dim or descriptor_count");
    const std::vector<std::uint8_t> bytes = base64_decode(data);
    if (bytes.size() != static_cast<size_t>(dim) * count * 4)
        throw SchemaError(where + ": descriptor payload is " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(static_cast<size_t>(dim) * count * 4));
    std::vector<std::vector<float>> out(count, std::vector<float>(dim));
    size_t offset = 0;
    for (int i = 0; i < count; ++i) {
        for (int d = 0; d < dim; ++d) {
            std::uint32_t u = bytes[offset] | (static_cast<std::uint32_t>(bytes[offset + 1]) << 8) |
                              (static_cast<std::uint32_t>(bytes[offset + 2]) << 16) |
                              (static_cast<std::uint32_t>(bytes[offset + 3]) << 24);
            offset += 4;
            float v;
            std::memcpy(&v, &u, sizeof(v));
            out[i][d] = v;
        }
    }
    return out;
}

void validate_record(const ImageRecord& record, const std::string& where) {
    if (record.image_id.empty()) throw SchemaError(where + ": empty image_id");
    if (!(record.gps.lat_deg >= -90.0 && record.gps.lat_deg <= 90.0))
        throw SchemaError(where + ": latitude " + std::to_string(record.gps.lat_deg) +
                          " outside [-90, 90]");
    if (!(record.gps.lon_deg >= -180.0 && record.gps.lon_deg <= 180.0))
        throw SchemaError(where + ": longitude " + std::to_string(record.gps.lon_deg) +
                          " outside [-180, 180]");
    for (const auto& [name, values] : record.global_features) {
        if (values.empty()) throw SchemaError(where + ": empty global feature " + name);
        for (double v : values)
            if (!std::isfinite(v)) throw SchemaError(where + ": non-finite value in feature " + name);
    }
    for (const auto& d : record.local_descriptors)
        for (float v : d)
            if (!std::isfinite(v)) throw SchemaError(where + ": non-finite local descriptor value");
}

void validate_records(const std::vector<ImageRecord>& records, const std::string& path) {
    std::set<std::string> ids;
    int dim = -1;
    for (size_t i = 0; i < records.size(); ++i) {
        const std::string where = path + " record " + std::to_string(i + 1);
        validate_record(records[i], where);
        if (!ids.insert(records[i].image_id).second)
            throw SchemaError(where + ": duplicate image_id " + records[i].image_id);
        for (const auto& d : records[i].local_descriptors) {
            if (dim < 0) dim = static_cast<int>(d.size());
            if (static_cast<int>(d.size()) != dim)
                throw SchemaError(where + ": descriptor dimension " + std::to_string(d.size()) +
                                  " differs from " + std::to_string(dim));
        }
    }
}

json record_to_json(const ImageRecord& record) {
    json j;
    j["schema_version"] = kDatasetSchemaVersion;
    j["image_id"] = record.image_id;
    j["lat"] = record.gps.lat_deg;
    j["lon"] = record.gps.lon_deg;
    json features = json::object();
    for (const auto& [name, values] : record.global_features) features[name] = values;
    j["global"] = features;
    const int dim =
        record.local_descriptors.empty() ? 0 : static_cast<int>(record.local_descriptors[0].size());
    j["descriptor_dim"] = dim;
    j["descriptor_count"] = record.local_descriptors.size();
    j["descriptors"] = encode_descriptors(record.local_descriptors);
    return j;
}

ImageRecord record_from_json(const json& j, const std::string& where) {
    for (const char* field : {"schema_version", "image_id", "lat", "lon", "global",
                              "descriptor_dim", "descriptor_count", "descriptors"})
        if (!j.contains(field)) throw SchemaError(where + ": missing field " + field);
    if (j["schema_version"].get<int>() != kDatasetSchemaVersion)
        throw SchemaError(where + ": unsupported schema_version");
    ImageRecord record;
    record.image_id = j["image_id"].get<std::string>();
    record.gps = {j["lat"].get<double>(), j["lon"].get<double>()};
    for (const auto& [name, values] : j["global"].items())
        record.global_features[name] = values.get<std::vector<double>>();
    record.local_descriptors = decode_descriptors(
        j["descriptors"].get<std::string>(), j["descriptor_dim"].get<int>(),
        j["descriptor_count"].get<int>(), where);
    return record;
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw SchemaError(path + ": truncated binary dataset");
    return value;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
    const auto len = read_pod<std::uint32_t>(in, path);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw SchemaError(path + ": truncated binary dataset");
    return s;
}

}  // namespace

DatasetFormat format_from_name(const std::string& name) {
    if (name == "jsonl") return DatasetFormat::JsonLines;
    if (name == "binary") return DatasetFormat::Binary;
    throw SchemaError("unknown dataset format: " + name + " (expected jsonl or binary)");
}

std::vector<ImageRecord> load_records(const std::string& path, DatasetFormat format) {
    std::vector<ImageRecord> records;
    if (format == DatasetFormat::JsonLines) {
        std::ifstream in(path);
        if (!in) throw SchemaError("cannot open dataset file: " + path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::string where = path + ":" + std::to_string(line_no);
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw SchemaError(where + ": invalid JSON (" + e.what() + ")");
            }
            records.push_back(record_from_json(j, where));
        }
    } else {
        // Columnar layout: ids, latitudes, longitudes, one block per global
        // feature name (dimension 0 marks absence), then descriptor counts
        // followed by a single concatenated descriptor column.
        std::ifstream in(path, std::ios::binary);
        if (!in) throw SchemaError("cannot open dataset file: " + path);
        if (read_pod<std::uint32_t>(in, path) != kBinaryMagic)
            throw SchemaError(path + ": not a binary dataset file");
        if (read_pod<std::uint32_t>(in, path) != kDatasetSchemaVersion)
            throw SchemaError(path + ": unsupported binary schema version");
        const auto count = read_pod<std::uint64_t>(in, path);
        records.resize(count);
        for (auto& r : records) r.image_id = read_string(in, path);
        for (auto& r : records) r.gps.lat_deg = read_pod<double>(in, path);
        for (auto& r : records) r.gps.lon_deg = read_pod<double>(in, path);

        const auto n_features = read_pod<std::uint32_t>(in, path);
        for (std::uint32_t f = 0; f < n_features; ++f) {
            const std::string name = read_string(in, path);
            for (auto& r : records) {
                const auto dim = read_pod<std::uint32_t>(in, path);
                if (dim == 0) continue;
                std::vector<double> values(dim);
                in.read(reinterpret_cast<char*>(values.data()),
                        static_cast<std::streamsize>(dim * sizeof(double)));
                if (!in) throw SchemaError(path + ": truncated binary dataset");
                r.global_features[name] = std::move(values);
            }
        }

        const auto desc_dim = read_pod<std::uint32_t>(in, path);
        std::vector<std::uint32_t> desc_counts(count);
        for (auto& c : desc_counts) c = read_pod<std::uint32_t>(in, path);
        for (std::uint64_t i = 0; i < count; ++i) {
            records[i].local_descriptors.assign(desc_counts[i], std::vector<float>(desc_dim));
            for (auto& d : records[i].local_descriptors) {
                in.read(reinterpret_cast<char*>(d.data()),
                        static_cast<std::streamsize>(desc_dim * sizeof(float)));
                if (!in) throw SchemaError(path + ": truncated binary dataset");
            }
        }
    }
    validate_records(records, path);
    return records;
}

void save_records(const std::string& path, const std::vector<ImageRecord>& records,
                  DatasetFormat format) {
    if (format == DatasetFormat::JsonLines) {
        std::ofstream out(path);
        if (!out) throw SchemaError("cannot open dataset file for writing: " + path);
        for (const auto& record : records) out << record_to_json(record).dump() << '\n';
        if (!out) throw SchemaError("failed writing dataset file: " + path);
    } else {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw SchemaError("cannot open dataset file for writing: " + path);
        write_pod(out, kBinaryMagic);
        write_pod<std::uint32_t>(out, kDatasetSchemaVersion);
        write_pod<std::uint64_t>(out, records.size());
        for (const auto& r : records) write_string(out, r.image_id);
        for (const auto& r : records) write_pod(out, r.gps.lat_deg);
        for (const auto& r : records) write_pod(out, r.gps.lon_deg);

        std::set<std::string> names;
        for (const auto& r : records)
            for (const auto& [name, values] : r.global_features) names.insert(name);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(names.size()));
        for (const std::string& name : names) {
            write_string(out, name);
            for (const auto& r : records) {
                const auto it = r.global_features.find(name);
                if (it == r.global_features.end()) {
                    write_pod<std::uint32_t>(out, 0);
                    continue;
                }
                write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(it->second.size()));
                out.write(reinterpret_cast<const char*>(it->second.data()),
                          static_cast<std::streamsize>(it->second.size() * sizeof(double)));
            }
        }

        std::uint32_t desc_dim = 0;
        for (const auto& r : records)
            if (!r.local_descriptors.empty())
                desc_dim = static_cast<std::uint32_t>(r.local_descriptors[0].size());
        write_pod(out, desc_dim);
        for (const auto& r : records)
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(r.local_descriptors.size()));
        for (const auto& r : records)
            for (const auto& d : r.local_descriptors)
                out.write(reinterpret_cast<const char*>(d.data()),
                          static_cast<std::streamsize>(d.size() * sizeof(float)));
        if (!out) throw SchemaError("failed writing dataset file: " + path);
    }
}

std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> load_dataset(
    const std::string& references_path, const std::string& queries_path, DatasetFormat format) {
    auto references = load_records(references_path, format);
    auto queries = load_records(queries_path, format);
    if (references.empty()) throw SchemaError(references_path + ": empty reference set");
    int ref_dim = -1;
    for (const auto& r : references)
        if (!r.local_descriptors.empty()) {
            ref_dim = static_cast<int>(r.local_descriptors[0].size());
            break;
        }
    for (const auto& q : queries)
        for (const auto& d : q.local_descriptors)
            if (ref_dim >= 0 && static_cast<int>(d.size()) != ref_dim)
                throw SchemaError(queries_path + ": query descriptor dimension " +
                                  std::to_string(d.size()) + " differs from reference dimension " +
                                  std::to_string(ref_dim));
    return {std::move(references), std::move(queries)};
}

void SyntheticCityConfig::validate() const {
    if (grid_rows < 1 || grid_cols < 1) throw SchemaError("synthetic config: grid must be positive");
    if (!(spacing_m > 0.0)) throw SchemaError("synthetic config: spacing must be positive");
    if (descriptors_per_image < 1) throw SchemaError("synthetic config: need descriptors per image");
    if (query_count < 0) throw SchemaError("synthetic config: negative query count");
    if (!(noise_level >= 0.0)) throw SchemaError("synthetic config: negative noise level");
    if (!(distractor_rate >= 0.0 && distractor_rate <= 1.0))
        throw SchemaError("synthetic config: distractor rate outside [0, 1]");
    if (descriptor_dim < 1) throw SchemaError("synthetic config: descriptor dim must be positive");
}

SyntheticCity generate_synthetic_city(const SyntheticCityConfig& config) {
    config.validate();
    Rng rng(config.seed);

    const PlanarProjection projection(config.base);
    const double noise_sigma = config.noise_level * 255.0;

    const auto random_descriptor = [&] {
        std::vector<float> d(config.descriptor_dim);
        for (auto& v : d) v = static_cast<float>(rng.uniform(0.0, 255.0));
        return d;
    };
    const auto random_global = [&](int dim) {
        std::vector<double> g(dim);
        for (auto& v : g) v = rng.uniform();
        return g;
    };

    SyntheticCity city;
    const int cells = config.grid_rows * config.grid_cols;
    std::vector<int> original_index(cells);  // cell -> index into references

    for (int r = 0; r < config.grid_rows; ++r) {
        for (int c = 0; c < config.grid_cols; ++c) {
            const int cell = r * config.grid_cols + c;
            ImageRecord ref;
            ref.gps = projection.to_gps({c * config.spacing_m, r * config.spacing_m});
            ref.global_features["global_0"] = random_global(16);
            ref.global_features["global_1"] = random_global(8);
            for (int d = 0; d < config.descriptors_per_image; ++d)
                ref.local_descriptors.push_back(random_descriptor());

            if (!config.duplicate_content) {
                char id[16];
                std::snprintf(id, sizeof(id), "img%04d", cell);
                ref.image_id = id;
                original_index[cell] = static_cast<int>(city.references.size());
                city.references.push_back(std::move(ref));
            } else {
                // Twin with identical local content half a grid away; a random
                // bit decides which of the pair sorts first, so ties resolve
                // to the wrong image about half the time.
                ImageRecord twin = ref;
                const int twin_r = (r + config.grid_rows / 2) % config.grid_rows;
                const int twin_c = (c + config.grid_cols / 2) % config.grid_cols;
                twin.gps = projection.to_gps({twin_c * config.spacing_m + config.spacing_m / 2.0,
                                              twin_r * config.spacing_m + config.spacing_m / 2.0});
                twin.global_features["global_0"] = random_global(16);
                twin.global_features["global_1"] = random_global(8);
                const int bit = static_cast<int>(rng.bits() & 1);
                char id_a[16], id_b[16];
                std::snprintf(id_a, sizeof(id_a), "img%05d", 2 * cell + bit);
                std::snprintf(id_b, sizeof(id_b), "img%05d", 2 * cell + 1 - bit);
                ref.image_id = id_a;
                twin.image_id = id_b;
                original_index[cell] = static_cast<int>(city.references.size());
                city.references.push_back(std::move(ref));
                city.references.push_back(std::move(twin));
            }
        }
    }

    const int distractors =
        static_cast<int>(std::lround(config.distractor_rate * config.descriptors_per_image));
    for (int q = 0; q < config.query_count; ++q) {
        const int cell = rng.uniform_int(0, cells - 1);
        const ImageRecord& truth = city.references[original_index[cell]];
        ImageRecord query;
        char id[16];
        std::snprintf(id, sizeof(id), "qry%04d", q);
        query.image_id = id;
        query.gps = truth.gps;
        for (const auto& [name, values] : truth.global_features) {
            std::vector<double> noisy = values;
            for (auto& v : noisy) v += 0.2 * config.noise_level * rng.normal();
            query.global_features[name] = std::move(noisy);
        }
        for (int d = 0; d < config.descriptors_per_image; ++d) {
            if (d < distractors) {
                query.local_descriptors.push_back(random_descriptor());
            } else {
                std::vector<float> clone = truth.local_descriptors[d % truth.local_descriptors.size()];
                if (noise_sigma > 0.0)
                    for (auto& v : clone) v = static_cast<float>(v + noise_sigma * rng.normal());
                query.local_descriptors.push_back(std::move(clone));
            }
        }
        city.queries.push_back(std::move(query));
        city.truth.push_back(truth.image_id);
    }
    return city;
}

std::string report_line_to_json(const QueryReportLine& line) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["query_id"] = line.query_id;
    j["method"] = line.method;
    j["predicted_image"] = line.predicted_image;
    j["predicted_lat"] = line.predicted_gps.lat_deg;
    j["predicted_lon"] = line.predicted_gps.lon_deg;
    j["error_m"] = line.error_m;
    j["failure"] = line.failure;
    j["flags"] = line.flags;
    j["numbers"] = line.numbers;
    return j.dump();
}

QueryReportLine report_line_from_json(const std::string& json_line) {
    json j;
    try {
        j = json::parse(json_line);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid report line: ") + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kReportSchemaVersion)
        throw SchemaError("report line: missing or unsupported schema_version");
    QueryReportLine line;
    line.query_id = j.at("query_id").get<std::string>();
    line.method = j.at("method").get<std::string>();
    line.predicted_image = j.at("predicted_image").get<std::string>();
    line.predicted_gps = {j.at("predicted_lat").get<double>(), j.at("predicted_lon").get<double>()};
    line.error_m = j.at("error_m").get<double>();
    line.failure = j.at("failure").get<bool>();
    for (const auto& [k, v] : j.at("flags").items()) line.flags[k] = v.get<bool>();
    for (const auto& [k, v] : j.at("numbers").items()) line.numbers[k] = v.get<double>();
    return line;
}

AccuracyCurve evaluate(const std::vector<QueryReportLine>& reports,
                       const std::vector<double>& thresholds_m) {
    if (reports.empty()) throw SchemaError("evaluate: empty report set");
    for (size_t i = 1; i < thresholds_m.size(); ++i)
        if (!(thresholds_m[i] > thresholds_m[i - 1]))
            throw SchemaError("evaluate: thresholds must be ascending");
    AccuracyCurve curve;
    curve.thresholds_m = thresholds_m;
    for (double t : thresholds_m) {
        int hits = 0;
        for (const auto& r : reports)
            if (r.error_m >= 0.0 && r.error_m <= t) ++hits;
        curve.accuracy.push_back(static_cast<double>(hits) / reports.size());
    }
    return curve;
}

std::string curve_to_csv(const AccuracyCurve& curve) {
    std::ostringstream out;
    out.precision(10);
    out << "schema_version,threshold_m,accuracy\n";
    for (size_t i = 0; i < curve.thresholds_m.size(); ++i)
        out << kReportSchemaVersion << ',' << curve.thresholds_m[i] << ',' << curve.accuracy[i] << '\n';
    return out.str();
}

}  // namespace dsloc
