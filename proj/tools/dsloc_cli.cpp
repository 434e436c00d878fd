// Command-line front end: synthetic data generation, index construction,
// localization, accuracy curves and the self-verification suite.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsloc/pipeline.hpp"
#include "dsloc/selfcheck.hpp"

namespace {

using namespace dsloc;

struct LocalizeOptions {
    std::string references_path;
    std::string queries_path;
    std::string output_path = "report.jsonl";
    std::string format = "jsonl";
    std::string method = "cds";
    std::string backend = "exact";
    std::string index_path;
    std::string matching_feature;
    double theta = 0.7;
    double beta = 0.7;
    double gamma = 128.0;
    double gamma_feature_default = 128.0;
    double scale = 1.0;
    double tau = 1e-7;
    int clusters = 3;
    int pool = 50;
    std::uint64_t seed = 1;
    std::vector<std::string> gamma_features;  // name=value pairs
};

// The only environment override: DSLOC_CONFIG points at a JSON file whose
// top-level keys preset localize options. Explicit flags win.
void apply_config_file(LocalizeOptions& options, const std::string& explicit_path,
                       const CLI::App& cmd) {
    std::string path = explicit_path;
    if (path.empty()) {
        const char* env = std::getenv("DSLOC_CONFIG");
        if (env != nullptr) path = env;
    }
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;

    const auto overridable = [&](const char* flag, const char* key) {
        return cmd.count(flag) == 0 && j.contains(key);
    };
    if (overridable("--method", "method")) options.method = j["method"].get<std::string>();
    if (overridable("--theta", "theta")) options.theta = j["theta"].get<double>();
    if (overridable("--beta", "beta")) options.beta = j["beta"].get<double>();
    if (overridable("--gamma", "gamma")) options.gamma = j["gamma"].get<double>();
    if (overridable("--clusters", "clusters")) options.clusters = j["clusters"].get<int>();
    if (overridable("--pool", "pool")) options.pool = j["pool"].get<int>();
    if (overridable("--scale", "scale")) options.scale = j["scale"].get<double>();
    if (overridable("--tau", "tau")) options.tau = j["tau"].get<double>();
    if (overridable("--backend", "backend")) options.backend = j["backend"].get<std::string>();
    if (overridable("--matching-feature", "matching_feature"))
        options.matching_feature = j["matching_feature"].get<std::string>();
    if (overridable("--gamma-feature", "gamma_features"))
        for (const auto& [name, value] : j["gamma_features"].items())
            options.gamma_features.push_back(name + "=" + std::to_string(value.get<double>()));
}

LocalizerConfig to_localizer_config(const LocalizeOptions& options) {
    LocalizerConfig config;
    config.method = method_from_name(options.method);
    config.selection.theta = options.theta;
    config.selection.beta = options.beta;
    config.selection.max_pool = options.pool;
    config.matching.gamma_local = options.gamma;
    config.matching.gamma_global = options.gamma;
    config.matching.node_score_scale = options.scale;
    config.matching_feature = options.matching_feature;
    config.clusters = options.clusters;
    config.solver.tau = options.tau;
    config.gamma_feature_default = options.gamma_feature_default;
    config.index.seed = options.seed;
    config.index_path = options.index_path;
    if (options.backend == "tree")
        config.index.backend = IndexConfig::Backend::KMeansTree;
    else if (options.backend != "exact")
        throw std::runtime_error("unknown backend: " + options.backend + " (expected exact or tree)");
    for (const std::string& pair : options.gamma_features) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--gamma-feature expects name=value, got " + pair);
        config.gamma_per_feature[pair.substr(0, eq)] = std::stod(pair.substr(eq + 1));
    }
    return config;
}

std::vector<double> parse_thresholds(const std::string& csv) {
    std::vector<double> out;
    size_t start = 0;
    while (start < csv.size()) {
        size_t end = csv.find(',', start);
        if (end == std::string::npos) end = csv.size();
        out.push_back(std::stod(csv.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

int run_generate(const SyntheticCityConfig& config, const std::string& refs_path,
                 const std::string& queries_path, const std::string& format) {
    const SyntheticCity city = generate_synthetic_city(config);
    const DatasetFormat f = format_from_name(format);
    save_records(refs_path, city.references, f);
    save_records(queries_path, city.queries, f);
    std::cout << "wrote " << city.references.size() << " references to " << refs_path << " and "
              << city.queries.size() << " queries to " << queries_path << "\n";
    return 0;
}

int run_index(const std::string& refs_path, const std::string& format,
              const std::string& output, IndexConfig config) {
    const auto references = load_records(refs_path, format_from_name(format));
    std::vector<LocalDescriptor> flat;
    for (const auto& r : references) {
        int feature_id = 0;
        for (const auto& d : r.local_descriptors) flat.push_back({d, r.image_id, feature_id++});
    }
    config.backend = IndexConfig::Backend::KMeansTree;
    const DescriptorIndex index = DescriptorIndex::build(std::move(flat), config);
    index.save(output);
    std::cout << "indexed " << index.size() << " descriptors (dim " << index.dimension()
              << ") into " << output << "\n";
    return 0;
}

int run_localize(const LocalizeOptions& options) {
    const DatasetFormat format = format_from_name(options.format);
    auto [references, queries] =
        load_dataset(options.references_path, options.queries_path, format);
    const auto reports = run_pipeline(references, queries, to_localizer_config(options));

    std::ofstream out(options.output_path);
    if (!out) throw std::runtime_error("cannot open report file for writing: " + options.output_path);
    out << reports_to_jsonl(reports);
    if (!out) throw std::runtime_error("failed writing report file: " + options.output_path);

    int localized = 0;
    for (const auto& r : reports)
        if (!r.failure) ++localized;
    std::cout << "localized " << localized << "/" << reports.size() << " queries within 300 m; "
              << "report written to " << options.output_path << "\n";
    return 0;
}

int run_evaluate(const std::string& report_path, const std::string& output,
                 const std::string& thresholds_csv) {
    std::ifstream in(report_path);
    if (!in) throw std::runtime_error("cannot open report file: " + report_path);
    std::vector<QueryReportLine> reports;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) reports.push_back(report_line_from_json(line));

    const AccuracyCurve curve = evaluate(reports, parse_thresholds(thresholds_csv));
    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot open curve file for writing: " + output);
    out << curve_to_csv(curve);
    for (size_t i = 0; i < curve.thresholds_m.size(); ++i)
        std::cout << "accuracy @ " << curve.thresholds_m[i] << " m: " << curve.accuracy[i] << "\n";
    return 0;
}

int run_verify(bool quick) {
    const auto results = selfcheck::run_all(quick);
    bool all_passed = true;
    for (size_t i = 0; i < results.size(); ++i) {
        std::cout << (results[i].passed ? "[PASS] " : "[FAIL] ") << i + 1 << ". " << results[i].name
                  << " — " << results[i].detail << "\n";
        all_passed = all_passed && results[i].passed;
    }
    return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dominant-set image geo-localization pipeline"};
    app.require_subcommand(1);

    // generate
    SyntheticCityConfig gen_config;
    std::string gen_refs = "references.jsonl", gen_queries = "queries.jsonl",
                gen_format = "jsonl";
    auto* generate = app.add_subcommand("generate", "generate a synthetic city dataset");
    generate->add_option("--references", gen_refs, "output path for reference records");
    generate->add_option("--queries", gen_queries, "output path for query records");
    generate->add_option("--format", gen_format, "jsonl or binary");
    generate->add_option("--grid-rows", gen_config.grid_rows);
    generate->add_option("--grid-cols", gen_config.grid_cols);
    generate->add_option("--spacing", gen_config.spacing_m, "grid spacing in meters");
    generate->add_option("--descriptors", gen_config.descriptors_per_image);
    generate->add_option("--count", gen_config.query_count, "number of queries");
    generate->add_option("--noise", gen_config.noise_level);
    generate->add_option("--distractors", gen_config.distractor_rate);
    generate->add_option("--dim", gen_config.descriptor_dim);
    generate->add_option("--seed", gen_config.seed);
    generate->add_flag("--tie-mode", gen_config.duplicate_content,
                       "duplicate reference content to force vote ties");

    // index
    std::string index_refs, index_output = "index.bin", index_format = "jsonl";
    IndexConfig index_config;
    auto* index_cmd = app.add_subcommand("index", "build a k-means tree descriptor index");
    index_cmd->add_option("--references", index_refs)->required();
    index_cmd->add_option("--output", index_output);
    index_cmd->add_option("--format", index_format, "jsonl or binary");
    index_cmd->add_option("--branching", index_config.branching);
    index_cmd->add_option("--leaf", index_config.max_leaf_size);
    index_cmd->add_option("--checks", index_config.checks);
    index_cmd->add_option("--seed", index_config.seed);

    // localize
    LocalizeOptions loc;
    std::string config_path;
    auto* localize = app.add_subcommand("localize", "localize queries against references");
    localize->add_option("--references", loc.references_path)->required();
    localize->add_option("--queries", loc.queries_path)->required();
    localize->add_option("--output", loc.output_path, "report jsonl path");
    localize->add_option("--format", loc.format, "dataset format: jsonl or binary");
    localize->add_option("--method", loc.method, "vote, cds or firstnn");
    localize->add_option("--theta", loc.theta, "consecutive-distance selection threshold");
    localize->add_option("--beta", loc.beta, "first/last pruning threshold");
    localize->add_option("--gamma", loc.gamma, "kernel bandwidth for matching");
    localize->add_option("--gamma-feature", loc.gamma_features,
                         "per-feature bandwidth, name=value (repeatable)");
    localize->add_option("--gamma-default", loc.gamma_feature_default,
                         "bandwidth for features without an override");
    localize->add_option("--clusters", loc.clusters, "local maximizers to extract");
    localize->add_option("--pool", loc.pool, "fetched neighbors per query feature");
    localize->add_option("--seed", loc.seed, "index construction seed");
    localize->add_option("--scale", loc.scale, "node-score scale factor");
    localize->add_option("--tau", loc.tau, "solver tolerance");
    localize->add_option("--backend", loc.backend, "exact or tree");
    localize->add_option("--index", loc.index_path, "previously built index file");
    localize->add_option("--matching-feature", loc.matching_feature,
                         "global feature for matching edges (default: GPS planar meters)");
    localize->add_option("--config", config_path,
                         "JSON config file (or set DSLOC_CONFIG); flags win");

    // evaluate
    std::string eval_report = "report.jsonl", eval_output = "curve.csv",
                eval_thresholds = "10,30,50,100,150,200,250,300";
    auto* evaluate_cmd = app.add_subcommand("evaluate", "accuracy-at-threshold curve from a report");
    evaluate_cmd->add_option("--report", eval_report);
    evaluate_cmd->add_option("--output", eval_output);
    evaluate_cmd->add_option("--thresholds", eval_thresholds, "comma-separated meters");

    // verify
    bool verify_quick = false;
    auto* verify = app.add_subcommand("verify", "run the verification suites");
    verify->add_flag("--quick", verify_quick, "reduced instance counts, no end-to-end run");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return run_generate(gen_config, gen_refs, gen_queries, gen_format);
        if (index_cmd->parsed()) return run_index(index_refs, index_format, index_output, index_config);
        if (localize->parsed()) {
            apply_config_file(loc, config_path, *localize);
            return run_localize(loc);
        }
        if (evaluate_cmd->parsed()) return run_evaluate(eval_report, eval_output, eval_thresholds);
        if (verify->parsed()) return run_verify(verify_quick);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
