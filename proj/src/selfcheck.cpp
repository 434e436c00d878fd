#include "dsloc/selfcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "dsloc/cds.hpp"
#include "dsloc/graph_oracle.hpp"
#include "dsloc/pipeline.hpp"
#include "dsloc/rng.hpp"
#include "dsloc/stqp.hpp"

namespace dsloc::selfcheck {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

AffinityMatrix random_affinity(Rng& rng, int n, double lo = 0.0, double hi = 1.0) {
    AffinityMatrix m(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m.set(i, j, rng.uniform(lo, hi));
    return m;
}

SimplexVector random_simplex(Rng& rng, int n) {
    std::vector<double> x(n);
    double sum = 0.0;
    for (double& v : x) {
        v = rng.exponential() + 1e-12;
        sum += v;
    }
    for (double& v : x) v /= sum;
    return SimplexVector(std::move(x));
}

NeighborList list_from_distances(const std::vector<double>& distances) {
    NeighborList nn;
    for (size_t i = 0; i < distances.size(); ++i) {
        LocalDescriptor d;
        d.values = {static_cast<float>(i)};
        d.parent_image = "img";
        d.feature_id = static_cast<int>(i);
        nn.neighbors.push_back({std::move(d), distances[i]});
    }
    return nn;
}

SyntheticCityConfig planted_city_config(bool tie_heavy) {
    SyntheticCityConfig config;
    config.grid_rows = 10;
    config.grid_cols = 10;
    config.spacing_m = 12.0;
    config.descriptors_per_image = 20;
    config.query_count = 50;
    config.noise_level = 0.10;
    config.distractor_rate = 0.30;
    config.descriptor_dim = 128;
    config.duplicate_content = tie_heavy;
    config.seed = tie_heavy ? 11 : 7;
    return config;
}

LocalizerConfig planted_localizer_config(Method method) {
    LocalizerConfig config;
    config.method = method;
    // Bandwidths for the synthetic global features, whose distances live on
    // a unit scale rather than the descriptor scale.
    config.gamma_per_feature = {{"global_0", 0.5}, {"global_1", 0.5}};
    return config;
}

double accuracy_at(const std::vector<QueryReportLine>& reports, double threshold_m) {
    int hits = 0;
    for (const auto& r : reports)
        if (r.error_m >= 0.0 && r.error_m <= threshold_m) ++hits;
    return static_cast<double>(hits) / static_cast<double>(reports.size());
}

}  // namespace

AffinityMatrix outlier_example_graph(const std::array<double, 3>& triangle,
                                     const std::array<double, 3>& attachment) {
    AffinityMatrix m(5);
    m.set(0, 1, triangle[0]);
    m.set(0, 2, triangle[1]);
    m.set(1, 2, triangle[2]);
    m.set(0, 3, attachment[0]);
    m.set(1, 3, attachment[1]);
    m.set(2, 3, attachment[2]);
    for (int i = 0; i < 4; ++i) m.set(i, 4, 1.0);
    return m;
}

CheckResult check_worked_example() {
    CheckResult result{"worked-example weight signs and dominance", false, {}};
    const auto start = Clock::now();

    std::array<double, 3> triangle{20, 21, 22};
    std::array<double, 3> attachment{30, 35, 41};
    std::sort(triangle.begin(), triangle.end());
    std::sort(attachment.begin(), attachment.end());

    int combos = 0;
    do {
        std::array<double, 3> att = attachment;
        std::sort(att.begin(), att.end());
        do {
            ++combos;
            const AffinityMatrix graph = outlier_example_graph(triangle, att);
            WeightOracle oracle(graph);
            const double strong = oracle.weight(NodeSet{0, 1, 2, 3}, 3);
            const double weak = oracle.weight(NodeSet{0, 1, 2, 3, 4}, 4);
            if (!(strong > 0.0) || !(weak < 0.0)) {
                result.detail = "sign check failed on a weight permutation (W4=" +
                                std::to_string(strong) + ", W5=" + std::to_string(weak) + ")";
                return result;
            }
        } while (std::next_permutation(att.begin(), att.end()));
    } while (std::next_permutation(triangle.begin(), triangle.end()));

    const AffinityMatrix canonical = outlier_example_graph();
    WeightOracle oracle(canonical);
    const bool quad_dominant =
        oracle.classify_dominant_set(NodeSet{0, 1, 2, 3}) == DominanceVerdict::Dominant;
    const bool full_dominant =
        oracle.classify_dominant_set(NodeSet{0, 1, 2, 3, 4}) == DominanceVerdict::Dominant;
    const double elapsed = seconds_since(start);

    std::ostringstream detail;
    detail << combos << " weight assignments, " << elapsed << " s";
    result.detail = detail.str();
    if (!quad_dominant) result.detail += "; {0,1,2,3} not classified dominant";
    if (full_dominant) result.detail += "; {0,1,2,3,4} wrongly classified dominant";
    if (elapsed >= 1.0) result.detail += "; time budget of 1 s exceeded";
    result.passed = quad_dominant && !full_dominant && elapsed < 1.0;
    return result;
}

CheckResult check_oracle_equivalence(int instances) {
    CheckResult result{"equilibrium support matches exact dominance test", false, {}};
    const auto start = Clock::now();
    Rng rng(20260809ULL);

    int degenerate = 0, passed = 0, failed = 0;
    for (int i = 0; i < instances; ++i) {
        const int n = rng.uniform_int(4, 8);
        const AffinityMatrix graph = random_affinity(rng, n);
        const PayoffMatrix payoff = PayoffMatrix::from_affinity(graph);
        SolverConfig config;
        config.tau = 1e-7;
        const EquilibriumResult eq =
            find_equilibrium(payoff, SimplexVector::barycenter(n), config);
        if (!eq.converged) {
            ++failed;
            continue;
        }
        const NodeSet sup = support(eq.x);
        DominanceOptions opts;
        opts.check_all_subsets = false;  // solver-output validation mode
        WeightOracle oracle(graph);
        switch (oracle.classify_dominant_set(sup, opts)) {
            case DominanceVerdict::Dominant: ++passed; break;
            case DominanceVerdict::Degenerate: ++degenerate; break;
            case DominanceVerdict::NotDominant: ++failed; break;
        }
    }

    const int judged = passed + failed;
    const double rate = judged > 0 ? static_cast<double>(passed) / judged : 0.0;
    const double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << passed << "/" << judged << " dominant (" << 100.0 * rate << "%), " << degenerate
           << " degenerate excluded, " << elapsed << " s";
    result.detail = detail.str();
    result.passed = rate >= 0.99 && elapsed < 60.0;
    return result;
}

CheckResult check_solver_cross_agreement(int instances) {
    CheckResult result{"infection-immunization vs replicator agreement", false, {}};
    Rng rng(20260810ULL);

    // Replicator only reaches the support asymptotically, so both solvers
    // run to a tight tolerance and supports are read at a coarser cutoff.
    SolverConfig tight;
    tight.tau = 1e-13;
    tight.max_iterations = 1000000;
    const double cutoff = 1e-6;

    int agree = 0, agree_objective = 0;
    for (int i = 0; i < instances; ++i) {
        const int n = rng.uniform_int(4, 10);
        const PayoffMatrix payoff = PayoffMatrix::from_affinity(random_affinity(rng, n));
        const SimplexVector x0 = SimplexVector::barycenter(n);
        const EquilibriumResult inim = find_equilibrium(payoff, x0, tight);
        const EquilibriumResult repl = replicator_equilibrium(payoff, x0, tight);
        if (!inim.converged || !repl.converged) continue;
        if (support(inim.x, cutoff) == support(repl.x, cutoff)) {
            ++agree;
            if (std::abs(inim.objective - repl.objective) <= 1e-6) ++agree_objective;
        }
    }

    const double rate = static_cast<double>(agree) / instances;
    std::ostringstream detail;
    detail << agree << "/" << instances << " supports agree (" << 100.0 * rate << "%), objectives"
           << " within 1e-6 on " << agree_objective << " of them";
    result.detail = detail.str();
    result.passed = rate >= 0.95 && agree_objective == agree;
    return result;
}

CheckResult check_homogenization_identity(int instances) {
    CheckResult result{"homogenization identity", false, {}};
    Rng rng(20260811ULL);

    double worst = 0.0;
    bool ok = true;
    for (int i = 0; i < instances; ++i) {
        const int n = rng.uniform_int(2, 12);
        const AffinityMatrix a = random_affinity(rng, n);
        std::vector<double> b(n);
        for (double& v : b) v = rng.uniform(0.01, 1.0);
        const SimplexVector x = random_simplex(rng, n);
        const PayoffMatrix homogenized = homogenize(a, b);

        const double lhs = payoff_value(homogenized, x);
        double bx = 0.0;
        for (int j = 0; j < n; ++j) bx += b[j] * x[j];
        const double rhs = payoff_value(PayoffMatrix::from_affinity(a), x) + 2.0 * bx;
        const double gap = std::abs(lhs - rhs);
        worst = std::max(worst, gap / n);
        if (gap > 1e-12 * n) ok = false;
    }

    std::ostringstream detail;
    detail << instances << " triples, worst |x'Bx - x'Ax - 2b'x| / n = " << worst;
    result.detail = detail.str();
    result.passed = ok;
    return result;
}

CheckResult check_query_containment(int instances) {
    CheckResult result{"query containment under the alpha bound", false, {}};
    const auto start = Clock::now();
    Rng rng(20260812ULL);

    int held = 0;
    std::string failure;
    for (int i = 0; i < instances && failure.empty(); ++i) {
        // Query node 0, then disjoint clusters connected only through it.
        const int clusters = rng.uniform_int(1, 3);
        std::vector<std::pair<int, int>> ranges;
        int n = 1;
        for (int c = 0; c < clusters; ++c) {
            const int size = rng.uniform_int(2, 6);
            ranges.emplace_back(n, n + size);
            n += size;
        }
        AffinityMatrix bhat(n);
        for (int j = 1; j < n; ++j) bhat.set(0, j, rng.uniform(0.001, 1.0));
        for (const auto& [lo, hi] : ranges)
            for (int a = lo; a < hi; ++a)
                for (int b = a + 1; b < hi; ++b) bhat.set(a, b, rng.uniform(0.05, 1.0));

        std::vector<CdsNode> nodes(n);
        nodes[0] = {true, "query", 0, -1};
        for (int j = 1; j < n; ++j) nodes[j] = {false, "img" + std::to_string(j), 1, j};
        const CdsGraph graph{std::move(nodes), bhat, 0};

        AlphaOptions opts;
        opts.power_iteration = (i % 3 == 0);
        const double alpha = alpha_bound(bhat, 0, opts);
        try {
            for (double scale : {1.0, 2.0, 10.0})
                constrained_dominant_set(graph, scale * alpha, SolverConfig{});
            ++held;
        } catch (const SolverError& e) {
            failure = e.what();
        }
    }

    const double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << held << "/" << instances << " graphs kept the query in the support at 1x/2x/10x alpha, "
           << elapsed << " s";
    if (!failure.empty()) detail << "; first failure: " << failure;
    result.detail = detail.str();
    result.passed = held == instances && elapsed < 60.0;
    return result;
}

CheckResult check_selection_rules(int instances) {
    CheckResult result{"neighbor selection and pruning rules", false, {}};
    Rng rng(20260813ULL);

    const auto selected_sizes = [](const std::vector<double>& distances, double theta) {
        return dynamic_nn_select(list_from_distances(distances), theta).size();
    };

    bool ok = true;
    std::ostringstream detail;
    // Hand traces of the selection loop.
    if (selected_sizes({1.0, 1.05, 1.1, 5.0}, 0.7) != 3) {
        ok = false;
        detail << "trace (1.0,1.05,1.1,5.0) did not select 3; ";
    }
    if (selected_sizes({1.0, 2.0}, 0.7) != 1) {
        ok = false;
        detail << "trace (1.0,2.0) did not select 1; ";
    }
    if (selected_sizes(std::vector<double>(10, 2.5), 0.7) != 9) {
        ok = false;
        detail << "constant-distance trace did not select 9; ";
    }
    // Pruning rule traces.
    {
        const PruneDecision drop = prune_query_feature(list_from_distances({0.9, 0.95, 1.0}), 0.7);
        const PruneDecision keep = prune_query_feature(list_from_distances({0.1, 0.5, 1.0}), 0.7);
        const PruneDecision dup = prune_query_feature(list_from_distances({0.0, 0.0, 0.0}), 0.7);
        if (drop.keep || !keep.keep || dup.keep || dup.ratio != 1.0) {
            ok = false;
            detail << "pruning traces failed; ";
        }
    }
    // Shrinking theta can only extend the selected prefix.
    int monotone = 0;
    for (int i = 0; i < instances; ++i) {
        std::vector<double> distances(rng.uniform_int(2, 40));
        for (double& d : distances) d = rng.uniform(0.0, 10.0);
        std::sort(distances.begin(), distances.end());
        double t1 = rng.uniform(0.05, 0.95), t2 = rng.uniform(0.05, 0.95);
        if (t1 > t2) std::swap(t1, t2);
        if (selected_sizes(distances, t1) >= selected_sizes(distances, t2)) ++monotone;
    }
    if (monotone != instances) {
        ok = false;
        detail << "theta monotonicity failed on " << (instances - monotone) << " lists; ";
    }

    detail << "traces exact, " << monotone << "/" << instances << " monotone";
    result.detail = detail.str();
    result.passed = ok;
    return result;
}

CheckResult check_planted_recovery() {
    CheckResult result{"planted-city recovery", false, {}};
    const auto start = Clock::now();

    // Recoverability oracle first: exhaustive descriptor matching must find
    // the planted references before any pipeline threshold means anything.
    const SyntheticCity plain = generate_synthetic_city(planted_city_config(false));
    int oracle_hits = 0;
    for (size_t q = 0; q < plain.queries.size(); ++q) {
        const std::string predicted = exhaustive_descriptor_vote(plain.references, plain.queries[q]);
        if (predicted == plain.truth[q]) ++oracle_hits;
    }
    const double oracle_rate = static_cast<double>(oracle_hits) / plain.queries.size();

    const std::vector<QueryReportLine> cds_reports =
        run_pipeline(plain.references, plain.queries, planted_localizer_config(Method::Cds));
    const double cds_at_30 = accuracy_at(cds_reports, 30.0);

    // Tie-heavy variant: duplicated reference content forces split votes;
    // the post-processing stage has to resolve them.
    const SyntheticCity ties = generate_synthetic_city(planted_city_config(true));
    const std::vector<QueryReportLine> vote_reports =
        run_pipeline(ties.references, ties.queries, planted_localizer_config(Method::Vote));
    const std::vector<QueryReportLine> cds_tie_reports =
        run_pipeline(ties.references, ties.queries, planted_localizer_config(Method::Cds));
    const AccuracyCurve vote_curve = evaluate(vote_reports);
    const AccuracyCurve cds_curve = evaluate(cds_tie_reports);

    bool dominates = true;
    bool strictly_better = false;
    for (size_t i = 0; i < vote_curve.thresholds_m.size(); ++i) {
        if (cds_curve.accuracy[i] < vote_curve.accuracy[i]) dominates = false;
        if (cds_curve.accuracy[i] > vote_curve.accuracy[i]) strictly_better = true;
    }

    const double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "oracle " << 100.0 * oracle_rate << "%, cds@30m " << 100.0 * cds_at_30
           << "%, tie-variant cds@30m " << 100.0 * accuracy_at(cds_tie_reports, 30.0) << "% vs vote@30m "
           << 100.0 * accuracy_at(vote_reports, 30.0) << "%, " << elapsed << " s";
    result.detail = detail.str();
    if (oracle_rate < 0.9) result.detail += "; recoverability oracle below 90%";
    if (!dominates) result.detail += "; vote curve exceeded cds somewhere";
    if (elapsed >= 300.0) result.detail += "; time budget of 5 min exceeded";
    result.passed =
        oracle_rate >= 0.9 && cds_at_30 >= 0.9 && dominates && strictly_better && elapsed < 300.0;
    return result;
}

CheckResult check_determinism() {
    CheckResult result{"report determinism", false, {}};
    bool identical = true;
    int compared = 0;
    for (const bool tie_heavy : {false, true}) {
        const SyntheticCity city = generate_synthetic_city(planted_city_config(tie_heavy));
        for (const Method method : {Method::Cds, Method::Vote}) {
            const LocalizerConfig config = planted_localizer_config(method);
            const std::string first =
                reports_to_jsonl(run_pipeline(city.references, city.queries, config));
            const std::string second =
                reports_to_jsonl(run_pipeline(city.references, city.queries, config));
            identical = identical && first == second && !first.empty();
            ++compared;
        }
    }
    result.passed = identical;
    std::ostringstream detail;
    detail << compared << " scenario/method pairs "
           << (identical ? "produced byte-identical reports" : "differed between identical runs");
    result.detail = detail.str();
    return result;
}

std::vector<CheckResult> run_all(bool quick) {
    const int scale = quick ? 10 : 1;
    std::vector<CheckResult> results;
    results.push_back(check_worked_example());
    results.push_back(check_oracle_equivalence(500 / scale));
    results.push_back(check_solver_cross_agreement(100 / scale));
    results.push_back(check_homogenization_identity(1000 / scale));
    results.push_back(check_query_containment(1000 / scale));
    results.push_back(check_selection_rules(1000 / scale));
    if (!quick) {
        results.push_back(check_planted_recovery());
        results.push_back(check_determinism());
    }
    return results;
}

}  // namespace dsloc::selfcheck
