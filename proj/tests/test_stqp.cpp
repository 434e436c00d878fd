#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dsloc/graph_oracle.hpp"
#include "dsloc/selfcheck.hpp"
#include "dsloc/stqp.hpp"

using namespace dsloc;

namespace {

AffinityMatrix random_affinity(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> entry(0.0, 1.0);
    AffinityMatrix m(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m.set(i, j, entry(rng));
    return m;
}

PayoffMatrix random_payoff(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    PayoffMatrix m(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) m.set(i, j, entry(rng));
    return m;
}

SimplexVector random_simplex(std::mt19937_64& rng, int n) {
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> x(n);
    double sum = 0.0;
    for (double& v : x) {
        v = expo(rng) + 1e-9;
        sum += v;
    }
    for (double& v : x) v /= sum;
    return SimplexVector(std::move(x));
}

// Two connected nodes inside a four-node graph; the unique attractor from
// the barycenter is an even split over the pair.
PayoffMatrix lonely_pair_payoff() {
    AffinityMatrix a(4);
    a.set(0, 1, 1.0);
    return PayoffMatrix::from_affinity(a);
}

double infection_gain(const PayoffMatrix& B, const SimplexVector& x, const SimplexVector& y) {
    std::vector<double> g(B.size());
    B.multiply(x.values(), g);
    double gain = 0.0;
    for (int i = 0; i < B.size(); ++i) gain += (y[i] - x[i]) * g[i];
    return gain;
}

}  // namespace

TEST_CASE("homogenize") {
    SUBCASE("constant scores make a constant matrix") {
        AffinityMatrix a(2);
        const PayoffMatrix b = homogenize(a, std::vector<double>{0.5, 0.5});
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(b(i, j) == doctest::Approx(1.0));
    }

    SUBCASE("entrywise formula") {
        AffinityMatrix a(2);
        a.set(0, 1, 2.0);
        const PayoffMatrix b = homogenize(a, std::vector<double>{1.0, 3.0});
        CHECK(b(0, 0) == doctest::Approx(2.0));
        CHECK(b(0, 1) == doctest::Approx(6.0));
        CHECK(b(1, 0) == doctest::Approx(6.0));
        CHECK(b(1, 1) == doctest::Approx(6.0));
    }

    SUBCASE("x'Bx == x'Ax + 2 b'x on the simplex") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> score(0.01, 1.0);
        for (int trial = 0; trial < 200; ++trial) {
            const int n = 2 + static_cast<int>(rng() % 9);
            const AffinityMatrix a = random_affinity(rng, n);
            std::vector<double> b(n);
            for (double& v : b) v = score(rng);
            const SimplexVector x = random_simplex(rng, n);
            double bx = 0.0;
            for (int i = 0; i < n; ++i) bx += b[i] * x[i];
            const double lhs = payoff_value(homogenize(a, b), x);
            const double rhs = payoff_value(PayoffMatrix::from_affinity(a), x) + 2.0 * bx;
            CHECK(std::abs(lhs - rhs) <= 1e-12 * n);
        }
    }

    SUBCASE("dimension mismatch") {
        AffinityMatrix a(3);
        CHECK_THROWS_AS(homogenize(a, std::vector<double>{1.0, 2.0}), ContractViolation);
    }
}

TEST_CASE("payoff_value") {
    {
        AffinityMatrix a(2);
        a.set(0, 1, 1.0);
        CHECK(payoff_value(PayoffMatrix::from_affinity(a), SimplexVector({1.0, 0.0})) ==
              doctest::Approx(0.0));
        CHECK(payoff_value(PayoffMatrix::from_affinity(a), SimplexVector({0.5, 0.5})) ==
              doctest::Approx(0.5));
    }

    // Cross-module consistency: the characteristic vector of the cohesive
    // quad attains the same objective the solver converges to.
    const AffinityMatrix g = selfcheck::outlier_example_graph();
    const PayoffMatrix payoff = PayoffMatrix::from_affinity(g);
    const SimplexVector x = characteristic_vector(g, NodeSet{0, 1, 2, 3});
    const EquilibriumResult eq = find_equilibrium(payoff, SimplexVector::barycenter(5));
    REQUIRE(eq.converged);
    CHECK(payoff_value(payoff, x) == doctest::Approx(eq.objective).epsilon(1e-9));
}

TEST_CASE("residual_epsilon") {
    const PayoffMatrix b = PayoffMatrix::from_rows({{0.0, 2.0}, {2.0, 0.0}});

    // The even split is the equilibrium of this game.
    CHECK(residual_epsilon(b, SimplexVector({0.5, 0.5})) == doctest::Approx(0.0).epsilon(1e-14));

    // A pure strategy facing a profitable deviation is not an equilibrium:
    // min{1, 0-0}^2 + min{0, 0-2}^2 = 4.
    CHECK(residual_epsilon(b, SimplexVector({1.0, 0.0})) == doctest::Approx(4.0));

    // Matches an independent evaluation of the summation.
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 7);
        const PayoffMatrix m = random_payoff(rng, n);
        const SimplexVector x = random_simplex(rng, n);
        std::vector<double> g(n);
        m.multiply(x.values(), g);
        double f = 0.0;
        for (int i = 0; i < n; ++i) f += x[i] * g[i];
        double expected = 0.0;
        for (int i = 0; i < n; ++i) {
            const double term = std::min(x[i], f - g[i]);
            expected += term * term;
        }
        CHECK(residual_epsilon(m, x) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("select_infective") {
    const PayoffMatrix b = PayoffMatrix::from_rows({{0.0, 2.0}, {2.0, 0.0}});

    SUBCASE("no infective strategy at the equilibrium") {
        CHECK_FALSE(select_infective(b, SimplexVector({0.5, 0.5})).has_value());
    }

    SUBCASE("pure strategy against a poor vertex") {
        const auto y = select_infective(b, SimplexVector({1.0, 0.0}));
        REQUIRE(y.has_value());
        CHECK((*y)[1] > 0.0);
        CHECK(infection_gain(b, SimplexVector({1.0, 0.0}), *y) > 0.0);
    }

    SUBCASE("co-strategy removes the worst populated node") {
        const PayoffMatrix m =
            PayoffMatrix::from_rows({{0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}});
        const SimplexVector x({0.45, 0.45, 0.1});
        const auto y = select_infective(m, x);
        REQUIRE(y.has_value());
        CHECK((*y)[2] == doctest::Approx(0.0));
        CHECK(infection_gain(m, x, *y) > 0.0);
    }

    SUBCASE("infective strategy exists at the barycenter of the validation graph") {
        const PayoffMatrix payoff =
            PayoffMatrix::from_affinity(selfcheck::outlier_example_graph());
        const SimplexVector x = SimplexVector::barycenter(5);
        const auto y = select_infective(payoff, x);
        REQUIRE(y.has_value());
        CHECK(infection_gain(payoff, x, *y) > 0.0);
    }

    SUBCASE("whatever is returned is infective, on random instances") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 300; ++trial) {
            const int n = 2 + static_cast<int>(rng() % 9);
            const PayoffMatrix m = random_payoff(rng, n);
            const SimplexVector x = random_simplex(rng, n);
            const auto y = select_infective(m, x);
            if (y) CHECK(infection_gain(m, x, *y) > 0.0);
        }
    }
}

TEST_CASE("find_equilibrium") {
    SUBCASE("isolated pair attracts the barycenter") {
        const EquilibriumResult eq =
            find_equilibrium(lonely_pair_payoff(), SimplexVector::barycenter(4));
        REQUIRE(eq.converged);
        CHECK(eq.x[0] == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(eq.x[1] == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(support(eq.x) == NodeSet{0, 1});
    }

    SUBCASE("validation graph: weakly attached node is excluded") {
        const PayoffMatrix payoff =
            PayoffMatrix::from_affinity(selfcheck::outlier_example_graph());
        const EquilibriumResult eq = find_equilibrium(payoff, SimplexVector::barycenter(5));
        REQUIRE(eq.converged);
        CHECK(eq.residual <= 1e-7);
        CHECK(support(eq.x) == NodeSet{0, 1, 2, 3});
    }

    SUBCASE("supports pass the exact dominance test on random graphs") {
        std::mt19937_64 rng(31);
        std::uniform_int_distribution<int> size(4, 8);
        int dominant = 0, degenerate = 0, total = 0;
        for (int trial = 0; trial < 60; ++trial) {
            const int n = size(rng);
            const AffinityMatrix g = random_affinity(rng, n);
            const EquilibriumResult eq =
                find_equilibrium(PayoffMatrix::from_affinity(g), SimplexVector::barycenter(n));
            REQUIRE(eq.converged);
            DominanceOptions opts;
            opts.check_all_subsets = false;
            switch (classify_dominant_set(g, support(eq.x), opts)) {
                case DominanceVerdict::Dominant: ++dominant; ++total; break;
                case DominanceVerdict::NotDominant: ++total; break;
                case DominanceVerdict::Degenerate: ++degenerate; break;
            }
        }
        CHECK(dominant == total);
    }

    SUBCASE("objective is monotone and steps stay in (0, 1]") {
        SolverConfig config;
        config.record_trace = true;
        const PayoffMatrix payoff =
            PayoffMatrix::from_affinity(selfcheck::outlier_example_graph());
        const EquilibriumResult eq = find_equilibrium(payoff, SimplexVector::barycenter(5), config);
        REQUIRE(eq.converged);
        REQUIRE(eq.trace.size() > 1);
        for (size_t i = 1; i < eq.trace.size(); ++i)
            CHECK(eq.trace[i].objective >= eq.trace[i - 1].objective - 1e-12);
        for (size_t i = 0; i + 1 < eq.trace.size(); ++i) {
            CHECK(eq.trace[i].step > 0.0);
            CHECK(eq.trace[i].step <= 1.0);
        }
        const std::string csv = trace_to_csv(eq);
        CHECK(csv.rfind("iteration,objective,residual,step\n", 0) == 0);
    }

    SUBCASE("iteration cap reports non-convergence with the best iterate") {
        SolverConfig config;
        config.max_iterations = 1;
        const PayoffMatrix payoff =
            PayoffMatrix::from_affinity(selfcheck::outlier_example_graph());
        const EquilibriumResult eq = find_equilibrium(payoff, SimplexVector::barycenter(5), config);
        CHECK_FALSE(eq.converged);
        CHECK(eq.iterations == 1);
        CHECK(eq.x.size() == 5);  // iterate still a valid simplex vector
    }
}

TEST_CASE("replicator_equilibrium") {
    SUBCASE("isolated pair") {
        const EquilibriumResult eq =
            replicator_equilibrium(lonely_pair_payoff(), SimplexVector::barycenter(4));
        REQUIRE(eq.converged);
        CHECK(eq.x[0] == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(eq.x[1] == doctest::Approx(0.5).epsilon(1e-6));
    }

    SUBCASE("agrees with the infection-immunization solver") {
        const PayoffMatrix payoff =
            PayoffMatrix::from_affinity(selfcheck::outlier_example_graph());
        SolverConfig tight;
        tight.tau = 1e-13;
        tight.max_iterations = 500000;
        const EquilibriumResult a = find_equilibrium(payoff, SimplexVector::barycenter(5), tight);
        const EquilibriumResult b =
            replicator_equilibrium(payoff, SimplexVector::barycenter(5), tight);
        REQUIRE(a.converged);
        REQUIRE(b.converged);
        CHECK(support(a.x, 1e-6) == support(b.x, 1e-6));
        CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-8));
    }

    SUBCASE("handles matrices with negative entries via shifting") {
        const PayoffMatrix m = PayoffMatrix::from_rows({{-1.0, 1.0}, {1.0, -1.0}});
        const EquilibriumResult eq = replicator_equilibrium(m, SimplexVector::barycenter(2));
        REQUIRE(eq.converged);
        CHECK(eq.x[0] == doctest::Approx(0.5).epsilon(1e-6));
    }
}

TEST_CASE("extract_dominant_sets") {
    SUBCASE("recovers planted cliques in objective order") {
        AffinityMatrix a(9);
        const auto add_clique = [&](std::vector<int> nodes) {
            for (size_t i = 0; i < nodes.size(); ++i)
                for (size_t j = i + 1; j < nodes.size(); ++j) a.set(nodes[i], nodes[j], 1.0);
        };
        add_clique({0, 1, 2, 3});
        add_clique({4, 5, 6});
        add_clique({7, 8});

        const auto sets = extract_dominant_sets(PayoffMatrix::from_affinity(a), 3);
        REQUIRE(sets.size() == 3);
        CHECK(sets[0].support_set == NodeSet{0, 1, 2, 3});
        CHECK(sets[1].support_set == NodeSet{4, 5, 6});
        CHECK(sets[2].support_set == NodeSet{7, 8});
        CHECK(sets[0].objective > sets[1].objective);
        CHECK(sets[1].objective > sets[2].objective);
        for (size_t i = 0; i < sets.size(); ++i) {
            CHECK(sets[i].rank == static_cast<int>(i) + 1);
            double mass = 0.0;
            for (const auto& [node, weight] : sets[i].membership) {
                CHECK(weight > 0.0);
                mass += weight;
            }
            CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
        }
    }

    SUBCASE("single clique yields a single result") {
        AffinityMatrix a(3);
        a.set(0, 1, 1.0);
        a.set(0, 2, 1.0);
        a.set(1, 2, 1.0);
        const auto sets = extract_dominant_sets(PayoffMatrix::from_affinity(a), 3);
        REQUIRE(sets.size() == 1);
        CHECK(sets[0].support_set == NodeSet{0, 1, 2});
    }

    SUBCASE("validation graph peels once; the leftover node is no cluster") {
        const PayoffMatrix payoff =
            PayoffMatrix::from_affinity(selfcheck::outlier_example_graph());
        const auto sets = extract_dominant_sets(payoff, 2);
        REQUIRE(sets.size() == 1);
        CHECK(sets[0].support_set == NodeSet{0, 1, 2, 3});
    }

    SUBCASE("supports are pairwise disjoint on random graphs") {
        std::mt19937_64 rng(17);
        for (int trial = 0; trial < 30; ++trial) {
            const int n = 6 + static_cast<int>(rng() % 7);
            const auto sets =
                extract_dominant_sets(PayoffMatrix::from_affinity(random_affinity(rng, n)), 3);
            std::vector<bool> seen(n, false);
            for (const auto& ds : sets) {
                for (int node : ds.support_set.members()) {
                    CHECK_FALSE(seen[node]);
                    seen[node] = true;
                }
            }
        }
    }
}
