#include "dsloc/graph_oracle.hpp"

#include <bit>
#include <cmath>

namespace dsloc {

namespace {

int popcount(std::uint64_t mask) { return std::popcount(mask); }

void check_member(const AffinityMatrix& B, int node, const char* what) {
    if (node < 0 || node >= B.size()) throw ContractViolation(std::string(what) + ": node index out of range");
}

}  // namespace

double phi(const AffinityMatrix& B, const NodeSet& S, int l, int k) {
    if (S.empty()) throw ContractViolation("phi: S must be non-empty");
    check_member(B, l, "phi");
    check_member(B, k, "phi");
    if (!S.contains(l)) throw ContractViolation("phi: l must be a member of S");
    if (S.contains(k)) throw ContractViolation("phi: k must not be a member of S");
    double avg = 0.0;
    for (int p : S.members()) avg += B(l, p);
    avg /= S.size();
    return B(l, k) - avg;
}

WeightOracle::WeightOracle(const AffinityMatrix& B) : B_(B) {
    if (B.size() > 63) throw ContractViolation("WeightOracle: graph too large for mask arithmetic");
}

double WeightOracle::weight(const NodeSet& S, int l) {
    if (S.empty()) throw ContractViolation("weight_w: S must be non-empty");
    if (!S.contains(l)) throw ContractViolation("weight_w: l must be a member of S");
    check_member(B_, l, "weight_w");
    return weight_masked(S.mask(), l);
}

double WeightOracle::weight_masked(std::uint64_t set_mask, int l) {
    if (popcount(set_mask) == 1) return 1.0;
    const std::uint64_t key = (set_mask << 6) | static_cast<std::uint64_t>(l);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;

    const std::uint64_t rest = set_mask & ~(std::uint64_t{1} << l);
    const int rest_size = popcount(rest);
    // Average similarity row sums against the reduced set, shared by every
    // phi_{S\{l}}(k, l) term.
    double result = 0.0;
    for (std::uint64_t bits = rest; bits != 0; bits &= bits - 1) {
        const int k = std::countr_zero(bits);
        double avg = 0.0;
        for (std::uint64_t b2 = rest; b2 != 0; b2 &= b2 - 1) {
            const int p = std::countr_zero(b2);
            avg += B_(k, p);
        }
        avg /= rest_size;
        const double phi_kl = B_(k, l) - avg;
        result += phi_kl * weight_masked(rest, k);
    }
    memo_.emplace(key, result);
    return result;
}

double WeightOracle::total_weight(const NodeSet& S) {
    if (S.empty()) throw ContractViolation("total_weight: S must be non-empty");
    double sum = 0.0;
    for (int l : S.members()) sum += weight_masked(S.mask(), l);
    return sum;
}

DominanceVerdict WeightOracle::classify_dominant_set(const NodeSet& S, const DominanceOptions& opts) {
    if (S.empty()) throw ContractViolation("classify_dominant_set: S must be non-empty");
    if (opts.check_all_subsets && B_.size() > opts.max_nodes)
        throw ContractViolation("classify_dominant_set: graph too large for exact subset enumeration");
    for (int l : S.members()) check_member(B_, l, "classify_dominant_set");

    bool degenerate = false;
    const auto classify = [&](double value) {
        if (std::abs(value) <= opts.degeneracy_tol) degenerate = true;
        return value;
    };

    if (opts.check_all_subsets) {
        // W(T) > 0 for every non-empty T subseteq S.
        const std::uint64_t s_mask = S.mask();
        for (std::uint64_t t = s_mask; t != 0; t = (t - 1) & s_mask) {
            double w = 0.0;
            for (std::uint64_t bits = t; bits != 0; bits &= bits - 1)
                w += weight_masked(t, std::countr_zero(bits));
            if (classify(w) <= 0.0) return degenerate ? DominanceVerdict::Degenerate : DominanceVerdict::NotDominant;
        }
    } else {
        if (classify(total_weight(S)) <= 0.0)
            return degenerate ? DominanceVerdict::Degenerate : DominanceVerdict::NotDominant;
    }

    // Internal homogeneity: W_S(l) > 0 for every member.
    for (int l : S.members())
        if (classify(weight_masked(S.mask(), l)) <= 0.0)
            return degenerate ? DominanceVerdict::Degenerate : DominanceVerdict::NotDominant;

    // External inhomogeneity: W_{S u {l}}(l) < 0 for every non-member.
    for (int l = 0; l < B_.size(); ++l) {
        if (S.contains(l)) continue;
        const std::uint64_t grown = S.mask() | (std::uint64_t{1} << l);
        if (classify(weight_masked(grown, l)) >= 0.0)
            return degenerate ? DominanceVerdict::Degenerate : DominanceVerdict::NotDominant;
    }
    return degenerate ? DominanceVerdict::Degenerate : DominanceVerdict::Dominant;
}

SimplexVector WeightOracle::characteristic_vector(const NodeSet& S) {
    if (S.empty()) throw ContractViolation("characteristic_vector: S must be non-empty");
    const double total = total_weight(S);
    if (!(total > 0.0)) throw NonClusterInput("characteristic_vector: W(S) is not positive");
    std::vector<double> x(B_.size(), 0.0);
    for (int l : S.members()) {
        const double w = weight_masked(S.mask(), l);
        if (!(w > 0.0))
            throw NonClusterInput("characteristic_vector: non-positive member weight at node " +
                                  std::to_string(l));
        x[l] = w / total;
    }
    return SimplexVector(std::move(x));
}

double weight_w(const AffinityMatrix& B, const NodeSet& S, int l) {
    WeightOracle oracle(B);
    return oracle.weight(S, l);
}

double total_weight(const AffinityMatrix& B, const NodeSet& S) {
    WeightOracle oracle(B);
    return oracle.total_weight(S);
}

DominanceVerdict classify_dominant_set(const AffinityMatrix& B, const NodeSet& S,
                                       const DominanceOptions& opts) {
    WeightOracle oracle(B);
    return oracle.classify_dominant_set(S, opts);
}

bool is_dominant_set(const AffinityMatrix& B, const NodeSet& S, const DominanceOptions& opts) {
    const DominanceVerdict verdict = classify_dominant_set(B, S, opts);
    if (verdict == DominanceVerdict::Degenerate)
        throw NonClusterInput("is_dominant_set: weight within degeneracy tolerance of zero");
    return verdict == DominanceVerdict::Dominant;
}

SimplexVector characteristic_vector(const AffinityMatrix& B, const NodeSet& S) {
    WeightOracle oracle(B);
    return oracle.characteristic_vector(S);
}

}  // namespace dsloc
