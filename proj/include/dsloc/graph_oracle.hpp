#pragma once

#include <unordered_map>

#include "dsloc/types.hpp"

namespace dsloc {

// Exact, definition-level dominant-set machinery. Everything here evaluates
// the recursive weight definitions literally; cost is exponential in |S|, so
// it is meant for verification at small sizes, not for the production path.

/// Relative similarity of node k to node l with respect to the average
/// similarity between l and S:  B(l,k) - (1/|S|) * sum_{p in S} B(l,p).
/// Requires l in S and k not in S. May be negative.
double phi(const AffinityMatrix& B, const NodeSet& S, int l, int k);

enum class DominanceVerdict {
    Dominant,
    NotDominant,
    /// Some weight lies within the degeneracy tolerance of zero; the sign
    /// conditions cannot be classified reliably.
    Degenerate,
};

struct DominanceOptions {
    /// Also require W(T) > 0 for every non-empty subset T of S (full
    /// enumeration). Without it only the two sign conditions plus W(S) > 0
    /// are checked, which is how solver outputs are validated.
    bool check_all_subsets = true;
    double degeneracy_tol = 1e-12;
    /// Full-enumeration mode refuses graphs larger than this.
    int max_nodes = 20;
};

/// Memoizing evaluator for the recursive node weights of one affinity matrix.
class WeightOracle {
  public:
    explicit WeightOracle(const AffinityMatrix& B);

    /// W_S(l): 1 when |S| = 1, otherwise
    /// sum_{k in S\{l}} phi_{S\{l}}(k, l) * W_{S\{l}}(k). Requires l in S.
    double weight(const NodeSet& S, int l);

    /// W(S) = sum_{l in S} W_S(l). Requires S non-empty.
    double total_weight(const NodeSet& S);

    DominanceVerdict classify_dominant_set(const NodeSet& S, const DominanceOptions& opts = {});

    /// x_l = W_S(l) / W(S) on S, zero elsewhere. Requires W(S) > 0 and all
    /// member weights positive; otherwise throws NonClusterInput.
    SimplexVector characteristic_vector(const NodeSet& S);

    const AffinityMatrix& matrix() const { return B_; }

  private:
    double weight_masked(std::uint64_t set_mask, int l);

    const AffinityMatrix& B_;
    std::unordered_map<std::uint64_t, double> memo_;
};

// One-shot convenience wrappers.
double weight_w(const AffinityMatrix& B, const NodeSet& S, int l);
double total_weight(const AffinityMatrix& B, const NodeSet& S);
DominanceVerdict classify_dominant_set(const AffinityMatrix& B, const NodeSet& S,
                                       const DominanceOptions& opts = {});
/// True iff the verdict is Dominant; throws NonClusterInput on Degenerate.
bool is_dominant_set(const AffinityMatrix& B, const NodeSet& S, const DominanceOptions& opts = {});
SimplexVector characteristic_vector(const AffinityMatrix& B, const NodeSet& S);

}  // namespace dsloc
